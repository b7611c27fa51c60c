"""irisfuse: multi-algorithm iris verification with score-level fusion."""

__version__ = "0.1.0"

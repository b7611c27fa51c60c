"""End-to-end per-image processing shared by enrollment, verification, and
the evaluation harness: segment, unwrap, enhance, and extract all three
feature representations.

Two robustness choices live here rather than in the feature modules.  The
outermost polar rows sample within about a pixel of the detected circle
boundaries, where 1 px Hough quantization lets pupil or sclera intensities
leak in, so a small guard band of rows is masked after unwrapping.  And the
Euler path consumes the un-equalized polar image: histogram equalization
redistributes intensities across all bit levels, which scrambles the
topology of the lower MSB planes without adding structure.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .euler import EulerCode, euler_code
from .gasel import RawFeatureVector, extract_raw
from .imaging import BinaryImage, GrayImage
from .normalization import PolarIris, enhance, rubber_sheet
from .segmentation import SegmentationConfig, SegmentationResult, segment
from .zerocross import DEFAULT_MAX_SHIFT, DEFAULT_SCALES, ZeroCrossTemplate, encode


@dataclass(frozen=True)
class PipelineConfig:
    segmentation: SegmentationConfig = field(default_factory=SegmentationConfig)
    scales: tuple[int, ...] = DEFAULT_SCALES
    max_shift: int = DEFAULT_MAX_SHIFT
    polar_guard_rows: int = 4

    def __post_init__(self):
        object.__setattr__(self, "scales", tuple(self.scales))
        if self.max_shift < 0:
            raise ValueError("max_shift must be >= 0")
        if not 0 <= self.polar_guard_rows < 48:
            raise ValueError("polar_guard_rows must lie in [0, 48)")


@dataclass(frozen=True)
class IrisFeatures:
    """Everything matching needs from one eye image."""

    segmentation: SegmentationResult
    polar: PolarIris                  # guarded, un-equalized polar image (Euler path)
    enhanced: PolarIris               # equalized variant (wavelet + block features)
    template: ZeroCrossTemplate
    own_code: EulerCode               # Euler code under the image's own mask
    raw: RawFeatureVector


def _guard_rows(polar: PolarIris, rows: int) -> PolarIris:
    if rows == 0:
        return polar
    bits = polar.mask.bits.copy()
    bits[:rows, :] = 1
    bits[-rows:, :] = 1
    return PolarIris(polar.intensities, BinaryImage(bits))


def process_image(img: GrayImage, cfg: PipelineConfig) -> IrisFeatures:
    """Run the full feature pipeline on one image.

    Raises SegmentationError when boundary detection fails.
    """
    seg = segment(img, cfg.segmentation)
    polar = _guard_rows(rubber_sheet(img, seg), cfg.polar_guard_rows)
    enhanced = enhance(polar)
    return IrisFeatures(
        segmentation=seg,
        polar=polar,
        enhanced=enhanced,
        template=encode(enhanced, cfg.scales),
        own_code=euler_code(polar, polar.mask),
        raw=extract_raw(enhanced),
    )

"""Pupil/iris circle detection, eyelid parabola detection, and noise masking.

Circles come from a classic voting Hough transform over an edge map; the
accumulator has 1 px resolution in (cx, cy, r) and ties are broken
deterministically (smallest r, then smallest cy, then cx) so repeated runs
are bit-for-bit identical.  Eyelids use a quantized four-parameter vote over
tilted vertex-form parabolas.  All functions are pure; accumulators are
operation-local, so everything is thread-safe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .imaging import BinaryImage, GrayImage, convolve2d, gaussian_kernel

EDGE_BIASES = ("vertical-edges", "horizontal-edges", "none")

# Eyelid Hough quantization: 5 tilt angles, 20 log-spaced curvature
# magnitudes, 4 px translation steps.  The flattest curvature step doubles
# as a sink for straight-line structure; peaks landing there are rejected.
PARABOLA_THETAS = tuple(math.radians(d) for d in (-10.0, -5.0, 0.0, 5.0, 10.0))
PARABOLA_CURVATURES = tuple(np.geomspace(0.004, 0.08, 20))
PARABOLA_STEP = 4
PARABOLA_VOTE_FLOOR = 0.05

# Centre-offset budget between pupil and iris circles ("near but not
# necessarily concentric").
IRIS_CENTER_OFFSET = 15

MIN_CIRCLE_VOTES = 3


class SegmentationError(RuntimeError):
    """Raised when boundary detection fails or produces invalid geometry."""


@dataclass(frozen=True)
class Circle:
    cx: float
    cy: float
    r: float

    def __post_init__(self):
        for name in ("cx", "cy", "r"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if self.r <= 0:
            raise ValueError(f"circle radius must be positive, got {self.r}")

    def contains(self, x, y) -> bool:
        return (x - self.cx) ** 2 + (y - self.cy) ** 2 <= self.r**2


@dataclass(frozen=True)
class Parabola:
    """Vertex-form parabola with a tilted axis.

    In coordinates rotated by ``theta`` about the peak (h, k), with
    u along the rotated x-axis and w along the rotated y-axis, the curve
    is w = a * u**2.  ``a`` is the curvature in 1/pixels; its sign selects
    the opening direction (a < 0 bulges toward larger y, the upper-eyelid
    shape under a y-down raster).
    """

    h: float
    k: float
    a: float
    theta: float

    def __post_init__(self):
        for name in ("h", "k", "a", "theta"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if self.a == 0:
            raise ValueError("parabola curvature must be nonzero")
        if not -math.pi / 2 <= self.theta <= math.pi / 2:
            raise ValueError(f"theta {self.theta} outside [-pi/2, pi/2]")

    def side(self, x, y):
        """Signed residual: sign(a) * (w - a*u^2) > 0 on the occluded side."""
        dx = np.asarray(x, dtype=np.float64) - self.h
        dy = np.asarray(y, dtype=np.float64) - self.k
        c, s = math.cos(self.theta), math.sin(self.theta)
        u = dx * c + dy * s
        w = -dx * s + dy * c
        return np.sign(self.a) * (w - self.a * u * u)


@dataclass(frozen=True)
class EdgeMap:
    """Sparse edge-point set; ``points`` is an (N, 2) array of (x, y)."""

    points: np.ndarray
    width: int
    height: int

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.int64).reshape(-1, 2)
        if len(pts) and (
            pts[:, 0].min() < 0
            or pts[:, 1].min() < 0
            or pts[:, 0].max() >= self.width
            or pts[:, 1].max() >= self.height
        ):
            raise ValueError("edge points fall outside the source dimensions")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class SegmentationResult:
    pupil: Circle
    iris: Circle
    upper_eyelid: Parabola | None
    lower_eyelid: Parabola | None
    noise_mask: BinaryImage

    def __post_init__(self):
        if self.pupil.r >= self.iris.r:
            raise ValueError("pupil radius must be smaller than iris radius")
        if not self.iris.contains(self.pupil.cx, self.pupil.cy):
            raise ValueError("pupil center must lie inside the iris circle")


@dataclass(frozen=True)
class SegmentationConfig:
    pupil_r_min: int = 6
    pupil_r_max: int = 62
    iris_r_min: int = 63
    iris_r_max: int = 110
    grad_threshold: float = 14.0
    specular_threshold: int = 240
    detect_eyelids: bool = True

    def __post_init__(self):
        if not 0 < self.pupil_r_min < self.pupil_r_max:
            raise ValueError("invalid pupil radius range")
        if not 0 < self.iris_r_min < self.iris_r_max:
            raise ValueError("invalid iris radius range")
        if self.pupil_r_max >= self.iris_r_min:
            raise ValueError("pupil radius range must lie below the iris radius range")
        if self.grad_threshold <= 0:
            raise ValueError("gradient threshold must be positive")


def edge_map(img: GrayImage, bias: str, grad_threshold: float) -> EdgeMap:
    """Thresholded first-derivative edge map after 5x5 Gaussian smoothing.

    ``bias`` selects the gradient component: "vertical-edges" keeps |d/dx|
    (vertically oriented boundaries such as the iris sides),
    "horizontal-edges" keeps |d/dy| (eyelids), "none" the full magnitude.
    """
    if bias not in EDGE_BIASES:
        raise ValueError(f"unknown edge bias {bias!r}; expected one of {EDGE_BIASES}")
    if img.width < 3 or img.height < 3:
        raise ValueError("edge_map needs at least a 3x3 image")
    if grad_threshold <= 0:
        raise ValueError("grad_threshold must be positive")

    smoothed = convolve2d(img, gaussian_kernel(5, 1.0))
    arr = smoothed.values
    gy, gx = np.gradient(arr, edge_order=1)
    if bias == "vertical-edges":
        mag = np.abs(gx)
        keep = _directional_maxima(mag, np.zeros_like(mag, dtype=np.uint8))
    elif bias == "horizontal-edges":
        mag = np.abs(gy)
        keep = _directional_maxima(mag, np.full(mag.shape, 2, dtype=np.uint8))
    else:
        mag = np.hypot(gx, gy)
        keep = _directional_maxima(mag, _gradient_sectors(gx, gy))
    ys, xs = np.nonzero((mag >= grad_threshold) & keep)
    return EdgeMap(np.column_stack([xs, ys]), img.width, img.height)


def _gradient_sectors(gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    """Quantize gradient direction into 4 sectors: 0=E/W, 1=NE/SW, 2=N/S, 3=NW/SE."""
    ang = np.mod(np.arctan2(gy, gx), math.pi)
    return (np.rint(ang / (math.pi / 4)).astype(np.uint8)) % 4


def _directional_maxima(mag: np.ndarray, sectors: np.ndarray) -> np.ndarray:
    """Non-maximum suppression along the gradient direction.

    A pixel survives when its magnitude strictly exceeds the neighbor on one
    side and is at least the neighbor on the other, so a tied pair (as on a
    perfectly symmetric step) keeps exactly one pixel.
    """
    padded = np.pad(mag, 1, mode="constant", constant_values=-np.inf)
    core = np.s_[1:-1, 1:-1]
    offsets = {  # (dy, dx) of the "positive" neighbor per sector
        0: (0, 1),
        1: (1, 1),
        2: (1, 0),
        3: (1, -1),
    }
    keep = np.zeros(mag.shape, dtype=bool)
    for sector, (dy, dx) in offsets.items():
        fwd = padded[1 + dy : padded.shape[0] - 1 + dy, 1 + dx : padded.shape[1] - 1 + dx]
        bwd = padded[1 - dy : padded.shape[0] - 1 - dy, 1 - dx : padded.shape[1] - 1 - dx]
        sel = sectors == sector
        keep |= sel & (mag > bwd) & (mag >= fwd)
    return keep


@lru_cache(maxsize=256)
def _ring_offsets(r: int) -> tuple[np.ndarray, np.ndarray]:
    """Integer offsets (dx, dy) whose rounded distance from the origin is r."""
    span = np.arange(-r - 1, r + 2)
    dx, dy = np.meshgrid(span, span)
    keep = np.round(np.hypot(dx, dy)).astype(np.int64) == r
    out = dx[keep].copy(), dy[keep].copy()
    out[0].setflags(write=False)
    out[1].setflags(write=False)
    return out


def circular_hough(
    edges: EdgeMap,
    r_min: int,
    r_max: int,
    center_window: tuple[int, int, int, int] | None = None,
) -> Circle:
    """Peak of the (cx, cy, r) vote accumulator at 1 px resolution.

    ``center_window`` optionally restricts candidate centers to the inclusive
    box (x_lo, x_hi, y_lo, y_hi); used to keep the iris search near the pupil.
    Ties break toward the smallest radius, then smallest cy, then cx.
    """
    if len(edges) == 0:
        raise SegmentationError("empty edge map, cannot vote for circles")
    if not 0 < r_min < r_max:
        raise ValueError(f"need 0 < r_min < r_max, got [{r_min}, {r_max}]")

    if center_window is None:
        x_lo, x_hi, y_lo, y_hi = 0, edges.width - 1, 0, edges.height - 1
    else:
        x_lo, x_hi, y_lo, y_hi = center_window
        x_lo, y_lo = max(x_lo, 0), max(y_lo, 0)
        x_hi, y_hi = min(x_hi, edges.width - 1), min(y_hi, edges.height - 1)
        if x_lo > x_hi or y_lo > y_hi:
            raise ValueError("center window does not intersect the image")
    acc_w = x_hi - x_lo + 1
    acc_h = y_hi - y_lo + 1

    r_min, r_max = int(r_min), int(r_max)
    n_r = r_max - r_min + 1
    px = edges.points[:, 0]
    py = edges.points[:, 1]

    if acc_h * acc_w <= 4096:
        acc = _vote_by_distance(px, py, r_min, r_max, x_lo, acc_w, y_lo, acc_h)
    else:
        acc = _vote_by_rings(px, py, r_min, r_max, x_lo, acc_w, y_lo, acc_h,
                             edges.width, edges.height)

    peak = int(np.argmax(acc))  # first occurrence = smallest r, then cy, then cx
    votes = int(acc.flat[peak])
    if votes < MIN_CIRCLE_VOTES:
        raise SegmentationError(f"degenerate circle evidence: peak has only {votes} votes")
    ri, rem = divmod(peak, acc_h * acc_w)
    cy, cx = divmod(rem, acc_w)
    return Circle(float(cx + x_lo), float(cy + y_lo), float(r_min + ri))


def _vote_by_distance(px, py, r_min, r_max, x_lo, acc_w, y_lo, acc_h):
    """Accumulate votes by rounding point-to-center distances (small windows)."""
    n_r = r_max - r_min + 1
    cxs = (x_lo + np.arange(acc_w))[None, :, None]
    cys = (y_lo + np.arange(acc_h))[:, None, None]
    acc = np.zeros((n_r, acc_h, acc_w), dtype=np.int32)
    chunk = max(1, 4_000_000 // (acc_h * acc_w))
    for lo in range(0, len(px), chunk):
        d = np.hypot(px[lo : lo + chunk][None, None, :] - cxs,
                     py[lo : lo + chunk][None, None, :] - cys)
        ri = np.rint(d).astype(np.int64) - r_min
        ok = (ri >= 0) & (ri < n_r)
        cell = np.broadcast_to(
            (np.arange(acc_h)[:, None, None] * acc_w + np.arange(acc_w)[None, :, None]),
            ri.shape,
        )
        flat = ri[ok] * (acc_h * acc_w) + cell[ok]
        acc += np.bincount(flat, minlength=n_r * acc_h * acc_w).reshape(acc.shape).astype(np.int32)
    return acc


def _vote_by_rings(px, py, r_min, r_max, x_lo, acc_w, y_lo, acc_h, img_w, img_h):
    """Accumulate votes by stamping ring offsets around each edge point.

    Votes land in a padded plane so no bounds test is needed per vote; the
    pad is cropped away before the peak search.
    """
    pad = r_max + 1
    pw = img_w + 2 * pad
    ph = img_h + 2 * pad
    base = ((py + pad).astype(np.intp) * pw + (px + pad).astype(np.intp))
    n_r = r_max - r_min + 1
    acc = np.empty((n_r, acc_h, acc_w), dtype=np.int32)
    for ri, r in enumerate(range(r_min, r_max + 1)):
        dx, dy = _ring_offsets(r)
        off = dy.astype(np.intp) * pw + dx.astype(np.intp)
        flat = (base[:, None] + off[None, :]).ravel()
        plane = np.bincount(flat, minlength=ph * pw).reshape(ph, pw)
        acc[ri] = plane[pad + y_lo : pad + y_lo + acc_h, pad + x_lo : pad + x_lo + acc_w]
    return acc


def _hough_circle_normalized(edges: EdgeMap, r_min: int, r_max: int) -> Circle:
    """Circle vote peak scored by votes/r (circle completeness).

    Raw vote counts grow with circumference, which lets long near-tangential
    arcs of a large boundary outvote a small complete circle; dividing by the
    radius scores fraction-of-circle support instead.  Used for the pupil
    stage, where small and large circles compete in one accumulator.
    """
    if len(edges) == 0:
        raise SegmentationError("empty edge map, cannot vote for circles")
    if not 0 < r_min < r_max:
        raise ValueError(f"need 0 < r_min < r_max, got [{r_min}, {r_max}]")
    r_min, r_max = int(r_min), int(r_max)
    acc = _vote_by_rings(
        edges.points[:, 0], edges.points[:, 1], r_min, r_max,
        0, edges.width, 0, edges.height, edges.width, edges.height,
    )
    radii = np.arange(r_min, r_max + 1, dtype=np.float64)
    scored = acc / radii[:, None, None]
    peak = int(np.argmax(scored))
    if int(acc.flat[peak]) < MIN_CIRCLE_VOTES:
        raise SegmentationError("degenerate circle evidence in normalized vote")
    ri, rem = divmod(peak, edges.height * edges.width)
    cy, cx = divmod(rem, edges.width)
    return Circle(float(cx), float(cy), float(r_min + ri))


def locate_pupil_and_iris(img: GrayImage, cfg: SegmentationConfig) -> tuple[Circle, Circle]:
    """Two-stage circle detection: pupil first, iris constrained nearby."""
    pupil_edges = edge_map(img, "none", cfg.grad_threshold)
    try:
        pupil = _hough_circle_normalized(pupil_edges, cfg.pupil_r_min, cfg.pupil_r_max)
    except SegmentationError as exc:
        raise SegmentationError(f"pupil detection failed: {exc}") from exc

    iris_edges = edge_map(img, "vertical-edges", cfg.grad_threshold)
    window = (
        int(pupil.cx) - IRIS_CENTER_OFFSET,
        int(pupil.cx) + IRIS_CENTER_OFFSET,
        int(pupil.cy) - IRIS_CENTER_OFFSET,
        int(pupil.cy) + IRIS_CENTER_OFFSET,
    )
    try:
        iris = circular_hough(iris_edges, cfg.iris_r_min, cfg.iris_r_max, center_window=window)
    except SegmentationError as exc:
        raise SegmentationError(f"iris detection failed: {exc}") from exc

    if pupil.r >= iris.r:
        raise SegmentationError(f"pupil radius {pupil.r} not smaller than iris radius {iris.r}")
    if not iris.contains(pupil.cx, pupil.cy):
        raise SegmentationError("detected pupil center lies outside the iris circle")
    return pupil, iris


def parabolic_hough(
    edges: EdgeMap,
    search_region: tuple[int, int, int, int],
    curvature_sign: int = 1,
) -> Parabola | None:
    """Quantized (h, k, a, theta) vote for an eyelid arc.

    ``search_region`` is the inclusive box (x_lo, x_hi, y_lo, y_hi) that must
    contain the peak; only edge points inside it vote.  Returns None when no
    cell collects at least 5% of the region's edge points, or when the winner
    sits on the flattest curvature step (straight-line structure, not an
    eyelid).  Absence is a valid outcome, not an error.
    """
    if curvature_sign not in (1, -1):
        raise ValueError("curvature_sign must be +1 or -1")
    x_lo, x_hi, y_lo, y_hi = search_region
    if len(edges) == 0:
        return None
    pts = edges.points
    inside = (
        (pts[:, 0] >= x_lo) & (pts[:, 0] <= x_hi) & (pts[:, 1] >= y_lo) & (pts[:, 1] <= y_hi)
    )
    pts = pts[inside]
    if len(pts) == 0:
        return None

    h_vals = np.arange(x_lo, x_hi + 1, PARABOLA_STEP, dtype=np.float64)
    k_count = (y_hi - y_lo) // PARABOLA_STEP + 1
    x = pts[:, 0].astype(np.float64)
    y = pts[:, 1].astype(np.float64)

    acc = np.zeros((len(PARABOLA_THETAS), len(PARABOLA_CURVATURES), k_count, len(h_vals)),
                   dtype=np.int32)
    cells = k_count * len(h_vals)
    X = x[:, None] - h_vals[None, :]  # (N, H), shared across (theta, a)

    for ti, theta in enumerate(PARABOLA_THETAS):
        c, s = math.cos(theta), math.sin(theta)
        for ai, a_mag in enumerate(PARABOLA_CURVATURES):
            a = curvature_sign * a_mag
            # substitute Y = y - k into w = a*u^2 and solve the quadratic
            # a*s^2*Y^2 + (2aXsc - c)*Y + (aX^2c^2 + Xs) = 0
            alpha = a * s * s
            beta = 2.0 * a * X * s * c - c
            gamma = a * X * X * c * c + X * s
            if abs(alpha) < 1e-12:
                with np.errstate(divide="ignore", invalid="ignore"):
                    roots = [np.where(beta != 0, -gamma / beta, np.nan)]
            else:
                disc = beta * beta - 4.0 * alpha * gamma
                valid = disc >= 0
                sq = np.sqrt(np.where(valid, disc, 0.0))
                r1 = np.where(valid, (-beta + sq) / (2 * alpha), np.nan)
                r2 = np.where(valid, (-beta - sq) / (2 * alpha), np.nan)
                roots = [r1, r2]
            for Y in roots:
                k = y[:, None] - Y
                with np.errstate(invalid="ignore"):
                    ki = np.rint((k - y_lo) / PARABOLA_STEP)
                ok = np.isfinite(ki) & (ki >= 0) & (ki < k_count)
                flat = (ki[ok].astype(np.int64) * len(h_vals)
                        + np.broadcast_to(np.arange(len(h_vals)), k.shape)[ok])
                acc[ti, ai] += np.bincount(flat, minlength=cells).reshape(
                    k_count, len(h_vals)).astype(np.int32)

    peak = int(np.argmax(acc))
    votes = int(acc.flat[peak])
    if votes < PARABOLA_VOTE_FLOOR * len(pts):
        return None
    ti, rem = divmod(peak, len(PARABOLA_CURVATURES) * cells)
    ai, rem = divmod(rem, cells)
    ki, hi = divmod(rem, len(h_vals))
    if ai == 0:
        return None  # flattest-step sink: straight-line structure
    return Parabola(
        h=float(h_vals[hi]),
        k=float(y_lo + ki * PARABOLA_STEP),
        a=curvature_sign * float(PARABOLA_CURVATURES[ai]),
        theta=PARABOLA_THETAS[ti],
    )


def detect_eyelids(
    img: GrayImage, pupil: Circle, iris: Circle, grad_threshold: float
) -> tuple[Parabola | None, Parabola | None]:
    """Search for upper and lower eyelid arcs near the iris circle."""
    edges = edge_map(img, "horizontal-edges", grad_threshold)
    x_lo = max(0, int(iris.cx - iris.r))
    x_hi = min(img.width - 1, int(iris.cx + iris.r))
    upper_region = (x_lo, x_hi, max(0, int(iris.cy - iris.r)), int(iris.cy))
    lower_region = (x_lo, x_hi, int(iris.cy), min(img.height - 1, int(iris.cy + iris.r)))
    upper = parabolic_hough(edges, upper_region, curvature_sign=-1)
    lower = parabolic_hough(edges, lower_region, curvature_sign=1)
    return upper, lower


def build_noise_mask(
    img: GrayImage,
    pupil: Circle,
    iris: Circle,
    eyelids: tuple[Parabola | None, Parabola | None] = (None, None),
    specular_threshold: int = 240,
) -> BinaryImage:
    """Per-pixel validity mask, 1 = invalid.

    Marks everything outside the iris annulus, inside the pupil, on the
    occluded side of each eyelid parabola, or at/above the specular
    intensity threshold.
    """
    center_dist = math.hypot(pupil.cx - iris.cx, pupil.cy - iris.cy)
    if center_dist + pupil.r > iris.r:
        raise SegmentationError("pupil circle not contained in iris circle")

    ys, xs = np.mgrid[0 : img.height, 0 : img.width]
    d_pupil = np.hypot(xs - pupil.cx, ys - pupil.cy)
    d_iris = np.hypot(xs - iris.cx, ys - iris.cy)
    mask = (d_pupil <= pupil.r) | (d_iris > iris.r)
    for lid in eyelids:
        if lid is not None:
            mask |= lid.side(xs, ys) > 0
    mask |= img.pixels >= specular_threshold
    return BinaryImage(mask.astype(np.uint8))


def segment(img: GrayImage, cfg: SegmentationConfig) -> SegmentationResult:
    """Full segmentation: circles, optional eyelids, and the noise mask."""
    pupil, iris = locate_pupil_and_iris(img, cfg)
    if cfg.detect_eyelids:
        upper, lower = detect_eyelids(img, pupil, iris, cfg.grad_threshold)
    else:
        upper, lower = None, None
    mask = build_noise_mask(img, pupil, iris, (upper, lower), cfg.specular_threshold)
    return SegmentationResult(pupil, iris, upper, lower, mask)


def segmentation_overlay(img: GrayImage, pupil: Circle, iris: Circle) -> GrayImage:
    """Debug image with both circle boundaries painted at intensity 255."""
    out = img.pixels.copy()
    ys, xs = np.mgrid[0 : img.height, 0 : img.width]
    for circle in (pupil, iris):
        d = np.hypot(xs - circle.cx, ys - circle.cy)
        out[np.abs(d - circle.r) < 0.7] = 255
    return GrayImage(out)


def circles_sidecar(pupil: Circle, iris: Circle) -> str:
    """Line-oriented text summary of the detected circles."""
    return (
        f"pupil {pupil.cx:g} {pupil.cy:g} {pupil.r:g}\n"
        f"iris {iris.cx:g} {iris.cy:g} {iris.r:g}\n"
    )

"""Euler codes from MSB bit planes and Mahalanobis matching.

The Euler number of a binary image is its count of connected components
minus its count of holes; foreground uses 8-connectivity, background
4-connectivity (the standard complementary pair), and a hole is a
background component that never reaches the image border.  A 4-tuple of
Euler numbers over the b7..b4 planes of the masked polar image forms the
code; codes compare under Mahalanobis distance with a covariance estimated
over the enrolled population (regularized to stay positive-definite).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla

from .imaging import BinaryImage, bit_planes, GrayImage
from .normalization import PolarIris

MSB_PLANES = 4


@dataclass(frozen=True)
class EulerCode:
    """Euler numbers of the (b7, b6, b5, b4) planes, in that order."""

    e: tuple[int, int, int, int]

    def __post_init__(self):
        vals = tuple(int(v) for v in self.e)
        if len(vals) != MSB_PLANES:
            raise ValueError(f"Euler code needs {MSB_PLANES} components, got {len(vals)}")
        object.__setattr__(self, "e", vals)

    def as_array(self) -> np.ndarray:
        return np.array(self.e, dtype=np.float64)


@dataclass(frozen=True)
class CovarianceModel:
    S: np.ndarray
    epsilon: float

    def __post_init__(self):
        S = np.asarray(self.S, dtype=np.float64)
        if S.shape != (MSB_PLANES, MSB_PLANES):
            raise ValueError(f"covariance must be {MSB_PLANES}x{MSB_PLANES}, got {S.shape}")
        if not np.allclose(S, S.T, atol=1e-9):
            raise ValueError("covariance matrix must be symmetric")
        if self.epsilon <= 0:
            raise ValueError("regularization epsilon must be positive")
        S = (S + S.T) / 2.0
        S.setflags(write=False)
        object.__setattr__(self, "S", S)


def euler_number(b: BinaryImage) -> int:
    """Connected components (8-connected) minus holes (4-connected background).

    Computed by bit-quad counting over all 2x2 neighborhoods of the
    zero-padded image, which equals the component/hole difference under the
    8-connected-foreground / 4-connected-background convention and runs in
    one vectorized pass.
    """
    p = np.pad(b.bits, 1)
    code = (p[:-1, :-1] << 3) | (p[:-1, 1:] << 2) | (p[1:, :-1] << 1) | p[1:, 1:]
    c = np.bincount(code.ravel(), minlength=16)
    quads_one = c[1] + c[2] + c[4] + c[8]
    quads_three = c[7] + c[11] + c[13] + c[14]
    quads_diag = c[6] + c[9]
    return int(quads_one - quads_three - 2 * quads_diag) // 4


def common_mask(ma: BinaryImage, mb: BinaryImage) -> BinaryImage:
    """Union of invalid regions: bitwise OR under the 1 = invalid convention."""
    if ma.bits.shape != mb.bits.shape:
        raise ValueError(f"mask shapes differ: {ma.bits.shape} vs {mb.bits.shape}")
    return BinaryImage(ma.bits | mb.bits)


def euler_code(polar: PolarIris, cm: BinaryImage) -> EulerCode:
    """Euler numbers of the four MSB planes of the masked polar image.

    Invalid pixels are zeroed before plane decomposition; zeroing can alter
    topology right at mask borders, an accepted approximation.
    """
    if cm.bits.shape != polar.intensities.shape:
        raise ValueError("common mask must be congruent with the polar image")
    masked = np.where(cm.bits == 1, 0, polar.intensities).astype(np.uint8)
    planes = bit_planes(GrayImage(masked))[:MSB_PLANES]  # b7..b4
    return EulerCode(tuple(euler_number(p) for p in planes))


def _as_code_matrix(codes) -> np.ndarray:
    rows = [c.as_array() if isinstance(c, EulerCode) else np.asarray(c, dtype=np.float64)
            for c in codes]
    mat = np.vstack(rows)
    if mat.shape[1] != MSB_PLANES:
        raise ValueError(f"codes must have {MSB_PLANES} components")
    return mat


def estimate_covariance(codes, epsilon: float | None = None) -> CovarianceModel:
    """Sample covariance of the enrollment population plus epsilon * I.

    ``epsilon`` defaults to 1e-3 of the mean sample variance with a floor of
    1.0, which keeps the matrix positive-definite even when every enrolled
    code is identical.
    """
    mat = _as_code_matrix(codes)
    if len(mat) < 2:
        raise ValueError(f"need at least 2 codes to estimate covariance, got {len(mat)}")
    sample = np.cov(mat, rowvar=False, ddof=1)
    if epsilon is None:
        epsilon = max(1.0, 1e-3 * float(np.mean(np.diag(sample))))
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    S = sample + epsilon * np.eye(MSB_PLANES)
    return CovarianceModel((S + S.T) / 2.0, float(epsilon))


def calibrated_covariance(codes) -> CovarianceModel:
    """Population covariance with spread-proportional regularization.

    Euler-code components are strongly correlated across identities (they
    all respond to overall texture richness), which makes the raw population
    covariance nearly singular along the identity axis; whitening with it
    would amplify pure-noise directions.  Setting epsilon to the mean sample
    variance floors the small eigenvalues while still damping high-variance
    components relative to stable ones.
    """
    mat = _as_code_matrix(codes)
    if len(mat) < 2:
        raise ValueError(f"need at least 2 codes to estimate covariance, got {len(mat)}")
    spread = float(np.mean(np.var(mat, axis=0, ddof=1)))
    return estimate_covariance(codes, epsilon=max(1.0, spread))


def mahalanobis(x: EulerCode, y: EulerCode, model: CovarianceModel) -> float:
    """sqrt((x-y)^T S^-1 (x-y)), solved via Cholesky rather than inversion."""
    d = x.as_array() - y.as_array()
    try:
        factor = sla.cho_factor(model.S, lower=True)
    except sla.LinAlgError as exc:
        raise ValueError(f"covariance model is not positive-definite: {exc}") from None
    return float(np.sqrt(d @ sla.cho_solve(factor, d)))

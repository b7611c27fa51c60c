import numpy as np
import pytest

from irisfuse.euler import (
    CovarianceModel,
    EulerCode,
    common_mask,
    estimate_covariance,
    euler_code,
    euler_number,
    mahalanobis,
)
from irisfuse.imaging import BinaryImage
from irisfuse.normalization import POLAR_HEIGHT, POLAR_WIDTH, PolarIris

from oracles import flood_fill_euler


def polar_of(values, mask=None):
    if mask is None:
        mask = np.zeros((POLAR_HEIGHT, POLAR_WIDTH), dtype=np.uint8)
    return PolarIris(values, BinaryImage(mask))


class TestEulerNumber:
    def test_empty_image(self):
        assert euler_number(BinaryImage(np.zeros((5, 5), dtype=np.uint8))) == 0

    def test_solid_square(self):
        assert euler_number(BinaryImage(np.ones((3, 3), dtype=np.uint8))) == 1

    def test_ring_with_hole(self):
        ring = np.ones((3, 3), dtype=np.uint8)
        ring[1, 1] = 0
        assert euler_number(BinaryImage(ring)) == 0

    def test_diagonal_counts_as_connected(self):
        arr = np.eye(4, dtype=np.uint8)
        assert euler_number(BinaryImage(arr)) == 1

    def test_matches_flood_fill_oracle(self):
        rng = np.random.default_rng(17)
        for _ in range(200):
            bits = (rng.random((32, 32)) < rng.uniform(0.2, 0.8)).astype(np.uint8)
            img = BinaryImage(bits)
            assert euler_number(img) == flood_fill_euler(bits)

    def test_additive_over_separated_components(self):
        rng = np.random.default_rng(23)
        a = (rng.random((16, 16)) < 0.5).astype(np.uint8)
        b = (rng.random((16, 16)) < 0.5).astype(np.uint8)
        gutter = np.zeros((16, 3), dtype=np.uint8)
        pasted = np.hstack([a, gutter, b])
        assert euler_number(BinaryImage(pasted)) == euler_number(BinaryImage(a)) + euler_number(
            BinaryImage(b)
        )


class TestCommonMask:
    def test_identity_element(self):
        rng = np.random.default_rng(1)
        m = BinaryImage((rng.random((8, 8)) < 0.5).astype(np.uint8))
        zero = BinaryImage(np.zeros((8, 8), dtype=np.uint8))
        assert np.array_equal(common_mask(m, zero).bits, m.bits)

    def test_absorbing_element(self):
        rng = np.random.default_rng(2)
        m = BinaryImage((rng.random((8, 8)) < 0.5).astype(np.uint8))
        ones = BinaryImage(np.ones((8, 8), dtype=np.uint8))
        assert np.all(common_mask(m, ones).bits == 1)

    def test_commutative(self):
        rng = np.random.default_rng(3)
        a = BinaryImage((rng.random((8, 8)) < 0.5).astype(np.uint8))
        b = BinaryImage((rng.random((8, 8)) < 0.5).astype(np.uint8))
        assert np.array_equal(common_mask(a, b).bits, common_mask(b, a).bits)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            common_mask(
                BinaryImage(np.zeros((4, 4), dtype=np.uint8)),
                BinaryImage(np.zeros((5, 5), dtype=np.uint8)),
            )


class TestEulerCode:
    def test_fully_masked_all_zero(self):
        rng = np.random.default_rng(4)
        vals = rng.integers(0, 256, size=(POLAR_HEIGHT, POLAR_WIDTH), dtype=np.uint8)
        full = np.ones((POLAR_HEIGHT, POLAR_WIDTH), dtype=np.uint8)
        code = euler_code(polar_of(vals), BinaryImage(full))
        assert code.e == (0, 0, 0, 0)

    def test_constant_240_gives_unit_code(self):
        vals = np.full((POLAR_HEIGHT, POLAR_WIDTH), 240, dtype=np.uint8)  # 11110000
        code = euler_code(polar_of(vals), BinaryImage(np.zeros_like(vals)))
        assert code.e == (1, 1, 1, 1)

    def test_matches_bitplane_flood_fill_composition(self):
        rng = np.random.default_rng(5)
        vals = rng.integers(0, 256, size=(POLAR_HEIGHT, POLAR_WIDTH), dtype=np.uint8)
        cm = (rng.random((POLAR_HEIGHT, POLAR_WIDTH)) < 0.2).astype(np.uint8)
        code = euler_code(polar_of(vals), BinaryImage(cm))
        masked = np.where(cm == 1, 0, vals)
        for i, k in enumerate((7, 6, 5, 4)):
            plane = (masked >> k) & 1
            assert code.e[i] == flood_fill_euler(plane)

    def test_invariant_to_masked_pixel_changes(self):
        rng = np.random.default_rng(6)
        vals = rng.integers(0, 256, size=(POLAR_HEIGHT, POLAR_WIDTH), dtype=np.uint8)
        cm = (rng.random((POLAR_HEIGHT, POLAR_WIDTH)) < 0.3).astype(np.uint8)
        altered = vals.copy()
        altered[cm == 1] = rng.integers(0, 256, size=int(cm.sum()), dtype=np.uint8)
        a = euler_code(polar_of(vals), BinaryImage(cm))
        b = euler_code(polar_of(altered), BinaryImage(cm))
        assert a.e == b.e

    def test_dimension_mismatch(self):
        vals = np.zeros((POLAR_HEIGHT, POLAR_WIDTH), dtype=np.uint8)
        with pytest.raises(ValueError):
            euler_code(polar_of(vals), BinaryImage(np.zeros((4, 4), dtype=np.uint8)))


class TestCovariance:
    def test_identical_codes_give_pure_regularization(self):
        codes = [EulerCode((3, -1, 2, 0))] * 5
        model = estimate_covariance(codes)
        assert model.epsilon == 1.0
        assert np.allclose(model.S, np.eye(4))

    def test_standard_normal_sampling(self):
        rng = np.random.default_rng(7)
        codes = rng.standard_normal((10_000, 4))
        model = estimate_covariance(codes, epsilon=0.01)
        assert np.max(np.abs(model.S - np.eye(4))) < 0.1

    def test_always_positive_definite(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            codes = rng.integers(-50, 50, size=(rng.integers(2, 30), 4))
            model = estimate_covariance(codes)
            np.linalg.cholesky(model.S)  # raises if not PD

    def test_needs_two_codes(self):
        with pytest.raises(ValueError):
            estimate_covariance([EulerCode((1, 2, 3, 4))])


class TestMahalanobis:
    def identity_model(self):
        return CovarianceModel(np.eye(4), 1.0)

    def test_zero_for_equal_codes(self):
        x = EulerCode((5, -3, 2, 7))
        assert mahalanobis(x, x, self.identity_model()) == 0.0

    def test_identity_reduces_to_euclidean(self):
        x = EulerCode((3, 4, 0, 0))
        y = EulerCode((0, 0, 0, 0))
        assert mahalanobis(x, y, self.identity_model()) == pytest.approx(5.0, abs=1e-9)

    def test_high_variance_damps_component(self):
        model = CovarianceModel(np.diag([4.0, 1.0, 1.0, 1.0]), 1.0)
        x = EulerCode((2, 0, 0, 0))
        y = EulerCode((0, 0, 0, 0))
        assert mahalanobis(x, y, model) == pytest.approx(1.0, abs=1e-12)

    def test_matches_whitened_euclidean(self):
        rng = np.random.default_rng(9)
        for _ in range(20):
            a = rng.normal(size=(4, 4))
            S = a @ a.T + 0.5 * np.eye(4)
            model = CovarianceModel(S, 0.5)
            x = EulerCode(tuple(rng.integers(-20, 20, 4)))
            y = EulerCode(tuple(rng.integers(-20, 20, 4)))
            L = np.linalg.cholesky(S)
            z = np.linalg.solve(L, x.as_array() - y.as_array())
            assert mahalanobis(x, y, model) == pytest.approx(float(np.linalg.norm(z)), abs=1e-9)

    def test_symmetric(self):
        model = CovarianceModel(np.diag([2.0, 3.0, 1.0, 5.0]), 1.0)
        x = EulerCode((1, 2, 3, 4))
        y = EulerCode((-2, 0, 5, 1))
        assert mahalanobis(x, y, model) == pytest.approx(mahalanobis(y, x, model), abs=1e-12)

    def test_variance_increase_never_increases_distance(self):
        x = EulerCode((3, 1, 1, 1))
        y = EulerCode((0, 1, 1, 1))
        dists = [
            mahalanobis(x, y, CovarianceModel(np.diag([v, 1.0, 1.0, 1.0]), 0.1))
            for v in (0.5, 1.0, 2.0, 4.0, 16.0)
        ]
        assert all(a >= b for a, b in zip(dists, dists[1:]))

    def test_non_positive_definite_rejected(self):
        bad = np.diag([1.0, 1.0, 1.0, -1.0])
        model = CovarianceModel.__new__(CovarianceModel)
        object.__setattr__(model, "S", bad)
        object.__setattr__(model, "epsilon", 1.0)
        with pytest.raises(ValueError):
            mahalanobis(EulerCode((1, 0, 0, 0)), EulerCode((0, 0, 0, 0)), model)

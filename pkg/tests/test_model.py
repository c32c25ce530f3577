import numpy as np
import pytest

from momentguard.errors import (
    DimensionMismatch,
    OutOfRange,
    RankDeficiency,
    RankDeficientGamma,
    SingularSigma,
    ZeroH,
)
from momentguard.model import (
    MisspecSet,
    MomentModel,
    sensitivity_constraint_residual,
    validate_model,
)


def scalar_model(**overrides):
    kwargs = dict(gamma=[[-1.0]], sigma=[[1.0]], h_deriv=[1.0],
                  g_init=[0.0], h_init=0.0, n=50)
    kwargs.update(overrides)
    return MomentModel(**kwargs)


class TestValidateModel:
    def test_valid_scalar(self):
        m = scalar_model()
        assert validate_model(m) is m

    def test_idempotent(self):
        m = scalar_model()
        assert validate_model(validate_model(m)) is m

    def test_singular_sigma(self):
        m = MomentModel(gamma=[[-1.0], [0.5]], sigma=[[1.0, 1.0], [1.0, 1.0]],
                        h_deriv=[1.0], g_init=[0.0, 0.0], h_init=0.0, n=10)
        with pytest.raises(SingularSigma):
            validate_model(m)

    def test_rank_deficient_gamma(self):
        m = MomentModel(gamma=np.zeros((2, 2)), sigma=np.eye(2),
                        h_deriv=[1.0, 0.0], g_init=[0.0, 0.0], h_init=0.0, n=10)
        with pytest.raises(RankDeficientGamma):
            validate_model(m)

    def test_zero_h(self):
        with pytest.raises(ZeroH):
            validate_model(scalar_model(h_deriv=[0.0]))

    def test_dimension_mismatches_name_field(self):
        with pytest.raises(DimensionMismatch, match="g_init"):
            validate_model(scalar_model(g_init=[0.0, 1.0]))
        with pytest.raises(DimensionMismatch, match="h_deriv"):
            validate_model(scalar_model(h_deriv=[1.0, 2.0]))
        with pytest.raises(DimensionMismatch, match="sigma"):
            validate_model(scalar_model(sigma=np.eye(3)))

    def test_eigenvalue_floor_is_relative(self):
        sigma = np.diag([1.0, 1e-11])
        m = MomentModel(gamma=[[-1.0], [0.5]], sigma=sigma, h_deriv=[1.0],
                        g_init=[0.0, 0.0], h_init=0.0, n=10)
        with pytest.raises(SingularSigma):
            validate_model(m)
        # same conditioning, larger scale: still rejected
        m2 = MomentModel(gamma=[[-1.0], [0.5]], sigma=1e8 * sigma,
                         h_deriv=[1.0], g_init=[0.0, 0.0], h_init=0.0, n=10)
        with pytest.raises(SingularSigma):
            validate_model(m2)


class TestMisspecSet:
    def test_holder_conjugate(self):
        b = np.eye(2)
        assert MisspecSet(b, 2, 1.0).holder_conjugate == 2.0
        assert MisspecSet(b, np.inf, 1.0).holder_conjugate == 1.0

    def test_invalid_p(self):
        with pytest.raises(OutOfRange):
            MisspecSet(np.eye(2), 1, 1.0)

    def test_negative_m(self):
        with pytest.raises(OutOfRange):
            MisspecSet(np.eye(2), 2, -0.5)

    def test_rank_deficient_b(self):
        with pytest.raises(RankDeficiency):
            MisspecSet(np.ones((3, 2)), 2, 1.0)

    def test_scaled_keeps_shape(self):
        ms = MisspecSet(np.eye(3)[:, :2], np.inf, 1.0)
        ms2 = ms.scaled(4.0)
        assert ms2.m == 4.0 and ms2.p == ms.p
        np.testing.assert_array_equal(ms2.b_mat, ms.b_mat)


class TestConstraintResidual:
    def test_just_identified_inverse(self):
        rng = np.random.default_rng(0)
        gamma = rng.normal(size=(3, 3)) + 3 * np.eye(3)
        h = rng.normal(size=3)
        m = MomentModel(gamma=gamma, sigma=np.eye(3), h_deriv=h,
                        g_init=np.zeros(3), h_init=0.0, n=10)
        k = -np.linalg.solve(gamma.T, h)
        assert sensitivity_constraint_residual(m, k) < 1e-12

    def test_zero_k_gives_h_norm(self):
        m = scalar_model(h_deriv=[2.5])
        assert sensitivity_constraint_residual(m, np.zeros(1)) == 2.5

    def test_efficient_gmm(self):
        rng = np.random.default_rng(1)
        a = rng.normal(size=(4, 4))
        sigma = a @ a.T + 0.5 * np.eye(4)
        gamma = rng.normal(size=(4, 2))
        h = rng.normal(size=2)
        m = MomentModel(gamma=gamma, sigma=sigma, h_deriv=h,
                        g_init=np.zeros(4), h_init=0.0, n=10)
        si = np.linalg.inv(sigma)
        k = -si @ gamma @ np.linalg.solve(gamma.T @ si @ gamma, h)
        assert sensitivity_constraint_residual(m, k) <= 1e-10

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            sensitivity_constraint_residual(scalar_model(), np.zeros(3))

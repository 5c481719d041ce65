import numpy as np
import pytest
from hypothesis import given, strategies as st

from bellflow.protocols.gaussian import GaussianModel, NoSteadyStateError
from bellflow.protocols.optomech import LAMBDA_C, LAMBDA_CDAG


class TestGaussianModel:
    @given(st.floats(0.0, 50.0), st.floats(0.01, 10.0))
    def test_thermal_damping(self, nbar, gamma):
        lam = gamma * (nbar + 1) * LAMBDA_C + gamma * nbar * LAMBDA_CDAG
        model = GaussianModel.from_generator(lam)
        np.testing.assert_allclose(model.A, -0.5 * gamma * np.eye(2), atol=1e-12)
        np.testing.assert_allclose(model.steady_covariance(), (nbar + 0.5) * np.eye(2), rtol=1e-10)

    def test_rotation_does_not_change_spectrum(self):
        lam = LAMBDA_C + 0.3 * LAMBDA_CDAG
        Hm = 2.0 * np.eye(2)  # H = x^2 + p^2
        V0 = GaussianModel.from_generator(lam).steady_covariance()
        V1 = GaussianModel.from_generator(lam, Hm).steady_covariance()
        np.testing.assert_allclose(V1, V0, atol=1e-12)

    def test_no_damping_has_no_steady_state(self):
        model = GaussianModel.from_generator(np.zeros((2, 2)))
        assert not model.is_hurwitz
        with pytest.raises(NoSteadyStateError):
            model.steady_covariance()

    def test_transient(self):
        model = GaussianModel.from_generator(2.0 * LAMBDA_C)
        V0 = np.diag([3.0, 0.2])
        np.testing.assert_allclose(model.covariance_at(V0, 0.0), V0, atol=1e-12)
        # each entry relaxes as e^{-gamma t} toward 1/2
        t = 0.7
        np.testing.assert_allclose(model.covariance_at(V0, t), 0.5 * np.eye(2) + np.exp(-2 * t) * (V0 - 0.5 * np.eye(2)),
                                   atol=1e-12)

    def test_pure_diffusion_transient(self):
        model = GaussianModel(np.zeros((2, 2)), np.diag([1.0, 2.0]))
        np.testing.assert_allclose(model.covariance_at(np.eye(2), 1.5), np.diag([2.5, 4.0]), atol=1e-12)

    def test_validation(self):
        with pytest.raises(ValueError):
            GaussianModel(np.zeros((2, 2)), np.array([[1.0, 1.0], [0.0, 1.0]]))
        with pytest.raises(ValueError):
            GaussianModel(np.zeros((3, 3)), np.eye(3))
        assert not GaussianModel(-np.eye(2), -np.eye(2)).diffusion_psd

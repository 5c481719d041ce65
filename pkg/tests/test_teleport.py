import numpy as np
import pytest

from bellflow.noise import SqueezingSpec, squeezing_from_db
from bellflow.protocols.teleport import (
    bosonic_teleport_model,
    expected_jump_coefficients,
    teleport_steady_state,
)


class TestTeleportModel:
    def test_operators(self):
        m = bosonic_teleport_model(SqueezingSpec.vacuum(), 12)
        c = m.s.dag().matrix
        np.testing.assert_allclose(m.feedback.F_plus.matrix, 1j * (c - c.conj().T))
        np.testing.assert_allclose(m.feedback.F_minus.matrix, c + c.conj().T)
        assert m.expected_rate == 1.0

    def test_truncation_floor(self):
        with pytest.raises(ValueError):
            bosonic_teleport_model(SqueezingSpec.vacuum(), 9)

    @pytest.mark.parametrize("r,phase", [(0.0, 0.0), (0.4, 0.0), (0.4, 1.0)])
    def test_expected_direction_is_bogoliubov_mode(self, r, phase):
        # cosh r c - e^{i phase} sinh r c^dag written over (x, p)
        u, v = np.cosh(r), -np.exp(1j * phase) * np.sinh(r)
        ref = np.array([u + v, 1j * (u - v)]) / np.sqrt(2)
        got = expected_jump_coefficients(SqueezingSpec.from_squeeze(r, phase))
        assert abs(np.vdot(got, ref / np.linalg.norm(ref))) == pytest.approx(1.0, abs=1e-12)


class TestFixedPoints:
    def test_vacuum_input_cools_to_ground_state(self):
        res = teleport_steady_state(SqueezingSpec.vacuum(), 30)
        assert res.ground_fidelity >= 1 - 1e-8
        assert res.kernel_dim == 1
        assert res.purity == pytest.approx(1.0, abs=1e-10)

    def test_truncation_convergence(self):
        sq = squeezing_from_db(-6.0)
        errs = [abs(teleport_steady_state(sq, d, check_kernel=False).min_variance - sq.min_variance)
                for d in (16, 24, 32)]
        assert errs[0] > errs[1] > errs[2]
        assert errs[2] < 1e-5

    def test_lossy_detection_degrades_squeezing(self):
        sq = squeezing_from_db(-3.0)
        ideal = teleport_steady_state(sq, 24, check_kernel=False)
        lossy = teleport_steady_state(sq, 24, eta=0.8, check_kernel=False)
        assert lossy.min_variance > ideal.min_variance + 1e-3
        assert lossy.purity < ideal.purity

import numpy as np
import pytest
from hypothesis import given, strategies as st
from numpy.polynomial.hermite_e import hermegauss

from bellflow.feedback import FeedbackSpec
from bellflow.noise import SqueezingSpec, squeezing_from_db
from bellflow.protocols.swap import TlsSwapParams, tls_swap_model
from bellflow.qops import DensityOp, Operator, fidelity, sigma_minus, sigma_x, sigma_y
from bellflow.sme import (
    SCHEMES,
    TrajectoryConfig,
    ensemble_average,
    photocurrent_sample,
    run_ensemble,
    run_trajectory,
    step_conditional,
    step_with_feedback,
    suggest_dt,
    swap_sme_model,
    teleport_sme_model,
    trajectory_csv,
)

from conftest import random_density


def averaged_generator(model, fb, rho, dt, scheme, nodes=10):
    """``(E[rho(dt)] - rho) / dt`` with the Gaussian average done by quadrature."""
    x, w = hermegauss(nodes)
    w = w / w.sum()
    Z = np.array([(a, b) for a in x for b in x])
    W = np.array([p * q for p in w for q in w])
    dw = np.sqrt(dt) * Z @ model.cov.cholesky().T
    batch = np.broadcast_to(rho, (len(W),) + rho.shape)
    if fb is None:
        out = step_conditional(model, batch, dw, dt, scheme)
    else:
        out = step_with_feedback(model, batch, fb.F_plus, fb.F_minus, dw, dt, scheme)
    return (np.einsum("b,bij->ij", W, out) - rho) / dt


def _teleport_tls(eta=0.8, nu_sign=1.0):
    sq = squeezing_from_db(-6.0, 0.4)
    return teleport_sme_model(sigma_minus(), sq, eta=eta, H_sys=0.5 * sigma_x(), nu_sign=nu_sign)


TLS_FB = FeedbackSpec(0.8 * sigma_y(), 0.6 * sigma_x())


def _swap(eta=1.0, z=0.5):
    m = tls_swap_model(TlsSwapParams(z, eta=eta))
    return swap_sme_model(m.s1, m.s2, eta), m


class TestAveragedStep:
    """One step averaged over the noise reproduces the unconditional generators."""

    @pytest.mark.parametrize("scheme", SCHEMES)
    def test_no_feedback(self, rng, scheme):
        model = _teleport_tls()
        rho = random_density(rng, 2)
        exact = model.liouvillian().apply(rho)
        errs = [np.abs(averaged_generator(model, None, rho, dt, scheme) - exact).max() for dt in (1e-3, 1e-4)]
        if scheme == "euler":
            # the Ito step is linear in dW, so the average is exact
            assert max(errs) < 1e-9
        else:
            assert errs[1] < 1e-3
            assert errs[0] / errs[1] == pytest.approx(10, rel=0.05)

    @pytest.mark.parametrize("scheme", SCHEMES)
    def test_teleport_feedback(self, rng, scheme):
        model = _teleport_tls()
        rho = random_density(rng, 2)
        exact = model.feedback_liouvillian(TLS_FB).apply(rho)
        errs = [np.abs(averaged_generator(model, TLS_FB, rho, dt, scheme) - exact).max() for dt in (1e-3, 1e-4)]
        assert errs[1] < 1e-3
        assert errs[0] / errs[1] == pytest.approx(10, rel=0.05)

    @pytest.mark.parametrize("eta", [1.0, 0.7])
    def test_swap_feedback(self, rng, eta):
        model, m = _swap(eta)
        rho = random_density(rng, 4)
        exact = model.feedback_liouvillian(m.feedback).apply(rho)
        err = np.abs(averaged_generator(model, m.feedback, rho, 1e-4, "kraus") - exact).max()
        assert err < 2e-3

    def test_wrong_nu_is_inconsistent(self, rng):
        rho = random_density(rng, 2)
        good = _teleport_tls()
        bad = _teleport_tls(nu_sign=-1.0)
        exact = good.feedback_liouvillian(TLS_FB).apply(rho)
        err = np.abs(averaged_generator(bad, TLS_FB, rho, 1e-4, "kraus") - exact).max()
        assert err > 0.05


class TestSingleSteps:
    @given(st.integers(0, 10_000), st.floats(1e-4, 1e-2))
    def test_kraus_step_keeps_a_state(self, seed, dt):
        rng = np.random.default_rng(seed)
        model, m = _swap(0.8)
        rho = random_density(rng, 4, rank=1)
        dw = np.sqrt(dt) * rng.normal(size=(16, 2)) * 3
        out = step_with_feedback(model, np.broadcast_to(rho, (16, 4, 4)), m.feedback.F_plus,
                                 m.feedback.F_minus, dw, dt)
        assert np.allclose(np.trace(out, axis1=1, axis2=2), 1)
        assert np.allclose(out, out.conj().transpose(0, 2, 1))
        assert np.linalg.eigvalsh(out).min() > -1e-12

    def test_forms_are_preserved(self):
        model = _teleport_tls()
        rho = DensityOp.basis(2, 1)
        assert isinstance(step_conditional(model, rho, [0.01, 0.0], 1e-3), DensityOp)
        assert step_conditional(model, rho.matrix, [0.01, 0.0], 1e-3).shape == (2, 2)
        with pytest.raises(ValueError):
            step_conditional(model, rho, np.zeros((3, 2)), 1e-3)
        with pytest.raises(ValueError):
            step_conditional(model, rho, [0.0, 0.0], 1e-3, scheme="milstein")
        with pytest.raises(ValueError):
            step_with_feedback(model, rho, sigma_minus(), sigma_x(), [0.0, 0.0], 1e-3)

    def test_photocurrent_mean(self):
        model = teleport_sme_model(sigma_minus(), SqueezingSpec.vacuum(), eta=0.5)
        plus = DensityOp(2, np.full((2, 2), 0.5))
        cur = photocurrent_sample(model, plus, [0.0, 0.0], 1e-3)
        # sqrt(eta/2) <s + s^dag> with <sigma_x> = 1
        assert cur == pytest.approx([0.5, 0.0], abs=1e-14)
        cur = photocurrent_sample(model, plus, [1e-3, -2e-3], 1e-3)
        assert cur == pytest.approx([1.5, -2.0], abs=1e-12)


class TestRuns:
    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrajectoryConfig(0.0, 10, 0)
        with pytest.raises(ValueError):
            TrajectoryConfig(0.1, 10, 0, stride=3)
        with pytest.raises(ValueError):
            TrajectoryConfig(0.1, 10, -1)
        np.testing.assert_allclose(TrajectoryConfig(0.1, 10, 0, stride=5).snapshot_times, [0, 0.5, 1.0])

    def test_seeded_trajectory_is_reproducible(self):
        model, m = _swap()
        cfg = TrajectoryConfig(1e-3, 200, seed=11, stride=50)
        a = run_trajectory(model, m.feedback, cfg, DensityOp.maximally_mixed((2, 2)))
        b = run_trajectory(model, m.feedback, cfg, DensityOp.maximally_mixed((2, 2)))
        c = run_trajectory(model, m.feedback, TrajectoryConfig(1e-3, 200, seed=12, stride=50),
                           DensityOp.maximally_mixed((2, 2)))
        np.testing.assert_array_equal(a.record.I_plus, b.record.I_plus)
        np.testing.assert_array_equal(a.states[-1].matrix, b.states[-1].matrix)
        assert not np.array_equal(a.record.I_plus, c.record.I_plus)
        assert len(a.states) == 5 and len(a.record.times) == 200

    def test_zero_steps(self):
        model, m = _swap()
        traj = run_trajectory(model, m.feedback, TrajectoryConfig(1e-3, 0, 1), DensityOp.basis((2, 2), 0))
        assert traj.record.I_plus.size == 0
        text = trajectory_csv(traj)
        assert text.strip().splitlines() == ["time,I_plus,I_minus"]

    def test_ensemble_independent_of_batching_and_workers(self):
        model = _teleport_tls()
        cfg = TrajectoryConfig(1e-3, 100, seed=4, stride=100)
        rho0 = DensityOp.basis(2, 1)
        a = run_ensemble(model, TLS_FB, cfg, rho0, 12, batch_size=12)
        b = run_ensemble(model, TLS_FB, cfg, rho0, 12, batch_size=5, workers=2)
        np.testing.assert_array_equal(a.states, b.states)
        c = run_ensemble(model, TLS_FB, cfg, rho0, 7, first_index=5)
        np.testing.assert_array_equal(a.states[5:], c.states)
        single = run_trajectory(model, TLS_FB, cfg, rho0, index=3)
        np.testing.assert_array_equal(a.states[3, -1], single.states[-1].matrix)

    def test_substeps_sum_the_fine_noise(self):
        # with a zero coupling the currents are pure noise
        zero = Operator(2, np.zeros((2, 2)))
        model = teleport_sme_model(zero, SqueezingSpec.vacuum(), H_sys=sigma_x())
        rho0 = DensityOp.basis(2, 0)
        fine = run_ensemble(model, None, TrajectoryConfig(5e-4, 40, 9), rho0, 3, record=True)
        coarse = run_ensemble(model, None, TrajectoryConfig(1e-3, 20, 9), rho0, 3, substeps=2, record=True)
        q_fine = fine.currents * 5e-4
        np.testing.assert_allclose(coarse.currents * 1e-3, q_fine[:, 0::2] + q_fine[:, 1::2], atol=1e-15)

    def test_kraus_needs_no_projection(self):
        model, m = _swap(0.7)
        run = run_ensemble(model, m.feedback, TrajectoryConfig(1e-2, 100, 2, 100), DensityOp.basis((2, 2), 3), 50)
        assert run.projections == 0

    def test_swap_trajectory_settles_in_dark_state(self):
        model, m = _swap()
        cfg = TrajectoryConfig(1e-3, 12_000, seed=3, stride=100)
        traj = run_trajectory(model, m.feedback, cfg, DensityOp.maximally_mixed((2, 2)))
        phi = m.dark_state.projector()
        tail = [fidelity(s, phi) for s in traj.states[-30:]]
        assert np.mean(tail) > 0.99


class TestAveraging:
    def test_standard_error_formula(self):
        a, b = np.diag([1.0, 0.0]), np.diag([0.0, 1.0])
        states = np.array([[a], [b], [a], [b]], complex)
        from bellflow.sme import EnsembleRun

        run = EnsembleRun(np.array([0.0]), states, None, TrajectoryConfig(1.0, 0, 0), np.arange(4), 0)
        avg = ensemble_average(run)
        np.testing.assert_allclose(avg.mean[0].matrix, np.eye(2) / 2)
        # every trajectory sits at trace distance 1/2 from the mean
        assert avg.se[0] == pytest.approx(np.sqrt(4 * 0.25 / 12))

    def test_needs_two_trajectories(self):
        model, m = _swap()
        run = run_ensemble(model, None, TrajectoryConfig(1e-3, 2, 0), DensityOp.basis((2, 2), 0), 1)
        with pytest.raises(ValueError):
            ensemble_average(run)

    def test_suggest_dt_scales_with_rates(self):
        weak = teleport_sme_model(0.5 * sigma_minus(), SqueezingSpec.vacuum())
        strong = teleport_sme_model(2.0 * sigma_minus(), SqueezingSpec.vacuum())
        assert suggest_dt(strong) < suggest_dt(weak)

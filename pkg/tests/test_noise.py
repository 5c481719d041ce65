import numpy as np
import pytest
from hypothesis import given, strategies as st

from bellflow.noise import (
    UNIT_NOISE,
    NoiseCov,
    NoiseError,
    SqueezingSpec,
    critical_cooperativity,
    db_from_variance,
    epr_coeffs,
    noise_covariance,
    sample_increments,
    squeezing_from_db,
    trajectory_rng,
)

# -6 dB input: r = 0.3 ln 10, N = sinh(r)^2, M = sinh(r) cosh(r)
N_6DB = 0.5580650871714826
M_6DB = 0.9324707655960035

squeezes = st.tuples(st.floats(0.0, 2.5), st.floats(-np.pi, np.pi))


class TestSqueezingSpec:
    def test_minus_six_db(self):
        sq = squeezing_from_db(-6.0)
        assert sq.N == pytest.approx(N_6DB, abs=1e-15)
        assert sq.M == pytest.approx(M_6DB, abs=1e-15)
        assert db_from_variance(sq.min_variance) == pytest.approx(-6.0, abs=1e-12)

    def test_minus_three_db(self):
        assert squeezing_from_db(-3.0).N == pytest.approx(0.12411238714903797, abs=1e-15)

    def test_vacuum(self):
        v = SqueezingSpec.vacuum()
        assert v.is_vacuum
        assert v.min_variance == v.max_variance == 0.5

    def test_invalid_inputs(self):
        with pytest.raises(NoiseError):
            SqueezingSpec(-0.1, 0.0)
        with pytest.raises(NoiseError):
            SqueezingSpec(1.0, 0.5)  # mixed but flagged pure
        SqueezingSpec(1.0, 0.5, pure=False)
        with pytest.raises(NoiseError):
            SqueezingSpec(1.0, 2.0, pure=False)  # |M|^2 > N(N+1)
        with pytest.raises(NoiseError):
            squeezing_from_db(1.0)
        with pytest.raises(NoiseError):
            SqueezingSpec(np.nan, 0.0)


class TestNoiseCovariance:
    def test_minus_six_db_values(self):
        w = noise_covariance(squeezing_from_db(-6.0))
        assert (w.w1, w.w2, w.w3) == pytest.approx((2.490535852767486, 0.625594321575479, 0.0), abs=1e-14)

    def test_vacuum_is_unit(self):
        assert noise_covariance(SqueezingSpec.vacuum()) == UNIT_NOISE

    @given(squeezes)
    def test_identities_for_pure_inputs(self, rp):
        sq = SqueezingSpec.from_squeeze(*rp)
        w = noise_covariance(sq)
        scale = max(1.0, sq.N + 1)
        assert w.w1 * w.w2 - w.w3 ** 2 == pytest.approx(sq.N + 1, abs=1e-10 * scale ** 2)
        assert w.w1 + w.w2 == pytest.approx(2 * (sq.N + 1), abs=1e-10 * scale)

    def test_rejects_indefinite(self):
        with pytest.raises(NoiseError):
            NoiseCov(1.0, 1.0, 2.0)
        with pytest.raises(NoiseError):
            NoiseCov(-1.0, 1.0)

    @given(st.floats(0.01, 5), st.floats(0.01, 5), st.floats(-1, 1))
    def test_cholesky_reconstructs(self, a, b, rho):
        w3 = rho * np.sqrt(a * b)
        w = NoiseCov(a, b, w3)
        Lc = w.cholesky()
        np.testing.assert_allclose(Lc @ Lc.T, w.matrix, atol=1e-12)

    def test_rank_one_cholesky(self):
        w = NoiseCov(1.0, 4.0, 2.0)
        Lc = w.cholesky()
        np.testing.assert_allclose(Lc @ Lc.T, w.matrix, atol=1e-12)
        w0 = NoiseCov(0.0, 2.0, 0.0)
        np.testing.assert_allclose(w0.cholesky() @ w0.cholesky().T, w0.matrix)


class TestEPRCoefficients:
    def test_vacuum_gives_unity(self):
        c = epr_coeffs(SqueezingSpec.vacuum())
        assert c.mu == 1 and c.nu == 1

    def test_minus_six_db(self):
        c = epr_coeffs(squeezing_from_db(-6.0))
        assert c.mu == pytest.approx(0.40152001782620356, abs=1e-14)
        assert c.nu == pytest.approx(1.5984799821737965, abs=1e-14)
        assert c.mu + c.nu == pytest.approx(2.0)

    def test_negative_real_correlation(self):
        # N = 1, M = -sqrt 2: mu = 1/(2 - sqrt 2), nu = 1 - 1/sqrt 2
        c = epr_coeffs(SqueezingSpec(1.0, -np.sqrt(2)))
        assert c.mu == pytest.approx(1 / (2 - np.sqrt(2)))
        assert c.nu == pytest.approx(1 - 1 / np.sqrt(2))

    @given(squeezes)
    def test_pure_input_simplification(self, rp):
        sq = SqueezingSpec.from_squeeze(*rp)
        c = epr_coeffs(sq)
        assert c.mu == pytest.approx((sq.N + 1 - sq.M) / (sq.N + 1), abs=1e-9)
        assert c.nu == pytest.approx((sq.N + 1 + sq.M) / (sq.N + 1), abs=1e-9)

    @given(st.floats(0.0, 2.5))
    def test_nu_real_for_real_correlation(self, r):
        assert epr_coeffs(SqueezingSpec.from_squeeze(r)).nu.imag == 0.0


class TestCriticalCooperativity:
    def test_minus_six_db(self):
        assert critical_cooperativity(N_6DB) == pytest.approx(2.6708996621203673, abs=1e-13)

    def test_vacuum_never_squeezes(self):
        assert critical_cooperativity(0.0) == np.inf

    @given(st.floats(1e-3, 1e3))
    def test_decreasing_towards_two(self, N):
        c = critical_cooperativity(N)
        assert c > 2
        assert critical_cooperativity(2 * N) < c


class TestIncrements:
    def test_covariance(self):
        w = noise_covariance(SqueezingSpec.from_squeeze(0.4, 0.7))
        dt = 1e-3
        x = sample_increments(w, dt, trajectory_rng(3, 0), size=200_000)
        emp = np.cov(x.T) / dt
        se = np.sqrt((w.matrix ** 2 + np.outer(np.diag(w.matrix), np.diag(w.matrix))) / x.shape[0])
        assert np.all(np.abs(emp - w.matrix) < 5 * se)
        assert np.all(np.abs(x.mean(axis=0)) < 5 * np.sqrt(np.diag(w.matrix) * dt / x.shape[0]))

    def test_chunked_equals_one_shot(self):
        one = sample_increments(UNIT_NOISE, 0.01, trajectory_rng(9, 4), size=100)
        rng = trajectory_rng(9, 4)
        parts = [sample_increments(UNIT_NOISE, 0.01, rng, size=n) for n in (30, 1, 69)]
        np.testing.assert_array_equal(np.concatenate(parts), one)

    def test_streams_are_reproducible_and_distinct(self):
        a = trajectory_rng(1, 0).standard_normal(8)
        np.testing.assert_array_equal(a, trajectory_rng(1, 0).standard_normal(8))
        assert not np.allclose(a, trajectory_rng(1, 1).standard_normal(8))
        assert not np.allclose(a, trajectory_rng(2, 0).standard_normal(8))

    def test_single_draw_shape_and_errors(self):
        assert sample_increments(UNIT_NOISE, 0.1, trajectory_rng(0, 0)).shape == (2,)
        with pytest.raises(NoiseError):
            sample_increments(UNIT_NOISE, 0.0, trajectory_rng(0, 0))
        with pytest.raises(NoiseError):
            trajectory_rng(-1, 0)

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, strategies as st

from bellflow.master import (
    DissipatorMatrix,
    GeneratorTerm,
    Liouvillian,
    NonUniqueSteadyStateError,
    cross_dissipator_super,
    diagonalize_dissipator,
    dissipator,
    dissipator_matrix_liouvillian,
    dissipator_super,
    evolve_me,
    evolve_me_series,
    extract_dissipator_matrix,
    hamiltonian,
    kernel_dimension,
    lindblad,
    liouvillian_build,
    propagator,
    sprepost,
    steady_state,
    steady_state_info,
    unvec,
    vec,
)
from bellflow.qops import (
    DensityOp,
    LayoutError,
    Operator,
    annihilation,
    fock_ket,
    identity,
    quadratures,
    sigma_minus,
    sigma_x,
    sigma_z,
    thermal_state,
    trace_distance,
)

from conftest import random_density


def _direct_dissipator(a, rho):
    ad = a.conj().T
    return a @ rho @ ad - 0.5 * (ad @ a @ rho + rho @ ad @ a)


class TestVectorization:
    def test_row_major_sandwich(self, rng):
        A, X, B = (rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3)) for _ in range(3))
        np.testing.assert_allclose(sprepost(A, B) @ vec(X), vec(A @ X @ B), atol=1e-12)
        np.testing.assert_array_equal(unvec(vec(X)), X)

    def test_dissipator_matches_direct_form(self, rng):
        a = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        rho = random_density(rng, 4)
        np.testing.assert_allclose(unvec(dissipator_super(a) @ vec(rho)), _direct_dissipator(a, rho), atol=1e-12)
        np.testing.assert_allclose(cross_dissipator_super(a, a), dissipator_super(a), atol=1e-12)


class TestLiouvillian:
    @given(st.integers(0, 10_000))
    def test_random_lindblad_is_trace_preserving(self, seed):
        rng = np.random.default_rng(seed)
        h = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
        H = Operator(3, h + h.conj().T)
        jumps = [Operator(3, rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))) for _ in range(2)]
        L = lindblad(H, jumps, rates=[0.3, 1.7])
        assert L.trace_defect() < 1e-12

    def test_non_trace_preserving_rejected(self):
        with pytest.raises(ValueError, match="trace preserving"):
            Liouvillian(2, -np.eye(4))
        Liouvillian(2, -np.eye(4), check=False)

    def test_term_validation(self):
        with pytest.raises(ValueError):
            GeneratorTerm("unitary", sigma_x())
        with pytest.raises(ValueError):
            hamiltonian(sigma_minus())
        with pytest.raises(ValueError):
            dissipator(sigma_minus(), np.nan)
        assert dissipator(sigma_minus(), -0.5).rate == -0.5

    def test_empty_build_needs_layout(self):
        with pytest.raises(LayoutError):
            liouvillian_build([])
        assert np.all(liouvillian_build([], layout=3).matrix == 0)

    def test_arithmetic(self):
        a = lindblad(None, [sigma_minus()])
        b = lindblad(0.5 * sigma_z())
        np.testing.assert_allclose((a + b).matrix, a.matrix + b.matrix)
        np.testing.assert_allclose((a - a).matrix, 0)
        with pytest.raises(LayoutError):
            a + Liouvillian.zero((2, 2))


class TestEvolution:
    def test_exponential_decay(self):
        L = lindblad(None, [sigma_minus()], rates=[0.7])
        rho = evolve_me(L, DensityOp.basis(2, 1), 2.0, 0.01)
        assert rho.matrix[1, 1].real == pytest.approx(np.exp(-1.4), abs=1e-9)

    def test_rk4_agrees_with_propagator(self, rng):
        L = lindblad(0.8 * sigma_x(), [sigma_minus(), 0.3 * sigma_z()])
        rho0 = DensityOp(2, random_density(rng, 2))
        exact = unvec(propagator(L, 1.3) @ vec(rho0.matrix))
        assert trace_distance(evolve_me(L, rho0, 1.3, 1e-2), exact) < 1e-9

    def test_series_hits_requested_times(self):
        L = lindblad(None, [sigma_minus()])
        out = evolve_me_series(L, DensityOp.basis(2, 1), [0.0, 0.5, 1.25], 0.01)
        assert [o.matrix[1, 1].real for o in out] == pytest.approx(np.exp(-np.array([0, 0.5, 1.25])), abs=1e-9)
        with pytest.raises(ValueError):
            evolve_me_series(L, DensityOp.basis(2, 1), [1.0, 0.5], 0.01)

    def test_bad_arguments(self):
        L = lindblad(None, [sigma_minus()])
        with pytest.raises(ValueError):
            evolve_me(L, DensityOp.basis(2, 1), 1.0, 0.0)
        with pytest.raises(ValueError):
            evolve_me(L, DensityOp.basis(2, 1), -1.0, 0.1)
        with pytest.raises(LayoutError):
            evolve_me(L, DensityOp.basis(3, 1), 1.0, 0.1)


class TestSteadyState:
    @pytest.mark.parametrize("omega,gamma", [(1.0, 1.0), (3.0, 0.5), (0.2, 2.0)])
    def test_driven_two_level_atom(self, omega, gamma):
        L = lindblad(0.5 * omega * sigma_x(), [sigma_minus()], rates=[gamma])
        rho = steady_state(L)
        excited = (omega ** 2 / 4) / (gamma ** 2 / 4 + omega ** 2 / 2)
        assert rho.matrix[1, 1].real == pytest.approx(excited, abs=1e-12)

    @pytest.mark.parametrize("nbar", [0.0, 0.3, 2.0])
    def test_thermal_damping(self, nbar):
        c = annihilation(25)
        L = lindblad(None, [c, c.dag()], rates=[nbar + 1, nbar])
        info = steady_state_info(L)
        assert info.kernel_dim == 1
        assert info.residual < 1e-12
        assert trace_distance(info.state, thermal_state(25, nbar)) < 1e-10

    def test_degenerate_kernel_detected(self):
        L = lindblad(sigma_z(), [sigma_z()])
        assert kernel_dimension(L) == 2
        with pytest.raises(NonUniqueSteadyStateError) as err:
            steady_state(L)
        assert err.value.kernel_dim == 2


class TestDissipatorMatrix:
    @given(st.integers(0, 10_000))
    def test_extraction_round_trip(self, seed):
        rng = np.random.default_rng(seed)
        g = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        lam = g @ g.conj().T
        basis = quadratures(12)
        L = dissipator_matrix_liouvillian(DissipatorMatrix(basis, lam))
        ext = extract_dissipator_matrix(L, basis)
        np.testing.assert_allclose(ext.matrix.Lambda, lam, atol=1e-10)
        assert ext.residual < 1e-10

    def test_hamiltonian_part_is_ignored(self):
        x, p = quadratures(10)
        lam = np.array([[1.0, 0.2j], [-0.2j, 0.5]])
        L = dissipator_matrix_liouvillian(DissipatorMatrix((x, p), lam)) + lindblad(x @ x + p @ p)
        np.testing.assert_allclose(extract_dissipator_matrix(L, (x, p)).matrix.Lambda, lam, atol=1e-10)

    def test_damping_over_quadratures(self):
        # D[c] with c = (x + i p)/sqrt 2 has Lambda = [[1, -i], [i, 1]] / 2
        d = 10
        L = lindblad(None, [annihilation(d)])
        lam = extract_dissipator_matrix(L, quadratures(d)).matrix.Lambda
        np.testing.assert_allclose(lam, 0.5 * np.array([[1, -1j], [1j, 1]]), atol=1e-12)

    def test_diagonalization_reconstructs_generator(self):
        x, p = quadratures(8)
        lam = np.array([[2.0, 0.3 - 0.4j], [0.3 + 0.4j, -0.5]])
        D = DissipatorMatrix((x, p), lam)
        chans = diagonalize_dissipator(D)
        assert chans[0].rate > chans[1].rate
        assert chans[1].negative
        terms = [dissipator(ch.jump, ch.rate) for ch in chans]
        np.testing.assert_allclose(liouvillian_build(terms).matrix, dissipator_matrix_liouvillian(D).matrix,
                                   atol=1e-12)

    def test_validation(self):
        x, p = quadratures(4)
        with pytest.raises(ValueError):
            DissipatorMatrix((x, p), np.array([[1, 1], [0, 1]]))
        with pytest.raises(ValueError):
            DissipatorMatrix((x,), np.eye(2))
        with pytest.raises(LayoutError):
            DissipatorMatrix((x, sigma_x()), np.eye(2))

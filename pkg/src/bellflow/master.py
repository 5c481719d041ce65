"""Vectorized master-equation generators, time evolution and steady states.

Density matrices are vectorized row-major, ``vec(rho)[a*d + b] = rho[a, b]``,
so that ``vec(A rho B) = kron(A, B.T) vec(rho)``.  A :class:`Liouvillian`
is the ``d^2 x d^2`` matrix of ``rho -> L(rho)`` in that basis.

Generators need not be of Lindblad form: dissipator rates may be negative,
as happens for feedback master equations driven by squeezed light.  The
only structural property enforced is trace preservation.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np
import scipy.linalg as sla

from .qops import (
    DensityOp,
    LayoutError,
    Operator,
    SpaceLayout,
    _as_layout,
    project_psd,
)

logger = logging.getLogger(__name__)

TRACE_PRESERVATION_TOL = 1e-10
KERNEL_RTOL = 1e-10
# full SVD is affordable below this vectorized dimension
_SVD_LIMIT = 1000


class NonUniqueSteadyStateError(RuntimeError):
    """The generator has more than one stationary state."""

    def __init__(self, kernel_dim: int):
        super().__init__(f"generator kernel has dimension {kernel_dim}, expected 1")
        self.kernel_dim = kernel_dim


class StepSizeError(FloatingPointError):
    """Integration produced non-finite values; reduce the step size."""


# --- superoperator primitives --------------------------------------------


def spre(a: np.ndarray) -> np.ndarray:
    """Superoperator of ``rho -> a rho``."""
    return np.kron(a, np.eye(a.shape[0]))


def spost(b: np.ndarray) -> np.ndarray:
    """Superoperator of ``rho -> rho b``."""
    return np.kron(np.eye(b.shape[0]), b.T)


def sprepost(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Superoperator of ``rho -> a rho b``."""
    return np.kron(a, b.T)


def commutator_super(h: np.ndarray) -> np.ndarray:
    """Superoperator of ``rho -> -i [h, rho]``."""
    return -1j * (spre(h) - spost(h))


def dissipator_super(a: np.ndarray) -> np.ndarray:
    """Superoperator of ``D[a] rho = a rho a^dag - {a^dag a, rho}/2``."""
    n = a.conj().T @ a
    return np.kron(a, a.conj()) - 0.5 * spre(n) - 0.5 * spost(n)


def cross_dissipator_super(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Superoperator of ``rho -> a rho b^dag - {b^dag a, rho}/2``."""
    n = b.conj().T @ a
    return np.kron(a, b.conj()) - 0.5 * spre(n) - 0.5 * spost(n)


def vec(rho: np.ndarray) -> np.ndarray:
    return np.asarray(rho).reshape(-1)


def unvec(v: np.ndarray) -> np.ndarray:
    d = int(round(np.sqrt(v.size)))
    return np.asarray(v).reshape(d, d)


def _mat(op) -> np.ndarray:
    return op.matrix if isinstance(op, (Operator, DensityOp)) else np.asarray(op, complex)


# --- generator containers ------------------------------------------------


@dataclass(frozen=True)
class GeneratorTerm:
    """One term of a master equation.

    ``kind="hamiltonian"`` contributes ``-i rate [H, rho]`` and requires a
    Hermitian operator; ``kind="dissipator"`` contributes ``rate D[A] rho``
    where the rate may be negative.
    """

    kind: str
    operator: Operator
    rate: float = 1.0

    def __post_init__(self):
        if self.kind not in ("hamiltonian", "dissipator"):
            raise ValueError(f"unknown term kind {self.kind!r}")
        if not isinstance(self.operator, Operator):
            raise TypeError("term operator must be an Operator")
        if self.kind == "hamiltonian" and not self.operator.is_hermitian(1e-12):
            raise ValueError("hamiltonian terms need a Hermitian operator")
        if not np.isfinite(self.rate) or np.iscomplexobj(self.rate) and np.imag(self.rate) != 0:
            raise ValueError(f"term rate must be a finite real number, got {self.rate}")
        object.__setattr__(self, "rate", float(np.real(self.rate)))

    def superop(self) -> np.ndarray:
        m = self.operator.matrix
        if self.kind == "hamiltonian":
            return self.rate * commutator_super(m)
        return self.rate * dissipator_super(m)


def hamiltonian(op: Operator, rate: float = 1.0) -> GeneratorTerm:
    return GeneratorTerm("hamiltonian", op, rate)


def dissipator(op: Operator, rate: float = 1.0) -> GeneratorTerm:
    return GeneratorTerm("dissipator", op, rate)


@dataclass(frozen=True, eq=False)
class Liouvillian:
    """Vectorized generator ``d^2 x d^2`` acting on row-major ``vec(rho)``.

    Trace preservation is checked on construction (relative to the matrix
    norm) unless ``check=False``.
    """

    layout: SpaceLayout
    matrix: np.ndarray
    check: bool = field(default=True, repr=False)

    def __post_init__(self):
        layout = _as_layout(self.layout)
        m = np.array(self.matrix, dtype=complex)
        d2 = layout.total ** 2
        if m.shape != (d2, d2):
            raise LayoutError(f"Liouvillian shape {m.shape} does not match layout {layout.dims}")
        m.setflags(write=False)
        object.__setattr__(self, "layout", layout)
        object.__setattr__(self, "matrix", m)
        if self.check:
            err = self.trace_defect()
            scale = max(1.0, float(np.max(np.abs(m), initial=0.0)))
            if err > TRACE_PRESERVATION_TOL * scale:
                raise ValueError(f"generator is not trace preserving (defect {err:.3e})")

    @property
    def dim(self) -> int:
        return self.layout.total

    def trace_defect(self) -> float:
        """``max |vec(I)^T L|``: zero for trace-preserving generators."""
        return float(np.max(np.abs(vec(np.eye(self.dim)) @ self.matrix), initial=0.0))

    def apply(self, rho) -> np.ndarray:
        return unvec(self.matrix @ vec(_mat(rho)))

    def __add__(self, other: "Liouvillian") -> "Liouvillian":
        if not isinstance(other, Liouvillian):
            return NotImplemented
        if other.layout != self.layout:
            raise LayoutError(f"layouts differ: {self.layout.dims} vs {other.layout.dims}")
        return Liouvillian(self.layout, self.matrix + other.matrix)

    def __sub__(self, other: "Liouvillian") -> "Liouvillian":
        return self + (-1.0) * other

    def __mul__(self, scalar: float) -> "Liouvillian":
        return Liouvillian(self.layout, self.matrix * scalar, check=False)

    __rmul__ = __mul__

    @classmethod
    def zero(cls, layout) -> "Liouvillian":
        layout = _as_layout(layout)
        return cls(layout, np.zeros((layout.total ** 2,) * 2))


def liouvillian_build(terms: Iterable[GeneratorTerm], layout=None) -> Liouvillian:
    """Sum the superoperators of ``terms``.

    ``layout`` is required only when ``terms`` is empty, in which case the
    zero generator on that layout is returned.

    Examples
    --------
    >>> from bellflow.qops import sigma_minus
    >>> L = liouvillian_build([dissipator(sigma_minus())])
    >>> L.apply(np.diag([0, 1])).real
    array([[ 1.,  0.],
           [ 0., -1.]])
    """
    terms = list(terms)
    if not terms:
        if layout is None:
            raise LayoutError("layout is required for an empty term list")
        return Liouvillian.zero(layout)
    lay = terms[0].operator.layout if layout is None else _as_layout(layout)
    for t in terms:
        if t.operator.layout != lay:
            raise LayoutError(f"term layout {t.operator.layout.dims} differs from {lay.dims}")
    total = sum(t.superop() for t in terms)
    return Liouvillian(lay, total)


def lindblad(h: Operator | None, jumps: Sequence[Operator] = (), rates: Sequence[float] | None = None,
             layout=None) -> Liouvillian:
    """Convenience wrapper: ``-i[h, .] + sum_k rate_k D[jump_k]``."""
    rates = [1.0] * len(jumps) if rates is None else list(rates)
    terms = [] if h is None else [hamiltonian(h)]
    terms += [dissipator(j, r) for j, r in zip(jumps, rates)]
    return liouvillian_build(terms, layout=layout)


# --- evolution -----------------------------------------------------------


def _rk4_steps(Lm: np.ndarray, v: np.ndarray, h: float, n: int) -> np.ndarray:
    for _ in range(n):
        k1 = Lm @ v
        k2 = Lm @ (v + 0.5 * h * k1)
        k3 = Lm @ (v + 0.5 * h * k2)
        k4 = Lm @ (v + h * k3)
        v = v + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(v)):
            raise StepSizeError("non-finite state during master-equation integration")
    return v


def _n_steps(t: float, dt: float) -> tuple[int, float]:
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if t < 0:
        raise ValueError(f"t must be non-negative, got {t}")
    if t == 0:
        return 0, dt
    n = int(np.ceil(t / dt - 1e-9))
    return n, t / n


def _to_density(layout, v: np.ndarray) -> DensityOp:
    rho = unvec(v)
    rho = 0.5 * (rho + rho.conj().T)
    tr = np.trace(rho).real
    if abs(tr - 1) > 1e-8:
        logger.warning("trace drifted to %.3e during evolution", tr)
    return DensityOp(layout, rho / tr, validate=False)


def evolve_me(L: Liouvillian, rho0: DensityOp, t: float, dt: float) -> DensityOp:
    """Integrate ``d rho/dt = L rho`` to time ``t`` with classical RK4.

    The step is shrunk to ``t / ceil(t/dt)`` so that the end point is hit
    exactly.

    Raises
    ------
    StepSizeError
        If the state becomes non-finite.
    """
    if rho0.layout != L.layout:
        raise LayoutError("state and generator layouts differ")
    n, h = _n_steps(t, dt)
    v = _rk4_steps(L.matrix, vec(rho0.matrix).astype(complex), h, n)
    return _to_density(L.layout, v)


def evolve_me_series(L: Liouvillian, rho0: DensityOp, times: Sequence[float], dt: float) -> list[DensityOp]:
    """States at each of the increasing ``times`` (starting from ``t=0``)."""
    times = np.asarray(times, float)
    if np.any(np.diff(times) < 0) or (times.size and times[0] < 0):
        raise ValueError("times must be non-negative and non-decreasing")
    out = []
    v = vec(rho0.matrix).astype(complex)
    t_prev = 0.0
    for t in times:
        n, h = _n_steps(t - t_prev, dt)
        v = _rk4_steps(L.matrix, v, h, n)
        out.append(_to_density(L.layout, v))
        t_prev = t
    return out


def propagator(L: Liouvillian, t: float) -> np.ndarray:
    """Exact ``expm(L t)``; intended for small reference problems."""
    return sla.expm(L.matrix * t)


# --- steady states -------------------------------------------------------


class SteadyStateResult(NamedTuple):
    state: DensityOp
    kernel_dim: int
    residual: float
    min_eigenvalue: float


def kernel_dimension(L: Liouvillian, rtol: float = KERNEL_RTOL) -> int:
    """Number of singular values of ``L`` below ``rtol`` times the largest."""
    s = sla.svdvals(L.matrix, check_finite=False)
    return int(np.sum(s <= rtol * s[0])) if s[0] > 0 else s.size


def steady_state_info(L: Liouvillian, check_kernel: bool = True) -> SteadyStateResult:
    """Stationary state of ``L`` plus diagnostics.

    The kernel vector is obtained by replacing one row of ``L`` with the
    trace functional and solving the resulting non-singular system.  When
    ``check_kernel`` is set the kernel dimension is counted from the
    singular values (relative threshold ``1e-10``) and a
    :class:`NonUniqueSteadyStateError` is raised if it exceeds one.

    Small negative eigenvalues produced by round-off are clipped; a breach
    of the ``-1e-9`` positivity tolerance is logged before projecting.
    """
    d = L.dim
    kdim = -1
    if check_kernel:
        kdim = kernel_dimension(L)
        if kdim > 1:
            raise NonUniqueSteadyStateError(kdim)
    A = np.array(L.matrix)
    tr_row = vec(np.eye(d)).astype(complex)
    A[0, :] = tr_row
    b = np.zeros(d * d, complex)
    b[0] = 1.0
    try:
        v = sla.solve(A, b, check_finite=False)
    except (sla.LinAlgError, ValueError) as exc:
        raise NonUniqueSteadyStateError(max(kdim, 2)) from exc
    if not np.all(np.isfinite(v)):
        raise NonUniqueSteadyStateError(max(kdim, 2))
    rho = unvec(v)
    rho = 0.5 * (rho + rho.conj().T)
    rho /= np.trace(rho).real
    emin = float(np.linalg.eigvalsh(rho)[0])
    if emin < -1e-9:
        logger.warning("steady state has eigenvalue %.3e; projecting onto PSD cone", emin)
        rho = project_psd(rho)
    residual = float(np.max(np.abs(L.matrix @ vec(rho))))
    return SteadyStateResult(DensityOp(L.layout, rho, validate=False), kdim, residual, emin)


def steady_state(L: Liouvillian, check_kernel: bool = True) -> DensityOp:
    """Unique stationary state of ``L`` (see :func:`steady_state_info`)."""
    return steady_state_info(L, check_kernel).state


# --- dissipator matrices -------------------------------------------------


@dataclass(frozen=True, eq=False)
class DissipatorMatrix:
    """Generator ``sum_ij Lambda_ij (R_i rho R_j^dag - {R_j^dag R_i, rho}/2)``."""

    basis: tuple[Operator, ...]
    Lambda: np.ndarray

    def __post_init__(self):
        basis = tuple(self.basis)
        lam = np.array(self.Lambda, dtype=complex)
        k = len(basis)
        if k == 0:
            raise ValueError("basis must be non-empty")
        if lam.shape != (k, k):
            raise ValueError(f"Lambda shape {lam.shape} does not match basis size {k}")
        if np.max(np.abs(lam - lam.conj().T)) > 1e-12 * max(1.0, np.max(np.abs(lam))):
            raise ValueError("Lambda must be Hermitian")
        lay = basis[0].layout
        if any(b.layout != lay for b in basis):
            raise LayoutError("basis operators must share a layout")
        lam.setflags(write=False)
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "Lambda", lam)

    @property
    def layout(self) -> SpaceLayout:
        return self.basis[0].layout


class DissipatorChannel(NamedTuple):
    rate: float
    jump: Operator
    vector: np.ndarray
    negative: bool


def dissipator_matrix_liouvillian(D: DissipatorMatrix) -> Liouvillian:
    """Vectorized form of the generator encoded by ``D``."""
    mats = [b.matrix for b in D.basis]
    total = 0
    for i, ri in enumerate(mats):
        for j, rj in enumerate(mats):
            lij = D.Lambda[i, j]
            if lij != 0:
                total = total + lij * cross_dissipator_super(ri, rj)
    if np.isscalar(total):
        return Liouvillian.zero(D.layout)
    return Liouvillian(D.layout, total)


def diagonalize_dissipator(D: DissipatorMatrix) -> list[DissipatorChannel]:
    """Eigen-decomposition of ``Lambda`` as rates and jump operators.

    Returns channels sorted by decreasing rate with
    ``J_k = sum_i v_k[i] R_i`` and ``v_k`` of unit norm, so that the
    generator equals ``sum_k rate_k D[J_k]``.  Negative rates are kept and
    flagged.
    """
    w, v = np.linalg.eigh(D.Lambda)
    order = np.argsort(w)[::-1]
    out = []
    for k in order:
        vk = v[:, k]
        # fix the global phase: largest component real and positive
        i = int(np.argmax(np.abs(vk)))
        vk = vk * np.exp(-1j * np.angle(vk[i]))
        jump = sum((c * b for c, b in zip(vk, D.basis)), start=0 * D.basis[0])
        rate = float(w[k])
        neg = rate < -1e-12
        if neg:
            logger.info("dissipator channel with negative rate %.4g", rate)
        out.append(DissipatorChannel(rate, jump, vk, neg))
    return out


class ExtractedDissipator(NamedTuple):
    matrix: DissipatorMatrix
    residual: float


def extract_dissipator_matrix(L: Liouvillian, basis: Sequence[Operator]) -> ExtractedDissipator:
    """Recover ``Lambda`` of the dissipative part of ``L`` over ``basis``.

    The generator's realigned (Choi-type) matrix is projected orthogonally
    to ``vec(I)`` on both sides, which removes Hamiltonian and anticommutator
    contributions; what remains is ``sum_ij Lambda_ij |R_i'>><<R_j'|`` with
    ``R_i'`` the traceless parts of the basis operators.  ``Lambda`` follows
    by pseudo-inversion.  ``residual`` is the largest entry of the part of
    the dissipative block not explained by the basis; it is small only when
    ``basis`` spans the jump operators of ``L``.
    """
    d = L.dim
    L4 = L.matrix.reshape(d, d, d, d)
    R = L4.transpose(0, 2, 1, 3).reshape(d * d, d * d)
    vI = vec(np.eye(d)) / np.sqrt(d)
    P = np.eye(d * d) - np.outer(vI, vI)
    X = P @ R @ P
    A = np.column_stack([P @ vec(b.matrix) for b in basis])
    Ap = np.linalg.pinv(A)
    lam = Ap @ X @ Ap.conj().T
    lam = 0.5 * (lam + lam.conj().T)
    residual = float(np.max(np.abs(X - A @ lam @ A.conj().T)))
    return ExtractedDissipator(DissipatorMatrix(tuple(basis), lam), residual)

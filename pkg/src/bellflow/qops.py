"""Dense operators and states on labeled composite Hilbert spaces.

Every object here is a thin immutable wrapper around a complex numpy
array plus the :class:`SpaceLayout` that says how the total space factors
into subsystems.  The heavy numerical code elsewhere in the package works
on raw arrays; the wrappers exist so that layouts travel with the data
and so that invariants (Hermiticity, unit trace, positivity) are checked
once, at construction.

Conventions
-----------
* Two-level systems use the computational basis ``|0>, |1>`` with ``|0>``
  the lower level: ``sigma_plus = |1><0|`` raises, ``sigma_minus = |0><1|``
  lowers.  ``sigma_z`` is the Pauli matrix ``diag(1, -1)``.
* Bosonic quadratures are ``x = (c + c^dag)/sqrt(2)`` and
  ``p = -i (c - c^dag)/sqrt(2)``, so ``[x, p] = i`` and ``c = (x + i p)/sqrt(2)``.
  This is the sign that makes a quadrature-feedback jump operator reduce
  to ``c`` for vacuum input, i.e. the one under which the vacuum is the
  fixed point of continuous teleportation.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from functools import reduce
from math import lgamma
from typing import NamedTuple, Sequence

import numpy as np

logger = logging.getLogger(__name__)

HERMITIAN_TOL = 1e-10
TRACE_TOL = 1e-10
POSITIVITY_TOL = -1e-9
KET_NORM_TOL = 1e-12


class LayoutError(ValueError):
    """Raised when operator or state dimensions disagree with a layout."""


class TruncationWarning(UserWarning):
    """Emitted when a Fock-truncated mode is populated close to its cutoff."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SpaceLayout:
    """Ordered subsystem dimensions of a tensor-product Hilbert space."""

    dims: tuple[int, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in np.atleast_1d(self.dims))
        if len(dims) == 0:
            raise LayoutError("a layout needs at least one subsystem")
        if any(d < 1 for d in dims):
            raise LayoutError(f"subsystem dimensions must be positive, got {dims}")
        object.__setattr__(self, "dims", dims)

    @property
    def total(self) -> int:
        return int(np.prod(self.dims))

    def __len__(self) -> int:
        return len(self.dims)

    def check_index(self, index: int) -> int:
        if not -len(self.dims) <= index < len(self.dims):
            raise LayoutError(f"subsystem index {index} out of range for {self.dims}")
        return index % len(self.dims)


def _as_layout(layout) -> SpaceLayout:
    if isinstance(layout, SpaceLayout):
        return layout
    return SpaceLayout(tuple(np.atleast_1d(layout)))


@dataclass(frozen=True, eq=False)
class Operator:
    """A square complex matrix acting on ``layout``."""

    layout: SpaceLayout
    matrix: np.ndarray

    def __post_init__(self):
        layout = _as_layout(self.layout)
        m = _frozen(self.matrix)
        if m.shape != (layout.total, layout.total):
            raise LayoutError(
                f"matrix shape {m.shape} does not match layout {layout.dims}"
            )
        object.__setattr__(self, "layout", layout)
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.layout.total

    def dag(self) -> "Operator":
        return Operator(self.layout, self.matrix.conj().T)

    def is_hermitian(self, tol: float = HERMITIAN_TOL) -> bool:
        return bool(np.max(np.abs(self.matrix - self.matrix.conj().T), initial=0.0) <= tol)

    def expect(self, rho: "DensityOp | np.ndarray") -> complex:
        r = rho.matrix if isinstance(rho, DensityOp) else np.asarray(rho)
        return complex(np.trace(self.matrix @ r))

    def _coerce(self, other) -> np.ndarray:
        if isinstance(other, Operator):
            if other.layout != self.layout:
                raise LayoutError(f"layouts differ: {self.layout.dims} vs {other.layout.dims}")
            return other.matrix
        return np.asarray(other)

    def __add__(self, other):
        return Operator(self.layout, self.matrix + self._coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        return Operator(self.layout, self.matrix - self._coerce(other))

    def __rsub__(self, other):
        return Operator(self.layout, self._coerce(other) - self.matrix)

    def __neg__(self):
        return Operator(self.layout, -self.matrix)

    def __mul__(self, scalar):
        if isinstance(scalar, Operator):
            raise TypeError("use @ for operator products")
        return Operator(self.layout, self.matrix * complex(scalar))

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return Operator(self.layout, self.matrix / complex(scalar))

    def __matmul__(self, other):
        if isinstance(other, Operator):
            return Operator(self.layout, self.matrix @ self._coerce(other))
        if isinstance(other, Ket):
            return Ket(self.layout, self.matrix @ other.amplitudes, normalize=False)
        return self.matrix @ np.asarray(other)

    def __repr__(self):
        return f"Operator(dims={self.layout.dims})"


@dataclass(frozen=True, eq=False)
class Ket:
    """State vector; normalized on construction unless ``normalize=False``."""

    layout: SpaceLayout
    amplitudes: np.ndarray
    normalize: bool = True

    def __post_init__(self):
        layout = _as_layout(self.layout)
        v = np.array(self.amplitudes, dtype=complex).reshape(-1)
        if v.shape != (layout.total,):
            raise LayoutError(f"ket length {v.size} does not match layout {layout.dims}")
        if self.normalize:
            n = np.linalg.norm(v)
            if n == 0:
                raise ValueError("cannot normalize the zero vector")
            v = v / n
        object.__setattr__(self, "layout", layout)
        object.__setattr__(self, "amplitudes", _frozen(v))

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self) -> "Ket":
        return Ket(self.layout, self.amplitudes)

    def projector(self) -> "DensityOp":
        v = self.amplitudes / np.linalg.norm(self.amplitudes)
        return DensityOp(self.layout, np.outer(v, v.conj()))


@dataclass(frozen=True, eq=False)
class DensityOp:
    """Density operator.  Hermiticity, unit trace and positivity are checked.

    Pass ``validate=False`` only for intermediate objects that are known to
    be valid up to rounding (the integrators do this after their own
    checks).
    """

    layout: SpaceLayout
    matrix: np.ndarray
    validate: bool = True

    def __post_init__(self):
        layout = _as_layout(self.layout)
        m = np.array(self.matrix, dtype=complex)
        if m.shape != (layout.total, layout.total):
            raise LayoutError(f"matrix shape {m.shape} does not match layout {layout.dims}")
        if self.validate:
            herm = np.max(np.abs(m - m.conj().T), initial=0.0)
            if herm > HERMITIAN_TOL:
                raise ValueError(f"density operator not Hermitian (deviation {herm:.2e})")
            tr = np.trace(m)
            if abs(tr - 1) > TRACE_TOL:
                raise ValueError(f"density operator trace {tr:.12g} != 1")
            m = 0.5 * (m + m.conj().T)
            emin = np.linalg.eigvalsh(m)[0]
            if emin < POSITIVITY_TOL:
                raise ValueError(f"density operator has eigenvalue {emin:.3e} < 0")
        object.__setattr__(self, "layout", layout)
        object.__setattr__(self, "matrix", _frozen(m))

    @property
    def dim(self) -> int:
        return self.layout.total

    def purity(self) -> float:
        return float(np.real(np.vdot(self.matrix, self.matrix)))

    def expect(self, op: Operator | np.ndarray) -> complex:
        a = np.asarray(getattr(op, "matrix", op))
        return complex(np.trace(a @ self.matrix))

    @classmethod
    def from_ket(cls, ket: Ket) -> "DensityOp":
        return ket.projector()

    @classmethod
    def maximally_mixed(cls, layout) -> "DensityOp":
        layout = _as_layout(layout)
        return cls(layout, np.eye(layout.total) / layout.total)

    @classmethod
    def basis(cls, layout, index: int) -> "DensityOp":
        layout = _as_layout(layout)
        m = np.zeros((layout.total, layout.total), complex)
        m[index, index] = 1.0
        return cls(layout, m)

    def __repr__(self):
        return f"DensityOp(dims={self.layout.dims})"


# --- construction --------------------------------------------------------


def identity(layout) -> Operator:
    layout = _as_layout(layout)
    return Operator(layout, np.eye(layout.total))


def compose(ops: Sequence, layout=None) -> Operator:
    """Kronecker product of one operator per subsystem, in layout order.

    ``None`` entries are replaced by the identity of that subsystem; this
    requires ``layout`` to be given.  Entries may be :class:`Operator` or
    plain arrays.

    >>> compose([sigma_z(), None], layout=(2, 2)).matrix.real.diagonal()
    array([ 1.,  1., -1., -1.])
    """
    if layout is None:
        if any(o is None for o in ops):
            raise LayoutError("a layout is required when identities are implied")
        mats = [o.matrix if isinstance(o, Operator) else np.asarray(o, complex) for o in ops]
        layout = SpaceLayout(tuple(m.shape[0] for m in mats))
    else:
        layout = _as_layout(layout)
        if len(ops) != len(layout.dims):
            raise LayoutError(f"need {len(layout.dims)} factors, got {len(ops)}")
        mats = []
        for o, d in zip(ops, layout.dims):
            if o is None:
                mats.append(np.eye(d, dtype=complex))
                continue
            m = o.matrix if isinstance(o, Operator) else np.asarray(o, complex)
            if m.shape != (d, d):
                raise LayoutError(f"factor of shape {m.shape} placed on a dimension-{d} slot")
            mats.append(m)
    for m in mats:
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise LayoutError("factors must be square matrices")
    return Operator(layout, reduce(np.kron, mats))


def embed(op, index: int, layout) -> Operator:
    """Place a single-subsystem operator at ``index`` of ``layout``."""
    layout = _as_layout(layout)
    index = layout.check_index(index)
    ops = [None] * len(layout.dims)
    ops[index] = op
    return compose(ops, layout)


def sigma_x() -> Operator:
    return Operator((2,), [[0, 1], [1, 0]])


def sigma_y() -> Operator:
    return Operator((2,), [[0, -1j], [1j, 0]])


def sigma_z() -> Operator:
    return Operator((2,), [[1, 0], [0, -1]])


def sigma_plus() -> Operator:
    """Raising operator ``|1><0|``."""
    return Operator((2,), [[0, 0], [1, 0]])


def sigma_minus() -> Operator:
    """Lowering operator ``|0><1|``."""
    return Operator((2,), [[0, 1], [0, 0]])


def annihilation(fock_dim: int) -> Operator:
    """Truncated bosonic annihilation operator on ``fock_dim`` levels."""
    if fock_dim < 2:
        raise LayoutError(f"fock_dim must be at least 2, got {fock_dim}")
    return Operator((fock_dim,), np.diag(np.sqrt(np.arange(1, fock_dim)), 1))


def quadratures(fock_dim: int) -> tuple[Operator, Operator]:
    """``(x, p)`` with ``x = (c + c^dag)/sqrt 2`` and ``p = -i(c - c^dag)/sqrt 2``."""
    c = annihilation(fock_dim).matrix
    cd = c.conj().T
    x = (c + cd) / np.sqrt(2)
    p = -1j * (c - cd) / np.sqrt(2)
    return Operator((fock_dim,), x), Operator((fock_dim,), p)


def fock_ket(fock_dim: int, n: int) -> Ket:
    v = np.zeros(fock_dim, complex)
    v[n] = 1.0
    return Ket((fock_dim,), v)


def thermal_state(fock_dim: int, nbar: float) -> DensityOp:
    """Truncated Bose-Einstein state, renormalized on the kept levels."""
    if nbar == 0:
        return fock_ket(fock_dim, 0).projector()
    q = nbar / (nbar + 1.0)
    pops = q ** np.arange(fock_dim)
    return DensityOp((fock_dim,), np.diag(pops / pops.sum()))


def squeezed_vacuum(fock_dim: int, r: float, phase: float = 0.0) -> Ket:
    """Squeezed vacuum with ``<c^2> = e^{i phase} sinh(r) cosh(r)``, truncated.

    Built from the exact number-state expansion.  For ``phase = 0`` the
    ``p`` quadrature is squeezed to variance ``exp(-2 r)/2``.
    """
    amps = np.zeros(fock_dim, complex)
    t = np.tanh(r)
    for m in range(0, (fock_dim + 1) // 2):
        n = 2 * m
        if n >= fock_dim:
            break
        # sqrt((2m)!)/(2^m m!) evaluated in log space
        logc = 0.5 * lgamma(n + 1) - m * np.log(2) - lgamma(m + 1)
        amps[n] = (np.exp(1j * phase) * t) ** m * np.exp(logc)
    return Ket((fock_dim,), amps / np.sqrt(np.cosh(r)))




# --- entanglement and state metrics --------------------------------------


def partial_transpose(rho: DensityOp | np.ndarray, subsystem: int, layout=None) -> np.ndarray:
    """Transpose the indices of one tensor factor."""
    if isinstance(rho, DensityOp):
        layout, m = rho.layout, rho.matrix
    else:
        if layout is None:
            raise LayoutError("a layout is required for raw matrices")
        layout, m = _as_layout(layout), np.asarray(rho)
    k = layout.check_index(subsystem)
    dims = layout.dims
    n = len(dims)
    t = m.reshape(dims + dims)
    axes = list(range(2 * n))
    axes[k], axes[n + k] = axes[n + k], axes[k]
    return t.transpose(axes).reshape(layout.total, layout.total)


def log_negativity(rho: DensityOp, cut: int = 0) -> float:
    """Base-2 logarithmic negativity across a bipartite layout.

    Values below rounding level are clipped to zero so that separable
    states report exactly ``0.0``.
    """
    if len(rho.layout.dims) != 2:
        raise LayoutError(f"log-negativity needs a bipartite layout, got {rho.layout.dims}")
    pt = partial_transpose(rho, cut)
    pt = 0.5 * (pt + pt.conj().T)
    tn = float(np.sum(np.abs(np.linalg.eigvalsh(pt))))
    return max(0.0, float(np.log2(tn))) if tn > 1 + 1e-13 else 0.0


def _mode_ops(layout: SpaceLayout, mode: int):
    mode = layout.check_index(mode)
    c = embed(annihilation(layout.dims[mode]), mode, layout).matrix
    return c


def quadrature_covariance(rho: DensityOp, mode: int = 0) -> np.ndarray:
    """Symmetrized covariance matrix of ``(x, p)`` for one bosonic mode.

    The vacuum gives ``diag(1/2, 1/2)``.  A :class:`TruncationWarning` is
    raised when the mean occupation comes within 3 of the cutoff.
    """
    layout = rho.layout
    mode = layout.check_index(mode)
    d = layout.dims[mode]
    if d < 2:
        raise LayoutError("mode must be Fock-truncated with dimension >= 2")
    c = _mode_ops(layout, mode)
    cd = c.conj().T
    x = (c + cd) / np.sqrt(2)
    p = -1j * (c - cd) / np.sqrt(2)
    r = rho.matrix
    nbar = float(np.real(np.trace(cd @ c @ r)))
    if d - 1 - nbar < 3:
        warnings.warn(
            f"mean occupation {nbar:.2f} within 3 of the Fock cutoff {d - 1}",
            TruncationWarning,
            stacklevel=2,
        )
    ops = (x, p)
    means = [np.real(np.trace(o @ r)) for o in ops]
    cov = np.empty((2, 2))
    for i, a in enumerate(ops):
        for j, b in enumerate(ops):
            cov[i, j] = np.real(np.trace((a @ b + b @ a) @ r)) / 2 - means[i] * means[j]
    return cov


def fock_tail_population(rho: DensityOp, mode: int = 0, levels: int = 3) -> float:
    """Population of the top ``levels`` Fock states of ``mode``."""
    red = reduced_state(rho, mode).matrix
    return float(np.real(np.diag(red))[-levels:].sum())


def _reduce(t, layout, mode):
    n = len(layout.dims)
    letters = "abcdefghijklmnop"
    row = list(letters[:n])
    col = list(letters[:n])
    col[mode] = "z"
    expr = "".join(row) + "".join(col) + "->" + row[mode] + "z"
    return np.einsum(expr, t)


def reduced_state(rho: DensityOp, keep: int) -> DensityOp:
    """Partial trace onto a single subsystem."""
    keep = rho.layout.check_index(keep)
    t = rho.matrix.reshape(rho.layout.dims + rho.layout.dims)
    red = _reduce(t, rho.layout, keep)
    return DensityOp((rho.layout.dims[keep],), red, validate=False)


class StateMetrics(NamedTuple):
    fidelity: float
    trace_distance: float
    purity_a: float


def fidelity(a: DensityOp, b: DensityOp) -> float:
    """Uhlmann fidelity ``(tr sqrt(sqrt(a) b sqrt(a)))**2``."""
    if a.layout != b.layout:
        raise LayoutError(f"layouts differ: {a.layout.dims} vs {b.layout.dims}")
    w, v = np.linalg.eigh(a.matrix)
    sa = (v * np.sqrt(np.clip(w, 0, None))) @ v.conj().T
    ev = np.linalg.eigvalsh(sa @ b.matrix @ sa)
    f = float(np.sum(np.sqrt(np.clip(ev, 0, None))) ** 2)
    return min(max(f, 0.0), 1.0)


def trace_distance(a: DensityOp | np.ndarray, b: DensityOp | np.ndarray) -> float:
    am = a.matrix if isinstance(a, DensityOp) else np.asarray(a)
    bm = b.matrix if isinstance(b, DensityOp) else np.asarray(b)
    diff = am - bm
    diff = 0.5 * (diff + diff.conj().T)
    return float(0.5 * np.sum(np.abs(np.linalg.eigvalsh(diff))))


def state_metrics(a: DensityOp, b: DensityOp) -> StateMetrics:
    if a.layout != b.layout:
        raise LayoutError(f"layouts differ: {a.layout.dims} vs {b.layout.dims}")
    return StateMetrics(fidelity(a, b), min(trace_distance(a, b), 1.0), a.purity())


def project_psd(m: np.ndarray) -> np.ndarray:
    """Nearest unit-trace PSD matrix (eigenvalue clipping)."""
    m = 0.5 * (m + m.conj().T)
    w, v = np.linalg.eigh(m)
    w = np.clip(w, 0, None)
    out = (v * w) @ v.conj().T
    return out / np.trace(out).real

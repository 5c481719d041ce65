"""Continuous entanglement swapping between two two-level systems.

Each qubit couples to its own field through

    s1 = sqrt(z(1+z)) sigma1+ + sqrt(1-z) sigma1-,
    s2 = sqrt(z(1+z)) sigma2+ - sqrt(1-z) sigma2-,

and the sum and difference quadratures of the two output fields are
measured jointly.  Feeding the currents back with

    F+ = G+ sy1 + G- sy2,    F- = G- sx1 - G+ sx2,
    G± = sqrt(z/(1+z)) ± z/sqrt(1-z),    sy = i(sigma- - sigma+),

annihilates ``|Phi> ∝ |00> - z|11>`` with both jump operators and with
the effective Hamiltonian, so the two qubits are driven into that
entangled state.  With detection efficiency
``eta < 1`` the feedback adds noise and the gains can be re-optimized.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
import scipy.linalg as sla
from scipy.optimize import minimize

from ..feedback import FeedbackSpec, swap_feedback_liouvillian
from ..master import Liouvillian, steady_state_info
from ..qops import (
    DensityOp,
    Ket,
    Operator,
    embed,
    fidelity,
    log_negativity,
    partial_transpose,
    sigma_minus,
    sigma_plus,
    sigma_x,
)

logger = logging.getLogger(__name__)

LAYOUT = (2, 2)
DEFAULT_BOX = (-4.0, 4.0)


def sigma_y_tls() -> Operator:
    """``i(sigma- - sigma+)``, the y-generator paired with ``s1``, ``s2``."""
    return 1j * (sigma_minus() - sigma_plus())


def formula_gains(z: float) -> tuple[float, float]:
    """Gains ``(G+, G-)`` that make ``|Phi(z)>`` dark; requires ``0 <= z < 1``."""
    if not 0 <= z < 1:
        raise ValueError(f"formula gains need 0 <= z < 1, got {z}")
    a = np.sqrt(z / (1 + z))
    b = z / np.sqrt(1 - z)
    return float(a + b), float(a - b)


@dataclass(frozen=True)
class TlsSwapParams:
    """Coupling parameter ``z``, feedback gains and detection efficiency.

    Gains left as ``None`` take the dark-state formula values.
    """

    z: float
    G_plus: float | None = None
    G_minus: float | None = None
    eta: float = 1.0

    def __post_init__(self):
        z = float(self.z)
        if not 0 <= z < 1:
            raise ValueError(f"z must lie in [0, 1), got {z}")
        if not 0 < self.eta <= 1:
            raise ValueError(f"eta must lie in (0, 1], got {self.eta}")
        gp, gm = formula_gains(z)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "G_plus", gp if self.G_plus is None else float(self.G_plus))
        object.__setattr__(self, "G_minus", gm if self.G_minus is None else float(self.G_minus))
        object.__setattr__(self, "eta", float(self.eta))


class TlsSwapModel(NamedTuple):
    params: TlsSwapParams
    s1: Operator
    s2: Operator
    feedback: FeedbackSpec
    dark_state: Ket
    j1: Operator
    j2: Operator


def couplings(z: float) -> tuple[Operator, Operator]:
    sp, sm = sigma_plus(), sigma_minus()
    a, b = np.sqrt(z * (1 + z)), np.sqrt(1 - z)
    s1 = a * embed(sp, 0, LAYOUT) + b * embed(sm, 0, LAYOUT)
    s2 = a * embed(sp, 1, LAYOUT) - b * embed(sm, 1, LAYOUT)
    return s1, s2


def feedback_operators(G_plus: float, G_minus: float) -> FeedbackSpec:
    sy, sx = sigma_y_tls(), sigma_x()
    Fp = G_plus * embed(sy, 0, LAYOUT) + G_minus * embed(sy, 1, LAYOUT)
    Fm = G_minus * embed(sx, 0, LAYOUT) - G_plus * embed(sx, 1, LAYOUT)
    return FeedbackSpec(Fp, Fm, (G_plus, G_minus))


def dark_state(z: float) -> Ket:
    return Ket(LAYOUT, [1.0, 0.0, 0.0, -z])


def tls_swap_model(p: TlsSwapParams) -> TlsSwapModel:
    """Operators of the two-qubit swapping protocol for ``p``."""
    s1, s2 = couplings(p.z)
    sp, sm = sigma_plus(), sigma_minus()
    j1 = embed(sm, 0, LAYOUT) + p.z * embed(sp, 1, LAYOUT)
    j2 = embed(sm, 1, LAYOUT) + p.z * embed(sp, 0, LAYOUT)
    return TlsSwapModel(p, s1, s2, feedback_operators(p.G_plus, p.G_minus), dark_state(p.z), j1, j2)


def swap_liouvillian(p: TlsSwapParams) -> Liouvillian:
    m = tls_swap_model(p)
    return swap_feedback_liouvillian(None, None, m.s1, m.s2, m.feedback, p.eta)


class SwapResult(NamedTuple):
    state: DensityOp
    log_negativity: float
    fidelity: float
    purity: float
    kernel_dim: int


def swap_steady_state(p: TlsSwapParams, check_kernel: bool = True) -> SwapResult:
    """Stationary two-qubit state, its entanglement and overlap with ``|Phi(z)>``."""
    info = steady_state_info(swap_liouvillian(p), check_kernel=check_kernel)
    rho = info.state
    return SwapResult(rho, log_negativity(rho), fidelity(rho, dark_state(p.z).projector()),
                      rho.purity(), info.kernel_dim)


class _QuadraticGenerator:
    """``L(G+, G-)`` for fixed ``(z, eta)``, stored as its quadratic expansion."""

    def __init__(self, z: float, eta: float):
        def build(gp, gm):
            return swap_liouvillian(TlsSwapParams(z, gp, gm, eta)).matrix

        L00 = build(0, 0)
        Lp, Lpm = build(1, 0), build(-1, 0)
        Lm, Lmm = build(0, 1), build(0, -1)
        L11 = build(1, 1)
        self.c0 = L00
        self.cp = 0.5 * (Lp - Lpm)
        self.cpp = 0.5 * (Lp + Lpm) - L00
        self.cm = 0.5 * (Lm - Lmm)
        self.cmm = 0.5 * (Lm + Lmm) - L00
        self.cpm = L11 - L00 - self.cp - self.cm - self.cpp - self.cmm
        self._b = np.zeros(16, complex)
        self._b[0] = 1.0
        self._trace_row = np.eye(4).reshape(-1).astype(complex)

    def matrix(self, gp: float, gm: float) -> np.ndarray:
        return (self.c0 + gp * self.cp + gm * self.cm + gp * gp * self.cpp
                + gm * gm * self.cmm + gp * gm * self.cpm)

    def steady(self, gp: float, gm: float) -> np.ndarray | None:
        A = self.matrix(gp, gm)
        A[0, :] = self._trace_row
        try:
            v = sla.solve(A, self._b, check_finite=False)
        except (sla.LinAlgError, ValueError):
            return None
        if not np.all(np.isfinite(v)):
            return None
        rho = v.reshape(4, 4)
        rho = 0.5 * (rho + rho.conj().T)
        return rho / np.trace(rho).real

    def pt_spectrum(self, gp: float, gm: float) -> np.ndarray | None:
        rho = self.steady(gp, gm)
        if rho is None:
            return None
        pt = partial_transpose(rho, 0, LAYOUT)
        return np.linalg.eigvalsh(0.5 * (pt + pt.conj().T))

    def log_negativity(self, gp: float, gm: float) -> float:
        ev = self.pt_spectrum(gp, gm)
        if ev is None:
            return 0.0
        tn = float(np.sum(np.abs(ev)))
        return max(0.0, float(np.log2(tn))) if tn > 1 + 1e-13 else 0.0

    def objective(self, g: Sequence[float]) -> float:
        """``-E_N`` when entangled, else the smallest partial-transpose eigenvalue.

        The second branch is positive and shrinks toward the entanglement
        boundary, so the search is not stranded on the flat separable region.
        """
        ev = self.pt_spectrum(g[0], g[1])
        if ev is None:
            return 1.0
        tn = float(np.sum(np.abs(ev)))
        if tn > 1 + 1e-13:
            return -float(np.log2(tn))
        return float(ev[0])


class GainOptimum(NamedTuple):
    G_plus: float
    G_minus: float
    log_negativity: float
    formula_log_negativity: float
    converged: bool
    n_evals: int


def optimize_gains(z: float, eta: float, box: tuple[float, float] = DEFAULT_BOX, grid: int = 21,
                   maxiter: int = 200, tol: float = 1e-6, starts: int = 3) -> GainOptimum:
    """Maximize the steady-state log-negativity over ``(G+, G-)``.

    A ``grid x grid`` scan over ``box`` is followed by bounded Nelder-Mead
    refinements (iteration cap ``maxiter``, tolerance ``tol``) from the
    best ``starts`` grid points and from the formula gains.  The search is
    deterministic.  The result is never worse than the formula gains.
    """
    if not 0 < eta <= 1:
        raise ValueError(f"eta must lie in (0, 1], got {eta}")
    gen = _QuadraticGenerator(z, eta)
    lo, hi = box
    axis = np.linspace(lo, hi, grid)
    vals = np.array([[gen.objective((gp, gm)) for gm in axis] for gp in axis])
    n_evals = vals.size
    order = np.argsort(vals, axis=None, kind="stable")[:starts]
    seeds = [(axis[k // grid], axis[k % grid]) for k in order]
    fgp, fgm = formula_gains(z)
    seeds.append((fgp, fgm))
    formula_val = gen.objective((fgp, fgm))
    best_x, best_f = (fgp, fgm), formula_val
    converged = True
    for x0 in seeds:
        inside = lo <= x0[0] <= hi and lo <= x0[1] <= hi
        res = minimize(
            gen.objective,
            np.asarray(x0, float),
            method="Nelder-Mead",
            bounds=[box, box] if inside else None,
            options={"maxiter": maxiter, "xatol": tol, "fatol": tol},
        )
        n_evals += res.nfev
        if res.fun < best_f:
            best_x, best_f = tuple(res.x), float(res.fun)
            converged = bool(res.success)
    if not converged:
        warnings.warn(f"gain refinement did not converge at z={z}, eta={eta}", RuntimeWarning, stacklevel=2)
    e_best = gen.log_negativity(*best_x)
    e_formula = gen.log_negativity(fgp, fgm)
    if e_formula > e_best:
        best_x, e_best = (fgp, fgm), e_formula
    return GainOptimum(float(best_x[0]), float(best_x[1]), e_best, e_formula, converged, int(n_evals))


class SurfaceCell(NamedTuple):
    z: float
    eta: float
    formula: tuple[float, float, float, float]
    optimized: GainOptimum


def swap_cell(z: float, eta: float, box=DEFAULT_BOX, grid: int = 21) -> SurfaceCell:
    """Formula-gain steady state ``(G+, G-, E_N, fidelity)`` and the optimum at one cell."""
    gp, gm = formula_gains(z)
    res = swap_steady_state(TlsSwapParams(z, gp, gm, eta), check_kernel=False)
    opt = optimize_gains(z, eta, box=box, grid=grid)
    return SurfaceCell(z, eta, (gp, gm, res.log_negativity, res.fidelity), opt)


def swap_surface(z_grid: Sequence[float], eta_grid: Sequence[float], box=DEFAULT_BOX, grid: int = 21,
                 workers: int = 1) -> list[SurfaceCell]:
    """Cells over ``eta_grid x z_grid`` in row-major order (eta outer)."""
    from ..parallel import ordered_map

    tasks = [(float(z), float(e), tuple(box), int(grid)) for e in eta_grid for z in z_grid]
    return ordered_map(_cell_task, tasks, workers)


def _cell_task(args) -> SurfaceCell:
    return swap_cell(*args)

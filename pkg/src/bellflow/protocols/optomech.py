"""Teleporting squeezed light onto a mechanical oscillator.

A cavity driven on the blue sideband (``Delta_c = -omega_m``) couples to a
mechanical mode through ``g (c_m c_c + h.c.)``.  Eliminating the fast
cavity (``g << kappa``) leaves the mechanics coupled to the output field
through ``s = -i g sqrt(kappa) eta_+ c_m^dag`` with rate
``Gamma = |s|^2 = 2 g^2 Re(eta_+)`` (``4 g^2 / kappa`` on resonance), plus
passive heating/cooling rates

    gamma_- = gamma (nbar + 1) + 2 g^2 Re(eta_-),
    gamma_+ = gamma nbar + 2 g^2 Re(eta_+),
    eta_± = 1 / (kappa/2 + i (Delta_c ± omega_m)).

The off-resonant sideband enters through
``epsilon = 1 / (1 + (4 omega_m / kappa)^2)``.  With teleportation feedback
applied to the mechanics, the stationary state is Gaussian and squeezed
once the cooperativity ``C = Gamma / (gamma (nbar + 1))`` exceeds a
threshold that tends to ``1 / (sqrt(N (N+1)) - N)`` for a hot bath.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.optimize import brentq

from ..feedback import FeedbackSpec, teleport_feedback_terms
from ..master import DissipatorMatrix, Liouvillian, dissipator, liouvillian_build
from ..noise import SqueezingSpec, critical_cooperativity, db_from_variance, noise_covariance
from ..qops import Operator, annihilation, compose, quadratures
from ..sme import SMEModel, teleport_sme_model
from .gaussian import GaussianModel

logger = logging.getLogger(__name__)

LAMBDA_C = 0.5 * np.array([[1, -1j], [1j, 1]])       # D[c] over (x, p)
LAMBDA_CDAG = 0.5 * np.array([[1, 1j], [-1j, 1]])    # D[c^dag] over (x, p)


@dataclass(frozen=True)
class OMParams:
    """Optomechanical parameters (angular frequencies share one unit).

    ``delta_c`` defaults to the blue sideband ``-omega_m``.
    """

    g: float
    kappa: float
    gamma: float
    omega_m: float
    nbar: float = 0.0
    sq: SqueezingSpec = field(default_factory=SqueezingSpec.vacuum)
    delta_c: float | None = None

    def __post_init__(self):
        for name in ("g", "gamma", "nbar"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        for name in ("kappa", "omega_m"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.delta_c is None:
            object.__setattr__(self, "delta_c", -float(self.omega_m))
        if self.g > 0.1 * self.kappa:
            warnings.warn(f"g/kappa = {self.g / self.kappa:.3g} exceeds 0.1; cavity elimination is marginal",
                          RuntimeWarning, stacklevel=2)


class AdiabaticDerived(NamedTuple):
    eta_plus: complex
    eta_minus: complex
    gamma_plus: float
    gamma_minus: float
    epsilon: float
    Gamma: float
    C: float
    C_crit: float


def om_adiabatic_params(p: OMParams) -> AdiabaticDerived:
    """Effective rates of the mechanics after eliminating the cavity."""
    eta_p = 1.0 / (p.kappa / 2 + 1j * (p.delta_c + p.omega_m))
    eta_m = 1.0 / (p.kappa / 2 + 1j * (p.delta_c - p.omega_m))
    Gamma = 2 * p.g ** 2 * eta_p.real
    gamma_m = p.gamma * (p.nbar + 1) + 2 * p.g ** 2 * eta_m.real
    gamma_p = p.gamma * p.nbar + Gamma
    eps = 1.0 / (1.0 + (4 * p.omega_m / p.kappa) ** 2)
    C = Gamma / (p.gamma * (p.nbar + 1)) if p.gamma > 0 else np.inf
    return AdiabaticDerived(complex(eta_p), complex(eta_m), float(gamma_p), float(gamma_m), float(eps),
                            float(Gamma), float(C), critical_cooperativity(p.sq.N))


def om_params_from_cooperativity(C: float, nbar: float, kappa_over_omega: float, sq: SqueezingSpec,
                                 kappa: float = 1.0, g_over_kappa: float = 0.05) -> OMParams:
    """Parameters realizing cooperativity ``C`` on the blue sideband.

    The coupling is fixed at ``g = g_over_kappa * kappa`` and the mechanical
    linewidth is chosen to give ``C``; ``C = inf`` means ``gamma = 0``.
    """
    g = g_over_kappa * kappa
    Gamma = 4 * g ** 2 / kappa
    gamma = 0.0 if np.isinf(C) else Gamma / (C * (nbar + 1))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return OMParams(g, kappa, gamma, kappa / kappa_over_omega, nbar, sq)


def _coupling_coefficient(p: OMParams) -> complex:
    eta_p = 1.0 / (p.kappa / 2 + 1j * (p.delta_c + p.omega_m))
    return -1j * p.g * np.sqrt(p.kappa) * eta_p


def mechanical_operators(p: OMParams, fock_dim: int):
    """``(c, s, feedback)`` with ``F+ = i(s^dag - s)`` and ``F- = s + s^dag``."""
    c = annihilation(fock_dim)
    s = _coupling_coefficient(p) * c.dag()
    fb = FeedbackSpec(1j * (s.dag() - s), s + s.dag())
    return c, s, fb


def _thermal_terms(p: OMParams, c: Operator, extra_cooling: float = 0.0):
    terms = []
    if p.gamma * (p.nbar + 1) + extra_cooling > 0:
        terms.append(dissipator(c, p.gamma * (p.nbar + 1) + extra_cooling))
    if p.gamma * p.nbar > 0:
        terms.append(dissipator(c.dag(), p.gamma * p.nbar))
    return terms


def om_sme_model(p: OMParams, fock_dim: int = 30) -> SMEModel:
    """Conditional dynamics of the mechanics under the Bell measurement.

    The unconditional part is ``gamma_- D[c] + gamma_+ D[c^dag]``; the two
    currents probe ``s = -i g sqrt(kappa) eta_+ c^dag``.
    """
    d = om_adiabatic_params(p)
    c, s, _ = mechanical_operators(p, fock_dim)
    extra = _thermal_terms(p, c, 2 * p.g ** 2 * d.eta_minus.real)
    return teleport_sme_model(s, p.sq, extra_terms=extra)


def om_feedback_me(p: OMParams, fock_dim: int = 30) -> Liouvillian:
    """Mechanical feedback master equation on a truncated Fock space."""
    d = om_adiabatic_params(p)
    c, s, fb = mechanical_operators(p, fock_dim)
    terms = _thermal_terms(p, c, 2 * p.g ** 2 * d.eta_minus.real)
    terms += teleport_feedback_terms(None, s, fb, noise_covariance(p.sq))
    return liouvillian_build(terms, layout=c.layout)


def teleport_lambda(sq: SqueezingSpec) -> np.ndarray:
    """Dissipator matrix over ``(x, p)`` of the unit-rate oscillator teleportation generator."""
    cov = noise_covariance(sq)
    w1, w2, w3 = cov.w1, cov.w2, cov.w3
    return np.array([[w2 - 0.5, -0.5j - w3], [0.5j - w3, w1 - 0.5]])


def om_lambda(p: OMParams) -> np.ndarray:
    """Total dissipator matrix of :func:`om_feedback_me` over ``(x, p)``."""
    d = om_adiabatic_params(p)
    phi = np.angle(_coupling_coefficient(p)) if p.g > 0 else 0.0
    R = np.array([[np.cos(phi), np.sin(phi)], [-np.sin(phi), np.cos(phi)]])
    lam = (p.gamma * (p.nbar + 1) + 2 * p.g ** 2 * d.eta_minus.real) * LAMBDA_C
    lam = lam + p.gamma * p.nbar * LAMBDA_CDAG
    lam = lam + d.Gamma * (R.T @ teleport_lambda(p.sq) @ R)
    return 0.5 * (lam + lam.conj().T)


def om_dissipator_matrix(p: OMParams, fock_dim: int = 30) -> DissipatorMatrix:
    """:func:`om_lambda` attached to the truncated quadrature operators."""
    return DissipatorMatrix(quadratures(fock_dim), om_lambda(p))


class OMGaussianResult(NamedTuple):
    covariance: np.ndarray
    zeta_db: float
    model: GaussianModel


def om_gaussian_steady(p: OMParams) -> OMGaussianResult:
    """Exact stationary covariance of the mechanics and its squeezing in dB.

    Raises
    ------
    NoSteadyStateError
        If the drift is not Hurwitz (e.g. no damping at all).
    """
    model = GaussianModel.from_generator(om_lambda(p))
    V = model.steady_covariance()
    zeta = db_from_variance(float(np.linalg.eigvalsh(V)[0]))
    return OMGaussianResult(V, zeta, model)


def zeta_at(C: float, nbar: float, kappa_over_omega: float, sq: SqueezingSpec) -> float:
    return om_gaussian_steady(om_params_from_cooperativity(C, nbar, kappa_over_omega, sq)).zeta_db


def zeta_crossing(nbar: float, kappa_over_omega: float, sq: SqueezingSpec,
                  bracket: tuple[float, float] = (1e-3, 1e4)) -> float:
    """Cooperativity at which the mechanical squeezing crosses 0 dB (bisection).

    Returns ``nan`` if ``zeta`` does not change sign inside ``bracket``.
    """
    f = lambda logc: zeta_at(10 ** logc, nbar, kappa_over_omega, sq)
    a, b = np.log10(bracket[0]), np.log10(bracket[1])
    fa, fb = f(a), f(b)
    if np.sign(fa) == np.sign(fb):
        return float("nan")
    return float(10 ** brentq(f, a, b, xtol=1e-10))


# --- two-mode cross-check -----------------------------------------------


class FullModelReport(NamedTuple):
    """Rates fitted from the two-mode model vs. the adiabatic prediction.

    ``heating`` and ``cooling`` are the fitted coefficients of
    ``d<n>/dt = heating (<n> + 1) - cooling <n>``; ``sideband`` is the
    coupling-induced part ``heating - gamma nbar``, compared with
    ``4 g^2 / kappa``.
    """

    heating: float
    cooling: float
    sideband: float
    expected_sideband: float
    relative_error: float
    g_over_kappa: float
    adiabatic_regime: bool
    truncation_ok: bool
    times: np.ndarray
    occupation: np.ndarray


def om_full_model_crosscheck(p: OMParams, fock_dims: tuple[int, int] = (12, 8), t_max: float | None = None,
                             n_max: float = 1.0, dt: float | None = None) -> FullModelReport:
    """Integrate mechanics + cavity without measurement and fit the mechanical rates.

    ``fock_dims`` is ``(mechanical, cavity)``.  The two-mode-squeezing
    interaction is kept in its resonant form, so counter-rotating
    (``epsilon``) corrections are absent; compare at ``omega_m >> kappa``.
    The fit is a linear regression of ``d<n>/dt`` on ``<n>`` over times
    after ``10 / kappa`` (or the second half of the run, if shorter) and
    while ``<n> <= n_max``.
    """
    dm, dc = fock_dims
    cm = compose([annihilation(dm), None], layout=(dm, dc)).matrix
    cc = compose([None, annihilation(dc)], layout=(dm, dc)).matrix
    H = p.g * (cm @ cc + cc.conj().T @ cm.conj().T)
    jumps = [(p.kappa, cc)]
    if p.gamma > 0:
        jumps.append((p.gamma * (p.nbar + 1), cm))
        if p.nbar > 0:
            jumps.append((p.gamma * p.nbar, cm.conj().T))
    K = -1j * H - 0.5 * sum(r * (a.conj().T @ a) for r, a in jumps)
    nm = cm.conj().T @ cm

    def rhs(r):
        out = K @ r
        out = out + out.conj().T
        for rate, a in jumps:
            out += rate * (a @ r @ a.conj().T)
        return out

    Gamma = 4 * p.g ** 2 / p.kappa
    rate_scale = p.kappa + p.gamma * (2 * p.nbar + 1) + 2 * p.g * np.sqrt(dm * dc)
    dt = dt or 0.1 / rate_scale
    t_max = t_max or (10 / p.kappa + 3.0 / max(Gamma + p.gamma, 1e-12))
    # thermal initial mechanics, cavity in vacuum
    q = p.nbar / (p.nbar + 1) if p.nbar > 0 else 0.0
    pops = q ** np.arange(dm)
    rho = np.kron(np.diag(pops / pops.sum()), np.diag(np.eye(dc)[0])).astype(complex)
    ts, ns, dns = [], [], []
    t = 0.0
    n_steps = int(np.ceil(t_max / dt))
    top = np.kron(np.diag(np.eye(dm)[-1]), np.eye(dc))
    trunc_ok = True
    for _ in range(n_steps + 1):
        dr = rhs(rho)
        n = float(np.real(np.trace(nm @ rho)))
        ts.append(t)
        ns.append(n)
        dns.append(float(np.real(np.trace(nm @ dr))))
        if n > n_max:
            break
        k1 = dr
        k2 = rhs(rho + 0.5 * dt * k1)
        k3 = rhs(rho + 0.5 * dt * k2)
        k4 = rhs(rho + dt * k3)
        rho = rho + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t += dt
    if float(np.real(np.trace(top @ rho))) > 1e-3:
        trunc_ok = False
        warnings.warn("mechanical Fock cutoff is populated; enlarge fock_dims", RuntimeWarning, stacklevel=2)
    ts, ns, dns = map(np.asarray, (ts, ns, dns))
    t0 = min(10 / p.kappa, 0.5 * ts[-1])
    sel = (ts >= t0) & (ns <= n_max)
    if sel.sum() < 3:
        raise RuntimeError("fit window is empty; increase t_max or n_max")
    slope, intercept = np.polyfit(ns[sel], dns[sel], 1)
    heating = float(intercept)
    cooling = float(intercept - slope)
    sideband = heating - p.gamma * p.nbar
    rel = abs(sideband - Gamma) / Gamma if Gamma > 0 else abs(sideband)
    return FullModelReport(heating, cooling, sideband, Gamma, float(rel), p.g / p.kappa,
                           bool(p.g / p.kappa <= 0.1), trunc_ok, ts, ns)

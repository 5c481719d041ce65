"""Unconditional master equations for homodyne-current feedback.

Averaging the conditional dynamics with the feedback kick
``exp(-i (F+ I+ dt + F- I- dt) / sqrt(2 eta))`` applied after each
measurement increment gives a deterministic generator.  For a single
system coupled through ``s`` (teleportation) it reads

    -i[H + (1/4){(F+ + i F-) s + s^dag (F+ - i F-)}, rho]
    + 1/2 { D[s - i F+] + D[s - F-] + (w3/eta) D[F+ + F-]
            + ((w1 - w3 - eta)/eta) D[F+] + ((w2 - w3 - eta)/eta) D[F-] },

and for two systems coupled through ``s1``, ``s2`` whose sum and
difference are measured (entanglement swapping, unit noise) it reads

    -i[H1 + H2 + (1/4){(F+ + i F-) s1 + (F+ - i F-) s2 + h.c.}, rho]
    + 1/2 D[s+ - i F+] + 1/2 D[s- - F-]
    + ((1 - eta)/(2 eta)) (D[F+] + D[F-]),

with ``s+ = s1 + s2`` and ``s- = s1 - s2``.  Squeezed inputs make some of
the rates negative; the generators are kept as they are.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .master import (
    GeneratorTerm,
    Liouvillian,
    diagonalize_dissipator,
    dissipator,
    extract_dissipator_matrix,
    hamiltonian,
    liouvillian_build,
)
from .noise import NoiseCov
from .qops import LayoutError, Operator, _as_layout, quadratures

HERMITIAN_TOL = 1e-12


@dataclass(frozen=True)
class FeedbackSpec:
    """Hermitian feedback generators driven by ``I+`` and ``I-``.

    ``gains`` is informational: callers fold gain values into the
    operators and record them here for reporting.
    """

    F_plus: Operator
    F_minus: Operator
    gains: tuple[float, ...] = field(default=())

    def __post_init__(self):
        if self.F_plus.layout != self.F_minus.layout:
            raise LayoutError("F+ and F- must share a layout")
        for name, op in (("F+", self.F_plus), ("F-", self.F_minus)):
            if not op.is_hermitian(HERMITIAN_TOL):
                raise ValueError(f"{name} must be Hermitian")
        object.__setattr__(self, "gains", tuple(float(g) for g in self.gains))

    @property
    def layout(self):
        return self.F_plus.layout

    @classmethod
    def off(cls, layout) -> "FeedbackSpec":
        layout = _as_layout(layout)
        z = Operator(layout, np.zeros((layout.total, layout.total)))
        return cls(z, z)

    @property
    def is_off(self) -> bool:
        return not (np.any(self.F_plus.matrix) or np.any(self.F_minus.matrix))


def _check_eta(eta: float) -> float:
    eta = float(eta)
    if not 0 < eta <= 1:
        raise ValueError(f"efficiency must lie in (0, 1], got {eta}")
    return eta


def _hermitian_part(a: Operator) -> Operator:
    return 0.5 * (a + a.dag())


def teleport_feedback_terms(H_sys: Operator | None, s: Operator, fb: FeedbackSpec,
                            cov: NoiseCov, eta: float = 1.0) -> list[GeneratorTerm]:
    """Term list of the teleportation feedback master equation."""
    eta = _check_eta(eta)
    if s.layout != fb.layout or (H_sys is not None and H_sys.layout != s.layout):
        raise LayoutError("H_sys, s and feedback operators must share a layout")
    Fp, Fm = fb.F_plus, fb.F_minus
    w1, w2, w3 = cov.w1, cov.w2, cov.w3
    cross = 0.25 * ((Fp + 1j * Fm) @ s + s.dag() @ (Fp - 1j * Fm))
    terms = [hamiltonian(_hermitian_part(cross))]
    if H_sys is not None:
        terms.append(hamiltonian(H_sys))
    terms += [
        dissipator(s - 1j * Fp, 0.5),
        dissipator(s - Fm, 0.5),
    ]
    if not fb.is_off:
        terms += [
            dissipator(Fp + Fm, 0.5 * w3 / eta),
            dissipator(Fp, 0.5 * (w1 - w3 - eta) / eta),
            dissipator(Fm, 0.5 * (w2 - w3 - eta) / eta),
        ]
    return [t for t in terms if t.rate != 0]


def teleport_feedback_liouvillian(H_sys: Operator | None, s: Operator, fb: FeedbackSpec,
                                  cov: NoiseCov, eta: float = 1.0) -> Liouvillian:
    """Feedback master equation for a single system measured through ``s``.

    Parameters
    ----------
    H_sys : Operator or None
        System Hamiltonian.
    s : Operator
        Coupling operator whose quadratures appear in the two currents.
    fb : FeedbackSpec
        Feedback generators ``F+`` and ``F-``.
    cov : NoiseCov
        Covariance of the current noise, set by the squeezed input.
    eta : float
        Detection efficiency in ``(0, 1]``.
    """
    return liouvillian_build(teleport_feedback_terms(H_sys, s, fb, cov, eta), layout=s.layout)


def swap_feedback_terms(H1: Operator | None, H2: Operator | None, s1: Operator, s2: Operator,
                        fb: FeedbackSpec, eta: float = 1.0) -> list[GeneratorTerm]:
    """Term list of the entanglement-swapping feedback master equation."""
    eta = _check_eta(eta)
    lay = s1.layout
    for op in (H1, H2, s2, fb.F_plus):
        if op is not None and op.layout != lay:
            raise LayoutError("all operators must live on the bipartite layout")
    Fp, Fm = fb.F_plus, fb.F_minus
    sp, sm = s1 + s2, s1 - s2
    cross = 0.25 * ((Fp + 1j * Fm) @ s1 + (Fp - 1j * Fm) @ s2)
    terms = [hamiltonian(cross + cross.dag())]
    for h in (H1, H2):
        if h is not None:
            terms.append(hamiltonian(h))
    terms += [dissipator(sp - 1j * Fp, 0.5), dissipator(sm - Fm, 0.5)]
    if eta < 1 and not fb.is_off:
        k = (1 - eta) / (2 * eta)
        terms += [dissipator(Fp, k), dissipator(Fm, k)]
    return [t for t in terms if t.rate != 0]


def swap_feedback_liouvillian(H1: Operator | None, H2: Operator | None, s1: Operator, s2: Operator,
                              fb: FeedbackSpec, eta: float = 1.0) -> Liouvillian:
    """Feedback master equation for two systems whose joint quadratures are measured."""
    return liouvillian_build(swap_feedback_terms(H1, H2, s1, s2, fb, eta), layout=s1.layout)


def effective_hamiltonian(s1: Operator, s2: Operator, fb: FeedbackSpec) -> Operator:
    """Non-Hermitian ``H_eff = H_cross - (i/4)(J+^dag J+ + J-^dag J-)`` of the swap generator."""
    Fp, Fm = fb.F_plus, fb.F_minus
    cross = 0.25 * ((Fp + 1j * Fm) @ s1 + (Fp - 1j * Fm) @ s2)
    jp, jm = swap_jump_operators(s1, s2, fb)
    return cross + cross.dag() - 0.25j * (jp.dag() @ jp + jm.dag() @ jm)


def swap_jump_operators(s1: Operator, s2: Operator, fb: FeedbackSpec) -> tuple[Operator, Operator]:
    """``(J+, J-) = (s+ - i F+, s- - F-)``."""
    return (s1 + s2) - 1j * fb.F_plus, (s1 - s2) - fb.F_minus


# --- jump-form verification ----------------------------------------------


class ChannelMatch(NamedTuple):
    expected_rate: float
    found_rate: float
    overlap: float
    matched: bool


class JumpFormReport(NamedTuple):
    """Outcome of :func:`verify_jump_form`.

    Rates refer to jump operators normalized to unit coefficient norm over
    ``basis``.  ``overlap`` is ``|<v_found, v_expected>|`` (1 means same
    direction up to phase).  ``unexplained_rate`` is the largest absolute
    rate among channels not matched to an expectation.
    """

    matched: bool
    rates: tuple[float, ...]
    vectors: tuple[np.ndarray, ...]
    channels: tuple[ChannelMatch, ...]
    unexplained_rate: float
    residual: float
    convention: str

    def summary(self) -> str:
        lines = [f"jump form {'matches' if self.matched else 'MISMATCH'} ({self.convention})"]
        for c in self.channels:
            lines.append(
                f"  expected rate {c.expected_rate:.6g}, found {c.found_rate:.6g}, "
                f"overlap {c.overlap:.9f} -> {'ok' if c.matched else 'fail'}"
            )
        lines.append(f"  largest unmatched rate {self.unexplained_rate:.3e}; fit residual {self.residual:.3e}")
        return "\n".join(lines)


def _coords(op: Operator, basis: Sequence[Operator]) -> tuple[np.ndarray, float]:
    A = np.column_stack([b.matrix.reshape(-1) for b in basis])
    v, *_ = np.linalg.lstsq(A, op.matrix.reshape(-1), rcond=None)
    err = float(np.max(np.abs(A @ v - op.matrix.reshape(-1))))
    return v, err


def verify_jump_form(L: Liouvillian, expected: Sequence[tuple[float, Operator]],
                     basis: Sequence[Operator] | None = None, tol: float = 1e-8) -> JumpFormReport:
    """Compare the dissipative part of ``L`` with ``sum_k rate_k D[J_k]``.

    The dissipator matrix of ``L`` over ``basis`` (default: the quadratures
    ``(x, p)`` of a single bosonic mode) is extracted and diagonalized.
    Each expected jump is expressed over the same basis and normalized to a
    unit coefficient vector, its rate rescaled accordingly; it matches a
    found channel when directions agree up to a phase and rates agree, both
    to ``tol``.  Every unmatched channel must have ``|rate| <= tol``.
    """
    if basis is None:
        if len(L.layout.dims) != 1:
            raise LayoutError("a basis must be supplied for composite layouts")
        basis = quadratures(L.layout.dims[0])
    ext = extract_dissipator_matrix(L, basis)
    found = diagonalize_dissipator(ext.matrix)
    used: set[int] = set()
    matches = []
    for rate, J in expected:
        v, fit_err = _coords(J, basis)
        n2 = float(np.real(np.vdot(v, v)))
        if n2 == 0 or fit_err > 1e-8:
            matches.append(ChannelMatch(float(rate), np.nan, 0.0, False))
            continue
        v = v / np.sqrt(n2)
        r_exp = float(rate) * n2
        best, best_ov = -1, -1.0
        for k, ch in enumerate(found):
            if k in used:
                continue
            ov = abs(np.vdot(ch.vector, v))
            if ov > best_ov:
                best, best_ov = k, ov
        if best < 0:
            matches.append(ChannelMatch(r_exp, np.nan, 0.0, False))
            continue
        used.add(best)
        r_found = found[best].rate
        ok = best_ov >= 1 - tol and abs(r_found - r_exp) <= tol * max(1.0, abs(r_exp))
        matches.append(ChannelMatch(r_exp, r_found, float(best_ov), bool(ok)))
    rest = [abs(ch.rate) for k, ch in enumerate(found) if k not in used]
    unexplained = max(rest, default=0.0)
    scale = max([1.0] + [abs(m.expected_rate) for m in matches])
    matched = all(m.matched for m in matches) and unexplained <= tol * scale and ext.residual <= tol * scale
    return JumpFormReport(
        matched=bool(matched),
        rates=tuple(ch.rate for ch in found),
        vectors=tuple(ch.vector for ch in found),
        channels=tuple(matches),
        unexplained_rate=float(unexplained),
        residual=ext.residual,
        convention="jumps normalized to unit coefficient norm over the basis",
    )

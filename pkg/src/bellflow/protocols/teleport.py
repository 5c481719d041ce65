"""Continuous teleportation of a squeezed field state onto a harmonic oscillator.

With coupling ``s = c^dag`` and feedback ``F+ = i(c - c^dag)``,
``F- = c + c^dag`` the feedback master equation has no Hamiltonian part
and a single dissipative channel,

    d rho/dt = (2N + 1) D[J] rho,
    J ∝ (2N + 1 - M - M*) x + i (1 + M - M*) p,

whose dark state is the input squeezed state (up to the frame of the
field).  For vacuum input ``J = c`` and the oscillator is cooled to its
ground state.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from ..feedback import FeedbackSpec, teleport_feedback_liouvillian
from ..master import Liouvillian, steady_state_info
from ..noise import SqueezingSpec, noise_covariance
from ..qops import DensityOp, Operator, annihilation, fock_ket, fidelity, quadrature_covariance, quadratures

DEFAULT_FOCK_DIM = 30


class BosonicTeleportModel(NamedTuple):
    """Operators of the bosonic teleportation protocol.

    ``expected_jump`` has unit coefficient norm over ``(x, p)`` and
    ``expected_rate = 2N + 1`` is its rate.
    """

    sq: SqueezingSpec
    s: Operator
    feedback: FeedbackSpec
    expected_jump: Operator
    expected_rate: float


def expected_jump_coefficients(sq: SqueezingSpec) -> np.ndarray:
    """Unit vector ``(a, b)`` with ``J = a x + b p`` for input ``sq``."""
    N, M = sq.N, sq.M
    v = np.array([2 * N + 1 - M - M.conjugate(), 1j * (1 + M - M.conjugate())], complex)
    return v / np.linalg.norm(v)


def bosonic_teleport_model(sq: SqueezingSpec, fock_dim: int = DEFAULT_FOCK_DIM) -> BosonicTeleportModel:
    """Coupling, feedback and expected jump for the oscillator target.

    Parameters
    ----------
    sq : SqueezingSpec
        Input field; its squeezed state is the target.
    fock_dim : int
        Fock truncation, at least 10.
    """
    if fock_dim < 10:
        raise ValueError(f"fock_dim must be at least 10, got {fock_dim}")
    c = annihilation(fock_dim)
    x, p = quadratures(fock_dim)
    fb = FeedbackSpec(1j * (c - c.dag()), c + c.dag())
    a, b = expected_jump_coefficients(sq)
    return BosonicTeleportModel(sq, c.dag(), fb, a * x + b * p, 2 * sq.N + 1)


def teleport_liouvillian(sq: SqueezingSpec, fock_dim: int = DEFAULT_FOCK_DIM, eta: float = 1.0,
                         H_sys: Operator | None = None) -> Liouvillian:
    m = bosonic_teleport_model(sq, fock_dim)
    return teleport_feedback_liouvillian(H_sys, m.s, m.feedback, noise_covariance(sq), eta)


class TeleportResult(NamedTuple):
    state: DensityOp
    covariance: np.ndarray
    min_variance: float
    purity: float
    ground_fidelity: float
    kernel_dim: int
    residual: float


def teleport_steady_state(sq: SqueezingSpec, fock_dim: int = DEFAULT_FOCK_DIM, eta: float = 1.0,
                          check_kernel: bool = True) -> TeleportResult:
    """Stationary oscillator state under teleportation feedback."""
    L = teleport_liouvillian(sq, fock_dim, eta)
    info = steady_state_info(L, check_kernel=check_kernel)
    cov = quadrature_covariance(info.state)
    ground = fock_ket(fock_dim, 0).projector()
    return TeleportResult(
        info.state,
        cov,
        float(np.linalg.eigvalsh(cov)[0]),
        info.state.purity(),
        fidelity(info.state, ground),
        info.kernel_dim,
        info.residual,
    )

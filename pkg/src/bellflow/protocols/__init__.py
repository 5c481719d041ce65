"""Concrete constructions: bosonic teleportation, two-qubit entanglement
swapping and the optomechanical squeezing transfer."""

from .gaussian import GaussianModel, NoSteadyStateError
from .optomech import (
    AdiabaticDerived,
    FullModelReport,
    OMParams,
    om_adiabatic_params,
    om_dissipator_matrix,
    om_feedback_me,
    om_full_model_crosscheck,
    om_gaussian_steady,
    om_params_from_cooperativity,
    om_sme_model,
    zeta_crossing,
)
from .swap import (
    GainOptimum,
    SwapResult,
    TlsSwapModel,
    TlsSwapParams,
    formula_gains,
    optimize_gains,
    swap_liouvillian,
    swap_steady_state,
    swap_surface,
    tls_swap_model,
)
from .teleport import (
    BosonicTeleportModel,
    TeleportResult,
    bosonic_teleport_model,
    teleport_liouvillian,
    teleport_steady_state,
)

__all__ = [
    "AdiabaticDerived",
    "BosonicTeleportModel",
    "FullModelReport",
    "GainOptimum",
    "GaussianModel",
    "NoSteadyStateError",
    "OMParams",
    "SwapResult",
    "TeleportResult",
    "TlsSwapModel",
    "TlsSwapParams",
    "bosonic_teleport_model",
    "formula_gains",
    "om_adiabatic_params",
    "om_dissipator_matrix",
    "om_feedback_me",
    "om_full_model_crosscheck",
    "om_gaussian_steady",
    "om_params_from_cooperativity",
    "om_sme_model",
    "optimize_gains",
    "swap_liouvillian",
    "swap_steady_state",
    "swap_surface",
    "teleport_liouvillian",
    "teleport_steady_state",
    "tls_swap_model",
    "zeta_crossing",
]

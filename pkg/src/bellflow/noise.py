"""Statistics of the squeezed input field and correlated Wiener increments.

The input light entering a continuous Bell measurement is a broadband
Gaussian state characterised by ``N = <b^dag b>``-like occupation and a
complex correlation ``M = <b b>``.  From ``(N, M)`` follow

* the covariance triple ``(w1, w2, w3)`` of the two homodyne noise
  increments ``dW+`` and ``dW-``,
* the complex factors ``mu`` and ``nu`` multiplying the system coupling in
  the two measured quadratures.

Increment sampling uses a dedicated counter-based generator per trajectory
index (:func:`trajectory_rng`) so that ensembles are reproducible and do
not depend on the order in which trajectories are computed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)

PURITY_TOL = 1e-10


class NoiseError(ValueError):
    """Invalid squeezing parameters or noise covariance."""


@dataclass(frozen=True)
class SqueezingSpec:
    """Gaussian input-field parameters.

    Parameters
    ----------
    N : float
        Occupation parameter, ``N >= 0``.
    M : complex
        Correlation parameter.  Physical states need ``|M|^2 <= N(N+1)``.
    pure : bool
        When true (the default) the minimum-uncertainty relation
        ``|M|^2 = N(N+1)`` is enforced to ``1e-10``.
    """

    N: float
    M: complex = 0.0
    pure: bool = True

    def __post_init__(self):
        N = float(self.N)
        M = complex(self.M)
        if not np.isfinite(N) or not np.isfinite(M):
            raise NoiseError("N and M must be finite")
        if N < 0:
            raise NoiseError(f"N must be non-negative, got {N}")
        excess = abs(M) ** 2 - N * (N + 1)
        if self.pure and abs(excess) > PURITY_TOL * max(1.0, N * (N + 1)):
            raise NoiseError(f"pure input needs |M|^2 = N(N+1); off by {excess:.3e}")
        if not self.pure and excess > PURITY_TOL * max(1.0, N * (N + 1)):
            raise NoiseError(f"|M|^2 exceeds N(N+1) by {excess:.3e}: unphysical input")
        object.__setattr__(self, "N", N)
        object.__setattr__(self, "M", M)

    @classmethod
    def vacuum(cls) -> "SqueezingSpec":
        return cls(0.0, 0.0)

    @classmethod
    def from_squeeze(cls, r: float, phase: float = 0.0) -> "SqueezingSpec":
        """Pure input with squeeze parameter ``r`` and ``arg M = phase``."""
        N = np.sinh(r) ** 2
        return cls(N, np.exp(1j * phase) * np.sinh(r) * np.cosh(r))

    @property
    def is_vacuum(self) -> bool:
        return self.N == 0 and self.M == 0

    @property
    def min_variance(self) -> float:
        """Smallest quadrature variance of the input, vacuum being 1/2."""
        return float(self.N + 0.5 - abs(self.M))

    @property
    def max_variance(self) -> float:
        return float(self.N + 0.5 + abs(self.M))


@dataclass(frozen=True)
class NoiseCov:
    """Covariance ``[[w1, w3], [w3, w2]]`` of ``(dW+, dW-)`` per unit time."""

    w1: float
    w2: float
    w3: float = 0.0

    def __post_init__(self):
        w1, w2, w3 = float(self.w1), float(self.w2), float(self.w3)
        if w1 < 0 or w2 < 0:
            raise NoiseError(f"variances must be non-negative, got w1={w1}, w2={w2}")
        det = w1 * w2 - w3 * w3
        if det < -1e-12 * max(1.0, w1 * w2):
            raise NoiseError(f"covariance is not positive semidefinite (det={det:.3e})")
        object.__setattr__(self, "w1", w1)
        object.__setattr__(self, "w2", w2)
        object.__setattr__(self, "w3", w3)

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.w1, self.w3], [self.w3, self.w2]])

    @property
    def det(self) -> float:
        return self.w1 * self.w2 - self.w3 ** 2

    def cholesky(self) -> np.ndarray:
        """Lower-triangular ``Lc`` with ``Lc @ Lc.T = matrix``, valid at rank 1."""
        w1, w2, w3 = self.w1, self.w2, self.w3
        if w1 == 0:
            if w3 != 0:
                raise NoiseError("w1 = 0 requires w3 = 0")
            return np.array([[0.0, 0.0], [0.0, np.sqrt(w2)]])
        a = np.sqrt(w1)
        b = w3 / a
        c = np.sqrt(max(w2 - b * b, 0.0))
        return np.array([[a, 0.0], [b, c]])


UNIT_NOISE = NoiseCov(1.0, 1.0, 0.0)


@dataclass(frozen=True)
class EPRCoeffs:
    """Factors ``mu``, ``nu`` of the system coupling in the two measured currents.

    The measured quadratures carry ``mu s`` and ``i nu s`` respectively.
    ``nu`` is real for every input; both reduce to ``1`` for vacuum.
    """

    mu: complex
    nu: complex


def noise_covariance(sq: SqueezingSpec) -> NoiseCov:
    """Homodyne noise covariance for input ``sq``.

    ``w1 = N + 1 + Re M``, ``w2 = N + 1 - Re M``, ``w3 = Im M``.

    Examples
    --------
    >>> noise_covariance(SqueezingSpec(1.0, 1j * np.sqrt(2)))
    NoiseCov(w1=2.0, w2=2.0, w3=1.4142135623730951)
    """
    M = sq.M
    w1 = sq.N + 1 + (M + M.conjugate()).real / 2
    w2 = sq.N + 1 - (M + M.conjugate()).real / 2
    w3 = (-0.5j * (M - M.conjugate())).real
    if not sq.pure:
        logger.info("noise covariance built from a mixed input (N=%g, |M|=%g)", sq.N, abs(M))
    return NoiseCov(w1, w2, w3)


def epr_coeffs(sq: SqueezingSpec) -> EPRCoeffs:
    """Coupling factors for the ``X+`` and ``P-`` outcomes.

    ``mu = (1 - M + M*) / (1 + N + M*)`` and
    ``nu = (1 + 2N + M + M*) / (1 + N + M*)``.  For pure inputs these
    simplify to ``(N + 1 - M)/(N + 1)`` and ``(N + 1 + M)/(N + 1)``, so
    ``nu`` is real exactly when ``M`` is.

    Raises
    ------
    NoiseError
        If ``1 + N + M*`` vanishes.
    """
    N, M = sq.N, sq.M
    den = 1 + N + M.conjugate()
    if abs(den) < 1e-14:
        raise NoiseError("degenerate denominator 1 + N + M*")
    mu = (1 - M + M.conjugate()) / den
    nu = (1 + 2 * N + M + M.conjugate()) / den
    return EPRCoeffs(complex(mu), complex(nu))


def squeezing_from_db(db: float, phase: float = 0.0) -> SqueezingSpec:
    """Pure squeezed input whose minimum variance is ``db`` decibels below vacuum.

    ``N = sinh(r)^2`` with ``exp(-2 r) = 10**(db/10)``.  With the default
    ``phase = 0`` the correlation ``M`` is real and positive, which squeezes
    the ``p`` quadrature.
    """
    db = float(db)
    if db > 0:
        raise NoiseError(f"squeezing level must be <= 0 dB, got {db}")
    r = -db * np.log(10) / 20
    return SqueezingSpec.from_squeeze(r, phase)


def db_from_variance(var: float) -> float:
    """``10 log10(var / (1/2))``; negative values are squeezed."""
    return float(10 * np.log10(var / 0.5))


def critical_cooperativity(N: float) -> float:
    """``1 / (sqrt(N (N+1)) - N)``, the cooperativity beyond which a squeezed
    input with occupation ``N`` imprints squeezing on a thermal oscillator."""
    if N <= 0:
        return np.inf
    return float(1.0 / (np.sqrt(N * (N + 1)) - N))


def trajectory_rng(seed: int, index: int) -> np.random.Generator:
    """Independent counter-based stream for trajectory ``index`` under ``seed``."""
    if seed < 0 or index < 0:
        raise NoiseError("seed and index must be non-negative")
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(index),))
    return np.random.Generator(np.random.Philox(ss))


def sample_increments(
    cov: NoiseCov, dt: float, rng: np.random.Generator, size: int | tuple | None = None
) -> np.ndarray:
    """Correlated Wiener increments with covariance ``dt * cov.matrix``.

    Returns an array whose last axis holds ``(dW+, dW-)``.  With ``size=None``
    a single pair of shape ``(2,)`` is drawn.  Draws consume the generator in
    a fixed order (standard normals of shape ``size + (2,)``) so chunked and
    one-shot sampling give identical sequences.
    """
    if not dt > 0:
        raise NoiseError(f"dt must be positive, got {dt}")
    shape = (2,) if size is None else tuple(np.atleast_1d(size)) + (2,)
    z = rng.standard_normal(shape)
    return np.sqrt(dt) * z @ cov.cholesky().T

"""Exact Gaussian moments of single-mode quadratic generators.

A generator ``-i[H, .] + sum_ij Lambda_ij (R_i rho R_j - {R_j R_i, rho}/2)``
over ``R = (x, p)`` with ``H = R^T Hm R / 2`` closes on first and second
moments:

    d<R>/dt = A <R>,    dV/dt = A V + V A^T + D,

with ``A = Omega (Hm - Im Lambda)``, ``D = Omega Re(Lambda) Omega^T`` and
``Omega = [[0, 1], [-1, 0]]`` the symplectic form (``[x, p] = i``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

OMEGA = np.array([[0.0, 1.0], [-1.0, 0.0]])


class NoSteadyStateError(RuntimeError):
    """The drift matrix is not Hurwitz."""


@dataclass(frozen=True, eq=False)
class GaussianModel:
    """Linear drift ``A`` and diffusion ``D`` of the quadrature moments."""

    A: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        D = np.array(self.D, dtype=float)
        if A.shape != (2, 2) or D.shape != (2, 2):
            raise ValueError("A and D must be 2x2")
        if np.max(np.abs(D - D.T)) > 1e-12 * max(1.0, np.max(np.abs(D))):
            raise ValueError("D must be symmetric")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "D", 0.5 * (D + D.T))

    @classmethod
    def from_generator(cls, Lambda: np.ndarray, Hm: np.ndarray | None = None) -> "GaussianModel":
        """Moments of the dissipator matrix ``Lambda`` over ``(x, p)`` plus ``H = R^T Hm R / 2``."""
        lam = np.asarray(Lambda, complex)
        Hm = np.zeros((2, 2)) if Hm is None else np.asarray(Hm, float)
        A = OMEGA @ (Hm - lam.imag)
        D = OMEGA @ lam.real @ OMEGA.T
        return cls(A, D)

    @property
    def is_hurwitz(self) -> bool:
        return bool(np.all(np.linalg.eigvals(self.A).real < 0))

    @property
    def diffusion_psd(self) -> bool:
        """Whether ``D`` is PSD; generators with negative rates can violate this."""
        return bool(np.linalg.eigvalsh(self.D)[0] >= -1e-12)

    def steady_covariance(self) -> np.ndarray:
        """Solution of ``A V + V A^T + D = 0``.

        Raises
        ------
        NoSteadyStateError
            If ``A`` has an eigenvalue with non-negative real part.
        """
        if not self.is_hurwitz:
            raise NoSteadyStateError(f"drift eigenvalues {np.linalg.eigvals(self.A)} are not all stable")
        V = sla.solve_continuous_lyapunov(self.A, -self.D)
        return 0.5 * (V + V.T)

    def covariance_at(self, V0: np.ndarray, t: float) -> np.ndarray:
        """``V(t)`` from ``V(0) = V0`` via the exact propagator."""
        if self.is_hurwitz:
            Vss = self.steady_covariance()
            E = sla.expm(self.A * t)
            return Vss + E @ (np.asarray(V0) - Vss) @ E.T
        # integrate the vectorized linear ODE directly
        n = 2
        K = np.kron(self.A, np.eye(n)) + np.kron(np.eye(n), self.A)
        aug = np.zeros((n * n + 1, n * n + 1))
        aug[: n * n, : n * n] = K
        aug[: n * n, -1] = self.D.reshape(-1)
        y0 = np.append(np.asarray(V0, float).reshape(-1), 1.0)
        return (sla.expm(aug * t) @ y0)[: n * n].reshape(n, n)

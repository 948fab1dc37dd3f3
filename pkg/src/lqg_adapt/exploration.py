"""Exploration-noise schedules: decaying naive excitation and the FIM-gated variant."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DimensionMismatch, SingularInnovation

INNOVATION_JITTER = 1e-8


@dataclass(frozen=True)
class NaiveSchedule:
    gamma: float

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")


def naive_sigma_sq(schedule: NaiveSchedule, l_k: int) -> float:
    """Exploration variance ``gamma / sqrt(l_k)`` for the episode starting at ``l_k``."""
    if l_k < 1:
        raise ValueError("l_k must be at least 1")
    return schedule.gamma / np.sqrt(l_k)


class FimAccumulator:
    """Running estimate of the Fisher information of the Markov-parameter regression.

    ``kron_sum`` accumulates ``phi phi' (x) inv(Sigma_e_hat)`` where
    ``Sigma_e_hat`` is the running mean of the one-step prediction residual
    outer products seen so far.  Once ``lambda_min(kron_sum) >= c_tol`` the
    accumulator latches into FIM-scaled exploration for good.
    """

    def __init__(self, phi_dim: int, n_y: int, alpha: float = 1.0, c_tol: float = 1.0):
        if not (alpha > 0 and c_tol > 0):
            raise ValueError("alpha and c_tol must be positive")
        self.phi_dim = phi_dim
        self.n_y = n_y
        self.alpha = float(alpha)
        self.c_tol = float(c_tol)
        self.kron_sum = np.zeros((phi_dim * n_y, phi_dim * n_y))
        self.innov_sum = np.zeros((n_y, n_y))
        self.innov_count = 0
        self.switched = False

    def update_innovation(self, y, y_pred) -> None:
        e = np.asarray(y, dtype=float).reshape(-1) - np.asarray(y_pred, dtype=float).reshape(-1)
        if e.size != self.n_y:
            raise DimensionMismatch(f"residual has length {e.size}, expected {self.n_y}")
        self.innov_sum += np.outer(e, e)
        self.innov_count += 1

    def innovation_cov(self) -> np.ndarray:
        if self.innov_count == 0:
            raise SingularInnovation("no residuals accumulated yet")
        return self.innov_sum / self.innov_count

    def _inv_innovation_factor(self) -> np.ndarray:
        """``G`` with ``G G' = inv(Sigma_e_hat)``, jittered once if needed."""
        S = self.innovation_cov()
        try:
            L = np.linalg.cholesky(S)
        except np.linalg.LinAlgError:
            jitter = INNOVATION_JITTER * np.trace(S) / self.n_y
            try:
                L = np.linalg.cholesky(S + jitter * np.eye(self.n_y))
            except np.linalg.LinAlgError as exc:
                raise SingularInnovation("innovation covariance is singular") from exc
        return np.linalg.inv(L).T

    def update_fim(self, phi) -> None:
        """Add ``phi phi' (x) inv(Sigma_e_hat)`` using the current residual covariance."""
        phi = np.asarray(phi, dtype=float).reshape(-1)
        if phi.size != self.phi_dim:
            raise DimensionMismatch(f"regressor has length {phi.size}, expected {self.phi_dim}")
        G = self._inv_innovation_factor()
        # (phi (x) G)(phi (x) G)' == phi phi' (x) G G'
        W = (phi[:, None, None] * G[None, :, :]).reshape(-1, self.n_y)
        self.kron_sum += W @ W.T

    def min_eig(self) -> float:
        lam = scipy.linalg.eigh(self.kron_sum, eigvals_only=True, subset_by_index=[0, 0], check_finite=False)[0]
        return float(max(lam, 0.0))

    def sigma_sq(self, fallback: NaiveSchedule, l_k: int, lambda_min: float | None = None) -> tuple[float, bool]:
        """Return ``(variance, using_fim)`` for the next exploration draw.

        ``lambda_min`` may be passed in when the caller already holds a
        (possibly strided) value; otherwise it is recomputed.
        """
        lam = self.min_eig() if lambda_min is None else lambda_min
        if self.switched or lam >= self.c_tol:
            self.switched = True
            return self.alpha / lam, True
        return naive_sigma_sq(fallback, l_k), False

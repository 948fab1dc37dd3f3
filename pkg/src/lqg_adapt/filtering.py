"""Steady-state LQG machinery: control and Kalman gains, the filter recursion and J*."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import control_math as cm
from .errors import DimensionMismatch, GainUnstable
from .plant import CostParams, NoiseParams, SystemParams


@dataclass(frozen=True)
class LqgGains:
    K: np.ndarray
    L: np.ndarray
    F: np.ndarray
    P: np.ndarray
    Sigma: np.ndarray
    Sigma_e: np.ndarray
    Abar: np.ndarray


def control_gain(A, B, C, Q, R, tol=cm.DEFAULT_TOL):
    """Return ``(K, P)`` for the output-weighted LQR problem with ``Qc = C'QC``."""
    A, B, C = cm.as_matrix(A), cm.as_matrix(B), cm.as_matrix(C)
    Qc = cm.symmetrize(C.T @ np.asarray(Q) @ C)
    P = cm.solve_control_dare(A, B, Qc, R, tol=tol).value
    K = np.linalg.solve(B.T @ P @ B + R, B.T @ P @ A)
    return K, P


def compute_gains(params: SystemParams, noise: NoiseParams, cost: CostParams, tol=cm.DEFAULT_TOL) -> LqgGains:
    A, B, C = params.A, params.B, params.C
    K, P = control_gain(A, B, C, cost.Q, cost.R, tol=tol)
    rho = cm.spectral_radius(A - B @ K)
    if rho >= 1.0:
        raise GainUnstable(f"rho(A - BK) = {rho:.6g}")
    Sigma = cm.solve_filter_dare(A, C, noise.sigma_w, noise.sigma_z, tol=tol).value
    Sigma_e = cm.symmetrize(C @ Sigma @ C.T + noise.sigma_z**2 * np.eye(params.n_y))
    L = np.linalg.solve(Sigma_e, C @ Sigma).T
    F = A @ L
    return LqgGains(K=K, L=L, F=F, P=P, Sigma=Sigma, Sigma_e=Sigma_e, Abar=A - F @ C)


@dataclass(frozen=True)
class FilterState:
    """Predicted ``x_{t|t-1}`` and filtered ``x_{t|t}`` estimates."""

    x_pred: np.ndarray
    x_filt: np.ndarray
    t: int = 0

    @classmethod
    def initial(cls, n_x: int) -> "FilterState":
        return cls(np.zeros(n_x), np.zeros(n_x), 0)


def measurement_update(fs: FilterState, params: SystemParams, L, y) -> FilterState:
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.size != params.n_y or np.shape(L) != (params.n_x, params.n_y):
        raise DimensionMismatch(f"y{y.shape} / L{np.shape(L)} do not match the model")
    innov = y - params.C @ fs.x_pred
    return replace(fs, x_filt=fs.x_pred + L @ innov)


def time_update(fs: FilterState, params: SystemParams, u) -> FilterState:
    u = np.asarray(u, dtype=float).reshape(-1)
    if u.size != params.n_u:
        raise DimensionMismatch(f"u must have length {params.n_u}, got {u.size}")
    return FilterState(params.A @ fs.x_filt + params.B @ u, fs.x_filt, fs.t + 1)


def filter_step(fs: FilterState, params: SystemParams, L, y, u) -> FilterState:
    """One full Kalman step: correct with ``y_t``, then predict with the applied ``u_t``.

    The same recursion serves the true model and any estimated model with its
    own gain ``L``.
    """
    return time_update(measurement_update(fs, params, L, y), params, u)


def optimal_cost(params: SystemParams, noise: NoiseParams, cost: CostParams, tol=cm.DEFAULT_TOL) -> float:
    """Long-run average cost of the optimal LQG controller.

    J* = Tr(C'QC Sbar) + sz^2 Tr(Q) + Tr(P (Sigma - Sbar)),
    Sbar = Sigma - Sigma C'(C Sigma C' + sz^2 I)^{-1} C Sigma.
    """
    g = compute_gains(params, noise, cost, tol=tol)
    C, Q = params.C, cost.Q
    S = g.Sigma
    Sbar = S - S @ C.T @ np.linalg.solve(g.Sigma_e, C @ S)
    J = np.trace(C.T @ Q @ C @ Sbar) + noise.sigma_z**2 * np.trace(Q) + np.trace(g.P @ (S - Sbar))
    return float(J)

"""Independent self-checks used by ``lqg-adapt oracle`` and the test-suite.

Each check compares the package's code path against something computed
another way (scipy's Riccati solver, exact Markov parameters, brute-force
Monte Carlo over replications).
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from . import control_math as cm
from .exploration import FimAccumulator
from .filtering import compute_gains
from .plant import CostParams, NoiseParams, Plant, SystemParams, init_steady_state
from .sysid import build_regressor, ho_kalman, markov_from_params


def dare_check(system: SystemParams, noise: NoiseParams, cost: CostParams) -> dict:
    """Relative residuals of both Riccati solutions and their gap to scipy's solver."""
    A, B, C = system.A, system.B, system.C
    Qc = cm.symmetrize(C.T @ cost.Q @ C)
    P = cm.solve_control_dare(A, B, Qc, cost.R).value
    W, V = noise.sigma_w**2 * np.eye(system.n_x), noise.sigma_z**2 * np.eye(system.n_y)
    S = cm.solve_filter_dare(A, C, noise.sigma_w, noise.sigma_z).value
    P_ref = scipy.linalg.solve_discrete_are(A, B, Qc, cost.R)
    S_ref = scipy.linalg.solve_discrete_are(A.T, C.T, W, V)
    return {
        "control_residual": cm.dare_residual(P, A, B, Qc, cost.R) / (1 + np.linalg.norm(P, 2)),
        "filter_residual": cm.dare_residual(S, A.T, C.T, W, V) / (1 + np.linalg.norm(S, 2)),
        "control_vs_scipy": np.linalg.norm(P - P_ref, 2) / np.linalg.norm(P_ref, 2),
        "filter_vs_scipy": np.linalg.norm(S - S_ref, 2) / np.linalg.norm(S_ref, 2),
    }


def transfer_markov(A, B, C, n: int) -> list:
    """``C A^i B`` for ``i < n``, the similarity-invariant fingerprint of ``(A, B, C)``."""
    out, CA = [], np.asarray(C, dtype=float)
    for _ in range(n):
        out.append(CA @ B)
        CA = CA @ A
    return out


def ho_kalman_roundtrip(system: SystemParams, noise: NoiseParams, cost: CostParams, H: int,
                        d1=None, d2=None) -> float:
    """Largest relative error in ``C A^i [B, L]`` after realizing exact Markov parameters."""
    g = compute_gains(system, noise, cost)
    M = markov_from_params(system, g.F, H)
    m = ho_kalman(M, system.n_x, H, d1, d2, n_y=system.n_y)
    BL_true = np.hstack([system.B, g.L])
    BL_hat = np.hstack([m.B_hat, m.L_hat])
    err = 0.0
    for T, E in zip(transfer_markov(system.A, BL_true, system.C, 2 * system.n_x),
                    transfer_markov(m.A_hat, BL_hat, m.C_hat, 2 * system.n_x)):
        err = max(err, np.linalg.norm(T - E, 2) / max(np.linalg.norm(T, 2), 1e-300))
    return err


def scalar_fim_check(a=0.7, b=1.0, c=1.0, sigma_w=0.3, sigma_z=0.2, k_gain=0.3, sigma_eta=0.5, H=2,
                     n_steps=10_000, n_reps=10_000, seed=0) -> dict:
    """Time-averaged estimated FIM of one run against a Monte Carlo expectation.

    The closed loop is a scalar plant under ``u = -k x_filt + eta`` with the
    true Kalman filter.  The estimate uses the package path (plant, residual
    covariance, :class:`FimAccumulator`); the reference averages ``phi phi'``
    over ``n_reps`` independent vectorized replications and scales by the
    analytic innovation variance from scipy's Riccati solver.
    """
    system = SystemParams([[a]], [[b]], [[c]])
    noise = NoiseParams(sigma_w, sigma_z)
    S = scipy.linalg.solve_discrete_are(np.array([[a]]), np.array([[c]]),
                                        np.array([[sigma_w**2]]), np.array([[sigma_z**2]]))[0, 0]
    sig_e = c * S * c + sigma_z**2
    L = S * c / sig_e

    # package path: one long run
    plant = Plant(system, noise, init_steady_state(system, noise, seed))
    fim = FimAccumulator(2 * H, 1)
    ys, us = np.zeros(n_steps), np.zeros(n_steps)
    x_pred = 0.0
    for t in range(n_steps):
        y = plant.observe()[0]
        ys[t] = y
        fim.update_innovation([y], [c * x_pred])
        if t >= H:
            fim.update_fim(build_regressor(ys, us, t, H))
        x_filt = x_pred + L * (y - c * x_pred)
        u = -k_gain * x_filt + sigma_eta * plant.rng.standard_normal()
        plant.apply([u])
        us[t] = u
        x_pred = a * x_filt + b * u
    estimated = fim.kron_sum / (n_steps - H)

    # reference: independent replications of the same closed loop
    rng = np.random.default_rng(seed + 1)
    x = np.sqrt(S) * rng.standard_normal(n_reps)
    xp = np.zeros(n_reps)
    yh, uh = np.zeros((H, n_reps)), np.zeros((H, n_reps))  # newest first
    acc = np.zeros((2 * H, 2 * H))
    for t in range(n_steps):
        y = c * x + sigma_z * rng.standard_normal(n_reps)
        if t >= H:
            phi = np.vstack([yh, uh])
            acc += phi @ phi.T / n_reps
        xf = xp + L * (y - c * xp)
        u = -k_gain * xf + sigma_eta * rng.standard_normal(n_reps)
        x = a * x + b * u + sigma_w * rng.standard_normal(n_reps)
        xp = a * xf + b * u
        yh = np.vstack([y, yh[:-1]])
        uh = np.vstack([u, uh[:-1]])
    reference = acc / (n_steps - H) / sig_e
    rel = np.linalg.norm(estimated - reference) / np.linalg.norm(reference)
    return {"estimated": estimated, "reference": reference, "relative_error": float(rel)}

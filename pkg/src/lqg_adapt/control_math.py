"""Riccati/Lyapunov solvers, rank tests and Gaussian sampling for small dense systems."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatch,
    InvalidNoise,
    NonConvergence,
    NotPSD,
    SingularInnerBlock,
    UnstableArgument,
)

RANK_RTOL = 1e-8
DEFAULT_TOL = 1e-12
DEFAULT_MAX_ITER = 100_000
_COND_LIMIT = 1e14


@dataclass(frozen=True)
class DareSolution:
    value: np.ndarray
    residual_norm: float
    iterations: int


def as_matrix(X, name="matrix") -> np.ndarray:
    """Return ``X`` as a finite 2-D float array (scalars become 1x1)."""
    M = np.atleast_2d(np.asarray(X, dtype=float))
    if M.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-D, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{name} has non-finite entries")
    return M


def symmetrize(X: np.ndarray) -> np.ndarray:
    return 0.5 * (X + X.T)


def _check_square(X, name):
    if X.shape[0] != X.shape[1]:
        raise DimensionMismatch(f"{name} must be square, got {X.shape}")


def _riccati_map(P, A, B, Qc, R):
    S = B.T @ P @ B + R
    if np.linalg.cond(S) > _COND_LIMIT:
        raise SingularInnerBlock("B'PB + R is numerically singular; check that R is positive definite")
    BtPA = B.T @ P @ A
    return Qc + A.T @ P @ A - BtPA.T @ np.linalg.solve(S, BtPA)


def dare_residual(P, A, B, Qc, R) -> float:
    """Spectral norm of ``P - Ric(P)`` for the control-form DARE."""
    return float(np.linalg.norm(P - _riccati_map(P, A, B, Qc, R), 2))


def _dare_fixed_point(A, B, Qc, R, tol, max_iter):
    P = Qc.copy()
    for k in range(1, max_iter + 1):
        P_next = symmetrize(_riccati_map(P, A, B, Qc, R))
        if not np.all(np.isfinite(P_next)):
            raise NonConvergence(f"fixed-point iteration blew up after {k} iterations")
        step = np.linalg.norm(P_next - P, 2)
        P = P_next
        if step <= tol * (1.0 + np.linalg.norm(P, 2)):
            return P, k
    raise NonConvergence(f"fixed-point iteration did not converge in {max_iter} iterations")


def _dare_doubling(A, B, Qc, R, tol, max_iter):
    # structure-preserving doubling; H_k -> P quadratically for stabilizable/detectable data
    n = A.shape[0]
    if np.linalg.cond(R) > _COND_LIMIT:
        raise SingularInnerBlock("R is numerically singular")
    Ak = A.copy()
    Gk = symmetrize(B @ np.linalg.solve(R, B.T))
    Hk = Qc.copy()
    eye = np.eye(n)
    for k in range(1, min(max_iter, 200) + 1):
        W = eye + Gk @ Hk
        if np.linalg.cond(W) > _COND_LIMIT:
            raise NonConvergence("doubling iteration became singular")
        WinvA = np.linalg.solve(W, Ak)
        WinvG = np.linalg.solve(W, Gk)
        H_next = symmetrize(Hk + Ak.T @ Hk @ WinvA)
        Gk = symmetrize(Gk + Ak @ WinvG @ Ak.T)
        Ak = Ak @ WinvA
        if not (np.all(np.isfinite(H_next)) and np.all(np.isfinite(Ak))):
            raise NonConvergence(f"doubling iteration blew up after {k} iterations")
        step = np.linalg.norm(H_next - Hk, 2)
        Hk = H_next
        if step <= tol * (1.0 + np.linalg.norm(Hk, 2)):
            return Hk, k
    raise NonConvergence("doubling iteration did not converge")


def solve_control_dare(A, B, Qc, R, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER, method="doubling") -> DareSolution:
    """Solve ``P = Qc + A'PA - A'PB(B'PB + R)^{-1}B'PA``.

    ``method`` is ``"doubling"`` (default) or ``"fixed_point"``, the plain
    iteration from ``P = Qc``.  Either way the returned solution satisfies the
    residual bound ``||P - Ric(P)|| <= tol * (1 + ||P||)`` or NonConvergence is
    raised.
    """
    A, B, Qc, R = as_matrix(A, "A"), as_matrix(B, "B"), as_matrix(Qc, "Qc"), as_matrix(R, "R")
    _check_square(A, "A")
    _check_square(Qc, "Qc")
    _check_square(R, "R")
    n, m = B.shape
    if n != A.shape[0] or Qc.shape[0] != n or R.shape[0] != m:
        raise DimensionMismatch(f"incompatible shapes A{A.shape} B{B.shape} Qc{Qc.shape} R{R.shape}")
    if method == "doubling":
        P, iters = _dare_doubling(A, B, Qc, R, tol, max_iter)
    elif method == "fixed_point":
        P, iters = _dare_fixed_point(A, B, Qc, R, tol, max_iter)
    else:
        raise ValueError(f"unknown DARE method {method!r}")
    res = dare_residual(P, A, B, Qc, R)
    if res > tol * (1.0 + np.linalg.norm(P, 2)):
        raise NonConvergence(f"DARE residual {res:.3e} exceeds tolerance")
    return DareSolution(P, res, iters)


def solve_filter_dare(A, C, sigma_w, sigma_z, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER, method="doubling") -> DareSolution:
    """Steady-state prediction covariance for isotropic process/measurement noise.

    Solves ``S = sw^2 I + A S A' - A S C'(C S C' + sz^2 I)^{-1} C S A'`` as the
    dual of the control DARE.
    """
    if not (sigma_w > 0 and sigma_z > 0):
        raise InvalidNoise(f"noise standard deviations must be positive, got {sigma_w}, {sigma_z}")
    A, C = as_matrix(A, "A"), as_matrix(C, "C")
    n, p = A.shape[0], C.shape[0]
    return solve_control_dare(
        A.T, C.T, sigma_w**2 * np.eye(n), sigma_z**2 * np.eye(p), tol=tol, max_iter=max_iter, method=method
    )


def spectral_radius(X) -> float:
    X = as_matrix(X, "X")
    _check_square(X, "X")
    return float(np.max(np.abs(np.linalg.eigvals(X)))) if X.size else 0.0


def dlyap(X, Y, tol=DEFAULT_TOL) -> np.ndarray:
    """Solve ``S = X' S X + Y`` for stable ``X`` by Smith doubling."""
    X, Y = as_matrix(X, "X"), as_matrix(Y, "Y")
    _check_square(X, "X")
    if Y.shape != X.shape:
        raise DimensionMismatch(f"Y must be {X.shape}, got {Y.shape}")
    if not np.allclose(Y, Y.T, rtol=1e-10, atol=1e-14):
        raise ValueError("Y must be symmetric")
    rho = spectral_radius(X)
    if rho >= 1.0:
        raise UnstableArgument(f"spectral radius {rho:.6g} >= 1")
    S = symmetrize(Y)
    Xk = X.copy()
    # S_k accumulates sum_{i < 2^k} (X')^i Y X^i
    for _ in range(64):
        inc = Xk.T @ S @ Xk
        S = symmetrize(S + inc)
        Xk = Xk @ Xk
        if np.linalg.norm(inc, 2) <= tol * (1.0 + np.linalg.norm(S, 2)) and np.linalg.norm(Xk, 2) < 1.0:
            break
    return S


def controllability_matrix(A, B) -> np.ndarray:
    A, B = as_matrix(A, "A"), as_matrix(B, "B")
    _check_square(A, "A")
    if B.shape[0] != A.shape[0]:
        raise DimensionMismatch(f"B must have {A.shape[0]} rows, got {B.shape}")
    blocks = [B]
    for _ in range(A.shape[0] - 1):
        blocks.append(A @ blocks[-1])
    return np.hstack(blocks)


def observability_matrix(A, C) -> np.ndarray:
    A, C = as_matrix(A, "A"), as_matrix(C, "C")
    _check_square(A, "A")
    if C.shape[1] != A.shape[0]:
        raise DimensionMismatch(f"C must have {A.shape[0]} columns, got {C.shape}")
    blocks = [C]
    for _ in range(A.shape[0] - 1):
        blocks.append(blocks[-1] @ A)
    return np.vstack(blocks)


def numerical_rank(M, rtol=RANK_RTOL) -> int:
    sv = np.linalg.svd(as_matrix(M), compute_uv=False)
    if sv.size == 0 or sv[0] == 0.0:
        return 0
    return int(np.sum(sv > rtol * sv[0]))


def is_controllable(A, B) -> bool:
    return numerical_rank(controllability_matrix(A, B)) == np.shape(A)[0]


def is_observable(A, C) -> bool:
    return numerical_rank(observability_matrix(A, C)) == np.shape(A)[0]


def gaussian_factor(covariance) -> np.ndarray:
    """Lower Cholesky factor of ``covariance`` with the escalating jitter policy.

    Jitter starts at ``1e-10 * trace / n`` and grows tenfold up to three times.
    An all-zero covariance yields a zero factor.
    """
    S = as_matrix(covariance, "covariance")
    _check_square(S, "covariance")
    if not np.allclose(S, S.T, rtol=1e-10, atol=1e-14):
        raise NotPSD("covariance is not symmetric")
    n = S.shape[0]
    if not np.any(S):
        return np.zeros_like(S)
    S = symmetrize(S)
    try:
        return np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        pass
    jitter = 1e-10 * np.trace(S) / n
    for _ in range(4):
        try:
            return np.linalg.cholesky(S + jitter * np.eye(n))
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise NotPSD("covariance is not positive semi-definite")


def sample_gaussian(mean, covariance, rng: np.random.Generator) -> np.ndarray:
    mean = np.asarray(mean, dtype=float).reshape(-1)
    L = gaussian_factor(covariance)
    if L.shape[0] != mean.size:
        raise DimensionMismatch(f"mean has length {mean.size}, covariance is {L.shape}")
    return mean + L @ rng.standard_normal(mean.size)

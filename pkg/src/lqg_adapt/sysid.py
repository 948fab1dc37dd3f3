"""Closed-loop identification of predictor-form Markov parameters and Ho-Kalman realization.

The regression target is

    M = [C F, C Abar F, ..., C Abar^{H-1} F, C B, C Abar B, ..., C Abar^{H-1} B]

with ``Abar = A - F C``, regressed against

    phi_t = [y_{t-1}; ...; y_{t-H}; u_{t-1}; ...; u_{t-H}].
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import control_math as cm
from .errors import BadSplit, DimensionMismatch, EmptyData, InsufficientHistory, RankDeficient
from .plant import SystemParams

RANK_DEFICIENT_RTOL = 1e-10
TRUNCATION_WARN = 1e-6
DEFAULT_LAMBDA = 1e-3


class TruncationWarning(UserWarning):
    """The realized predictor dynamics decay too slowly for the chosen H."""


@dataclass(frozen=True)
class MarkovEstimate:
    M_hat: np.ndarray
    V: np.ndarray
    lam: float
    n_samples: int


@dataclass(frozen=True)
class RealizedModel:
    A_hat: np.ndarray
    B_hat: np.ndarray
    C_hat: np.ndarray
    L_hat: np.ndarray
    F_hat: np.ndarray
    hankel_sv: np.ndarray
    abar_tail: float  # ||Abar_hat^H||, the neglected-bias proxy
    a_singular: bool  # A_hat was rank deficient when recovering L_hat

    @property
    def params(self) -> SystemParams:
        return SystemParams(self.A_hat, self.B_hat, self.C_hat)


def build_regressor(ys, us, t: int, H: int) -> np.ndarray:
    """Stack the last ``H`` outputs then the last ``H`` inputs, newest first."""
    if H < 1:
        raise ValueError("H must be at least 1")
    if t < H:
        raise InsufficientHistory(f"regressor needs t >= H, got t={t}, H={H}")
    ys = np.asarray(ys, dtype=float)
    us = np.asarray(us, dtype=float)
    if ys.ndim == 1:
        ys = ys[:, None]
    if us.ndim == 1:
        us = us[:, None]
    if len(ys) < t or len(us) < t:
        raise InsufficientHistory(f"history holds {min(len(ys), len(us))} steps, need {t}")
    return np.concatenate([ys[t - H : t][::-1].ravel(), us[t - H : t][::-1].ravel()])


def rls_markov(regressors, outputs, lam: float = DEFAULT_LAMBDA) -> MarkovEstimate:
    """Ridge estimate ``M_hat' = (Phi'Phi + lam I)^{-1} Phi'Y``."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    Phi = np.atleast_2d(np.asarray(regressors, dtype=float))
    Y = np.asarray(outputs, dtype=float)
    if Phi.size == 0 or len(Y) == 0:
        raise EmptyData("no samples to regress on")
    if Y.ndim == 1:
        Y = Y[:, None]
    if len(Phi) != len(Y):
        raise DimensionMismatch(f"{len(Phi)} regressors but {len(Y)} outputs")
    return _solve_normal(Phi.T @ Phi, Phi.T @ Y, lam, len(Phi))


def _solve_normal(gram, cross, lam, n):
    V = cm.symmetrize(gram) + lam * np.eye(gram.shape[0])
    M_hat = scipy.linalg.cho_solve(scipy.linalg.cho_factor(V), cross).T
    return MarkovEstimate(M_hat=M_hat, V=V, lam=float(lam), n_samples=int(n))


class MarkovRegression:
    """Running ``Phi'Phi`` and ``Phi'Y`` with rank-one updates; solved on demand."""

    def __init__(self, dim: int, n_y: int, lam: float = DEFAULT_LAMBDA):
        if not lam > 0:
            raise ValueError("lambda must be positive")
        self.lam = float(lam)
        self.gram = np.zeros((dim, dim))
        self.cross = np.zeros((dim, n_y))
        self.n_samples = 0

    def add(self, phi, y) -> None:
        phi = np.asarray(phi, dtype=float)
        self.gram += np.outer(phi, phi)
        self.cross += np.outer(phi, y)
        self.n_samples += 1

    def estimate(self) -> MarkovEstimate:
        if self.n_samples == 0:
            raise EmptyData("no samples accumulated")
        return _solve_normal(self.gram, self.cross, self.lam, self.n_samples)


def markov_from_params(params: SystemParams, F, H: int) -> np.ndarray:
    A, B, C = params.A, params.B, params.C
    F = cm.as_matrix(F, "F")
    if F.shape != (params.n_x, params.n_y):
        raise DimensionMismatch(f"F must be {(params.n_x, params.n_y)}, got {F.shape}")
    Abar = A - F @ C
    if cm.spectral_radius(Abar) >= 1.0:
        warnings.warn("A - FC is not stable; Markov parameters do not decay", TruncationWarning, stacklevel=2)
    f_blocks, b_blocks = [], []
    CA = C.copy()
    for _ in range(H):
        f_blocks.append(CA @ F)
        b_blocks.append(CA @ B)
        CA = CA @ Abar
    return np.hstack(f_blocks + b_blocks)


def default_split(H: int) -> tuple[int, int]:
    d1 = math.ceil((H - 1) / 2)
    return d1, H - 1 - d1


def _hankel(blocks, d1, d2):
    return np.vstack([np.hstack(blocks[i : i + d2 + 1]) for i in range(d1)])


def ho_kalman(me, n_x: int, H: int, d1: int | None = None, d2: int | None = None, n_y: int | None = None) -> RealizedModel:
    """Realize ``(A, B, C, L)`` from an (estimated) Markov-parameter block.

    ``me`` is a :class:`MarkovEstimate` or the raw ``M`` matrix.  The split
    ``d1 + d2 + 1 == H`` with ``d1, d2 >= n_x`` fixes the Hankel shape; when
    omitted it defaults to :func:`default_split`.
    """
    M = me.M_hat if isinstance(me, MarkovEstimate) else cm.as_matrix(me, "M")
    if d1 is None or d2 is None:
        d1, d2 = default_split(H)
    if d1 < n_x or d2 < n_x or d1 + d2 + 1 != H:
        raise BadSplit(f"need d1, d2 >= n_x={n_x} and d1 + d2 + 1 = H={H}; got d1={d1}, d2={d2}")
    n_y = M.shape[0] if n_y is None else n_y
    if M.shape[0] != n_y or M.shape[1] % H or M.shape[1] // H <= n_y:
        raise DimensionMismatch(f"M of shape {M.shape} is not n_y x (n_y + n_u)H for H={H}")
    n_u = M.shape[1] // H - n_y
    f_blocks = [M[:, i * n_y : (i + 1) * n_y] for i in range(H)]
    off = H * n_y
    g_blocks = [M[:, off + i * n_u : off + (i + 1) * n_u] for i in range(H)]

    HF = _hankel(f_blocks, d1, d2)
    HG = _hankel(g_blocks, d1, d2)
    # drop the last block column of each Hankel for H-minus, the first for H-plus
    H_minus = np.hstack([HF[:, : d2 * n_y], HG[:, : d2 * n_u]])
    H_plus = np.hstack([HF[:, n_y:], HG[:, n_u:]])

    U, s, Vt = np.linalg.svd(H_minus, full_matrices=False)
    if s.size < n_x or s[0] == 0.0 or s[n_x - 1] < RANK_DEFICIENT_RTOL * s[0]:
        raise RankDeficient(f"Hankel matrix has no rank-{n_x} part (singular values {s[: n_x + 1]})")
    root = np.sqrt(s[:n_x])
    obs = U[:, :n_x] * root
    ctrl = root[:, None] * Vt[:n_x]

    C_hat = obs[:n_y]
    F_hat = ctrl[:, :n_y]
    B_hat = ctrl[:, d2 * n_y : d2 * n_y + n_u]
    pinv = lambda X: np.linalg.pinv(X, rcond=cm.RANK_RTOL)
    Abar_hat = pinv(obs) @ H_plus @ pinv(ctrl)
    A_hat = Abar_hat + F_hat @ C_hat
    a_singular = cm.numerical_rank(A_hat) < n_x
    L_hat = (pinv(A_hat) @ pinv(obs) @ H_minus)[:, :n_y]

    tail = float(np.linalg.norm(np.linalg.matrix_power(Abar_hat, H), 2))
    if tail > TRUNCATION_WARN:
        warnings.warn(f"||Abar_hat^H|| = {tail:.2e}; H may be too small", TruncationWarning, stacklevel=2)
    return RealizedModel(A_hat, B_hat, C_hat, L_hat, F_hat, s, tail, a_singular)


def min_sv_gram(me: MarkovEstimate) -> float:
    """Smallest singular value of the raw regressor Gram ``V - lam I``."""
    gram = me.V - me.lam * np.eye(me.V.shape[0])
    return float(max(np.linalg.svd(gram, compute_uv=False).min(), 0.0))


def markov_error(me, truth) -> float:
    M = me.M_hat if isinstance(me, MarkovEstimate) else np.asarray(me, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if M.shape != truth.shape:
        raise DimensionMismatch(f"{M.shape} vs {truth.shape}")
    return float(np.linalg.norm(M - truth, 2))

"""Simulation of the true partially observed linear system and its stage cost.

    x_{t+1} = A x_t + B u_t + w_t,   w_t ~ N(0, sw^2 I)
    y_t     = C x_t + z_t,           z_t ~ N(0, sz^2 I)

Each step draws w_t and then z_t from the run's generator, so a trajectory
depends only on the seed and the applied inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import control_math as cm
from .errors import AssumptionViolated, DimensionMismatch, Diverged, InvalidNoise, NonFiniteInput

DIVERGENCE_LIMIT = 1e9


@dataclass(frozen=True)
class SystemParams:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        A, B, C = cm.as_matrix(self.A, "A"), cm.as_matrix(self.B, "B"), cm.as_matrix(self.C, "C")
        if A.shape[0] != A.shape[1]:
            raise DimensionMismatch(f"A must be square, got {A.shape}")
        if B.shape[0] != A.shape[0]:
            raise DimensionMismatch(f"B must have {A.shape[0]} rows, got {B.shape}")
        if C.shape[1] != A.shape[0]:
            raise DimensionMismatch(f"C must have {A.shape[0]} columns, got {C.shape}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)

    @property
    def n_x(self) -> int:
        return self.A.shape[0]

    @property
    def n_u(self) -> int:
        return self.B.shape[1]

    @property
    def n_y(self) -> int:
        return self.C.shape[0]

    def failed_assumptions(self) -> list[str]:
        failed = []
        if cm.spectral_radius(self.A) >= 1.0:
            failed.append("A is not stable")
        if not cm.is_controllable(self.A, self.B):
            failed.append("(A, B) is not controllable")
        if not cm.is_observable(self.A, self.C):
            failed.append("(A, C) is not observable")
        return failed


@dataclass(frozen=True)
class NoiseParams:
    """Standard deviations of the process and measurement noise.

    Zero values are only accepted through :meth:`for_testing`.
    """

    sigma_w: float
    sigma_z: float
    test_mode: bool = field(default=False, compare=False)

    def __post_init__(self):
        lo_ok = (lambda s: s >= 0) if self.test_mode else (lambda s: s > 0)
        for name in ("sigma_w", "sigma_z"):
            s = getattr(self, name)
            if not (np.isfinite(s) and lo_ok(s)):
                raise InvalidNoise(f"{name} must be {'nonnegative' if self.test_mode else 'positive'}, got {s}")

    @classmethod
    def for_testing(cls, sigma_w: float, sigma_z: float) -> "NoiseParams":
        return cls(float(sigma_w), float(sigma_z), test_mode=True)


@dataclass(frozen=True)
class CostParams:
    Q: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        Q, R = cm.as_matrix(self.Q, "Q"), cm.as_matrix(self.R, "R")
        for name, M in (("Q", Q), ("R", R)):
            if M.shape[0] != M.shape[1] or not np.allclose(M, M.T):
                raise ValueError(f"{name} must be symmetric")
            if np.linalg.eigvalsh(M).min() <= 0:
                raise ValueError(f"{name} must be positive definite")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)


@dataclass
class PlantState:
    x: np.ndarray
    t: int
    rng: np.random.Generator


def init_steady_state(params: SystemParams, noise: NoiseParams, seed) -> PlantState:
    """Start the plant with ``x_0 ~ N(0, Sigma)``, Sigma from the filter DARE."""
    failed = params.failed_assumptions()
    if failed:
        raise AssumptionViolated(failed)
    rng = np.random.default_rng(seed)
    if noise.sigma_w == 0.0:
        Sigma = np.zeros((params.n_x, params.n_x))
    else:
        Sigma = cm.solve_filter_dare(params.A, params.C, noise.sigma_w, noise.sigma_z).value
    x0 = cm.sample_gaussian(np.zeros(params.n_x), Sigma, rng)
    return PlantState(x0, 0, rng)


def _draw_noise(rng, params, noise):
    w = noise.sigma_w * rng.standard_normal(params.n_x)
    z = noise.sigma_z * rng.standard_normal(params.n_y)
    return w, z


def _advance(x, params, u, w, t):
    u = np.asarray(u, dtype=float).reshape(-1)
    if u.size != params.n_u:
        raise DimensionMismatch(f"u must have length {params.n_u}, got {u.size}")
    if not np.all(np.isfinite(u)):
        raise NonFiniteInput(f"non-finite input at t={t}")
    x_next = params.A @ x + params.B @ u + w
    if not np.all(np.isfinite(x_next)) or np.linalg.norm(x_next) > DIVERGENCE_LIMIT:
        raise Diverged(f"state norm exceeded {DIVERGENCE_LIMIT:g} at t={t + 1}")
    return x_next


def step(state: PlantState, params: SystemParams, noise: NoiseParams, u) -> tuple[PlantState, np.ndarray]:
    """Emit ``y_t`` for the current state, then advance with ``u_t``."""
    w, z = _draw_noise(state.rng, params, noise)
    y = params.C @ state.x + z
    x_next = _advance(state.x, params, u, w, state.t)
    return PlantState(x_next, state.t + 1, state.rng), y


class Plant:
    """Observe-then-act wrapper around :func:`step` for closed-loop simulation.

    ``observe()`` draws the step's noise (same order as :func:`step`) and
    returns ``y_t``; ``apply(u)`` then advances to ``t + 1``.
    """

    def __init__(self, params: SystemParams, noise: NoiseParams, state: PlantState):
        self.params = params
        self.noise = noise
        self.state = state
        self._pending = None

    @property
    def t(self) -> int:
        return self.state.t

    @property
    def rng(self) -> np.random.Generator:
        return self.state.rng

    def observe(self) -> np.ndarray:
        if self._pending is None:
            w, z = _draw_noise(self.state.rng, self.params, self.noise)
            self._pending = (w, self.params.C @ self.state.x + z)
        return self._pending[1]

    def apply(self, u) -> None:
        if self._pending is None:
            raise RuntimeError("observe() must be called before apply()")
        w = self._pending[0]
        x_next = _advance(self.state.x, self.params, u, w, self.state.t)
        self.state = PlantState(x_next, self.state.t + 1, self.state.rng)
        self._pending = None


def stage_cost(y, u, cost: CostParams) -> float:
    y = np.asarray(y, dtype=float).reshape(-1)
    u = np.asarray(u, dtype=float).reshape(-1)
    if y.size != cost.Q.shape[0] or u.size != cost.R.shape[0]:
        raise DimensionMismatch(f"y{y.shape}/u{u.shape} do not match Q{cost.Q.shape}/R{cost.R.shape}")
    return float(y @ cost.Q @ y + u @ cost.R @ u)

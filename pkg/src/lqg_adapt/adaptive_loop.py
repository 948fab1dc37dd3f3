"""Episodic certainty-equivalence LQG control with naive or FIM-gated exploration.

A run is a warm-up of ``T_w`` steps with i.i.d. Gaussian inputs followed by
episodes ``k = 0 .. k_fin - 1`` spanning ``[2^k T_w, 2^{k+1} T_w)``.  At each
episode start the Markov parameters are re-estimated from all data so far,
realized with Ho-Kalman, and the certainty-equivalent gain is recomputed; the
model is then frozen for the whole episode.

Random draws per step, in order: process noise, measurement noise, then one
standard-normal vector of length ``n_u`` for the injected input.  The input
draw is consumed by every algorithm (scaled by zero where nothing is
injected) so runs with the same seed share noise realizations.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import control_math as cm
from .errors import LqgAdaptError, RankDeficient, RealizationFailed, RunFailed
from .exploration import FimAccumulator, NaiveSchedule, naive_sigma_sq
from .filtering import compute_gains, control_gain, optimal_cost
from .plant import CostParams, NoiseParams, Plant, SystemParams, init_steady_state
from .sysid import (
    DEFAULT_LAMBDA,
    MarkovRegression,
    TruncationWarning,
    build_regressor,
    default_split,
    ho_kalman,
    markov_error,
    markov_from_params,
    min_sv_gram,
)

ALGORITHMS = ("naive", "if2e", "cec_only", "optimal")
CEC_DARE_TOL = 1e-9


@dataclass(frozen=True)
class EpisodeSchedule:
    T_w: int
    k_fin: int

    def __post_init__(self):
        if self.T_w < 1 or self.k_fin < 0:
            raise ValueError("need T_w >= 1 and k_fin >= 0")

    @property
    def horizon(self) -> int:
        return self.T_w * 2**self.k_fin

    def episode_start(self, k: int) -> int:
        return self.T_w * 2**k

    def episode_of(self, t: int) -> int:
        """Episode index of step ``t``; -1 during the warm-up."""
        if t < self.T_w:
            return -1
        return (t // self.T_w).bit_length() - 1


@dataclass(frozen=True)
class AlgoConfig:
    algorithm: str = "naive"
    H: int = 12
    lam: float = DEFAULT_LAMBDA
    gamma: float = 0.5
    alpha: float = 1.0
    c_tol: float = 1.0
    sigma_u: float = np.sqrt(0.1)
    seed: int = 0
    lambda_min_stride: int = 1
    oracle: bool = True
    d1: int | None = None
    d2: int | None = None

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if self.H < 1 or self.lambda_min_stride < 1:
            raise ValueError("H and lambda_min_stride must be at least 1")
        for name in ("lam", "gamma", "alpha", "c_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.sigma_u >= 0:
            raise ValueError("sigma_u must be nonnegative")

    def split(self) -> tuple[int, int]:
        if self.d1 is None or self.d2 is None:
            return default_split(self.H)
        return self.d1, self.d2


@dataclass
class RunTrace:
    """Per-step record of one run.

    Diagnostics sampled at episode ends (``min_sv_gram``, ``markov_error``)
    sit at the last step whose data entered the estimate and are NaN
    elsewhere.  ``lambda_min`` is NaN where no FIM exists yet;
    ``lambda_fresh`` marks steps where it was recomputed rather than carried.
    """

    algorithm: str
    seed: int
    T_w: int
    J_star: float
    y: np.ndarray
    u: np.ndarray
    cost: np.ndarray
    episode: np.ndarray
    sigma_eta_sq: np.ndarray
    lambda_min: np.ndarray
    lambda_fresh: np.ndarray
    min_sv_gram: np.ndarray
    markov_error: np.ndarray
    n_steps: int = 0
    switch_t: int | None = None
    episodes: list = field(default_factory=list)

    @classmethod
    def allocate(cls, algorithm, seed, T_w, J_star, T, n_y, n_u):
        nan = lambda: np.full(T, np.nan)
        return cls(
            algorithm, seed, T_w, J_star,
            y=np.zeros((T, n_y)), u=np.zeros((T, n_u)), cost=np.zeros(T),
            episode=np.full(T, -1, dtype=int), sigma_eta_sq=np.zeros(T),
            lambda_min=nan(), lambda_fresh=np.zeros(T, dtype=bool),
            min_sv_gram=nan(), markov_error=nan(),
        )

    def truncate(self, n: int) -> None:
        for name in ("y", "u", "cost", "episode", "sigma_eta_sq", "lambda_min",
                     "lambda_fresh", "min_sv_gram", "markov_error"):
            setattr(self, name, getattr(self, name)[:n])
        self.n_steps = n

    @property
    def regret_increment(self) -> np.ndarray:
        return self.cost[: self.n_steps] - self.J_star

    @property
    def average_cost(self) -> float:
        return float(np.mean(self.cost[: self.n_steps]))

    @property
    def switch_step(self) -> int | None:
        """Steps into the adaptive phase at which FIM-scaled exploration took over."""
        return None if self.switch_t is None else self.switch_t - self.T_w


def regret(trace: RunTrace) -> np.ndarray:
    """Cumulative regret ``sum_{s <= t} (c_s - J*)`` for every prefix of the run."""
    return np.cumsum(trace.regret_increment)


class _ReplayPlant:
    """Feeds logged outputs while consuming the same random stream as :class:`Plant`."""

    def __init__(self, ys, n_x, n_y, seed):
        self.ys = np.asarray(ys)
        self.n_x, self.n_y = n_x, n_y
        self.rng = np.random.default_rng(seed)
        self.rng.standard_normal(n_x)  # x_0
        self.t = 0
        self._seen = False

    def observe(self):
        if not self._seen:
            self.rng.standard_normal(self.n_x)
            self.rng.standard_normal(self.n_y)
            self._seen = True
        return self.ys[self.t]

    def apply(self, u):
        self._seen = False
        self.t += 1


class AdaptiveRun:
    """State of a single run: plant, estimator, CEC filter and trace."""

    def __init__(self, config: AlgoConfig, system: SystemParams, noise: NoiseParams, cost: CostParams,
                 schedule: EpisodeSchedule, plant=None):
        if schedule.T_w < config.H:
            raise ValueError(f"T_w={schedule.T_w} must be at least H={config.H}")
        self.config, self.system, self.noise, self.cost, self.schedule = config, system, noise, cost, schedule
        self.n_x, self.n_u, self.n_y = system.n_x, system.n_u, system.n_y
        self.T = schedule.horizon
        self.true_gains = compute_gains(system, noise, cost)
        J_star = optimal_cost(system, noise, cost)
        if plant is None:
            plant = Plant(system, noise, init_steady_state(system, noise, config.seed))
        self.plant = plant
        self.trace = RunTrace.allocate(config.algorithm, config.seed, schedule.T_w, J_star,
                                       self.T, self.n_y, self.n_u)
        self.t = 0
        H = config.H
        self.regression = MarkovRegression((self.n_y + self.n_u) * H, self.n_y, config.lam)
        self.fim = None
        if config.algorithm in ("naive", "if2e"):
            self.fim = FimAccumulator((self.n_y + self.n_u) * H, self.n_y, config.alpha, config.c_tol)
        self.naive = NaiveSchedule(config.gamma)
        self.true_markov = markov_from_params(system, self.true_gains.F, H) if config.oracle else None
        self._lam = np.nan
        self.model = None

    # -- per-step plumbing -------------------------------------------------

    def _phi(self, t):
        return build_regressor(self.trace.y, self.trace.u, t, self.config.H)

    def _observe(self):
        y = np.array(self.plant.observe(), dtype=float)
        self.trace.y[self.t] = y
        self._phi_t = None
        if self.t >= self.config.H:
            self._phi_t = self._phi(self.t)
            self.regression.add(self._phi_t, y)
        return y

    def _act(self, y, u_nominal, sigma_sq):
        xi = self.plant.rng.standard_normal(self.n_u)
        u = u_nominal + np.sqrt(sigma_sq) * xi
        self.plant.apply(u)
        t = self.t
        tr = self.trace
        tr.u[t] = u
        tr.cost[t] = y @ self.cost.Q @ y + u @ self.cost.R @ u
        tr.sigma_eta_sq[t] = sigma_sq
        tr.episode[t] = self.schedule.episode_of(t)
        self.t += 1
        tr.n_steps = self.t
        return u

    def _fim_step(self, t, y, y_pred):
        """Fold step ``t`` into the FIM and return the current lambda_min."""
        fim = self.fim
        fim.update_innovation(y, y_pred)
        if self._phi_t is not None:
            fim.update_fim(self._phi_t)
        stride = self.config.lambda_min_stride
        fresh = (t - self.schedule.T_w) % stride == 0 or np.isnan(self._lam)
        if fresh:
            self._lam = fim.min_eig()
        self.trace.lambda_min[t] = self._lam
        self.trace.lambda_fresh[t] = fresh
        return self._lam

    # -- phases ------------------------------------------------------------

    def run_warmup(self) -> None:
        sigma_sq = self.config.sigma_u**2
        zero = np.zeros(self.n_u)
        for _ in range(self.schedule.T_w):
            y = self._observe()
            self._act(y, zero, sigma_sq)

    def _estimate(self):
        """Re-estimate at the current step from data ``H .. t-1``; record diagnostics."""
        t = self.t
        me = self.regression.estimate()
        self.trace.min_sv_gram[t - 1] = min_sv_gram(me)
        if self.true_markov is not None:
            self.trace.markov_error[t - 1] = markov_error(me, self.true_markov)
        return me

    def _realize(self, k):
        me = self._estimate()
        d1, d2 = self.config.split()
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", TruncationWarning)
            try:
                model = ho_kalman(me, self.n_x, self.config.H, d1, d2, n_y=self.n_y)
            except RankDeficient as exc:
                raise RealizationFailed(str(exc)) from exc
        K, _ = control_gain(model.A_hat, model.B_hat, model.C_hat, self.cost.Q, self.cost.R, tol=CEC_DARE_TOL)
        self.trace.episodes.append({
            "k": k, "start": self.t,
            "rho_closed_loop_est": cm.spectral_radius(model.A_hat - model.B_hat @ K),
            "abar_tail": model.abar_tail, "truncation_warning": bool(caught),
            "a_singular": model.a_singular,
        })
        self.model, self.K_hat = model, K

    def _backfill_fim(self):
        # Warm-up residuals under the first estimated model, so the FIM sum can start at t = H.
        m = self.model
        x_pred = np.zeros(self.n_x)
        for j in range(self.schedule.T_w):
            y = self.trace.y[j]
            y_pred = m.C_hat @ x_pred
            self.fim.update_innovation(y, y_pred)
            if j >= self.config.H:
                self.fim.update_fim(self._phi(j))
            x_filt = x_pred + m.L_hat @ (y - y_pred)
            x_pred = m.A_hat @ x_filt + m.B_hat @ self.trace.u[j]

    def run_episode(self, k: int) -> None:
        start, end = self.schedule.episode_start(k), self.schedule.episode_start(k + 1)
        if self.t != start:
            raise RuntimeError(f"episode {k} must start at t={start}, run is at t={self.t}")
        self._realize(k)
        if k == 0 and self.fim is not None:
            self._backfill_fim()
        m, K = self.model, self.K_hat
        A_hat, B_hat, C_hat, L_hat = m.A_hat, m.B_hat, m.C_hat, m.L_hat
        algo = self.config.algorithm
        naive_var = naive_sigma_sq(self.naive, start)
        x_pred = np.zeros(self.n_x)  # new realization, new coordinates
        for t in range(start, end):
            y = self._observe()
            y_pred = C_hat @ x_pred
            x_filt = x_pred + L_hat @ (y - y_pred)
            lam = self._fim_step(t, y, y_pred) if self.fim is not None else np.nan
            if algo == "naive":
                sigma_sq = naive_var
            elif algo == "if2e":
                sigma_sq, using_fim = self.fim.sigma_sq(self.naive, start, lambda_min=lam)
                if using_fim and self.trace.switch_t is None:
                    self.trace.switch_t = t
            else:
                sigma_sq = 0.0
            u = self._act(y, -K @ x_filt, sigma_sq)
            x_pred = A_hat @ x_filt + B_hat @ u

    def run_optimal(self) -> None:
        g = self.true_gains
        A, B, C = self.system.A, self.system.B, self.system.C
        x_pred = np.zeros(self.n_x)
        for _ in range(self.T):
            y = self._observe()
            x_filt = x_pred + g.L @ (y - C @ x_pred)
            u = self._act(y, -g.K @ x_filt, 0.0)
            x_pred = A @ x_filt + B @ u

    def run(self) -> RunTrace:
        episode = -1
        try:
            if self.config.algorithm == "optimal":
                self.run_optimal()
            else:
                self.run_warmup()
                for episode in range(self.schedule.k_fin):
                    self.run_episode(episode)
                if self.t > self.config.H:
                    self._estimate()
        except LqgAdaptError as exc:
            self.trace.truncate(self.t)
            err = RunFailed(episode, exc)
            err.trace = self.trace
            raise err from exc
        return self.trace


def run_full(config: AlgoConfig, system: SystemParams, noise: NoiseParams, cost: CostParams,
             schedule: EpisodeSchedule) -> RunTrace:
    """Simulate one complete run; raises :class:`RunFailed` (with ``.trace``) on abort."""
    return AdaptiveRun(config, system, noise, cost, schedule).run()


def replay_inputs(trace: RunTrace, config: AlgoConfig, system: SystemParams, noise: NoiseParams,
                  cost: CostParams, schedule: EpisodeSchedule) -> np.ndarray:
    """Recompute every input of ``trace`` from its logged outputs and the seed alone.

    The true state is never touched, so agreement with ``trace.u`` shows the
    controller used nothing beyond the observation history.
    """
    plant = _ReplayPlant(trace.y, system.n_x, system.n_y, config.seed)
    run = AdaptiveRun(config, system, noise, cost, schedule, plant=plant)
    return run.run().u

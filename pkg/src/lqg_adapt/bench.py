"""Experiment configuration, Monte Carlo orchestration and CSV output."""

from __future__ import annotations

import csv
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .adaptive_loop import ALGORITHMS, AlgoConfig, EpisodeSchedule, RunTrace, regret, run_full
from .errors import ParseError, RunFailed, ValidationError
from .filtering import optimal_cost
from .plant import CostParams, NoiseParams, SystemParams
from .sysid import default_split

log = logging.getLogger(__name__)

THREADS_ENV = "LQG_ADAPT_THREADS"
TRACE_COLUMNS = ("t", "episode", "cost", "regret", "sigma_eta_sq", "lambda_min", "min_sv_gram", "markov_error")


@dataclass(frozen=True)
class ExperimentConfig:
    system: SystemParams
    noise: NoiseParams
    cost: CostParams
    schedule: EpisodeSchedule
    H: int
    lam: float
    gamma: float
    alpha: float
    c_tol: float
    sigma_u_sq: float
    d1: int
    d2: int
    seeds: tuple
    algorithms: tuple = ("naive", "if2e")
    lambda_min_stride: int = 1
    output_dir: str = "results"
    oracle: bool = True

    def algo_config(self, algorithm: str, seed: int) -> AlgoConfig:
        return AlgoConfig(
            algorithm=algorithm, H=self.H, lam=self.lam, gamma=self.gamma, alpha=self.alpha,
            c_tol=self.c_tol, sigma_u=float(np.sqrt(self.sigma_u_sq)), seed=int(seed),
            lambda_min_stride=self.lambda_min_stride, oracle=self.oracle, d1=self.d1, d2=self.d2,
        )


def bundled_config_path(name: str = "webserver.json") -> Path:
    return Path(str(resources.files("lqg_adapt") / "data" / name))


def load_config(path) -> ExperimentConfig:
    """Parse and validate a JSON experiment file.

    Every problem found is reported at once through :class:`ValidationError`;
    malformed JSON raises :class:`ParseError` with the offending position.
    """
    text = Path(path).read_text(encoding="utf-8")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return parse_config(raw)


def _matrix(raw, key, errors):
    try:
        M = np.array(raw[key], dtype=float)
    except KeyError:
        errors.append(f"missing field '{key}'")
        return None
    except (TypeError, ValueError):
        errors.append(f"'{key}' must be a nested array of numbers")
        return None
    if M.ndim == 0:
        M = M.reshape(1, 1)
    if M.ndim != 2:
        errors.append(f"'{key}' must be a 2-D array (row-major nested lists)")
        return None
    if not np.all(np.isfinite(M)):
        errors.append(f"'{key}' has non-finite entries")
        return None
    return M


def _section(raw, key, errors):
    sec = raw.get(key)
    if not isinstance(sec, dict):
        errors.append(f"missing or malformed section '{key}'")
        return {}
    return sec


def _number(sec, key, errors, *, default=None, positive=True, integer=False, minimum=None):
    if key not in sec:
        if default is None:
            errors.append(f"missing field '{key}'")
        return default
    val = sec[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        errors.append(f"'{key}' must be a number")
        return default
    if integer and int(val) != val:
        errors.append(f"'{key}' must be an integer")
        return default
    if positive and not val > 0:
        errors.append(f"'{key}' must be positive")
    if minimum is not None and val < minimum:
        errors.append(f"'{key}' must be at least {minimum}")
    return int(val) if integer else float(val)


def _pd(M, name, size, errors):
    if M is None:
        return False
    ok = True
    if M.shape != (size, size):
        errors.append(f"{name} must be {size}x{size}, got {M.shape[0]}x{M.shape[1]}")
        return False
    if not np.allclose(M, M.T):
        errors.append(f"{name} must be symmetric")
        ok = False
    elif np.linalg.eigvalsh(M).min() <= 0:
        errors.append(f"{name} must be positive definite")
        ok = False
    return ok


def parse_config(raw: dict) -> ExperimentConfig:
    errors: list[str] = []
    if not isinstance(raw, dict):
        raise ValidationError(["top level must be a JSON object"])
    sys_sec = _section(raw, "system", errors)
    A, B, C = (_matrix(sys_sec, k, errors) for k in ("A", "B", "C"))
    system = None
    n_x = n_u = n_y = None
    if A is not None and B is not None and C is not None:
        if A.shape[0] != A.shape[1]:
            errors.append("A must be square")
        elif B.shape[0] != A.shape[0] or C.shape[1] != A.shape[0]:
            errors.append(f"B needs {A.shape[0]} rows and C needs {A.shape[0]} columns")
        else:
            system = SystemParams(A, B, C)
            n_x, n_u, n_y = system.n_x, system.n_u, system.n_y
            errors.extend(f"true system: {msg}" for msg in system.failed_assumptions())

    noise_sec = _section(raw, "noise", errors)
    sw2 = _number(noise_sec, "sigma_w_sq", errors)
    sz2 = _number(noise_sec, "sigma_z_sq", errors)

    cost_sec = _section(raw, "cost", errors)
    Q, R = _matrix(cost_sec, "Q", errors), _matrix(cost_sec, "R", errors)
    q_ok = _pd(Q, "Q", n_y if n_y else (Q.shape[0] if Q is not None else 0), errors)
    r_ok = _pd(R, "R", n_u if n_u else (R.shape[0] if R is not None else 0), errors)

    sched = _section(raw, "schedule", errors)
    T_w = _number(sched, "T_w", errors, integer=True)
    k_fin = _number(sched, "k_fin", errors, integer=True, positive=False, minimum=0)

    algo = _section(raw, "algo", errors)
    H = _number(algo, "H", errors, integer=True)
    lam = _number(algo, "lambda", errors, default=1e-3)
    gamma = _number(algo, "gamma", errors)
    alpha = _number(algo, "alpha", errors)
    c_tol = _number(algo, "c_tol", errors)
    sigma_u_sq = _number(algo, "sigma_u_sq", errors)
    d1 = _number(algo, "d1", errors, integer=True, default=-1, positive=False)
    d2 = _number(algo, "d2", errors, integer=True, default=-1, positive=False)
    if H is not None and H >= 1:
        if d1 == -1 or d2 == -1:
            d1, d2 = default_split(H)
        if T_w is not None and T_w < H:
            errors.append(f"T_w={T_w} must be at least H={H}")
        if n_x is not None:
            if H < 2 * n_x + 1:
                errors.append(f"Hankel constraint violated: H={H} < 2*n_x+1={2 * n_x + 1}, "
                              "so no split d1 + d2 + 1 = H with d1, d2 >= n_x exists")
            elif d1 < n_x or d2 < n_x or d1 + d2 + 1 != H:
                errors.append(f"Hankel constraint violated: need d1, d2 >= n_x={n_x} and d1 + d2 + 1 = H={H}, "
                              f"got d1={d1}, d2={d2}")

    seeds = _parse_seeds(raw.get("seeds", {"base_seed": 0, "n_runs": 1}), errors)
    algorithms = raw.get("algorithms", ["naive", "if2e"])
    if not isinstance(algorithms, list) or not algorithms or any(a not in ALGORITHMS for a in algorithms):
        errors.append(f"'algorithms' must be a non-empty list drawn from {list(ALGORITHMS)}")
        algorithms = []
    stride = _number(raw, "lambda_min_stride", errors, integer=True, default=1)
    output_dir = raw.get("output_dir", "results")
    if not isinstance(output_dir, str):
        errors.append("'output_dir' must be a string")
    oracle = raw.get("oracle_diagnostics", True)
    if not isinstance(oracle, bool):
        errors.append("'oracle_diagnostics' must be true or false")

    if errors:
        raise ValidationError(errors)
    return ExperimentConfig(
        system=system,
        noise=NoiseParams(float(np.sqrt(sw2)), float(np.sqrt(sz2))),
        cost=CostParams(Q, R) if q_ok and r_ok else None,
        schedule=EpisodeSchedule(T_w, k_fin),
        H=H, lam=lam, gamma=gamma, alpha=alpha, c_tol=c_tol, sigma_u_sq=sigma_u_sq, d1=d1, d2=d2,
        seeds=tuple(seeds), algorithms=tuple(algorithms), lambda_min_stride=stride,
        output_dir=output_dir, oracle=oracle,
    )


def _parse_seeds(seeds_raw, errors):
    if isinstance(seeds_raw, list):
        if not seeds_raw or not all(isinstance(s, int) and not isinstance(s, bool) and s >= 0 for s in seeds_raw):
            errors.append("'seeds' list must hold nonnegative integers")
            return []
        return seeds_raw
    if isinstance(seeds_raw, dict):
        base = _number(seeds_raw, "base_seed", errors, integer=True, positive=False, minimum=0, default=0)
        n = _number(seeds_raw, "n_runs", errors, integer=True)
        if n is None or base is None:
            return []
        return list(range(base, base + n))
    errors.append("'seeds' must be a list or {base_seed, n_runs}")
    return []


# -- running ---------------------------------------------------------------


@dataclass
class RunOutcome:
    algorithm: str
    seed: int
    trace: RunTrace | None
    error: str | None = None
    failed_episode: int | None = None


@dataclass
class AggregateResult:
    """Per-algorithm means over successful runs; ``n`` accompanies every mean."""

    J_star: float
    horizon: int
    regret_mean: dict = field(default_factory=dict)
    regret_std: dict = field(default_factory=dict)
    lambda_mean: dict = field(default_factory=dict)
    lambda_std: dict = field(default_factory=dict)
    lambda_fresh: dict = field(default_factory=dict)
    n: dict = field(default_factory=dict)
    mean_avg_cost: dict = field(default_factory=dict)
    std_avg_cost: dict = field(default_factory=dict)
    mean_switch_step: dict = field(default_factory=dict)
    failed: dict = field(default_factory=dict)


def _one_run(args) -> RunOutcome:
    cfg, algorithm, seed = args
    try:
        trace = run_full(cfg.algo_config(algorithm, seed), cfg.system, cfg.noise, cfg.cost, cfg.schedule)
    except RunFailed as exc:
        return RunOutcome(algorithm, seed, None, f"{type(exc.cause).__name__}: {exc.cause}", exc.episode)
    return RunOutcome(algorithm, seed, trace)


def resolve_parallel(parallel: int | None) -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            parallel = int(env)
        except ValueError:
            log.warning("ignoring non-integer %s=%r", THREADS_ENV, env)
    return max(1, int(parallel or 1))


def run_experiment(config: ExperimentConfig, algorithms=None, seeds=None, out_dir=None, parallel: int | None = 1,
                   write_traces: bool = True):
    """Run every (algorithm, seed) pair, aggregate, and write CSVs to ``out_dir``.

    Returns ``(AggregateResult, outcomes)``.  Seeds are shared across
    algorithms so comparisons use common random numbers.
    """
    algorithms = tuple(algorithms or config.algorithms)
    seeds = tuple(config.seeds if seeds is None else seeds)
    out = Path(out_dir or config.output_dir)
    tasks = [(config, a, s) for a in algorithms for s in seeds]
    workers = resolve_parallel(parallel)
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_one_run, tasks))
    else:
        outcomes = [_one_run(t) for t in tasks]
    for o in outcomes:
        if o.error:
            log.warning("run failed: algo=%s seed=%d episode=%s: %s", o.algorithm, o.seed, o.failed_episode, o.error)
    J_star = optimal_cost(config.system, config.noise, config.cost)
    result = aggregate(outcomes, algorithms, J_star, config.schedule.horizon)
    emit_csv(result, outcomes, out, write_traces=write_traces)
    return result, outcomes


def _mean_std(rows):
    arr = np.asarray(rows, dtype=float)
    n = arr.shape[0]
    mean = arr.mean(axis=0)
    std = arr.std(axis=0, ddof=1) if n > 1 else np.full(arr.shape[1:], np.nan)
    return mean, std


def aggregate(outcomes, algorithms, J_star: float, horizon: int) -> AggregateResult:
    res = AggregateResult(J_star=J_star, horizon=horizon)
    for algo in algorithms:
        mine = [o for o in outcomes if o.algorithm == algo]
        ok = [o.trace for o in mine if o.trace is not None]
        res.failed[algo] = [(o.seed, o.failed_episode, o.error) for o in mine if o.trace is None]
        res.n[algo] = len(ok)
        if not ok:
            continue
        res.regret_mean[algo], res.regret_std[algo] = _mean_std([regret(tr) for tr in ok])
        costs = [tr.average_cost for tr in ok]
        res.mean_avg_cost[algo] = float(np.mean(costs))
        res.std_avg_cost[algo] = float(np.std(costs, ddof=1)) if len(costs) > 1 else float("nan")
        lam = np.array([tr.lambda_min for tr in ok])
        if not np.all(np.isnan(lam)):
            res.lambda_mean[algo], res.lambda_std[algo] = _mean_std(lam)
            res.lambda_fresh[algo] = np.all([tr.lambda_fresh for tr in ok], axis=0)
        switches = [tr.switch_step for tr in ok if tr.switch_step is not None]
        res.mean_switch_step[algo] = float(np.mean(switches)) if switches else float("nan")
    return res


# -- output ----------------------------------------------------------------


def fmt(x) -> str:
    """17 significant digits; NaN/None become an empty field."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if np.isnan(x):
        return ""
    return format(x, ".17g")


def _writer(path: Path):
    fh = open(path, "w", encoding="utf-8", newline="")
    return fh, csv.writer(fh, lineterminator="\n")


def write_trace(trace: RunTrace, path: Path) -> None:
    fh, w = _writer(path)
    with fh:
        w.writerow(TRACE_COLUMNS)
        reg = regret(trace)
        for t in range(trace.n_steps):
            w.writerow([fmt(t), fmt(int(trace.episode[t])), fmt(trace.cost[t]), fmt(reg[t]),
                        fmt(trace.sigma_eta_sq[t]), fmt(trace.lambda_min[t]), fmt(trace.min_sv_gram[t]),
                        fmt(trace.markov_error[t])])


def emit_csv(result: AggregateResult, outcomes, out_dir, write_traces: bool = True) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    algos = list(result.n)

    fh, w = _writer(out / "regret_mean.csv")
    with fh:
        w.writerow(("t", "algo", "mean", "std", "n"))
        for a in algos:
            if a in result.regret_mean:
                for t, (m, s) in enumerate(zip(result.regret_mean[a], result.regret_std[a])):
                    w.writerow((t, a, fmt(m), fmt(s), result.n[a]))

    fh, w = _writer(out / "fim_lambda_min.csv")
    with fh:
        w.writerow(("t", "algo", "mean", "std", "stride_flag"))
        for a in algos:
            if a in result.lambda_mean:
                for t, (m, s, f) in enumerate(zip(result.lambda_mean[a], result.lambda_std[a], result.lambda_fresh[a])):
                    if not np.isnan(m):
                        w.writerow((t, a, fmt(m), fmt(s), fmt(bool(f))))

    fh, w = _writer(out / "summary.csv")
    with fh:
        w.writerow(("algo", "mean_avg_cost", "std_avg_cost", "mean_switch_step", "failed_runs", "J_star", "n_runs"))
        for a in algos:
            w.writerow((a, fmt(result.mean_avg_cost.get(a)), fmt(result.std_avg_cost.get(a)),
                        fmt(result.mean_switch_step.get(a)), len(result.failed[a]), fmt(result.J_star), result.n[a]))

    fh, w = _writer(out / "failures.csv")
    with fh:
        w.writerow(("algo", "seed", "episode", "error"))
        for a in algos:
            for seed, ep, err in result.failed[a]:
                w.writerow((a, seed, fmt(ep), err))

    if write_traces:
        for o in outcomes:
            if o.trace is not None:
                write_trace(o.trace, out / f"trace_{o.algorithm}_{o.seed}.csv")


def with_overrides(config: ExperimentConfig, **kw) -> ExperimentConfig:
    return replace(config, **kw)

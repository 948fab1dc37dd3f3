import warnings

import numpy as np
import pytest

from lqg_adapt import adaptive_loop as al
from lqg_adapt.adaptive_loop import AlgoConfig, EpisodeSchedule, regret, replay_inputs, run_full
from lqg_adapt.errors import RankDeficient, RunFailed
from lqg_adapt.filtering import optimal_cost
from lqg_adapt.plant import CostParams, NoiseParams, SystemParams
from lqg_adapt.sysid import TruncationWarning

SYS = SystemParams([[0.6, 0.2], [0.0, 0.4]], [[1.0], [0.5]], [[1.0, 0.3]])
NOISE = NoiseParams(0.3, 0.2)
COST = CostParams([[1.0]], [[0.1]])
SCHED = EpisodeSchedule(20, 4)


@pytest.fixture(autouse=True)
def _quiet():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncationWarning)
        yield


def run(algo, seed=0, schedule=SCHED, **kw):
    return run_full(AlgoConfig(algorithm=algo, H=5, seed=seed, **kw), SYS, NOISE, COST, schedule)


def test_schedule():
    s = EpisodeSchedule(25, 11)
    assert s.horizon == 51200
    assert [s.episode_of(t) for t in (0, 24, 25, 49, 50, 99, 100, 51199)] == [-1, -1, 0, 0, 1, 1, 2, 10]
    with pytest.raises(ValueError):
        EpisodeSchedule(0, 3)


def test_warmup_only():
    tr = run("naive", schedule=EpisodeSchedule(20, 0))
    assert tr.n_steps == 20
    assert np.all(tr.episode == -1)
    np.testing.assert_allclose(tr.sigma_eta_sq, 0.1)


def test_full_run_shape_and_episodes():
    tr = run("naive")
    assert tr.n_steps == SCHED.horizon
    assert [e["start"] for e in tr.episodes] == [20, 40, 80, 160]
    for k in range(4):
        seg = tr.sigma_eta_sq[20 * 2**k : 20 * 2 ** (k + 1)]
        np.testing.assert_array_equal(seg, 0.5 / np.sqrt(20 * 2**k))
    ends = [19, 39, 79, 159, 319]
    assert np.all(np.isfinite(tr.min_sv_gram[ends]))
    assert np.isnan(np.delete(tr.min_sv_gram, ends)).all()


def test_naive_and_if2e_share_prefix_until_switch():
    n, f = run("naive", seed=3), run("if2e", seed=3)
    assert f.switch_t is not None and f.switch_t >= SCHED.T_w
    s = f.switch_t
    np.testing.assert_array_equal(n.u[:s], f.u[:s])
    np.testing.assert_array_equal(n.y[: s + 1], f.y[: s + 1])
    np.testing.assert_array_equal(n.lambda_min[:s], f.lambda_min[:s])
    assert f.sigma_eta_sq[s] == pytest.approx(1.0 / f.lambda_min[s])


def test_if2e_exploration_after_switch_follows_fim():
    f = run("if2e", seed=1, alpha=2.0)
    after = slice(f.switch_t, f.n_steps)
    np.testing.assert_allclose(f.sigma_eta_sq[after], 2.0 / f.lambda_min[after])


def test_lambda_min_stride_carries_values():
    tr = run("naive", lambda_min_stride=7)
    fresh = np.flatnonzero(tr.lambda_fresh)
    assert np.all((fresh - SCHED.T_w) % 7 == 0)
    for t in range(SCHED.T_w + 1, tr.n_steps):
        if not tr.lambda_fresh[t]:
            assert tr.lambda_min[t] == tr.lambda_min[t - 1]


@pytest.mark.parametrize("algo", ["naive", "if2e", "cec_only"])
def test_inputs_depend_only_on_outputs_and_seed(algo):
    cfg = AlgoConfig(algorithm=algo, H=5, seed=11)
    tr = run_full(cfg, SYS, NOISE, COST, SCHED)
    np.testing.assert_array_equal(replay_inputs(tr, cfg, SYS, NOISE, COST, SCHED), tr.u)


def test_regret_is_cumulative_excess_cost():
    tr = run("naive", seed=2)
    r = regret(tr)
    assert r[-1] == pytest.approx(tr.cost.sum() - tr.n_steps * optimal_cost(SYS, NOISE, COST), rel=1e-12)
    np.testing.assert_allclose(np.diff(r), tr.regret_increment[1:], rtol=0, atol=1e-10)


def test_optimal_mode_attains_optimal_cost():
    tr = run("optimal", schedule=EpisodeSchedule(20, 10))
    J = optimal_cost(SYS, NOISE, COST)
    se = tr.cost.std() / np.sqrt(tr.n_steps) * 5  # generous for autocorrelation
    assert abs(tr.average_cost - J) < 3 * se


def test_cec_only_injects_nothing():
    tr = run("cec_only")
    assert np.all(tr.sigma_eta_sq[SCHED.T_w :] == 0.0)
    assert np.isnan(tr.lambda_min).all()


def test_failure_carries_episode_and_partial_trace(monkeypatch):
    calls = {"n": 0}
    real = al.ho_kalman

    def flaky(*a, **kw):
        calls["n"] += 1
        if calls["n"] == 3:
            raise RankDeficient("forced")
        return real(*a, **kw)

    monkeypatch.setattr(al, "ho_kalman", flaky)
    with pytest.raises(RunFailed) as exc:
        run("naive")
    assert exc.value.episode == 2
    assert exc.value.trace.n_steps == 80


def test_config_validation():
    with pytest.raises(ValueError):
        AlgoConfig(algorithm="greedy")
    with pytest.raises(ValueError):
        AlgoConfig(gamma=0.0)
    with pytest.raises(ValueError):
        run_full(AlgoConfig(H=30), SYS, NOISE, COST, SCHED)

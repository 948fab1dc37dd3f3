import csv
import json
import warnings

import numpy as np
import pytest

from lqg_adapt import adaptive_loop as al
from lqg_adapt import bench
from lqg_adapt.cli import main
from lqg_adapt.errors import ParseError, RankDeficient, ValidationError
from lqg_adapt.sysid import TruncationWarning

SMALL = {
    "system": {"A": [[0.6, 0.2], [0.0, 0.4]], "B": [[1.0], [0.5]], "C": [[1.0, 0.3]]},
    "noise": {"sigma_w_sq": 0.09, "sigma_z_sq": 0.04},
    "cost": {"Q": [[1.0]], "R": [[0.1]]},
    "schedule": {"T_w": 20, "k_fin": 3},
    "algo": {"H": 5, "lambda": 0.001, "gamma": 0.5, "alpha": 1.0, "c_tol": 1.0, "sigma_u_sq": 0.1},
    "seeds": {"base_seed": 0, "n_runs": 3},
    "algorithms": ["naive", "if2e"],
}


@pytest.fixture(autouse=True)
def _quiet():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncationWarning)
        yield


def write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return p


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_bundled_config(webserver):
    assert webserver.system.n_x == 2 and webserver.H == 12
    assert (webserver.d1, webserver.d2) == (6, 5)
    assert webserver.schedule.horizon == 51200
    assert webserver.gamma == pytest.approx(np.sqrt(25) / 10)


def test_validation_reports_every_problem(tmp_path):
    bad = json.loads(json.dumps(SMALL))
    bad["cost"]["R"] = [[0.0]]
    bad["noise"]["sigma_w_sq"] = -1
    bad["algo"]["H"] = 4
    bad["algo"]["d1"], bad["algo"]["d2"] = 2, 1
    with pytest.raises(ValidationError) as exc:
        bench.load_config(write(tmp_path, bad))
    msgs = " | ".join(exc.value.errors)
    assert "R must be positive definite" in msgs
    assert "sigma_w_sq" in msgs
    assert "Hankel constraint" in msgs
    assert "T_w" not in msgs


def test_parse_error_has_position(tmp_path):
    p = tmp_path / "broken.json"
    p.write_text('{"system": {\n  "A": [[1,]]\n}')
    with pytest.raises(ParseError, match="line 2"):
        bench.load_config(p)


def test_unstable_true_system_rejected(tmp_path):
    bad = json.loads(json.dumps(SMALL))
    bad["system"]["A"] = [[1.2, 0.0], [0.0, 0.4]]
    with pytest.raises(ValidationError, match="not stable"):
        bench.load_config(write(tmp_path, bad))


def test_repeat_runs_are_byte_identical(tmp_path):
    cfg = bench.load_config(write(tmp_path, SMALL))
    bench.run_experiment(cfg, out_dir=tmp_path / "a")
    bench.run_experiment(cfg, out_dir=tmp_path / "b", parallel=2)
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert "trace_if2e_2.csv" in files and "summary.csv" in files
    for name in files:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name


def test_aggregates_match_traces(tmp_path):
    cfg = bench.load_config(write(tmp_path, SMALL))
    res, _ = bench.run_experiment(cfg, out_dir=tmp_path)
    for algo in ("naive", "if2e"):
        traces = [read_csv(tmp_path / f"trace_{algo}_{s}.csv") for s in range(3)]
        reg = np.array([[float(r["regret"]) for r in tr] for tr in traces])
        rows = [r for r in read_csv(tmp_path / "regret_mean.csv") if r["algo"] == algo]
        np.testing.assert_allclose([float(r["mean"]) for r in rows], reg.mean(0), rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose([float(r["std"]) for r in rows], reg.std(0, ddof=1), rtol=1e-10, atol=1e-12)
        assert {r["n"] for r in rows} == {"3"}
        costs = [np.mean([float(r["cost"]) for r in tr]) for tr in traces]
        summ = {r["algo"]: r for r in read_csv(tmp_path / "summary.csv")}[algo]
        assert float(summ["mean_avg_cost"]) == pytest.approx(np.mean(costs), rel=1e-12)
        assert summ["failed_runs"] == "0"
    summ = {r["algo"]: r for r in read_csv(tmp_path / "summary.csv")}
    assert summ["naive"]["mean_switch_step"] == ""
    assert float(summ["if2e"]["mean_switch_step"]) == pytest.approx(res.mean_switch_step["if2e"])


def test_lambda_csv_flags_stride(tmp_path):
    cfg = bench.with_overrides(bench.load_config(write(tmp_path, SMALL)), lambda_min_stride=4)
    bench.run_experiment(cfg, algorithms=["naive"], seeds=[0], out_dir=tmp_path, write_traces=False)
    rows = read_csv(tmp_path / "fim_lambda_min.csv")
    assert int(rows[0]["t"]) == 20
    flags = [int(r["t"]) for r in rows if r["stride_flag"] == "1"]
    assert flags == list(range(20, 160, 4))


def test_failed_runs_are_counted_not_averaged(tmp_path, monkeypatch):
    real = al.ho_kalman

    def fail_seed_one(me, *a, **kw):
        if fail_seed_one.seed == 1:
            raise RankDeficient("forced")
        return real(me, *a, **kw)

    orig_init = al.AdaptiveRun.__init__

    def init(self, config, *a, **kw):
        fail_seed_one.seed = config.seed
        orig_init(self, config, *a, **kw)

    monkeypatch.setattr(al, "ho_kalman", fail_seed_one)
    monkeypatch.setattr(al.AdaptiveRun, "__init__", init)
    cfg = bench.load_config(write(tmp_path, SMALL))
    res, outcomes = bench.run_experiment(cfg, algorithms=["naive"], out_dir=tmp_path)
    assert res.n["naive"] == 2
    assert [f[0] for f in res.failed["naive"]] == [1]
    assert not (tmp_path / "trace_naive_1.csv").exists()
    assert read_csv(tmp_path / "summary.csv")[0]["failed_runs"] == "1"
    assert read_csv(tmp_path / "failures.csv")[0]["seed"] == "1"


def test_thread_env_overrides(monkeypatch):
    monkeypatch.setenv(bench.THREADS_ENV, "3")
    assert bench.resolve_parallel(1) == 3
    monkeypatch.delenv(bench.THREADS_ENV)
    assert bench.resolve_parallel(None) == 1


def test_csv_number_format():
    assert bench.fmt(0.1) == "0.10000000000000001"
    assert bench.fmt(float("nan")) == ""
    assert bench.fmt(np.int64(3)) == "3"


def test_cli(tmp_path, capsys):
    cfg = write(tmp_path, SMALL)
    assert main(["validate", "--config", str(cfg)]) == 0
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg), "--seed-list", "4,5", "--algos", "naive", "--out", str(out),
                 "--strict", "--no-traces"]) == 0
    assert sorted(p.name for p in out.iterdir()) == ["failures.csv", "fim_lambda_min.csv", "regret_mean.csv",
                                                     "summary.csv"]
    bad = json.loads(json.dumps(SMALL))
    bad["cost"]["R"] = [[-1.0]]
    assert main(["validate", "--config", str(write(tmp_path, bad, "bad.json"))]) == 2
    assert "R must be positive definite" in capsys.readouterr().err

from __future__ import annotations

import json
import math

import numpy as np
import pytest

from ccpe.algorithms import AlgoConfig
from ccpe.errors import ConfigError
from ccpe.harness import (
    CSV_HEADER,
    AlgorithmSpec,
    ExperimentConfig,
    aggregate,
    config_template,
    grid_search,
    parse_csv,
    parse_jsonl,
    predict,
    render_csv,
    replay,
    run_experiment,
    trial_seed,
)
from ccpe.instances import Instance, experiment3, generate_instance, parallel
from ccpe.scm import exact_mus

PARALLEL = {"kind": "parallel", "params": {"n": 2}, "seed": None}
FAST = AlgoConfig(epsilon=0.1, alpha_o=1.0, alpha_i=0.5)
DETERMINISTIC = {"kind": "parallel", "params": {"n": 1, "base": 0.0, "weights": [1.0]}, "seed": None}


def cfg(**kw):
    base = dict(
        instance=PARALLEL,
        algorithms=(AlgorithmSpec("ccpe_general", FAST), AlgorithmSpec("lucb", FAST)),
        trials=6,
        master_seed=3,
    )
    base.update(kw)
    return ExperimentConfig(**base)


# -- configuration -----------------------------------------------------------------------------


def test_config_validation():
    with pytest.raises(ConfigError):
        cfg(trials=0)
    with pytest.raises(ConfigError):
        cfg(mode="sometimes")
    with pytest.raises(ConfigError):
        cfg(mode="budget_censored", budgets=(200, 100))
    with pytest.raises(ConfigError):
        cfg(mode="budget_censored")
    with pytest.raises(ConfigError):
        cfg(algorithms=(AlgorithmSpec("csr"),))
    with pytest.raises(ConfigError):
        cfg(mode="fixed_budget", budgets=(100,))
    with pytest.raises(ConfigError):
        cfg(algorithms=(AlgorithmSpec("thompson"),))
    with pytest.raises(ConfigError):
        cfg(instance={"params": {}})


def test_config_round_trip_and_unknown_fields():
    c = cfg(mode="budget_censored", budgets=(50, 100))
    assert ExperimentConfig.from_dict(json.loads(json.dumps(c.to_dict()))) == c
    doc = c.to_dict()
    doc["colour"] = 1
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(doc)
    doc = c.to_dict()
    doc["algorithms"][0]["config"]["alpha"] = 1
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(doc)
    short = ExperimentConfig.from_dict({"instance": PARALLEL, "algorithms": ["lucb"]})
    assert short.algorithms[0] == AlgorithmSpec("lucb")
    assert c.with_overrides(trials=None, master_seed=9).master_seed == 9


def test_template_is_runnable():
    c = ExperimentConfig.from_dict(config_template()).with_overrides(trials=2)
    assert len(run_experiment(c, write=False).rows) == 2


def test_trial_seeds_are_distinct():
    states = {tuple(trial_seed(0, t).generate_state(4)) for t in range(100)}
    assert len(states) == 100
    assert trial_seed(1, 0).generate_state(4).tolist() != trial_seed(0, 1).generate_state(4).tolist()


# -- runs ------------------------------------------------------------------------------------------


def test_runs_are_byte_identical(tmp_path):
    c = cfg(out_csv=str(tmp_path / "a.csv"), out_jsonl=str(tmp_path / "a.jsonl"))
    first = run_experiment(c)
    second = run_experiment(cfg(), write=False)
    assert (tmp_path / "a.csv").read_text() == second.csv
    assert (tmp_path / "a.jsonl").read_text() == second.jsonl
    assert first.csv.splitlines()[0] == ",".join(CSV_HEADER)


def test_parallel_jobs_match_serial():
    c = cfg(trials=4)
    assert run_experiment(c, jobs=2, write=False).jsonl == run_experiment(c, jobs=1, write=False).jsonl


def test_single_deterministic_trial_matches_replay():
    c = cfg(instance=DETERMINISTIC, trials=1)
    res = run_experiment(c, write=False)
    for row in res.rows:
        assert row.error_prob in (0.0, 1.0)
    again = replay(c, 0)
    assert again == res.trials
    with pytest.raises(ConfigError):
        replay(c, 1)


def test_replay_regenerates_any_trial():
    c = cfg(trials=5)
    docs = run_experiment(c, write=False).trials
    for t in (0, 3):
        assert replay(c, t) == [d for d in docs if d["trial"] == t]


def test_error_probability_recomputed_from_records():
    c = cfg(trials=20, algorithms=(AlgorithmSpec("lucb", AlgoConfig(epsilon=0.0, alpha_i=0.3)),))
    res = run_experiment(c, write=False)
    inst = generate_instance("parallel", PARALLEL["params"])
    mus = exact_mus(inst.model, inst.actions)
    docs = parse_jsonl(res.jsonl)
    wrong = [mus.max() - mus[d["record"]["chosen"]] > 0 for d in docs]
    assert res.rows[0].error_prob == pytest.approx(np.mean(wrong))
    rounds = [d["record"]["rounds"] for d in docs]
    assert res.rows[0].median_rounds == pytest.approx(np.median(rounds))
    assert res.rows[0].std_rounds == pytest.approx(np.std(rounds))


def test_csv_round_trip():
    res = run_experiment(cfg(), write=False)
    rows = parse_csv(res.csv)
    assert render_csv(rows) == res.csv
    assert [r.algorithm for r in rows] == ["ccpe_general", "lucb"]
    assert rows[0].param == "eps=0.1;delta=0.1"


def test_budget_modes():
    censored = run_experiment(cfg(mode="budget_censored", budgets=(20, 60, 200)), write=False)
    assert [r.param for r in censored.rows] == ["T=20", "T=60", "T=200"] * 2
    assert all(0 <= r.error_prob <= 1 for r in censored.rows)
    fixed = run_experiment(
        cfg(mode="fixed_budget", budgets=(40, 80), algorithms=(AlgorithmSpec("csr"),)), write=False
    )
    assert [r.param for r in fixed.rows] == ["T=40", "T=80"]
    assert all(r.trials == 6 for r in fixed.rows)
    assert all(d["record"]["rounds"] <= d["budget"] for d in fixed.trials)


def test_failed_trials_are_flagged_not_fatal():
    c = cfg(algorithms=(AlgorithmSpec("ccpe_bglm"), AlgorithmSpec("lucb", AlgoConfig(epsilon=0.05))), trials=3)
    res = run_experiment(c, write=False)
    bad, good = res.rows
    assert bad.error_prob == 1.0 and bad.flags == "failed=3" and math.isnan(bad.mean_rounds)
    assert "failed" not in good.flags and good.error_prob <= 1
    assert all(d["failed"] and d["record"] is None for d in res.trials[:3])
    assert aggregate(c, res.trials) == res.rows


def test_round_cap_flag():
    c = cfg(algorithms=(AlgorithmSpec("lucb", AlgoConfig(round_cap=30)),), trials=2)
    assert run_experiment(c, write=False).rows[0].flags == "round_cap=2"


# -- tuning ---------------------------------------------------------------------------------------


def test_grid_single_cell_and_ties():
    c = cfg(instance=DETERMINISTIC, trials=2)
    one = grid_search(c, [0.7], [0.9])
    assert (one.best.alpha_o, one.best.alpha_i) == (0.7, 0.9)
    assert len(one.table) == 1
    grid = grid_search(c, [0.9, 0.5, 8.0], [1.0, 0.4])
    assert all(row["error_prob"] == 0.0 for row in grid.table)
    assert (grid.best.alpha_o, grid.best.alpha_i) == (0.5, 0.4)
    assert {(r["alpha_o"], r["alpha_i"]) for r in grid.table} >= {(8.0, 1.0), (0.5, 0.4)}
    with pytest.raises(ConfigError):
        grid_search(c, [], [1.0])


# -- predictions -------------------------------------------------------------------------------------


def test_predict_parallel():
    rep = predict(parallel(n=4, p=0.5), epsilon=0.0, delta=0.1)
    assert rep["m"] == 2
    assert rep["n_actions"] == 9
    assert rep["H_m"] <= rep["H_all"]
    json.dumps(rep)


def test_predict_singleton():
    base = parallel(n=1)
    inst = Instance("custom", {}, None, base.model, base.actions[-1:], (None,))
    rep = predict(inst, epsilon=0.1, delta=0.1)
    assert rep["m"] == 1 and rep["m_eps_delta"] == 1
    assert rep["H_m"] == pytest.approx(1 / 0.05**2) == rep["H_all"]
    assert rep["ratio"] == pytest.approx(1.0)


def test_predict_experiment3_regime():
    rep = predict(experiment3(n=4), epsilon=0.0, delta=0.1)
    assert rep["m_eps_delta"] < rep["n_actions"]
    assert rep["predicted_ccpe"] < rep["predicted_lucb"]

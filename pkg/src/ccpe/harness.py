"""Monte Carlo experiments: configuration, trial execution, aggregation and reports.

Trial ``i`` of every algorithm runs against an environment seeded with
``SeedSequence([master_seed, i])``, so algorithms are paired on common random
numbers and results do not depend on how trials are spread over workers.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .algorithms import (
    ALGORITHMS,
    AlgoConfig,
    Environment,
    TrialRecord,
    causal_successive_reject,
    ccpe_bglm,
    ccpe_general,
    lil_ucb_heuristic,
    lucb,
)
from .complexity import (
    HardnessProfile,
    gap_threshold,
    h_r,
    lower_bound_value,
    lucb_hardness,
    observation_threshold,
    predict_lucb,
    predict_sample_complexity,
)
from .errors import CcpeError, ConfigError, InstanceClassError, ParseError
from .instances import Instance, generate_instance
from .scm import exact_joint, exact_mus, gaps_from_means, q_bglm, q_general

MODES = ("fixed_confidence", "fixed_budget", "budget_censored")
CSV_HEADER = ["algorithm", "mode", "param", "trials", "error_prob", "mean_rounds", "median_rounds", "std_rounds", "flags"]
FIXED_BUDGET_ALGORITHMS = ("csr",)


@dataclass(frozen=True)
class AlgorithmSpec:
    name: str
    config: AlgoConfig = field(default_factory=AlgoConfig)

    def to_dict(self) -> dict:
        cfg = {f.name: getattr(self.config, f.name) for f in fields(AlgoConfig) if f.name != "constants"}
        cfg["censor_at"] = list(cfg["censor_at"])
        return {"name": self.name, "config": cfg}


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce a batch of trials.

    ``instance`` holds ``kind``, ``params`` and the structure ``seed``.  In the
    budget modes ``budgets`` lists the horizons ``T`` in ascending order.
    """

    instance: Mapping
    algorithms: tuple[AlgorithmSpec, ...]
    trials: int = 100
    master_seed: int = 0
    mode: str = "fixed_confidence"
    budgets: tuple[int, ...] = ()
    out_csv: str | None = None
    out_jsonl: str | None = None

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not self.algorithms:
            raise ConfigError("at least one algorithm is required")
        if "kind" not in self.instance:
            raise ConfigError("instance needs a kind")
        budgets = tuple(int(b) for b in self.budgets)
        if self.mode != "fixed_confidence":
            if not budgets:
                raise ConfigError(f"mode {self.mode} needs a budget list")
            if any(b <= 0 for b in budgets) or list(budgets) != sorted(set(budgets)):
                raise ConfigError("budgets must be positive and strictly ascending")
        object.__setattr__(self, "budgets", budgets)
        for spec in self.algorithms:
            if spec.name not in ALGORITHMS:
                raise ConfigError(f"unknown algorithm {spec.name!r}; expected one of {ALGORITHMS}")
            fixed_budget = spec.name in FIXED_BUDGET_ALGORITHMS
            if fixed_budget != (self.mode == "fixed_budget"):
                raise ConfigError(f"algorithm {spec.name} cannot run in mode {self.mode}")

    def to_dict(self) -> dict:
        return {
            "instance": dict(self.instance),
            "algorithms": [a.to_dict() for a in self.algorithms],
            "trials": self.trials,
            "master_seed": self.master_seed,
            "mode": self.mode,
            "budgets": list(self.budgets),
            "out_csv": self.out_csv,
            "out_jsonl": self.out_jsonl,
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "ExperimentConfig":
        if not isinstance(doc, Mapping):
            raise ParseError("experiment config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        try:
            algos = []
            for a in doc["algorithms"]:
                a = {"name": a} if isinstance(a, str) else a
                cfg = dict(a.get("config", {}))
                cfg_fields = {f.name for f in fields(AlgoConfig)} - {"constants"}
                bad = set(cfg) - cfg_fields
                if bad:
                    raise ConfigError(f"unknown algorithm config fields: {sorted(bad)}")
                if "censor_at" in cfg:
                    cfg["censor_at"] = tuple(cfg["censor_at"])
                algos.append(AlgorithmSpec(a["name"], AlgoConfig(**cfg)))
            rest = {k: v for k, v in doc.items() if k != "algorithms"}
            if "budgets" in rest:
                rest["budgets"] = tuple(rest["budgets"])
            return cls(algorithms=tuple(algos), **rest)
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed experiment config: {exc}") from exc

    def with_overrides(self, **kw) -> "ExperimentConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **kw) if kw else self


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return ExperimentConfig.from_dict(doc)


def build_instance(config: ExperimentConfig) -> Instance:
    spec = config.instance
    return generate_instance(spec["kind"], spec.get("params", {}), spec.get("seed"))


# -- per-trial execution -------------------------------------------------------------------


def trial_seed(master_seed: int, trial: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(master_seed), int(trial)])


def _run_one(inst: Instance, name: str, cfg: AlgoConfig, seed) -> TrialRecord:
    env = Environment(inst.model, inst.actions, seed)
    if name == "ccpe_bglm":
        if not inst.is_bglm:
            raise ConfigError("ccpe_bglm needs a BGLM instance")
        if cfg.constants is None:
            cfg = replace(cfg, constants=inst.model.constants)
        return ccpe_bglm(env, inst.graph, inst.actions, cfg, inst.model.links)
    if name == "ccpe_general":
        return ccpe_general(env, inst.graph, inst.actions, inst.sequences, cfg)
    if name == "lucb":
        return lucb(env, inst.actions, cfg)
    if name == "lil_ucb":
        return lil_ucb_heuristic(env, inst.actions, cfg)
    if name == "csr":
        return causal_successive_reject(env, inst.graph, inst.actions, inst.sequences, cfg)
    raise ConfigError(f"unknown algorithm {name!r}")


def _tasks(config: ExperimentConfig) -> list[tuple[int, int, int | None]]:
    """``(algorithm index, trial, budget)`` in output order."""
    tasks = []
    for ai, spec in enumerate(config.algorithms):
        budgets = config.budgets if spec.name in FIXED_BUDGET_ALGORITHMS else (None,)
        for b in budgets:
            tasks.extend((ai, t, b) for t in range(config.trials))
    return tasks


class _TrialContext:
    """Instance, exact means and constants shared by the trials of one experiment."""

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.instance = build_instance(config)
        self.mus = exact_mus(self.instance.model, self.instance.actions)
        self.best = float(self.mus.max())
        self.constants = None
        if any(s.name == "ccpe_bglm" for s in config.algorithms) and self.instance.is_bglm:
            self.constants = self.instance.model.constants

    def run(self, task) -> dict:
        ai, trial, budget = task
        cfg = self.config
        spec = cfg.algorithms[ai]
        algo_cfg = spec.config
        if budget is not None:
            algo_cfg = replace(algo_cfg, budget=budget)
        if cfg.mode == "budget_censored":
            algo_cfg = replace(algo_cfg, censor_at=cfg.budgets)
        if spec.name == "ccpe_bglm" and algo_cfg.constants is None and self.constants is not None:
            algo_cfg = replace(algo_cfg, constants=self.constants)
        doc = {"algorithm": spec.name, "algorithm_index": ai, "trial": trial, "seed": [cfg.master_seed, trial]}
        if budget is not None:
            doc["budget"] = budget
        try:
            rec = _run_one(self.instance, spec.name, algo_cfg, trial_seed(cfg.master_seed, trial))
        except CcpeError as exc:
            doc.update({"failed": True, "error": f"{type(exc).__name__}: {exc}", "record": None})
            return doc
        doc["failed"] = False
        doc["record"] = rec.to_dict()
        doc["gap"] = self.best - float(self.mus[rec.chosen])
        doc["censored_gaps"] = {str(b): self.best - float(self.mus[i]) for b, i in sorted(rec.censored.items())}
        return doc


_WORKER: _TrialContext | None = None


def _init_worker(config_doc: dict) -> None:
    global _WORKER
    _WORKER = _TrialContext(ExperimentConfig.from_dict(config_doc))


def _work(task):
    return _WORKER.run(task)


def run_trials(config: ExperimentConfig, jobs: int = 1) -> list[dict]:
    """Per-trial documents in a fixed order independent of ``jobs``."""
    tasks = _tasks(config)
    if jobs <= 1:
        ctx = _TrialContext(config)
        return [ctx.run(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker, initargs=(config.to_dict(),)) as pool:
        return list(pool.map(_work, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))


# -- aggregation -----------------------------------------------------------------------------


@dataclass(frozen=True)
class AggregateRow:
    algorithm: str
    mode: str
    param: str
    trials: int
    error_prob: float
    mean_rounds: float
    median_rounds: float
    std_rounds: float
    flags: str = ""

    def csv_values(self) -> list[str]:
        return [
            self.algorithm,
            self.mode,
            self.param,
            str(self.trials),
            _fmt(self.error_prob),
            _fmt(self.mean_rounds),
            _fmt(self.median_rounds),
            _fmt(self.std_rounds),
            self.flags,
        ]


def _fmt(x: float) -> str:
    return "nan" if math.isnan(x) else f"{x:.6f}"


def _flags(docs, extra=()) -> str:
    failed = sum(d["failed"] for d in docs)
    ok = [d["record"] for d in docs if not d["failed"]]
    capped = sum(r["stop_reason"] == "round_cap" for r in ok)
    empty = sum(r["empty_merge_events"] for r in ok)
    parts = [f"failed={failed}"] if failed else []
    if capped:
        parts.append(f"round_cap={capped}")
    if empty:
        parts.append(f"empty_merge={empty}")
    parts.extend(extra)
    return ";".join(parts)


def _stats(rounds: Sequence[float]) -> tuple[float, float, float]:
    if not rounds:
        return math.nan, math.nan, math.nan
    arr = np.asarray(rounds, dtype=float)
    return float(arr.mean()), float(np.median(arr)), float(arr.std())


def aggregate(config: ExperimentConfig, docs: Sequence[dict]) -> list[AggregateRow]:
    """One row per algorithm (and budget).  Failed trials count as errors."""
    rows = []
    for ai, spec in enumerate(config.algorithms):
        mine = [d for d in docs if d["algorithm_index"] == ai]
        eps = spec.config.epsilon
        if config.mode == "fixed_confidence":
            param = f"eps={spec.config.epsilon:g};delta={spec.config.delta:g}"
            rows.append(_row(spec.name, config.mode, param, mine, lambda d: d["gap"] > eps, lambda r: r["rounds"]))
        elif config.mode == "fixed_budget":
            for b in config.budgets:
                sub = [d for d in mine if d["budget"] == b]
                rows.append(_row(spec.name, config.mode, f"T={b}", sub, lambda d: d["gap"] > eps, lambda r: r["rounds"]))
        else:
            for b in config.budgets:
                key = str(b)
                rows.append(
                    _row(
                        spec.name,
                        config.mode,
                        f"T={b}",
                        mine,
                        lambda d, key=key: d["censored_gaps"][key] > eps,
                        lambda r: r["rounds"],
                    )
                )
    return rows


def _row(name, mode, param, docs, is_error, rounds_of) -> AggregateRow:
    errors = sum(1 if d["failed"] else int(is_error(d)) for d in docs)
    rounds = [rounds_of(d["record"]) for d in docs if not d["failed"]]
    mean, median, std = _stats(rounds)
    n = len(docs)
    return AggregateRow(name, mode, param, n, errors / n if n else math.nan, mean, median, std, _flags(docs))


def render_csv(rows: Iterable[AggregateRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in rows:
        writer.writerow(r.csv_values())
    return buf.getvalue()


def parse_csv(text: str) -> list[AggregateRow]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if header != CSV_HEADER:
        raise ParseError(f"unexpected CSV header {header}")
    out = []
    for row in reader:
        out.append(
            AggregateRow(row[0], row[1], row[2], int(row[3]), float(row[4]), float(row[5]), float(row[6]), float(row[7]), row[8])
        )
    return out


def render_jsonl(docs: Iterable[dict]) -> str:
    return "".join(json.dumps(d, sort_keys=True) + "\n" for d in docs)


def parse_jsonl(text: str) -> list[dict]:
    return [json.loads(line) for line in text.splitlines() if line.strip()]


@dataclass
class ExperimentResult:
    rows: list[AggregateRow]
    trials: list[dict]

    @property
    def csv(self) -> str:
        return render_csv(self.rows)

    @property
    def jsonl(self) -> str:
        return render_jsonl(self.trials)


def run_experiment(config: ExperimentConfig, jobs: int = 1, write: bool = True) -> ExperimentResult:
    """Run every trial, aggregate, and write the CSV/JSONL outputs named in ``config``."""
    docs = run_trials(config, jobs)
    result = ExperimentResult(aggregate(config, docs), docs)
    if write:
        if config.out_csv:
            with open(config.out_csv, "w", newline="") as fh:
                fh.write(result.csv)
        if config.out_jsonl:
            with open(config.out_jsonl, "w") as fh:
                fh.write(result.jsonl)
    return result


def replay(config: ExperimentConfig, trial: int) -> list[dict]:
    """Regenerate the per-trial documents of one trial index."""
    if not 0 <= trial < config.trials:
        raise ConfigError(f"trial index must lie in 0..{config.trials - 1}")
    ctx = _TrialContext(config)
    return [ctx.run(t) for t in _tasks(config) if t[1] == trial]


# -- tuning ----------------------------------------------------------------------------------


@dataclass
class GridResult:
    best: AlgoConfig
    table: list[dict]


def grid_search(
    config: ExperimentConfig,
    alpha_o: Sequence[float],
    alpha_i: Sequence[float],
    algorithm: int = 0,
    pilot_trials: int | None = None,
    jobs: int = 1,
) -> GridResult:
    """Pilot error probability for every ``(alpha_o, alpha_i)`` cell of one algorithm.

    The error of a cell is the mean over its aggregate rows.  The winner has the
    lowest error; ties go to the smaller ``alpha_o``, then the smaller ``alpha_i``.
    """
    if not alpha_o or not alpha_i:
        raise ConfigError("grid must be non-empty")
    if not 0 <= algorithm < len(config.algorithms):
        raise ConfigError("algorithm index out of range")
    spec = config.algorithms[algorithm]
    base = replace(config, trials=pilot_trials or config.trials, out_csv=None, out_jsonl=None)
    table = []
    best = None
    for ao in sorted(set(alpha_o)):
        for ai in sorted(set(alpha_i)):
            cell_cfg = replace(spec.config, alpha_o=float(ao), alpha_i=float(ai))
            pilot = replace(base, algorithms=(AlgorithmSpec(spec.name, cell_cfg),))
            rows = run_experiment(pilot, jobs=jobs, write=False).rows
            err = float(np.mean([r.error_prob for r in rows]))
            rounds = float(np.mean([r.mean_rounds for r in rows]))
            table.append({"alpha_o": float(ao), "alpha_i": float(ai), "error_prob": err, "mean_rounds": rounds})
            if best is None or err < best[0]:
                best = (err, cell_cfg)
    return GridResult(best[1], table)


# -- analytic report ----------------------------------------------------------------------


def q_profile(inst: Instance) -> np.ndarray:
    """BGLM ease scores on BGLM instances, sequence-based scores otherwise."""
    if inst.is_bglm:
        d = inst.model.constants.d_max
        return np.array([q_bglm(inst.graph, a, d) for a in inst.actions])
    joint = exact_joint(inst.model)
    return np.array([q_general(inst.model, a, s, joint) for a, s in zip(inst.actions, inst.sequences)])


def predict(inst: Instance, epsilon: float = 0.0, delta: float = 0.1) -> dict:
    """Thresholds, hardness sums and predicted sample complexities from exact oracles."""
    mus = exact_mus(inst.model, inst.actions)
    report = gaps_from_means(mus, epsilon)
    q = q_profile(inst)
    profile = HardnessProfile(q, report.delta, epsilon, inst.null_index)
    n = len(inst.actions)
    m = observation_threshold(q)
    m_gap = gap_threshold(profile)
    ccpe = predict_sample_complexity(profile, n, delta)
    naive = predict_lucb(profile, n, delta)
    out = {
        "kind": inst.kind,
        "n_actions": n,
        "labels": inst.labels(),
        "mu": mus.tolist(),
        "gap": report.delta.tolist(),
        "q": q.tolist(),
        "best": report.best,
        "m": m,
        "m_eps_delta": m_gap,
        "H_m": h_r(profile, m_gap),
        "H_all": lucb_hardness(profile),
        "predicted_ccpe": ccpe,
        "predicted_lucb": naive,
        "ratio": ccpe / naive if naive > 0 else math.nan,
        "epsilon": epsilon,
        "delta": delta,
        "lower_bound": None,
    }
    if inst.kind in ("parallel", "lower_bound_xi"):
        y = inst.model.tables[inst.graph.reward]
        try:
            out["lower_bound"] = lower_bound_value(profile, delta, float(y.min()), float(y.max()))
        except InstanceClassError as exc:
            out["lower_bound_skipped"] = str(exc)
    return out


def config_template() -> dict:
    """A small runnable configuration, useful as a starting point."""
    cfg = ExperimentConfig(
        instance={"kind": "parallel", "params": {"n": 4}, "seed": None},
        algorithms=(AlgorithmSpec("ccpe_general", AlgoConfig(epsilon=0.05)), AlgorithmSpec("lucb", AlgoConfig(epsilon=0.05))),
        trials=20,
    )
    return cfg.to_dict()


__all__ = [
    "AggregateRow",
    "AlgorithmSpec",
    "CSV_HEADER",
    "ExperimentConfig",
    "ExperimentResult",
    "GridResult",
    "MODES",
    "aggregate",
    "build_instance",
    "config_template",
    "grid_search",
    "load_config",
    "parse_csv",
    "parse_jsonl",
    "predict",
    "q_profile",
    "render_csv",
    "render_jsonl",
    "replay",
    "run_experiment",
    "run_trials",
    "trial_seed",
]

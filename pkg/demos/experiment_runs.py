"""Run the harness the way the command line does: paired seeds, CSV rows, replay.

Two fixed-confidence algorithms share each trial seed, so their sample counts
can be compared trial by trial.  A single trial is then regenerated from the
master seed and checked against the stored record.
"""

from __future__ import annotations

from ccpe import AlgoConfig, ExperimentConfig, replay, run_experiment
from ccpe.harness import AlgorithmSpec

config = ExperimentConfig(
    instance={"kind": "experiment3", "params": {"n": 4}, "seed": None},
    algorithms=(
        AlgorithmSpec("ccpe_general", AlgoConfig(epsilon=0.05, alpha_o=0.3, alpha_i=0.4)),
        AlgorithmSpec("lucb", AlgoConfig(epsilon=0.05, alpha_i=0.4)),
    ),
    trials=10,
    master_seed=2,
)
result = run_experiment(config, write=False)
print(result.csv)

again = replay(config, 3)
stored = [d for d in result.trials if d["trial"] == 3]
print("trial 3 replays identically:", again == stored)

budgets = ExperimentConfig(
    instance={"kind": "causal_tree", "params": {}, "seed": None},
    algorithms=(AlgorithmSpec("csr"),),
    trials=50,
    mode="fixed_budget",
    budgets=(100, 300, 900),
)
print(run_experiment(budgets, write=False).csv)

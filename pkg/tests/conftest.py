from __future__ import annotations

import itertools
import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ccpe.graph import CausalGraph
from ccpe.scm import TabularScm

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def random_dag(rng: np.random.Generator, n_obs: int, n_hidden: int = 0, p_edge: float = 0.4) -> CausalGraph:
    """Random DAG over ``X1..Xn`` (+ hidden ``U``s with two observed children) and a reward ``Y``.

    Edges follow the name order, so the result is always acyclic.
    """
    xs = [f"X{i}" for i in range(1, n_obs + 1)]
    edges = [(xs[i], xs[j]) for i in range(n_obs) for j in range(i + 1, n_obs) if rng.random() < p_edge]
    edges += [(x, "Y") for x in xs if rng.random() < 0.6]
    hidden = []
    for h in range(n_hidden):
        if n_obs < 2:
            break
        a, b = sorted(rng.choice(n_obs, size=2, replace=False).tolist())
        u = f"U{h + 1}"
        hidden.append(u)
        edges += [(u, xs[a]), (u, xs[b])]
    return CausalGraph.from_names(xs, edges, reward="Y", hidden=hidden)


def random_model(rng: np.random.Generator, graph: CausalGraph, lo: float = 0.1, hi: float = 0.9) -> TabularScm:
    cpt = {v: rng.uniform(lo, hi, size=2 ** len(graph.parents[v])).tolist() for v in range(len(graph))}
    return TabularScm(graph, cpt)


def chain(names=("X1", "X2", "X3")) -> CausalGraph:
    names = list(names)
    edges = list(zip(names, names[1:])) + [(names[-1], "Y")]
    return CausalGraph.from_names(names, edges, reward="Y")


def all_bits(n: int):
    return list(itertools.product((0, 1), repeat=n))


def independent(joint, a, b, c, tol=1e-9) -> bool:
    """Brute-force conditional independence on an exact joint table."""
    nodes = list(a) + list(b) + list(c)
    m = joint.marginal(nodes).reshape((2 ** len(a), 2 ** len(b), 2 ** len(c)))
    p_c = m.sum(axis=(0, 1))
    p_ac = m.sum(axis=1)
    p_bc = m.sum(axis=0)
    lhs = m * p_c[None, None, :]
    rhs = p_ac[:, None, :] * p_bc[None, :, :]
    return bool(np.all(np.abs(lhs - rhs) <= tol))


def backdoor_value(joint, graph, action, seq) -> float:
    """Sequential back-door functional evaluated on exact probabilities."""
    xs, s = action.nodes, action.values
    z_nodes = list(seq.union_nodes)
    y = graph.reward
    total = 0.0
    for z in itertools.product((0, 1), repeat=len(z_nodes)):
        zmap = dict(zip(z_nodes, z))
        cond = {**dict(zip(xs, s)), **zmap}
        p_cond = joint.prob(cond)
        if p_cond == 0:
            continue
        term = joint.prob({**cond, y: 1}) / p_cond
        for i in range(len(xs)):
            prev = {**{xs[j]: s[j] for j in range(i)}, **{v: zmap[v] for b in seq.blocks[:i] for v in b}}
            here = {**prev, **{v: zmap[v] for v in seq.blocks[i]}}
            denom = joint.prob(prev) if prev else 1.0
            term *= joint.prob(here) / denom if denom > 0 else 0.0
        total += term
    return total


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)

from __future__ import annotations

import itertools
import json

import numpy as np
import pytest

from ccpe.errors import ParamError, ParseError
from ccpe.estimation import ObservationTable
from ccpe.graph import make_action, verify_admissible_sequence
from ccpe.harness import q_profile
from ccpe.instances import (
    GENERATORS,
    Instance,
    causal_tree,
    experiment1,
    experiment2,
    experiment3,
    generate_instance,
    lower_bound_xi,
    parallel,
)
from ccpe.scm import exact_joint, exact_mus, gaps_from_means


def exact_plugin(inst):
    """Sequential back-door values computed from the exact observational law.

    The histogram is loaded with probabilities scaled to integers, so the plug-in
    estimator returns the identification formula evaluated at the true law.
    """
    table = ObservationTable(inst.graph)
    for key, p in exact_joint(inst.model).observed_table().items():
        table.counts[key] = int(round(p * 1e15))
    out = {}
    for i, (a, s) in enumerate(zip(inst.actions, inst.sequences)):
        if s is not None:
            out[i] = table.estimate(a, s)[0]
    return out


ALL_DEFAULTS = [pytest.param(k, id=k) for k in sorted(GENERATORS)]


@pytest.mark.parametrize("kind", ALL_DEFAULTS)
def test_sequences_verify_and_identify(kind):
    inst = generate_instance(kind, {}, 3)
    mus = exact_mus(inst.model, inst.actions)
    assert any(s is not None for s in inst.sequences)
    for a, s in zip(inst.actions, inst.sequences):
        if s is not None:
            assert verify_admissible_sequence(inst.graph, a, s)
        if a.is_null:
            assert s is None
    for i, value in exact_plugin(inst).items():
        assert value == pytest.approx(mus[i], abs=1e-9)


@pytest.mark.parametrize("kind", ALL_DEFAULTS)
def test_json_round_trip(kind):
    inst = generate_instance(kind, {}, 1)
    back = Instance.from_dict(json.loads(json.dumps(inst.to_dict())))
    assert back.actions == inst.actions
    assert back.sequences == inst.sequences
    assert np.allclose(exact_mus(back.model, back.actions), exact_mus(inst.model, inst.actions))
    assert back.labels() == inst.labels()


def test_structure_seed_controls_randomness():
    assert experiment1(seed=4).to_dict() == experiment1(seed=4).to_dict()
    assert any(experiment1(seed=s).to_dict() != experiment1(seed=0).to_dict() for s in (1, 2, 3))


def test_experiment1_shape():
    inst = experiment1(seed=7)
    assert len(inst.graph.observed) == 9
    assert len(inst.actions) == 56
    assert all(s is not None for s in inst.sequences)
    assert inst.is_bglm and inst.graph.global_node == inst.graph.idx("X0")
    assert all(a.values == (1, 1, 1) for a in inst.actions)
    theta_y = inst.model.theta[inst.graph.reward]
    assert sorted(np.round(theta_y, 10).tolist()) == [0.0, 0.05, 0.3, 0.3, 0.3]
    for v in range(1, 9):
        assert len(inst.graph.parents[v]) == 1 + min(2, v - 1)
    with pytest.raises(ParamError):
        experiment1(n=3)


def test_experiment2_best_arm():
    inst = experiment2(seed=0)
    assert len(inst.actions) == 84
    mus = exact_mus(inst.model, inst.actions)
    best = inst.actions.index(make_action(inst.graph, {"X3": 1, "X4": 1}))
    assert mus[best] == pytest.approx(0.9)
    assert gaps_from_means(mus).best == best
    small = experiment2(seed=0, action_nodes=["X3", "X4", "X5"])
    assert len(small.actions) == 12
    with pytest.raises(ParamError):
        experiment2(action_nodes=["X9", "X3"])


def test_experiment3_shape():
    inst = experiment3(n=7)
    assert len(inst.graph.observed) == 9
    assert len(inst.actions) == 4 * 21
    assert all(s is not None for s in inst.sequences)
    assert len(inst.graph.hidden) == 7
    rep = q_profile(inst)
    assert rep.min() > 0
    with pytest.raises(ParamError):
        experiment3(n=9)


def test_parallel_family():
    inst = parallel(n=3, p=0.5)
    assert len(inst.actions) == 7
    assert inst.actions[-1].is_null and inst.null_index == 6
    q = q_profile(inst)
    assert q.tolist() == pytest.approx([0.5] * 6 + [1.0])
    with pytest.raises(ParamError):
        parallel(n=2, base=0.9, weights=[0.2, 0.2])


def test_lower_bound_class_by_enumeration():
    inst = lower_bound_xi(n=5)
    joint = exact_joint(inst.model)
    g = inst.graph
    xs = list(g.observed)
    cond = []
    for bits in itertools.product((0, 1), repeat=len(xs)):
        mask = np.all(joint.bits[:, xs] == np.array(bits), axis=1)
        pm = joint.probs[mask].sum()
        cond.append(joint.probs[mask & (joint.bits[:, g.reward] == 1)].sum() / pm)
    p_min, p_max = min(cond), max(cond)
    assert inst.info["p_min"] == pytest.approx(p_min)
    assert inst.info["p_max"] == pytest.approx(p_max)
    gaps = gaps_from_means(exact_mus(inst.model, inst.actions)).delta
    assert p_min + gaps.min() >= 0.1 - 1e-12
    assert p_max + 2 * gaps.max() <= 0.9 + 1e-12
    with pytest.raises(ParamError):
        lower_bound_xi(n=5, base=0.0)
    with pytest.raises(ParamError):
        lower_bound_xi(n=2, base=0.2, weights=[0.5, 0.2])


def test_causal_tree_catalog():
    inst = causal_tree()
    assert len(inst.actions) == 24
    g = inst.graph
    triple = [i for i, a in enumerate(inst.actions) if len(a) == 3]
    assert len(triple) == 8
    seq = inst.sequences[triple[0]]
    assert [sorted(g.nodes[v].name for v in b) for b in seq.blocks] == [["X1", "X2"], [], ["X7"]]


def test_generate_instance_errors():
    with pytest.raises(ParamError):
        generate_instance("nonsense")
    with pytest.raises(ParamError):
        generate_instance("parallel", {"colour": 3})
    with pytest.raises(ParseError):
        Instance.from_dict({"kind": "parallel"})

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ccpe.complexity import (
    HardnessProfile,
    fixed_budget_constants,
    gap_threshold,
    h_r,
    logbar,
    lower_bound_value,
    lucb_hardness,
    observation_threshold,
    predict_sample_complexity,
)
from ccpe.errors import EmptyError, InstanceClassError, RangeError
from ccpe.harness import predict
from ccpe.instances import experiment2, lower_bound_xi
from ccpe.scm import gaps_from_means


# -- brute-force oracles ---------------------------------------------------------------------


def m_oracle(q):
    q = [Fraction(v) for v in q]
    return min(t for t in range(1, len(q) + 1) if sum(1 for v in q if v < Fraction(1, t)) <= t)


def sorted_hardness(q, delta, eps):
    """Partial sums of 1/clamp^2 in (q clamp^2, index) order, in exact rational arithmetic."""
    q = [Fraction(v) for v in q]
    clamp = [max(Fraction(d), Fraction(eps) / 2) for d in delta]
    order = sorted(range(len(q)), key=lambda i: (q[i] * clamp[i] ** 2, i))
    sums, acc = [], Fraction(0)
    for i in order:
        acc += 1 / clamp[i] ** 2
        sums.append(acc)
    return sums, clamp, q


def m_gap_oracle(q, delta, eps):
    sums, clamp, q = sorted_hardness(q, delta, eps)
    for t in range(1, len(q) + 1):
        if sum(1 for i in range(len(q)) if q[i] * clamp[i] ** 2 < 1 / sums[t - 1]) <= t:
            return t
    raise AssertionError("no threshold found")


def random_profile(rng, n, eps):
    q = rng.uniform(0, 1, size=n)
    q[0] = 1.0  # do()
    mus = rng.uniform(0, 1, size=n)
    delta = gaps_from_means(mus).delta
    if n == 1:
        delta = rng.uniform(0.01, 1, size=1)
    return q, np.maximum(delta, 1e-3), eps


# -- observation threshold -------------------------------------------------------------------


def test_observation_threshold_examples():
    assert observation_threshold([0.5] * 6 + [1.0]) == 2
    assert observation_threshold([1.0] * 5) == 1
    assert observation_threshold([1, 0.05, 0.2, 0.3, 0.5]) == 3
    assert observation_threshold([1.0]) == 1
    with pytest.raises(EmptyError):
        observation_threshold([])


@given(st.lists(st.floats(0, 1), min_size=1, max_size=30), st.randoms())
def test_observation_threshold_matches_oracle(q, rnd):
    assert observation_threshold(q) == m_oracle(q)
    shuffled = list(q)
    rnd.shuffle(shuffled)
    assert observation_threshold(shuffled) == observation_threshold(q)


# -- hardness sums -------------------------------------------------------------------------------


def test_h_r_examples():
    p = HardnessProfile(np.array([0.5, 0.5]), np.array([0.5, 0.5]))
    assert h_r(p, 2) == pytest.approx(8.0)
    p = HardnessProfile(np.array([0.3, 0.9, 0.1, 1.0]), np.array([0.5, 0.1, 0.2, 0.4]), epsilon=1.0)
    assert [h_r(p, r) for r in range(1, 5)] == pytest.approx([4, 8, 12, 16])
    with pytest.raises(RangeError):
        h_r(p, 0)
    with pytest.raises(RangeError):
        h_r(p, 5)
    with pytest.raises(EmptyError):
        HardnessProfile(np.array([]), np.array([]))


def test_ties_broken_by_index():
    p = HardnessProfile(np.array([0.5, 0.5, 0.5]), np.array([0.2, 0.2, 0.2]))
    assert p.order.tolist() == [0, 1, 2]


@given(st.integers(0, 2**32 - 1), st.integers(1, 25), st.sampled_from([0.0, 0.05, 0.2]))
def test_profile_matches_oracles(seed, n, eps):
    rng = np.random.default_rng(seed)
    q, delta, eps = random_profile(rng, n, eps)
    p = HardnessProfile(q, delta, eps)
    sums, _, _ = sorted_hardness(q.tolist(), delta.tolist(), eps)
    assert p.partial_sums == pytest.approx([float(v) for v in sums])
    assert np.all(np.diff(p.partial_sums) > 0)
    assert np.all(p.clamped >= eps / 2)
    assert sorted(p.order.tolist()) == list(range(n))
    assert gap_threshold(p) == m_gap_oracle(q.tolist(), delta.tolist(), eps)
    perm = rng.permutation(n)
    assert gap_threshold(HardnessProfile(q[perm], delta[perm], eps)) == gap_threshold(p)


def test_gap_threshold_example():
    # n = 5: nine arms with q = 1/5 plus do(); two arms at gap 1/5, the rest at 1/2
    n = 5
    q = np.array([1.0] + [1 / n] * 9)
    delta = np.array([0.5, 1 / n, 1 / n] + [0.5] * 7)
    p = HardnessProfile(q, delta, epsilon=0.1)
    assert observation_threshold(q) == n
    assert gap_threshold(p) == 2
    assert gap_threshold(HardnessProfile(np.array([1.0]), np.array([0.3]))) == 1


def test_gap_threshold_at_most_twice_observation_threshold():
    rng = np.random.default_rng(2024)
    for trial in range(1200):
        eps = (0.0, 0.05, 0.2)[trial % 3]
        q, delta, eps = random_profile(rng, int(rng.integers(1, 40)), eps)
        if trial % 2:
            q = rng.uniform(0, 1, size=q.size)  # without a do() arm
        assert gap_threshold(HardnessProfile(q, delta, eps)) <= 2 * observation_threshold(q)


# -- predictors --------------------------------------------------------------------------------------


def test_singleton_prediction():
    p = HardnessProfile(np.array([1.0]), np.array([0.25]))
    assert predict_sample_complexity(p, 1, 0.1) == pytest.approx(16 * math.log(16 / 0.1))


def test_doubling_gaps_divides_hardness_by_four():
    rng = np.random.default_rng(0)
    q, delta, _ = random_profile(rng, 12, 0.0)
    delta = np.maximum(delta, 0.01) / 2
    a = HardnessProfile(q, delta)
    b = HardnessProfile(q, 2 * delta)
    assert gap_threshold(a) == gap_threshold(b)
    assert h_r(a, gap_threshold(a)) == pytest.approx(4 * h_r(b, gap_threshold(b)))
    assert lucb_hardness(a) == pytest.approx(4 * lucb_hardness(b))
    assert predict_sample_complexity(b, 12, 0.1) < predict_sample_complexity(a, 12, 0.1)


def test_experiment2_prediction_by_hand():
    inst = experiment2(seed=0)
    rep = predict(inst, epsilon=0.0, delta=0.1)
    sums, clamp, _ = sorted_hardness(rep["q"], rep["gap"], 0.0)
    m = m_gap_oracle(rep["q"], rep["gap"], 0.0)
    h_m = float(sums[m - 1])
    assert rep["m_eps_delta"] == m
    assert rep["H_m"] == pytest.approx(h_m)
    assert rep["predicted_ccpe"] == pytest.approx(h_m * math.log(84 * h_m / 0.1))
    assert rep["H_all"] == pytest.approx(float(sum(1 / c**2 for c in clamp)))


# -- fixed budget --------------------------------------------------------------------------------------


def test_logbar():
    assert logbar(1) == 0.5
    assert logbar(3) == pytest.approx(0.5 + 1 / 2 + 1 / 3)


def test_fixed_budget_alpha_examples():
    p = HardnessProfile(np.array([1.0, 0.5]), np.array([0.2, 0.2]))
    c = fixed_budget_constants(p, m=1)
    assert c.alpha.tolist() == pytest.approx([1.5, 1.0])
    full = HardnessProfile(np.array([1.0, 0.5, 0.5]), np.array([0.1, 0.1, 0.4]))
    c = fixed_budget_constants(full, m=3)
    assert c.alpha.tolist() == pytest.approx([1, 1 / 2, 1 / 3])
    assert c.h3 == pytest.approx(max(k / g**2 for k, g in zip((1, 2, 3), (0.1, 0.1, 0.4))))
    with pytest.raises(RangeError):
        fixed_budget_constants(full, m=0)


def test_fixed_budget_error_expression():
    p = HardnessProfile(np.array([1.0, 0.5]), np.array([0.2, 0.2]))
    c = fixed_budget_constants(p, m=1)
    expected = 4 * 3 * 4 * math.exp(-(5000 / 2 - 2) / (128 * logbar(2) * c.h3))
    assert c.error_bound(5000, 3) == pytest.approx(expected)


@given(st.integers(1, 30), st.data())
def test_alpha_dominates_harmonic(n, data):
    m = data.draw(st.integers(1, n))
    p = HardnessProfile(np.ones(n), np.full(n, 0.3))
    alpha = fixed_budget_constants(p, m).alpha
    assert np.all(alpha >= 1 / np.arange(1, n + 1) - 1e-12)


# -- lower bound -----------------------------------------------------------------------------------------


def test_lower_bound_trivial_cases():
    p = HardnessProfile(np.array([1.0]), np.array([0.3]), null_index=0)
    assert lower_bound_value(p, 0.1) == 0.0


def test_lower_bound_log_law():
    inst = lower_bound_xi(n=6, p=0.05)
    rep = predict(inst, 0.0, 0.1)
    p = HardnessProfile(np.array(rep["q"]), np.array(rep["gap"]), 0.0, inst.null_index)
    v1 = lower_bound_value(p, 0.1)
    v2 = lower_bound_value(p, 0.05)
    assert v1 > 0
    assert v2 - v1 == pytest.approx(v1 / math.log(10) * math.log(2))


def test_lower_bound_class_constraints():
    small = HardnessProfile(np.array([1.0, 0.5]), np.array([0.05, 0.05]))
    with pytest.raises(InstanceClassError):
        lower_bound_value(small, 0.1, p_min=0.02, p_max=0.2)
    assert lower_bound_value(small, 0.1, p_min=0.05, p_max=0.2) >= 0
    wide = HardnessProfile(np.array([1.0, 0.5]), np.array([0.3, 0.3]))
    with pytest.raises(InstanceClassError):
        lower_bound_value(wide, 0.1, p_min=0.2, p_max=0.5)
    with pytest.raises(InstanceClassError):
        lower_bound_value(HardnessProfile(np.array([1.0, 0.5]), np.array([0.05, 0.05]), epsilon=0.2), 0.1, p_min=0.2, p_max=0.5)


@pytest.mark.parametrize("n,p", [(3, 0.5), (4, 0.02), (5, 0.5), (6, 0.05), (8, 0.02), (10, 0.1)])
def test_lower_bound_below_prediction(n, p):
    rep = predict(lower_bound_xi(n=n, p=p), 0.0, 0.1)
    assert rep["lower_bound"] is not None
    assert 0 <= rep["lower_bound"] <= rep["predicted_ccpe"]
    if p < 0.5:
        assert rep["lower_bound"] > 0


def test_thresholds_ignore_rounding_noise():
    q = np.array([0.5 - 3e-16] * 12 + [1.0])
    assert observation_threshold(q) == 2
    delta = np.full(13, 0.1)
    p = HardnessProfile(q, delta)
    nudged = HardnessProfile(np.where(q < 1, 0.5, 1.0), delta)
    assert gap_threshold(p) == gap_threshold(nudged)

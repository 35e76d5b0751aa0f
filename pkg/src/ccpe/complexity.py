"""Observation thresholds, hardness sums and predicted sample complexities.

The predictors here suppress absolute constants.  They order instances by
difficulty; they are not bounds on the number of rounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import EmptyError, InstanceClassError, RangeError

# ease scores come out of exact sums with rounding noise; a score within this
# relative distance of a threshold counts as sitting on it
TIE_RTOL = 1e-9


def observation_threshold(q: Sequence[float]) -> int:
    """Smallest ``tau`` in ``1..|A|`` with at most ``tau`` arms having ``q < 1/tau``."""
    q = np.asarray(q, dtype=float)
    if q.size == 0:
        raise EmptyError("observation threshold of an empty action set")
    for tau in range(1, q.size + 1):
        if np.count_nonzero(q < (1.0 - TIE_RTOL) / tau) <= tau:
            return tau
    return q.size


@dataclass(frozen=True)
class HardnessProfile:
    """Per-arm ease scores and clamped gaps, with the ``q * clamp^2`` ordering.

    Parameters
    ----------
    q:
        Ease-of-observation scores in ``[0, 1]``.
    delta:
        Gaps, one per arm.
    epsilon:
        Accuracy parameter; gaps are clamped at ``epsilon / 2``.
    null_index:
        Position of ``do()`` in the action list, if present.
    """

    q: np.ndarray
    delta: np.ndarray
    epsilon: float = 0.0
    null_index: int | None = None
    clamped: np.ndarray = field(init=False)
    order: np.ndarray = field(init=False)

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        d = np.asarray(self.delta, dtype=float)
        if q.size == 0:
            raise EmptyError("empty hardness profile")
        if q.shape != d.shape:
            raise ValueError("q and delta must have the same length")
        clamped = np.maximum(d, self.epsilon / 2.0)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "delta", d)
        object.__setattr__(self, "clamped", clamped)
        object.__setattr__(self, "order", np.argsort(q * clamped**2, kind="stable"))

    def __len__(self) -> int:
        return self.q.size

    @property
    def scores(self) -> np.ndarray:
        return self.q * self.clamped**2

    @property
    def partial_sums(self) -> np.ndarray:
        """``H_1 .. H_|A|``."""
        return np.cumsum(1.0 / self.clamped[self.order] ** 2)


def h_r(profile: HardnessProfile, r: int) -> float:
    """Sum of ``1 / clamp^2`` over the first ``r`` arms in ``q * clamp^2`` order."""
    if not 1 <= r <= len(profile):
        raise RangeError(f"r must lie in 1..{len(profile)}, got {r}")
    return float(profile.partial_sums[r - 1])


def gap_threshold(profile: HardnessProfile) -> int:
    """Smallest ``tau`` with at most ``tau`` arms having ``q * clamp^2 < 1 / H_tau``."""
    scores = profile.scores
    sums = profile.partial_sums
    for tau in range(1, len(profile) + 1):
        if np.count_nonzero(scores < (1.0 - TIE_RTOL) / sums[tau - 1]) <= tau:
            return tau
    return len(profile)


def lucb_hardness(profile: HardnessProfile) -> float:
    """``sum_a 1 / clamp_a^2`` over all arms, the hardness of a purely interventional method."""
    return float(np.sum(1.0 / profile.clamped**2))


def predict_sample_complexity(profile: HardnessProfile, n_actions: int, delta: float) -> float:
    """``H_m log(|A| H_m / delta)`` at the gap-dependent threshold ``m``."""
    h = h_r(profile, gap_threshold(profile))
    return h * math.log(n_actions * h / delta)


def predict_lucb(profile: HardnessProfile, n_actions: int, delta: float) -> float:
    h = lucb_hardness(profile)
    return h * math.log(n_actions * h / delta)


def logbar(n: int) -> float:
    """``1/2 + sum_{i=2}^n 1/i``."""
    return 0.5 + sum(1.0 / i for i in range(2, n + 1))


@dataclass(frozen=True)
class FixedBudgetConstants:
    alpha: np.ndarray
    h3: float
    n_arms: int

    def error_bound(self, budget: float, i_factor: float) -> float:
        """``4 I N^2 exp(-(T/2 - N) / (128 logbar(N) H_3))``."""
        n = self.n_arms
        return 4.0 * i_factor * n * n * math.exp(-(budget / 2.0 - n) / (128.0 * logbar(n) * self.h3))


def fixed_budget_constants(profile: HardnessProfile, m: int, n: int | None = None) -> FixedBudgetConstants:
    """Phase weights ``alpha_k`` and ``H_3 = max_k 1 / (alpha_k max(Delta_(k), eps)^2)``.

    ``Delta_(k)`` is the ``k``-th smallest gap.
    """
    n = len(profile) if n is None else n
    if not 1 <= m <= n:
        raise RangeError(f"m must lie in 1..{n}, got {m}")
    tail = lambda lo: sum(1.0 / i for i in range(lo, n + 1))  # noqa: E731
    alpha = np.array(
        [(1.0 + tail(k + 1)) / m if k > m else 1.0 / k + tail(m + 1) / m for k in range(1, n + 1)]
    )
    gaps = np.sort(profile.delta)[:n]
    h3 = float(np.max(1.0 / (alpha * np.maximum(gaps, profile.epsilon) ** 2)))
    return FixedBudgetConstants(alpha, h3, n)


def lower_bound_value(
    profile: HardnessProfile,
    delta: float,
    p_min: float | None = None,
    p_max: float | None = None,
) -> float:
    """Gap-dependent lower-bound expression for parallel instances, constants suppressed.

    ``(H_{m-1} - max_{i<m} 1/clamp_{a_i}^2 - 1/clamp_{do()}^2) log(1/delta)`` clamped
    at zero, where ``m`` is the gap-dependent threshold.  When ``p_min``/``p_max``
    (extreme values of ``P(Y=1 | X=x)``) are given, the instance-class constraints
    are enforced.
    """
    if p_min is not None and p_min + profile.delta.min() < 0.1:
        raise InstanceClassError(f"p_min + min gap = {p_min + profile.delta.min():.4g} < 0.1")
    if p_max is not None and p_max + 2 * profile.delta.max() + 2 * profile.epsilon > 0.9:
        raise InstanceClassError(
            f"p_max + 2 max gap + 2 eps = {p_max + 2 * profile.delta.max() + 2 * profile.epsilon:.4g} > 0.9"
        )
    m = gap_threshold(profile)
    if m <= 1:
        return 0.0
    head = profile.order[: m - 1]
    value = h_r(profile, m - 1) - float(np.max(1.0 / profile.clamped[head] ** 2))
    if profile.null_index is not None:
        value -= 1.0 / profile.clamped[profile.null_index] ** 2
    return max(value, 0.0) * math.log(1.0 / delta)


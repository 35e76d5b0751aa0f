"""Estimators and confidence radii for observational and interventional data.

* BGLM maximum likelihood from passive observations (:class:`MleAccumulator`,
  :func:`mle_fit`) and the structural radius :func:`beta_bglm_obs`.
* The sequential back-door plug-in estimator, in two independent forms: the
  literal per-action tallies of :class:`ActionCounters` and the batched
  :class:`ObservationTable` used by the bandit loops.
* The interventional radius :func:`beta_interventional`, the general-graph
  observational radius :func:`beta_general_obs`, and interval merging.

All logarithms are natural and clamped below at one: ``clog(x) = ln(max(x, e))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import NonConvergenceError, NoSequenceError, TooLargeError
from .graph import Action, AdmissibleSequence, CausalGraph
from .scm import AssumptionConstants, Link, Observation, parent_design

INF = math.inf


def clog(x: float) -> float:
    """Natural log clamped so that arguments below ``e`` evaluate to 1."""
    return math.log(x) if x > math.e else 1.0


# -- intervals -------------------------------------------------------------------------


@dataclass(frozen=True)
class IntervalEstimate:
    mean: float
    lower: float
    upper: float

    @classmethod
    def around(cls, mean: float, radius: float) -> "IntervalEstimate":
        if radius == INF:
            return cls(mean, -INF, INF)
        return cls(mean, mean - radius, mean + radius)

    @property
    def width(self) -> float:
        return self.upper - self.lower


UNBOUNDED = IntervalEstimate(0.0, -INF, INF)


def merge_intervals(obs: IntervalEstimate, intv: IntervalEstimate) -> tuple[IntervalEstimate, bool]:
    """Intersect two intervals and take the midpoint.

    Returns the merged interval and whether the intersection was empty, in which
    case the interventional interval is kept unchanged.  Two unbounded inputs
    give mean 0, the initial value of the bandit loops.
    """
    lo = max(obs.lower, intv.lower)
    hi = min(obs.upper, intv.upper)
    if lo > hi:
        return intv, True
    if lo == -INF and hi == INF:
        return IntervalEstimate(0.0, lo, hi), False
    return IntervalEstimate(0.5 * (lo + hi), lo, hi), False


def merge_arrays(lo_o, hi_o, lo_i, hi_i, mean_i):
    """Vectorized :func:`merge_intervals`; returns ``(mean, lower, upper, empty_mask)``."""
    lo = np.maximum(lo_o, lo_i)
    hi = np.minimum(hi_o, hi_i)
    empty = lo > hi
    lo = np.where(empty, lo_i, lo)
    hi = np.where(empty, hi_i, hi)
    unbounded = np.isinf(lo) & np.isinf(hi)
    with np.errstate(invalid="ignore"):
        mid = 0.5 * (lo + hi)
    mean = np.where(empty, mean_i, np.where(unbounded, 0.0, mid))
    return mean, lo, hi, empty


# -- radii ---------------------------------------------------------------------------


def beta_interventional(n_pulls: int, n_actions: int, delta: float, alpha_i: float) -> float:
    """``alpha_I sqrt(log(|A| log(2t) / delta) / t)``; infinite before the first sample."""
    if n_pulls <= 0:
        return INF
    return alpha_i * math.sqrt(clog(n_actions * clog(2.0 * n_pulls) / delta) / n_pulls)


def beta_bglm_obs(
    t: int, q: float, constants: AssumptionConstants, n_nodes: int, delta: float, alpha_o: float
) -> float:
    """``alpha_O M1 D^1.5 / (kappa sqrt(eta)) sqrt(log(3 n t^2 / delta) / (q t))``."""
    if t <= 0 or q <= 0:
        return INF
    c = constants
    scale = alpha_o * c.m1 * c.d_max**1.5 / (c.kappa * math.sqrt(c.eta))
    return scale * math.sqrt(clog(3.0 * n_nodes * t * t / delta) / (q * t))


def beta_general_obs(t_a: int, k: int, z_a: int, n_actions: int, delta: float, alpha_o: float) -> float:
    """``alpha_O sqrt(log(20 k |A| Z_a 2^Z_a log(2t) / delta) / t)`` at ``t = T_a``.

    With an empty block union the factor ``Z_a 2^Z_a`` is taken as 1.
    """
    if t_a <= 0:
        return INF
    zi = z_a * 2.0**z_a if z_a > 0 else 1.0
    arg = 20.0 * max(k, 1) * n_actions * zi * clog(2.0 * t_a) / delta
    return alpha_o * math.sqrt(clog(arg) / t_a)


def bglm_obs_interval(mean, t, q, constants, n_nodes, delta, alpha_o) -> IntervalEstimate:
    return IntervalEstimate.around(mean, beta_bglm_obs(t, q, constants, n_nodes, delta, alpha_o))


def general_obs_interval(estimate, t_a, k, z_a, n_actions, delta, alpha_o) -> IntervalEstimate:
    return IntervalEstimate.around(estimate, beta_general_obs(t_a, k, z_a, n_actions, delta, alpha_o))


def bglm_warmup_satisfied(t: int, constants: AssumptionConstants, n_nodes: int, delta: float) -> bool:
    """Minimum-round condition that accompanies the BGLM stopping rule."""
    c = constants
    d = c.d_max
    first = c.c * d / c.eta**2 * clog(n_nodes * t * t / delta)
    second = 1024.0 * c.m2**2 * (4 * d * d - 3) * d / (c.kappa**4 * c.eta) * (d * d + clog(3.0 * n_nodes * t * t / delta))
    return t >= max(first, second)


# -- BGLM maximum likelihood ----------------------------------------------------------


class MleAccumulator:
    """Sufficient statistics of the per-node score equations.

    Rows with equal parent values contribute identical terms to the score, so
    data are kept as (count, successes) per parent assignment.  The gram matrix
    ``M = I + sum V V^T`` follows from the counts.
    """

    def __init__(self, graph: CausalGraph):
        if graph.global_node is None:
            from .errors import NoGlobalNodeError

            raise NoGlobalNodeError("maximum likelihood needs a global node")
        self.graph = graph
        self.nodes = tuple(v for v in range(len(graph)) if v != graph.global_node)
        self.counts = {v: np.zeros(2 ** len(graph.parents[v])) for v in self.nodes}
        self.successes = {v: np.zeros(2 ** len(graph.parents[v])) for v in self.nodes}
        self.rows = 0
        self._obs_pos = {v: i for i, v in enumerate(graph.observed)}
        self._plan = [(v, graph.parents[v]) for v in self.nodes]

    def add(self, values: Sequence[int]) -> None:
        """Record one full assignment indexed by node."""
        for v, parents in self._plan:
            k = 0
            for p in parents:
                k = 2 * k + values[p]
            self.counts[v][k] += 1
            if values[v]:
                self.successes[v][k] += 1
        self.rows += 1

    def add_observation(self, obs: Observation) -> None:
        values = [0] * len(self.graph)
        for v, i in self._obs_pos.items():
            values[v] = obs.x[i]
        values[self.graph.reward] = obs.y
        self.add(values)

    def gram(self, v: int) -> np.ndarray:
        design = parent_design(len(self.graph.parents[v]))
        return np.eye(design.shape[1]) + design.T @ (self.counts[v][:, None] * design)


def mle_fit(
    acc: MleAccumulator,
    links: Mapping[int, Link],
    theta0: Mapping[int, np.ndarray] | None = None,
    tol: float = 1e-8,
    max_iter: int = 100,
    ridge: float = 1e-8,
) -> dict[int, np.ndarray]:
    """Root of the identity-seeded score ``sum (x - f(V.theta)) V - theta = 0`` per node.

    Damped Newton-Raphson with halving line search on the score norm.  With no
    data the root is ``theta = 0``.
    """
    out = {}
    for v in acc.nodes:
        start = None if theta0 is None else theta0.get(v)
        out[v] = _newton(
            parent_design(len(acc.graph.parents[v])),
            acc.counts[v],
            acc.successes[v],
            links[v],
            start,
            tol,
            max_iter,
            ridge,
        )
    return out


def _newton(design, counts, successes, link, start, tol, max_iter, ridge):
    d = design.shape[1]
    theta = np.zeros(d) if start is None else np.array(start, dtype=float)

    def score(th):
        return design.T @ (successes - counts * link.f(design @ th)) - th

    g = score(theta)
    for _ in range(max_iter):
        if np.max(np.abs(g), initial=0.0) <= tol:
            return theta
        w = counts * link.df(design @ theta)
        h = design.T @ (w[:, None] * design) + (1.0 + ridge) * np.eye(d)
        step_dir = np.linalg.solve(h, g)
        norm = np.linalg.norm(g)
        step = 1.0
        for _ in range(40):
            cand = theta + step * step_dir
            g_new = score(cand)
            if np.linalg.norm(g_new) < norm:
                break
            step *= 0.5
        else:
            if np.max(np.abs(g)) <= 1e3 * tol:
                return theta
            raise NonConvergenceError("line search exhausted before the score vanished")
        theta, g = cand, g_new
    if np.max(np.abs(g), initial=0.0) <= tol:
        return theta
    raise NonConvergenceError(f"no convergence after {max_iter} Newton iterations (|g| = {np.max(np.abs(g)):.3g})")


def ridge_least_squares(design: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Closed form ``(I + V^T V)^{-1} V^T y`` for row-wise data."""
    design = np.asarray(design, dtype=float)
    return np.linalg.solve(np.eye(design.shape[1]) + design.T @ design, design.T @ np.asarray(y, dtype=float))


# -- sequential back-door plug-in estimator -------------------------------------------


def _block_layout(seq: AdmissibleSequence):
    """Positions of each block's nodes inside the ascending union vector."""
    pos = {v: i for i, v in enumerate(seq.union_nodes)}
    return [tuple(pos[v] for v in sorted(b)) for b in seq.blocks]


class ActionCounters:
    """Literal tallies ``T_{a,z}``, ``r_{a,z}``, ``n_{a,z,l}``, ``p_{a,z,l}`` for one action.

    Every update scans all ``2^Z_a`` block assignments and all ``k`` levels.
    This form mirrors the defining sums one for one; :class:`ObservationTable`
    computes the same numbers from a shared histogram.
    """

    def __init__(self, graph: CausalGraph, action: Action, seq: AdmissibleSequence):
        if tuple(seq.intervened) != action.nodes:
            from .errors import SequenceError

            raise SequenceError("sequence does not match the action targets")
        self.graph = graph
        self.action = action
        self.seq = seq
        self.k = len(action)
        self.z_nodes = seq.union_nodes
        self.layout = _block_layout(seq)
        size = 2 ** len(self.z_nodes)
        self.assignments = [
            tuple((code >> (len(self.z_nodes) - 1 - i)) & 1 for i in range(len(self.z_nodes))) for code in range(size)
        ]
        self.t = np.zeros(size, dtype=np.int64)
        self.y_sum = np.zeros(size, dtype=np.int64)
        self.n = np.zeros((self.k, size), dtype=np.int64)
        self.p_num = np.zeros((self.k, size), dtype=np.int64)
        self._obs_pos = {v: i for i, v in enumerate(graph.observed)}

    def update(self, obs: Observation) -> None:
        x_obs = [obs.x[self._obs_pos[v]] for v in self.action.nodes]
        z_obs = [obs.x[self._obs_pos[v]] for v in self.z_nodes]
        s = self.action.values
        s_match = all(a == b for a, b in zip(x_obs, s))
        for j, z in enumerate(self.assignments):
            if s_match and all(a == b for a, b in zip(z, z_obs)):
                self.t[j] += 1
                self.y_sum[j] += obs.y
            for l in range(self.k):
                prefix = all(
                    all(z[p] == z_obs[p] for p in self.layout[i]) and x_obs[i] == s[i] for i in range(l)
                )
                if not prefix:
                    continue
                self.n[l, j] += 1
                if all(z[p] == z_obs[p] for p in self.layout[l]):
                    self.p_num[l, j] += 1

    @property
    def t_a(self) -> int:
        return int(self.t.min())

    def estimate(self) -> float:
        total = 0.0
        for j in range(len(self.assignments)):
            if self.t[j] == 0:
                continue
            term = self.y_sum[j] / self.t[j]
            for l in range(self.k):
                if self.n[l, j] == 0:
                    term = 0.0
                    break
                term *= self.p_num[l, j] / self.n[l, j]
            total += term
        return total


def update_obs_counters(counters: ActionCounters, action: Action, seq: AdmissibleSequence, obs: Observation):
    """Feed one passive observation into the tallies of ``action``."""
    counters.update(obs)
    return counters


def plugin_estimate(counters: ActionCounters | None, action: Action, seq: AdmissibleSequence | None) -> float:
    if seq is None or counters is None:
        raise NoSequenceError(f"{action.label()} has no admissible sequence")
    return counters.estimate()


class ObservationTable:
    """Histogram of passive observations over (observed non-reward nodes, reward).

    Provides the plug-in estimate and ``T_a`` of any action with an admissible
    sequence from marginal sums of the histogram.
    """

    def __init__(self, graph: CausalGraph, limit: int = 20):
        n = len(graph.observed) + 1
        if n > limit:
            raise TooLargeError(f"histogram over {n} binary variables exceeds the limit {limit}")
        self.graph = graph
        self.counts = np.zeros((2,) * n, dtype=np.int64)
        self.total = 0
        self._pos = {v: i for i, v in enumerate(graph.observed)}
        self._y_axis = n - 1

    def add(self, obs: Observation) -> None:
        self.counts[obs.x + (obs.y,)] += 1
        self.total += 1

    def add_values(self, values: Sequence[int]) -> None:
        """Add a full assignment indexed by node."""
        key = tuple(values[v] for v in self.graph.observed) + (values[self.graph.reward],)
        self.counts[key] += 1
        self.total += 1

    def add_rows(self, rows: np.ndarray) -> None:
        """Add many full assignments at once (one row per sample, columns indexed by node)."""
        rows = np.asarray(rows)
        cols = list(self.graph.observed) + [self.graph.reward]
        np.add.at(self.counts, tuple(rows[:, c] for c in cols), 1)
        self.total += rows.shape[0]

    def marginal(self, axes: Sequence[int]) -> np.ndarray:
        keep = sorted(axes)
        others = tuple(a for a in range(self.counts.ndim) if a not in keep)
        m = self.counts.sum(axis=others) if others else self.counts
        return np.transpose(m, [keep.index(a) for a in axes])

    def estimate(self, action: Action, seq: AdmissibleSequence) -> tuple[float, int]:
        """Plug-in estimate and ``T_a = min_z T_{a,z}``."""
        k = len(action)
        z_nodes = seq.union_nodes
        nz = len(z_nodes)
        axes = [self._pos[v] for v in action.nodes] + [self._pos[v] for v in z_nodes] + [self._y_axis]
        m = self.marginal(axes)
        s = action.values
        at_s = m[s]  # shape (2,)*nz + (2,)
        t = at_s.sum(axis=-1)
        y_sum = at_s[..., 1]
        t_a = int(t.min())
        with np.errstate(invalid="ignore", divide="ignore"):
            term = np.where(t > 0, y_sum / np.maximum(t, 1), 0.0)
        xz = m.sum(axis=-1)  # shape (2,)*k + (2,)*nz
        layout = _block_layout(seq)
        prefix: set[int] = set()
        for l in range(k):
            # fix X_1..X_{l-1} at s, sum over the remaining intervened nodes
            sub = xz[tuple(s[:l])].sum(axis=tuple(range(k - l))) if k - l > 0 else xz[tuple(s[:l])]
            n_l = _keep_axes(sub, prefix)
            prefix_l = prefix | set(layout[l])
            p_l = _keep_axes(sub, prefix_l)
            with np.errstate(invalid="ignore", divide="ignore"):
                factor = np.where(n_l > 0, p_l / np.maximum(n_l, 1), 0.0)
            term = term * factor
            prefix = prefix_l
        return float(term.sum()), t_a


def _keep_axes(arr: np.ndarray, keep: set[int]) -> np.ndarray:
    others = tuple(a for a in range(arr.ndim) if a not in keep)
    if not others:
        return arr
    return np.broadcast_to(arr.sum(axis=others, keepdims=True), arr.shape)

"""Best-intervention identification algorithms.

Fixed confidence:

* :func:`ccpe_bglm` mixes a BGLM maximum-likelihood estimate from passive
  observations with interventional means.
* :func:`ccpe_general` uses sequential back-door plug-in estimates instead.
* :func:`lucb` and :func:`lil_ucb_heuristic` are purely interventional baselines.

Fixed budget:

* :func:`causal_successive_reject` spends half the budget observing and the
  other half on successive-reject phases.

Every algorithm talks to an :class:`Environment`, which only returns
observations; it never exposes the model.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .complexity import logbar
from .errors import BudgetError, ConfigError, SequenceError
from .estimation import (
    INF,
    IntervalEstimate,
    MleAccumulator,
    ObservationTable,
    beta_bglm_obs,
    beta_general_obs,
    beta_interventional,
    bglm_warmup_satisfied,
    merge_arrays,
    merge_intervals,
    mle_fit,
)
from .graph import NULL_ACTION, Action, AdmissibleSequence, CausalGraph, verify_admissible_sequence
from .scm import AssumptionConstants, Link, Observation, Scm, TabularScm, bglm_tables, exact_mu, q_bglm

DEFAULT_ALPHA_O = {"ccpe_bglm": 6.0 * math.sqrt(2.0), "ccpe_general": 8.0, "csr": 8.0}


# -- environment -------------------------------------------------------------------------


class Environment:
    """Simulator answering ``play(action)`` with one observation.

    Each action owns an independent random stream derived from ``seed``
    (``do()`` uses stream 0, catalog action ``i`` stream ``i + 1``), so two
    algorithms run on the same seed see the same outcome sequence for every arm.
    """

    def __init__(self, model: Scm, actions: Sequence[Action], seed, block: int = 256):
        self._model = model
        self._graph = model.graph
        self._seed = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        self._stream_of = {NULL_ACTION: 0}
        for i, a in enumerate(actions):
            self._stream_of.setdefault(a, i + 1)
        self._streams: dict[int, list] = {}
        self._block = block
        self._width = model.uniforms_per_sample
        self.plays = 0

    def _next(self, stream: int, action: Action) -> Observation:
        state = self._streams.get(stream)
        if state is None:
            ss = np.random.SeedSequence(self._seed.entropy, spawn_key=tuple(self._seed.spawn_key) + (stream,))
            state = [np.random.Generator(np.random.Philox(ss)), [], 0]
            self._streams[stream] = state
        rng, buf, pos = state
        if pos >= len(buf):
            # a block of rows simulated at once equals the same rows simulated one by one
            vals = self._model.draw_batch(rng.random((self._block, self._width)), action.as_dict())
            obs = vals[:, list(self._graph.observed)].tolist()
            ys = vals[:, self._graph.reward].tolist()
            buf = [Observation(tuple(x), y) for x, y in zip(obs, ys)]
            state[1] = buf
            pos = 0
        state[2] = pos + 1
        return buf[pos]

    def play(self, action: Action) -> Observation:
        stream = self._stream_of.get(action)
        if stream is None:
            raise ConfigError(f"{action.label(self._graph)} is not in the action catalog")
        self.plays += 1
        return self._next(stream, action)


# -- configuration and records ------------------------------------------------------------


@dataclass(frozen=True)
class AlgoConfig:
    """Tuning and protocol parameters shared by all algorithms.

    ``alpha_o=None`` selects the algorithm's theoretical default.  ``censor_at``
    lists budgets at which the current recommendation is recorded.
    """

    epsilon: float = 0.0
    delta: float = 0.1
    alpha_o: float | None = None
    alpha_i: float = 2.0
    theory_mode: bool = False
    obs_refresh_period: int = 50
    budget: int | None = None
    round_cap: int = 1_000_000
    count_obs_rounds_for_do: bool = True
    censor_at: tuple[int, ...] = ()
    constants: AssumptionConstants | None = None

    def __post_init__(self):
        if not 0 <= self.epsilon < 1:
            raise ConfigError(f"epsilon must lie in [0, 1), got {self.epsilon}")
        if not 0 < self.delta < 1:
            raise ConfigError(f"delta must lie in (0, 1), got {self.delta}")
        if self.obs_refresh_period < 1:
            raise ConfigError("obs_refresh_period must be at least 1")
        if self.alpha_i <= 0 or (self.alpha_o is not None and self.alpha_o <= 0):
            raise ConfigError("exploration parameters must be positive")
        if self.round_cap < 1:
            raise ConfigError("round_cap must be positive")
        object.__setattr__(self, "censor_at", tuple(sorted(int(b) for b in self.censor_at)))

    def alpha_o_for(self, algorithm: str) -> float:
        return DEFAULT_ALPHA_O.get(algorithm, 8.0) if self.alpha_o is None else self.alpha_o


@dataclass
class TrialRecord:
    """Outcome of one run.

    ``pulls[i]`` counts interventional plays of action ``i``; ``observations``
    counts passive ``do()`` rounds, so ``rounds == sum(pulls) + observations``.
    """

    algorithm: str
    chosen: int
    chosen_label: str
    rounds: int
    pulls: list[int]
    observations: int
    stop_reason: str
    empty_merge_events: int = 0
    iterations: int = 0
    censored: dict[int, int] = field(default_factory=dict)
    final_check: dict | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["censored"] = {str(k): v for k, v in self.censored.items()}
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "TrialRecord":
        d = dict(d)
        d["censored"] = {int(k): v for k, v in d.get("censored", {}).items()}
        return cls(**d)


# -- observational estimators plugged into the LUCB loop -----------------------------------


class _BglmObservational:
    def __init__(self, graph, links, actions, constants, config, alpha_o):
        self.graph = graph
        self.links = links
        self.actions = actions
        self.constants = constants
        self.acc = MleAccumulator(graph)
        self.theta = None
        self.n_nodes = len(graph.observed)
        self.q = np.array([q_bglm(graph, a, constants.d_max) for a in actions])
        self.delta = config.delta
        self.alpha_o = alpha_o

    def observe(self, obs: Observation) -> None:
        self.acc.add_observation(obs)

    def refresh(self, t: int):
        self.theta = mle_fit(self.acc, self.links, self.theta)
        model = TabularScm(self.graph, bglm_tables(self.graph, self.links, self.theta))
        means = np.array([exact_mu(model, a) for a in self.actions])
        radii = np.array([beta_bglm_obs(t, q, self.constants, self.n_nodes, self.delta, self.alpha_o) for q in self.q])
        return means, radii

    def warmup_ok(self, t: int) -> bool:
        return bglm_warmup_satisfied(t, self.constants, self.n_nodes, self.delta)


class _GeneralObservational:
    def __init__(self, graph, actions, sequences, config, alpha_o):
        self.table = ObservationTable(graph)
        self.actions = actions
        self.sequences = sequences
        self.delta = config.delta
        self.alpha_o = alpha_o

    def observe(self, obs: Observation) -> None:
        self.table.add(obs)

    def estimates(self):
        """Plug-in means and ``T_a`` (0 for actions without a usable sequence)."""
        n = len(self.actions)
        means = np.zeros(n)
        t_a = np.zeros(n, dtype=np.int64)
        for i, (a, seq) in enumerate(zip(self.actions, self.sequences)):
            if seq is None or a.is_null:
                continue
            means[i], t_a[i] = self.table.estimate(a, seq)
        return means, t_a

    def radius(self, i: int, t_a: int) -> float:
        a, seq = self.actions[i], self.sequences[i]
        if seq is None or a.is_null:
            return INF
        return beta_general_obs(t_a, len(a), seq.union_size, len(self.actions), self.delta, self.alpha_o)

    def refresh(self, t: int):
        means, t_a = self.estimates()
        radii = np.array([self.radius(i, int(t_a[i])) for i in range(len(self.actions))])
        return means, radii

    def warmup_ok(self, t: int) -> bool:
        return True


# -- the shared LUCB-style loop -----------------------------------------------------------


def _lucb_loop(name, env, actions, config, observational=None, alpha_i=None) -> TrialRecord:
    n = len(actions)
    if n == 0:
        raise ConfigError("empty action catalog")
    graph = env._graph
    labels = [a.label(graph) for a in actions]
    alpha_i = config.alpha_i if alpha_i is None else alpha_i
    null_idx = next((i for i, a in enumerate(actions) if a.is_null), None)
    plays_per_iter = 2 if observational is None else 3

    samples = np.zeros(n, dtype=np.int64)  # interventional-channel sample counts
    y_sum = np.zeros(n)
    pulls = [0] * n
    mean_i = np.zeros(n)
    lo_i = np.full(n, -INF)
    hi_i = np.full(n, INF)
    mean_o = np.zeros(n)
    lo_o = np.full(n, -INF)
    hi_o = np.full(n, INF)
    mu = np.zeros(n)
    lo = np.full(n, -INF)
    hi = np.full(n, INF)
    empty_events = 0
    observations = 0
    rounds = 0
    censored: dict[int, int] = {}
    pending = list(config.censor_at)

    def finish(reason, a_h, t, check=None):
        for b in pending:
            censored[b] = a_h
        return TrialRecord(name, int(a_h), labels[a_h], rounds, pulls, observations, reason, empty_events, t, censored, check)

    if n == 1:
        return finish("confidence", 0, 0)

    def refresh_interventional(i):
        nonlocal empty_events
        k = int(samples[i])
        r = beta_interventional(k, n, config.delta, alpha_i)
        m = y_sum[i] / k if k else 0.0
        mean_i[i] = m
        lo_i[i], hi_i[i] = (m - r, m + r) if r != INF else (-INF, INF)
        merged, empty = merge_intervals(
            IntervalEstimate(mean_o[i], lo_o[i], hi_o[i]), IntervalEstimate(m, lo_i[i], hi_i[i])
        )
        empty_events += empty
        mu[i], lo[i], hi[i] = merged.mean, merged.lower, merged.upper

    t = 0
    while True:
        t += 1
        a_h = int(np.argmax(mu))
        masked = hi.copy()
        masked[a_h] = -INF
        a_l = int(np.argmax(masked))
        check = {"a_h": a_h, "a_l": a_l, "upper_l": float(hi[a_l]), "lower_h": float(lo[a_h])}
        if hi[a_l] <= lo[a_h] + config.epsilon:
            if not config.theory_mode or observational is None or observational.warmup_ok(t):
                return finish("confidence", a_h, t - 1, check)
        while pending and rounds + plays_per_iter > pending[0]:
            censored[pending.pop(0)] = a_h
        if rounds + plays_per_iter > config.round_cap:
            return finish("round_cap", a_h, t - 1, check)

        changed = set()
        if observational is not None:
            obs = env.play(NULL_ACTION)
            rounds += 1
            observations += 1
            observational.observe(obs)
            if null_idx is not None and config.count_obs_rounds_for_do:
                samples[null_idx] += 1
                y_sum[null_idx] += obs.y
                changed.add(null_idx)
            if (t - 1) % config.obs_refresh_period == 0:
                means, radii = observational.refresh(t)
                mean_o[:] = means
                finite = np.isfinite(radii)
                lo_o[:] = np.where(finite, means - np.where(finite, radii, 0.0), -INF)
                hi_o[:] = np.where(finite, means + np.where(finite, radii, 0.0), INF)
                changed.update(range(n))
        for a in (a_l, a_h):
            obs = env.play(actions[a])
            rounds += 1
            pulls[a] += 1
            samples[a] += 1
            y_sum[a] += obs.y
            changed.add(a)
        if len(changed) == n:
            k = samples
            r = np.array([beta_interventional(int(c), n, config.delta, alpha_i) for c in k])
            with np.errstate(invalid="ignore", divide="ignore"):
                mean_i[:] = np.where(k > 0, y_sum / np.maximum(k, 1), 0.0)
            fin = np.isfinite(r)
            lo_i[:] = np.where(fin, mean_i - np.where(fin, r, 0.0), -INF)
            hi_i[:] = np.where(fin, mean_i + np.where(fin, r, 0.0), INF)
            m, l, h, empty = merge_arrays(lo_o, hi_o, lo_i, hi_i, mean_i)
            empty_events += int(empty.sum())
            mu[:], lo[:], hi[:] = m, l, h
        else:
            for i in sorted(changed):
                refresh_interventional(i)


def _check_sequences(graph, actions, sequences):
    if sequences is None:
        return [None] * len(actions)
    if len(sequences) != len(actions):
        raise ConfigError("one sequence entry (or None) per action required")
    for a, seq in zip(actions, sequences):
        if seq is not None and not a.is_null:
            verdict = verify_admissible_sequence(graph, a, seq)
            if not verdict:
                raise SequenceError(
                    f"sequence for {a.label(graph)} violates condition {verdict.condition} at block {verdict.index}"
                )
    return list(sequences)


# -- public algorithms ---------------------------------------------------------------------


def ccpe_bglm(
    env: Environment,
    graph: CausalGraph,
    actions: Sequence[Action],
    config: AlgoConfig,
    links: Mapping[int, Link],
) -> TrialRecord:
    """Fixed-confidence search mixing BGLM maximum likelihood with interventional means.

    Each iteration observes ``do()`` once and pulls the two LUCB candidates.
    ``config.constants`` must hold the BGLM assumption constants.
    """
    if graph.global_node is None or graph.hidden:
        raise ConfigError("BGLM search needs a global node and no hidden nodes")
    if config.constants is None:
        raise ConfigError("BGLM search needs assumption constants")
    obs = _BglmObservational(graph, links, list(actions), config.constants, config, config.alpha_o_for("ccpe_bglm"))
    return _lucb_loop("ccpe_bglm", env, list(actions), config, obs)


def ccpe_general(
    env: Environment,
    graph: CausalGraph,
    actions: Sequence[Action],
    sequences: Sequence[AdmissibleSequence | None] | None,
    config: AlgoConfig,
) -> TrialRecord:
    """Fixed-confidence search mixing sequential back-door estimates with interventional means.

    Actions whose sequence is ``None`` are estimated from interventions only.
    """
    seqs = _check_sequences(graph, actions, sequences)
    obs = _GeneralObservational(graph, list(actions), seqs, config, config.alpha_o_for("ccpe_general"))
    return _lucb_loop("ccpe_general", env, list(actions), config, obs)


def lucb(env: Environment, actions: Sequence[Action], config: AlgoConfig) -> TrialRecord:
    """LUCB with the interventional radius; unplayed arms have infinite upper bounds."""
    return _lucb_loop("lucb", env, list(actions), config, None)


def lil_ucb_heuristic(env: Environment, actions: Sequence[Action], config: AlgoConfig) -> TrialRecord:
    """lil'UCB, heuristic variant.

    Confidence ``eps = 0.01``, ``beta = 1/2``, ``lambda = 1 + 10/|A|`` and
    sub-Gaussian scale ``1/2`` for Bernoulli rewards; the radius is multiplied by
    ``config.alpha_i``.  Stops once an arm holds at least ``1 + lambda`` times the
    pulls of all others and returns the most pulled arm.
    """
    actions = list(actions)
    n = len(actions)
    if n == 0:
        raise ConfigError("empty action catalog")
    graph = env._graph
    labels = [a.label(graph) for a in actions]
    eps, beta, sigma = 0.01, 0.5, 0.5
    lam = 1.0 + 10.0 / n
    pulls = [0] * n
    y_sum = [0.0] * n
    censored: dict[int, int] = {}
    pending = list(config.censor_at)
    rounds = 0

    def leader():
        return max(range(n), key=lambda i: (pulls[i], -i))

    def finish(reason, t):
        best = leader()
        for b in pending:
            censored[b] = best
        return TrialRecord("lil_ucb", best, labels[best], rounds, pulls, 0, reason, 0, t, censored, None)

    if n == 1:
        return finish("confidence", 0)

    def radius(k):
        inner = math.log((1 + eps) * k + 2.0)
        return (
            config.alpha_i
            * (1 + beta)
            * (1 + math.sqrt(eps))
            * math.sqrt(2 * sigma**2 * (1 + eps) * math.log(max(inner / config.delta, math.e)) / k)
        )

    t = 0
    while True:
        if t >= n:
            for i in range(n):
                if pulls[i] >= 1 + lam * (rounds - pulls[i]):
                    return finish("confidence", t)
        while pending and rounds + 1 > pending[0]:
            censored[pending.pop(0)] = leader()
        if rounds + 1 > config.round_cap:
            return finish("round_cap", t)
        t += 1
        if t <= n:
            a = t - 1
        else:
            a = max(range(n), key=lambda i: (y_sum[i] / pulls[i] + radius(pulls[i]), -i))
        obs = env.play(actions[a])
        rounds += 1
        pulls[a] += 1
        y_sum[a] += obs.y


def causal_successive_reject(
    env: Environment,
    graph: CausalGraph,
    actions: Sequence[Action],
    sequences: Sequence[AdmissibleSequence | None] | None,
    config: AlgoConfig,
) -> TrialRecord:
    """Fixed-budget successive rejects after a passive half-budget.

    ``floor(T/2)`` rounds observe ``do()``; phase ``k`` then pulls the surviving
    arm with the fewest ``T_a + N_a`` until ``ceil((N+1-k)(n_k - n_{k-1}))`` pulls
    are spent, and drops the arm with the lowest merged mean.
    """
    actions = list(actions)
    n = len(actions)
    budget = config.budget
    if budget is None:
        raise ConfigError("causal successive reject needs a budget")
    if budget < 4 * n:
        raise BudgetError(f"budget {budget} is below 4 |A| = {4 * n}")
    seqs = _check_sequences(graph, actions, sequences)
    alpha_o = config.alpha_o_for("csr")
    est = _GeneralObservational(graph, actions, seqs, config, alpha_o)
    labels = [a.label(graph) for a in actions]
    null_idx = next((i for i, a in enumerate(actions) if a.is_null), None)

    samples = np.zeros(n, dtype=np.int64)
    y_sum = np.zeros(n)
    pulls = [0] * n
    observations = budget // 2
    for _ in range(observations):
        obs = env.play(NULL_ACTION)
        est.observe(obs)
        if null_idx is not None and config.count_obs_rounds_for_do:
            samples[null_idx] += 1
            y_sum[null_idx] += obs.y
    means_o, t_a = est.estimates()
    if null_idx is not None:
        t_a[null_idx] = observations
    radii_o = [est.radius(i, int(t_a[i])) for i in range(n)]

    lb = logbar(n)
    sched = [0.0] + [(budget / 2.0 - n) / (lb * (n + 1 - k)) for k in range(1, n)]
    alive = list(range(n))
    rounds = observations
    empty_events = 0

    def merged_mean(i):
        nonlocal empty_events
        k = int(samples[i])
        m_i = y_sum[i] / k if k else 0.0
        intv = IntervalEstimate.around(m_i, beta_interventional(k, n, config.delta, config.alpha_i))
        obs_iv = IntervalEstimate.around(float(means_o[i]), radii_o[i])
        merged, empty = merge_intervals(obs_iv, intv)
        empty_events += empty
        return merged.mean

    for k in range(1, n):
        quota = math.ceil((n + 1 - k) * (sched[k] - sched[k - 1]))
        for _ in range(quota):
            a = min(alive, key=lambda i: (int(t_a[i]) + pulls[i], i))
            obs = env.play(actions[a])
            rounds += 1
            pulls[a] += 1
            samples[a] += 1
            y_sum[a] += obs.y
        means = {i: merged_mean(i) for i in alive}
        worst = min(alive, key=lambda i: (means[i], i))
        alive.remove(worst)
        if len(alive) == 1:
            break
    best = alive[0]
    return TrialRecord("csr", best, labels[best], rounds, pulls, observations, "budget", empty_events, n - 1, {}, None)


ALGORITHMS = ("ccpe_bglm", "ccpe_general", "lucb", "lil_ucb", "csr")

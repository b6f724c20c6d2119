"""Multi-arm policies and the Monte Carlo episode engine.

Hidden states are simulated honestly: every arm's chain advances each step
whether observed or not, and activation only reveals the state.  Each arm
consumes its own random substream derived from (seed, arm index), which
makes state trajectories policy-independent; running several policies with
the same seed is therefore automatically a paired, common-random-numbers
comparison.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .index import IndexResult, approximate_whittle_index
from .model import Arm, BanditInstance, belief_update_active, belief_update_passive, clean_belief

DP_MAX_ARMS = 3
DP_MAX_HORIZON = 12

_SELECTION_STREAM_TAG = 999_983  # offsets the selection rng away from arm streams


class PolicyKind(enum.Enum):
    WHITTLE = "whittle"
    MYOPIC = "myopic"
    RANDOM = "random"
    OPTIMAL_DP = "optimal_dp"


@dataclass(frozen=True)
class Policy:
    kind: PolicyKind
    dp_horizon: int = 8

    @classmethod
    def from_name(cls, name: str, dp_horizon: int = 8) -> "Policy":
        try:
            kind = PolicyKind(name.strip().lower())
        except ValueError as exc:
            valid = ", ".join(k.value for k in PolicyKind)
            raise ValueError(f"unknown policy {name!r}; expected one of: {valid}") from exc
        return cls(kind=kind, dp_horizon=dp_horizon)

    @property
    def name(self) -> str:
        return self.kind.value


@dataclass
class EpisodeTrace:
    policy: str
    seed: int
    selections: list[tuple[int, ...]] = field(default_factory=list)
    observations: list[tuple[int, ...]] = field(default_factory=list)
    rewards: list[float] = field(default_factory=list)
    cum_discounted: list[float] = field(default_factory=list)
    cum_raw: list[float] = field(default_factory=list)
    fallback_counts: list[int] = field(default_factory=list)
    myopic_agreement: list[bool] = field(default_factory=list)


def _top_m(scores: np.ndarray, m: int) -> tuple[int, ...]:
    # ties break toward the lowest arm index for deterministic replay
    order = sorted(range(scores.shape[0]), key=lambda n: (-scores[n], n))
    return tuple(sorted(order[:m]))


def select_myopic(instance: BanditInstance, beliefs: list[np.ndarray]) -> tuple[int, ...]:
    """Top M arms by immediate expected reward."""
    scores = np.array(
        [arm.expected_reward(w) for arm, w in zip(instance.arms, beliefs)]
    )
    return _top_m(scores, instance.select_count)


class IndexCache:
    """Memo of index evaluations keyed by (arm, quantized belief).

    The index is a pure function of the arm, its current belief, the
    discount and l_max, so identical beliefs (rows and their short drifts
    recur constantly during simulation) can reuse the evaluation.
    """

    def __init__(self, discount: float, l_max: int, method: str = "auto") -> None:
        self.discount = discount
        self.l_max = l_max
        self.method = method
        self._store: dict[tuple[int, bytes], IndexResult] = {}

    def get(self, arm: Arm, arm_idx: int, belief: np.ndarray) -> IndexResult:
        key = (arm_idx, np.round(belief, 12).tobytes())
        hit = self._store.get(key)
        if hit is None:
            hit = approximate_whittle_index(
                arm, belief, self.discount, self.l_max, self.method
            )
            self._store[key] = hit
        return hit


def select_whittle(
    instance: BanditInstance,
    beliefs: list[np.ndarray],
    discount: float | None = None,
    l_max: int = 500,
    cache: IndexCache | None = None,
) -> tuple[tuple[int, ...], list[IndexResult]]:
    """Top M arms by approximate Whittle index; returns per-arm index results too."""
    beta = instance.discount if discount is None else discount
    cache = cache or IndexCache(beta, l_max)
    results = [
        cache.get(arm, n, w) for n, (arm, w) in enumerate(zip(instance.arms, beliefs))
    ]
    scores = np.array([r.value for r in results])
    return _top_m(scores, instance.select_count), results


def sample_trajectories(instance: BanditInstance, horizon: int, seed: int) -> np.ndarray:
    """Hidden state paths, shape (N, horizon); arm n draws from stream (seed, n)."""
    paths = np.empty((instance.n_arms, horizon), dtype=np.int64)
    for n, arm in enumerate(instance.arms):
        rng = np.random.default_rng([seed, n])
        draws = rng.random(horizon)
        cum_init = np.cumsum(arm.initial_belief)
        state = int(np.searchsorted(cum_init, draws[0], side="right"))
        state = min(state, arm.n_states - 1)
        cum_rows = np.cumsum(arm.transition, axis=1)
        for t in range(horizon):
            paths[n, t] = state
            if t + 1 < horizon:
                nxt = int(np.searchsorted(cum_rows[state], draws[t + 1], side="right"))
                state = min(nxt, arm.n_states - 1)
    return paths


def run_episode(
    instance: BanditInstance,
    policy: Policy,
    horizon: int,
    seed: int,
    l_max: int = 500,
    trajectories: np.ndarray | None = None,
    index_cache: IndexCache | None = None,
    dp_cache: dict | None = None,
    track_agreement: bool = False,
) -> EpisodeTrace:
    """One episode under the given policy; same seed gives a bit-identical trace."""
    trace = EpisodeTrace(policy=policy.name, seed=seed)
    if horizon <= 0:
        return trace
    states = (
        trajectories
        if trajectories is not None
        else sample_trajectories(instance, horizon, seed)
    )
    beliefs = [arm.initial_belief.copy() for arm in instance.arms]
    beta = instance.discount
    selector_rng = (
        np.random.default_rng([seed, _SELECTION_STREAM_TAG])
        if policy.kind is PolicyKind.RANDOM
        else None
    )
    if policy.kind is PolicyKind.WHITTLE and index_cache is None:
        index_cache = IndexCache(beta, l_max)
    if policy.kind is PolicyKind.OPTIMAL_DP and dp_cache is None:
        dp_cache = {}

    cum_disc = 0.0
    cum_raw = 0.0
    for t in range(1, horizon + 1):
        if policy.kind is PolicyKind.MYOPIC:
            selected = select_myopic(instance, beliefs)
        elif policy.kind is PolicyKind.RANDOM:
            picks = selector_rng.choice(
                instance.n_arms, size=instance.select_count, replace=False
            )
            selected = tuple(sorted(int(i) for i in picks))
        elif policy.kind is PolicyKind.WHITTLE:
            selected, results = select_whittle(
                instance, beliefs, beta, l_max, index_cache
            )
            trace.fallback_counts.append(sum(r.fallback_used for r in results))
            if track_agreement:
                trace.myopic_agreement.append(selected == select_myopic(instance, beliefs))
        else:
            window = min(policy.dp_horizon, horizon - t + 1)
            _, selected = optimal_dp(instance, window, beliefs, memo=dp_cache)

        observed = tuple(int(states[n, t - 1]) for n in selected)
        reward = float(
            sum(instance.arms[n].rewards[s] for n, s in zip(selected, observed))
        )
        cum_disc += beta ** (t - 1) * reward
        cum_raw += reward

        trace.selections.append(selected)
        trace.observations.append(observed)
        trace.rewards.append(reward)
        trace.cum_discounted.append(cum_disc)
        trace.cum_raw.append(cum_raw)

        for n, arm in enumerate(instance.arms):
            if n in selected:
                beliefs[n] = belief_update_active(arm, int(states[n, t - 1]))
            else:
                beliefs[n] = belief_update_passive(arm, beliefs[n])
    return trace


@dataclass
class MonteCarloResult:
    policies: list[str]
    horizon: int
    runs: int
    base_seed: int
    mean_cum_discounted: dict[str, np.ndarray]
    stderr_cum_discounted: dict[str, np.ndarray]
    mean_cum_raw: dict[str, np.ndarray]
    agreement_rate: np.ndarray | None = None
    fallback_rate: np.ndarray | None = None
    fallback_evals: int = 0
    total_evals: int = 0

    def final_mean(self, policy: str) -> float:
        return float(self.mean_cum_discounted[policy][-1])

    def final_stderr(self, policy: str) -> float:
        return float(self.stderr_cum_discounted[policy][-1])


def run_monte_carlo(
    instance: BanditInstance,
    policies: list[Policy],
    horizon: int,
    runs: int,
    base_seed: int,
    l_max: int = 500,
) -> tuple[MonteCarloResult, dict[str, np.ndarray]]:
    """Paired Monte Carlo sweep.

    Run r draws every arm's trajectory from streams (base_seed + r, n); all
    policies replay the same trajectories, so cross-policy differences are
    low-variance.  Returns the aggregate plus the per-run final cumulative
    discounted rewards (policy -> shape (runs,)) for paired significance
    tests.
    """
    if runs < 1:
        raise ValueError("runs must be >= 1")
    names = [p.name for p in policies]
    if len(set(names)) != len(names):
        raise ValueError(f"duplicate policy names in {names}")
    per_run_cum = {p.name: np.zeros((runs, horizon)) for p in policies}
    per_run_raw = {p.name: np.zeros((runs, horizon)) for p in policies}
    whittle_requested = any(p.kind is PolicyKind.WHITTLE for p in policies)
    agreement = np.zeros(horizon) if whittle_requested else None
    fallback = np.zeros(horizon) if whittle_requested else None
    fallback_evals = 0
    total_evals = 0

    index_cache = IndexCache(instance.discount, l_max)
    dp_cache: dict = {}

    for r in range(runs):
        seed = base_seed + r
        trajectories = sample_trajectories(instance, horizon, seed)
        for policy in policies:
            trace = run_episode(
                instance,
                policy,
                horizon,
                seed,
                l_max,
                trajectories=trajectories,
                index_cache=index_cache,
                dp_cache=dp_cache,
                track_agreement=whittle_requested,
            )
            per_run_cum[policy.name][r] = trace.cum_discounted
            per_run_raw[policy.name][r] = trace.cum_raw
            if policy.kind is PolicyKind.WHITTLE:
                agreement += np.array(trace.myopic_agreement, dtype=float)
                fallback_counts = np.array(trace.fallback_counts, dtype=float)
                fallback += fallback_counts / instance.n_arms
                fallback_evals += int(fallback_counts.sum())
                total_evals += instance.n_arms * horizon

    result = MonteCarloResult(
        policies=names,
        horizon=horizon,
        runs=runs,
        base_seed=base_seed,
        mean_cum_discounted={
            name: per_run_cum[name].mean(axis=0) for name in names
        },
        stderr_cum_discounted={
            name: per_run_cum[name].std(axis=0, ddof=1) / math.sqrt(runs)
            if runs > 1
            else np.zeros(horizon)
            for name in names
        },
        mean_cum_raw={name: per_run_raw[name].mean(axis=0) for name in names},
        agreement_rate=agreement / runs if agreement is not None else None,
        fallback_rate=fallback / runs if fallback is not None else None,
        fallback_evals=fallback_evals,
        total_evals=total_evals,
    )
    finals = {name: per_run_cum[name][:, -1].copy() for name in names}
    return result, finals


def optimal_dp(
    instance: BanditInstance,
    horizon: int,
    beliefs: list[np.ndarray] | None = None,
    memo: dict | None = None,
) -> tuple[float, tuple[int, ...]]:
    """Exact finite-horizon optimum over the joint belief state (tiny instances).

    Exhausts every selection set and observation outcome per step, memoizing
    on the quantized joint belief.  Guarded hard: the joint tree blows up
    geometrically.
    """
    n = instance.n_arms
    if n > DP_MAX_ARMS:
        raise ValueError(f"optimal_dp limited to N <= {DP_MAX_ARMS} arms, got {n}")
    if horizon > DP_MAX_HORIZON:
        raise ValueError(
            f"optimal_dp limited to horizon <= {DP_MAX_HORIZON}, got {horizon}"
        )
    if horizon < 1:
        raise ValueError("optimal_dp needs horizon >= 1")
    if beliefs is None:
        beliefs = [arm.initial_belief for arm in instance.arms]
    beliefs = [clean_belief(w) for w in beliefs]
    beta = instance.discount
    action_sets = list(itertools.combinations(range(n), instance.select_count))
    memo = {} if memo is None else memo

    def key_of(t: int, ws: tuple[np.ndarray, ...]) -> tuple:
        return (t, tuple(np.round(w, 10).tobytes() for w in ws))

    def solve(t: int, ws: tuple[np.ndarray, ...]) -> tuple[float, tuple[int, ...]]:
        if t == 0:
            return 0.0, ()
        key = key_of(t, ws)
        hit = memo.get(key)
        if hit is not None:
            return hit
        best_val = -math.inf
        best_act: tuple[int, ...] = action_sets[0]
        for selected in action_sets:
            immediate = sum(
                instance.arms[i].expected_reward(ws[i]) for i in selected
            )
            cont = 0.0
            if t > 1:
                outcome_spaces = [range(instance.arms[i].n_states) for i in selected]
                for outcome in itertools.product(*outcome_spaces):
                    prob = 1.0
                    for i, s in zip(selected, outcome):
                        prob *= float(ws[i][s])
                    if prob == 0.0:
                        continue
                    nxt = []
                    it = iter(outcome)
                    for i, arm in enumerate(instance.arms):
                        if i in selected:
                            nxt.append(arm.transition[next(it)])
                        else:
                            nxt.append(belief_update_passive(arm, ws[i]))
                    cont += prob * solve(t - 1, tuple(nxt))[0]
            total = immediate + beta * cont
            if total > best_val + 1e-15:
                best_val = total
                best_act = selected
        memo[key] = (best_val, best_act)
        return best_val, best_act

    value, action = solve(horizon, tuple(beliefs))
    return value, tuple(sorted(action))

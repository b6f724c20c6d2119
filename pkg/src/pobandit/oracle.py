"""Certifiably accurate truth engine for the single-arm subsidy problem.

Finite-horizon backward induction over the reachable belief tree.  The
horizon is chosen from the geometric truncation bound

    beta^T * max(B_max, m) / (1 - beta) <= epsilon,

so every returned value is within epsilon of the infinite-horizon optimum,
by construction rather than by heuristic convergence.  The reachable set
stays small because an activation resets the belief to one of the K rows:
depth d holds at most d*K + 1 distinct beliefs.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .model import Arm, clean_belief


class HorizonError(RuntimeError):
    """Raised when the certified horizon would be impractically deep."""


class Membership(enum.Enum):
    PASSIVE = "passive"
    ACTIVE = "active"
    INDETERMINATE = "indeterminate"


@dataclass(frozen=True)
class OracleConfig:
    epsilon: float = 1e-6
    horizon: int | None = None       # explicit override; None derives from the bound
    memo_decimals: int = 9           # belief quantization for per-level dedupe
    max_horizon: int = 100_000

    def __post_init__(self) -> None:
        if self.epsilon <= 0.0:
            raise ValueError("epsilon must be positive")


@dataclass(frozen=True)
class OracleEvaluation:
    value: float
    value_active: float
    value_passive: float
    passive_time: float
    horizon: int


def derived_horizon(arm: Arm, discount: float, subsidy: float, config: OracleConfig) -> int:
    if config.horizon is not None:
        return config.horizon
    scale = max(arm.max_reward, subsidy, 1.0)
    t = math.ceil(math.log(config.epsilon * (1.0 - discount) / scale) / math.log(discount))
    t = max(t, 1)
    if t > config.max_horizon:
        raise HorizonError(
            f"certified horizon T={t} exceeds the limit {config.max_horizon} "
            f"(discount {discount}, epsilon {config.epsilon})"
        )
    return t


def _build_levels(
    arm: Arm, omega: np.ndarray, horizon: int, decimals: int
) -> tuple[list[np.ndarray], list[np.ndarray], list[np.ndarray]]:
    """Reachable beliefs per depth plus child-index maps into the next depth."""
    p_mat = arm.transition
    k = arm.n_states
    levels = [omega[None, :].copy()]
    passive_maps: list[np.ndarray] = []
    row_maps: list[np.ndarray] = []

    for _ in range(horizon - 1):
        current = levels[-1]
        drift = current @ p_mat
        candidates = np.vstack([p_mat, drift])
        keys = np.round(candidates, decimals)
        _, first_idx, inverse = np.unique(
            keys, axis=0, return_index=True, return_inverse=True
        )
        nxt = candidates[first_idx]
        levels.append(nxt)
        row_maps.append(inverse[:k].copy())
        passive_maps.append(inverse[k:].copy())
    return levels, passive_maps, row_maps


def _solve(
    arm: Arm, omega: np.ndarray, discount: float, subsidy: float, horizon: int, decimals: int
) -> OracleEvaluation:
    """Backward induction; ties broken toward the passive action."""
    w = clean_belief(omega)
    rewards = arm.rewards
    levels, passive_maps, row_maps = _build_levels(arm, w, horizon, decimals)

    # deepest decision: one step to go, so the split is immediate reward vs subsidy
    last = levels[-1]
    v_act = last @ rewards
    v_pas = np.full(last.shape[0], subsidy)
    passive = v_pas >= v_act
    v = np.where(passive, v_pas, v_act)
    d = np.where(passive, 1.0, 0.0)

    for depth in range(horizon - 2, -1, -1):
        beliefs = levels[depth]
        v_rows = v[row_maps[depth]]
        d_rows = d[row_maps[depth]]
        v_act = beliefs @ rewards + discount * (beliefs @ v_rows)
        v_pas = subsidy + discount * v[passive_maps[depth]]
        d_act = discount * (beliefs @ d_rows)
        d_pas = 1.0 + discount * d[passive_maps[depth]]
        passive = v_pas >= v_act
        v = np.where(passive, v_pas, v_act)
        d = np.where(passive, d_pas, d_act)

    return OracleEvaluation(
        value=float(max(v_act[0], v_pas[0])),
        value_active=float(v_act[0]),
        value_passive=float(v_pas[0]),
        passive_time=float(d[0]),
        horizon=horizon,
    )


def evaluate(
    arm: Arm,
    omega: np.ndarray,
    discount: float,
    subsidy: float,
    config: OracleConfig | None = None,
) -> OracleEvaluation:
    """Full oracle pass: value, per-action values and passive time."""
    if not 0.0 < discount < 1.0:
        raise ValueError(f"discount must lie in (0, 1), got {discount}")
    if not math.isfinite(subsidy):
        raise ValueError("subsidy must be finite")
    cfg = config or OracleConfig()
    horizon = derived_horizon(arm, discount, subsidy, cfg)
    return _solve(arm, omega, discount, subsidy, horizon, cfg.memo_decimals)


def value_single_arm(
    arm: Arm,
    omega: np.ndarray,
    discount: float,
    subsidy: float,
    config: OracleConfig | None = None,
) -> tuple[float, float, float]:
    """(value, value_if_activated, value_if_passive), each within epsilon."""
    ev = evaluate(arm, omega, discount, subsidy, config)
    return ev.value, ev.value_active, ev.value_passive


def passive_time(
    arm: Arm,
    omega: np.ndarray,
    discount: float,
    subsidy: float,
    config: OracleConfig | None = None,
) -> float:
    """Expected total discounted passive time under a passive-preferring optimum."""
    return evaluate(arm, omega, discount, subsidy, config).passive_time


def membership_probe(
    arm: Arm,
    omega: np.ndarray,
    discount: float,
    subsidy: float,
    config: OracleConfig | None = None,
) -> Membership:
    """Which action is optimal at (omega, m), with a 2-epsilon indeterminate band."""
    cfg = config or OracleConfig()
    ev = evaluate(arm, omega, discount, subsidy, cfg)
    if abs(ev.value_active - ev.value_passive) <= 2.0 * cfg.epsilon:
        return Membership.INDETERMINATE
    if ev.value_active > ev.value_passive:
        return Membership.ACTIVE
    return Membership.PASSIVE


def classical_index_bisect(
    arm: Arm,
    omega: np.ndarray,
    discount: float,
    config: OracleConfig | None = None,
    tol: float = 1e-4,
) -> float:
    """Subsidy at which the optimal action flips, by bisection on [0, B_max].

    Meaningful only on instances that are empirically indexable; intended as
    a small-scale test reference, not a production path.
    """
    cfg = config or OracleConfig()

    def active_margin(m: float) -> float:
        ev = evaluate(arm, omega, discount, m, cfg)
        return ev.value_active - ev.value_passive

    lo, hi = 0.0, arm.max_reward
    if active_margin(lo) <= 0.0:
        return 0.0
    if active_margin(hi) > 0.0:
        raise RuntimeError(
            f"no passive flip inside [0, {arm.max_reward}] for arm {arm.label!r}"
        )
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if active_margin(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)

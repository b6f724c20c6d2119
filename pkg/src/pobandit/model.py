"""Arms, belief vectors, and belief dynamics for partially observable bandits.

An arm is a hidden K-state Markov chain with a row-stochastic transition
matrix and a nonnegative, ascending reward vector normalized so the worst
state pays 0.  The belief vector (a point on the (K-1)-simplex) is the
sufficient statistic for all decisions; everything downstream consumes the
operations defined here.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

ROW_SUM_TOL = 1e-12
BELIEF_SUM_TOL = 1e-10
BELIEF_NEG_TOL = -1e-12


class ModelError(ValueError):
    """Raised when an arm or instance violates a structural invariant."""


def clean_belief(probs: Sequence[float] | np.ndarray) -> np.ndarray:
    """Validate, clamp and renormalize a belief vector.

    Entries in [-1e-12, 0) are clamped to 0 (floating drift from repeated
    matrix products); anything more negative, or a total mass off by more
    than 1e-10, is rejected.
    """
    w = np.asarray(probs, dtype=float)
    if w.ndim != 1 or w.size < 2:
        raise ModelError(f"belief must be a vector of length >= 2, got shape {w.shape}")
    if np.any(w < BELIEF_NEG_TOL):
        raise ModelError(f"belief has negative entries: {w}")
    w = np.where(w < 0.0, 0.0, w)
    s = float(w.sum())
    if abs(s - 1.0) > BELIEF_SUM_TOL:
        raise ModelError(f"belief mass {s} not within {BELIEF_SUM_TOL} of 1: {w}")
    return w / s


def _check_regular(transition: np.ndarray, max_power: int) -> bool:
    """True iff some power of the matrix up to max_power is entrywise positive."""
    power = transition.copy()
    for _ in range(max_power):
        if np.all(power > 0.0):
            return True
        power = power @ transition
    return False


def _solve_stationary(transition: np.ndarray) -> np.ndarray:
    """Left fixed point of a regular stochastic matrix (balance + normalization)."""
    k = transition.shape[0]
    a = transition.T - np.eye(k)
    a[-1, :] = 1.0  # replace one redundant balance row with the mass constraint
    b = np.zeros(k)
    b[-1] = 1.0
    return clean_belief(np.linalg.solve(a, b))


@dataclass(frozen=True, eq=False)
class Arm:
    """One hidden Markov reward process.

    Immutable after construction; eigenstructure and the stationary
    distribution are precomputed because the index engine touches them at
    every decision epoch.
    """

    transition: np.ndarray
    rewards: np.ndarray
    initial_belief: np.ndarray
    label: str = "arm"
    stationary: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        p = np.asarray(self.transition, dtype=float)
        b = np.asarray(self.rewards, dtype=float)
        w = np.asarray(self.initial_belief, dtype=float)

        if p.ndim != 2 or p.shape[0] != p.shape[1]:
            raise ModelError(f"arm {self.label!r}: transition must be square, got {p.shape}")
        k = p.shape[0]
        if k < 2:
            raise ModelError(f"arm {self.label!r}: need at least 2 states")
        if np.any(p < 0.0) or np.any(p > 1.0):
            raise ModelError(f"arm {self.label!r}: transition entries outside [0, 1]")
        sums = p.sum(axis=1)
        bad = np.where(np.abs(sums - 1.0) > ROW_SUM_TOL)[0]
        if bad.size:
            raise ModelError(
                f"arm {self.label!r}: row {bad[0]} sums to {sums[bad[0]]!r}, not 1"
            )
        if b.shape != (k,):
            raise ModelError(f"arm {self.label!r}: rewards must have length {k}")
        if b[0] != 0.0:
            raise ModelError(f"arm {self.label!r}: rewards[0] must be 0, got {b[0]!r}")
        if np.any(np.diff(b) < 0.0):
            raise ModelError(f"arm {self.label!r}: rewards must be ascending: {b}")
        if np.any(b < 0.0):
            raise ModelError(f"arm {self.label!r}: rewards must be nonnegative: {b}")
        if not _check_regular(p, 2 * k):
            raise ModelError(
                f"arm {self.label!r}: transition is not regular "
                f"(no entrywise-positive power up to P^{2 * k})"
            )

        object.__setattr__(self, "transition", p)
        object.__setattr__(self, "rewards", b)
        object.__setattr__(self, "initial_belief", clean_belief(w))
        object.__setattr__(self, "stationary", _solve_stationary(p))
        for arr in (self.transition, self.rewards, self.initial_belief, self.stationary):
            arr.setflags(write=False)

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def max_reward(self) -> float:
        return float(self.rewards[-1])

    @property
    def stationary_reward(self) -> float:
        return float(self.stationary @ self.rewards)

    def expected_reward(self, belief: np.ndarray) -> float:
        """Immediate expected reward of activating at the given belief."""
        return float(np.dot(belief, self.rewards))


@dataclass(frozen=True, eq=False)
class BanditInstance:
    """N independent arms of which select_count are observed each step."""

    arms: tuple[Arm, ...]
    select_count: int
    discount: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "arms", tuple(self.arms))
        n = len(self.arms)
        if n < 2:
            raise ModelError("instance needs at least 2 arms")
        if not 1 <= self.select_count < n:
            raise ModelError(
                f"select_count must satisfy 1 <= M < {n}, got {self.select_count}"
            )
        if not 0.0 < self.discount < 1.0:
            raise ModelError(f"discount must lie in (0, 1), got {self.discount}")

    @property
    def n_arms(self) -> int:
        return len(self.arms)


def belief_update_active(arm: Arm, observed_state: int) -> np.ndarray:
    """Posterior after observing the arm in a given state: the matching row of P."""
    if not 0 <= observed_state < arm.n_states:
        raise ModelError(
            f"observed state {observed_state} out of range for {arm.n_states}-state arm"
        )
    return arm.transition[observed_state].copy()


def belief_update_passive(arm: Arm, belief: np.ndarray) -> np.ndarray:
    """One blind step: belief . P, clamped back onto the simplex."""
    return clean_belief(np.asarray(belief, dtype=float) @ arm.transition)


def k_step_update(arm: Arm, belief: np.ndarray, k: int) -> np.ndarray:
    """k blind steps: belief . P^k (k = 0 is the identity)."""
    if k < 0:
        raise ModelError(f"step count must be nonnegative, got {k}")
    w = clean_belief(belief)
    if k == 0:
        return w
    if k <= 4:
        for _ in range(k):
            w = w @ arm.transition
        return clean_belief(w)
    return clean_belief(w @ np.linalg.matrix_power(arm.transition, k))


def stationary_distribution(arm: Arm) -> np.ndarray:
    """Unique left fixed point of the arm's transition matrix."""
    return arm.stationary.copy()

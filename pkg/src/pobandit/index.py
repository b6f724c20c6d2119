"""Closed-form approximate Whittle index under the linearized threshold policy.

Fixing the current belief w as a point in the threshold makes the policy's
value functions affine in the subsidy m.  The crossing times of each row
p_k (and of wP) against the threshold reward r* = w B' determine a small
linear system; the subsidy at which activating and resting at w perform
identically is the index.  When the indifference equation degenerates (its
m-coefficient vanishes) the immediate expected reward is used instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .crossing import INFINITE, first_crossing, first_crossing_scan
from .model import Arm, clean_belief


class ThresholdSystemError(RuntimeError):
    """Raised when the threshold-policy linear system is unsolvable."""


@dataclass(frozen=True)
class IndexIngredients:
    """Crossing times and the f/g/H building blocks at a fixed threshold belief.

    Conventions for a never-crossing start: f = 1/(1-beta) and g = 0, applied
    as exact limits of beta^L as L -> infinity.
    """

    threshold_reward: float
    discount: float
    crossing_rows: tuple[float, ...]   # L(p_k, w) per row k
    crossing_drift: float              # L(wP, w)
    f_rows: np.ndarray                 # f(p_k), length K
    g_rows: np.ndarray                 # K x K, row k = g(p_k)
    f_drift: float                     # f(wP)
    g_drift: np.ndarray                # g(wP), length K
    h_matrix: np.ndarray               # (I - beta G)^{-1}
    condition_number: float

    @property
    def n_states(self) -> int:
        return self.f_rows.shape[0]


@dataclass(frozen=True)
class ThresholdValueSolution:
    """Row values V(p_k) = intercepts[k] + slopes[k] * m under the threshold policy.

    Slopes are the rows' expected total discounted passive times.
    """

    intercepts: np.ndarray
    slopes: np.ndarray


@dataclass(frozen=True)
class IndexResult:
    value: float
    denominator: float
    fallback_used: bool


def denominator_epsilon(discount: float) -> float:
    """Degeneracy cutoff; scales with the passive-time magnitude 1/(1-beta)."""
    return 1e-10 * (1.0 + 1.0 / (1.0 - discount))


def _f_of(crossing: float, discount: float) -> float:
    if math.isinf(crossing):
        return 1.0 / (1.0 - discount)
    return (1.0 - discount ** int(crossing)) / (1.0 - discount)


def _g_of(crossing: float, discount: float, start: np.ndarray, transition: np.ndarray) -> np.ndarray:
    if math.isinf(crossing):
        return np.zeros(start.shape[0])
    steps = int(crossing)
    return (discount**steps) * (start @ np.linalg.matrix_power(transition, steps))


def build_ingredients(
    arm: Arm,
    omega: np.ndarray,
    discount: float,
    l_max: int,
    method: str = "auto",
) -> IndexIngredients:
    """Crossing times against r* = w B' for every row and for wP, plus f, g, H."""
    if not 0.0 < discount < 1.0:
        raise ValueError(f"discount must lie in (0, 1), got {discount}")
    w = clean_belief(omega)
    if w.shape[0] != arm.n_states:
        raise ValueError(
            f"belief length {w.shape[0]} does not match {arm.n_states}-state arm"
        )
    rstar = float(w @ arm.rewards)
    k = arm.n_states
    p_mat = arm.transition

    crossing_rows = tuple(
        first_crossing(arm, p_mat[i], rstar, l_max, method) for i in range(k)
    )
    drift = clean_belief(w @ p_mat)
    crossing_drift = first_crossing(arm, drift, rstar, l_max, method)

    f_rows = np.array([_f_of(c, discount) for c in crossing_rows])
    g_rows = np.vstack(
        [_g_of(crossing_rows[i], discount, p_mat[i], p_mat) for i in range(k)]
    )
    f_drift = _f_of(crossing_drift, discount)
    g_drift = _g_of(crossing_drift, discount, drift, p_mat)

    system = np.eye(k) - discount * g_rows
    condition = float(np.linalg.cond(system))
    if not np.isfinite(condition) or condition > 1e13:
        raise ThresholdSystemError(
            f"threshold-policy system is numerically singular "
            f"(condition number {condition:.3e}) for arm {arm.label!r}"
        )
    h_matrix = np.linalg.solve(system, np.eye(k))

    return IndexIngredients(
        threshold_reward=rstar,
        discount=discount,
        crossing_rows=crossing_rows,
        crossing_drift=crossing_drift,
        f_rows=f_rows,
        g_rows=g_rows,
        f_drift=f_drift,
        g_drift=g_drift,
        h_matrix=h_matrix,
        condition_number=condition,
    )


def solve_threshold_values(ingredients: IndexIngredients, arm: Arm) -> ThresholdValueSolution:
    """Solve (I - beta G) X = F m + G B' for the affine row values."""
    beta = ingredients.discount
    system = np.eye(ingredients.n_states) - beta * ingredients.g_rows
    try:
        slopes = np.linalg.solve(system, ingredients.f_rows)
        intercepts = np.linalg.solve(system, ingredients.g_rows @ arm.rewards)
    except np.linalg.LinAlgError as exc:
        raise ThresholdSystemError(f"threshold-policy system singular for arm {arm.label!r}") from exc
    return ThresholdValueSolution(intercepts=intercepts, slopes=slopes)


def index_from_ingredients(arm: Arm, omega: np.ndarray, ing: IndexIngredients) -> IndexResult:
    """Evaluate the closed-form index from precomputed ingredients."""
    w = clean_belief(omega)
    beta = ing.discount
    rewards = arm.rewards
    hg = ing.h_matrix @ ing.g_rows
    hf = ing.h_matrix @ ing.f_rows

    numerator = (
        float(w @ rewards)
        - beta * float(ing.g_drift @ (np.eye(ing.n_states) + beta * hg) @ rewards)
        + beta * float(w @ hg @ rewards)
    )
    denominator = 1.0 + beta * ing.f_drift + beta * float((beta * ing.g_drift - w) @ hf)

    if abs(denominator) < denominator_epsilon(beta):
        return IndexResult(value=float(w @ rewards), denominator=denominator, fallback_used=True)
    return IndexResult(value=numerator / denominator, denominator=denominator, fallback_used=False)


def approximate_whittle_index(
    arm: Arm,
    omega: np.ndarray,
    discount: float,
    l_max: int,
    method: str = "auto",
) -> IndexResult:
    """Closed-form approximate Whittle index of the belief omega."""
    ing = build_ingredients(arm, omega, discount, l_max, method)
    return index_from_ingredients(arm, omega, ing)


def indifference_residual(
    arm: Arm,
    omega: np.ndarray,
    discount: float,
    m: float,
    l_max: int,
    method: str = "auto",
) -> float:
    """V_active(w; m) - V_passive(w; m) under the threshold policy at w.

    Affine in m with slope equal to minus the index denominator; zero at the
    index value whenever the denominator is nondegenerate.
    """
    ing = build_ingredients(arm, omega, discount, l_max, method)
    sol = solve_threshold_values(ing, arm)
    return _residual_from_solution(arm, clean_belief(omega), ing, sol, m)


def _residual_from_solution(
    arm: Arm,
    w: np.ndarray,
    ing: IndexIngredients,
    sol: ThresholdValueSolution,
    m: float,
) -> float:
    beta = ing.discount
    row_values = sol.intercepts + sol.slopes * m
    active = float(w @ arm.rewards) + beta * float(w @ row_values)
    drift_value = (
        ing.f_drift * m
        + float(ing.g_drift @ arm.rewards)
        + beta * float(ing.g_drift @ row_values)
    )
    passive = m + beta * drift_value
    return active - passive


def indifference_root(
    arm: Arm,
    omega: np.ndarray,
    discount: float,
    l_max: int,
    method: str = "auto",
) -> float:
    """Index recomputed as the root of the affine indifference equation.

    Independent arithmetic path from the closed form: builds the threshold
    linear system, evaluates the residual at two probe subsidies, and solves
    the affine equation.  Used by the verification suites.
    """
    ing = build_ingredients(arm, omega, discount, l_max, method)
    sol = solve_threshold_values(ing, arm)
    w = clean_belief(omega)
    r0 = _residual_from_solution(arm, w, ing, sol, 0.0)
    r1 = _residual_from_solution(arm, w, ing, sol, 1.0)
    slope = r1 - r0
    if abs(slope) < denominator_epsilon(discount):
        raise ThresholdSystemError("indifference equation is degenerate (zero slope in m)")
    return -r0 / slope


def scan_crossing_reference(
    arm: Arm, omega: np.ndarray, discount: float, l_max: int
) -> IndexIngredients:
    """Ingredients computed strictly via the forward scan (oracle path)."""
    return build_ingredients(arm, omega, discount, l_max, method="scan")


__all__ = [
    "IndexIngredients",
    "ThresholdValueSolution",
    "IndexResult",
    "build_ingredients",
    "solve_threshold_values",
    "approximate_whittle_index",
    "index_from_ingredients",
    "indifference_residual",
    "indifference_root",
    "scan_crossing_reference",
    "denominator_epsilon",
    "INFINITE",
    "first_crossing_scan",
]

import itertools
import math

import numpy as np
import pytest

from pobandit.index import approximate_whittle_index
from pobandit.model import Arm
from pobandit.oracle import (
    HorizonError,
    Membership,
    OracleConfig,
    classical_index_bisect,
    derived_horizon,
    evaluate,
    membership_probe,
    passive_time,
    value_single_arm,
)

from conftest import make_random_arm

K2_ARM = Arm([[0.9, 0.1], [0.3, 0.7]], [0.0, 1.0], [0.5, 0.5], "k2")


def plain_recursion(arm: Arm, w, beta: float, m: float, horizon: int) -> float:
    """Memoless Bellman recursion: independent of the level-batched solver."""
    if horizon == 0:
        return 0.0
    w = np.asarray(w, dtype=float)
    active = float(w @ arm.rewards) + beta * sum(
        float(w[j]) * plain_recursion(arm, arm.transition[j], beta, m, horizon - 1)
        for j in range(arm.n_states)
    )
    passive = m + beta * plain_recursion(arm, w @ arm.transition, beta, m, horizon - 1)
    return max(active, passive)


def enumerate_policies(arm: Arm, w0, beta: float, m: float, horizon: int) -> float:
    """Max over all deterministic action assignments on the belief tree."""
    paths = [()]
    for t in range(1, horizon):
        outcomes = list(range(arm.n_states)) + ["drift"]
        paths += [p + (o,) for p in paths if len(p) == t - 1 for o in outcomes]
    best = -math.inf
    for bits in itertools.product([0, 1], repeat=len(paths)):
        act = dict(zip(paths, bits))

        def walk(path, w, t):
            if t == horizon:
                return 0.0
            if act[path]:
                value = float(w @ arm.rewards)
                return value + beta * sum(
                    float(w[j]) * walk(path + (j,), arm.transition[j], t + 1)
                    for j in range(arm.n_states)
                )
            return m + beta * walk(path + ("drift",), w @ arm.transition, t + 1)

        best = max(best, walk((), np.asarray(w0, dtype=float), 0))
    return best


class TestAgainstIndependentOracles:
    def test_matches_plain_recursion_at_matched_horizons(self):
        w = K2_ARM.stationary
        for horizon in (1, 3, 8, 12):
            want = plain_recursion(K2_ARM, w, 0.5, 0.4, horizon)
            got = evaluate(K2_ARM, w, 0.5, 0.4, OracleConfig(horizon=horizon)).value
            assert got == pytest.approx(want, abs=1e-12)

    def test_matches_exhaustive_policy_enumeration(self):
        # every deterministic labeling of the depth-3 belief tree
        want = enumerate_policies(K2_ARM, [0.5, 0.5], 0.5, 0.4, 3)
        got = evaluate(K2_ARM, [0.5, 0.5], 0.5, 0.4, OracleConfig(horizon=3)).value
        assert got == pytest.approx(want, abs=1e-12)

    def test_truncation_gap_shrinks_with_horizon(self):
        w = K2_ARM.stationary
        v_short = evaluate(K2_ARM, w, 0.5, 0.4, OracleConfig(horizon=8)).value
        v_long = evaluate(K2_ARM, w, 0.5, 0.4, OracleConfig(horizon=40)).value
        assert v_short <= v_long + 1e-12
        assert v_long - v_short <= 0.5**8 * 1.0 / 0.5 + 1e-12

    def test_random_arms_match_plain_recursion(self, rng):
        for _ in range(8):
            arm = make_random_arm(rng, int(rng.integers(2, 4)))
            w = rng.dirichlet(np.ones(arm.n_states))
            beta = float(rng.uniform(0.3, 0.7))
            m = float(rng.uniform(0.0, arm.max_reward))
            want = plain_recursion(arm, w, beta, m, 9)
            got = evaluate(arm, w, beta, m, OracleConfig(horizon=9)).value
            assert got == pytest.approx(want, abs=1e-11)


class TestSubsidyExtremes:
    def test_high_subsidy_gives_pure_annuity(self, rng):
        for _ in range(10):
            arm = make_random_arm(rng, int(rng.integers(2, 5)))
            beta = float(rng.uniform(0.2, 0.85))
            w = rng.dirichlet(np.ones(arm.n_states))
            m = arm.max_reward + float(rng.uniform(0.0, 2.0))
            value, _, _ = value_single_arm(arm, w, beta, m)
            assert value == pytest.approx(m / (1.0 - beta), abs=2e-6)
            assert passive_time(arm, w, beta, m) == pytest.approx(
                1.0 / (1.0 - beta), abs=2e-6
            )

    def test_nonpositive_subsidy_value_is_subsidy_free(self, rng):
        for _ in range(10):
            arm = make_random_arm(rng, 3)
            beta = float(rng.uniform(0.2, 0.85))
            w = rng.dirichlet(np.ones(3))
            v_zero = value_single_arm(arm, w, beta, 0.0)[0]
            v_neg = value_single_arm(arm, w, beta, -1.0)[0]
            assert v_zero == pytest.approx(v_neg, abs=3e-6)
            assert passive_time(arm, w, beta, -1.0) == 0.0


class TestValueFunctionShape:
    def test_convexity_in_belief_and_subsidy(self, rng):
        cfg = OracleConfig(epsilon=1e-6)
        for _ in range(3):
            arm = make_random_arm(rng, 3)
            beta = 0.6
            for _ in range(40):
                w1 = rng.dirichlet(np.ones(3))
                w2 = rng.dirichlet(np.ones(3))
                lam = float(rng.uniform(0.0, 1.0))
                m = float(rng.uniform(0.0, arm.max_reward))
                mix = lam * w1 + (1 - lam) * w2
                v_mix = value_single_arm(arm, mix, beta, m, cfg)[0]
                v1 = value_single_arm(arm, w1, beta, m, cfg)[0]
                v2 = value_single_arm(arm, w2, beta, m, cfg)[0]
                assert v_mix <= lam * v1 + (1 - lam) * v2 + 3e-6
                m1 = float(rng.uniform(0.0, arm.max_reward))
                m2 = float(rng.uniform(0.0, arm.max_reward))
                v_m_mix = value_single_arm(arm, w1, beta, lam * m1 + (1 - lam) * m2, cfg)[0]
                v_m1 = value_single_arm(arm, w1, beta, m1, cfg)[0]
                v_m2 = value_single_arm(arm, w1, beta, m2, cfg)[0]
                assert v_m_mix <= lam * v_m1 + (1 - lam) * v_m2 + 3e-6

    def test_lipschitz_bounds(self, rng):
        cfg = OracleConfig(epsilon=1e-6)
        arm = make_random_arm(rng, 3)
        beta = 0.7
        lip_w = arm.max_reward / (1.0 - beta)
        for _ in range(40):
            w1 = rng.dirichlet(np.ones(3))
            w2 = rng.dirichlet(np.ones(3))
            m = float(rng.uniform(0.0, arm.max_reward))
            v1 = value_single_arm(arm, w1, beta, m, cfg)[0]
            v2 = value_single_arm(arm, w2, beta, m, cfg)[0]
            assert abs(v1 - v2) <= lip_w * np.abs(w1 - w2).sum() + 3e-6
            m2 = float(rng.uniform(0.0, arm.max_reward))
            v1b = value_single_arm(arm, w1, beta, m2, cfg)[0]
            assert abs(v1 - v1b) <= abs(m - m2) / (1.0 - beta) + 3e-6

    def test_monotone_and_bounded(self, rng):
        cfg = OracleConfig(epsilon=1e-6)
        arm = make_random_arm(rng, 3)
        beta = 0.6
        w = rng.dirichlet(np.ones(3))
        values = [
            value_single_arm(arm, w, beta, float(m), cfg)[0]
            for m in np.linspace(0.0, arm.max_reward + 0.5, 12)
        ]
        assert all(b >= a - 2e-6 for a, b in zip(values, values[1:]))
        for m, v in zip(np.linspace(0.0, arm.max_reward + 0.5, 12), values):
            assert -1e-9 <= v <= max(arm.max_reward, m) / (1.0 - beta) + 1e-6

    def test_derivative_sandwich(self, rng):
        # slope of V in m is bracketed by the passive times at both ends
        cfg = OracleConfig(epsilon=1e-6)
        delta = 1e-3
        for _ in range(25):
            arm = make_random_arm(rng, int(rng.integers(2, 4)))
            beta = float(rng.uniform(0.3, 0.9))
            w = rng.dirichlet(np.ones(arm.n_states))
            m = float(rng.uniform(0.0, arm.max_reward))
            horizon = derived_horizon(arm, beta, m + delta, cfg)
            paired = OracleConfig(epsilon=cfg.epsilon, horizon=horizon)
            v_lo = value_single_arm(arm, w, beta, m, paired)[0]
            v_hi = value_single_arm(arm, w, beta, m + delta, paired)[0]
            d_lo = passive_time(arm, w, beta, m, paired)
            d_hi = passive_time(arm, w, beta, m + delta, paired)
            slope = (v_hi - v_lo) / delta
            assert d_lo - 1e-4 <= slope <= d_hi + 1e-4


class TestMembership:
    def test_extreme_points_flip_at_state_reward(self, rng):
        cfg = OracleConfig(epsilon=1e-6)
        arm = make_random_arm(rng, 3)
        beta = 0.6
        for j in range(3):
            e = np.zeros(3)
            e[j] = 1.0
            b_j = float(arm.rewards[j])
            if b_j > 3e-6:
                assert membership_probe(arm, e, beta, b_j - 2e-3, cfg) is Membership.ACTIVE
            assert membership_probe(arm, e, beta, b_j + 2e-3, cfg) is Membership.PASSIVE

    def test_negative_subsidy_is_active(self, rng):
        for _ in range(10):
            arm = make_random_arm(rng, 3)
            w = rng.dirichlet(np.ones(3))
            if float(w @ arm.rewards) > 1e-3:
                assert membership_probe(arm, w, 0.5, -1.0) is Membership.ACTIVE

    def test_band_is_indeterminate_at_exact_indifference(self, rng):
        arm = make_random_arm(rng, 3)
        e = np.zeros(3)
        e[1] = 1.0
        # at an extreme point the margin is exactly B_j - m
        assert membership_probe(arm, e, 0.6, float(arm.rewards[1])) is Membership.INDETERMINATE


class TestBisect:
    def test_extreme_points_recover_state_rewards(self, rng):
        arm = make_random_arm(rng, 3)
        for j in range(3):
            e = np.zeros(3)
            e[j] = 1.0
            m_star = classical_index_bisect(arm, e, 0.6)
            assert m_star == pytest.approx(float(arm.rewards[j]), abs=2e-4)

    def test_agrees_with_closed_form_for_two_states(self, rng):
        for _ in range(20):
            arm = make_random_arm(rng, 2)
            beta = float(rng.uniform(0.3, 0.9))
            w = rng.dirichlet(np.ones(2))
            res = approximate_whittle_index(arm, w, beta, 500)
            m_star = classical_index_bisect(arm, w, beta)
            assert m_star == pytest.approx(res.value, abs=2e-4)

    def test_bracket_always_contains_flip(self, rng):
        for _ in range(10):
            arm = make_random_arm(rng, 3)
            w = rng.dirichlet(np.ones(3))
            m_star = classical_index_bisect(arm, w, 0.5)
            assert 0.0 <= m_star <= arm.max_reward


class TestHorizonGuard:
    def test_overflow_reports_required_depth(self, rng):
        arm = make_random_arm(rng, 2)
        with pytest.raises(HorizonError, match="T="):
            evaluate(arm, arm.stationary, 0.9999, 0.5, OracleConfig(epsilon=1e-6))

    def test_explicit_horizon_override(self, rng):
        arm = make_random_arm(rng, 2)
        ev = evaluate(arm, arm.stationary, 0.9999, 0.5, OracleConfig(horizon=50))
        assert ev.horizon == 50

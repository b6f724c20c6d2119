"""First-crossing times of the expected-reward sequence over a threshold.

For a start belief w and threshold reward r*, the crossing time is the least
k >= 0 such that the k-step expected reward h(k) = w P^k B' strictly exceeds
r*.  Any K gets a forward scan; K = 3 additionally gets an exact analytic
solver built on the eigenstructure of P: the two non-unit eigenvalues of a
3x3 stochastic matrix are the roots of

    x^2 - (tr(P) - 1) x + det(P) = 0,

which puts h(k) into one of four shapes (two real exponential terms, a
defective k*b^(k-1) term, a damped sinusoid, or an eventually-constant
rank-degenerate sequence).  Each shape admits either a closed-form crossing
index or a provably complete finite scan window.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .model import Arm, clean_belief

INFINITE = math.inf

# Strict-crossing margin: h(k) must exceed r* by more than this.  Applied
# identically in the scan and analytic paths so the two are comparable
# bit-for-bit.
EPS_CROSS = 1e-12

# |discriminant| below this is treated as a repeated eigenvalue.
EPS_DISC = 1e-10

# Coefficients this small are truncated to exactly 0 before case dispatch so
# the degenerate single-exponential branches fire cleanly.
EPS_COEF = 1e-12

# Hard ceiling on any analytic scan window; only reachable for eigenvalue
# moduli absurdly close to 1.
MAX_ANALYTIC_WINDOW = 5_000_000

# Guaranteed-crossing searches walk this far linearly before switching to
# envelope bounds plus per-parity binary search.
LINEAR_PREFIX = 100_000

# Test hook: when set, the analytic solver deliberately mis-reports finite
# crossings so verification suites can prove they would catch a broken case
# table.  Never set outside tests.
_CORRUPT_ANALYTIC = False


class CrossingError(RuntimeError):
    """Raised when the analytic solver cannot handle a spectrum."""


class SpectrumForm(enum.Enum):
    TWO_REAL = "two_real"            # diagonalizable, real eigenvalues
    REAL_DEFECTIVE = "real_defective"  # repeated real eigenvalue, rank-2 (P - bI)
    COMPLEX_PAIR = "complex_pair"    # conjugate eigenvalues A e^{+-i theta}
    RANK_DEGENERATE = "rank_degenerate"  # both non-unit eigenvalues ~ 0


@dataclass(frozen=True)
class SpectrumClass:
    """Eigenstructure of a 3-state arm together with the fitted h(k) shape.

    coefficients by form:
      TWO_REAL:        (a1, b1, a2, b2, c)   h(k) = a1 b1^k + a2 b2^k + c
      REAL_DEFECTIVE:  (a, b, cl, d)         h(k) = a b^k + cl k b^(k-1) + d
      COMPLEX_PAIR:    (amp, mod, phase, offset, angle)
                                             h(k) = amp mod^k sin(k angle + phase) + offset
      RANK_DEGENERATE: (h0, h1, c)           h(k) = c for k >= 2
    """

    form: SpectrumForm
    eigenvalues: tuple[complex, complex]
    coefficients: tuple[float, ...]
    stationary_reward: float

    def reward_at(self, k: int) -> float:
        """h(k) evaluated from the fitted coefficients."""
        if self.form is SpectrumForm.TWO_REAL:
            a1, b1, a2, b2, c = self.coefficients
            return a1 * b1**k + a2 * b2**k + c
        if self.form is SpectrumForm.REAL_DEFECTIVE:
            a, b, cl, d = self.coefficients
            slope = 0.0 if k == 0 else cl * k * b ** (k - 1)
            return a * b**k + slope + d
        if self.form is SpectrumForm.COMPLEX_PAIR:
            amp, mod, phase, offset, angle = self.coefficients
            return amp * mod**k * math.sin(k * angle + phase) + offset
        h0, h1, c = self.coefficients
        return h0 if k == 0 else h1 if k == 1 else c

    def transient_bound(self, k: int) -> float:
        """Upper bound on |h(k) - stationary_reward|."""
        if self.form is SpectrumForm.TWO_REAL:
            a1, b1, a2, b2, _ = self.coefficients
            return abs(a1) * abs(b1) ** k + abs(a2) * abs(b2) ** k
        if self.form is SpectrumForm.REAL_DEFECTIVE:
            a, b, cl, _ = self.coefficients
            slope = 0.0 if k == 0 else abs(cl) * k * abs(b) ** (k - 1)
            return abs(a) * abs(b) ** k + slope
        if self.form is SpectrumForm.COMPLEX_PAIR:
            amp, mod, _, _, _ = self.coefficients
            return amp * mod**k
        h0, h1, c = self.coefficients
        return abs(h0 - c) if k == 0 else abs(h1 - c) if k == 1 else 0.0


def reward_sequence(arm: Arm, start: np.ndarray, n_steps: int) -> np.ndarray:
    """h(0..n_steps) by direct belief propagation (the scan path's view)."""
    w = clean_belief(start)
    out = np.empty(n_steps + 1)
    for k in range(n_steps + 1):
        out[k] = w @ arm.rewards
        if k < n_steps:
            w = w @ arm.transition
    return out


def first_crossing_scan(
    arm: Arm, start: np.ndarray, threshold_reward: float, l_max: int
) -> float:
    """Least k in {0, ..., l_max} with h(k) > threshold_reward + EPS_CROSS.

    Returns INFINITE when no crossing is found within the horizon; for a
    regular chain with l_max large enough for the transient to die out this
    is exact.
    """
    if l_max < 1:
        raise ValueError(f"l_max must be >= 1, got {l_max}")
    limit = threshold_reward + EPS_CROSS
    w = clean_belief(start)
    for k in range(l_max + 1):
        if float(w @ arm.rewards) > limit:
            return k
        if k < l_max:
            w = w @ arm.transition
    return INFINITE


# ---------------------------------------------------------------------------
# Spectrum classification (K = 3)
# ---------------------------------------------------------------------------


def classify_spectrum(arm: Arm, start: np.ndarray) -> SpectrumClass:
    """Fit the closed-form shape of h(k) = start . P^k B' for a 3-state arm."""
    if arm.n_states != 3:
        raise CrossingError(f"analytic classification needs K = 3, got K = {arm.n_states}")
    p_mat = arm.transition
    rewards = arm.rewards
    w = clean_belief(start)

    c = arm.stationary_reward
    h0 = float(w @ rewards)
    w1 = w @ p_mat
    h1 = float(w1 @ rewards)
    h2 = float(w1 @ p_mat @ rewards)

    tr_minus_1 = float(np.trace(p_mat)) - 1.0
    det = float(np.linalg.det(p_mat))
    disc = tr_minus_1 * tr_minus_1 - 4.0 * det

    if disc < -EPS_DISC:
        mod = math.sqrt(det)
        angle = math.atan2(math.sqrt(-disc) / 2.0, tr_minus_1 / 2.0)
        if not 0.0 < mod < 1.0:
            raise CrossingError(f"complex eigenvalue modulus {mod} outside (0, 1)")
        # amp sin(phase) = h0 - c and amp sin(angle + phase) scaled by mod
        # matches h1; angle in (0, pi) so sin(angle) != 0.
        u = h0 - c
        v = ((h1 - c) / mod - u * math.cos(angle)) / math.sin(angle)
        amp = math.hypot(u, v)
        phase = math.atan2(u, v) % (2.0 * math.pi)
        if amp < EPS_COEF:
            amp, phase = 0.0, 0.0
        lam = complex(mod * math.cos(angle), mod * math.sin(angle))
        return SpectrumClass(
            form=SpectrumForm.COMPLEX_PAIR,
            eigenvalues=(lam, lam.conjugate()),
            coefficients=(amp, mod, phase, c, angle),
            stationary_reward=c,
        )

    if abs(disc) <= EPS_DISC:
        lam = tr_minus_1 / 2.0
        defective = np.linalg.matrix_rank(p_mat - lam * np.eye(3), tol=1e-10) == 2
        if abs(lam) >= 1.0:
            raise CrossingError(f"repeated eigenvalue {lam} outside (-1, 1)")
        if abs(lam) < EPS_COEF:
            return SpectrumClass(
                form=SpectrumForm.RANK_DEGENERATE,
                eigenvalues=(0.0 + 0.0j, 0.0 + 0.0j),
                coefficients=(h0, h1, c),
                stationary_reward=c,
            )
        if defective:
            a = h0 - c
            cl = h1 - c - a * lam
            a = 0.0 if abs(a) < EPS_COEF else a
            cl = 0.0 if abs(cl) < EPS_COEF else cl
            return SpectrumClass(
                form=SpectrumForm.REAL_DEFECTIVE,
                eigenvalues=(complex(lam), complex(lam)),
                coefficients=(a, lam, cl, c),
                stationary_reward=c,
            )
        a1 = h0 - c
        a1 = 0.0 if abs(a1) < EPS_COEF else a1
        return SpectrumClass(
            form=SpectrumForm.TWO_REAL,
            eigenvalues=(complex(lam), complex(lam)),
            coefficients=(a1, lam, 0.0, lam, c),
            stationary_reward=c,
        )

    root = math.sqrt(disc)
    b1 = (tr_minus_1 + root) / 2.0
    b2 = (tr_minus_1 - root) / 2.0
    if max(abs(b1), abs(b2)) >= 1.0:
        raise CrossingError(f"eigenvalues ({b1}, {b2}) outside (-1, 1)")
    if max(abs(b1), abs(b2)) < EPS_COEF:
        return SpectrumClass(
            form=SpectrumForm.RANK_DEGENERATE,
            eigenvalues=(0.0 + 0.0j, 0.0 + 0.0j),
            coefficients=(h0, h1, c),
            stationary_reward=c,
        )
    # Fit a1, a2 from h(0), h(1) with the stationary offset known.
    a2 = ((h1 - c) - b1 * (h0 - c)) / (b2 - b1)
    a1 = (h0 - c) - a2
    a1 = 0.0 if abs(a1) < EPS_COEF else a1
    a2 = 0.0 if abs(a2) < EPS_COEF else a2
    b1 = 0.0 if abs(b1) < EPS_COEF else b1
    b2 = 0.0 if abs(b2) < EPS_COEF else b2
    return SpectrumClass(
        form=SpectrumForm.TWO_REAL,
        eigenvalues=(complex(b1), complex(b2)),
        coefficients=(a1, b1, a2, b2, c),
        stationary_reward=c,
    )


# ---------------------------------------------------------------------------
# Analytic crossing (K = 3)
# ---------------------------------------------------------------------------


def _even_floor(x: float) -> int:
    m = math.floor(x)
    return m if m % 2 == 0 else m - 1


def _odd_floor(x: float) -> int:
    m = math.floor(x)
    return m if m % 2 != 0 else m - 1


def _log_base(base: float, x: float) -> float:
    return math.log(x) / math.log(base)


def _single_exp_crossing(coef: float, base: float, offset: float, limit: float) -> int:
    """First k with coef * base^k + offset > limit for coef < 0, 0 < base < 1.

    The sequence increases monotonically to offset, so the log formula is
    exact up to float rounding; a local nudge repairs the boundary.
    """
    ratio = (offset - limit) / (-coef)
    if ratio >= 1.0:
        k = 0
    else:
        k = max(math.floor(_log_base(base, ratio)) + 1, 0)
    for _ in range(64):
        if k > 0 and coef * base ** (k - 1) + offset > limit:
            k -= 1
        elif coef * base**k + offset <= limit:
            k += 1
        else:
            return k
    raise CrossingError("single-exponential crossing failed to converge")


def _scan_window(spec: SpectrumClass, limit: float, start: int, cap: int) -> float:
    """First crossing in [start, cap], else INFINITE (window provably complete)."""
    if cap > MAX_ANALYTIC_WINDOW:
        raise CrossingError(f"analytic scan window {cap} exceeds safety limit")
    for k in range(start, cap + 1):
        if spec.reward_at(k) > limit:
            return float(k)
    return INFINITE


def _envelope_k(spec: SpectrumClass, gap: float, after: int) -> int:
    """Some k > after with transient_bound(k) < gap (crossing certain there)."""
    k = max(after + 1, 1)
    for _ in range(200):
        if spec.transient_bound(k) < gap:
            return k
        k *= 2
    raise CrossingError("transient envelope failed to decay below the gap")


def _first_true_by_parity(spec: SpectrumClass, limit: float, lo: int, hi: int) -> int:
    """First k in (lo, hi] with h(k) > limit, for real spectra.

    Along each parity class, h is a two-term exponential (or affine-times-
    exponential) in the half-index, so once the predicate is known false at
    the bottom of the range it switches at most once; binary search per
    parity is exact.
    """
    best = hi
    for parity in (0, 1):
        j_lo = (lo + 1 - parity + 1) // 2  # first half-index with k > lo
        j_hi = (hi - parity) // 2
        if j_hi < j_lo or not spec.reward_at(2 * j_hi + parity) > limit:
            continue
        while j_lo < j_hi:
            j_mid = (j_lo + j_hi) // 2
            if spec.reward_at(2 * j_mid + parity) > limit:
                j_hi = j_mid
            else:
                j_lo = j_mid + 1
        best = min(best, 2 * j_lo + parity)
    return best


def _scan_guaranteed(spec: SpectrumClass, limit: float, start: int) -> float:
    """First crossing when the transient provably dies inside the gap to c.

    Only valid when stationary_reward > limit: once |h(k) - c| drops below
    the gap, h(k) > limit holds, so a crossing is certain.  A linear prefix
    finds every ordinary instance; nearly-nonmixing spectra (eigenvalue
    moduli within ~1e-6 of 1) fall through to an exact parity-wise binary
    search between the prefix and the envelope bound.
    """
    gap = spec.stationary_reward - limit
    if gap <= 0.0:
        raise CrossingError("guaranteed scan called without a positive gap")
    # every k <= prefix_end ends up known-false (k < 3 via the base cases),
    # which pins each parity subsequence to a single false->true switch
    prefix_end = start + LINEAR_PREFIX
    for k in range(start, prefix_end + 1):
        if spec.reward_at(k) > limit:
            return float(k)
        if spec.transient_bound(k) < gap:  # unreachable: implies a crossing
            raise CrossingError(f"transient below gap at k={k} without a crossing")

    hi = _envelope_k(spec, gap, prefix_end)
    if spec.form is SpectrumForm.COMPLEX_PAIR:
        # crossings occur no later than the next nonnegative half-period of
        # the sinusoid, which starts within one full period of the prefix end
        angle = spec.coefficients[4]
        period = 2.0 * math.pi / min(angle, 2.0 * math.pi - angle)
        cap = min(hi, prefix_end + int(period) + 2)
        for k in range(prefix_end + 1, cap + 1):
            if spec.reward_at(k) > limit:
                return float(k)
        raise CrossingError("complex-pair crossing missing inside its period")
    return float(_first_true_by_parity(spec, limit, prefix_end, hi))


def _two_real_crossing(spec: SpectrumClass, limit: float) -> float:
    a1, b1, a2, b2, c = spec.coefficients
    exceeds_c = c > limit

    if b1 == b2:
        s = a1 + a2
        if b1 > 0.0 and s < 0.0:
            return float(_single_exp_crossing(s, b1, c, limit)) if exceeds_c else INFINITE
        return INFINITE

    if a1 * b1 == 0.0 and a2 * b2 == 0.0:
        return INFINITE
    if a1 * b1 == 0.0:
        if b2 > 0.0 and a2 < 0.0:
            return float(_single_exp_crossing(a2, b2, c, limit)) if exceeds_c else INFINITE
        return INFINITE
    if a2 * b2 == 0.0:
        if b1 > 0.0 and a1 < 0.0:
            return float(_single_exp_crossing(a1, b1, c, limit)) if exceeds_c else INFINITE
        return INFINITE

    # All four parameters nonzero; normalize so the sign patterns below match
    # the mirrored listings as well.
    if b1 > 0.0 and b2 > 0.0:
        if a1 > 0.0 and a2 > 0.0:
            return INFINITE
        if a1 < 0.0 and a2 < 0.0:
            return _scan_guaranteed(spec, limit, 3) if exceeds_c else INFINITE
        if a1 > 0.0:  # put the negative coefficient first
            a1, b1, a2, b2 = a2, b2, a1, b1
        if b1 > b2:
            # dips then climbs to c from below
            return _scan_guaranteed(spec, limit, 3) if exceeds_c else INFINITE
        # climbs to a single peak then settles to c from above
        z0 = -a2 * (1.0 - b2) / (a1 * (1.0 - b1))
        if z0 >= 1.0:
            return INFINITE
        peak = math.floor(_log_base(b1 / b2, z0)) + 1
        return _scan_window(spec, limit, 3, peak + 2)

    if b1 < 0.0 and b2 < 0.0:
        if a1 > 0.0 and a2 > 0.0:
            return INFINITE
        if a1 < 0.0 and a2 < 0.0:
            return INFINITE
        if a1 < 0.0:  # put the positive coefficient first
            a1, b1, a2, b2 = a2, b2, a1, b1
        ratio = b1 / b2  # positive: both eigenvalues negative
        z1 = -a2 * (1.0 - b2 * b2) / (a1 * (1.0 - b1 * b1))
        if abs(b1) > abs(b2):
            if z1 <= 1.0:
                return INFINITE
            cap = _even_floor(_log_base(ratio, z1)) + 2
            return _scan_window(spec, limit, 3, cap + 2)
        if z1 >= ratio:
            return INFINITE
        cap = _odd_floor(_log_base(ratio, z1)) + 2
        return _scan_window(spec, limit, 3, cap + 2)

    # Exactly one negative eigenvalue; put it first.
    if b1 > 0.0:
        a1, b1, a2, b2 = a2, b2, a1, b1
    ratio = -b1 / b2
    if a1 > 0.0 and a2 > 0.0:
        return INFINITE
    if a1 < 0.0 and a2 > 0.0:
        return INFINITE
    if a1 > 0.0 and a2 < 0.0:
        if ratio > 1.0:
            z1 = -a2 * (1.0 - b2 * b2) / (a1 * (1.0 - b1 * b1))
            if z1 <= 1.0:
                return INFINITE
            cap = _even_floor(_log_base(ratio, z1)) + 2
            return _scan_window(spec, limit, 3, cap + 2)
        # oscillates below max(h(0), c); tail climbs to c
        return _scan_guaranteed(spec, limit, 3) if exceeds_c else INFINITE
    # a1 < 0 and a2 < 0
    if ratio > 1.0:
        z2 = a2 * (b2 * b2 - 1.0) / (a1 * (b1 * b1 - 1.0))
        if z2 <= ratio:
            return INFINITE
        cap = _odd_floor(_log_base(ratio, z2)) + 2
        return _scan_window(spec, limit, 3, cap + 2)
    return _scan_guaranteed(spec, limit, 3) if exceeds_c else INFINITE


def _defective_crossing(spec: SpectrumClass, limit: float) -> float:
    a, b, cl, d = spec.coefficients
    exceeds_d = d > limit

    if cl == 0.0:
        if a == 0.0:
            return INFINITE
        if b > 0.0 and a < 0.0:
            return float(_single_exp_crossing(a, b, d, limit)) if exceeds_d else INFINITE
        return INFINITE

    if b > 0.0:
        if cl > 0.0:
            # climbs to a peak near ceil(z3), then settles to d from above
            z3 = (a * b - a * b * b - cl * b) / (cl * (b - 1.0))
            if z3 <= 0.0:
                return INFINITE
            return _scan_window(spec, limit, 3, math.ceil(z3) + 2)
        # dips then climbs to d from below
        return _scan_guaranteed(spec, limit, 3) if exceeds_d else INFINITE

    z4 = (a * b - a * b**3 - 2.0 * cl * b * b) / (cl * (b * b - 1.0))
    if cl < 0.0:
        if z4 <= 0.0:
            return INFINITE
        cap = _even_floor(z4) + 2
        return _scan_window(spec, limit, 3, cap + 2)
    if z4 <= 1.0:
        return INFINITE
    cap = _odd_floor(z4) + 2
    return _scan_window(spec, limit, 3, cap + 2)


def _sin_positive(x: float) -> bool:
    # zeros of sin count as non-positive; guards against sin(pi) ~ 1e-16
    return math.sin(x) > 1e-12


def _first_positive_sin(angle: float, phase: float) -> float:
    """Least k >= 0 with sin(k * angle + phase) > 0, or INFINITE.

    angle in (0, 2pi), phase in [0, 2pi).  Closed forms by position of the
    phase, with a local nudge against floating-point boundaries.
    """
    two_pi = 2.0 * math.pi
    tol = 1e-12
    at_pi = abs(angle - math.pi) <= tol
    phase_zero = phase <= tol or two_pi - phase <= tol
    phase_pi = abs(phase - math.pi) <= tol

    if at_pi and (phase_zero or phase_pi):
        return INFINITE
    if phase_zero:
        k = math.floor(math.pi / (two_pi - angle)) + 1
    elif phase_pi:
        k = math.floor(math.pi / angle) + 1
    elif phase < math.pi:
        k = 0
    elif angle <= math.pi:
        k = math.floor((two_pi - phase) / angle) + 1
    else:
        k = math.floor((phase - math.pi) / (two_pi - angle)) + 1

    k = max(k, 0)
    for _ in range(64):
        if k > 0 and _sin_positive((k - 1) * angle + phase):
            k -= 1
        elif not _sin_positive(k * angle + phase):
            k += 1
        else:
            return float(k)
    raise CrossingError("sin-sign crossing failed to converge")


def _complex_crossing(spec: SpectrumClass, limit: float, threshold_reward: float) -> float:
    amp, mod, phase, offset, angle = spec.coefficients
    if amp == 0.0:
        return INFINITE
    target = threshold_reward - offset
    if abs(target) <= EPS_CROSS:
        return _first_positive_sin(angle, phase)
    if target > 0.0:
        if target >= amp:
            return INFINITE
        cap = math.ceil(_log_base(mod, target / amp)) + 2
        return _scan_window(spec, limit, 3, cap)
    # threshold below the stationary reward: the envelope eventually stays
    # inside the gap, so a crossing is certain.
    return _scan_guaranteed(spec, limit, 0 if limit < spec.reward_at(0) else 3)


def first_crossing_analytic_k3(spec: SpectrumClass, threshold_reward: float) -> float:
    """Exact first crossing for a classified 3-state spectrum.

    Finite results may exceed any scan horizon; INFINITE is exact.
    """
    limit = threshold_reward + EPS_CROSS
    for k in range(3):
        if spec.reward_at(k) > limit:
            return _maybe_corrupt(float(k))

    if spec.form is SpectrumForm.RANK_DEGENERATE:
        return INFINITE
    if spec.form is SpectrumForm.TWO_REAL:
        return _maybe_corrupt(_two_real_crossing(spec, limit))
    if spec.form is SpectrumForm.REAL_DEFECTIVE:
        return _maybe_corrupt(_defective_crossing(spec, limit))
    if spec.form is SpectrumForm.COMPLEX_PAIR:
        return _maybe_corrupt(_complex_crossing(spec, limit, threshold_reward))
    raise CrossingError(f"unhandled spectrum form {spec.form}")


def _maybe_corrupt(result: float) -> float:
    if _CORRUPT_ANALYTIC and math.isfinite(result) and result >= 1.0:
        return result + 1.0
    return result


def first_crossing(
    arm: Arm,
    start: np.ndarray,
    threshold_reward: float,
    l_max: int,
    method: str = "auto",
) -> float:
    """Crossing time via the analytic solver for K = 3, forward scan otherwise."""
    if method not in ("auto", "analytic", "scan"):
        raise ValueError(f"unknown crossing method {method!r}")
    if method == "analytic" or (method == "auto" and arm.n_states == 3):
        spec = classify_spectrum(arm, start)
        return first_crossing_analytic_k3(spec, threshold_reward)
    return first_crossing_scan(arm, start, threshold_reward, l_max)

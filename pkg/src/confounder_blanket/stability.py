"""Complementary-pairs stability selection adapted to (de)activation events.

Rates of candidate (de)activation are estimated over 2B half-sample fits.
A decision fires when, at some admissible threshold, the number of candidates
at or above the threshold exceeds the worst-case expected count of low-rate
candidates. That worst case is the maximal tail probability of an r-concave
distribution on the subsample-rate grid with a bounded mean, computed
numerically (no closed form exists).
"""

from __future__ import annotations

import enum
import math
import threading
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from .graphs import RelationKind


class Signal(str, enum.Enum):
    DEACTIVATION = "deactivation"
    ACTIVATION = "activation"


class Ordering(str, enum.Enum):
    I_BEFORE_J = "i_before_j"  # hypothesis: i is not a descendant of j
    J_BEFORE_I = "j_before_i"


#: Which relation each (signal, ordering) combination licenses, for a pair
#: keyed (i, j) with i > j.
RELATION_FOR = {
    (Signal.DEACTIVATION, Ordering.I_BEFORE_J): RelationKind.PRECEDES,
    (Signal.ACTIVATION, Ordering.I_BEFORE_J): RelationKind.NOT_DESCENDANT,
    (Signal.DEACTIVATION, Ordering.J_BEFORE_I): RelationKind.PRECEDED_BY,
    (Signal.ACTIVATION, Ordering.J_BEFORE_I): RelationKind.NOT_ANCESTOR,
}


class Quartet(NamedTuple):
    """Active sets of the four models fit on one half-sample: each response
    regressed on the conditioning set alone and with the other pair member."""

    s0_i: frozenset[int]
    s1_i: frozenset[int]
    s0_j: frozenset[int]
    s1_j: frozenset[int]


@dataclass(frozen=True)
class RateTable:
    """Per-candidate (de)activation counts over 2B half-samples for pair (i, j)."""

    candidates: tuple[int, ...]
    counts: dict  # (Signal, Ordering) -> np.ndarray of ints, aligned to candidates
    n_subsamples: int  # 2B

    def rates(self, signal: Signal, ordering: Ordering) -> np.ndarray:
        return self.counts[(signal, ordering)] / self.n_subsamples

    def to_json_dict(self) -> dict:
        return {
            "candidates": list(self.candidates),
            "n_subsamples": self.n_subsamples,
            "counts": {
                f"{sig.value}:{order.value}": self.counts[(sig, order)].tolist()
                for sig, order in self.counts
            },
        }


def estimate_rates(quartets: Sequence[Quartet], candidates: Sequence[int], b_pairs: int) -> RateTable:
    """Count, per candidate, the four (de)activation events across half-samples.

    Deactivation w.r.t. "i before j" means the candidate is retained when the
    response j is fit on the conditioning set alone but dropped once i joins
    the predictors; activation is the mirror event on the response i. The
    opposite ordering swaps the roles.
    """
    if len(quartets) != 2 * b_pairs:
        raise ValueError(f"expected {2 * b_pairs} quartets, got {len(quartets)}")
    cand = tuple(candidates)
    counts = {key: np.zeros(len(cand), dtype=int) for key in RELATION_FOR}
    for q in quartets:
        for idx, k in enumerate(cand):
            in_s0i, in_s1i = k in q.s0_i, k in q.s1_i
            in_s0j, in_s1j = k in q.s0_j, k in q.s1_j
            if in_s0j and not in_s1j:
                counts[(Signal.DEACTIVATION, Ordering.I_BEFORE_J)][idx] += 1
            if not in_s0i and in_s1i:
                counts[(Signal.ACTIVATION, Ordering.I_BEFORE_J)][idx] += 1
            if in_s0i and not in_s1i:
                counts[(Signal.DEACTIVATION, Ordering.J_BEFORE_I)][idx] += 1
            if not in_s0j and in_s1j:
                counts[(Signal.ACTIVATION, Ordering.J_BEFORE_I)][idx] += 1
    return RateTable(cand, counts, 2 * b_pairs)


# === worst-case tail probability of an r-concave pmf ===
#
# For r < 0, a pmf f on the grid {0, 1/m, ..., 1} is r-concave exactly when
# the sequence f^r is convex (with f = 0 allowed only in a contiguous stretch
# at the boundary). Tail-maximal distributions subject to a mean cap can be
# taken from the family whose r-th power is affine and truncated,
#     f_i  proportional to  (1 + a*i)^(1/r),   i = 0..k,   f = 0 above k,
# with the slope a solving the mean constraint (the mean is strictly
# decreasing in a). Scanning the cutoff k and taking the best tail gives the
# bound; enumeration at small grids confirms the family is extremal.

_curve_cache: dict = {}
_curve_lock = threading.Lock()


def _family_weights(a: float, k: int, exponent: float) -> np.ndarray:
    i = np.arange(k + 1, dtype=float)
    logw = exponent * np.log1p(a * i)
    logw -= logw.max()
    w = np.exp(logw)
    return w / w.sum()


def _tail_curve(theta: float, m: int, exponent: float) -> np.ndarray:
    """D(theta, i/m) for every grid index i, on the (m+1)-point grid.

    Entry i is the maximal P(X >= i/m) over the truncated-affine family with
    mean exactly theta (or a boundary point mass when theta allows it).
    """
    curve = np.zeros(m + 1)
    curve[0] = 1.0
    # point mass at the largest grid point with value <= theta
    k_free = int(math.floor(theta * m + 1e-12))
    curve[: min(k_free, m) + 1] = 1.0
    for k in range(max(k_free + 1, 1), m + 1):
        xk = k / m

        def mean_of(a: float, k=k) -> float:
            w = _family_weights(a, k, exponent)
            return float(np.dot(np.arange(k + 1), w)) / m

        lo = -1.0 / k * (1.0 - 1e-9)
        if mean_of(lo) < theta:
            # even the point-mass end of the family undershoots; cannot happen
            # for k above k_free, guard anyway
            continue
        hi = 1.0
        while mean_of(hi) > theta:
            hi *= 4.0
            if hi > 1e12:
                break
        a_star = brentq(lambda a: mean_of(a) - theta, lo, hi, xtol=1e-13, rtol=8.9e-16)
        w = _family_weights(a_star, k, exponent)
        rev = np.cumsum(w[::-1])[::-1]  # rev[i] = P(X >= i/m)
        np.maximum(curve[: k + 1], rev, out=curve[: k + 1])
    return np.minimum(curve, 1.0)


def _cached_curve(theta: float, m: int, exponent: float) -> np.ndarray:
    key = (round(theta, 12), m, exponent)
    got = _curve_cache.get(key)
    if got is not None:
        return got
    curve = _tail_curve(theta, m, exponent)
    with _curve_lock:
        _curve_cache.setdefault(key, curve)
    return curve


def rconcave_tail_bound(theta: float, tau: float, b_pairs: int, r: float) -> float:
    """Maximal P(X >= tau) over r-concave pmfs on {0, 1/(2B), ..., 1} with
    mean at most theta.

    Degenerate regimes are mapped to the trivial bounds: tau <= theta gives
    1.0 (the mean constraint no longer separates the tail), tau above the grid
    gives 0.0.
    """
    if r >= 0:
        raise ValueError("concavity parameter must be negative")
    if b_pairs < 1:
        raise ValueError("need at least one complementary pair")
    if tau > 1.0:
        return 0.0
    if tau <= 0:
        return 1.0
    if theta <= 0:
        return 0.0
    if tau <= theta:
        return 1.0
    m = 2 * b_pairs
    i_tau = int(math.ceil(tau * m - 1e-9))
    curve = _cached_curve(theta, m, 1.0 / r)
    return float(curve[i_tau])


def max_errors_bound(theta: float, tau: float, b_pairs: int, low_count: int) -> float:
    """Expected-count cap for low-rate candidates selected at threshold tau.

    Combines the simultaneous-selection bound (threshold 2*tau - 1 on the
    pair grid, concavity -1/2) with the plain selection bound (threshold tau
    on the half-sample grid, concavity -1/4) and scales by the number of
    low-rate candidates.
    """
    if low_count < 0:
        raise ValueError("low_count must be nonnegative")
    if low_count == 0:
        return 0.0
    term1 = rconcave_tail_bound(theta * theta, 2.0 * tau - 1.0, b_pairs, -0.5)
    term2 = rconcave_tail_bound(theta, tau, 2 * b_pairs, -0.25)
    return min(term1, term2) * low_count


def _bound_over_grid(theta: float, b_pairs: int, low_count: int) -> np.ndarray:
    """max_errors_bound at every grid threshold l/(2B), l = 1..2B."""
    m = 2 * b_pairs
    out = np.empty(m)
    if low_count == 0:
        out.fill(0.0)
        return out
    if theta <= 0:
        # all mass at zero: no low-rate candidate can reach any positive tau
        out.fill(0.0)
        return out
    theta = min(theta, 1.0)
    curve_half = _cached_curve(min(theta * theta, 1.0), m, -2.0) if theta * theta < 1 else None
    curve_quarter = _cached_curve(theta, 2 * m, -4.0) if theta < 1 else None
    for l in range(1, m + 1):
        tau = l / m
        # first term's threshold 2*tau-1 lands on index 2l - m of the same grid
        if curve_half is None or 2 * l - m <= math.floor(theta * theta * m + 1e-12):
            t1 = 1.0
        else:
            t1 = float(curve_half[2 * l - m])
        if tau <= theta:
            t2 = 1.0
        else:
            t2 = float(curve_quarter[2 * l])
        out[l - 1] = min(t1, t2) * low_count
    return out


_THETA_QUANTUM = 1e-4


@dataclass
class StabilityDecision:
    """Outcome of one (signal, ordering) stability test."""

    relation: Optional[RelationKind]
    signal: Signal
    ordering: Ordering
    theta: float
    low_count: int
    epsilon: float
    firings: list  # (tau, n_selected, bound, n_selected_low)


def stability_select(
    rates: np.ndarray,
    signal: Signal,
    ordering: Ordering,
    epsilon: float,
    b_pairs: int,
) -> StabilityDecision:
    """Decision rule for one (signal, ordering) rate family.

    theta is the mean observed rate; candidates at or below it form the
    low-rate pool. Thresholds sweep the rate grid above ``epsilon``; the
    combination fires as soon as the number of candidates at or above a
    threshold exceeds the worst-case expected count, and the fired
    combination maps to its licensed relation.
    """
    rates = np.asarray(rates, dtype=float)
    none = StabilityDecision(None, signal, ordering, 0.0, 0, epsilon, [])
    if rates.size == 0:
        return none
    if epsilon < 0.0:
        raise ValueError("epsilon must be nonnegative")
    m = 2 * b_pairs
    theta = float(rates.mean())
    low_mask = rates <= theta
    low_count = int(low_mask.sum())
    if rates.max() <= epsilon:
        return StabilityDecision(None, signal, ordering, theta, low_count, epsilon, [])

    theta_q = round(round(theta / _THETA_QUANTUM) * _THETA_QUANTUM, 10)
    bounds = _bound_over_grid(theta_q, b_pairs, low_count)
    firings = []
    for l in range(1, m + 1):
        tau = l / m
        # the error cap is only valid above the mean rate, so the effective
        # floor is the larger of the conflict floor and theta
        if tau <= epsilon or tau <= theta:
            continue
        n_sel = int((rates >= tau - 1e-12).sum())
        if n_sel == 0:
            continue
        if n_sel > bounds[l - 1]:
            n_low = int((rates[low_mask] >= tau - 1e-12).sum())
            firings.append((tau, n_sel, float(bounds[l - 1]), n_low))
    if not firings:
        return StabilityDecision(None, signal, ordering, theta, low_count, epsilon, [])
    return StabilityDecision(
        RELATION_FOR[(signal, ordering)], signal, ordering, theta, low_count, epsilon, firings
    )

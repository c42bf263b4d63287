"""Finite-sample ancestral discovery from data.

Per unresolved pair and sweep: draw complementary half-samples, fit the model
quartet on each, test the unordered short-circuit on omission rates, otherwise
estimate (de)activation rates and run the stability decision for all four
signal/ordering combinations under a conflict-free threshold floor. Matrix
updates are published at sweep boundaries, so results are independent of pair
scheduling and of how many workers fit the subsamples.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .graphs import AncestralMatrix, RelationKind, relations_consistent
from .selection import SelectorSpec, select
from .stability import (
    Ordering,
    Quartet,
    RateTable,
    Signal,
    StabilityDecision,
    estimate_rates,
    stability_select,
)


@dataclass(frozen=True)
class RunConfig:
    """Knobs of one discovery run."""

    b_pairs: int = 50
    gamma: float = 0.5
    selector: SelectorSpec = field(default_factory=SelectorSpec)
    seed: int = 0
    max_passes: Optional[int] = None
    n_jobs: int = 1

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if self.b_pairs < 2:
            raise ValueError("need at least two complementary pairs")

    def passes_cap(self, d_x: int) -> int:
        if self.max_passes is not None:
            return self.max_passes
        return d_x * (d_x - 1) + 1


@dataclass
class PairEvidence:
    """Everything recorded while processing one pair in one sweep.

    Rates, epsilon and the decision are recomputable from the stored quartets,
    which makes every non-NA entry replayable.
    """

    pair: tuple[int, int]
    sweep: int
    conditioning: tuple[int, ...]
    subsample_seed: int
    quartets: list[Quartet]
    r_i_omitted: float
    r_j_omitted: float
    gamma: float
    rate_table: Optional[RateTable]
    epsilon: Optional[float]
    decisions: list[StabilityDecision]
    relation: Optional[RelationKind]

    def to_json_dict(self, full: bool = False) -> dict:
        out = {
            "pair": list(self.pair),
            "sweep": self.sweep,
            "adjustment_set": list(self.conditioning),
            "subsample_seed": self.subsample_seed,
            "r_i_omitted": self.r_i_omitted,
            "r_j_omitted": self.r_j_omitted,
            "gamma": self.gamma,
            "epsilon": self.epsilon,
            "relation": self.relation.value if self.relation else None,
            "rate_table": self.rate_table.to_json_dict() if self.rate_table else None,
            "fired": [
                {
                    "signal": d.signal.value,
                    "ordering": d.ordering.value,
                    "theta": d.theta,
                    "firings": [list(f) for f in d.firings],
                }
                for d in self.decisions
                if d.relation is not None
            ],
        }
        if full:
            out["quartets"] = [
                {
                    "s0_i": sorted(q.s0_i),
                    "s1_i": sorted(q.s1_i),
                    "s0_j": sorted(q.s0_j),
                    "s1_j": sorted(q.s1_j),
                }
                for q in self.quartets
            ]
        return out


@dataclass
class SampleResult:
    matrix: AncestralMatrix
    evidence: dict  # (i, j) -> PairEvidence of the most recent visit
    passes: int
    selector_calls: int
    skipped_conflicts: int = 0


def _derive_seed(*parts: int) -> int:
    return int(np.random.SeedSequence([int(p) & 0xFFFFFFFF for p in parts]).generate_state(1)[0])


def draw_complementary_pairs(n: int, b_pairs: int, seed: int) -> list[np.ndarray]:
    """B disjoint half-sample pairs of row indices, each of size floor(n/2).

    Returns 2B index arrays; entries 2b and 2b+1 partition a random
    permutation of the rows (one row is left out per pair when n is odd).
    """
    half = n // 2
    if half < 1:
        raise ValueError(f"n={n} is too small to split into complementary halves")
    rng = np.random.default_rng(seed)
    out: list[np.ndarray] = []
    for _ in range(b_pairs):
        perm = rng.permutation(n)
        out.append(np.sort(perm[:half]))
        out.append(np.sort(perm[half : 2 * half]))
    return out


def fit_quartet(
    values: np.ndarray,
    conditioning: Sequence[int],
    i: int,
    j: int,
    rows: np.ndarray,
    spec: SelectorSpec,
    base_seed: int = 0,
) -> Quartet:
    """Fit the four models of one half-sample and return their active sets.

    Responses i and j are each regressed on the conditioning columns alone and
    with the other pair member appended. Selected columns are reported as
    indices into ``values``.
    """
    cond = [int(c) for c in conditioning]
    if i in cond or j in cond:
        raise ValueError("conditioning columns must exclude the pair")

    def run(slot: int, cols: list[int], target: int) -> frozenset[int]:
        sub_spec = spec.with_seed(_derive_seed(base_seed, slot))
        active = select(sub_spec, values[:, cols], values[:, target], rows)
        return frozenset(cols[c] for c in active.selected)

    return Quartet(
        s0_i=run(0, cond, i),
        s1_i=run(1, cond + [j], i),
        s0_j=run(2, cond, j),
        s1_j=run(3, cond + [i], j),
    )


def decide_unordered(quartets: Sequence[Quartet], gamma: float, i: int, j: int) -> tuple[bool, float, float]:
    """Omission test: each pair member's rate of absence from the other's full model.

    Either rate strictly above gamma declares the pair causally unordered.
    """
    n = len(quartets)
    r_i = sum(1 for q in quartets if i not in q.s1_j) / n
    r_j = sum(1 for q in quartets if j not in q.s1_i) / n
    return (r_i > gamma or r_j > gamma), r_i, r_j


def adaptive_epsilon(rate_table: RateTable) -> float:
    """Smallest grid threshold above which at most one ordering still has
    candidates, used as the floor for every stability test of the pair.

    Zero when one ordering has no positive rate at all (no conflict anywhere).
    """
    step = 1.0 / rate_table.n_subsamples
    max_by_ordering = {}
    for ordering in Ordering:
        tops = [
            rate_table.rates(signal, ordering).max() if rate_table.candidates else 0.0
            for signal in Signal
        ]
        max_by_ordering[ordering] = max(tops)
    ceiling = min(max_by_ordering.values())
    if ceiling <= 0.0:
        return 0.0
    # may exceed the grid top when conflicts persist at rate one, in which
    # case every threshold is suppressed
    return ceiling + step


def _mutual_nondescendants(matrix: AncestralMatrix, z_cols: Sequence[int], i: int, j: int) -> list[int]:
    cond = list(z_cols)
    for x in matrix.foreground_ids:
        if x in (i, j):
            continue
        if matrix.knows_not_descendant(x, i) and matrix.knows_not_descendant(x, j):
            cond.append(x)
    return sorted(cond)


def _process_pair(
    values: np.ndarray,
    z_cols: Sequence[int],
    snapshot: AncestralMatrix,
    i: int,
    j: int,
    config: RunConfig,
    sweep: int,
    executor: Optional[ThreadPoolExecutor],
) -> PairEvidence:
    n = values.shape[0]
    cond = _mutual_nondescendants(snapshot, z_cols, i, j)
    sub_seed = _derive_seed(config.seed, sweep, i, j)
    subsamples = draw_complementary_pairs(n, config.b_pairs, sub_seed)

    def one(b: int) -> Quartet:
        return fit_quartet(
            values, cond, i, j, subsamples[b], config.selector,
            base_seed=_derive_seed(config.seed, sweep, i, j, b),
        )

    if executor is None:
        quartets = [one(b) for b in range(len(subsamples))]
    else:
        quartets = list(executor.map(one, range(len(subsamples))))

    is_unordered, r_i0, r_j0 = decide_unordered(quartets, config.gamma, i, j)
    if is_unordered:
        return PairEvidence(
            (i, j), sweep, tuple(cond), sub_seed, quartets, r_i0, r_j0,
            config.gamma, None, None, [], RelationKind.UNORDERED,
        )

    table = estimate_rates(quartets, cond, config.b_pairs)
    eps = adaptive_epsilon(table)
    decisions = [
        stability_select(table.rates(sig, order), sig, order, eps, config.b_pairs)
        for sig, order in (
            (Signal.DEACTIVATION, Ordering.I_BEFORE_J),
            (Signal.ACTIVATION, Ordering.I_BEFORE_J),
            (Signal.DEACTIVATION, Ordering.J_BEFORE_I),
            (Signal.ACTIVATION, Ordering.J_BEFORE_I),
        )
    ]
    relation = _join_decisions(decisions)
    return PairEvidence(
        (i, j), sweep, tuple(cond), sub_seed, quartets, r_i0, r_j0,
        config.gamma, table, eps, decisions, relation,
    )


def _join_decisions(decisions: Sequence[StabilityDecision]) -> Optional[RelationKind]:
    """Combine fired combinations; a full ordering beats its one-sided version.

    The adaptive floor guarantees at most one ordering fires within a sweep,
    so the only overlap to resolve is deactivation plus activation of the same
    ordering.
    """
    fired = [d.relation for d in decisions if d.relation is not None]
    if not fired:
        return None
    for strong in (RelationKind.PRECEDES, RelationKind.PRECEDED_BY):
        if strong in fired:
            return strong
    return fired[0]


def run_cbl_sample(
    values: np.ndarray,
    z_cols: Sequence[int],
    x_cols: Sequence[int],
    config: RunConfig,
) -> SampleResult:
    """Full fixpoint run over all foreground pairs.

    ``values`` is the n-by-d data table; ``z_cols``/``x_cols`` partition its
    columns into the background and foreground tiers.
    """
    values = np.asarray(values, dtype=float)
    if values.ndim != 2:
        raise ValueError("data must be a 2-D numeric table")
    if not np.isfinite(values).all():
        raise ValueError("data contains non-finite entries")
    n, d = values.shape
    z_cols = [int(c) for c in z_cols]
    x_cols = [int(c) for c in x_cols]
    both = set(z_cols) | set(x_cols)
    if len(both) != len(z_cols) + len(x_cols):
        raise ValueError("tier manifest assigns some column twice")
    if both and (min(both) < 0 or max(both) >= d):
        raise ValueError("tier manifest names columns outside the data table")
    if len(x_cols) < 2:
        raise ValueError("need at least two foreground columns")
    if n < 40:
        raise ValueError(f"need at least 40 rows, got {n}")

    matrix = AncestralMatrix(x_cols)
    evidence: dict[tuple[int, int], PairEvidence] = {}
    selector_calls = 0
    skipped_conflicts = 0
    cap = config.passes_cap(len(x_cols))

    executor = ThreadPoolExecutor(max_workers=config.n_jobs) if config.n_jobs > 1 else None
    try:
        sweep = 0
        converged = False
        while not converged and sweep < cap:
            converged = True
            snapshot = matrix.copy()
            visits: list[PairEvidence] = []
            # only never-decided pairs are revisited; one-sided decisions stand
            for i, j in snapshot.na_pairs():
                ev = _process_pair(values, z_cols, snapshot, i, j, config, sweep, executor)
                selector_calls += 4 * len(ev.quartets)
                visits.append(ev)
            for ev in visits:
                i, j = ev.pair
                evidence[(i, j)] = ev
                if ev.relation is None:
                    continue
                current = matrix.get(i, j)
                if not relations_consistent(current, ev.relation):
                    skipped_conflicts += 1
                    continue
                prov = {
                    "sweep": ev.sweep,
                    "adjustment_set": list(ev.conditioning),
                    "gamma_fired": ev.rate_table is None,
                    "fired": [
                        (d.signal.value, d.ordering.value)
                        for d in ev.decisions
                        if d.relation is not None
                    ],
                }
                if matrix.update(i, j, ev.relation, prov):
                    converged = False
            sweep += 1
    finally:
        if executor is not None:
            executor.shutdown()

    return SampleResult(matrix, evidence, sweep, selector_calls, skipped_conflicts)

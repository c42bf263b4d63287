"""Exact-independence ancestral discovery over a known two-tier graph.

The driver repeatedly sweeps all unresolved foreground pairs. For each pair it
conditions on the full set of currently known mutual non-descendants and asks
only two kinds of queries: a marginal pair query (separation means the pair is
causally unordered) and witness queries that look for minimal deactivation or
activation of a background/non-descendant vertex by one element of the pair.
Updates are published at sweep boundaries, which makes the outcome independent
of pair order and safe to parallelize within a sweep.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

from .graphs import AncestralMatrix, GraphError, RelationKind, TieredGraph


class QueryKind(str, enum.Enum):
    MARGINAL_PAIR = "marginal_pair"
    WITH_WITNESS = "with_witness"


@dataclass(frozen=True)
class LazyQuery:
    """One oracle query, restricted by construction.

    The conditioning set is never supplied by the caller: it is always the
    pair's mutual non-descendant set (plus the background tier), minus the
    witness, optionally plus the other pair member. For WITH_WITNESS queries
    the tested variable is ``X_i`` and ``include_j`` says whether ``X_j``
    joins the conditioning set.
    """

    kind: QueryKind
    i: int
    j: int
    w: Optional[int] = None
    include_j: bool = False


@dataclass
class OracleTranscript:
    """Audit log: every query asked, its answer, and the sweep it ran in."""

    entries: list[tuple[LazyQuery, bool, int]] = field(default_factory=list)

    def record(self, query: LazyQuery, answer: bool, sweep: int) -> None:
        self.entries.append((query, answer, sweep))

    def __len__(self) -> int:
        return len(self.entries)


@dataclass
class OracleResult:
    matrix: AncestralMatrix
    passes: int
    n_queries: int
    transcript: Optional[OracleTranscript] = None
    matrix_history: Optional[list[AncestralMatrix]] = None


def minimal_deactivator_holds(g: TieredGraph, w: int, i: int, j: int, a: set[int]) -> bool:
    """True when conditioning on ``i`` switches ``w`` and ``j`` from dependent
    to independent, relative to the rest of the non-descendant set ``a``.

    Firing licenses: i precedes j.
    """
    if w not in a:
        raise GraphError(f"witness {w} is not in the conditioning set")
    rest = a - {w}
    return g.d_separated({w}, {j}, rest | {i}) and not g.d_separated({w}, {j}, rest)


def minimal_activator_holds(g: TieredGraph, w: int, i: int, j: int, a: set[int]) -> bool:
    """True when conditioning on ``j`` switches ``w`` and ``i`` from independent
    to dependent (a collider opened by j or one of its descendants).

    Firing licenses: i is not a descendant of j.
    """
    if w not in a:
        raise GraphError(f"witness {w} is not in the conditioning set")
    rest = a - {w}
    return (not g.d_separated({w}, {i}, rest | {j})) and g.d_separated({w}, {i}, rest)


def _mutual_nondescendant_set(g: TieredGraph, m: AncestralMatrix, i: int, j: int) -> set[int]:
    a = set(g.background)
    for x in m.foreground_ids:
        if x in (i, j):
            continue
        if m.knows_not_descendant(x, i) and m.knows_not_descendant(x, j):
            a.add(x)
    return a


def run_cbl_oracle(g: TieredGraph, record_transcript: bool = False) -> OracleResult:
    """Fixpoint sweep applying the three inference rules with exact d-separation.

    An unresolved pair keeps being revisited (with a growing conditioning set)
    until a full sweep makes no entry more informative. Within a sweep, all
    pairs see the matrix as it stood at the sweep start; the relations fired
    for a pair are joined, so the result does not depend on witness order.
    """
    fg = list(g.foreground)
    if len(fg) < 2:
        raise GraphError("need at least two foreground vertices")
    matrix = AncestralMatrix(fg)
    transcript = OracleTranscript() if record_transcript else None
    history: Optional[list[AncestralMatrix]] = [] if record_transcript else None

    n_queries = 0
    npairs = len(fg) * (len(fg) - 1) // 2
    max_passes = npairs * (len(fg) + 1)

    def ask(query: LazyQuery, a: set[int], sweep: int) -> bool:
        nonlocal n_queries
        n_queries += 1
        rest = a - ({query.w} if query.w is not None else set())
        if query.kind is QueryKind.MARGINAL_PAIR:
            answer = g.d_separated({query.i}, {query.j}, a)
        else:
            cond = rest | ({query.j} if query.include_j else set())
            answer = g.d_separated({query.w}, {query.i}, cond)
        if transcript is not None:
            transcript.record(query, answer, sweep)
        return answer

    passes = 0
    converged = False
    while not converged and passes < max_passes:
        snapshot = matrix.copy()
        if history is not None:
            history.append(snapshot)
        converged = True
        updates: list[tuple[int, int, RelationKind, dict]] = []
        for i, j in snapshot.undecided_pairs():
            a = _mutual_nondescendant_set(g, snapshot, i, j)
            if ask(LazyQuery(QueryKind.MARGINAL_PAIR, i, j), a, passes):
                updates.append(
                    (i, j, RelationKind.UNORDERED,
                     {"rule": "separation", "adjustment_set": sorted(a), "sweep": passes})
                )
                continue
            fired: list[tuple[RelationKind, int]] = []
            for w in sorted(a):
                sep_j_with_i = ask(LazyQuery(QueryKind.WITH_WITNESS, j, i, w, True), a, passes)
                sep_j_alone = ask(LazyQuery(QueryKind.WITH_WITNESS, j, i, w, False), a, passes)
                sep_i_with_j = ask(LazyQuery(QueryKind.WITH_WITNESS, i, j, w, True), a, passes)
                sep_i_alone = ask(LazyQuery(QueryKind.WITH_WITNESS, i, j, w, False), a, passes)
                if sep_j_with_i and not sep_j_alone:
                    # i deactivates the w--j dependence: i precedes j
                    fired.append((RelationKind.PRECEDES, w))
                if sep_i_with_j and not sep_i_alone:
                    fired.append((RelationKind.PRECEDED_BY, w))
                if not sep_j_with_i and sep_j_alone:
                    # i activates a w--j dependence: j cannot descend from i
                    fired.append((RelationKind.NOT_ANCESTOR, w))
                if not sep_i_with_j and sep_i_alone:
                    fired.append((RelationKind.NOT_DESCENDANT, w))
            decision = _join_fired(i, j, fired)
            if decision is not None:
                kind, rule, witness = decision
                updates.append(
                    (i, j, kind,
                     {"rule": rule, "witness": witness, "adjustment_set": sorted(a), "sweep": passes})
                )
        for i, j, kind, prov in updates:
            if matrix.update(i, j, kind, prov):
                converged = False
        passes += 1

    if history is not None:
        history.append(matrix.copy())
    return OracleResult(matrix, passes, n_queries, transcript, history)


def _join_fired(
    i: int, j: int, fired: list[tuple[RelationKind, int]]
) -> Optional[tuple[RelationKind, str, Optional[int]]]:
    """Combine every relation fired for one pair into a single sound claim.

    Deactivations (full orderings) dominate one-sided claims; the two one-sided
    claims together assert that neither variable descends from the other. The
    join is symmetric in witness order, so the sweep outcome is invariant
    under vertex relabeling.
    """
    if not fired:
        return None
    kinds = {kind for kind, _ in fired}
    if RelationKind.PRECEDES in kinds and RelationKind.PRECEDED_BY in kinds:
        raise GraphError(
            f"pair ({i}, {j}): both orderings fired a deactivation; "
            "the input graph cannot be faithful"
        )
    for target in (RelationKind.PRECEDES, RelationKind.PRECEDED_BY):
        if target in kinds:
            witness = min(w for kind, w in fired if kind is target)
            return target, "minimal_deactivation", witness
    if RelationKind.NOT_DESCENDANT in kinds and RelationKind.NOT_ANCESTOR in kinds:
        witness = min(w for _, w in fired)
        return RelationKind.UNORDERED, "minimal_activation_both", witness
    target = next(iter(kinds))
    witness = min(w for kind, w in fired if kind is target)
    return target, "minimal_activation", witness


def audit_transcript(g: TieredGraph, result: OracleResult) -> bool:
    """Replay a recorded run and verify the lazy-query discipline.

    Every witness must lie inside the mutual non-descendant set of its pair as
    known at the sweep the query was issued in.
    """
    if result.transcript is None or result.matrix_history is None:
        raise ValueError("run with record_transcript=True to audit")
    for query, _, sweep in result.transcript.entries:
        snapshot = result.matrix_history[min(sweep, len(result.matrix_history) - 1)]
        a = _mutual_nondescendant_set(g, snapshot, query.i, query.j)
        if query.kind is QueryKind.WITH_WITNESS:
            if query.w is None or query.w not in a:
                return False
        else:
            if query.w is not None:
                return False
    return True

"""Two-tier causal graphs: DAGs and ADMGs over a background and a foreground tier.

Graphs are immutable after construction, so d-separation queries and
reachability lookups are safe to share across threads.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence


class GraphError(ValueError):
    """Raised when a graph violates a structural invariant."""


class Tier(str, enum.Enum):
    BACKGROUND = "background"
    FOREGROUND = "foreground"
    LATENT = "latent"


@dataclass(frozen=True)
class Vertex:
    id: int
    tier: Tier
    name: str = ""

    def display_name(self) -> str:
        return self.name or f"v{self.id}"


class RelationKind(str, enum.Enum):
    """Pairwise ancestral relation for an ordered pair (i, j) with i > j.

    PRECEDES        i is an ancestor of j
    PRECEDED_BY     j is an ancestor of i
    NOT_DESCENDANT  i is not a descendant of j (i may or may not precede j)
    NOT_ANCESTOR    j is not a descendant of i
    UNORDERED       neither is an ancestor of the other
    """

    NA = "na"
    PRECEDES = "precedes"
    PRECEDED_BY = "preceded_by"
    NOT_DESCENDANT = "not_descendant"
    NOT_ANCESTOR = "not_ancestor"
    UNORDERED = "unordered"


#: Information content: NA < one-sided non-descendance < fully resolved.
_RANK = {
    RelationKind.NA: 0,
    RelationKind.NOT_DESCENDANT: 1,
    RelationKind.NOT_ANCESTOR: 1,
    RelationKind.PRECEDES: 2,
    RelationKind.PRECEDED_BY: 2,
    RelationKind.UNORDERED: 2,
}

_FLIP = {
    RelationKind.NA: RelationKind.NA,
    RelationKind.PRECEDES: RelationKind.PRECEDED_BY,
    RelationKind.PRECEDED_BY: RelationKind.PRECEDES,
    RelationKind.NOT_DESCENDANT: RelationKind.NOT_ANCESTOR,
    RelationKind.NOT_ANCESTOR: RelationKind.NOT_DESCENDANT,
    RelationKind.UNORDERED: RelationKind.UNORDERED,
}


def relation_rank(kind: RelationKind) -> int:
    return _RANK[kind]


def flip_relation(kind: RelationKind) -> RelationKind:
    """Relation for the pair read in the opposite order."""
    return _FLIP[kind]


def relations_consistent(old: RelationKind, new: RelationKind) -> bool:
    """Whether ``new`` can hold in a graph where ``old`` already holds.

    Both relations refer to the same ordered pair (i, j), i > j.
    """
    if old is RelationKind.NA or old == new:
        return True
    claims = {
        # (i not descendant of j, j not descendant of i); None = unconstrained
        RelationKind.PRECEDES: (True, False),
        RelationKind.PRECEDED_BY: (False, True),
        RelationKind.NOT_DESCENDANT: (True, None),
        RelationKind.NOT_ANCESTOR: (None, True),
        RelationKind.UNORDERED: (True, True),
    }
    a_old, b_old = claims[old]
    a_new, b_new = claims[new]

    def compat(x, y):
        return x is None or y is None or x == y

    return compat(a_old, a_new) and compat(b_old, b_new)


class TieredGraph:
    """ADMG over background and foreground vertices, with optional explicit latents.

    Invariants enforced at construction:

    * the directed part is acyclic;
    * no directed edge points from the foreground tier into the background tier;
    * every latent vertex has no parents and exactly two children;
    * bidirected edges connect observable (non-latent) vertices only.
    """

    def __init__(
        self,
        vertices: Sequence[Vertex],
        directed_edges: Iterable[tuple[int, int]] = (),
        bidirected_edges: Iterable[tuple[int, int]] = (),
    ):
        self._vertices = tuple(vertices)
        for idx, v in enumerate(self._vertices):
            if v.id != idx:
                raise GraphError(f"vertex ids must be dense 0..V-1; got id {v.id} at index {idx}")
        n = len(self._vertices)

        directed = set()
        for a, b in directed_edges:
            self._check_id(a)
            self._check_id(b)
            if a == b:
                raise GraphError(f"self-loop on vertex {a}")
            directed.add((int(a), int(b)))
        self._directed = frozenset(directed)

        bidirected = set()
        for a, b in bidirected_edges:
            self._check_id(a)
            self._check_id(b)
            if a == b:
                raise GraphError(f"bidirected self-loop on vertex {a}")
            if self._vertices[a].tier is Tier.LATENT or self._vertices[b].tier is Tier.LATENT:
                raise GraphError(f"bidirected edge ({a}, {b}) touches a latent vertex")
            bidirected.add((min(a, b), max(a, b)))
        self._bidirected = frozenset(bidirected)

        self._parents: list[list[int]] = [[] for _ in range(n)]
        self._children: list[list[int]] = [[] for _ in range(n)]
        for a, b in sorted(self._directed):
            self._children[a].append(b)
            self._parents[b].append(a)

        self._validate_tiers()
        self._topo_order = self._toposort()  # raises on cycles

        self._background = tuple(v.id for v in self._vertices if v.tier is Tier.BACKGROUND)
        self._foreground = tuple(v.id for v in self._vertices if v.tier is Tier.FOREGROUND)
        self._latent = tuple(v.id for v in self._vertices if v.tier is Tier.LATENT)
        self._desc_cache: dict[int, frozenset[int]] = {}

    # === construction helpers ===

    def _check_id(self, v: int) -> None:
        if not (0 <= v < len(self._vertices)):
            raise GraphError(f"unknown vertex id {v}")

    def _validate_tiers(self) -> None:
        for a, b in self._directed:
            if self._vertices[a].tier is Tier.FOREGROUND and self._vertices[b].tier is Tier.BACKGROUND:
                raise GraphError(f"edge {a}->{b} points from foreground into background")
        for v in self._vertices:
            if v.tier is Tier.LATENT:
                if self._parents[v.id]:
                    raise GraphError(f"latent vertex {v.id} has parents {self._parents[v.id]}")
                if len(self._children[v.id]) != 2:
                    raise GraphError(
                        f"latent vertex {v.id} must have exactly two children, "
                        f"got {len(self._children[v.id])}"
                    )

    def _toposort(self) -> tuple[int, ...]:
        n = len(self._vertices)
        indeg = [len(self._parents[v]) for v in range(n)]
        stack = [v for v in range(n) if indeg[v] == 0]
        order = []
        while stack:
            v = stack.pop()
            order.append(v)
            for ch in self._children[v]:
                indeg[ch] -= 1
                if indeg[ch] == 0:
                    stack.append(ch)
        if len(order) != n:
            cyclic = sorted(v for v in range(n) if indeg[v] > 0)
            raise GraphError(f"directed part has a cycle through vertices {cyclic}")
        return tuple(order)

    # === basic accessors ===

    @property
    def vertices(self) -> tuple[Vertex, ...]:
        return self._vertices

    @property
    def n_vertices(self) -> int:
        return len(self._vertices)

    @property
    def directed_edges(self) -> frozenset[tuple[int, int]]:
        return self._directed

    @property
    def bidirected_edges(self) -> frozenset[tuple[int, int]]:
        return self._bidirected

    @property
    def background(self) -> tuple[int, ...]:
        return self._background

    @property
    def foreground(self) -> tuple[int, ...]:
        return self._foreground

    @property
    def latents(self) -> tuple[int, ...]:
        return self._latent

    @property
    def observables(self) -> tuple[int, ...]:
        return tuple(v.id for v in self._vertices if v.tier is not Tier.LATENT)

    def tier(self, v: int) -> Tier:
        self._check_id(v)
        return self._vertices[v].tier

    def parents(self, v: int) -> tuple[int, ...]:
        self._check_id(v)
        return tuple(self._parents[v])

    def children(self, v: int) -> tuple[int, ...]:
        self._check_id(v)
        return tuple(self._children[v])

    def adjacent(self, a: int, b: int) -> bool:
        """Adjacency in the ADMG sense: directed either way or bidirected."""
        lo, hi = min(a, b), max(a, b)
        return (a, b) in self._directed or (b, a) in self._directed or (lo, hi) in self._bidirected

    def descendants(self, v: int) -> frozenset[int]:
        """All vertices reachable from v by directed edges, v excluded."""
        self._check_id(v)
        cached = self._desc_cache.get(v)
        if cached is not None:
            return cached
        seen: set[int] = set()
        stack = list(self._children[v])
        while stack:
            u = stack.pop()
            if u not in seen:
                seen.add(u)
                stack.extend(self._children[u])
        result = frozenset(seen)
        self._desc_cache[v] = result
        return result

    def ancestors(self, v: int) -> frozenset[int]:
        """All vertices with a directed path into v, v excluded."""
        self._check_id(v)
        seen: set[int] = set()
        stack = list(self._parents[v])
        while stack:
            u = stack.pop()
            if u not in seen:
                seen.add(u)
                stack.extend(self._parents[u])
        return frozenset(seen)

    def __eq__(self, other) -> bool:
        if not isinstance(other, TieredGraph):
            return NotImplemented
        return (
            self._vertices == other._vertices
            and self._directed == other._directed
            and self._bidirected == other._bidirected
        )

    def __repr__(self) -> str:
        return (
            f"TieredGraph(|Z|={len(self._background)}, |X|={len(self._foreground)}, "
            f"|U|={len(self._latent)}, directed={len(self._directed)}, "
            f"bidirected={len(self._bidirected)})"
        )

    # === canonical forms ===

    def to_latent_form(self) -> "TieredGraph":
        """Replace every bidirected edge by a fresh latent vertex with two children."""
        if not self._bidirected:
            return self
        vertices = list(self._vertices)
        directed = set(self._directed)
        for a, b in sorted(self._bidirected):
            u = len(vertices)
            vertices.append(Vertex(u, Tier.LATENT, f"U_{a}_{b}"))
            directed.add((u, a))
            directed.add((u, b))
        return TieredGraph(vertices, directed, ())

    def to_bidirected_form(self) -> "TieredGraph":
        """Replace every latent vertex by a bidirected edge between its children.

        Latent vertices are dropped; observable vertices are renumbered densely
        in their original order.
        """
        if not self._latent:
            return self
        keep = [v for v in self._vertices if v.tier is not Tier.LATENT]
        remap = {v.id: idx for idx, v in enumerate(keep)}
        vertices = [Vertex(remap[v.id], v.tier, v.name) for v in keep]
        directed = {
            (remap[a], remap[b])
            for a, b in self._directed
            if a in remap and b in remap
        }
        bidirected = {tuple(sorted((remap[a], remap[b]))) for a, b in self._bidirected}
        for u in self._latent:
            a, b = self._children[u]
            bidirected.add((min(remap[a], remap[b]), max(remap[a], remap[b])))
        return TieredGraph(vertices, directed, bidirected)

    # === d-separation ===

    def d_separated(self, a: Iterable[int] | int, b: Iterable[int] | int, c: Iterable[int] | int = ()) -> bool:
        """Whether every path between ``a`` and ``b`` is blocked given ``c``.

        ``a``, ``b`` and ``c`` must be disjoint sets of observable vertices.
        Bidirected edges are handled by evaluating on the latent-DAG form.
        """
        a_set = {a} if isinstance(a, int) else set(a)
        b_set = {b} if isinstance(b, int) else set(b)
        c_set = {c} if isinstance(c, int) else set(c)
        for s in (a_set, b_set, c_set):
            for v in s:
                self._check_id(v)
                if self._vertices[v].tier is Tier.LATENT:
                    raise GraphError(f"vertex {v} is latent; queries are over observables")
        if a_set & b_set or a_set & c_set or b_set & c_set:
            raise GraphError("query sets must be disjoint")
        if not a_set or not b_set:
            raise GraphError("query endpoint sets must be nonempty")
        g = self.to_latent_form()
        return bayes_ball_separated(g._parents, g._children, a_set, b_set, c_set)

    def true_relation(self, i: int, j: int) -> RelationKind:
        """Ground-truth ancestral relation between foreground vertices i and j.

        Returned for the pair as ordered (i, j): PRECEDES means i is an
        ancestor of j. Latent vertices never mediate ancestry (they have no
        parents, so no directed path passes through them).
        """
        if i == j:
            raise GraphError("true_relation needs two distinct vertices")
        for v in (i, j):
            self._check_id(v)
            if self._vertices[v].tier is not Tier.FOREGROUND:
                raise GraphError(f"vertex {v} is not foreground")
        if j in self.descendants(i):
            return RelationKind.PRECEDES
        if i in self.descendants(j):
            return RelationKind.PRECEDED_BY
        return RelationKind.UNORDERED

    # === identifiability ===

    def _nondescendant_closure(self, i: int) -> set[int]:
        """Background plus foreground non-descendants of i, i included."""
        desc = self.descendants(i)
        out = set(self._background)
        out.update(x for x in self._foreground if x != i and x not in desc)
        out.add(i)
        return out

    def valid_adjustment_set(self, i: int, j: int, adjustment: Iterable[int]) -> bool:
        """Back-door check: does ``adjustment`` block every path into ``i`` that
        reaches ``j``? Evaluated by removing i's outgoing edges and testing
        d-separation in the mutilated graph."""
        adj = set(adjustment)
        if i in adj or j in adj:
            raise GraphError("adjustment set must exclude the pair")
        g = self.to_latent_form()
        parents = [list(p) for p in g._parents]
        children = [[] if v == i else list(ch) for v, ch in enumerate(g._children)]
        for v in range(len(parents)):
            parents[v] = [p for p in parents[v] if p != i]
        return bayes_ball_separated(parents, children, {i}, {j}, adj)

    def check_identifiability(self) -> tuple[bool, str]:
        """Whether the full foreground order is recoverable from this graph.

        Two conditions are evaluated literally:

        (i)  for every foreground pair, no active path with arrowheads into
             both endpoints given the background set plus the pair's common
             foreground ancestors;
        (ii) for every ancestrally ordered pair (i precedes j), some vertex V
             adjacent to i among i's non-descendants is d-separated from j
             given the remaining non-descendants of i (i itself included).

        Returns the verdict plus a short report naming the first violation.
        """
        glat = self.to_latent_form()
        fg = self._foreground
        for idx_b, jj in enumerate(fg):
            for ii in fg[idx_b + 1:]:
                # condition (i): no residual confounding path for the pair
                common = (self.ancestors(ii) & self.ancestors(jj)) & set(fg)
                cond = set(self._background) | common
                if _backdoor_connected(glat, ii, jj, cond):
                    return False, f"condition (i) violated for pair ({ii}, {jj})"
        for i in fg:
            for j in fg:
                if i == j or j not in self.descendants(i):
                    continue
                nondesc = self._nondescendant_closure(i)
                witnesses = [v for v in sorted(nondesc - {i}) if self.adjacent(v, i)]
                found = False
                for v in witnesses:
                    cond = nondesc - {v}
                    if glat.d_separated({v}, {j}, cond):
                        found = True
                        break
                if not found:
                    return False, f"condition (ii) violated for pair ({i}, {j})"
        return True, "identifiable"

    # === serialization ===

    def to_json_dict(self) -> dict:
        return {
            "vertices": [
                {"id": v.id, "name": v.display_name(), "tier": v.tier.value}
                for v in self._vertices
            ],
            "directed_edges": sorted([a, b] for a, b in self._directed),
            "bidirected_edges": sorted([a, b] for a, b in self._bidirected),
        }

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_json_dict(), indent=indent)

    @staticmethod
    def from_json_dict(payload: Mapping) -> "TieredGraph":
        try:
            raw_vertices = payload["vertices"]
        except (KeyError, TypeError):
            raise GraphError("graph JSON must contain a 'vertices' list")
        vertices = []
        for k, rec in enumerate(raw_vertices):
            try:
                tier = Tier(rec["tier"])
            except (KeyError, ValueError, TypeError):
                raise GraphError(f"vertices[{k}]: missing or invalid 'tier'")
            if "id" not in rec:
                raise GraphError(f"vertices[{k}]: missing 'id'")
            vertices.append(Vertex(int(rec["id"]), tier, str(rec.get("name", ""))))
        directed = [tuple(e) for e in payload.get("directed_edges", [])]
        bidirected = [tuple(e) for e in payload.get("bidirected_edges", [])]
        for k, e in enumerate(directed):
            if len(e) != 2:
                raise GraphError(f"directed_edges[{k}]: expected a pair, got {e!r}")
        for k, e in enumerate(bidirected):
            if len(e) != 2:
                raise GraphError(f"bidirected_edges[{k}]: expected a pair, got {e!r}")
        return TieredGraph(vertices, directed, bidirected)

    @staticmethod
    def from_json(text: str) -> "TieredGraph":
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as exc:
            raise GraphError(f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}")
        return TieredGraph.from_json_dict(payload)


def canonicalize(g: TieredGraph, target: str = "latent") -> TieredGraph:
    """Convert between the bidirected-edge and explicit-latent representations.

    Both encode the same independence model over observables; ``target``
    selects the output form ("latent" or "bidirected").
    """
    if target == "latent":
        return g.to_latent_form()
    if target == "bidirected":
        return g.to_bidirected_form()
    raise ValueError(f"unknown canonical form {target!r}")


def bayes_ball_separated(
    parents: Sequence[Sequence[int]],
    children: Sequence[Sequence[int]],
    a: set[int],
    b: set[int],
    c: set[int],
) -> bool:
    """Reachability test for d-separation on a DAG given as adjacency lists.

    Standard two-direction traversal: a (vertex, direction) state is expanded
    at most once, so each query costs O(V + E).
    """
    n = len(parents)
    in_c = bytearray(n)
    for v in c:
        in_c[v] = 1
    # ancestors of c (including c): colliders may pass only if they are here
    anc_c = bytearray(n)
    stack = list(c)
    while stack:
        v = stack.pop()
        if not anc_c[v]:
            anc_c[v] = 1
            stack.extend(parents[v])

    UP, DOWN = 0, 1
    visited_up = bytearray(n)
    visited_down = bytearray(n)
    stack2 = [(s, UP) for s in a]
    while stack2:
        v, direction = stack2.pop()
        if direction == UP:
            if visited_up[v]:
                continue
            visited_up[v] = 1
        else:
            if visited_down[v]:
                continue
            visited_down[v] = 1
        if v in b:
            return False
        if direction == UP:
            # reached against an edge (from a child or as a source)
            if not in_c[v]:
                for p in parents[v]:
                    stack2.append((p, UP))
                for ch in children[v]:
                    stack2.append((ch, DOWN))
        else:
            # reached along an edge (from a parent)
            if not in_c[v]:
                for ch in children[v]:
                    stack2.append((ch, DOWN))
            if anc_c[v]:
                # collider (or ancestor of conditioned collider): bounce back up
                for p in parents[v]:
                    stack2.append((p, UP))
    return True


def _backdoor_connected(glat: TieredGraph, i: int, j: int, cond: set[int]) -> bool:
    """Active path with arrowheads into both i and j, given ``cond``.

    Removing the outgoing edges of both endpoints leaves exactly the paths
    that enter each endpoint head-on (confounding paths); activeness is then
    ordinary d-connection in the mutilated graph.
    """
    drop = {i, j}
    parents = [[p for p in plist if True] for plist in glat._parents]
    children = [list(ch) for ch in glat._children]
    for v in drop:
        for ch in children[v]:
            parents[ch] = [p for p in parents[ch] if p != v]
        children[v] = []
    cond = cond - drop
    return not bayes_ball_separated(parents, children, {i}, {j}, cond)


class AncestralMatrix:
    """Lower-triangular record of pairwise relations among foreground vertices.

    Entries are keyed by (i, j) with i > j and only ever gain information:
    an update that would lower the rank, or contradict the stored relation,
    is rejected.
    """

    def __init__(self, foreground_ids: Iterable[int]):
        self._ids = tuple(sorted(set(foreground_ids)))
        if len(self._ids) < 2:
            raise ValueError("need at least two foreground vertices")
        self._entries: dict[tuple[int, int], RelationKind] = {
            (i, j): RelationKind.NA for j, i in _lower_pairs(self._ids)
        }
        self._provenance: dict[tuple[int, int], dict] = {}

    @property
    def foreground_ids(self) -> tuple[int, ...]:
        return self._ids

    def pairs(self) -> list[tuple[int, int]]:
        """All (i, j) keys with i > j, ascending in (j, i)."""
        return [(i, j) for j, i in _lower_pairs(self._ids)]

    def _key(self, a: int, b: int) -> tuple[int, int]:
        key = (max(a, b), min(a, b))
        if key not in self._entries:
            raise KeyError(f"pair {key} not in matrix over {self._ids}")
        return key

    def get(self, a: int, b: int) -> RelationKind:
        """Relation expressed for the ordered pair (a, b)."""
        key = self._key(a, b)
        kind = self._entries[key]
        return kind if (a, b) == key else flip_relation(kind)

    def provenance(self, a: int, b: int) -> dict | None:
        return self._provenance.get(self._key(a, b))

    def update(self, a: int, b: int, kind: RelationKind, provenance: dict | None = None) -> bool:
        """Record ``kind`` for the ordered pair (a, b) if it adds information.

        Returns True when the entry changed. Updates that lose information are
        ignored; updates that contradict the stored relation raise.
        """
        key = self._key(a, b)
        if (a, b) != key:
            kind = flip_relation(kind)
        current = self._entries[key]
        if not relations_consistent(current, kind):
            raise ValueError(
                f"update {kind.value} contradicts stored {current.value} for pair {key}"
            )
        if _RANK[kind] <= _RANK[current]:
            return False
        self._entries[key] = kind
        if provenance is not None:
            self._provenance[key] = provenance
        return True

    def knows_not_descendant(self, a: int, b: int) -> bool:
        """True when the matrix implies a is not a descendant of b."""
        return self.get(a, b) in (
            RelationKind.PRECEDES,
            RelationKind.NOT_DESCENDANT,
            RelationKind.UNORDERED,
        )

    def decided(self, a: int, b: int) -> bool:
        return _RANK[self._entries[self._key(a, b)]] == 2

    def undecided_pairs(self) -> list[tuple[int, int]]:
        return [key for key in self.pairs() if _RANK[self._entries[key]] < 2]

    def fully_resolved(self) -> bool:
        return not self.undecided_pairs()

    def na_pairs(self) -> list[tuple[int, int]]:
        return [key for key in self.pairs() if self._entries[key] is RelationKind.NA]

    def copy(self) -> "AncestralMatrix":
        out = AncestralMatrix(self._ids)
        out._entries = dict(self._entries)
        out._provenance = dict(self._provenance)
        return out

    def items(self) -> list[tuple[tuple[int, int], RelationKind]]:
        return [(key, self._entries[key]) for key in self.pairs()]

    def __eq__(self, other) -> bool:
        if not isinstance(other, AncestralMatrix):
            return NotImplemented
        return self._ids == other._ids and self._entries == other._entries

    def to_json_dict(self, names: Mapping[int, str] | None = None) -> dict:
        def label(v: int):
            return names[v] if names else v

        entries = []
        for (i, j), kind in self.items():
            rec: dict = {"i": label(i), "j": label(j), "relation": kind.value}
            prov = self._provenance.get((i, j))
            if prov:
                prov = dict(prov)
                if names:
                    # vertex-valued fields become human-readable labels
                    if isinstance(prov.get("witness"), int):
                        prov["witness"] = names.get(prov["witness"], prov["witness"])
                    if isinstance(prov.get("adjustment_set"), (list, tuple)):
                        prov["adjustment_set"] = [
                            names.get(v, v) for v in prov["adjustment_set"]
                        ]
                rec["provenance"] = _jsonable(prov, names)
            entries.append(rec)
        return {"foreground": [label(v) for v in self._ids], "entries": entries}


def _lower_pairs(ids: Sequence[int]):
    for bi, j in enumerate(ids):
        for i in ids[bi + 1:]:
            yield j, i


def _jsonable(obj, names: Mapping[int, str] | None):
    if isinstance(obj, dict):
        return {k: _jsonable(v, names) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, set, frozenset)):
        items = sorted(obj) if isinstance(obj, (set, frozenset)) else list(obj)
        return [_jsonable(v, names) for v in items]
    if isinstance(obj, (int, float, str, bool)) or obj is None:
        return obj
    if isinstance(obj, enum.Enum):
        return obj.value
    return str(obj)

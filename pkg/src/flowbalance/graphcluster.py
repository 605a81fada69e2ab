"""Digraphs extracted from balanced matrices, component censuses and the
strong-component hierarchical clustering.

The hierarchy sweeps the distinct positive entries of a matrix in
decreasing order. At each level every arc of at least that weight is present
and the clusters are the strong components of that digraph. Because arcs
only accumulate as the level drops, the clusters form a nested merge tree.
"""
from __future__ import annotations

import enum
import json
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .flowmatrix import DEFAULT_UNIT_TOLERANCE, FlowMatrix, RegionId


@dataclass(frozen=True)
class ThresholdDigraph:
    """Weighted digraph on n indices; arcs are parallel arrays."""

    n: int
    src: np.ndarray
    dst: np.ndarray
    weight: np.ndarray
    labels: tuple[RegionId, ...]

    @property
    def arcs(self) -> list[tuple[int, int, float]]:
        return [(int(s), int(d), float(w)) for s, d, w in zip(self.src, self.dst, self.weight)]

    @property
    def n_arcs(self) -> int:
        return int(self.src.size)

    def successors(self) -> list[list[int]]:
        adj: list[list[int]] = [[] for _ in range(self.n)]
        for s, d in zip(self.src.tolist(), self.dst.tolist()):
            adj[s].append(d)
        return adj


def _digraph_from_mask(b: FlowMatrix, mask: np.ndarray, weights: np.ndarray | None = None) -> ThresholdDigraph:
    src, dst = np.nonzero(mask)
    w = np.ones(src.size) if weights is None else weights[src, dst].astype(np.float64)
    return ThresholdDigraph(b.n, src.astype(np.int64), dst.astype(np.int64), w, b.labels)


def unit_entry_digraph(b: FlowMatrix, unit_tolerance: float = DEFAULT_UNIT_TOLERANCE) -> ThresholdDigraph:
    """Arcs i -> j (weight 1) for every cell within ``unit_tolerance`` of 1."""
    return _digraph_from_mask(b, np.abs(b.entries - 1.0) <= unit_tolerance)


def threshold_digraph(b: FlowMatrix, t: float, allow_diagonal: bool = False) -> ThresholdDigraph:
    """Arcs i -> j weighted by ``b[i, j]`` for every positive cell ``>= t``."""
    if t < 0:
        raise ValueError(f"threshold must be non-negative, got {t}")
    a = b.entries
    mask = (a >= t) & (a > 0)
    if not allow_diagonal:
        np.fill_diagonal(mask, False)
    return _digraph_from_mask(b, mask, a)


# -- partitions ---------------------------------------------------------------

@dataclass(frozen=True)
class Partition:
    """Disjoint cover of ``range(n)``; component ids are smallest members."""

    assignment: np.ndarray
    components: dict[int, frozenset[int]]

    @classmethod
    def from_assignment(cls, labels: Sequence[int]) -> "Partition":
        """Canonicalize arbitrary group labels to smallest-member ids."""
        labels = np.asarray(labels)
        groups: dict = {}
        for i, g in enumerate(labels.tolist()):
            groups.setdefault(g, []).append(i)
        comps = {}
        assignment = np.empty(labels.size, dtype=np.int64)
        for members in groups.values():
            cid = members[0]
            comps[cid] = frozenset(members)
            assignment[members] = cid
        return cls(assignment, dict(sorted(comps.items())))

    @classmethod
    def from_sets(cls, n: int, sets) -> "Partition":
        labels = np.arange(n)
        for members in sets:
            members = sorted(members)
            labels[members] = members[0]
        return cls.from_assignment(labels)

    @property
    def n(self) -> int:
        return int(self.assignment.size)

    def __len__(self):
        return len(self.components)

    def sizes(self) -> dict[int, int]:
        return {cid: len(m) for cid, m in self.components.items()}

    def as_sets(self) -> set[frozenset[int]]:
        return set(self.components.values())

    def __eq__(self, other):
        if not isinstance(other, Partition):
            return NotImplemented
        return np.array_equal(self.assignment, other.assignment)

    def largest(self) -> frozenset[int]:
        return max(self.components.values(), key=lambda m: (len(m), -min(m)))


def _tarjan(n: int, adj: list[list[int]]) -> list[list[int]]:
    """Iterative Tarjan; components come out in reverse topological order."""
    index = [-1] * n
    low = [0] * n
    on_stack = [False] * n
    stack: list[int] = []
    comps: list[list[int]] = []
    counter = 0
    for root in range(n):
        if index[root] != -1:
            continue
        work = [(root, 0)]
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack[root] = True
        while work:
            v, i = work[-1]
            succ = adj[v]
            if i < len(succ):
                work[-1] = (v, i + 1)
                w = succ[i]
                if index[w] == -1:
                    index[w] = low[w] = counter
                    counter += 1
                    stack.append(w)
                    on_stack[w] = True
                    work.append((w, 0))
                elif on_stack[w] and index[w] < low[v]:
                    low[v] = index[w]
                continue
            work.pop()
            if work:
                u = work[-1][0]
                if low[v] < low[u]:
                    low[u] = low[v]
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack[w] = False
                    comp.append(w)
                    if w == v:
                        break
                comps.append(comp)
    return comps


def strong_components(g: ThresholdDigraph) -> Partition:
    labels = np.empty(g.n, dtype=np.int64)
    for k, comp in enumerate(_tarjan(g.n, g.successors())):
        labels[comp] = k
    return Partition.from_assignment(labels)


class UnionFind:
    """Disjoint sets over ``range(n)`` with path halving and union by size."""

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.size = [1] * n

    def find(self, x: int) -> int:
        parent = self.parent
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(self, a: int, b: int) -> int:
        a, b = self.find(a), self.find(b)
        if a == b:
            return a
        if self.size[a] < self.size[b]:
            a, b = b, a
        self.parent[b] = a
        self.size[a] += self.size[b]
        return a


def weak_components(g: ThresholdDigraph) -> Partition:
    uf = UnionFind(g.n)
    for s, d in zip(g.src.tolist(), g.dst.tolist()):
        uf.union(s, d)
    return Partition.from_assignment([uf.find(i) for i in range(g.n)])


# -- census -------------------------------------------------------------------

class IsolatedClass(str, enum.Enum):
    UNIT_IN_ROW_AND_COLUMN = "UnitInRowAndColumn"
    UNIT_IN_ROW_XOR_COLUMN = "UnitInRowXorColumn"
    NO_UNIT = "NoUnit"


@dataclass(frozen=True)
class ComponentCensus:
    partition: Partition
    labels: tuple[RegionId, ...]
    size_histogram: dict[int, int]
    interstate_components: list[int]
    isolated_classification: dict[int, IsolatedClass]

    def classification_counts(self) -> dict[str, int]:
        counts = Counter(c.value for c in self.isolated_classification.values())
        return {c.value: counts.get(c.value, 0) for c in IsolatedClass}

    def interstate_by_size(self) -> dict[int, int]:
        comps = self.partition.components
        return dict(sorted(Counter(len(comps[c]) for c in self.interstate_components).items()))

    def to_dict(self) -> dict:
        interstate = set(self.interstate_components)
        comps = []
        for cid, members in self.partition.components.items():
            comps.append({
                "id": cid,
                "size": len(members),
                "members": [self.labels[i].code for i in sorted(members)],
                "interstate": cid in interstate,
            })
        return {
            "size_histogram": {str(k): v for k, v in self.size_histogram.items()},
            "interstate_components": list(self.interstate_components),
            "interstate_by_size": {str(k): v for k, v in self.interstate_by_size().items()},
            "isolated_classification": self.classification_counts(),
            "isolated_members": {
                c.value: [self.labels[i].code for i, k in self.isolated_classification.items() if k is c]
                for c in IsolatedClass
            },
            "components": comps,
        }


def component_census(p: Partition, g: ThresholdDigraph, b: FlowMatrix,
                     unit_tolerance: float = DEFAULT_UNIT_TOLERANCE) -> ComponentCensus:
    """Size histogram, interstate components and singleton classification.

    A component is interstate when its members carry at least two distinct
    state prefixes. Singletons are classified by whether ``b`` has a unit
    entry in their row, their column, both or neither.
    """
    if not (p.n == g.n == b.n):
        raise ValueError(f"inconsistent sizes: partition {p.n}, digraph {g.n}, matrix {b.n}")
    labels = b.labels
    hist = Counter(len(m) for m in p.components.values())
    interstate = [cid for cid, members in p.components.items()
                  if len({labels[i].state_prefix for i in members}) >= 2]
    unit = np.abs(b.entries - 1.0) <= unit_tolerance
    in_row = unit.any(axis=1)
    in_col = unit.any(axis=0)
    isolated = {}
    for cid, members in p.components.items():
        if len(members) != 1:
            continue
        if in_row[cid] and in_col[cid]:
            isolated[cid] = IsolatedClass.UNIT_IN_ROW_AND_COLUMN
        elif in_row[cid] or in_col[cid]:
            isolated[cid] = IsolatedClass.UNIT_IN_ROW_XOR_COLUMN
        else:
            isolated[cid] = IsolatedClass.NO_UNIT
    return ComponentCensus(p, labels, dict(sorted(hist.items())), interstate, isolated)


# -- hierarchy ----------------------------------------------------------------

@dataclass(frozen=True)
class Cluster:
    members: frozenset[int]
    children: tuple[frozenset[int], ...]


@dataclass(frozen=True)
class MergeLevel:
    threshold: float
    clusters: tuple[Cluster, ...]


@dataclass(frozen=True)
class Dendrogram:
    """Merge tree of the strong-component sweep.

    ``levels`` holds one entry per threshold at which clusters fused, in
    strictly decreasing threshold order. ``first_merge_level[i]`` is ``None``
    for a leaf that never joins a cluster of size >= 2.
    """

    leaves: tuple[RegionId, ...]
    levels: tuple[MergeLevel, ...]
    first_merge_level: tuple[float | None, ...]

    @property
    def n(self) -> int:
        return len(self.leaves)

    @property
    def merges(self) -> list[tuple[float, list[frozenset[int]]]]:
        return [(lv.threshold, [c.members for c in lv.clusters]) for lv in self.levels]

    @property
    def thresholds(self) -> list[float]:
        return [lv.threshold for lv in self.levels]


class _Condensation:
    """Strong components of a growing digraph, maintained incrementally.

    Components are union-find roots. Between components the graph is a DAG
    and a topological order is kept up to date with the Pearce-Kelly
    reordering; an arc that closes a cycle sets ``dirty`` and the components
    are rebuilt from scratch once the current level is complete.
    """

    def __init__(self, n: int):
        self.n = n
        self.uf = UnionFind(n)
        self.out: dict[int, set[int]] = {i: set() for i in range(n)}
        self.inc: dict[int, set[int]] = {i: set() for i in range(n)}
        self.order = {i: i for i in range(n)}
        self.dirty = False

    def add_arc(self, u: int, v: int) -> None:
        u, v = self.uf.find(u), self.uf.find(v)
        if u == v or v in self.out[u]:
            return
        self.out[u].add(v)
        self.inc[v].add(u)
        if self.dirty:
            return
        lb, ub = self.order[v], self.order[u]
        if lb > ub:
            return
        # forward from v within the affected window
        order = self.order
        fwd = {v}
        stack = [v]
        while stack:
            x = stack.pop()
            for y in self.out[x]:
                if y == u:
                    self.dirty = True
                    return
                if y not in fwd and order[y] < ub:
                    fwd.add(y)
                    stack.append(y)
        bwd = {u}
        stack = [u]
        while stack:
            x = stack.pop()
            for y in self.inc[x]:
                if y not in bwd and order[y] > lb:
                    bwd.add(y)
                    stack.append(y)
        moved = sorted(bwd, key=order.__getitem__) + sorted(fwd, key=order.__getitem__)
        slots = sorted(order[x] for x in moved)
        for x, pos in zip(moved, slots):
            order[x] = pos

    def rebuild(self) -> list[list[int]]:
        """Contract cycles; returns the old roots fused into each new cluster."""
        roots = sorted(self.out)
        pos = {r: k for k, r in enumerate(roots)}
        adj = [[pos[y] for y in self.out[r]] for r in roots]
        comps = _tarjan(len(roots), adj)
        merged = []
        new_order = {}
        # Tarjan emits sinks first
        for rank, comp in enumerate(reversed(comps)):
            olds = [roots[k] for k in comp]
            root = olds[0]
            for x in olds[1:]:
                root = self.uf.union(root, x)
            new_order[root] = rank
            if len(olds) > 1:
                merged.append(olds)
        out: dict[int, set[int]] = {}
        inc: dict[int, set[int]] = {}
        for r in roots:
            a = self.uf.find(r)
            out.setdefault(a, set())
            inc.setdefault(a, set())
        for r in roots:
            a = self.uf.find(r)
            for y in self.out[r]:
                b = self.uf.find(y)
                if a != b:
                    out[a].add(b)
                    inc[b].add(a)
        self.out, self.inc, self.order = out, inc, new_order
        self.dirty = False
        return merged


def strong_component_hierarchy(b: FlowMatrix) -> Dendrogram:
    """Strong-component hierarchical clustering of a non-negative matrix.

    All arcs of equal weight enter at the same level. Diagonal cells are
    ignored since self-loops never change strong components.
    """
    a = b.entries
    n = b.n
    if np.any(a < 0):
        raise ValueError("matrix must be non-negative")
    offdiag = a.copy()
    np.fill_diagonal(offdiag, 0.0)
    src, dst = np.nonzero(offdiag > 0)
    w = offdiag[src, dst]
    order = np.lexsort((dst, src, -w))
    src, dst, w = src[order].tolist(), dst[order].tolist(), w[order].tolist()

    members: dict[int, frozenset[int]] = {i: frozenset([i]) for i in range(n)}
    first: list[float | None] = [None] * n
    cond = _Condensation(n)
    levels = []
    k = 0
    m = len(w)
    while k < m:
        t = w[k]
        while k < m and w[k] == t:
            cond.add_arc(src[k], dst[k])
            k += 1
        if not cond.dirty:
            continue
        clusters = []
        for olds in cond.rebuild():
            children = sorted((members.pop(o) for o in olds), key=min)
            merged = frozenset().union(*children)
            root = cond.uf.find(olds[0])
            members[root] = merged
            for i in merged:
                if first[i] is None:
                    first[i] = t
            clusters.append(Cluster(merged, tuple(children)))
        clusters.sort(key=lambda c: min(c.members))
        levels.append(MergeLevel(float(t), tuple(clusters)))
    return Dendrogram(b.labels, tuple(levels), tuple(first))


def cut_dendrogram(d: Dendrogram, t: float) -> Partition:
    """Clusters after applying every merge at a level ``>= t``."""
    uf = UnionFind(d.n)
    for lv in d.levels:
        if lv.threshold < t:
            break
        for c in lv.clusters:
            it = iter(c.members)
            first = next(it)
            for x in it:
                uf.union(first, x)
    return Partition.from_assignment([uf.find(i) for i in range(d.n)])


def cosmopolitan_ranking(d: Dendrogram) -> list[tuple[RegionId, float | None]]:
    """Leaves by ascending first merge level; never-merged leaves last.

    The earliest entries join the hierarchy only at the weakest levels.
    """
    idx = sorted(range(d.n), key=lambda i: (d.first_merge_level[i] is None, d.first_merge_level[i] or 0.0, i))
    return [(d.leaves[i], d.first_merge_level[i]) for i in idx]


# -- export -------------------------------------------------------------------

def _tree(d: Dendrogram) -> list[dict]:
    """Nested node dicts; roots in order of their smallest member."""
    nodes: dict[frozenset[int], dict] = {}
    for i, leaf in enumerate(d.leaves):
        nodes[frozenset([i])] = {"label": leaf.code, "threshold": None, "members": [leaf.code]}
    for lv in d.levels:
        for c in lv.clusters:
            nodes[c.members] = {
                "threshold": lv.threshold,
                "members": [d.leaves[i].code for i in sorted(c.members)],
                "children": [nodes.pop(ch) for ch in c.children],
            }
    return [nodes[k] for k in sorted(nodes, key=min)]


def dendrogram_to_dict(d: Dendrogram) -> dict:
    return {
        "leaves": [r.code for r in d.leaves],
        "first_merge_level": {
            r.code: ("never" if lvl is None else lvl) for r, lvl in zip(d.leaves, d.first_merge_level)
        },
        "merges": [
            {"threshold": lv.threshold, "clusters": [[d.leaves[i].code for i in sorted(c.members)] for c in lv.clusters]}
            for lv in d.levels
        ],
        "roots": _tree(d),
    }


def dendrogram_to_json(d: Dendrogram, **kwargs) -> str:
    return json.dumps(dendrogram_to_dict(d), **kwargs)


def _newick_label(code: str) -> str:
    if any(ch in code for ch in " ()[]':;,"):
        return "'" + code.replace("'", "''") + "'"
    return code


def _newick_node(node: dict) -> str:
    if "children" not in node:
        return _newick_label(node["label"])
    inner = ",".join(_newick_node(ch) for ch in node["children"])
    return f"({inner})[&level={node['threshold']!r}]"


def dendrogram_to_newick(d: Dendrogram) -> str:
    """Newick string; internal nodes carry ``[&level=t]`` annotations.

    Disconnected roots are joined under an unannotated top node.
    """
    roots = _tree(d)
    if len(roots) == 1:
        return _newick_node(roots[0]) + ";"
    return "(" + ",".join(_newick_node(r) for r in roots) + ");"

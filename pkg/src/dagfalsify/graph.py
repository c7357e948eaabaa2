"""Labeled DAGs, d-separation, parental triples and node permutations."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, NamedTuple, Sequence

import numpy as np

Edge = tuple[int, int]


class GraphError(ValueError):
    """Raised for malformed graphs or mismatched graph operations."""


class CycleError(GraphError):
    def __init__(self, cycle: Sequence[int], names: Sequence[str] | None = None):
        self.cycle = list(cycle)
        labels = [names[c] for c in cycle] if names else [str(c) for c in cycle]
        super().__init__("graph contains a cycle: " + " -> ".join(labels + labels[:1]))


class ParentalTriple(NamedTuple):
    """One graph-implied independence ``X_i _||_ X_j | X_z`` with ``z = pa(i)``."""

    i: int
    j: int
    z: tuple[int, ...]

    def ci_key(self) -> tuple[int, int, tuple[int, ...]]:
        """Symmetric key of the CI statement (the pair is unordered)."""
        a, b = (self.i, self.j) if self.i < self.j else (self.j, self.i)
        return a, b, self.z


@dataclass(frozen=True)
class Dag:
    """Immutable DAG over nodes ``0..n-1``.

    Parameters
    ----------
    n : int
        Number of nodes.
    edges : iterable of (int, int)
        Directed edges ``(i, j)`` meaning ``i -> j``.
    node_names : sequence of str, optional
        Distinct names bound to the node indices.
    """

    n: int
    edges: frozenset[Edge] = field(default_factory=frozenset)
    node_names: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.n < 1:
            raise GraphError(f"a graph needs at least one node, got n={self.n}")
        edges = frozenset((int(a), int(b)) for a, b in self.edges)
        for a, b in edges:
            if not (0 <= a < self.n and 0 <= b < self.n):
                raise GraphError(f"edge ({a}, {b}) has an endpoint outside [0, {self.n})")
            if a == b:
                raise GraphError(f"self-loop on node {a}")
        object.__setattr__(self, "edges", edges)
        if self.node_names is not None:
            names = tuple(str(x) for x in self.node_names)
            if len(names) != self.n or len(set(names)) != self.n:
                raise GraphError("node_names must hold n distinct names")
            object.__setattr__(self, "node_names", names)
        cycle = _find_cycle(self.n, self._children)
        if cycle is not None:
            raise CycleError(cycle, self.node_names)

    @classmethod
    def from_adjacency(cls, adj, node_names=None) -> "Dag":
        adj = np.asarray(adj)
        edges = {(int(a), int(b)) for a, b in zip(*np.nonzero(adj))}
        return cls(adj.shape[0], frozenset(edges), node_names)

    def to_adjacency(self) -> np.ndarray:
        adj = np.zeros((self.n, self.n), dtype=int)
        for a, b in self.edges:
            adj[a, b] = 1
        return adj

    def name(self, i: int) -> str:
        return self.node_names[i] if self.node_names else str(i)

    def with_edges(self, edges: Iterable[Edge]) -> "Dag":
        return Dag(self.n, frozenset(edges), self.node_names)

    def subgraph(self, keep: Sequence[int]) -> "Dag":
        """Induced subgraph on ``keep``, reindexed in the given order."""
        index = {old: new for new, old in enumerate(keep)}
        edges = {(index[a], index[b]) for a, b in self.edges if a in index and b in index}
        names = tuple(self.name(k) for k in keep) if self.node_names else None
        return Dag(len(keep), frozenset(edges), names)

    # cached structure; safe because instances never change
    @cached_property
    def _parents(self) -> tuple[frozenset[int], ...]:
        pa: list[set[int]] = [set() for _ in range(self.n)]
        for a, b in self.edges:
            pa[b].add(a)
        return tuple(frozenset(p) for p in pa)

    @cached_property
    def _children(self) -> tuple[frozenset[int], ...]:
        ch: list[set[int]] = [set() for _ in range(self.n)]
        for a, b in self.edges:
            ch[a].add(b)
        return tuple(frozenset(c) for c in ch)

    @cached_property
    def topological_order(self) -> tuple[int, ...]:
        indeg = [len(p) for p in self._parents]
        ready = sorted(i for i in range(self.n) if indeg[i] == 0)
        order = []
        while ready:
            v = ready.pop(0)
            order.append(v)
            for c in sorted(self._children[v]):
                indeg[c] -= 1
                if indeg[c] == 0:
                    ready.append(c)
        return tuple(order)

    @cached_property
    def _descendant_masks(self) -> tuple[int, ...]:
        # bit k of masks[i] is set iff k is a strict descendant of i
        masks = [0] * self.n
        for v in reversed(self.topological_order):
            m = 0
            for c in self._children[v]:
                m |= (1 << c) | masks[c]
            masks[v] = m
        return tuple(masks)

    @cached_property
    def _ancestor_masks(self) -> tuple[int, ...]:
        masks = [0] * self.n
        for v in self.topological_order:
            m = 0
            for p in self._parents[v]:
                m |= (1 << p) | masks[p]
            masks[v] = m
        return tuple(masks)

    @cached_property
    def _dsep_memo(self) -> dict:
        return {}

    @cached_property
    def skeleton(self) -> frozenset[tuple[int, int]]:
        return frozenset((min(a, b), max(a, b)) for a, b in self.edges)

    @cached_property
    def v_structures(self) -> frozenset[tuple[int, int, int]]:
        """Unshielded colliders ``(a, c, b)`` with ``a -> c <- b`` and ``a < b``."""
        skel = self.skeleton
        out = set()
        for c in range(self.n):
            for a, b in itertools.combinations(sorted(self._parents[c]), 2):
                if (a, b) not in skel:
                    out.add((a, c, b))
        return frozenset(out)

    @cached_property
    def _triples(self) -> tuple[ParentalTriple, ...]:
        out = []
        for i in range(self.n):
            pa = self._parents[i]
            z = tuple(sorted(pa))
            for j in sorted(non_descendants(self, i)):
                if j not in pa:
                    out.append(ParentalTriple(i, j, z))
        return tuple(out)


def _bits(mask: int) -> set[int]:
    out = set()
    k = 0
    while mask:
        if mask & 1:
            out.add(k)
        mask >>= 1
        k += 1
    return out


def _find_cycle(n: int, children: Sequence[Iterable[int]]) -> list[int] | None:
    WHITE, GREY, BLACK = 0, 1, 2
    color = [WHITE] * n
    parent = [-1] * n
    for root in range(n):
        if color[root] != WHITE:
            continue
        stack = [(root, iter(sorted(children[root])))]
        color[root] = GREY
        while stack:
            v, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                color[v] = BLACK
                stack.pop()
                continue
            if color[nxt] == GREY:
                cycle = [v]
                while cycle[-1] != nxt:
                    cycle.append(parent[cycle[-1]])
                return cycle[::-1]
            if color[nxt] == WHITE:
                parent[nxt] = v
                color[nxt] = GREY
                stack.append((nxt, iter(sorted(children[nxt]))))
    return None


def _check_node(g: Dag, i: int) -> None:
    if not 0 <= i < g.n:
        raise GraphError(f"node {i} outside [0, {g.n})")


def _check_same_size(g1: Dag, g2: Dag) -> None:
    if g1.n != g2.n:
        raise GraphError(f"graphs differ in size: {g1.n} vs {g2.n}")


def parents(g: Dag, i: int) -> set[int]:
    _check_node(g, i)
    return set(g._parents[i])


def children(g: Dag, i: int) -> set[int]:
    _check_node(g, i)
    return set(g._children[i])


def ancestors(g: Dag, i: int) -> set[int]:
    _check_node(g, i)
    return _bits(g._ancestor_masks[i])


def descendants(g: Dag, i: int) -> set[int]:
    _check_node(g, i)
    return _bits(g._descendant_masks[i])


def non_descendants(g: Dag, i: int) -> set[int]:
    """All ``k != i`` not reachable from ``i`` along directed edges."""
    _check_node(g, i)
    full = (1 << g.n) - 1
    return _bits(full & ~g._descendant_masks[i] & ~(1 << i))


def d_separated(g: Dag, i: int, j: int, z: Iterable[int] = ()) -> bool:
    """Whether ``z`` d-separates ``i`` and ``j`` in ``g``.

    Uses the moralized ancestral graph: ``i`` and ``j`` are d-separated by
    ``z`` iff they are disconnected in the moral graph of the ancestral set
    of ``{i, j} | z`` after deleting ``z``.
    """
    zs = frozenset(z)
    _check_node(g, i)
    _check_node(g, j)
    for k in zs:
        _check_node(g, k)
    if i == j or i in zs or j in zs:
        raise GraphError("d-separation query needs distinct i, j outside z")
    key = (min(i, j), max(i, j), zs)
    memo = g._dsep_memo
    hit = memo.get(key)
    if hit is not None:
        return hit

    anc = (1 << i) | (1 << j) | g._ancestor_masks[i] | g._ancestor_masks[j]
    for k in zs:
        anc |= (1 << k) | g._ancestor_masks[k]
    zmask = 0
    for k in zs:
        zmask |= 1 << k
    nodes = _bits(anc)
    nbr = {v: 0 for v in nodes}
    for v in nodes:
        pa = list(g._parents[v])  # parents of an ancestral node are ancestral
        for p in pa:
            nbr[v] |= 1 << p
            nbr[p] |= 1 << v
        for a, b in itertools.combinations(pa, 2):
            nbr[a] |= 1 << b
            nbr[b] |= 1 << a
    seen = 1 << i
    frontier = [i]
    target = 1 << j
    separated = True
    while frontier:
        v = frontier.pop()
        step = nbr[v] & ~zmask & ~seen
        if step & target:
            separated = False
            break
        seen |= step
        frontier.extend(_bits(step))
    memo[key] = separated
    return separated


def parental_triples(g: Dag) -> list[ParentalTriple]:
    """All ``(i, j, pa(i))`` with ``j`` a non-descendant and non-parent of ``i``.

    Sorted by ``i`` then ``j``.
    """
    return list(g._triples)


@dataclass(frozen=True)
class NodePermutation:
    """Bijection on node labels; ``mapping[i]`` is the image of ``i``."""

    mapping: tuple[int, ...]

    def __post_init__(self):
        m = tuple(int(x) for x in self.mapping)
        if sorted(m) != list(range(len(m))):
            raise GraphError(f"not a permutation of 0..{len(m) - 1}: {m}")
        object.__setattr__(self, "mapping", m)

    @property
    def n(self) -> int:
        return len(self.mapping)

    @classmethod
    def identity(cls, n: int) -> "NodePermutation":
        return cls(tuple(range(n)))

    def inverse(self) -> "NodePermutation":
        inv = [0] * self.n
        for a, b in enumerate(self.mapping):
            inv[b] = a
        return NodePermutation(tuple(inv))


def apply_permutation(g: Dag, s: NodePermutation) -> Dag:
    """Graph with edge ``i -> j`` iff ``pi(i) -> pi(j)`` is an edge of ``g``."""
    if s.n != g.n:
        raise GraphError(f"permutation of size {s.n} applied to graph of size {g.n}")
    inv = s.inverse().mapping
    return Dag(g.n, frozenset((inv[a], inv[b]) for a, b in g.edges), g.node_names)


def sample_permutation(n: int, rng: np.random.Generator) -> NodePermutation:
    """Uniform draw from the symmetric group on ``n`` labels."""
    if n < 1:
        raise GraphError("n must be >= 1")
    return NodePermutation(tuple(int(x) for x in rng.permutation(n)))


def relabel_triple(t: ParentalTriple, inverse: Sequence[int]) -> ParentalTriple:
    """Map a triple of ``g`` onto the corresponding triple of ``sigma(g)``.

    ``inverse`` is the inverse of the permutation defining ``sigma``.
    """
    return ParentalTriple(inverse[t.i], inverse[t.j], tuple(sorted(inverse[k] for k in t.z)))


def v_tpa(g_perm: Dag, g: Dag) -> list[ParentalTriple]:
    """Parental triples of ``g_perm`` that are not d-separations in ``g``."""
    _check_same_size(g_perm, g)
    return [t for t in g_perm._triples if not d_separated(g, t.i, t.j, t.z)]


def markov_equivalent(g1: Dag, g2: Dag) -> bool:
    """Same skeleton and same v-structures."""
    _check_same_size(g1, g2)
    return g1.skeleton == g2.skeleton and g1.v_structures == g2.v_structures


def shd(g1: Dag, g2: Dag) -> int:
    """Structural Hamming distance; a reversed edge counts once."""
    _check_same_size(g1, g2)
    pairs = g1.skeleton | g2.skeleton
    dist = 0
    for a, b in pairs:
        s1 = ((a, b) in g1.edges, (b, a) in g1.edges)
        s2 = ((a, b) in g2.edges, (b, a) in g2.edges)
        dist += s1 != s2
    return dist

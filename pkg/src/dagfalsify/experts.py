"""Simulated domain experts that corrupt a true DAG in controlled ways.

The node expert (DE-V) knows every edge among a subset ``K`` of nodes and
reshuffles the rest; the edge expert (DE-E) adds, removes and flips edges so
that the structural Hamming distance to the truth is exactly the number of
edits.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .graph import Dag, GraphError, _find_cycle

logger = logging.getLogger(__name__)

Edge = tuple[int, int]


class InfeasibleConfigError(ValueError):
    """The requested corruption cannot be realized on this graph."""


def _creates_cycle(n: int, edges: set[Edge], new: Edge) -> bool:
    # adding a -> b closes a cycle iff a is reachable from b
    a, b = new
    children: dict[int, list[int]] = {}
    for u, v in edges:
        children.setdefault(u, []).append(v)
    stack, seen = [b], {b}
    while stack:
        u = stack.pop()
        if u == a:
            return True
        for v in children.get(u, ()):
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return False


def _children(n: int, edges) -> list[list[int]]:
    out: list[list[int]] = [[] for _ in range(n)]
    for a, b in edges:
        out[a].append(b)
    return out


@dataclass(frozen=True)
class NodeExpertConfig:
    """DE-V parameters.

    ``known`` fixes ``K`` explicitly (node indices); otherwise ``K`` is a
    uniformly random subset of size ``floor(knowledge_fraction * n + 0.5)``.
    """

    knowledge_fraction: float = 1.0
    seed: int = 0
    known: tuple[int, ...] | None = None

    def __post_init__(self):
        if not 0.0 <= self.knowledge_fraction <= 1.0:
            raise ValueError("knowledge_fraction must lie in [0, 1]")

    def k_size(self, n: int) -> int:
        return int(math.floor(self.knowledge_fraction * n + 0.5))


@dataclass(frozen=True)
class EdgeExpertConfig:
    """DE-E parameters: ``|N| = n_add``, ``|M| = n_remove``, ``|L| = n_flip``."""

    n_add: int = 0
    n_remove: int = 0
    n_flip: int = 0
    seed: int = 0
    preserve_sparsity: bool = True

    def __post_init__(self):
        if min(self.n_add, self.n_remove, self.n_flip) < 0:
            raise ValueError("edit counts must be non-negative")
        if self.preserve_sparsity and self.n_add != self.n_remove:
            raise ValueError("n_add must equal n_remove when preserve_sparsity is set")

    @property
    def shd(self) -> int:
        return self.n_add + self.n_remove + self.n_flip

    @classmethod
    def from_shd(cls, total: int, n_edges: int, seed: int = 0) -> "EdgeExpertConfig":
        """Split an SHD budget into ``n_add = n_remove = a`` and ``n_flip = total - 2a``.

        ``a`` is ``round(total / 3)`` (an even three-way split) raised to
        ``total - n_edges`` when fewer true edges remain than removals plus
        flips would need.
        """
        if total < 0 or total > 2 * n_edges:
            raise InfeasibleConfigError(f"SHD {total} not reachable with {n_edges} edges at fixed sparsity")
        a = min(max(int(round(total / 3)), total - n_edges), total // 2)
        return cls(a, a, total - 2 * a, seed)


def de_v(g_true: Dag, cfg: NodeExpertConfig, max_restarts: int = 1000) -> Dag:
    """Node-expert corruption of ``g_true``.

    Edges with both endpoints in ``K`` are kept; every other true edge is
    replaced by a uniformly drawn ordered pair that is not inside ``K``,
    rejecting duplicates and cycle-closing draws. After ``100 * |E|``
    rejected draws the attempt restarts with a fresh sub-seed.
    """
    n = g_true.n
    rng = np.random.default_rng([cfg.seed, 0])
    if cfg.known is not None:
        known = frozenset(int(k) for k in cfg.known)
        if any(not 0 <= k < n for k in known):
            raise GraphError("known nodes out of range")
    else:
        known = frozenset(int(k) for k in rng.choice(n, cfg.k_size(n), replace=False))
    kept = {(a, b) for a, b in g_true.edges if a in known and b in known}
    m = len(g_true.edges) - len(kept)
    if m == 0:
        return g_true
    candidates = [(a, b) for a in range(n) for b in range(n)
                  if a != b and not (a in known and b in known)]
    budget = 100 * len(g_true.edges)
    for attempt in range(max_restarts):
        sub = np.random.default_rng([cfg.seed, 1, attempt])
        edges = set(kept)
        draws = 0
        while len(edges) < len(kept) + m and draws < budget:
            draws += 1
            a, b = candidates[sub.integers(len(candidates))]
            if (a, b) in edges or (b, a) in edges or _creates_cycle(n, edges, (a, b)):
                continue
            edges.add((a, b))
        if len(edges) == len(kept) + m:
            return g_true.with_edges(edges)
        logger.info("de_v: retry budget exhausted on attempt %d, restarting", attempt)
    raise InfeasibleConfigError("de_v failed to place edges acyclically")


def apply_edge_edits(g_true: Dag, add: Iterable[Edge], remove: Iterable[Edge], flip: Iterable[Edge]) -> Dag:
    """Apply explicit sets ``N``, ``M``, ``L`` and validate them."""
    E = set(g_true.edges)
    add, remove, flip = set(add), set(remove), set(flip)
    reverse = {(b, a) for a, b in E}
    if not remove <= E:
        raise InfeasibleConfigError("removed edges must be true edges")
    if not flip <= E - remove:
        raise InfeasibleConfigError("flipped edges must be true edges that are not removed")
    if add & (E | reverse):
        raise InfeasibleConfigError("added edges must avoid true edges and their reversals")
    edges = (E - remove - flip) | {(b, a) for a, b in flip} | add
    cycle = _find_cycle(g_true.n, _children(g_true.n, edges))
    if cycle is not None:
        raise InfeasibleConfigError(f"edits create a cycle through {cycle}")
    return g_true.with_edges(edges)


def de_e(g_true: Dag, cfg: EdgeExpertConfig, max_restarts: int = 1000) -> Dag:
    """Edge-expert corruption with ``shd(result, g_true) == cfg.shd``.

    Removals are drawn first, then flips among the remaining true edges,
    then additions among ordered pairs that are neither true edges nor
    their reversals. Flips and additions that would close a cycle are
    re-drawn; an attempt that runs out of acyclic candidates restarts.
    """
    n = g_true.n
    E = sorted(g_true.edges)
    if cfg.n_remove + cfg.n_flip > len(E):
        raise InfeasibleConfigError(
            f"n_remove + n_flip = {cfg.n_remove + cfg.n_flip} exceeds |E| = {len(E)}")
    taken = set(E) | {(b, a) for a, b in E}
    pool = [(a, b) for a in range(n) for b in range(n) if a != b and (a, b) not in taken]
    # (a, b) and (b, a) are both in the pool; at most one of them can be added
    if cfg.n_add > len(pool) // 2:
        raise InfeasibleConfigError(f"only {len(pool) // 2} non-adjacent pairs available for additions")
    budget = 100 * max(len(E), 1)
    for attempt in range(max_restarts):
        rng = np.random.default_rng([cfg.seed, attempt])
        order = [E[k] for k in rng.permutation(len(E))]
        remove = set(order[:cfg.n_remove])
        rest = order[cfg.n_remove:]
        # flips are judged jointly: flipping edges one at a time can pass
        # through cyclic intermediate states even when the final graph is a DAG
        edges = None
        for _ in range(budget):
            pick = rng.choice(len(rest), cfg.n_flip, replace=False)
            flip = {rest[k] for k in pick}
            cand = (set(rest) - flip) | {(b, a) for a, b in flip}
            if _find_cycle(n, _children(n, cand)) is None:
                edges = cand
                break
        if edges is None:
            logger.info("de_e: no acyclic flip set on attempt %d, restarting", attempt)
            continue
        added = 0
        for k in rng.permutation(len(pool)):
            if added == cfg.n_add:
                break
            a, b = pool[k]
            if (b, a) in edges or (a, b) in edges or _creates_cycle(n, edges, (a, b)):
                continue
            edges.add((a, b))
            added += 1
        if added == cfg.n_add:
            assert len(remove) == cfg.n_remove
            return g_true.with_edges(edges)
        logger.info("de_e: no acyclic completion on attempt %d, restarting", attempt)
    raise InfeasibleConfigError("de_e could not realize the requested edits acyclically")

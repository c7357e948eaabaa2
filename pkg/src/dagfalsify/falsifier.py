"""Permutation-based falsification metrics for a given DAG.

A DAG is scored by how many of its implied conditional independences
(parental triples) the data rejects, and that count is compared with the
counts of uniformly node-permuted copies of the same DAG.
"""

from __future__ import annotations

import itertools
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import norm

from . import __version__
from .citests import CiCache, CiOutcome, CiTest, Dataset
from .citests.base import canonical_query
from .graph import (
    Dag,
    GraphError,
    ParentalTriple,
    ancestors,
    d_separated,
    parental_triples,
    relabel_triple,
    sample_permutation,
)

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
VERDICTS = ("falsifiable_and_not_rejected", "falsifiable_and_rejected", "not_falsifiable")
EXIT_CODES = {VERDICTS[0]: 0, VERDICTS[1]: 1, VERDICTS[2]: 2}
MAX_EXHAUSTIVE_NODES = 8


@dataclass
class FalsificationReport:
    """Outcome of one falsification run; serializes to a stable JSON schema.

    ``runtime`` holds wall-clock timing, worker count and cache statistics;
    everything else is a deterministic function of graph, data, test
    configuration and seed.
    """

    p_lmc: float
    p_lmc_ci: tuple[float, float]
    p_tpa: float
    f_lmc: float
    v_lmc: list[ParentalTriple]
    v_md: list[tuple[int, int]]
    n_permutations: int
    alpha: float
    seed: int
    shannon_info_bits: float
    permutation_counts: list[int]
    verdict: str
    ci_confidence: float = 0.95
    p_lmc_conservative: float | None = None
    shannon_info_lower_bound: float | None = None
    n_triples: int = 0
    n_tested_triples: int = 0
    v_lmc_pvalues: list[float] = field(default_factory=list)
    failed_queries: list[tuple[int, int, tuple[int, ...], str]] = field(default_factory=list)
    node_names: tuple[str, ...] | None = None
    exhaustive: bool = False
    test: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    runtime: dict = field(default_factory=dict)
    tool_version: str = __version__
    schema_version: int = SCHEMA_VERSION

    @property
    def exit_code(self) -> int:
        return EXIT_CODES[self.verdict]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["p_lmc_ci"] = list(self.p_lmc_ci)
        d["v_lmc"] = [[t.i, t.j, list(t.z)] for t in self.v_lmc]
        d["v_md"] = [list(p) for p in self.v_md]
        d["failed_queries"] = [[i, j, list(z), err] for i, j, z, err in self.failed_queries]
        d["node_names"] = list(self.node_names) if self.node_names is not None else None
        if math.isinf(self.shannon_info_bits):
            d["shannon_info_bits"] = "+inf"
        return d

    @classmethod
    def from_dict(cls, d: dict, strict: bool = True) -> "FalsificationReport":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown and strict:
            raise ValueError(f"unknown report fields: {sorted(unknown)}")
        d = {k: v for k, v in d.items() if k in known}
        if d.get("schema_version", SCHEMA_VERSION) != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {d['schema_version']}")
        d["p_lmc_ci"] = tuple(d["p_lmc_ci"])
        d["v_lmc"] = [ParentalTriple(i, j, tuple(z)) for i, j, z in d["v_lmc"]]
        d["v_md"] = [tuple(p) for p in d["v_md"]]
        d["failed_queries"] = [(i, j, tuple(z), err) for i, j, z, err in d.get("failed_queries", [])]
        if d.get("node_names") is not None:
            d["node_names"] = tuple(d["node_names"])
        if d["shannon_info_bits"] == "+inf":
            d["shannon_info_bits"] = math.inf
        return cls(**d)

    def deterministic_dict(self) -> dict:
        """The serialized report without the ``runtime`` block."""
        d = self.to_dict()
        d.pop("runtime")
        return d


def binom_ci(p_hat: float, T: int, confidence: float = 0.95) -> tuple[float, float]:
    """Wald interval ``p_hat +- z * sqrt(p_hat (1 - p_hat) / T)`` clamped to [0, 1].

    Examples
    --------
    >>> lo, hi = binom_ci(0.5, 100)
    >>> round(hi - 0.5, 3)
    0.098
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    if not 0 < confidence < 1:
        raise ValueError("confidence must lie in (0, 1)")
    z = norm.ppf(0.5 + confidence / 2)
    half = z * math.sqrt(p_hat * (1 - p_hat) / T)
    return max(0.0, p_hat - half), min(1.0, p_hat + half)


def verdict(p_lmc: float, p_tpa: float, alpha: float) -> str:
    """Interpretation of a run.

    A graph whose permutations are mostly indistinguishable by their
    implied independences (``p_tpa > alpha``) cannot be falsified this way.
    Otherwise a small ``p_lmc`` means the graph fits the data better than
    random relabelings, so the data provides no evidence against it.
    """
    for name, v in (("p_lmc", p_lmc), ("p_tpa", p_tpa)):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"{name} must lie in [0, 1], got {v}")
    if p_tpa > alpha:
        return "not_falsifiable"
    if p_lmc <= alpha:
        return "falsifiable_and_not_rejected"
    return "falsifiable_and_rejected"


def shannon_bits(p: float, T: int) -> tuple[float, float | None]:
    """``-log2 p`` and, when ``p`` is 0, the lower bound ``log2 T`` it exceeds."""
    if p > 0:
        return -math.log2(p), None
    return math.inf, math.log2(T)


def _draw_permutations(n: int, T: int, seed: int, exhaustive: bool) -> list[tuple[int, ...]]:
    if exhaustive:
        if n > MAX_EXHAUSTIVE_NODES:
            raise ValueError(f"exhaustive enumeration limited to n <= {MAX_EXHAUSTIVE_NODES}")
        return list(itertools.permutations(range(n)))
    if T < 1:
        raise ValueError("T must be >= 1")
    # one stream per permutation index: the draws do not depend on scheduling
    return [sample_permutation(n, np.random.default_rng([seed, t])).mapping for t in range(T)]


def _inverse(p: Sequence[int]) -> list[int]:
    inv = [0] * len(p)
    for a, b in enumerate(p):
        inv[b] = a
    return inv


def p_tpa(g: Dag, T: int = 1000, seed: int = 0, exhaustive: bool = False) -> float:
    """Fraction of node permutations whose parental triples all hold in ``g``.

    Triples of a permuted graph are the relabeled triples of ``g``, so the
    permuted graphs are never materialized.
    """
    perms = _draw_permutations(g.n, T, seed, exhaustive)
    return _tpa_fraction(g, parental_triples(g), perms)


def _tpa_fraction(g: Dag, base: list[ParentalTriple], perms) -> float:
    empty = 0
    for p in perms:
        inv = _inverse(p)
        empty += all(d_separated(g, *relabel_triple(t, inv)) for t in base)
    return empty / len(perms)


def _check_binding(g: Dag, d: Dataset) -> None:
    if d.n != g.n:
        raise GraphError(f"dataset has {d.n} columns but graph has {g.n} nodes")
    if g.node_names is not None and tuple(g.node_names) != tuple(d.column_names):
        raise GraphError("dataset columns are not bound to graph nodes in order; use io.bind_dataset")


class _Evaluator:
    """Resolves canonical CI queries to raw outcomes for one run."""

    def __init__(self, test: CiTest, data: Dataset, cache: CiCache | None, workers: int):
        self.test, self.data, self.cache, self.workers = test, data, cache, workers
        self.results: dict = {}
        if cache is not None:
            cache.bind(test, data)

    def resolve(self, queries) -> None:
        todo = []
        for q in sorted(set(queries) - set(self.results)):
            if self.cache is not None:
                hit = self.cache.get(CiCache.key(self.test.name, *q))
                if hit is not None:
                    self.results[q] = (hit.statistic, hit.p_value, hit.error)
                    continue
            todo.append(q)
        if not todo:
            return
        outs = self.test.evaluate_many(self.data, todo, self.workers)
        for q, out in zip(todo, outs):
            self.results[q] = out
        if self.cache is not None:
            with self.cache._lock:
                self.cache.evaluations += len(todo)
            for q, (stat, p, err) in zip(todo, outs):
                self.cache.put_if_absent(CiCache.key(self.test.name, *q),
                                         CiOutcome(stat, p, self.test.name, q, error=err))

    def p_value(self, q) -> float | None:
        _, p, err = self.results[q]
        return None if err is not None else p


def _triple_query(t: ParentalTriple):
    return canonical_query(t.i, t.j, t.z)


def v_lmc(g: Dag, d: Dataset, test: CiTest, alpha: float = 0.05, cache: CiCache | None = None,
          workers: int = 1) -> list[ParentalTriple]:
    """Parental triples of ``g`` whose implied independence ``test`` rejects.

    Queries on which the test fails are logged and excluded.
    """
    _check_binding(g, d)
    ev = _Evaluator(test, d, cache, workers)
    triples = parental_triples(g)
    ev.resolve(_triple_query(t) for t in triples)
    out = []
    for t in triples:
        p = ev.p_value(_triple_query(t))
        if p is None:
            logger.warning("CI test failed on %s; triple excluded", t)
        elif p <= alpha:
            out.append(t)
    return out


def v_md(g: Dag, d: Dataset, test: CiTest, alpha: float = 0.05, cache: CiCache | None = None,
         workers: int = 1) -> list[tuple[int, int]]:
    """Pairs ``(i, j)``, ``j`` an ancestor of ``i``, whose marginal dependence is not detected."""
    _check_binding(g, d)
    ev = _Evaluator(test, d, cache, workers)
    pairs = [(i, j) for i in range(g.n) for j in sorted(ancestors(g, i))]
    ev.resolve(canonical_query(i, j, ()) for i, j in pairs)
    out = []
    for i, j in pairs:
        p = ev.p_value(canonical_query(i, j, ()))
        if p is None:
            logger.warning("marginal CI test failed on (%d, %d); pair excluded", i, j)
        elif p > alpha:
            out.append((i, j))
    return out


def p_lmc(
    g: Dag,
    d: Dataset,
    test: CiTest,
    alpha: float = 0.05,
    T: int = 1000,
    seed: int = 0,
    *,
    workers: int = 1,
    use_cache: bool = True,
    cache: CiCache | None = None,
    confidence: float = 0.95,
    conservative: bool = False,
    exhaustive: bool = False,
    with_md: bool = True,
    config: dict | None = None,
) -> FalsificationReport:
    """Permutation p-value of the given graph's LMC violation count.

    ``p_lmc`` is the fraction of the ``T`` permuted graphs whose violation
    count is at most the given graph's; ties count in favour of the null.
    With ``conservative`` the reported ``p_lmc`` is ``(1 + c) / (1 + T)``.
    ``exhaustive`` replaces sampling by all ``n!`` permutations.

    Parameters
    ----------
    g, d, test
        Given graph, dataset with columns in node order, and CI test.
    alpha : float
        Level applied to the raw CI p-values and to the verdict.
    T, seed
        Number of permutation draws and the base seed; permutation ``t`` is
        drawn from the stream ``(seed, t)``.
    workers : int
        Processes for CI evaluation; never changes the numbers.
    use_cache, cache
        Share CI outcomes across graphs (a fresh cache unless one is passed).
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    _check_binding(g, d)
    start = time.perf_counter()
    if use_cache and cache is None:
        cache = CiCache()
    ev = _Evaluator(test, d, cache if use_cache else None, workers)

    base = parental_triples(g)
    perms = _draw_permutations(g.n, T, seed, exhaustive)
    T_eff = len(perms)
    relabeled = []
    for p in perms:
        inv = _inverse(p)
        relabeled.append([_triple_query(relabel_triple(t, inv)) for t in base])
    given_queries = [_triple_query(t) for t in base]
    all_queries = set(given_queries).union(*relabeled) if relabeled else set(given_queries)
    if use_cache:
        ev.resolve(all_queries)
        evaluations = cache.evaluations
    else:
        # without a cache every occurrence of a query is evaluated afresh
        flat = given_queries + [q for qs in relabeled for q in qs]
        outs = test.evaluate_many(d, flat, workers) if flat else []
        results: dict = {}
        for q, out in zip(flat, outs):
            if q in results and results[q] != out:
                raise RuntimeError(f"CI test is not deterministic on query {q}")
            results[q] = out
        ev.results = results
        evaluations = len(flat)

    failed = sorted(q for q in all_queries if ev.p_value(q) is None)
    for q in failed:
        logger.warning("CI test failed on query %s (%s); excluded from violation counts", q, ev.results[q][2])

    def count(qs):
        return sum(1 for q in qs if (p := ev.p_value(q)) is not None and p <= alpha)

    violations = [(t, ev.p_value(q)) for t, q in zip(base, given_queries)
                  if ev.p_value(q) is not None and ev.p_value(q) <= alpha]
    c_given = len(violations)
    counts = [count(qs) for qs in relabeled]
    le = sum(c <= c_given for c in counts)
    p_plain = le / T_eff
    p_cons = (1 + le) / (1 + T_eff)
    p_val = p_cons if conservative else p_plain
    tested = sum(1 for q in given_queries if ev.p_value(q) is not None)
    bits, bound = shannon_bits(p_val, T_eff)

    ptpa = _tpa_fraction(g, base, perms)
    md = v_md(g, d, test, alpha, cache if use_cache else None, workers) if with_md else []

    return FalsificationReport(
        p_lmc=p_val,
        p_lmc_ci=binom_ci(p_val, T_eff, confidence),
        p_tpa=ptpa,
        f_lmc=c_given / tested if tested else 0.0,
        v_lmc=[t for t, _ in violations],
        v_md=md,
        n_permutations=T_eff,
        alpha=alpha,
        seed=seed,
        shannon_info_bits=bits,
        permutation_counts=counts,
        verdict=verdict(p_val, ptpa, alpha),
        ci_confidence=confidence,
        p_lmc_conservative=p_cons,
        shannon_info_lower_bound=bound,
        n_triples=len(base),
        n_tested_triples=tested,
        v_lmc_pvalues=[p for _, p in violations],
        failed_queries=[(*q, ev.results[q][2]) for q in failed],
        node_names=g.node_names,
        exhaustive=exhaustive,
        test=test.config(),
        config=dict(config or {}),
        runtime={
            "seconds": time.perf_counter() - start,
            "workers": workers,
            "use_cache": use_cache,
            "distinct_queries": len(all_queries),
            "ci_evaluations": evaluations,
            "cache": cache.stats() if use_cache else None,
        },
    )

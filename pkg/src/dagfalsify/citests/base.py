"""Shared types for conditional-independence tests."""

from __future__ import annotations

import hashlib
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

Query = tuple[int, int, tuple[int, ...]]


class CiTestError(RuntimeError):
    """A CI test could not produce a p-value (singular or degenerate input)."""


@dataclass(frozen=True, eq=False)
class Dataset:
    """``N x n`` observation matrix whose columns are bound to names."""

    values: np.ndarray
    column_names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        values = np.array(self.values, dtype=float, copy=True)
        if values.ndim != 2:
            raise ValueError("dataset values must be a 2-d matrix")
        names = tuple(str(c) for c in self.column_names) or tuple(
            f"X{k}" for k in range(values.shape[1])
        )
        if len(names) != values.shape[1] or len(set(names)) != len(names):
            raise ValueError("column_names must hold one distinct name per column")
        if not np.all(np.isfinite(values)):
            raise ValueError("dataset contains missing or non-finite values")
        if values.shape[0] < 4:
            raise ValueError(f"need at least 4 samples, got {values.shape[0]}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "column_names", names)

    @property
    def N(self) -> int:
        return self.values.shape[0]

    @property
    def n(self) -> int:
        return self.values.shape[1]

    def select(self, names: Sequence[str]) -> "Dataset":
        index = {c: k for k, c in enumerate(self.column_names)}
        return Dataset(self.values[:, [index[c] for c in names]], tuple(names))

    def fingerprint(self) -> str:
        h = hashlib.sha1(np.ascontiguousarray(self.values).tobytes())
        h.update("\0".join(self.column_names).encode())
        return h.hexdigest()


@dataclass(frozen=True)
class CiOutcome:
    """Result of one ``X_i _||_ X_j | X_z`` query.

    The p-value is stored raw; ``reject`` applies ``alpha``. A failed test
    carries ``error`` and never rejects.
    """

    statistic: float
    p_value: float
    test_name: str
    query: Query
    alpha: float = 0.05
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None

    @property
    def reject(self) -> bool:
        return not self.failed and self.p_value <= self.alpha

    def at_level(self, alpha: float) -> "CiOutcome":
        return self if alpha == self.alpha else replace(self, alpha=alpha)


def canonical_query(i: int, j: int, z: Iterable[int]) -> Query:
    zs = tuple(sorted(int(k) for k in z))
    i, j = int(i), int(j)
    if i == j or i in zs or j in zs:
        raise ValueError(f"invalid CI query ({i}, {j} | {zs})")
    return (i, j, zs) if i < j else (j, i, zs)


def standardize(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    sd = x.std(axis=0, ddof=1)
    sd = np.where(sd > 0, sd, 1.0)
    return (x - x.mean(axis=0)) / sd


class CiTest:
    """Base class: subclasses implement :meth:`compute`.

    Tests always run on the canonical ordering ``i < j`` so that a result
    does not depend on which orientation of a query was asked first.
    """

    name = "base"

    def config(self) -> dict:
        return {"test": self.name}

    def compute(self, data: Dataset, i: int, j: int, z: tuple[int, ...]) -> tuple[float, float]:
        raise NotImplementedError

    def __call__(self, data, i, j, z=(), alpha: float = 0.05) -> CiOutcome:
        q = canonical_query(i, j, z)
        stat, p, err = self._safe_compute(data, q)
        return CiOutcome(stat, p, self.name, q, alpha, err)

    def _safe_compute(self, data, q: Query):
        try:
            stat, p = self.compute(data, *q)
        except (CiTestError, np.linalg.LinAlgError) as exc:
            return float("nan"), float("nan"), str(exc) or type(exc).__name__
        return float(stat), float(min(max(p, 0.0), 1.0)), None

    def evaluate_many(self, data, queries: Sequence[Query], workers: int = 1) -> list[tuple]:
        """``(statistic, p_value, error)`` for each canonical query, in order."""
        return parallel_map(_eval_query, queries, workers, (self, data))


# Process-pool plumbing. Workers receive the test and dataset once through
# the initializer; tasks are plain tuples.
_WORKER_STATE: tuple | None = None


def _init_worker(state):
    global _WORKER_STATE
    _WORKER_STATE = state


def _eval_query(q):
    test, data = _WORKER_STATE
    return test._safe_compute(data, q)


def _run_chunk(fn, chunk):
    return [fn(item) for item in chunk]


def parallel_map(fn, items: Sequence, workers: int, state) -> list:
    """Apply module-level ``fn`` to ``items`` with ``state`` installed.

    Output order follows input order, so results never depend on the
    worker count.
    """
    global _WORKER_STATE
    items = list(items)
    if workers <= 1 or len(items) < 2:
        saved = _WORKER_STATE
        _WORKER_STATE = state
        try:
            return [fn(item) for item in items]
        finally:
            _WORKER_STATE = saved
    size = max(1, len(items) // (workers * 4))
    chunks = [items[k:k + size] for k in range(0, len(items), size)]
    with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker, initargs=(state,)) as pool:
        parts = pool.map(_run_chunk, [fn] * len(chunks), chunks)
        return [r for part in parts for r in part]

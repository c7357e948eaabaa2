"""Memo of CI outcomes shared by every graph evaluated on one dataset."""

from __future__ import annotations

import threading

from .base import CiOutcome, CiTest, Dataset, canonical_query


class CiCache:
    """Thread-safe store of raw CI outcomes keyed by ``(test, {i, j}, z)``.

    A cache binds to the first (test configuration, dataset) pair it sees
    and refuses any other; outcomes are stored without a significance
    level and re-levelled on lookup.
    """

    def __init__(self):
        self._store: dict[tuple, CiOutcome] = {}
        self._lock = threading.Lock()
        self._binding: tuple | None = None
        self.hits = 0
        self.misses = 0
        self.evaluations = 0

    def __len__(self):
        return len(self._store)

    def __contains__(self, key):
        return key in self._store

    def bind(self, test: CiTest, data: Dataset | None) -> None:
        fingerprint = data.fingerprint() if data is not None else None
        binding = (repr(sorted(test.config().items())), fingerprint)
        with self._lock:
            if self._binding is None:
                self._binding = binding
            elif self._binding != binding:
                raise ValueError("CiCache is already bound to a different test or dataset")

    @staticmethod
    def key(test_name: str, i: int, j: int, z) -> tuple:
        return (test_name, *canonical_query(i, j, z))

    def get(self, key) -> CiOutcome | None:
        with self._lock:
            out = self._store.get(key)
            if out is None:
                self.misses += 1
            else:
                self.hits += 1
            return out

    def put_if_absent(self, key, outcome: CiOutcome) -> CiOutcome:
        with self._lock:
            return self._store.setdefault(key, outcome)

    def stats(self) -> dict:
        return {"entries": len(self._store), "hits": self.hits, "misses": self.misses,
                "evaluations": self.evaluations}


def cached_ci(cache: CiCache, test: CiTest, d: Dataset, i: int, j: int, z=(), alpha: float = 0.05) -> CiOutcome:
    """Evaluate a query at most once per cache; symmetric in ``i`` and ``j``."""
    cache.bind(test, d)
    key = CiCache.key(test.name, i, j, z)
    hit = cache.get(key)
    if hit is not None:
        return hit.at_level(alpha)
    outcome = test(d, i, j, z, alpha)
    with cache._lock:
        cache.evaluations += 1
    return cache.put_if_absent(key, outcome).at_level(alpha)

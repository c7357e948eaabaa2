"""Desk-scale experiment drivers: CI-test type-I errors and expert sweeps."""

from __future__ import annotations

import logging
from typing import Sequence

import numpy as np
from scipy.stats import spearmanr

from .citests import CiCache, Dataset, RegressorSpec, make_test
from .citests import base as _base
from .experts import EdgeExpertConfig, NodeExpertConfig, de_e, de_v
from .falsifier import p_lmc
from .graph import shd
from .synth import ScmSpec, er_dag, sample_scm

logger = logging.getLogger(__name__)

NODE_LEVELS = (0.0, 0.25, 0.5, 0.75, 1.0)
EDGE_LEVELS = (0.0, 0.5, 1.0, 1.5, 2.0)


def subseed(*parts: int) -> int:
    """A 63-bit seed derived from ``parts``; distinct parts give independent streams."""
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(2, np.uint64)[0] >> 1)


def type1_dataset(D: int, N: int, rng: np.random.Generator, noise_variance: float = 0.1) -> Dataset:
    """X and Y driven by Z_1 alone, so ``X _||_ Y | Z_1..Z_D`` holds for D >= 1.

    Columns are ``X, Y, Z1..ZD``; the slopes of X and Y on Z_1 are drawn
    independently from U(-1, 1). With ``D = 0`` X and Y are pure noise.
    """
    Z = rng.standard_normal((N, D))
    bx, by = rng.uniform(-1, 1, 2)
    sd = np.sqrt(noise_variance)
    x = sd * rng.standard_normal(N)
    y = sd * rng.standard_normal(N)
    if D:
        x += bx * Z[:, 0]
        y += by * Z[:, 0]
    names = ("X", "Y") + tuple(f"Z{k + 1}" for k in range(D))
    return Dataset(np.column_stack([x, y, Z]), names)


def _type1_cell(item):
    tests, N, seed, alpha = _base._WORKER_STATE
    D, rep = item
    d = type1_dataset(D, N, np.random.default_rng([seed, D, rep]))
    out = []
    for test in tests:
        o = test(d, 0, 1, tuple(range(2, 2 + D)), alpha)
        out.append((o.reject, o.failed))
    return out


def run_type1(
    tests: Sequence[str] = ("pcorr", "gcm", "kci"),
    D_values: Sequence[int] = range(5),
    N: int = 200,
    reps: int = 1000,
    alpha: float = 0.05,
    seed: int = 0,
    workers: int = 1,
    regressor: RegressorSpec | None = None,
) -> list[dict]:
    """False-positive rate of each CI test per conditioning-set size ``D``.

    Every test sees the same datasets; replicate ``r`` at size ``D`` is drawn
    from the stream ``(seed, D, r)``.
    """
    objs = [make_test(t, regressor) for t in tests]
    items = [(D, r) for D in D_values for r in range(reps)]
    results = _base.parallel_map(_type1_cell, items, workers, (objs, N, seed, alpha))
    rows = []
    for D in D_values:
        cell = [res for (d, _), res in zip(items, results) if d == D]
        for k, name in enumerate(tests):
            rejects = sum(c[k][0] for c in cell)
            failures = sum(c[k][1] for c in cell)
            rows.append({"test": name, "D": D, "N": N, "reps": reps, "rejections": rejects,
                         "failures": failures, "fpr": rejects / reps})
    return rows


def run_benchmark(
    n: int = 10,
    degree: float = 2.0,
    mechanism: str = "linear",
    test: str | None = None,
    node_levels: Sequence[float] = NODE_LEVELS,
    edge_levels: Sequence[float] = EDGE_LEVELS,
    replicates: int = 20,
    N: int = 1000,
    T: int = 100,
    alpha: float = 0.05,
    seed: int = 0,
    workers: int = 1,
    noise: str = "gaussian",
    regressor: RegressorSpec | None = None,
) -> list[dict]:
    """Sweep simulated experts over replicate ER graphs.

    For replicate ``r`` a true graph and dataset are drawn, then every node
    expert level (fraction of known nodes) and edge expert level (SHD as a
    multiple of the true edge count) produces one given graph scored by
    ``p_lmc``. All graphs of one replicate share a CI cache. The CI test
    defaults to partial correlation for linear and GCM for MLP mechanisms.
    """
    test = test or ("pcorr" if mechanism == "linear" else "gcm")
    ci = make_test(test, regressor)
    rows = []
    for r in range(replicates):
        g_true = er_dag(n, degree, subseed(seed, r, 0), _names(n))
        data = sample_scm(ScmSpec(g_true, mechanism, noise, seed=subseed(seed, r, 1)), N)
        cache = CiCache()
        E = len(g_true.edges)
        runs = [("node", lv, de_v(g_true, NodeExpertConfig(lv, subseed(seed, r, 2, k))))
                for k, lv in enumerate(node_levels)]
        for k, lv in enumerate(edge_levels):
            cfg = EdgeExpertConfig.from_shd(int(round(lv * E)), E, subseed(seed, r, 3, k))
            runs.append(("edge", lv, de_e(g_true, cfg)))
        for expert, lv, given in runs:
            rep = p_lmc(given, data, ci, alpha, T, subseed(seed, r, 4), workers=workers,
                        cache=cache, with_md=False)
            rows.append({
                "expert": expert, "level": lv, "replicate": r, "p_lmc": rep.p_lmc,
                "f_lmc": rep.f_lmc, "p_tpa": rep.p_tpa, "shd": shd(given, g_true),
                "n_edges": E, "n_violations": len(rep.v_lmc),
            })
        logger.info("replicate %d/%d done (%d CI evaluations)", r + 1, replicates, cache.evaluations)
    return rows


def _names(n: int) -> tuple[str, ...]:
    width = len(str(max(n - 1, 0)))
    return tuple(f"X{k:0{width}d}" for k in range(n))


def mean_by_level(rows: Sequence[dict], expert: str, key: str = "p_lmc") -> dict[float, float]:
    levels = sorted({r["level"] for r in rows if r["expert"] == expert})
    return {lv: float(np.mean([r[key] for r in rows if r["expert"] == expert and r["level"] == lv]))
            for lv in levels}


def level_trend(rows: Sequence[dict], expert: str, key: str = "p_lmc") -> float:
    """Spearman correlation between expert level and the mean of ``key``."""
    means = mean_by_level(rows, expert, key)
    if len(means) < 2:
        return float("nan")
    return float(spearmanr(list(means), list(means.values())).statistic)

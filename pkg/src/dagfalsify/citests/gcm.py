"""Generalised covariance measure with a pluggable regressor."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
from scipy.stats import norm
from threadpoolctl import threadpool_limits

from .base import CiOutcome, CiTest, CiTestError, Dataset, Query, parallel_map
from . import base

BOOSTED_DEFAULTS = {
    "n_estimators": 200,
    "max_depth": 3,
    "learning_rate": 0.1,
    "min_samples_leaf": 20,
    "max_bins": 255,
}
KERNEL_RIDGE_DEFAULTS = {"penalty": 1.0, "bandwidth": 0.0}  # bandwidth 0 -> median heuristic

_DEFAULTS = {"boosted_trees": BOOSTED_DEFAULTS, "kernel_ridge": KERNEL_RIDGE_DEFAULTS}
_INTEGER = {"n_estimators", "max_depth", "min_samples_leaf", "max_bins"}


@dataclass(frozen=True)
class RegressorSpec:
    """Regressor used to residualize on the conditioning set.

    Unspecified hyperparameters take the pinned defaults, so a spec always
    serializes to a complete, reproducible description.
    """

    kind: str = "boosted_trees"
    hyperparameters: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in _DEFAULTS:
            raise ValueError(f"unknown regressor kind {self.kind!r}; expected one of {sorted(_DEFAULTS)}")
        defaults = _DEFAULTS[self.kind]
        unknown = set(self.hyperparameters) - set(defaults)
        if unknown:
            raise ValueError(f"unknown hyperparameters for {self.kind}: {sorted(unknown)}")
        hp = {**defaults, **self.hyperparameters}
        for key, val in hp.items():
            if key in _INTEGER:
                if int(val) != val or val < 1:
                    raise ValueError(f"{key} must be a positive integer, got {val}")
                hp[key] = int(val)
            else:
                hp[key] = float(val)
        if self.kind == "boosted_trees" and not 0 < hp["learning_rate"] <= 1:
            raise ValueError("learning_rate must lie in (0, 1]")
        if self.kind == "kernel_ridge" and (hp["penalty"] <= 0 or hp["bandwidth"] < 0):
            raise ValueError("penalty must be > 0 and bandwidth >= 0")
        object.__setattr__(self, "hyperparameters", hp)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "hyperparameters": dict(self.hyperparameters)}

    @classmethod
    def from_dict(cls, d: dict) -> "RegressorSpec":
        return cls(d.get("kind", "boosted_trees"), dict(d.get("hyperparameters", {})))


def fit_residuals(y: np.ndarray, X: np.ndarray, spec: RegressorSpec) -> np.ndarray:
    """In-sample residuals of regressing ``y`` on ``X``."""
    hp = spec.hyperparameters
    if spec.kind == "boosted_trees":
        from sklearn.ensemble import HistGradientBoostingRegressor

        model = HistGradientBoostingRegressor(
            max_iter=hp["n_estimators"],
            max_depth=hp["max_depth"],
            learning_rate=hp["learning_rate"],
            min_samples_leaf=hp["min_samples_leaf"],
            max_bins=hp["max_bins"],
            early_stopping=False,
            random_state=0,
        )
        with threadpool_limits(1):
            model.fit(X, y)
            return y - model.predict(X)
    Xs = (X - X.mean(axis=0)) / np.where(X.std(axis=0) > 0, X.std(axis=0), 1.0)
    sq = np.sum((Xs[:, None, :] - Xs[None, :, :]) ** 2, axis=-1)
    bw = hp["bandwidth"]
    if bw == 0:
        bw = float(np.sqrt(np.median(sq[sq > 0]))) if np.any(sq > 0) else 1.0
    K = np.exp(-sq / (2.0 * bw**2))
    mu = y.mean()
    coef = np.linalg.solve(K + hp["penalty"] * np.eye(len(y)), y - mu)
    return y - mu - K @ coef


def gcm_statistic(ri: np.ndarray, rj: np.ndarray) -> tuple[float, float]:
    prod = ri * rj
    N = len(prod)
    mean = prod.mean()
    sd = np.sqrt(max(np.mean(prod**2) - mean**2, 0.0))
    if not sd > 1e-14 * max(np.mean(prod**2), 1e-300):
        raise CiTestError("residual products are constant; GCM undefined")
    stat = np.sqrt(N) * mean / sd
    return stat, 2.0 * norm.sf(abs(stat))


class GCM(CiTest):
    """Normalized covariance of regression residuals, normal null."""

    name = "gcm"

    def __init__(self, regressor: RegressorSpec | None = None):
        self.regressor = regressor or RegressorSpec()

    def config(self):
        return {"test": self.name, "regressor": self.regressor.to_dict()}

    def residuals(self, data: Dataset, target: int, z: tuple[int, ...]) -> np.ndarray:
        y = data.values[:, target]
        if not z:
            return y - y.mean()
        try:
            return fit_residuals(y, data.values[:, list(z)], self.regressor)
        except ValueError as exc:
            raise CiTestError(f"regressor failure: {exc}") from exc

    def compute(self, data, i, j, z):
        if data.N < 20:
            raise CiTestError(f"GCM needs N >= 20, got {data.N}")
        return gcm_statistic(self.residuals(data, i, z), self.residuals(data, j, z))

    def evaluate_many(self, data, queries: Sequence[Query], workers: int = 1):
        # residuals depend only on (target, z); share them across queries
        if data.N < 20:
            return [(float("nan"), float("nan"), f"GCM needs N >= 20, got {data.N}")] * len(queries)
        keys = sorted({(t, q[2]) for q in queries for t in q[:2] if q[2]})
        fitted = dict(zip(keys, parallel_map(_fit_key, keys, workers, (self, data))))
        out = []
        for i, j, z in queries:
            ri = fitted[(i, z)] if z else self.residuals(data, i, z)
            rj = fitted[(j, z)] if z else self.residuals(data, j, z)
            if isinstance(ri, str) or isinstance(rj, str):
                out.append((float("nan"), float("nan"), ri if isinstance(ri, str) else rj))
                continue
            try:
                stat, p = gcm_statistic(ri, rj)
            except CiTestError as exc:
                out.append((float("nan"), float("nan"), str(exc)))
            else:
                out.append((float(stat), float(min(max(p, 0.0), 1.0)), None))
        return out


def _fit_key(key):
    test, data = base._WORKER_STATE
    try:
        return test.residuals(data, *key)
    except (CiTestError, np.linalg.LinAlgError) as exc:
        return str(exc)


def gcm_test(d: Dataset, i: int, j: int, z=(), alpha: float = 0.05, reg: RegressorSpec | None = None) -> CiOutcome:
    return GCM(reg)(d, i, j, z, alpha)

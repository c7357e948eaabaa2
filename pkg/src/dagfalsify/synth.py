"""Synthetic ground truth: Erdos-Renyi DAGs and additive-noise SCMs."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.special import expit

from .citests.base import Dataset
from .graph import Dag, parents

NOISE_KINDS = ("gaussian", "uniform", "gaussian_mixture")
MECHANISMS = ("linear", "mlp")

NOISE_DEFAULTS: dict[str, dict[str, Any]] = {
    "gaussian": {"mean": 0.0, "variance": 0.1},
    "uniform": {"low": -1.0, "high": 1.0},
    "gaussian_mixture": {"means": (-2.0, 2.0), "variances": (0.1, 0.1), "weights": (0.5, 0.5)},
}


def er_dag(n: int, d: float, seed: int | None = None, node_names=None) -> Dag:
    """Random DAG with expected degree ``d``.

    Each unordered pair is an edge with probability ``d / (n - 1)``; edges
    point forward along a uniformly random node order, so node indices
    carry no information about the causal order.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if d < 0 or d > max(n - 1, 0):
        raise ValueError(f"expected degree must lie in [0, n-1] = [0, {n - 1}], got {d}")
    rng = np.random.default_rng(seed)
    p = d / (n - 1) if n > 1 else 0.0
    rows, cols = np.triu_indices(n, k=1)
    keep = rng.random(rows.size) < p
    order = rng.permutation(n)
    edges = {(int(order[a]), int(order[b])) for a, b in zip(rows[keep], cols[keep])}
    return Dag(n, edges, node_names)


def _check_noise(kind: str, params: dict) -> dict:
    if kind not in NOISE_DEFAULTS:
        raise ValueError(f"unknown noise kind {kind!r}; expected one of {NOISE_KINDS}")
    unknown = set(params) - set(NOISE_DEFAULTS[kind])
    if unknown:
        raise ValueError(f"unknown {kind} noise parameters: {sorted(unknown)}")
    p = {**NOISE_DEFAULTS[kind], **params}
    if kind == "gaussian":
        p = {"mean": float(p["mean"]), "variance": float(p["variance"])}
        if p["variance"] < 0:
            raise ValueError("gaussian variance must be >= 0")
    elif kind == "uniform":
        p = {"low": float(p["low"]), "high": float(p["high"])}
        if not p["low"] < p["high"]:
            raise ValueError("uniform noise needs low < high")
    else:
        means = tuple(float(v) for v in p["means"])
        variances = tuple(float(v) for v in p["variances"])
        weights = tuple(float(v) for v in p["weights"])
        if not (len(means) == len(variances) == len(weights) >= 1):
            raise ValueError("mixture means, variances and weights must have equal, nonzero length")
        if min(variances) < 0 or min(weights) < 0 or not np.isclose(sum(weights), 1.0):
            raise ValueError("mixture variances must be >= 0 and weights a probability vector")
        p = {"means": means, "variances": variances, "weights": weights}
    return p


def sample_noise(kind: str, params: dict | None, N: int, rng: np.random.Generator) -> np.ndarray:
    """``N`` i.i.d. draws of the given noise distribution.

    Examples
    --------
    >>> x = sample_noise("gaussian", {"variance": 0.1}, 5, np.random.default_rng(0))
    >>> x.shape
    (5,)
    """
    p = _check_noise(kind, dict(params or {}))
    if kind == "gaussian":
        return p["mean"] + np.sqrt(p["variance"]) * rng.standard_normal(N)
    if kind == "uniform":
        return rng.uniform(p["low"], p["high"], N)
    comp = rng.choice(len(p["weights"]), size=N, p=np.asarray(p["weights"]) / sum(p["weights"]))
    means = np.asarray(p["means"])[comp]
    sds = np.sqrt(np.asarray(p["variances"]))[comp]
    return means + sds * rng.standard_normal(N)


@dataclass(frozen=True)
class ScmSpec:
    """Additive-noise structural causal model ``X_i = f_i(pa_i) + N_i``.

    Mechanism parameters (linear weights, MLP widths and weights) are drawn
    from ``seed`` and are therefore fixed per spec; see :meth:`parameters`.

    Parameters
    ----------
    graph : Dag
    mechanism : {"linear", "mlp"}
    noise : {"gaussian", "uniform", "gaussian_mixture"}
    noise_params : dict
        Overrides of :data:`NOISE_DEFAULTS`. Gaussian noise defaults to zero
        mean and variance 0.1.
    weight_range : (float, float)
        Linear weights are ``U(lo, hi)``.
    mlp_width_range : (int, int)
        Hidden widths are uniform integers in this closed range.
    mlp_weight_range : (float, float)
    seed : int
    """

    graph: Dag
    mechanism: str = "linear"
    noise: str = "gaussian"
    noise_params: dict = field(default_factory=dict)
    weight_range: tuple[float, float] = (-1.0, 1.0)
    mlp_width_range: tuple[int, int] = (2, 100)
    mlp_weight_range: tuple[float, float] = (-5.0, 5.0)
    seed: int = 0

    def __post_init__(self):
        if self.mechanism not in MECHANISMS:
            raise ValueError(f"unknown mechanism {self.mechanism!r}; expected one of {MECHANISMS}")
        object.__setattr__(self, "noise_params", _check_noise(self.noise, dict(self.noise_params)))
        lo, hi = self.weight_range
        if not lo < hi:
            raise ValueError("weight_range needs lo < hi")
        wlo, whi = self.mlp_width_range
        if not 2 <= wlo <= whi:
            raise ValueError("MLP widths must be >= 2 with lo <= hi")
        if not self.mlp_weight_range[0] < self.mlp_weight_range[1]:
            raise ValueError("mlp_weight_range needs lo < hi")

    def parameters(self) -> list:
        """Per-node mechanism parameters, drawn in node order from the spec seed.

        Linear: a weight vector over sorted parents. MLP: three weight
        matrices ``(|pa|, N), (N, O), (O, 1)``; ``None`` for root nodes.
        """
        rng = np.random.default_rng([self.seed, 0])
        out = []
        for i in range(self.graph.n):
            k = len(parents(self.graph, i))
            if self.mechanism == "linear":
                out.append(rng.uniform(*self.weight_range, size=k))
            elif k == 0:
                out.append(None)
            else:
                h1, h2 = rng.integers(self.mlp_width_range[0], self.mlp_width_range[1] + 1, size=2)
                lo, hi = self.mlp_weight_range
                out.append((rng.uniform(lo, hi, (k, h1)), rng.uniform(lo, hi, (h1, h2)),
                            rng.uniform(lo, hi, (h2, 1))))
        return out

    def to_dict(self) -> dict:
        return {
            "n": self.graph.n,
            "edges": sorted(map(list, self.graph.edges)),
            "mechanism": self.mechanism,
            "noise": self.noise,
            "noise_params": {k: list(v) if isinstance(v, tuple) else v for k, v in self.noise_params.items()},
            "weight_range": list(self.weight_range),
            "mlp_width_range": list(self.mlp_width_range),
            "mlp_weight_range": list(self.mlp_weight_range),
            "seed": self.seed,
        }


def mlp_forward(pa: np.ndarray, weights) -> np.ndarray:
    w1, w2, w3 = weights
    return expit(expit(expit(pa @ w1) @ w2) @ w3)[:, 0]


def _sample(spec: ScmSpec, N: int, mechanism: str) -> Dataset:
    if spec.mechanism != mechanism:
        raise ValueError(f"spec mechanism is {spec.mechanism!r}, not {mechanism!r}")
    g = spec.graph
    params = spec.parameters()
    rng = np.random.default_rng([spec.seed, 1])
    X = np.zeros((N, g.n))
    for i in g.topological_order:
        pa = sorted(parents(g, i))
        noise = sample_noise(spec.noise, spec.noise_params, N, rng)
        if not pa:
            X[:, i] = noise
        elif mechanism == "linear":
            X[:, i] = X[:, pa] @ params[i] + noise
        else:
            X[:, i] = mlp_forward(X[:, pa], params[i]) + noise
    names = g.node_names or tuple(f"X{k}" for k in range(g.n))
    return Dataset(X, names)


def sample_linear(spec: ScmSpec, N: int) -> Dataset:
    """Ancestral sample of ``N`` rows from a linear additive-noise SCM."""
    return _sample(spec, N, "linear")


def sample_mlp(spec: ScmSpec, N: int) -> Dataset:
    """Ancestral sample of ``N`` rows from a random-MLP additive-noise SCM."""
    return _sample(spec, N, "mlp")


def sample_scm(spec: ScmSpec, N: int) -> Dataset:
    return _sample(spec, N, spec.mechanism)

"""Kernel conditional independence test with a gamma null approximation."""

from __future__ import annotations

import zlib

import numpy as np
from scipy.spatial.distance import pdist, squareform
from scipy.stats import gamma

from .base import CiOutcome, CiTest, CiTestError, Dataset, standardize


def rbf_median(x: np.ndarray) -> np.ndarray:
    """Gaussian kernel, bandwidth ``sqrt(median(d^2) / 2)`` over distinct pairs."""
    d2 = squareform(pdist(x, "sqeuclidean"))
    pos = d2[np.triu_indices_from(d2, k=1)]
    pos = pos[pos > 0]
    if pos.size == 0:
        raise CiTestError("degenerate kernel matrix: all samples coincide")
    width2 = 0.5 * np.median(pos)
    return np.exp(-d2 / (2.0 * width2))


def _center(K: np.ndarray) -> np.ndarray:
    row = K.mean(axis=0)
    return K - row[None, :] - row[:, None] + row.mean()


def _psd_part(K: np.ndarray, thresh: float) -> np.ndarray:
    w, v = np.linalg.eigh(0.5 * (K + K.T))
    if w[-1] <= 0:
        raise CiTestError("degenerate kernel matrix: no positive eigenvalues")
    keep = w > w[-1] * thresh
    v = v[:, keep] * np.sqrt(w[keep])
    return v @ v.T


def _gamma_pvalue(stat: float, mean: float, var: float) -> float:
    if not (mean > 0 and var > 0):
        raise CiTestError("degenerate kernel matrix: null moments vanish")
    shape, scale = mean**2 / var, var / mean
    return float(gamma.sf(stat, shape, scale=scale))


class KCI(CiTest):
    """Kernel-based CI test.

    Parameters
    ----------
    epsilon : float
        Ridge penalty of the kernel regression on the conditioning set.
    max_samples : int
        Kernel matrices are ``N x N``; above this cap a fixed, query-seeded
        subsample of rows is used.
    eig_threshold : float
        Relative cutoff for eigenvalues kept in the null approximation.
    """

    name = "kci"

    def __init__(self, epsilon: float = 1e-3, max_samples: int = 2000, eig_threshold: float = 1e-5):
        self.epsilon = epsilon
        self.max_samples = max_samples
        self.eig_threshold = eig_threshold

    def config(self):
        return {
            "test": self.name,
            "epsilon": self.epsilon,
            "max_samples": self.max_samples,
            "eig_threshold": self.eig_threshold,
        }

    def compute(self, data: Dataset, i, j, z):
        vals = data.values
        if data.N > self.max_samples:
            seed = zlib.crc32(repr((i, j, z)).encode())
            rows = np.sort(np.random.default_rng(seed).choice(data.N, self.max_samples, replace=False))
            vals = vals[rows]
        x = standardize(vals[:, [i]])
        y = standardize(vals[:, [j]])
        n = len(x)
        if not z:
            Kx = _center(rbf_median(x))
            Ky = _center(rbf_median(y))
            stat = float(np.sum(Kx * Ky))
            mean = np.trace(Kx) * np.trace(Ky) / n
            var = 2.0 * np.sum(Kx**2) * np.sum(Ky**2) / n**2
            return stat, _gamma_pvalue(stat, mean, var)

        zs = standardize(vals[:, list(z)])
        Kx = _center(rbf_median(np.hstack([x, 0.5 * zs])))
        Ky = _center(rbf_median(y))
        Kz = _center(rbf_median(zs))
        w, v = np.linalg.eigh(0.5 * (Kz + Kz.T))
        w = np.clip(w, 0.0, None)
        # eps * (Kz + eps I)^-1 from the eigendecomposition of Kz
        Rz = (v * (self.epsilon / (w + self.epsilon))) @ v.T
        KxR = Rz @ Kx @ Rz
        KyR = Rz @ Ky @ Rz
        stat = float(np.sum(KxR * KyR))
        # the null mixture weights are the eigenvalues of the Hadamard product
        # of the truncated PSD parts
        uu = _psd_part(KxR, self.eig_threshold) * _psd_part(KyR, self.eig_threshold)
        mean = float(np.trace(uu))
        var = 2.0 * float(np.sum(uu * uu))
        return stat, _gamma_pvalue(stat, mean, var)


def kci_test(d: Dataset, i: int, j: int, z=(), alpha: float = 0.05) -> CiOutcome:
    return KCI()(d, i, j, z, alpha)

"""Partial-correlation test with Fisher's z-transform."""

from __future__ import annotations

import numpy as np
from scipy.stats import norm

from .base import CiOutcome, CiTest, CiTestError, Dataset

_EPS = 1e-12


def _residualize(y: np.ndarray, design: np.ndarray | None) -> np.ndarray:
    if design is None:
        return y - y.mean()
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    return y - design @ coef


class PartialCorrelation(CiTest):
    """Gaussian CI test on the partial correlation of ``X_i`` and ``X_j`` given ``X_z``.

    The partial correlation is the correlation of the least-squares residuals
    of both variables on ``[1, X_z]``. Under the null,
    ``atanh(r) * sqrt(N - |z| - 3)`` is standard normal.
    """

    name = "pcorr"

    def compute(self, data: Dataset, i, j, z):
        x = data.values
        N, k = x.shape[0], len(z)
        if N <= k + 3:
            raise CiTestError(f"partial correlation needs N > |z| + 3 (N={N}, |z|={k})")
        design = None
        if k:
            design = np.column_stack([np.ones(N), x[:, list(z)]])
            if np.linalg.matrix_rank(design) < k + 1:
                raise CiTestError("singular covariance of the conditioning set")
        ri = _residualize(x[:, i], design)
        rj = _residualize(x[:, j], design)
        si, sj = ri @ ri, rj @ rj
        if si <= _EPS * max(x[:, i] @ x[:, i], 1.0) or sj <= _EPS * max(x[:, j] @ x[:, j], 1.0):
            raise CiTestError("singular covariance: residual variance vanishes")
        r = float(np.clip(ri @ rj / np.sqrt(si * sj), -1.0, 1.0))
        if abs(r) >= 1.0:
            return np.inf, 0.0
        stat = np.arctanh(r) * np.sqrt(N - k - 3)
        return stat, 2.0 * norm.sf(abs(stat))


def pcorr_test(d: Dataset, i: int, j: int, z=(), alpha: float = 0.05) -> CiOutcome:
    return PartialCorrelation()(d, i, j, z, alpha)

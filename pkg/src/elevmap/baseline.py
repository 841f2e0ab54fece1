"""Classical dense-reconstruction baseline: project the height means, then
iteratively fill holes with neighbor averages.

The fill is a Jacobi-style simultaneous update: each sweep computes every
new value from the previous sweep's state, so results do not depend on
traversal order. Filled values are means of already-filled 4-neighbors,
which keeps them inside the observed min/max (discrete maximum principle).
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .exceptions import DataError
from .features import PointFeatureMap
from .validation import check_map


def naive_height(pfm: PointFeatureMap) -> np.ndarray:
    """Sparse height map: E(Z) on observed cells, NaN elsewhere."""
    return np.where(pfm.count > 0, pfm.mean, np.nan)


def inpaint_iterative(sparse: np.ndarray, iterations: int | None = None) -> np.ndarray:
    """Fill NaN cells with the mean of filled 4-neighbors until dense.

    The default iteration cap (H + W) is enough for any hole in a connected
    observed set; cells still unreached at the cap stay NaN.
    """
    a = check_map(sparse, "sparse map")
    filled = np.isfinite(a)
    if not filled.any():
        raise DataError("map has no observed cells to inpaint from")
    cap = (a.shape[0] + a.shape[1]) if iterations is None else int(iterations)
    out = np.where(filled, a, 0.0)
    for _ in range(cap):
        if filled.all():
            break
        nb_sum = np.zeros_like(out)
        nb_cnt = np.zeros(out.shape, dtype=np.int64)
        for axis, shift in ((0, 1), (0, -1), (1, 1), (1, -1)):
            v = np.roll(out * filled, shift, axis=axis)
            f = np.roll(filled, shift, axis=axis)
            # np.roll wraps around; zero the wrapped edge line.
            edge = 0 if shift == 1 else -1
            if axis == 0:
                v[edge, :] = 0.0
                f[edge, :] = False
            else:
                v[:, edge] = 0.0
                f[:, edge] = False
            nb_sum += v
            nb_cnt += f
        newly = ~filled & (nb_cnt > 0)
        if not newly.any():
            break
        out[newly] = nb_sum[newly] / nb_cnt[newly]
        filled = filled | newly
    out[~filled] = np.nan
    return out


class IterativeInpainter(BaseEstimator, TransformerMixin):
    """sklearn-style transformer wrapping the iterative hole filler.

    transform() maps a sparse (NaN-holed) 2D height map to a dense one;
    fit() is stateless and exists for pipeline compatibility.
    """

    def __init__(self, iterations=None):
        self.iterations = iterations

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        return inpaint_iterative(X, iterations=self.iterations)

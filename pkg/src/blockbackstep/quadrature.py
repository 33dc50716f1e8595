"""Trapezoid weights for piecewise-smooth integrands on uniform grids.

An integrand may jump at known break points. Nodes lying exactly on a
break belong to the region above it. Each region is integrated on its
own, with the values at the region ends extrapolated linearly from the
region's own nodes, so a jump costs O(h^2) instead of O(h).
"""

from __future__ import annotations

import numpy as np
import scipy.integrate

__all__ = ["split_trapezoid_weights", "volterra_weight_matrix", "cumulative_trapezoid"]


def split_trapezoid_weights(h: float, a: int, breaks=()) -> np.ndarray:
    """Weights ``w`` with ``sum_j w[j] f(j h) ~ int_0^{a h} f``."""
    w = np.zeros(a + 1)
    if a == 0:
        return w
    top = a * h
    cuts = sorted(c for c in breaks if 0.0 < c < top - 1e-12 * h)
    edges = [0.0, *cuts, top]
    y = h * np.arange(a + 1)
    for lo, hi in zip(edges[:-1], edges[1:]):
        last = hi >= top
        sel = (y >= lo - 1e-12 * h) & ((y < hi - 1e-12 * h) | last)
        idx = np.flatnonzero(sel)
        if idx.size == 0:
            # region thinner than a cell: plain linear interpolation at midpoint
            mid = 0.5 * (lo + hi)
            k = min(int(mid // h), a - 1)
            t = mid / h - k
            w[k] += (hi - lo) * (1 - t)
            w[k + 1] += (hi - lo) * t
            continue
        j0, j1 = int(idx[0]), int(idx[-1])
        if j1 > j0:
            w[j0:j1 + 1] += h
            w[j0] -= h / 2
            w[j1] -= h / 2
        for end, node, nbr in ((lo, j0, j0 + 1), (hi, j1, j1 - 1)):
            seg = abs(y[node] - end)
            if seg <= 1e-14 * h:
                continue
            w[node] += seg / 2
            if j1 > j0:
                theta = seg / h
                w[node] += (seg / 2) * (1 + theta)
                w[nbr] -= (seg / 2) * theta
            else:
                w[node] += seg / 2
    return w


def volterra_weight_matrix(G: int, ratios=()) -> np.ndarray:
    """Row ``a`` integrates over ``[0, x_a]`` with breaks at ``rho * x_a``."""
    h = 1.0 / G
    W = np.zeros((G + 1, G + 1))
    for a in range(1, G + 1):
        W[a, : a + 1] = split_trapezoid_weights(h, a, [r * a * h for r in ratios])
    return W


def cumulative_trapezoid(f: np.ndarray, h: float, axis: int = -1) -> np.ndarray:
    """``int_0^{x_a} f`` at every node along ``axis`` (zero at the first node)."""
    return scipy.integrate.cumulative_trapezoid(np.asarray(f, dtype=float), dx=h, axis=axis, initial=0)

"""Characteristic back-tracing on the triangle ``0 <= y <= x <= 1``.

A kernel component ``k`` obeying ``cx k_x + cy k_y = S`` (``cx > 0``)
is recovered at every node as

    k(P) = k(foot) + (1 / cx) int_{x_foot}^{x_P} S(x, y(x)) dx

where the foot is the point where the backward characteristic meets
the diagonal or the ``y = 0`` edge. The integral is a fixed linear map
of the nodal source values, assembled once into a sparse matrix.

The source may jump across rays ``y = rho x``; samples are interpolated
from nodes on their own side of every ray, and trapezoid segments that
cross a ray are split at the crossing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

__all__ = ["CharacteristicOperator", "build_characteristic_operator", "triangle_nodes"]

_EPS = 1e-10
_SAMPLES_PER_CHUNK = 2_000_000


def triangle_nodes(G: int):
    """Node indices ``(a, b)`` with ``b <= a``, in flat row-major order."""
    a, b = np.tril_indices(G + 1)
    return a, b


def _region(x, y, ratios):
    """Number of rays lying on or below the point (``y >= rho x``)."""
    r = np.zeros(np.shape(x), dtype=np.int64)
    for rho in ratios:
        r += (y - rho * x >= -_EPS * (1.0 + x)).astype(np.int64)
    return r


def _edge_stencil(u, G):
    """Three-point Lagrange stencil at fractional node positions ``u`` in ``[0, G]``."""
    j = np.clip(np.rint(u).astype(np.int64), 1, max(G - 1, 1))
    if G < 2:
        lo = np.zeros_like(j)
        t = np.clip(u, 0.0, 1.0)
        z = np.zeros_like(t)
        return (lo, lo + 1, lo + 1), (1 - t, t, z)
    t = u - j
    nodes = (j - 1, j, j + 1)
    w = (0.5 * t * (t - 1.0), (1.0 - t) * (1.0 + t), 0.5 * t * (t + 1.0))
    return nodes, w


@dataclass(frozen=True)
class CharacteristicOperator:
    """Sparse operators mapping source and edge data to nodal values.

    All operators act on flattened ``(G+1, G+1)`` arrays indexed
    ``a * (G+1) + b``; rows outside the triangle are empty.
    """

    G: int
    ratio: float
    diag_foot: np.ndarray  # bool per flat node
    source: sp.csr_matrix  # integral along the characteristic (times cx)
    edge: sp.csr_matrix  # interpolation of y = 0 edge data, (N*N, G+1)
    diagonal: sp.csr_matrix  # interpolation of diagonal data, (N*N, G+1)

    def apply(self, cx: float, source_field, edge_data=None, diag_data=None):
        out = self.source @ np.ravel(source_field) / cx
        if edge_data is not None:
            out = out + self.edge @ edge_data
        if diag_data is not None:
            out = out + self.diagonal @ diag_data
        N = self.G + 1
        return out.reshape(N, N)


def _column_interp(c, ys, reg_pt, h, ratios):
    """Side-aware linear interpolation inside grid column ``c`` at height ``ys``.

    Quadratic where three same-side nodes are available, linear otherwise.
    Returns node rows ``(n1, n2, n3)`` and weights ``(w1, w2, w3)``.
    """
    fy = ys / h
    b0 = np.floor(fy + 1e-12).astype(np.int64)
    b0 = np.clip(b0, 0, np.maximum(c - 1, 0))
    t = np.clip(fy - b0, 0.0, 1.0)
    b1 = np.minimum(b0 + 1, c)
    xc = c * h

    def reg(b):
        return _region(xc, b * h, ratios)

    r0, r1 = reg(b0), reg(b1)
    bm = np.maximum(b0 - 1, 0)
    bp = np.minimum(b0 + 2, c)
    rm, rp = reg(bm), reg(bp)

    n1, n2 = b0.copy(), b1.copy()
    w1, w2 = 1.0 - t, t.copy()

    ok0, ok1 = r0 == reg_pt, r1 == reg_pt
    # upper neighbour across a ray: extrapolate from below
    up = ok0 & ~ok1
    ext = up & (b0 >= 1) & (rm == reg_pt)
    n1 = np.where(ext, bm, n1)
    n2 = np.where(ext, b0, n2)
    w1 = np.where(ext, -t, np.where(up, 1.0, w1))
    w2 = np.where(ext, 1.0 + t, np.where(up, 0.0, w2))
    n2 = np.where(up & ~ext, b0, n2)
    # lower neighbour across a ray: extrapolate from above
    lo = ~ok0 & ok1
    ext = lo & (b0 + 2 <= c) & (rp == reg_pt)
    s = 1.0 - t
    n1 = np.where(ext, b1, np.where(lo, b1, n1))
    n2 = np.where(ext, bp, np.where(lo, b1, n2))
    w1 = np.where(ext, 1.0 + s, np.where(lo, 1.0, w1))
    w2 = np.where(ext, -s, np.where(lo, 0.0, w2))
    # neither neighbour on the point's side (wedge thinner than a cell)
    neither = ~ok0 & ~ok1
    near = np.where(t < 0.5, b0, b1)
    n1 = np.where(neither, near, n1)
    n2 = np.where(neither, near, n2)
    w1 = np.where(neither, 1.0, w1)
    w2 = np.where(neither, 0.0, w2)

    # quadratic through a third node where the stencil is on one side of every ray
    n3 = n1.copy()
    w3 = np.zeros_like(w1)
    plain = ok0 & ok1 & (c >= 2)
    below = plain & (t < 0.5) & (b0 >= 1) & (rm == reg_pt)
    above = plain & ~below & (b0 + 2 <= c) & (rp == reg_pt)
    below |= plain & ~above & (b0 >= 1) & (rm == reg_pt)
    above &= ~below
    # nodes b0-1, b0, b0+1
    n3 = np.where(below, bm, n3)
    w3 = np.where(below, 0.5 * t * (t - 1.0), w3)
    w1 = np.where(below, (1.0 - t) * (1.0 + t), w1)
    w2 = np.where(below, 0.5 * t * (t + 1.0), w2)
    # nodes b0, b0+1, b0+2
    n3 = np.where(above, bp, n3)
    w3 = np.where(above, 0.5 * t * (t - 1.0), w3)
    w1 = np.where(above, 0.5 * (t - 1.0) * (t - 2.0), w1)
    w2 = np.where(above, -t * (t - 2.0), w2)
    return n1, n2, n3, w1, w2, w3


def _node_gradient_piece(a, b, lu, ratio, G, ratios):
    """Triplets adding ``-(lu^2 / 2) (f_x + ratio f_y)`` at nodes ``(a, b)``.

    This turns the constant piece ``lu f(P)`` next to a cut into a linear
    one, with derivatives from neighbour nodes on the same side of every ray.
    """
    N = G + 1
    h = 1.0 / G
    reg = _region(a * h, b * h, ratios)
    P = a * N + b
    rows, cols, vals = [], [], []
    coef = -0.5 * lu * lu / h

    def one_sided(fwd_ok, fwd, bwd_ok, bwd, scale):
        use_f = fwd_ok
        use_b = ~fwd_ok & bwd_ok
        for sel, q, sgn in ((use_f, fwd, 1.0), (use_b, bwd, -1.0)):
            rows.extend([P[sel], P[sel]])
            cols.extend([q[sel], P[sel]])
            vals.extend([sgn * scale[sel], -sgn * scale[sel]])

    ax = np.minimum(a + 1, G)
    fwd_ok = (a + 1 <= G) & (_region(ax * h, b * h, ratios) == reg)
    bx = np.maximum(a - 1, 0)
    bwd_ok = (a - 1 >= b) & (_region(bx * h, b * h, ratios) == reg)
    one_sided(fwd_ok, ax * N + b, bwd_ok, bx * N + b, coef)
    by = np.minimum(b + 1, a)
    fwd_ok = (b + 1 <= a) & (_region(a * h, by * h, ratios) == reg)
    bb = np.maximum(b - 1, 0)
    bwd_ok = (b >= 1) & (_region(a * h, bb * h, ratios) == reg)
    one_sided(fwd_ok, a * N + by, bwd_ok, a * N + bb, coef * ratio)
    return np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)


def build_characteristic_operator(G: int, ratio: float, ratios=()) -> CharacteristicOperator:
    """Assemble the back-tracing operators for characteristics of slope ``ratio = cy / cx``.

    ``ratio > 0`` (K-type): the foot is on the diagonal when ``ratio < 1``
    and ``y >= ratio * x``, on ``y = 0`` otherwise. ``ratio < 0`` (L-type):
    the foot is always on the diagonal.
    """
    if ratio == 0:
        raise ValueError("characteristic slope must be nonzero")
    N = G + 1
    ratios = tuple(sorted(float(r) for r in ratios))
    a_all, b_all = triangle_nodes(G)
    # assemble in chunks of nodes to bound the size of the sample arrays
    per_row = max(1, (G + 1) // 2)
    chunk = max(1, _SAMPLES_PER_CHUNK // (per_row * (G + 1)))
    rows_per = np.bincount(a_all, minlength=G + 1)
    bounds = np.concatenate([[0], np.cumsum(rows_per)])
    source = sp.csr_matrix((N * N, N * N))
    edge = sp.csr_matrix((N * N, N))
    diagonal = sp.csr_matrix((N * N, N))
    dflat = np.zeros(N * N, dtype=bool)
    for a0 in range(0, G + 1, chunk):
        sl = slice(bounds[a0], bounds[min(a0 + chunk, G + 1)])
        s_, e_, d_, flat, diag = _assemble(G, ratio, ratios, a_all[sl], b_all[sl])
        source = source + s_
        edge = edge + e_
        diagonal = diagonal + d_
        dflat[flat] = diag
    return CharacteristicOperator(G, float(ratio), dflat, source.tocsr(), edge.tocsr(), diagonal.tocsr())


def _assemble(G, ratio, ratios, a, b):
    N = G + 1
    h = 1.0 / G
    xP, yP = a * h, b * h
    flat = a * N + b

    if ratio < 0:
        diag = np.ones(a.size, dtype=bool)
    elif ratio < 1:
        diag = yP >= ratio * xP - _EPS * h
    else:
        diag = np.zeros(a.size, dtype=bool)
    with np.errstate(divide="ignore", invalid="ignore"):
        xf = np.where(diag, (yP - ratio * xP) / (1.0 - ratio), xP - yP / ratio)
    xf = np.clip(xf, 0.0, xP)
    yf = np.where(diag, xf, 0.0)

    a_first = np.ceil(xf / h - 1e-9).astype(np.int64)
    a_first = np.minimum(a_first, a)
    cnt = a - a_first + 1
    tail = a_first * h - xf

    # column samples: node p, k = 0..cnt-1, column c = a - k
    node = np.repeat(np.arange(a.size), cnt)
    starts = np.cumsum(cnt) - cnt
    k = np.arange(node.size) - np.repeat(starts, cnt)
    c = a[node] - k
    ys = yP[node] - ratio * (xP[node] - c * h)
    ys = np.clip(ys, 0.0, c * h)
    reg_s = _region(c * h, ys, ratios)
    last = k == cnt[node] - 1

    # trapezoid weights (before ray splitting)
    seg_after = np.where(last, tail[node], h)
    seg_before = np.where(k == 0, 0.0, h)
    wq = 0.5 * (seg_before + seg_after)
    w_foot = 0.5 * tail.copy()

    # segment between sample k and k+1 (or the foot) crossing a ray
    reg_f = _region(xf, yf, ratios)
    reg_next = np.empty_like(reg_s)
    reg_next[:-1] = reg_s[1:]
    reg_next[last] = reg_f[node[last]]
    cross = (reg_next != reg_s) & (seg_after > 0)
    extra = []
    if np.any(cross) and ratios:
        ci = np.flatnonzero(cross)
        lo_r = np.minimum(reg_s[ci], reg_next[ci])
        rho = np.asarray(ratios)[np.clip(lo_r, 0, len(ratios) - 1)]
        p = node[ci]
        with np.errstate(divide="ignore", invalid="ignore"):
            xc = (yP[p] - ratio * xP[p]) / (rho - ratio)
        x_hi = c[ci] * h
        x_lo = x_hi - seg_after[ci]
        xc = np.clip(np.nan_to_num(xc, nan=0.5 * (x_hi + x_lo)), x_lo, x_hi)
        # replace the half-half split of this segment by one-sided pieces
        wq[ci] += (x_hi - xc) - 0.5 * seg_after[ci]
        end_w = (xc - x_lo) - 0.5 * seg_after[ci]
        is_last = last[ci]
        nxt = ci[~is_last] + 1
        np.add.at(wq, nxt, end_w[~is_last])
        np.add.at(w_foot, p[is_last], end_w[is_last])
        # linear rather than constant pieces: extrapolate each side to the cut
        # from the next sample further away on the same side
        lu = x_hi - xc
        prev_ok = (k[ci] >= 1) & (reg_s[np.maximum(ci - 1, 0)] == reg_s[ci])
        e = 0.5 * lu * lu / h
        np.add.at(wq, ci[prev_ok], e[prev_ok])
        np.add.at(wq, ci[prev_ok] - 1, -e[prev_ok])
        # first segment: no earlier sample, use a one-sided nodal gradient at P
        first = (k[ci] == 0) & (lu > 0)
        if np.any(first):
            extra.append(_node_gradient_piece(a[p[first]], b[p[first]], lu[first], ratio, G, ratios))
        ll = xc - x_lo
        j2 = np.minimum(ci + 2, node.size - 1)
        next_ok = (
            ~is_last
            & ~last[np.minimum(ci + 1, node.size - 1)]
            & (reg_s[j2] == reg_s[np.minimum(ci + 1, node.size - 1)])
        )
        e = 0.5 * ll * ll / h
        np.add.at(wq, ci[next_ok] + 1, e[next_ok])
        np.add.at(wq, ci[next_ok] + 2, -e[next_ok])

    n1, n2, n3, c1, c2, c3 = _column_interp(c, ys, reg_s, h, ratios)
    rows = np.concatenate([flat[node]] * 3)
    cols = np.concatenate([c * N + n1, c * N + n2, c * N + n3])
    vals = np.concatenate([wq * c1, wq * c2, wq * c3])

    # foot sample, quadratic interpolation along its edge
    fl, fw = _edge_stencil(xf / h, G)
    rows = np.concatenate([rows, flat, flat, flat] + [e[0] for e in extra])
    cols = np.concatenate(
        [cols]
        + [np.where(diag, fl[q] * N + fl[q], fl[q] * N) for q in range(3)]
        + [e[1] for e in extra]
    )
    vals = np.concatenate([vals] + [w_foot * fw[q] for q in range(3)] + [e[2] for e in extra])
    keep = vals != 0.0
    source = sp.csr_matrix((vals[keep], (rows[keep], cols[keep])), shape=(N * N, N * N))

    ev = np.concatenate(fw)
    er = np.concatenate([flat] * 3)
    ec = np.concatenate(fl)
    dmask = np.concatenate([diag] * 3)
    edge = sp.csr_matrix((ev[~dmask], (er[~dmask], ec[~dmask])), shape=(N * N, N))
    diagonal = sp.csr_matrix((ev[dmask], (er[dmask], ec[dmask])), shape=(N * N, N))
    return source, edge, diagonal, flat, diag

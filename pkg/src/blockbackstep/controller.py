"""Boundary control law and the direct/inverse Volterra transformations.

Quadrature everywhere is the split trapezoid of :mod:`.quadrature`, with
breaks at the discontinuity rays of the kernels. The inverse map marches
forward in ``x`` with the same weights, so it is the exact inverse of the
discrete direct map.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .block_transform import BlockTransform, apply_block_transform
from .hyperbolic_model import ModelError, StateSnapshot
from .kernel_solver import GainSet, KernelError, KernelSet
from .quadrature import split_trapezoid_weights, volterra_weight_matrix

__all__ = [
    "ControlLaw",
    "TargetSnapshot",
    "make_control_law",
    "control_input",
    "boundary_feedback_split",
    "to_target_state",
    "target_map",
    "from_target_state",
]


@dataclass(frozen=True)
class ControlLaw:
    """Gains at ``x = 1`` together with their quadrature weights."""

    gains: GainSet
    weights: np.ndarray  # (G+1,)
    breaks: tuple[float, ...]

    def __post_init__(self):
        g = self.gains
        for arr in (g.GK, g.GL, g.GPhi):
            if not np.all(np.isfinite(arr)):
                raise ModelError("control gains are not finite")
        if abs(self.weights.sum() - 1.0) > 1e-12:
            raise ModelError("quadrature weights must sum to 1 over [0, 1]")

    @property
    def G(self) -> int:
        return self.weights.size - 1


def make_control_law(gains: GainSet) -> ControlLaw:
    G = gains.y.size - 1
    breaks = tuple(float(r) for r in gains.breaks)
    w = split_trapezoid_weights(1.0 / G, G, breaks)
    return ControlLaw(gains=gains, weights=w, breaks=breaks)


def _check_grid(G_law: int, s) -> None:
    if s.grid.size != G_law + 1:
        raise ModelError(f"grid mismatch: law has {G_law + 1} nodes, snapshot {s.grid.size}")


def control_input(law: ControlLaw, s: StateSnapshot) -> np.ndarray:
    """``U = int GK Y + int GL Z + GPhi X``."""
    _check_grid(law.G, s)
    g, w = law.gains, law.weights
    U = np.einsum("b,bij,jb->i", w, g.GK, s.Y)
    if s.Z.shape[0]:
        U += np.einsum("b,bij,jb->i", w, g.GL, s.Z)
    if s.X.size:
        U += g.GPhi @ s.X
    return U


def boundary_feedback_split(law: ControlLaw, s: StateSnapshot):
    """Split ``U = U0 + M Y(1)`` so a simulator can impose ``Y(1) = U`` implicitly."""
    M = law.weights[-1] * law.gains.GK[-1]
    U = control_input(law, s)
    return U - M @ s.Y[:, -1], M


@dataclass
class TargetSnapshot:
    grid: np.ndarray
    sigma: np.ndarray  # (n, G+1)
    Z: np.ndarray
    X: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        if not np.all(np.isfinite(self.sigma)):
            raise ModelError("target state is not finite")


def _weights(ks: KernelSet) -> np.ndarray:
    return volterra_weight_matrix(ks.grid.G, ks.ratios)


def _compatible(ks: KernelSet, bt: BlockTransform, grid) -> None:
    if ks.grid.G != bt.G or grid.size != bt.G + 1:
        raise ModelError(
            f"grid mismatch: kernels G={ks.grid.G}, transform G={bt.G}, snapshot {grid.size} nodes"
        )


def _flat_operator(W, F):
    """``(W[a, b] F[i, j, a, b])`` as an ``(i a) x (j b)`` matrix."""
    ni, nj, N, _ = F.shape
    return (W * F).transpose(0, 2, 1, 3).reshape(ni * N, nj * N)


def target_map(ks: KernelSet, bt: BlockTransform):
    """Precompute the discrete direct map; returns ``snapshot -> TargetSnapshot``.

    Use this when transforming many snapshots with the same kernels.
    """
    W = _weights(ks)
    n, m, N = ks.K.shape[0], ks.L.shape[1], ks.grid.G + 1
    MK = _flat_operator(W, ks.K)
    ML = _flat_operator(W, ks.L) if m else None

    def apply(s: StateSnapshot) -> TargetSnapshot:
        _compatible(ks, bt, s.grid)
        Yb = apply_block_transform(bt, s.Y, "forward")
        sigma = Yb - (MK @ Yb.ravel()).reshape(n, N)
        if ML is not None and s.Z.shape[0]:
            sigma -= (ML @ s.Z.ravel()).reshape(n, N)
        if s.X.size:
            sigma -= np.einsum("ija,j->ia", ks.Phi, s.X)
        return TargetSnapshot(s.grid.copy(), sigma, s.Z.copy(), s.X.copy(), s.t)

    return apply


def to_target_state(ks: KernelSet, bt: BlockTransform, s: StateSnapshot) -> TargetSnapshot:
    """``sigma = Ybar - int K Ybar - int L Z - Phi X`` with ``Ybar = A(x) Y``."""
    _compatible(ks, bt, s.grid)
    return target_map(ks, bt)(s)


def from_target_state(ks: KernelSet, bt: BlockTransform, t: TargetSnapshot) -> np.ndarray:
    """Recover ``Y`` by forward marching of the second-kind Volterra equation."""
    _compatible(ks, bt, t.grid)
    W = _weights(ks)
    n, N = t.sigma.shape
    rhs = t.sigma.copy()
    if t.Z.shape[0]:
        rhs += np.einsum("ab,ijab,jb->ia", W, ks.L, t.Z)
    if t.X.size:
        rhs += np.einsum("ija,j->ia", ks.Phi, t.X)
    Yb = np.zeros((n, N))
    eye = np.eye(n)
    for a in range(N):
        known = rhs[:, a] + np.einsum("b,ijb,jb->i", W[a, :a], ks.K[:, :, a, :a], Yb[:, :a])
        M = eye - W[a, a] * ks.K[:, :, a, a]
        try:
            Yb[:, a] = np.linalg.solve(M, known)
        except np.linalg.LinAlgError as exc:
            raise KernelError(f"singular endpoint system at node {a}") from exc
    return apply_block_transform(bt, Yb, "inverse")

"""Block-diagonalizing change of variables for isotachic states.

Within every block ``j`` of equal speed ``s_j`` the map
``A_j(x) = expm(x / s_j * Lmm_j)`` removes the intra-block coupling of
``Lmm``. ``Ybar = A(x) Y`` then satisfies a plant whose coefficients
depend on ``x`` (the "bar" coefficients built here).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .hyperbolic_model import HyperbolicSystem, ModelError, uniform_grid

__all__ = [
    "BlockTransform",
    "BarCoefficients",
    "build_transform",
    "bar_coefficients",
    "apply_block_transform",
    "block_diagonal_part",
    "within_block_max",
]


def block_diagonal_part(M: np.ndarray, slices) -> np.ndarray:
    out = np.zeros_like(M)
    for s in slices:
        out[s, s] = M[s, s]
    return out


@dataclass(frozen=True)
class BlockTransform:
    grid: np.ndarray
    A_of_x: np.ndarray  # (G+1, n, n)
    Ainv_of_x: np.ndarray  # (G+1, n, n)

    @property
    def G(self) -> int:
        return self.grid.size - 1

    def inverse_error(self) -> float:
        n = self.A_of_x.shape[1]
        prod = np.einsum("aij,ajk->aik", self.A_of_x, self.Ainv_of_x)
        return float(np.abs(prod - np.eye(n)).max())


def build_transform(sys: HyperbolicSystem, grid_size: int) -> BlockTransform:
    """Evaluate ``A(x)`` and its inverse at every node of a uniform grid."""
    x = uniform_grid(grid_size)
    n = sys.n
    A = np.zeros((x.size, n, n))
    Ainv = np.zeros_like(A)
    for s, speed in zip(sys.blocks.slices(), sys.blocks.speeds):
        gen = sys.Lambda_mm[s, s] / speed
        for a, xa in enumerate(x):
            A[a, s, s] = scipy.linalg.expm(xa * gen)
            Ainv[a, s, s] = scipy.linalg.expm(-xa * gen)
    A[0] = np.eye(n)
    Ainv[0] = np.eye(n)
    return BlockTransform(grid=x, A_of_x=A, Ainv_of_x=Ainv)


@dataclass(frozen=True)
class BarCoefficients:
    """Coefficients of the ``(Z, Ybar, X)`` plant, sampled on the grid.

    Every array carries the node index first. ``F_mm[a, b]`` holds
    ``A(x_a) F-- Ainv(y_b)``; entries with ``b > a`` are left at zero.
    """

    grid: np.ndarray
    Lambda_pm: np.ndarray  # (G+1, m, n)
    F_pm: np.ndarray  # (G+1, m, n)
    Lambda_mm: np.ndarray  # (G+1, n, n)
    Lambda_mp: np.ndarray  # (G+1, n, m)
    Pi_m: np.ndarray  # (G+1, n, d)
    F_mp: np.ndarray  # (G+1, n, m)
    F_mm: np.ndarray  # (G+1, G+1, n, n)


def bar_coefficients(sys: HyperbolicSystem, bt: BlockTransform) -> BarCoefficients:
    """Transformed coefficients.

    The minus-minus coupling includes the contribution of ``A'(x)``:
    ``A Lmm Ainv - blockdiag(Lmm) A Ainv``. Its intra-block entries vanish
    analytically and sit at roundoff here; see :func:`within_block_max`.
    """
    A, Ai = bt.A_of_x, bt.Ainv_of_x
    if A.shape[1] != sys.n:
        raise ModelError("grid mismatch: transform built for a different system")
    G1 = A.shape[0]
    # d/dx A = blockdiag(Lmm) Sigma^-1 A, so the Sigma A' Ainv term is blockdiag(Lmm) A Ainv
    diag = block_diagonal_part(sys.Lambda_mm, sys.blocks.slices())
    lmm = np.einsum("aij,jk,akl->ail", A, sys.Lambda_mm, Ai)
    lmm -= np.einsum("ij,ajk,akl->ail", diag, A, Ai)
    F_mm = np.einsum("aij,jk,bkl->abil", A, sys.F_mm, Ai)
    F_mm[np.triu_indices(G1, k=1)] = 0.0
    return BarCoefficients(
        grid=bt.grid,
        Lambda_pm=np.einsum("ij,ajk->aik", sys.Lambda_pm, Ai),
        F_pm=np.einsum("ij,ajk->aik", sys.F_pm, Ai),
        Lambda_mm=lmm,
        Lambda_mp=np.einsum("aij,jk->aik", A, sys.Lambda_mp),
        Pi_m=np.einsum("aij,jk->aik", A, sys.Pi_m),
        F_mp=np.einsum("aij,jk->aik", A, sys.F_mp),
        F_mm=F_mm,
    )


def within_block_max(bar: BarCoefficients, blocks) -> float:
    """Largest intra-block entry of the transformed minus-minus coupling."""
    return float(max(np.abs(bar.Lambda_mm[:, s, s]).max() for s in blocks.slices()))


def apply_block_transform(bt: BlockTransform, Y, direction: str = "forward") -> np.ndarray:
    """``A(x) Y(x)`` (forward) or ``Ainv(x) Y(x)`` (inverse); ``Y`` is (n, G+1)."""
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if Y.shape != (bt.A_of_x.shape[1], bt.grid.size):
        raise ModelError(f"dimension mismatch: Y {Y.shape} vs transform {bt.A_of_x.shape}")
    if direction == "forward":
        M = bt.A_of_x
    elif direction == "inverse":
        M = bt.Ainv_of_x
    else:
        raise ValueError(f"direction must be 'forward' or 'inverse', not {direction!r}")
    return np.einsum("aij,ja->ia", M, Y)

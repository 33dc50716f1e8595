"""Backstepping kernels on the triangle ``0 <= y <= x <= 1``.

The Volterra map

    sigma = Ybar - int_0^x K(x,y) Ybar(y) dy - int_0^x L(x,y) Z(y) dy - Phi(x) X

takes the block-transformed plant to the cascade target
``sigma_t = S- sigma_x + Omega(x) sigma`` with ``sigma(1) = 0`` when
K (n x n), L (n x m), Phi (n x d) and the strictly lower triangular
Omega (n x n) satisfy

    S- K_x + K_y S- = K Lmm(y) + L Lpm(y) - Omega K - Fmm(x,y)
                      + int_y^x K(x,s) Fmm(s,y) ds + int_y^x L(x,s) ds Fpm(y)
    S- L_x - L_y S+ = K Lmp(y) + L Lpp - Omega L - Fmp(x)
                      + int_y^x K(x,s) Fmp(s) ds + int_y^x L(x,s) ds Fpp
    S- Phi'         = Phi A - Pim(x) - Omega Phi + L(x,0) S+ D
                      + int_0^x K(x,y) Pim(y) + L(x,y) Pp dy
    S- L(x,x) + L(x,x) S+ = -Lmp(x)
    S- K(x,x) - K(x,x) S- = -Lmm(x) + Omega(x)
    K(x,0) S-             = Phi(x) B + L(x,0) S+ C

(all "bar" coefficients of the transformed plant). Rows are solved in
order: row ``i`` only sees rows ``< i`` through ``Omega``. Each row is a
Picard iteration whose sweep back-traces every component along its
characteristic.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .block_transform import BarCoefficients, BlockTransform
from .characteristics import build_characteristic_operator
from .hyperbolic_model import HyperbolicSystem, ModelError, controllability_rank
from .quadrature import cumulative_trapezoid

__all__ = [
    "KernelError",
    "ConvergenceError",
    "DivergenceError",
    "MarginError",
    "TriangleGrid",
    "KernelSet",
    "GainSet",
    "ResidualReport",
    "place_poles",
    "symmetric_margin",
    "solve_kernels",
    "kernel_residuals",
    "extract_gains",
    "discontinuity_ratios",
]

log = logging.getLogger(__name__)


class KernelError(RuntimeError):
    pass


class ConvergenceError(KernelError):
    def __init__(self, row, iterations, delta):
        super().__init__(
            f"kernel row {row} did not converge in {iterations} iterations (last delta {delta:.3e})"
        )
        self.row, self.iterations, self.delta = row, iterations, delta


class DivergenceError(KernelError):
    pass


class MarginError(ValueError):
    def __init__(self, achieved, required):
        super().__init__(
            f"E1 + E1^T < -2c I violated: achieved margin {achieved:.6g} < required {required:.6g}"
        )
        self.achieved, self.required = achieved, required


def symmetric_margin(E1) -> float:
    """Largest ``c`` with ``E1 + E1^T <= -2 c I``."""
    E1 = np.asarray(E1, dtype=float)
    return float(-np.linalg.eigvalsh(E1 + E1.T).max() / 2.0)


def place_poles(A, B, desired, c: float = 0.0):
    """Boundary value ``Phi(0)`` setting ``E1 = A + B Phi(0)``.

    ``desired`` is either the target ``E1`` (d x d) or a list of d real
    eigenvalues, which needs a square invertible ``B`` and gives
    ``E1 = diag(desired)``. Returns ``(Phi0, margin)``; raises
    :class:`MarginError` unless ``E1 + E1^T < -2 c I``.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    d = A.shape[0]
    if controllability_rank(A, B) < d:
        raise ModelError("uncontrollable pair (A, B): pole placement impossible")
    desired = np.asarray(desired, dtype=float)
    if desired.ndim == 1:
        if B.shape[0] != B.shape[1]:
            raise ModelError("eigenvalue-list placement needs a square input matrix")
        if desired.size != d:
            raise ModelError(f"need {d} eigenvalues, got {desired.size}")
        E1 = np.diag(desired)
    else:
        E1 = desired
        if E1.shape != (d, d):
            raise ModelError(f"E1 must be {d}x{d}")
    if B.shape[0] == B.shape[1]:
        if np.linalg.matrix_rank(B) < d:
            raise ModelError("singular input matrix B")
        Phi0 = np.linalg.solve(B, E1 - A)
    else:
        Phi0, *_ = np.linalg.lstsq(B, E1 - A, rcond=None)
        if not np.allclose(A + B @ Phi0, E1, atol=1e-10 * max(1.0, np.abs(E1).max())):
            raise ModelError("requested E1 is not reachable with this B")
    margin = symmetric_margin(A + B @ Phi0)
    if not margin > c:
        raise MarginError(margin, c)
    return Phi0, margin


def discontinuity_ratios(block_speeds) -> tuple[float, ...]:
    """Slopes ``s_q / s_p`` (``s_p > s_q``) of rays along which K may jump."""
    s = list(block_speeds)
    return tuple(sorted({s[q] / s[p] for p in range(len(s)) for q in range(p + 1, len(s))}))


@dataclass(frozen=True)
class TriangleGrid:
    G: int

    def __post_init__(self):
        if self.G < 1:
            raise ModelError("triangle grid needs G >= 1")

    @property
    def h(self) -> float:
        return 1.0 / self.G

    @property
    def x(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.G + 1)

    @property
    def mask(self) -> np.ndarray:
        """``mask[a, b]`` is True on the triangle ``b <= a``."""
        return np.tril(np.ones((self.G + 1, self.G + 1), dtype=bool))


@dataclass(frozen=True)
class KernelSet:
    """Solved kernels. Index order is component first, then nodes.

    ``K[i, j, a, b] = K_ij(x_a, y_b)``, ``L[i, j, a, b]``,
    ``Phi[i, j, a] = Phi_ij(x_a)``, ``Omega[i, j, a]``. Entries with
    ``b > a`` are zero.
    """

    grid: TriangleGrid
    K: np.ndarray
    L: np.ndarray
    Phi: np.ndarray
    Omega: np.ndarray
    ratios: tuple[float, ...]
    disc_lines: tuple[tuple[int, int, float], ...]
    iterations: tuple[int, ...] = ()
    deltas: tuple[float, ...] = ()

    @property
    def Phi1(self) -> np.ndarray:
        return self.Phi[:, :, -1].copy()


@dataclass(frozen=True)
class GainSet:
    """Gains at ``x = 1``: ``GK`` (G+1, n, n), ``GL`` (G+1, n, m), ``GPhi`` (n, d)."""

    y: np.ndarray
    GK: np.ndarray
    GL: np.ndarray
    GPhi: np.ndarray
    breaks: tuple[float, ...]


@dataclass
class ResidualReport:
    pde_K: float = 0.0
    pde_L: float = 0.0
    pde_rms: float = 0.0
    ode_Phi: float = 0.0
    bc_L_diag: float = 0.0
    bc_K_diag: float = 0.0
    bc_K_edge: float = 0.0
    bc_Phi0: float = 0.0
    omega_within_block: float = 0.0
    extra: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if k != "extra"} | self.extra

    @property
    def max_bc(self) -> float:
        return max(self.bc_L_diag, self.bc_K_diag, self.bc_K_edge, self.bc_Phi0)

    @property
    def max_pde(self) -> float:
        return max(self.pde_K, self.pde_L)


class _Problem:
    """Grid-sampled coefficients shared by the solver and the residual check."""

    def __init__(self, sys: HyperbolicSystem, bar: BarCoefficients, bt: BlockTransform, Phi0):
        G = bt.G
        if bar.grid.size != G + 1:
            raise ModelError("grid mismatch between bar coefficients and transform")
        self.sys, self.G, self.h = sys, G, 1.0 / G
        self.n, self.m, self.d = sys.n, sys.m, sys.d
        self.sm = sys.sigma_minus
        self.sp = sys.sigma_plus
        self.block = sys.blocks.block_of
        self.Phi0 = np.asarray(Phi0, dtype=float).reshape(self.n, self.d)
        self.Amat = bt.A_of_x  # (N, n, n)
        self.Lmm = bar.Lambda_mm  # (N, n, n)
        self.Lpm = bar.Lambda_pm  # (N, m, n)
        self.Lmp = bar.Lambda_mp  # (N, n, m)
        self.Pim = bar.Pi_m  # (N, n, d)
        self.Fmp = bar.F_mp  # (N, n, m)
        self.Fmm = bar.F_mm  # (N, N, n, n)
        self.Fpm = bar.F_pm  # (N, m, n)
        self.Lpp = sys.Lambda_pp
        self.Fpp = sys.F_pp
        self.FmpC = sys.F_mp
        self.PimC = sys.Pi_m
        self.Pp = sys.Pi_p
        self.FmmAinv = np.einsum("ij,bjk->bik", sys.F_mm, bt.Ainv_of_x)  # (N, n, n)
        self.SpC = sys.sigma_plus[:, None] * sys.C  # (m, n)
        self.SpD = sys.sigma_plus[:, None] * sys.D  # (m, d)
        self.ratios = discontinuity_ratios(sys.blocks.speeds)
        N = G + 1
        self.upper = ~np.tril(np.ones((N, N), dtype=bool))

    def cross(self, i, j):
        return self.block[i] != self.block[j]

    def integrals(self, Ki, Li):
        """``R[k,a,b] = int_{y_b}^{x_a} (K_i(x_a,s) A(s))_k ds`` and the L analogue."""
        KA = np.einsum("lab,blk->kab", Ki, self.Amat)
        return self._rev_cumtrapz(KA), self._rev_cumtrapz(Li)

    def _rev_cumtrapz(self, F):
        F = np.where(self.upper, 0.0, F)
        C = np.cumsum(F[..., ::-1], axis=-1)[..., ::-1]
        diag = np.einsum("...aa->...a", F)
        R = self.h * (C - 0.5 * F - 0.5 * diag[..., :, None])
        for corr in self._jump_corrections:
            a, j0, j1, jm, jp, wl, wu, wm, wp, below = corr
            # replace the plain trapezoid of the cell cut by the ray
            delta = (
                wl * F[..., a, j0] + wu * F[..., a, j1] + wm * F[..., a, jm] + wp * F[..., a, jp]
            )
            R[..., a, :] += delta[..., None] * below
        R[..., self.upper] = 0.0
        return R

    @property
    def _jump_corrections(self):
        if not hasattr(self, "_jc"):
            self._jc = _ray_cell_corrections(self.G, self.ratios)
        return self._jc

    def sources(self, i, Ki, Li, Omega_i, K, L, R, RL):
        """Right-hand sides of the K and L equations of row ``i``."""
        SK = (
            np.einsum("kab,bkj->jab", Ki, self.Lmm)
            + np.einsum("kab,bkj->jab", Li, self.Lpm)
            - np.moveaxis(self.Fmm[:, :, i, :], -1, 0)
            + np.einsum("kab,bkj->jab", R, self.FmmAinv)
            + np.einsum("kab,bkj->jab", RL, self.Fpm)
        )
        SL = (
            np.einsum("kab,bkj->jab", Ki, self.Lmp)
            + np.einsum("kab,kj->jab", Li, self.Lpp)
            - self.Fmp[:, i, :].T[:, :, None]
            + np.einsum("kab,kj->jab", R, self.FmpC)
            + np.einsum("kab,kj->jab", RL, self.Fpp)
        )
        if i > 0:
            SK -= np.einsum("ka,kjab->jab", Omega_i[:i], K[:i])
            SL -= np.einsum("ka,kjab->jab", Omega_i[:i], L[:i])
        SK[:, self.upper] = 0.0
        SL[:, self.upper] = 0.0
        return SK, SL

    def phi_rhs(self, i, Phi_i, Li, Omega_i, Phi, R, RL):
        """``S-_ii Phi_i'(x)`` at every node, (d, N)."""
        rhs = (
            self.sys.A.T @ Phi_i
            - self.Pim[:, i, :].T
            + self.SpD.T @ Li[:, :, 0]
            + self.PimC.T @ R[:, :, 0]
            + self.Pp.T @ RL[:, :, 0]
        )
        if i > 0:
            rhs -= np.einsum("ka,kja->ja", Omega_i[:i], Phi[:i])
        return rhs

    def omega_row(self, i, Ki):
        om = np.zeros((self.n, self.G + 1))
        for k in range(i):
            if self.cross(i, k):
                om[k] = (self.sm[i] - self.sm[k]) * np.diagonal(Ki[k]) + self.Lmm[:, i, k]
        return om

    def k_edge(self, i, Phi_i, Li):
        """``K_i(x, 0)`` demanded by the y = 0 condition, (n, N)."""
        return (self.sys.B.T @ Phi_i + self.SpC.T @ Li[:, :, 0]) / self.sm[:, None]


def solve_kernels(
    sys: HyperbolicSystem,
    bar: BarCoefficients,
    bt: BlockTransform,
    Phi0,
    grid: TriangleGrid | None = None,
    tol: float = 1e-10,
    max_iter: int = 200,
    relax: float = 1.0,
) -> KernelSet:
    """Solve the kernel equations row by row by characteristic Picard sweeps."""
    grid = grid or TriangleGrid(bt.G)
    if grid.G != bt.G:
        raise ModelError(f"grid mismatch: triangle G={grid.G}, transform G={bt.G}")
    pb = _Problem(sys, bar, bt, Phi0)
    n, m, d, N, h = pb.n, pb.m, pb.d, grid.G + 1, grid.h
    K = np.zeros((n, n, N, N))
    L = np.zeros((n, m, N, N))
    Phi = np.zeros((n, d, N))
    Omega = np.zeros((n, n, N))
    ops: dict[float, object] = {}

    def op(ratio):
        key = float(ratio)
        if key not in ops:
            ops[key] = build_characteristic_operator(grid.G, key, pb.ratios)
        return ops[key]

    iters, deltas = [], []
    for i in range(n):
        si = pb.sm[i]
        Ki, Li = K[i], L[i]
        Phi_i = np.repeat(pb.Phi0[i][:, None], N, axis=1)
        Om_i = np.zeros((n, N))
        diagL = np.stack(
            [-pb.Lmp[:, i, j] / (si + pb.sp[j]) for j in range(m)]
        ) if m else np.zeros((0, N))
        diagK = np.zeros((n, N))
        for j in range(n):
            if pb.cross(i, j) and si > pb.sm[j]:
                diagK[j] = -pb.Lmm[:, i, j] / (si - pb.sm[j])
        delta = np.inf
        for it in range(1, max_iter + 1):
            R, RL = pb.integrals(Ki, Li)
            SK, SL = pb.sources(i, Ki, Li, Om_i, K, L, R, RL)
            L_new = np.empty_like(Li)
            for j in range(m):
                L_new[j] = op(-pb.sp[j] / si).apply(si, SL[j], diag_data=diagL[j])
            rhs = pb.phi_rhs(i, Phi_i, Li, Om_i, Phi, R, RL) / si
            Phi_new = pb.Phi0[i][:, None] + cumulative_trapezoid(rhs, h, axis=1)
            edge = pb.k_edge(i, Phi_new, L_new)
            K_new = np.empty_like(Ki)
            for j in range(n):
                K_new[j] = op(pb.sm[j] / si).apply(si, SK[j], edge_data=edge[j], diag_data=diagK[j])
            if relax != 1.0:
                K_new = relax * K_new + (1 - relax) * Ki
                L_new = relax * L_new + (1 - relax) * Li
                Phi_new = relax * Phi_new + (1 - relax) * Phi_i
            delta = max(
                np.abs(K_new - Ki).max(initial=0.0),
                np.abs(L_new - Li).max(initial=0.0),
                np.abs(Phi_new - Phi_i).max(initial=0.0),
            )
            Ki, Li, Phi_i = K_new, L_new, Phi_new
            Om_i = pb.omega_row(i, Ki)
            if not np.isfinite(delta):
                raise DivergenceError(f"kernel row {i} diverged at iteration {it}")
            if delta <= tol:
                break
        else:
            raise ConvergenceError(i, max_iter, delta)
        log.debug("row %d converged in %d iterations (delta %.2e)", i, it, delta)
        K[i], L[i], Phi[i], Omega[i] = Ki, Li, Phi_i, Om_i
        iters.append(it)
        deltas.append(float(delta))

    lines = tuple(
        (i, j, float(pb.sm[j] / pb.sm[i]))
        for i in range(n)
        for j in range(n)
        if pb.sm[i] > pb.sm[j] and pb.cross(i, j)
    )
    return KernelSet(grid, K, L, Phi, Omega, pb.ratios, lines, tuple(iters), tuple(deltas))


def _ray_cell_corrections(G, ratios):
    """Corrections turning a plain trapezoid in ``s`` into a jump-aware one.

    Row ``a`` integrates ``f(x_a, s)`` whose value jumps at ``s = rho x_a``.
    The cut cell is integrated piecewise with one-sided linear
    extrapolation to the cut; the difference to the plain trapezoid is
    stored as weights on four nodes, applied to every lower limit below
    the cell.
    """
    h = 1.0 / G
    out = []
    cols = np.arange(G + 1)
    for rho in ratios:
        a = np.arange(4, G + 1)
        u = rho * a
        j = np.floor(u + 1e-9).astype(np.int64)
        on_node = np.abs(u - j) <= 1e-9
        th = np.where(on_node, 0.0, u - j)
        ok = (j >= 2) & (j + 2 <= a)
        a, j, th, on_node = a[ok], j[ok], th[ok], on_node[ok]
        # off-node: cell [j, j+1], lower piece from nodes j-1, j; upper from j+1, j+2
        #   exact-ish = th h (f_j + f_-)/2 + (1-th) h (f_+ + f_{j+1})/2
        #   f_- = (1+th) f_j - th f_{j-1},  f_+ = (2-th) f_{j+1} - (1-th) f_{j+2}
        s_ = 1.0 - th
        wl = 0.5 * h * (th * (2.0 + th) - 1.0)
        wu = 0.5 * h * (s_ * (1.0 + (2.0 - th)) - 1.0)
        wm = -0.5 * h * th * th
        wp = -0.5 * h * s_ * s_
        j0, j1, jm, jp = j, j + 1, j - 1, j + 2
        last = j.copy()
        # on a node: the node belongs to the upper side; fix cell [j-1, j]
        wl = np.where(on_node, -0.5 * h, wl)  # f_j (upper value) removed
        wu = np.where(on_node, 0.0, wu)
        wm = np.where(on_node, h, wm)  # + h/2 * 2 f_{j-1}
        wp = np.where(on_node, 0.0, wp)
        jm2 = np.where(on_node, j - 2, jm)
        # f_- = 2 f_{j-1} - f_{j-2}: weight -h/2 on j-2, carried by the "jm" slot
        # of a second correction to keep four slots per entry
        last = np.where(on_node, j - 1, last)
        below = cols[None, :] <= last[:, None]
        out.append((a, j0, j1, np.where(on_node, j - 1, jm), jp, wl, wu, wm, wp, below))
        if on_node.any():
            sel = on_node
            z = np.zeros(sel.sum())
            out.append(
                (a[sel], jm2[sel], j0[sel], j0[sel], j0[sel], z - 0.5 * h, z, z, z, below[sel])
            )
    return out


def _near_rays(G, ratios, band=2.5):
    a, b = np.meshgrid(np.arange(G + 1), np.arange(G + 1), indexing="ij")
    near = np.zeros((G + 1, G + 1), dtype=bool)
    for rho in ratios:
        near |= np.abs(b - rho * a) <= band * (1 + rho)
    return near


def kernel_residuals(
    ks: KernelSet, sys: HyperbolicSystem, bar: BarCoefficients, bt: BlockTransform, Phi0=None
) -> ResidualReport:
    """Finite-difference residuals of every kernel equation and boundary condition."""
    G = ks.grid.G
    if bt.G != G:
        raise ModelError("grid mismatch")
    Phi0 = ks.Phi[:, :, 0] if Phi0 is None else Phi0
    pb = _Problem(sys, bar, bt, Phi0)
    n, m, h, N = pb.n, pb.m, pb.h, G + 1
    K, L, Phi, Om = ks.K, ks.L, ks.Phi, ks.Omega
    rep = ResidualReport()
    sq, cnt = 0.0, 0

    a, b = np.meshgrid(np.arange(N), np.arange(N), indexing="ij")
    # central differences at nodes whose 5-point stencil stays inside the triangle
    interior = (b >= 1) & (b <= a - 1) & (a <= G - 1) & ~_near_rays(G, pb.ratios)
    for i in range(n):
        R, RL = pb.integrals(K[i], L[i])
        SK, SL = pb.sources(i, K[i], L[i], Om[i], K, L, R, RL)
        for j in range(n):
            k = K[i, j]
            dk = np.zeros_like(k)
            dk[1:-1, 1:-1] = (
                pb.sm[i] * (k[2:, 1:-1] - k[:-2, 1:-1]) + pb.sm[j] * (k[1:-1, 2:] - k[1:-1, :-2])
            ) / (2 * h)
            if interior.any():
                r = (dk - SK[j])[interior]
                rep.pde_K = max(rep.pde_K, float(np.abs(r).max()))
                sq, cnt = sq + float(r @ r), cnt + r.size
            # boundary conditions
            edge = pb.k_edge(i, Phi[i], L[i])[j]
            res_edge = np.abs(K[i, j, :, 0] - edge) * pb.sm[j]
            if pb.cross(i, j) and pb.sm[i] > pb.sm[j]:
                res_edge = res_edge[1:]
                res_diag = np.abs((pb.sm[i] - pb.sm[j]) * np.diagonal(k) + pb.Lmm[:, i, j])
                rep.bc_K_diag = max(rep.bc_K_diag, float(res_diag.max()))
            rep.bc_K_edge = max(rep.bc_K_edge, float(res_edge.max(initial=0.0)))
            if j < i and not pb.cross(i, j):
                rep.omega_within_block = max(
                    rep.omega_within_block, float(np.abs(Om[i, j]).max())
                )
        for j in range(m):
            l = L[i, j]
            dl = np.zeros_like(l)
            dl[1:-1, 1:-1] = (
                pb.sm[i] * (l[2:, 1:-1] - l[:-2, 1:-1]) - pb.sp[j] * (l[1:-1, 2:] - l[1:-1, :-2])
            ) / (2 * h)
            if interior.any():
                r = (dl - SL[j])[interior]
                rep.pde_L = max(rep.pde_L, float(np.abs(r).max()))
                sq, cnt = sq + float(r @ r), cnt + r.size
            res = np.abs((pb.sm[i] + pb.sp[j]) * np.diagonal(l) + pb.Lmp[:, i, j])
            rep.bc_L_diag = max(rep.bc_L_diag, float(res.max()))
        rhs = pb.phi_rhs(i, Phi[i], L[i], Om[i], Phi, R, RL)
        dphi = pb.sm[i] * np.diff(Phi[i], axis=1) / h
        rep.ode_Phi = max(
            rep.ode_Phi, float(np.abs(dphi - 0.5 * (rhs[:, 1:] + rhs[:, :-1])).max(initial=0.0))
        )
        # Omega must be strictly lower triangular
        upper = np.abs(Om[i, i:]).max(initial=0.0)
        rep.omega_within_block = max(rep.omega_within_block, float(upper))
    rep.bc_Phi0 = float(np.abs(Phi[:, :, 0] - pb.Phi0).max(initial=0.0))
    rep.pde_rms = float(np.sqrt(sq / cnt)) if cnt else 0.0
    return rep


def extract_gains(ks: KernelSet, bt: BlockTransform) -> GainSet:
    """Control gains ``Ainv(1) K(1,y) A(y)``, ``Ainv(1) L(1,y)``, ``Ainv(1) Phi(1)``."""
    if bt.G != ks.grid.G:
        raise ModelError(f"grid mismatch: kernels G={ks.grid.G}, transform G={bt.G}")
    Ai1 = bt.Ainv_of_x[-1]
    K1 = np.moveaxis(ks.K[:, :, -1, :], -1, 0)  # (N, n, n)
    L1 = np.moveaxis(ks.L[:, :, -1, :], -1, 0)
    GK = np.einsum("ij,bjk,bkl->bil", Ai1, K1, bt.A_of_x)
    GL = np.einsum("ij,bjk->bik", Ai1, L1)
    return GainSet(bt.grid.copy(), GK, GL, Ai1 @ ks.Phi1, ks.ratios)

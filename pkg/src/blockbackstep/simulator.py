"""Time integration of the plant, the target cascade, and diagnostic series.

Transport is first-order upwind: ``Y`` moves toward ``x = 0`` and takes
its boundary value at ``x = 1``; ``Z`` moves toward ``x = 1`` and takes
``Z(0) = C Y(0) + D X``. Integral couplings come from the previous step
(explicit). ``X`` is advanced by one classical RK4 step with ``Y(0)``
frozen over the step. In closed loop the input ``U`` depends linearly
on the new ``Y(1)`` through the last quadrature weight; that node is
solved for implicitly, so ``Y(1) = U`` holds exactly at every step.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .block_transform import BlockTransform
from .controller import ControlLaw, boundary_feedback_split, target_map
from .hyperbolic_model import HyperbolicSystem, ModelError, StateSnapshot
from .kernel_solver import KernelSet
from .quadrature import cumulative_trapezoid
from .timoshenko import (
    BeamConfig,
    OrderingMap,
    _split_phys,
    beam_slopes,
    build_system,
    ordering,
    reconstruct_beam,
)

__all__ = [
    "SimulationError",
    "ConfigurationError",
    "BlowUpError",
    "SimSettings",
    "Trajectory",
    "simulate",
    "simulate_target_sigma",
    "sigma_characteristic",
    "simulate_beam_layers",
    "layer_assembly_error",
    "norm_series",
    "lyapunov_series",
    "fit_decay_rate",
    "write_trajectory_csv",
    "write_series_csv",
]


class SimulationError(RuntimeError):
    pass


class ConfigurationError(SimulationError):
    pass


class BlowUpError(SimulationError):
    def __init__(self, t: float):
        super().__init__(f"state became non-finite at t = {t:.6g}")
        self.t = t


@dataclass(frozen=True)
class SimSettings:
    """``mode`` is ``"closed"``, ``"open"`` or ``"custom"`` (then ``input_fn(t)`` gives ``U``)."""

    G: int = 200
    T: float = 5.0
    cfl: float = 0.5
    mode: str = "closed"
    stride: int = 1
    input_fn: Callable[[float], np.ndarray] | None = None

    def __post_init__(self):
        if not 0.0 < self.cfl <= 1.0:
            raise ConfigurationError(f"CFL number must lie in (0, 1], got {self.cfl}")
        if not self.T > 0:
            raise ConfigurationError(f"final time must be positive, got {self.T}")
        if self.mode not in ("closed", "open", "custom"):
            raise ConfigurationError(f"unknown control mode {self.mode!r}")
        if self.mode == "custom" and self.input_fn is None:
            raise ConfigurationError("custom mode needs input_fn")
        if self.stride < 1:
            raise ConfigurationError("stride must be a positive integer")

    def time_step(self, max_speed: float) -> tuple[float, int]:
        """Step size no larger than ``cfl h / max_speed`` that divides ``T``."""
        bound = self.cfl / self.G / max_speed
        steps = int(np.ceil(self.T / bound - 1e-9))
        dt = self.T / steps
        if dt > bound * (1 + 1e-12):
            raise ConfigurationError(f"time step {dt} exceeds the CFL bound {bound}")
        return dt, steps


@dataclass
class Trajectory:
    grid: np.ndarray
    t: np.ndarray  # (K,)
    Y: np.ndarray  # (K, n, G+1)
    Z: np.ndarray  # (K, m, G+1)
    X: np.ndarray  # (K, d)
    U: np.ndarray  # (K, n) boundary value applied at each output time
    series: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.t.size

    def snapshot(self, k: int) -> StateSnapshot:
        return StateSnapshot(self.grid, self.Y[k], self.Z[k], self.X[k], float(self.t[k]))


class _Recorder:
    def __init__(self, grid):
        self.grid = grid
        self.t, self.Y, self.Z, self.X, self.U = [], [], [], [], []

    def add(self, t, Y, Z, X, U):
        self.t.append(t)
        self.Y.append(Y.copy())
        self.Z.append(Z.copy())
        self.X.append(X.copy())
        self.U.append(np.asarray(U, dtype=float).copy())

    def build(self) -> Trajectory:
        return Trajectory(
            self.grid.copy(),
            np.array(self.t),
            np.array(self.Y),
            np.array(self.Z),
            np.array(self.X),
            np.array(self.U),
        )


def _rk4_linear(A, X, forcing, dt):
    f = lambda x: A @ x + forcing  # noqa: E731
    k1 = f(X)
    k2 = f(X + 0.5 * dt * k1)
    k3 = f(X + 0.5 * dt * k2)
    k4 = f(X + dt * k3)
    return X + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def _upwind(Y, Z, SY, SZ, sm, sp, dt, h):
    Yn = Y.copy()
    Zn = Z.copy()
    Yn[:, :-1] = Y[:, :-1] + dt * (sm[:, None] * (Y[:, 1:] - Y[:, :-1]) / h + SY[:, :-1])
    Zn[:, 1:] = Z[:, 1:] + dt * (-sp[:, None] * (Z[:, 1:] - Z[:, :-1]) / h + SZ[:, 1:])
    return Yn, Zn


def _plant_sources(sys: HyperbolicSystem, Y, Z, X, h):
    SY = sys.Lambda_mm @ Y + sys.Lambda_mp @ Z + (sys.Pi_m @ X)[:, None]
    SZ = sys.Lambda_pm @ Y + sys.Lambda_pp @ Z + (sys.Pi_p @ X)[:, None]
    SY += cumulative_trapezoid(sys.F_mp @ Z + sys.F_mm @ Y, h, axis=1)
    SZ += cumulative_trapezoid(sys.F_pp @ Z + sys.F_pm @ Y, h, axis=1)
    return SY, SZ


def simulate(
    sys: HyperbolicSystem,
    law: ControlLaw | None,
    init: StateSnapshot,
    st: SimSettings,
) -> Trajectory:
    """Integrate the plant from ``init`` up to ``st.T``."""
    G = init.grid.size - 1
    if G != st.G:
        raise ConfigurationError(f"grid mismatch: settings G={st.G}, initial state G={G}")
    if init.Y.shape[0] != sys.n or init.Z.shape[0] != sys.m or init.X.size != sys.d:
        raise ModelError("initial state dimensions do not match the plant")
    if st.mode == "closed":
        if law is None:
            raise ConfigurationError("closed loop needs a control law")
        if law.G != G:
            raise ConfigurationError(f"grid mismatch: law G={law.G}, initial state G={G}")
    h = 1.0 / G
    dt, steps = st.time_step(sys.max_speed())
    sm, sp = sys.sigma_minus, sys.sigma_plus
    Y, Z, X = init.Y.copy(), init.Z.copy(), init.X.astype(float).copy()
    rec = _Recorder(init.grid)
    rec.add(init.t, Y, Z, X, Y[:, -1])
    t = init.t
    for k in range(1, steps + 1):
        SY, SZ = _plant_sources(sys, Y, Z, X, h)
        Yn, Zn = _upwind(Y, Z, SY, SZ, sm, sp, dt, h)
        Xn = _rk4_linear(sys.A, X, sys.B @ Y[:, 0], dt)
        Zn[:, 0] = sys.C @ Yn[:, 0] + sys.D @ Xn
        t = init.t + k * dt
        if st.mode == "open":
            U = np.zeros(sys.n)
        elif st.mode == "custom":
            U = np.asarray(st.input_fn(t), dtype=float).reshape(sys.n)
        else:
            Yn[:, -1] = 0.0
            U0, M = boundary_feedback_split(law, StateSnapshot(init.grid, Yn, Zn, Xn, t))
            U = np.linalg.solve(np.eye(sys.n) - M, U0)
        Yn[:, -1] = U
        Y, Z, X = Yn, Zn, Xn
        if not (np.isfinite(Y).all() and np.isfinite(Z).all() and np.isfinite(X).all()):
            raise BlowUpError(t)
        if k % st.stride == 0 or k == steps:
            rec.add(t, Y, Z, X, U)
    return rec.build()


# ---------------------------------------------------------------- target cascade


def _lerp_time(times, vals, tq):
    """Linear interpolation in time of lattice values ``vals`` (K, N) at ``tq``."""
    dt = times[1] - times[0]
    j = np.clip(np.floor(tq / dt + 1e-12).astype(int), 0, times.size - 2)
    w = np.clip((tq - times[j]) / dt, 0.0, 1.0)[:, None]
    return vals[j] * (1 - w) + vals[j + 1] * w


def simulate_target_sigma(speeds, Omega, init_sigma, st: SimSettings):
    """Integrate ``sigma_t = S sigma_x + Omega(x) sigma`` with ``sigma(1) = 0``.

    ``speeds`` (n,), ``Omega`` (n, n, G+1) strictly lower triangular,
    ``init_sigma`` (n, G+1). Because the cascade is lower triangular,
    channel ``i`` is marched alone on its own time lattice ``h / s_i``
    (an exact shift per step), with the faster channels' source sampled
    by linear interpolation in time and integrated by the trapezoid rule
    along the characteristic. Channels therefore vanish exactly once their
    characteristics have left through ``x = 1``. Returns ``(t, sigma)``
    at the output times of ``st``.
    """
    speeds = np.asarray(speeds, dtype=float)
    Om = np.asarray(Omega, dtype=float)
    s0 = np.asarray(init_sigma, dtype=float)
    n, N = s0.shape
    if N - 1 != st.G:
        raise ConfigurationError(f"grid mismatch: settings G={st.G}, initial state G={N - 1}")
    if np.abs(np.triu(np.moveaxis(Om, -1, 0))).max(initial=0.0) > 0:
        raise ModelError("Omega must be strictly lower triangular")
    h = 1.0 / st.G
    dt_out, steps = st.time_step(float(speeds.max()))
    keep = [k for k in range(steps + 1) if k % st.stride == 0 or k == steps]
    t_out = dt_out * np.array(keep, dtype=float)
    lattices = []
    for i in range(n):
        dt = h / speeds[i]
        times = dt * np.arange(int(np.ceil(st.T / dt - 1e-9)) + 2)
        src = np.zeros((times.size, N))
        for k in range(i):
            if np.any(Om[i, k]):
                src += Om[i, k][None, :] * _lerp_time(*lattices[k], times)
        vals = np.empty((times.size, N))
        vals[0] = s0[i]
        vals[0, -1] = 0.0
        for j in range(times.size - 1):
            vals[j + 1, :-1] = vals[j, 1:] + 0.5 * dt * (src[j, 1:] + src[j + 1, :-1])
            vals[j + 1, -1] = 0.0
        if not np.isfinite(vals).all():
            raise BlowUpError(float(times[np.flatnonzero(~np.isfinite(vals).all(axis=1))[0]]))
        lattices.append((times, vals))
    sigma = np.stack([_lerp_time(tm, v, t_out) for tm, v in lattices], axis=1)
    return t_out, sigma


def sigma_characteristic(speeds, omega_fn, init_fn, i: int, x, t, order: int = 24):
    """Cascade solution by integration along characteristics.

    ``sigma_i(x, t) = sigma_i(x + s_i t, 0) + int_{t0}^t sum_k omega_ik(xi) sigma_k(xi, tau) dtau``
    with ``xi = x + s_i (t - tau)``; the initial term is dropped (and
    ``t0 = t - (1 - x) / s_i``) once the characteristic reaches ``x = 1``.
    Each ``tau`` integral is split where ``sigma_k`` switches off along
    the path, so Gauss-Legendre sees smooth pieces. ``omega_fn(i, k, x)``
    and ``init_fn(i, x)`` are vectorized callables.
    """
    speeds = np.asarray(speeds, dtype=float)
    x = np.asarray(x, dtype=float)
    t = np.broadcast_to(np.asarray(t, dtype=float), x.shape)
    s = speeds[i]
    reach = (1.0 - x) / s
    hit = t >= reach
    val = np.where(hit, 0.0, init_fn(i, np.minimum(x + s * t, 1.0)))
    if i == 0:
        return val
    t0 = np.where(hit, t - reach, 0.0)
    nodes, wts = np.polynomial.legendre.leggauss(order)
    for k in range(i):
        sk = speeds[k]
        if sk != s:
            # sigma_k(xi(tau), tau) vanishes for tau beyond this time
            cut = np.clip((1.0 - x - s * t) / (sk - s), t0, t)
        else:
            cut = t0
        for lo, hi in ((t0, cut), (cut, t)):
            half = 0.5 * (hi - lo)
            tau = lo[..., None] + half[..., None] * (nodes + 1.0)
            xi = x[..., None] + s * (t[..., None] - tau)
            f = omega_fn(i, k, xi) * sigma_characteristic(speeds, omega_fn, init_fn, k, xi, tau, order)
            val = val + half * (f @ wts)
    return val


# ---------------------------------------------------------------- beam oracle


def _layer_sources(cfg: BeamConfig, p, r, q, s, xv, xt, h):
    """Coupling terms of the per-layer Riemann equations (force and moment balances)."""
    N = cfg.N
    se, sb = np.sqrt(cfg.eta), np.sqrt(cfg.beta)
    sa, sz = np.sqrt(cfg.alpha), np.sqrt(cfg.zeta)
    v = np.empty_like(p)
    th = np.empty_like(q)
    for i in range(N):
        v[i] = xv[i] + cumulative_trapezoid((p[i] + r[i]) / (2 * se[i]), h)
        th[i] = xt[i] + cumulative_trapezoid((q[i] + s[i]) / (2 * sa[i]), h)
    fp = np.zeros_like(p)
    fq = np.zeros_like(q)
    for i in range(N):
        th_x = (q[i] + s[i]) / (2 * sa[i])
        v_x = (p[i] + r[i]) / (2 * se[i])
        force = cfg.eta[i] * th_x
        moment = -cfg.eta[i] * (v_x + th[i])
        if i > 0:
            force += cfg.kn[i - 1] * (v[i - 1] - v[i])
            slip = -cfg.h1[i - 1] * th[i - 1] - cfg.h2[i - 1] * th[i]
            moment += cfg.h2[i - 1] * cfg.kt[i - 1] * slip
        if i < N - 1:
            force -= cfg.kn[i] * (v[i] - v[i + 1])
            slip = -cfg.h1[i] * th[i] - cfg.h2[i] * th[i + 1]
            moment += cfg.h1[i] * cfg.kt[i] * slip
        fp[i] = force / sb[i]
        fq[i] = moment / sz[i]
    return fp, fq


def simulate_beam_layers(cfg: BeamConfig, p, r, q, s, xv, xt, st: SimSettings):
    """Per-layer integration of the beam in Riemann variables (physical order).

    Uses the same upwind/RK4 scheme as :func:`simulate`; boundary inputs
    ``p(1), q(1)`` come from ``st.input_fn(t)`` as ``(N, 2)`` or zero in
    open loop. Returns ``(t, p, r, q, s, xv, xt)`` at output times.
    """
    if st.mode == "closed":
        raise ConfigurationError("per-layer integration supports open and custom modes only")
    N = cfg.N
    p, r, q, s = (np.array(a, dtype=float) for a in (p, r, q, s))
    xv, xt = np.array(xv, dtype=float), np.array(xt, dtype=float)
    G = p.shape[1] - 1
    if G != st.G:
        raise ConfigurationError("grid mismatch")
    h = 1.0 / G
    se, sb = np.sqrt(cfg.eta), np.sqrt(cfg.beta)
    sa, sz = np.sqrt(cfg.alpha), np.sqrt(cfg.zeta)
    cp, cq = se / sb, sa / sz
    dt, steps = st.time_step(float(max(cp.max(), cq.max())))
    xd, xs = np.asarray(cfg.xi[0::2]), np.asarray(cfg.xi[1::2])
    den = sb - xd * se
    out = [(0.0, p.copy(), r.copy(), q.copy(), s.copy(), xv.copy(), xt.copy())]
    for k in range(1, steps + 1):
        fp, fq = _layer_sources(cfg, p, r, q, s, xv, xt, h)
        pn, rn = _upwind(p, r, fp, -fp, cp, cp, dt, h)
        qn, sn = _upwind(q, s, fq, -fq, cq, cq, dt, h)
        # x_v' = (p(0) - a x_t + a xi_s x_v) / (b - xi a),  x_t' = q(0) / sqrt(zeta)
        X = np.concatenate([xv, xt])
        Aode = np.block(
            [[np.diag(se * xs / den), np.diag(-se / den)], [np.zeros((N, N)), np.zeros((N, N))]]
        )
        forcing = np.concatenate([p[:, 0] / den, q[:, 0] / sz])
        Xn = _rk4_linear(Aode, X, forcing, dt)
        xvn, xtn = Xn[:N], Xn[N:]
        rn[:, 0] = -(sb + xd * se) / den * pn[:, 0] + 2 * se * sb / den * (xtn - xs * xvn)
        sn[:, 0] = -qn[:, 0]
        t = k * dt
        if st.mode == "custom":
            Upq = np.asarray(st.input_fn(t), dtype=float).reshape(N, 2)
        else:
            Upq = np.zeros((N, 2))
        pn[:, -1], qn[:, -1] = Upq[:, 0], Upq[:, 1]
        p, r, q, s, xv, xt = pn, rn, qn, sn, xvn, xtn
        if not np.isfinite(p).all():
            raise BlowUpError(t)
        if k % st.stride == 0 or k == steps:
            out.append((t, p.copy(), r.copy(), q.copy(), s.copy(), xv.copy(), xt.copy()))
    return tuple(np.array(col) for col in zip(*out))


def layer_assembly_error(cfg: BeamConfig, init: StateSnapshot, st: SimSettings, om=None) -> float:
    """Worst relative gap between per-layer and assembled matrix-form runs.

    ``init`` is in speed order; ``st.input_fn(t)`` (custom mode) returns the
    physical ``(N, 2)`` boundary values ``p(1), q(1)``. Errors are scaled by
    the largest state magnitude at each output time.
    """
    om = om or ordering(cfg)
    Yp, Zp, Xp = (np.empty_like(a) for a in (init.Y, init.Z, init.X))
    Yp[om.perm], Zp[om.zperm], Xp[om.perm] = init.Y, init.Z, init.X
    if st.mode == "custom":
        phys = st.input_fn
        st_m = replace(st, input_fn=lambda t: np.asarray(phys(t), dtype=float).ravel()[om.perm])
    else:
        st_m = st
    tr = simulate(build_system(cfg)[0], None, init, st_m)
    t, p, r, q, s, xv, xt = simulate_beam_layers(
        cfg, Yp[0::2], Zp[0::2], Yp[1::2], Zp[1::2], Xp[0::2], Xp[1::2], st
    )
    if t.size != len(tr) or np.abs(t - tr.t).max() > 1e-12:
        raise SimulationError("output times of the two integrations differ")
    worst = 0.0
    for k in range(t.size):
        Yl, Zl, Xl = (np.empty_like(a) for a in (Yp, Zp, Xp))
        Yl[0::2], Yl[1::2], Zl[0::2], Zl[1::2] = p[k], q[k], r[k], s[k]
        Xl[0::2], Xl[1::2] = xv[k], xt[k]
        Ym, Zm, Xm = _split_phys(cfg, om, tr.snapshot(k))
        scale = max(np.abs(Yl).max(), np.abs(Zl).max(), np.abs(Xl).max(), 1e-300)
        gap = max(np.abs(Yl - Ym).max(), np.abs(Zl - Zm).max(), np.abs(Xl - Xm).max())
        worst = max(worst, gap / scale)
    return float(worst)


# ---------------------------------------------------------------- diagnostics


def _l2sq(F, h):
    """Squared L2 norm over the last (grid) axis by trapezoid, summed over components."""
    w = np.full(F.shape[-1], h)
    w[[0, -1]] = h / 2
    return ((F**2) @ w).sum(axis=-1)


def norm_series(tr: Trajectory, cfg: BeamConfig | None = None, om: OrderingMap | None = None):
    """``|Z|^2 + |Y|^2 + |X|^2`` per output time, plus the beam energy combination if ``cfg``."""
    h = tr.grid[1] - tr.grid[0]
    out = {"t": tr.t.copy()}
    out["riemann"] = _l2sq(tr.Y, h) + _l2sq(tr.Z, h) + (tr.X**2).sum(axis=1)
    if cfg is not None:
        om = om or ordering(cfg)
        beam = np.zeros(len(tr))
        for k in range(len(tr)):
            s = tr.snapshot(k)
            bs = reconstruct_beam(s, cfg, om)
            v_x, th_x = beam_slopes(s, cfg, om)
            beam[k] = sum(_l2sq(f, h) for f in (bs.v, v_x, bs.theta, th_x, bs.v_t, bs.theta_t))
        out["beam"] = beam
    return out


def lyapunov_series(
    tr: Trajectory,
    ks: KernelSet,
    bt: BlockTransform,
    sys: HyperbolicSystem,
    zeta1: float,
    zeta2: float,
    delta: float,
) -> np.ndarray:
    """``zeta1 |X|^2 + zeta2 int e^{dx} sigma' S-^-1 sigma + int e^{-dx} Z' S+^-1 Z``."""
    x = tr.grid
    h = x[1] - x[0]
    w = np.full(x.size, h)
    w[[0, -1]] = h / 2
    ep, em = np.exp(delta * x), np.exp(-delta * x)
    V = np.zeros(len(tr))
    to_sigma = target_map(ks, bt)
    for k in range(len(tr)):
        s = tr.snapshot(k)
        sig = to_sigma(s).sigma
        V[k] = (
            zeta1 * s.X @ s.X
            + zeta2 * ((sig**2 / sys.sigma_minus[:, None]).sum(axis=0) * ep) @ w
            + ((s.Z**2 / sys.sigma_plus[:, None]).sum(axis=0) * em) @ w
        )
    return V


def fit_decay_rate(t, series, window) -> float:
    """Negated least-squares slope of ``log(series)`` over ``window = (t0, t1)``."""
    t = np.asarray(t, dtype=float)
    v = np.asarray(series, dtype=float)
    sel = (t >= window[0]) & (t <= window[1])
    if sel.sum() < 2:
        raise ValueError("fewer than two samples in the fit window")
    if np.any(v[sel] <= 0):
        raise ValueError("series must be strictly positive on the fit window")
    slope = np.polyfit(t[sel], np.log(v[sel]), 1)[0]
    return float(-slope)


def write_trajectory_csv(path, tr: Trajectory) -> None:
    """Long format: one row per (t, x) with every Y, Z component, then X."""
    n, m, d = tr.Y.shape[1], tr.Z.shape[1], tr.X.shape[1]
    header = ["t", "x"] + [f"Y{i + 1}" for i in range(n)] + [f"Z{i + 1}" for i in range(m)]
    header += [f"X{i + 1}" for i in range(d)]
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for k in range(len(tr)):
            for a, xa in enumerate(tr.grid):
                row = [tr.t[k], xa, *tr.Y[k, :, a], *tr.Z[k, :, a], *tr.X[k]]
                wr.writerow([f"{v:.17g}" for v in row])


def write_series_csv(path, t, values, name: str = "value") -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["t", name])
        for a, b in zip(t, values):
            wr.writerow([f"{a:.17g}", f"{b:.17g}"])

"""N-layer Timoshenko beams as isotachic hyperbolic PIDE-ODE plants.

Layer ``i`` (0-based) carries ``v_i`` (displacement) and ``theta_i``
(rotation); interface ``i`` sits between layers ``i`` and ``i + 1``.
The Riemann variables

    p = sqrt(eta) v_x + sqrt(beta) v_t,   r = sqrt(eta) v_x - sqrt(beta) v_t
    q = sqrt(alpha) th_x + sqrt(zeta) th_t, s = sqrt(alpha) th_x - sqrt(zeta) th_t

move toward ``x = 0`` (p, q: the Y side) and ``x = 1`` (r, s: the Z side).
The ODE states are the clamped-end values ``v_i(0)`` and ``theta_i(0)``.
Physical channel ``2i`` is the force channel of layer ``i``, ``2i + 1`` its
torque channel; the same numbering is used for Y, Z, X and the inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.integrate

from .hyperbolic_model import (
    HyperbolicSystem,
    ModelError,
    StateSnapshot,
    partition_speeds,
)

__all__ = [
    "BeamConfig",
    "OrderingMap",
    "BeamState",
    "AntiDampingSingularityError",
    "build_system",
    "physical_matrices",
    "riemann_forward",
    "reconstruct_beam",
    "physical_controls",
    "pq_controls",
    "beam_slopes",
    "ordering",
    "two_layer_benchmark",
]


class AntiDampingSingularityError(ModelError):
    pass


@dataclass(frozen=True)
class BeamConfig:
    beta: tuple[float, ...]
    eta: tuple[float, ...]
    zeta: tuple[float, ...]
    alpha: tuple[float, ...]
    h1: tuple[float, ...]
    h2: tuple[float, ...]
    kt: tuple[float, ...]
    kn: tuple[float, ...]
    xi: tuple[float, ...]

    def __post_init__(self):
        for name in ("beta", "eta", "zeta", "alpha", "h1", "h2", "kt", "kn", "xi"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        N = self.N
        if N < 1:
            raise ModelError("beam needs at least one layer")
        for name in ("beta", "eta", "zeta", "alpha"):
            vals = getattr(self, name)
            if len(vals) != N:
                raise ModelError(f"{name}: expected {N} values, got {len(vals)}")
            if any(not v > 0 for v in vals):
                raise ModelError(f"{name}: all values must be strictly positive")
        for name in ("h1", "h2", "kt", "kn"):
            if len(getattr(self, name)) != N - 1:
                raise ModelError(f"{name}: expected {N - 1} interface values")
        if len(self.xi) != 2 * N:
            raise ModelError(f"xi: expected {2 * N} values, got {len(self.xi)}")
        for i in range(N):
            crit = np.sqrt(self.beta[i]) / np.sqrt(self.eta[i])
            if abs(self.xi[2 * i] - crit) <= 1e-12 * max(1.0, abs(crit)):
                raise AntiDampingSingularityError(
                    f"layer {i + 1}: anti-damping xi_{2 * i + 1} = sqrt(beta)/sqrt(eta) "
                    "makes the x = 0 boundary singular"
                )

    @property
    def N(self) -> int:
        return len(self.beta)

    def channel_speeds(self) -> np.ndarray:
        """Physical-order speeds: sqrt(eta/beta) (force), sqrt(alpha/zeta) (torque)."""
        sp = np.empty(2 * self.N)
        sp[0::2] = np.sqrt(np.asarray(self.eta) / np.asarray(self.beta))
        sp[1::2] = np.sqrt(np.asarray(self.alpha) / np.asarray(self.zeta))
        return sp

    def to_dict(self) -> dict:
        return {"N": self.N, **{k: list(getattr(self, k)) for k in
                ("beta", "eta", "zeta", "alpha", "h1", "h2", "kt", "kn", "xi")}}

    @classmethod
    def from_dict(cls, doc: dict) -> "BeamConfig":
        keys = ("beta", "eta", "zeta", "alpha", "h1", "h2", "kt", "kn", "xi")
        for k in keys:
            if k not in doc:
                raise ModelError(f"missing beam key {k!r}")
        cfg = cls(**{k: tuple(np.atleast_1d(doc[k]).tolist()) for k in keys})
        if "N" in doc and int(doc["N"]) != cfg.N:
            raise ModelError(f"N = {doc['N']} disagrees with {cfg.N} layer entries")
        return cfg


def two_layer_benchmark() -> BeamConfig:
    """Two-layer benchmark beam (layers with equal force/torque speeds)."""
    return BeamConfig(
        beta=(1.0, 2.0), eta=(1.0, 1.0), zeta=(1.0, 2.0), alpha=(1.0, 1.0),
        h1=(1.0,), h2=(1.0,), kt=(1.0,), kn=(1.0,), xi=(-1.0, 1.0, -1.0, 1.0),
    )


@dataclass(frozen=True)
class OrderingMap:
    """Speed ordering of the channels.

    ``perm[k]`` is the physical channel at ordered Y (and X, input)
    position ``k``, fastest first. Z channels use ``zperm``, the reverse,
    so Z speeds are nondecreasing.
    """

    perm: np.ndarray
    speeds: np.ndarray  # ordered, nonincreasing
    kind: tuple[str, ...]  # per ordered channel: "force" | "torque"
    layer: tuple[int, ...]  # per ordered channel

    @property
    def zperm(self) -> np.ndarray:
        return self.perm[::-1].copy()

    @property
    def inverse(self) -> np.ndarray:
        inv = np.empty_like(self.perm)
        inv[self.perm] = np.arange(self.perm.size)
        return inv

    @property
    def nu(self) -> int:
        return partition_speeds(self.speeds).kappa

    def to_ordered(self, v, axis=0):
        return np.take(v, self.perm, axis=axis)

    def to_physical(self, v, axis=0):
        return np.take(v, self.inverse, axis=axis)


def ordering(cfg: BeamConfig) -> OrderingMap:
    sp = cfg.channel_speeds()
    perm = np.argsort(-sp, kind="stable")
    kind = tuple("force" if p % 2 == 0 else "torque" for p in perm)
    layer = tuple(int(p // 2) for p in perm)
    return OrderingMap(perm, sp[perm], kind, layer)


def physical_matrices(cfg: BeamConfig) -> dict:
    """Coupling matrices in physical channel order.

    Returns ``Lam, Pi, F, A, B, C, D`` such that
    ``Y_t = S Y_x + Lam (Y+Z) + Pi X + int_0^x F (Y+Z)`` and the Z rows
    carry the negated couplings.
    """
    N = cfg.N
    n = 2 * N
    sb, se = np.sqrt(cfg.beta), np.sqrt(cfg.eta)
    sz, sa = np.sqrt(cfg.zeta), np.sqrt(cfg.alpha)
    Lam, Pi, F = np.zeros((n, n)), np.zeros((n, n)), np.zeros((n, n))

    def add_v(row, layer, coef):
        # coef * v_layer(x) = coef * (x_v + int (p + r) / (2 sqrt eta))
        Pi[row, 2 * layer] += coef
        F[row, 2 * layer] += coef / (2 * se[layer])

    def add_th(row, layer, coef):
        Pi[row, 2 * layer + 1] += coef
        F[row, 2 * layer + 1] += coef / (2 * sa[layer])

    for i in range(N):
        pv, qt = 2 * i, 2 * i + 1
        # force balance / sqrt(beta): eta th_x + interface normal springs
        Lam[pv, qt] += cfg.eta[i] / (2 * sa[i]) / sb[i]
        if i > 0:
            kn = cfg.kn[i - 1] / sb[i]
            add_v(pv, i - 1, kn)
            add_v(pv, i, -kn)
        if i < N - 1:
            kn = cfg.kn[i] / sb[i]
            add_v(pv, i, -kn)
            add_v(pv, i + 1, kn)
        # moment balance / sqrt(zeta): -eta (v_x + th) + interface shear springs
        Lam[qt, pv] -= cfg.eta[i] / (2 * se[i]) / sz[i]
        add_th(qt, i, -cfg.eta[i] / sz[i])
        if i > 0:
            c = cfg.h2[i - 1] * cfg.kt[i - 1] / sz[i]
            add_th(qt, i - 1, -c * cfg.h1[i - 1])
            add_th(qt, i, -c * cfg.h2[i - 1])
        if i < N - 1:
            c = cfg.h1[i] * cfg.kt[i] / sz[i]
            add_th(qt, i, -c * cfg.h1[i])
            add_th(qt, i + 1, -c * cfg.h2[i])

    A, B = np.zeros((n, n)), np.zeros((n, n))
    C, D = np.zeros((n, n)), np.zeros((n, n))
    for i in range(N):
        pv, qt = 2 * i, 2 * i + 1
        a, b = se[i], sb[i]
        xd, xs = cfg.xi[2 * i], cfg.xi[2 * i + 1]
        den = b - xd * a
        A[pv, pv] = a * xs / den
        A[pv, qt] = -a / den
        B[pv, pv] = 1.0 / den
        B[qt, qt] = 1.0 / sz[i]
        C[pv, pv] = -(b + xd * a) / den
        D[pv, qt] = 2 * a * b / den
        D[pv, pv] = -2 * a * b * xs / den
        C[qt, qt] = -1.0
    return {"Lam": Lam, "Pi": Pi, "F": F, "A": A, "B": B, "C": C, "D": D}


def build_system(cfg: BeamConfig, iso_tol: float = 1e-9):
    """Assemble the speed-ordered hyperbolic plant of a beam."""
    om = ordering(cfg)
    blocks = partition_speeds(om.speeds, iso_tol)
    mats = physical_matrices(cfg)
    yp, zp = om.perm, om.zperm
    Lam, Pi, F = mats["Lam"], mats["Pi"], mats["F"]

    def sub(M, rows, cols):
        return M[np.ix_(rows, cols)]

    sys = HyperbolicSystem(
        sigma_plus=np.repeat(blocks.speeds, blocks.sizes)[::-1],
        blocks=blocks,
        Lambda_pp=-sub(Lam, zp, zp), Lambda_pm=-sub(Lam, zp, yp),
        Lambda_mm=sub(Lam, yp, yp), Lambda_mp=sub(Lam, yp, zp),
        Pi_p=-sub(Pi, zp, yp), Pi_m=sub(Pi, yp, yp),
        F_pp=-sub(F, zp, zp), F_pm=-sub(F, zp, yp),
        F_mp=sub(F, yp, zp), F_mm=sub(F, yp, yp),
        A=sub(mats["A"], yp, yp), B=sub(mats["B"], yp, yp),
        C=sub(mats["C"], zp, yp), D=sub(mats["D"], zp, yp),
    )
    return sys, om


@dataclass
class BeamState:
    """Per-layer fields on a grid, each array (N, G+1)."""

    grid: np.ndarray
    v: np.ndarray
    theta: np.ndarray
    v_t: np.ndarray
    theta_t: np.ndarray

    def __post_init__(self):
        for name in ("v", "theta", "v_t", "theta_t"):
            setattr(self, name, np.atleast_2d(np.asarray(getattr(self, name), dtype=float)))


def _split_phys(cfg, om, s: StateSnapshot):
    n = 2 * cfg.N
    if s.Y.shape[0] != n or s.Z.shape[0] != n or s.X.size != n:
        raise ModelError(f"snapshot dimensions do not match a {cfg.N}-layer beam")
    Yp = np.empty_like(s.Y)
    Zp = np.empty_like(s.Z)
    Xp = np.empty_like(s.X)
    Yp[om.perm] = s.Y
    Zp[om.zperm] = s.Z
    Xp[om.perm] = s.X
    return Yp, Zp, Xp


def riemann_forward(bs: BeamState, cfg: BeamConfig, om: OrderingMap | None = None) -> StateSnapshot:
    """Riemann variables of a beam state, in speed order."""
    om = om or ordering(cfg)
    x = np.asarray(bs.grid, dtype=float)
    if x.size < 3:
        raise ModelError("grid too coarse: need at least 3 nodes")
    N = cfg.N
    se, sb = np.sqrt(cfg.eta)[:, None], np.sqrt(cfg.beta)[:, None]
    sa, sz = np.sqrt(cfg.alpha)[:, None], np.sqrt(cfg.zeta)[:, None]
    v_x = np.gradient(bs.v, x, axis=1, edge_order=2)
    th_x = np.gradient(bs.theta, x, axis=1, edge_order=2)
    Yp = np.empty((2 * N, x.size))
    Zp = np.empty_like(Yp)
    Yp[0::2] = se * v_x + sb * bs.v_t
    Zp[0::2] = se * v_x - sb * bs.v_t
    Yp[1::2] = sa * th_x + sz * bs.theta_t
    Zp[1::2] = sa * th_x - sz * bs.theta_t
    Xp = np.empty(2 * N)
    Xp[0::2] = bs.v[:, 0]
    Xp[1::2] = bs.theta[:, 0]
    return StateSnapshot(x, Yp[om.perm], Zp[om.zperm], Xp[om.perm])


def reconstruct_beam(s: StateSnapshot, cfg: BeamConfig, om: OrderingMap | None = None) -> BeamState:
    """Invert the Riemann split; displacements by cumulative trapezoid from ``x = 0``."""
    om = om or ordering(cfg)
    Yp, Zp, Xp = _split_phys(cfg, om, s)
    se, sb = np.sqrt(cfg.eta)[:, None], np.sqrt(cfg.beta)[:, None]
    sa, sz = np.sqrt(cfg.alpha)[:, None], np.sqrt(cfg.zeta)[:, None]
    v_x = (Yp[0::2] + Zp[0::2]) / (2 * se)
    th_x = (Yp[1::2] + Zp[1::2]) / (2 * sa)

    def cumint(f):
        return scipy.integrate.cumulative_trapezoid(f, s.grid, axis=1, initial=0)

    return BeamState(
        grid=s.grid.copy(),
        v=Xp[0::2, None] + cumint(v_x),
        theta=Xp[1::2, None] + cumint(th_x),
        v_t=(Yp[0::2] - Zp[0::2]) / (2 * sb),
        theta_t=(Yp[1::2] - Zp[1::2]) / (2 * sz),
    )


def beam_slopes(s: StateSnapshot, cfg: BeamConfig, om: OrderingMap | None = None):
    """Exact ``v_x`` and ``theta_x`` from the Riemann variables, (N, G+1) each."""
    om = om or ordering(cfg)
    Yp, Zp, _ = _split_phys(cfg, om, s)
    v_x = (Yp[0::2] + Zp[0::2]) / (2 * np.sqrt(cfg.eta)[:, None])
    th_x = (Yp[1::2] + Zp[1::2]) / (2 * np.sqrt(cfg.alpha)[:, None])
    return v_x, th_x


def _boundary_rates(s, cfg, om):
    bs = reconstruct_beam(s, cfg, om)
    rate = np.empty(2 * cfg.N)
    rate[0::2] = bs.v_t[:, -1]
    rate[1::2] = bs.theta_t[:, -1]
    return rate[om.perm]


def _channel_coeffs(cfg, om):
    gain = np.empty(2 * cfg.N)  # sqrt(eta) or sqrt(alpha)
    inertia = np.empty(2 * cfg.N)  # sqrt(beta) or sqrt(zeta)
    gain[0::2], gain[1::2] = np.sqrt(cfg.eta), np.sqrt(cfg.alpha)
    inertia[0::2], inertia[1::2] = np.sqrt(cfg.beta), np.sqrt(cfg.zeta)
    return gain[om.perm], inertia[om.perm]


def physical_controls(Upq, s: StateSnapshot, cfg: BeamConfig, om: OrderingMap | None = None):
    """Boundary forces/torques (speed order) realizing ``p(1), q(1) = Upq``.

    Force channel ``k``: ``U = Upq / sqrt(eta) - v_t(1) / S_kk``;
    torque channel: ``U = Upq / sqrt(alpha) - theta_t(1) / S_kk``.
    """
    om = om or ordering(cfg)
    Upq = np.asarray(Upq, dtype=float).ravel()
    if Upq.size != 2 * cfg.N:
        raise ModelError("Upq has the wrong length")
    gain, inertia = _channel_coeffs(cfg, om)
    return Upq / gain - (inertia / gain) * _boundary_rates(s, cfg, om)


def pq_controls(U, s: StateSnapshot, cfg: BeamConfig, om: OrderingMap | None = None):
    """Inverse of :func:`physical_controls`: ``Upq = sqrt(eta) U + sqrt(beta) v_t(1)``."""
    om = om or ordering(cfg)
    gain, inertia = _channel_coeffs(cfg, om)
    return gain * np.asarray(U, dtype=float) + inertia * _boundary_rates(s, cfg, om)

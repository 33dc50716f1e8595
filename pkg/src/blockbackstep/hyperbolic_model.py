"""Isotachic hyperbolic PIDE-ODE plants.

The plant class is

    Z_t = -S+ Z_x + Lpp Z + Lpm Y + Pp X + int_0^x (Fpp Z + Fpm Y) dy
    Y_t =  S- Y_x + Lmm Y + Lmp Z + Pm X + int_0^x (Fmp Z + Fmm Y) dy
    X'  =  A X + B Y(0)
    Y(1) = U,   Z(0) = C Y(0) + D X

with ``Y`` grouped into blocks of equal transport speed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

__all__ = [
    "BlockStructure",
    "HyperbolicSystem",
    "StateSnapshot",
    "ValidationReport",
    "ModelError",
    "partition_speeds",
    "validate_system",
    "controllability_rank",
    "uniform_grid",
]

# (attribute, rows, cols) shapes, dims resolved against (m, n, d)
MATRIX_SHAPES = {
    "Lambda_pp": ("m", "m"),
    "Lambda_pm": ("m", "n"),
    "Lambda_mm": ("n", "n"),
    "Lambda_mp": ("n", "m"),
    "Pi_p": ("m", "d"),
    "Pi_m": ("n", "d"),
    "F_pp": ("m", "m"),
    "F_pm": ("m", "n"),
    "F_mp": ("n", "m"),
    "F_mm": ("n", "n"),
    "A": ("d", "d"),
    "B": ("d", "n"),
    "C": ("m", "n"),
    "D": ("m", "d"),
}


class ModelError(ValueError):
    """Invalid plant data (speeds, tolerances, dimensions)."""


@dataclass(frozen=True)
class BlockStructure:
    """Partition of the ``Y`` channels into blocks of equal speed.

    ``speeds`` are strictly decreasing; block ``j`` holds ``sizes[j]``
    consecutive channels transported at ``speeds[j]``.
    """

    sizes: tuple[int, ...]
    speeds: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))
        object.__setattr__(self, "speeds", tuple(float(s) for s in self.speeds))
        if len(self.sizes) != len(self.speeds) or not self.sizes:
            raise ModelError("sizes and speeds must be nonempty and of equal length")
        if any(s < 1 for s in self.sizes):
            raise ModelError("block sizes must be >= 1")
        if any(v <= 0 for v in self.speeds):
            raise ModelError("block speeds must be positive")
        if any(a <= b for a, b in zip(self.speeds, self.speeds[1:])):
            raise ModelError("block speeds must be strictly decreasing")

    @property
    def kappa(self) -> int:
        return len(self.sizes)

    @property
    def n(self) -> int:
        return sum(self.sizes)

    @property
    def channel_speeds(self) -> np.ndarray:
        """Speed of every ``Y`` channel (diagonal of the minus-speed matrix)."""
        return np.repeat(np.asarray(self.speeds), self.sizes)

    @property
    def block_of(self) -> np.ndarray:
        """Block index of every ``Y`` channel."""
        return np.repeat(np.arange(self.kappa), self.sizes)

    def slices(self) -> list[slice]:
        edges = np.concatenate([[0], np.cumsum(self.sizes)])
        return [slice(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]


def partition_speeds(speeds, tol: float = 1e-9) -> BlockStructure:
    """Group speeds into clusters of (relatively) equal value.

    Consecutive sorted speeds whose relative gap ``|a - b| / max(a, b)``
    is at most ``tol`` join the same cluster. Each cluster is represented
    by its arithmetic mean; clusters are returned fastest first.
    """
    v = np.asarray(speeds, dtype=float).ravel()
    if v.size == 0:
        raise ModelError("invalid speed: empty speed list")
    if np.any(~np.isfinite(v)) or np.any(v <= 0):
        raise ModelError(f"invalid speed: all speeds must be positive, got {v.tolist()}")
    if tol < 0:
        raise ModelError(f"invalid tolerance: {tol} < 0")
    v = np.sort(v)[::-1]
    clusters = [[v[0]]]
    for s in v[1:]:
        prev = clusters[-1][-1]
        if abs(prev - s) <= tol * max(prev, s):
            clusters[-1].append(s)
        else:
            clusters.append([s])
    return BlockStructure(
        sizes=tuple(len(c) for c in clusters),
        speeds=tuple(float(np.mean(c)) for c in clusters),
    )


def controllability_rank(A, B) -> int:
    """Rank of the Kalman matrix ``[B, AB, ..., A^(d-1) B]``.

    Uses QR with column pivoting; diagonal entries of ``R`` below
    ``max(shape) * eps * |R_00|`` are treated as zero.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float)
    if B.ndim == 1:
        B = B[:, None]
    d = A.shape[0]
    if A.shape != (d, d) or B.shape[0] != d:
        raise ModelError(f"dimension mismatch: A {A.shape}, B {B.shape}")
    blocks = [B]
    for _ in range(d - 1):
        blocks.append(A @ blocks[-1])
    ctrb = np.hstack(blocks)
    if not np.any(ctrb):
        return 0
    _, R, _ = scipy.linalg.qr(ctrb, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    thresh = max(ctrb.shape) * np.finfo(float).eps * diag[0]
    return int(np.sum(diag > thresh))


@dataclass(frozen=True)
class HyperbolicSystem:
    """Constant-coefficient plant with ``m`` Z-channels, ``n`` Y-channels, ``d`` ODE states."""

    sigma_plus: np.ndarray
    blocks: BlockStructure
    Lambda_pp: np.ndarray
    Lambda_pm: np.ndarray
    Lambda_mm: np.ndarray
    Lambda_mp: np.ndarray
    Pi_p: np.ndarray
    Pi_m: np.ndarray
    F_pp: np.ndarray
    F_pm: np.ndarray
    F_mp: np.ndarray
    F_mm: np.ndarray
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "sigma_plus", np.asarray(self.sigma_plus, dtype=float).ravel().copy()
        )
        for name in MATRIX_SHAPES:
            arr = np.array(getattr(self, name), dtype=float)
            if arr.ndim == 1 and arr.size == 0:
                arr = arr.reshape(0, 0)
            arr = np.atleast_2d(arr)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        self.sigma_plus.setflags(write=False)

    @property
    def m(self) -> int:
        return self.sigma_plus.size

    @property
    def n(self) -> int:
        return self.blocks.n

    @property
    def d(self) -> int:
        return self.A.shape[0]

    @property
    def sigma_minus(self) -> np.ndarray:
        return self.blocks.channel_speeds

    def expected_shape(self, name: str) -> tuple[int, int]:
        dims = {"m": self.m, "n": self.n, "d": self.d}
        r, c = MATRIX_SHAPES[name]
        return dims[r], dims[c]

    def max_speed(self) -> float:
        return float(max(self.sigma_plus.max(initial=0.0), max(self.blocks.speeds)))

    @classmethod
    def zeros(cls, sigma_plus, blocks: BlockStructure, d: int, **overrides):
        """All-zero coupling system; ``overrides`` replace named matrices."""
        m, n = len(sigma_plus), blocks.n
        dims = {"m": m, "n": n, "d": d}
        mats = {k: np.zeros((dims[r], dims[c])) for k, (r, c) in MATRIX_SHAPES.items()}
        mats.update(overrides)
        return cls(sigma_plus=sigma_plus, blocks=blocks, **mats)

    def replace(self, **changes) -> "HyperbolicSystem":
        kw = {k: getattr(self, k) for k in ["sigma_plus", "blocks", *MATRIX_SHAPES]}
        kw.update(changes)
        return HyperbolicSystem(**kw)

    def to_dict(self) -> dict:
        """Config-document form: dimensions, speeds, row-major matrices."""
        out = {
            "m": self.m,
            "n": self.n,
            "d": self.d,
            "sigma_plus": self.sigma_plus.tolist(),
            "block_sizes": list(self.blocks.sizes),
            "block_speeds": list(self.blocks.speeds),
        }
        for name in MATRIX_SHAPES:
            out[name] = getattr(self, name).tolist()
        return out

    @classmethod
    def from_dict(cls, doc: dict) -> "HyperbolicSystem":
        for key in ("m", "n", "d", "sigma_plus", "block_sizes", "block_speeds"):
            if key not in doc:
                raise ModelError(f"missing key {key!r}")
        m, n, d = int(doc["m"]), int(doc["n"]), int(doc["d"])
        blocks = BlockStructure(tuple(doc["block_sizes"]), tuple(doc["block_speeds"]))
        dims = {"m": m, "n": n, "d": d}
        mats = {}
        for name, (r, c) in MATRIX_SHAPES.items():
            if name in doc:
                arr = np.asarray(doc[name], dtype=float)
                if arr.size == 0:
                    arr = np.zeros((dims[r], dims[c]))
                arr = arr.reshape(dims[r], dims[c]) if arr.size == dims[r] * dims[c] else arr
                if arr.shape != (dims[r], dims[c]):
                    raise ModelError(
                        f"key {name!r}: expected shape {(dims[r], dims[c])}, got {arr.shape}"
                    )
                mats[name] = arr
            else:
                mats[name] = np.zeros((dims[r], dims[c]))
        sys = cls(sigma_plus=doc["sigma_plus"], blocks=blocks, **mats)
        if sys.m != m or sys.n != n:
            raise ModelError("declared m/n disagree with sigma_plus / block_sizes")
        return sys


@dataclass
class ValidationReport:
    issues: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.issues

    def __bool__(self):
        return self.ok

    def __str__(self):
        return "ok" if self.ok else "\n".join(self.issues)


def validate_system(sys: HyperbolicSystem) -> ValidationReport:
    """List every violated standing hypothesis; never raises."""
    rep = ValidationReport()
    sp = sys.sigma_plus
    if sp.size and np.any(sp <= 0):
        rep.issues.append("sigma_plus must be positive")
    if np.any(np.diff(sp) < 0):
        rep.issues.append("sigma_plus not nondecreasing")
    for name in MATRIX_SHAPES:
        want = sys.expected_shape(name)
        got = getattr(sys, name).shape
        if got != want:
            rep.issues.append(f"{name} has shape {got}, expected {want}")
        elif not np.all(np.isfinite(getattr(sys, name))):
            rep.issues.append(f"{name} has non-finite entries")
    if sys.A.shape[0] != sys.A.shape[1]:
        return rep
    if not any("shape" in s for s in rep.issues):
        try:
            rank = controllability_rank(sys.A, sys.B)
        except ModelError as exc:
            rep.issues.append(str(exc))
        else:
            if rank < sys.d:
                rep.issues.append(
                    f"(A, B) not controllable: Kalman rank {rank} < d = {sys.d}"
                )
    return rep


def uniform_grid(G: int) -> np.ndarray:
    if G < 1:
        raise ModelError("grid needs at least 2 nodes")
    return np.linspace(0.0, 1.0, G + 1)


@dataclass
class StateSnapshot:
    """Plant state on a uniform grid: ``Y`` is (n, G+1), ``Z`` is (m, G+1)."""

    grid: np.ndarray
    Y: np.ndarray
    Z: np.ndarray
    X: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.Y = np.atleast_2d(np.asarray(self.Y, dtype=float))
        self.Z = np.atleast_2d(np.asarray(self.Z, dtype=float))
        self.X = np.asarray(self.X, dtype=float).ravel()
        if self.grid.size < 2 or np.any(np.diff(self.grid) <= 0):
            raise ModelError("grid must have >= 2 strictly increasing nodes")
        if abs(self.grid[0]) > 1e-14 or abs(self.grid[-1] - 1.0) > 1e-14:
            raise ModelError("grid must span [0, 1]")
        npts = self.grid.size
        if self.Y.shape[1] != npts or self.Z.shape[1] != npts:
            raise ModelError("state arrays do not match grid size")

    @property
    def G(self) -> int:
        return self.grid.size - 1

    def copy(self) -> "StateSnapshot":
        return StateSnapshot(self.grid.copy(), self.Y.copy(), self.Z.copy(), self.X.copy(), self.t)

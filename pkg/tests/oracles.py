"""Independent reference solutions used by the tests.

Nothing here imports the package's solver, transform or quadrature code.
"""

import numpy as np


def _cumtrap(f, h):
    out = np.zeros_like(f)
    out[..., 1:] = np.cumsum(0.5 * h * (f[..., 1:] + f[..., :-1]), axis=-1)
    return out


def _trap(f, dx):
    return float(0.5 * dx * (f[1:] + f[:-1]).sum())


def scalar_kernel_oracle(c: dict, G: int, tol: float = 1e-13, max_iter: int = 200):
    """Successive approximation of the scalar kernel equations, unit speeds.

    ``c`` holds the plant scalars ``lmm, lmp, lpm, lpp, pim, pip, fmm, fmp,
    fpm, fpp, A, B, C, D, Phi0``. With both speeds equal to one the K
    characteristics are the lines ``x - y = const`` and the L
    characteristics the lines ``x + y = const``, so every integral runs
    along grid diagonals and no interpolation is needed.

    Returns ``(K, L, Phi)`` with ``K[a, b] = K(x_a, y_b)`` for ``b <= a``.
    """
    h = 1.0 / G
    x = np.linspace(0.0, 1.0, G + 1)
    N = G + 1
    e = np.exp(c["lmm"] * x)  # block transform A(x) for a 1x1 block, speed 1
    Lmp, Pim, Fmp = e * c["lmp"], e * c["pim"], e * c["fmp"]
    Lpm, Fpm = c["lpm"] / e, c["fpm"] / e
    Fmm = np.outer(e, 1.0 / e) * c["fmm"]  # (x, y)
    tri = np.tril(np.ones((N, N), dtype=bool))

    # along-diagonal index maps: K line d = a - b, step k = b
    dK, kK = np.meshgrid(np.arange(N), np.arange(N), indexing="ij")
    okK = dK + kK <= G
    K = np.zeros((N, N))
    L = np.zeros((N, N))
    Phi = np.full(N, c["Phi0"], dtype=float)

    def tail_integral(F):
        """``int_{y_b}^{x_a} F(x_a, s) ds`` by trapezoid, for ``b <= a``."""
        F = np.where(tri, F, 0.0)
        rev = np.cumsum(F[:, ::-1], axis=1)[:, ::-1]
        out = h * (rev - 0.5 * F - 0.5 * np.diag(F)[:, None])
        return np.where(tri, out, 0.0)

    for it in range(max_iter):
        R = tail_integral(K * e[None, :])
        RL = tail_integral(L)
        SK = L * Lpm[None, :] - Fmm + R * c["fmm"] / e[None, :] + RL * Fpm[None, :]
        SL = K * Lmp[None, :] + L * c["lpp"] - Fmp[:, None] + R * c["fmp"] + RL * c["fpp"]

        rowK = np.array([_trap(K[a, : a + 1] * Pim[: a + 1], dx=h) if a else 0.0 for a in range(N)])
        rowL = np.array([_trap(L[a, : a + 1], dx=h) if a else 0.0 for a in range(N)])
        rhs = Phi * c["A"] - Pim + L[:, 0] * c["D"] + rowK + rowL * c["pip"]
        Phi_new = c["Phi0"] + _cumtrap(rhs, h)

        edge = Phi_new * c["B"] + L[:, 0] * c["C"]
        SKd = np.where(okK, SK[np.minimum(dK + kK, G), kK], 0.0)
        cumK = _cumtrap(SKd, h)
        K_new = np.zeros((N, N))
        K_new[(dK + kK)[okK], kK[okK]] = edge[dK[okK]] + cumK[okK]

        L_new = np.zeros((N, N))
        diagS = np.diag(SL)
        for s in range(2 * G + 1):
            a0 = (s + 1) // 2
            a_idx = np.arange(a0, min(s, G) + 1)
            if a_idx.size == 0:
                continue
            b_idx = s - a_idx
            xd = 0.5 * s * h
            Ld = -np.exp(c["lmm"] * xd) * c["lmp"] / 2.0
            vals = SL[a_idx, b_idx]
            if s % 2 == 0:
                L_new[a_idx, b_idx] = Ld + _cumtrap(vals, h)
            else:
                # half step from the diagonal point to the first node
                sd = 0.5 * (diagS[(s - 1) // 2] + diagS[(s + 1) // 2])
                first = Ld + 0.25 * h * (sd + vals[0])
                L_new[a_idx, b_idx] = first + _cumtrap(vals, h)

        change = max(np.abs(K_new - K).max(), np.abs(L_new - L).max(), np.abs(Phi_new - Phi).max())
        K, L, Phi = K_new, L_new, Phi_new
        if change < tol:
            break
    return K, L, Phi

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from blockbackstep.block_transform import (
    apply_block_transform,
    bar_coefficients,
    build_transform,
    within_block_max,
)
from blockbackstep.hyperbolic_model import BlockStructure, HyperbolicSystem, ModelError


def _system(Lmm, sizes, speeds, m=1):
    n = sum(sizes)
    return HyperbolicSystem.zeros(
        [1.0] * m, BlockStructure(sizes, speeds), n, A=np.zeros((n, n)), B=np.eye(n),
        Lambda_mm=np.asarray(Lmm, dtype=float),
    )


def test_zero_generator_is_identity():
    bt = build_transform(_system(np.zeros((3, 3)), (2, 1), (1.0, 0.5)), 20)
    np.testing.assert_array_equal(bt.A_of_x, np.broadcast_to(np.eye(3), bt.A_of_x.shape))
    Y = np.random.default_rng(1).normal(size=(3, 21))
    np.testing.assert_array_equal(apply_block_transform(bt, Y), Y)


def test_scalar_exponential():
    lam, sig = -1.3, 0.8
    bt = build_transform(_system([[lam]], (1,), (sig,)), 40)
    np.testing.assert_allclose(bt.A_of_x[:, 0, 0], np.exp(lam * bt.grid / sig), rtol=1e-14)
    Yb = apply_block_transform(bt, np.ones((1, 41)))
    np.testing.assert_allclose(Yb[0], np.exp(lam * bt.grid / sig), rtol=1e-14)


def test_random_block_against_ode_oracle():
    rng = np.random.default_rng(3)
    L = rng.normal(size=(2, 2))
    sig = 0.7
    bt = build_transform(_system(L, (2,), (sig,)), 50)
    # d/dx A = (L / sig) A, A(0) = I, integrated independently
    sol = solve_ivp(lambda x, a: ((L / sig) @ a.reshape(2, 2)).ravel(), (0, 1), np.eye(2).ravel(),
                    method="DOP853", t_eval=bt.grid, rtol=1e-13, atol=1e-14)
    ref = sol.y.T.reshape(-1, 2, 2)
    assert np.abs(bt.A_of_x - ref).max() < 1e-11
    assert bt.inverse_error() < 1e-12


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_inverse_identity_random(seed):
    rng = np.random.default_rng(seed)
    L = rng.normal(size=(4, 4))  # unit-scale coefficients; exp(20) blocks lose absolute accuracy
    bt = build_transform(_system(L, (2, 2), (1.0, 0.5)), 16)
    assert bt.inverse_error() <= 1e-10
    Y = rng.normal(size=(4, 17))
    back = apply_block_transform(bt, apply_block_transform(bt, Y, "forward"), "inverse")
    np.testing.assert_allclose(back, Y, atol=1e-10)


def test_block_diagonal_generator_gives_zero_bar():
    L = np.zeros((3, 3))
    L[:2, :2] = [[0.4, -1.0], [2.0, 0.1]]
    L[2, 2] = -0.7
    sys = _system(L, (2, 1), (1.0, 0.5))
    bar = bar_coefficients(sys, build_transform(sys, 30))
    assert np.abs(bar.Lambda_mm).max() < 1e-12


def test_single_cross_entry_matches_scalar_product():
    lam1, lam2, s1, s2, c = 0.6, -0.9, 1.0, 0.5, 1.7
    L = np.array([[lam1, c], [0.0, lam2]])
    sys = _system(L, (1, 1), (s1, s2))
    bt = build_transform(sys, 25)
    bar = bar_coefficients(sys, bt)
    x = bt.grid
    np.testing.assert_allclose(bar.Lambda_mm[:, 0, 1], np.exp(lam1 * x / s1) * c * np.exp(-lam2 * x / s2),
                               rtol=1e-13)
    assert np.abs(bar.Lambda_mm[:, 1, 0]).max() == 0.0


def test_benchmark_within_block_vanishes(bench):
    _, sys, _ = bench
    bt = build_transform(sys, 200)
    assert within_block_max(bar_coefficients(sys, bt), sys.blocks) <= 1e-12


def test_direction_and_shape_errors():
    bt = build_transform(_system([[0.0]], (1,), (1.0,)), 4)
    with pytest.raises(ValueError, match="direction"):
        apply_block_transform(bt, np.zeros((1, 5)), "sideways")
    with pytest.raises(ModelError):
        apply_block_transform(bt, np.zeros((1, 6)))

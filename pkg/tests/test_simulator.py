import csv

import numpy as np
import pytest

from blockbackstep.hyperbolic_model import BlockStructure, HyperbolicSystem, StateSnapshot
from blockbackstep.simulator import (
    BlowUpError,
    ConfigurationError,
    SimSettings,
    Trajectory,
    fit_decay_rate,
    layer_assembly_error,
    lyapunov_series,
    norm_series,
    sigma_characteristic,
    simulate,
    simulate_target_sigma,
    write_series_csv,
    write_trajectory_csv,
)
from blockbackstep.timoshenko import BeamState, riemann_forward

BENCH_SPEEDS = np.array([1.0, 1.0, np.sqrt(0.5), np.sqrt(0.5)])


def _transport_only(speed_plus=1.0):
    return HyperbolicSystem.zeros([speed_plus], BlockStructure((1,), (1.0,)), 1, A=[[-1.0]], B=[[1.0]])


def _beam_init(cfg, om, G):
    x = np.linspace(0, 1, G + 1)
    v = np.array([np.sin(np.pi * x / 2), 0.5 * x**2])
    th = np.array([0.3 * x, -0.2 * np.sin(np.pi * x)])
    z = np.zeros_like(v)
    return riemann_forward(BeamState(x, v, th, z, z), cfg, om)


# ---------------------------------------------------------------- settings


def test_settings_validation():
    for bad in (dict(cfl=0.0), dict(cfl=1.5), dict(T=0.0), dict(mode="x"), dict(stride=0),
                dict(mode="custom")):
        with pytest.raises(ConfigurationError):
            SimSettings(**bad)


def test_time_step_respects_cfl_and_divides_horizon():
    st = SimSettings(G=64, T=2.3, cfl=0.5)
    dt, steps = st.time_step(1.7)
    assert dt <= 0.5 / 64 / 1.7
    assert dt * steps == pytest.approx(2.3, rel=1e-14)


# ---------------------------------------------------------------- plant


def test_decoupled_pulse_leaves_domain():
    G = 80
    x = np.linspace(0, 1, G + 1)
    pulse = np.exp(-200 * (x - 0.3) ** 2)
    pulse[0] = 0.0
    init = StateSnapshot(x, np.zeros((1, G + 1)), pulse[None, :], [0.0])
    tr = simulate(_transport_only(), None, init, SimSettings(G=G, T=1.5, cfl=1.0, mode="open"))
    after = tr.t >= 1.0 + 1.0 / G
    assert np.abs(tr.Z[after]).max() == 0.0
    assert np.abs(tr.Z[tr.t < 0.5]).max() > 0.5


def test_grid_and_dimension_mismatch(bench):
    _, sys, _ = bench
    init = StateSnapshot(np.linspace(0, 1, 11), np.zeros((4, 11)), np.zeros((4, 11)), np.zeros(4))
    with pytest.raises(ConfigurationError, match="grid mismatch"):
        simulate(sys, None, init, SimSettings(G=20, T=1, mode="open"))
    with pytest.raises(ConfigurationError, match="control law"):
        simulate(sys, None, init, SimSettings(G=10, T=1, mode="closed"))


def test_blow_up_reported():
    G = 20
    x = np.linspace(0, 1, G + 1)
    init = StateSnapshot(x, np.zeros((1, G + 1)), np.zeros((1, G + 1)), [0.0])
    st = SimSettings(G=G, T=1.0, mode="custom", input_fn=lambda t: [np.inf])
    with pytest.raises(BlowUpError):
        simulate(_transport_only(), None, init, st)


def test_open_loop_grows_closed_loop_decays(design50, bench):
    cfg, sys, om = bench
    init = _beam_init(cfg, om, 50)
    op = norm_series(simulate(sys, None, init, SimSettings(G=50, T=10, mode="open", stride=20)), cfg, om)
    assert op["beam"][-1] / op["beam"][0] > 10
    tr = simulate(sys, design50.law, init, SimSettings(G=50, T=5, stride=20))
    cl = norm_series(tr, cfg, om)
    assert cl["beam"][-1] / cl["beam"][0] < 1e-4
    np.testing.assert_allclose(tr.Y[:, :, -1], tr.U, atol=1e-12)  # Y(1) = U at every output


def test_layer_assembly_small_grid(bench):
    cfg, _, om = bench
    phys = lambda t: np.array([[0.1 * np.sin(t), 0.05 * np.cos(2 * t)], [-0.07 * np.sin(3 * t), 0.02 * t]])
    st = SimSettings(G=40, T=2, mode="custom", input_fn=phys, stride=10)
    assert layer_assembly_error(cfg, _beam_init(cfg, om, 40), st, om) <= 1e-10


# ---------------------------------------------------------------- target cascade


def test_target_single_speed_exact_extinction():
    G = 50
    x = np.linspace(0, 1, G + 1)
    t, sig = simulate_target_sigma([0.8], np.zeros((1, 1, G + 1)), np.cos(3 * x)[None, :],
                                   SimSettings(G=G, T=2, stride=5))
    assert np.abs(sig[t > 1 / 0.8 + 1.0 / (0.8 * G)]).max() == 0.0


def _cascade(G):
    x = np.linspace(0, 1, G + 1)
    Om = np.zeros((4, 4, G + 1))
    Om[2, 0], Om[2, 1], Om[3, 0], Om[3, 1] = 1 + x, 0.5, np.cos(x), -2 * x
    init = np.array([(k + 1) * np.sin(np.pi * x) for k in range(4)])
    return x, Om, init


def test_target_bench_speeds_extinction():
    G = 100
    x, Om, init = _cascade(G)
    t, sig = simulate_target_sigma(BENCH_SPEEDS, Om, init, SimSettings(G=G, T=2.5, stride=4))
    late = sig[t >= 1.6]
    assert late.size and np.abs(late).max() <= 1e-10 * np.abs(init).max()
    assert np.abs(sig[t < 1.3]).max() > 0.1


def test_target_matches_characteristic_oracle():
    G = 200
    x, Om, init = _cascade(G)
    t, sig = simulate_target_sigma(BENCH_SPEEDS, Om, init, SimSettings(G=G, T=1.3, stride=80))

    def omega(i, k, xx):
        table = {(2, 0): 1 + xx, (2, 1): 0.5 + 0 * xx, (3, 0): np.cos(xx), (3, 1): -2 * xx}
        return table.get((i, k), 0 * xx)

    def init_fn(i, xx):
        return (i + 1) * np.sin(np.pi * xx)

    probe = np.arange(0, G + 1, 10)
    for k in range(1, len(t)):
        for i in (2, 3):
            ref = sigma_characteristic(BENCH_SPEEDS, omega, init_fn, i, x[probe], t[k])
            assert np.abs(sig[k, i, probe] - ref).max() <= 1e-3


def test_target_rejects_upper_omega():
    Om = np.zeros((2, 2, 11))
    Om[0, 1] = 1.0
    with pytest.raises(ValueError, match="lower"):
        simulate_target_sigma([1.0, 0.5], Om, np.zeros((2, 11)), SimSettings(G=10, T=1))


# ---------------------------------------------------------------- series


def _constant_trajectory(K=5, G=10):
    x = np.linspace(0, 1, G + 1)
    Y = np.broadcast_to(np.sin(x), (K, 4, G + 1)).copy()
    return Trajectory(x, np.arange(K, dtype=float), Y, 0.5 * Y, np.ones((K, 4)), np.zeros((K, 4)))


def test_norm_series_zero_and_constant(bench):
    cfg, _, om = bench
    tr = _constant_trajectory()
    ns = norm_series(tr, cfg, om)
    assert np.ptp(ns["riemann"]) == 0.0 and np.ptp(ns["beam"]) == 0.0
    tr.Y[:] = 0
    tr.Z[:] = 0
    tr.X[:] = 0
    ns = norm_series(tr, cfg, om)
    assert not ns["riemann"].any() and not ns["beam"].any()


def test_fit_decay_rate():
    t = np.linspace(0, 5, 101)
    assert fit_decay_rate(t, 3 * np.exp(-2.5 * t), (2, 5)) == pytest.approx(2.5, rel=1e-12)
    with pytest.raises(ValueError):
        fit_decay_rate(t, np.exp(-t), (6, 7))
    with pytest.raises(ValueError):
        fit_decay_rate(t, -np.ones_like(t), (1, 2))


def test_lyapunov_positive_and_decaying(design50, bench):
    cfg, sys, om = bench
    d = design50
    tr = simulate(sys, d.law, _beam_init(cfg, om, 50), SimSettings(G=50, T=4, stride=40))
    V = lyapunov_series(tr, d.ks, d.bt, sys, 1.0, 1.0, 1.0)
    assert np.all(V > 0)
    assert V[-1] < 1e-3 * V[0]


def test_csv_full_precision(tmp_path):
    tr = _constant_trajectory(K=2, G=3)
    tr.Y[0, 0, 0] = 1 / 3
    write_trajectory_csv(tmp_path / "tr.csv", tr)
    rows = list(csv.reader(open(tmp_path / "tr.csv")))
    assert rows[0][:3] == ["t", "x", "Y1"]
    assert float(rows[1][2]) == 1 / 3
    assert len(rows) == 1 + 2 * 4
    write_series_csv(tmp_path / "s.csv", [0.1], [np.pi], "norm")
    rows = list(csv.reader(open(tmp_path / "s.csv")))
    assert rows == [["t", "norm"], ["0.10000000000000001", "3.1415926535897931"]]

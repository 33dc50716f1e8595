"""Acceptance criteria 1 to 10 on the two-layer beam benchmark.

Each test prints one ``PASS``/``FAIL`` line; the lines are repeated in the
pytest terminal summary. Run alone with ``pytest -s tests/test_acceptance.py``.
"""

import os
import subprocess
import sys
import time
from functools import lru_cache
from pathlib import Path

import numpy as np
import pytest

from blockbackstep.block_transform import within_block_max
from blockbackstep.cli import REFERENCE_PHI0, REFERENCE_PHI1, _probe_input, _random_snapshot
from blockbackstep.controller import from_target_state, target_map, to_target_state
from blockbackstep.kernel_solver import kernel_residuals
from blockbackstep.simulator import (
    SimSettings,
    fit_decay_rate,
    layer_assembly_error,
    norm_series,
    simulate,
)
from blockbackstep.timoshenko import BeamState, riemann_forward
from conftest import Design, beam_design, record
from oracles import scalar_kernel_oracle
from test_kernel_solver import SCALAR, scalar_system, solve

ROOT = Path(__file__).resolve().parents[1]
SIM_G = 400
MINUTES_2 = 120.0


def initial_state(d: Design, G: int):
    x = np.linspace(0.0, 1.0, G + 1)
    v = np.array([np.sin(np.pi * x / 2), 0.5 * x**2])
    th = np.array([0.3 * x, -0.2 * np.sin(np.pi * x)])
    zero = np.zeros_like(v)
    return riemann_forward(BeamState(x, v, th, zero, zero.copy()), d.cfg, d.om)


@lru_cache(maxsize=None)
def closed_loop(G: int):
    """Closed-loop run on ``[0, 5]`` with its wall time (kernel solve included)."""
    t0 = time.perf_counter()
    d = beam_design(G)
    tr = simulate(d.sys, d.law, initial_state(d, G), SimSettings(G=G, T=5.0, cfl=0.5, mode="closed"))
    return d, tr, time.perf_counter() - t0


def test_criterion_01_kernel_residuals():
    t0 = time.perf_counter()
    d200 = Design(200)
    elapsed = time.perf_counter() - t0
    rep200 = kernel_residuals(d200.ks, d200.sys, d200.bar, d200.bt, d200.Phi0)
    reps = {G: kernel_residuals(beam_design(G).ks, beam_design(G).sys, beam_design(G).bar,
                                beam_design(G).bt, beam_design(G).Phi0) for G in (50, 100)}
    reps[200] = rep200
    pde = [reps[G].max_pde for G in (50, 100, 200)]
    rms = [reps[G].pde_rms for G in (50, 100, 200)]
    orders = [np.log2(a / b) for a, b in zip(pde, pde[1:])]
    rms_ratio = [a / b for a, b in zip(rms, rms[1:])]
    ok = (
        rep200.max_bc <= 1e-8
        and pde[0] <= 0.5
        and min(orders) >= 0.9  # first order in the max norm
        and min(rms_ratio) >= 2.0  # halving per doubling in the mean-square sense
        and elapsed <= MINUTES_2
    )
    record(1, ok, f"bc residual {rep200.max_bc:.2e} (G=200), max PDE residual "
           f"{pde[0]:.3f}/{pde[1]:.3f}/{pde[2]:.3f} (orders {orders[0]:.2f}, {orders[1]:.2f}), "
           f"RMS ratios {rms_ratio[0]:.2f}, {rms_ratio[1]:.2f}, solve {elapsed:.1f}s")
    assert ok


def test_criterion_02_zero_data(bench):
    _, sys_, _ = bench
    names = ("Lambda_pp", "Lambda_pm", "Lambda_mm", "Lambda_mp", "Pi_p", "Pi_m",
             "F_pp", "F_pm", "F_mp", "F_mm", "D")
    zero = sys_.replace(**{k: np.zeros_like(getattr(sys_, k)) for k in names})
    ks, _, _ = solve(zero, 100, np.zeros((4, 4)))
    worst = max(np.abs(a).max() for a in (ks.K, ks.L, ks.Phi, ks.Omega))
    ok = worst <= 1e-14
    record(2, ok, f"max |K|, |L|, |Phi|, |Omega| = {worst:.1e}")
    assert ok


def test_criterion_03_scalar_oracle():
    G = 50
    Ko, Lo, Po = scalar_kernel_oracle(SCALAR, 4 * G)
    ks, _, _ = solve(scalar_system(SCALAR), G, [[SCALAR["Phi0"]]])
    gaps = []
    for x, y in [(0.2, 0.1), (0.5, 0.0), (0.9, 0.3), (1.0, 0.7), (1.0, 0.0)]:
        a, b = round(x * G), round(y * G)
        gaps.append(abs(ks.K[0, 0, a, b] - Ko[4 * a, 4 * b]))
        gaps.append(abs(ks.L[0, 0, a, b] - Lo[4 * a, 4 * b]))
        gaps.append(abs(ks.Phi[0, 0, a] - Po[4 * a]))
    ok = max(gaps) <= 1e-3
    record(3, ok, f"worst probe gap {max(gaps):.2e} against the 4x oracle")
    assert ok


def test_criterion_04_block_transform():
    d = beam_design(200)
    inv = d.bt.inverse_error()
    wb = within_block_max(d.bar, d.sys.blocks)
    ok = inv <= 1e-10 and wb <= 1e-12
    record(4, ok, f"max |A Ainv - I| = {inv:.1e}, within-block bar entries {wb:.1e}")
    assert ok


def test_criterion_05_round_trip():
    errs = {}
    for G in (50, 100, 200):
        d = beam_design(G)
        worst = 0.0
        for seed in range(3):
            s = _random_snapshot(d.sys, G, seed)
            back = from_target_state(d.ks, d.bt, to_target_state(d.ks, d.bt, s))
            worst = max(worst, np.abs(back - s.Y).max())
        errs[G] = worst
    floor = 1e-12  # the discrete inverse is exact, so errors sit at roundoff
    nonincreasing = all(errs[b] <= max(errs[a], floor) for a, b in [(50, 100), (100, 200)])
    ok = errs[200] <= 1e-4 and nonincreasing
    record(5, ok, "round-trip error " + ", ".join(f"G={G}: {e:.1e}" for G, e in errs.items()))
    assert ok


def test_criterion_06_layer_assembly():
    d = beam_design(200)
    st = SimSettings(G=200, T=5.0, cfl=0.5, mode="custom", stride=10, input_fn=_probe_input(2))
    err = layer_assembly_error(d.cfg, initial_state(d, 200), st, d.om)
    ok = err <= 1e-10
    record(6, ok, f"per-layer vs matrix form, worst relative gap {err:.1e} over T=5")
    assert ok


def test_criterion_07_sigma_extinction():
    d, tr, _ = closed_loop(SIM_G)
    to_sigma = target_map(d.ks, d.bt)
    t_ext = 1.0 / min(d.sys.blocks.speeds) + 0.2
    sup = np.array([np.abs(to_sigma(tr.snapshot(k)).sigma).max() for k in range(len(tr))])
    ratio = sup[tr.t >= t_ext].max() / sup[0]
    ok = ratio <= 1e-2
    record(7, ok, f"sup|sigma| for t >= {t_ext:.3f} is {ratio:.2e} of its initial value (G={SIM_G})")
    assert ok


def test_criterion_08_decay_and_open_loop():
    d, tr, closed_time = closed_loop(SIM_G)
    ns = norm_series(tr, d.cfg, d.om)
    rate = fit_decay_rate(ns["t"], ns["beam"], (2.0, 5.0))
    t0 = time.perf_counter()
    op = simulate(d.sys, None, initial_state(d, SIM_G),
                  SimSettings(G=SIM_G, T=10.0, cfl=0.5, mode="open", stride=10))
    open_time = time.perf_counter() - t0
    ns_o = norm_series(op, d.cfg, d.om)
    growth = ns_o["beam"][-1] / ns_o["beam"][0]
    ok = rate >= 4.8 and growth > 10 and closed_time <= MINUTES_2 and open_time <= MINUTES_2
    record(8, ok, f"decay rate {rate:.3f} on [2, 5], open-loop growth {growth:.1f}x by t=10, "
           f"runs {closed_time:.0f}s / {open_time:.0f}s (G={SIM_G})")
    assert ok


def test_criterion_09_phi1_report(capsys):
    P = {G: beam_design(G).ks.Phi1 for G in (100, 200, 400)}
    rel = np.abs(P[400] - REFERENCE_PHI1) / np.abs(REFERENCE_PHI1)
    d1 = np.abs(P[200] - P[100]).max()
    d2 = np.abs(P[400] - P[200]).max()
    cauchy = d1 / d2
    entrywise = bool(np.all(rel <= 0.15))

    # diagnostic only: the printed Phi(0) has an unstable E1, so it never enters the design
    base = beam_design(200)
    ks_ref, _, _ = solve(base.sys, 200, REFERENCE_PHI0)
    rel_ref = np.abs(ks_ref.Phi1 - REFERENCE_PHI1) / np.abs(REFERENCE_PHI1)
    with capsys.disabled():
        print(f"\n  Phi(1) at G=400, E1 = -6I:\n{np.array2string(P[400], precision=4)}")
        print(f"  relative deviation from reference: worst {rel.max():.3f}, "
              f"{int((rel <= 0.15).sum())}/16 entries within 15%")
        print(f"  reference Phi(0) injected: worst deviation {rel_ref.max():.3f}, "
              f"{int((rel_ref <= 0.15).sum())}/16 entries within 15%")
    ok = entrywise or cauchy >= 1.8
    record(9, ok, f"Cauchy differences {d1:.2e}, {d2:.2e} (ratio {cauchy:.1f}); "
           f"entrywise 15% agreement {'yes' if entrywise else 'no'} (worst {rel.max():.2f})")
    assert ok


@pytest.mark.slow
def test_criterion_10_verify_deterministic(tmp_path):
    cfg = ROOT / "configs" / "two_layer.yaml"
    env = {**os.environ, "PYTHONHASHSEED": "0"}
    procs, dirs = [], []
    for k in range(2):
        out = tmp_path / f"run{k}"
        dirs.append(out)
        procs.append(subprocess.Popen(
            [sys.executable, "-m", "blockbackstep.cli", "verify", "--config", str(cfg), "--out", str(out)],
            stdout=subprocess.PIPE, stderr=subprocess.PIPE, env=env))
    results = [p.communicate(timeout=600) for p in procs]
    stdout = [r[0] for r in results]
    reports = [(d / "two_layer_verify.csv").read_bytes() for d in dirs]
    same = stdout[0] == stdout[1] and reports[0] == reports[1]
    ok = same and all(p.returncode == 0 for p in procs)
    record(10, ok, f"two verify runs: stdout and report byte-identical: {'yes' if same else 'no'}, "
           f"exit codes {[p.returncode for p in procs]}")
    assert ok

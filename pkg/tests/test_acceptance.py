"""Acceptance criteria 1 to 7.

Each test records ``(passed, detail)`` in the session log, which the terminal
summary prints as one line per criterion.
"""

import filecmp
import subprocess
import sys
import time

import numpy as np
import pytest

from mrwave.envelope import (
    EnvelopeConfig,
    FkEvaluator,
    compute_initial_envelope,
    reconstruct_univariate,
    simulate_envelope,
)
from mrwave.estimators import make_policy
from mrwave.cli import main
from mrwave.galerkin import GalerkinSystem, solve_fixed_omega
from mrwave.splines import KnotGrid, evaluate, to_grid
from mrwave.transient import TransientConfig, transient

from conftest import load, netlist_path

pytestmark = pytest.mark.slow

P_MIX = 1e-5


def record(log, key, ok, detail):
    log[key] = (bool(ok), detail)
    assert ok, detail


def rel_linf(a, b):
    """Per-variable max error relative to the oracle's max magnitude."""
    return np.max(np.abs(a - b), axis=0) / np.maximum(np.max(np.abs(b), axis=0), 1e-12)


@pytest.fixture(scope="module")
def mixer():
    return load("mixer.cir")


@pytest.fixture(scope="module")
def long_mixer_run(mixer):
    # Newton tolerance 1e-6 sits far below the achieved accuracy of a few 1e-3
    cfg = EnvelopeConfig(
        tau_stop=2000 * P_MIX, initial_step=P_MIX / 2, max_step=60 * P_MIX, rtol=5e-2, coarsen_eps=1e-5,
        policy=make_policy(3e-4, 1e-6),
    )
    t0 = time.perf_counter()
    res = simulate_envelope(mixer, cfg)
    return res, time.perf_counter() - t0


def window_error(circuit, sample, starts, length=30 * P_MIX, settle=5 * P_MIX):
    """Worst error of ``sample`` against tight transients restarted from it at ``starts``."""
    worst = 0.0
    for ta in starts:
        local = transient(circuit, TransientConfig(t_start=ta, t_stop=ta + length, step=P_MIX / 200, rtol=1e-6,
                                                   atol=1e-9, x0=sample([ta])[0]))
        tw = np.linspace(ta + settle, ta + length, 10001)
        worst = max(worst, rel_linf(sample(tw), local.sample(tw)).max())
    return worst


def test_criterion_1_oracle_equivalence(mixer, acceptance_log):
    t0 = time.perf_counter()
    T = 50 * P_MIX
    cfg = EnvelopeConfig(tau_stop=T, initial_step=P_MIX / 2, max_step=5 * P_MIX, policy=make_policy(3e-4, 1e-9))
    x0, w0 = compute_initial_envelope(mixer, cfg)
    res = simulate_envelope(mixer, cfg, initial=(x0, w0))
    ref = transient(mixer, TransientConfig(t_stop=T, step=P_MIX / 200, rtol=1e-6, atol=1e-9, x0=evaluate(x0, 0.0)))
    elapsed = time.perf_counter() - t0
    t = np.linspace(0, T, 20001)
    err = rel_linf(reconstruct_univariate(res, 0.0, t), ref.sample(t))
    worst = int(np.argmax(err))
    detail = f"worst rel Linf {err[worst]:.2e} at {mixer.variable_names()[worst]}, {elapsed:.1f} s"
    record(acceptance_log, 1, err.max() <= 1e-3 and elapsed < 60, detail)


def test_criterion_2_envelope_frequency(mixer, long_mixer_run, acceptance_log):
    res, _ = long_mixer_run
    i = mixer.index_of("out")
    t = np.linspace(0, P_MIX, 256, endpoint=False)
    means = np.array([evaluate(r.curve, t)[:, i].mean() for r in res.records])
    # slow steps are non-uniform: resample the mean onto a uniform tau grid first
    taus = res.taus
    M = 512
    u = np.linspace(0, taus[-1], M, endpoint=False)
    signal = np.interp(u, taus, means)
    spec = np.abs(np.fft.rfft(signal - signal.mean()))
    freqs = np.fft.rfftfreq(M, u[1] - u[0])
    peak = freqs[np.argmax(spec)]
    expected = 100e3 - 99.9e3
    df = freqs[1] - freqs[0]
    detail = f"peak {peak:.1f} Hz, expected {expected:.1f} Hz, bin {df:.1f} Hz"
    record(acceptance_log, 2, abs(peak - expected) <= df * (1 + 1e-9), detail)


def test_criterion_3_work_count(mixer, long_mixer_run, acceptance_log):
    res, elapsed = long_mixer_run
    env_blocks = res.stats.blocks_solved
    starts = (1000 * P_MIX, 1900 * P_MIX)
    env_err = window_error(mixer, lambda t: reconstruct_univariate(res, 0.0, t), starts)

    # loosest transient tolerance reaching the envelope accuracy on a short run
    window = 20
    x0 = evaluate(res.records[0].curve, 0.0)
    ts = np.linspace(5 * P_MIX, window * P_MIX, 8001)
    tight = transient(mixer, TransientConfig(t_stop=window * P_MIX, step=P_MIX / 200, rtol=1e-7, atol=1e-10, x0=x0))
    for rtol in (3e-3, 2e-3, 1.5e-3, 1e-3, 5e-4, 2e-4):
        short = transient(mixer, TransientConfig(t_stop=window * P_MIX, step=P_MIX / 200, rtol=rtol, atol=1e-9, x0=x0))
        if rel_linf(short.sample(ts), tight.sample(ts)).max() <= env_err:
            break

    # full span from the DC point, the same start the envelope uses
    full = transient(mixer, TransientConfig(t_stop=2000 * P_MIX, step=P_MIX / 200, rtol=rtol, atol=1e-9))
    tran_err = window_error(mixer, full.sample, starts)
    ratio = full.linear_solves / env_blocks
    comparable = tran_err <= 1.5 * env_err
    detail = (f"{res.n_steps} steps, blocks env {env_blocks} vs tran {full.linear_solves} (x{ratio:.1f}, tran rtol "
              f"{rtol:.0e}), late-window err env {env_err:.1e} tran {tran_err:.1e}, env run {elapsed:.1f} s")
    record(acceptance_log, 3, res.n_steps <= 60 and ratio >= 10 and comparable, detail)


def edge_mask(u, edges, half_width=0.05):
    d = np.abs((u[:, None] - np.asarray(edges)[None, :] + 0.5) % 1.0 - 0.5)
    return (d <= half_width).any(axis=1)


def test_criterion_4_grid_concentration(acceptance_log):
    c = load("pulse_rc.cir")
    P = c.default_period()
    eps = 3e-4
    cfg = EnvelopeConfig(tau_stop=P, policy=make_policy(eps, 1e-9))
    curve, _ = compute_initial_envelope(c, cfg)
    edges = [0.0, 0.02, 0.5, 0.52]  # start and end of each 2% ramp
    near = edge_mask(curve.grid.knots[:-1] / P, edges)
    u = np.linspace(0, 1, 100000, endpoint=False)
    frac = edge_mask(u, edges).mean()
    ratio = (near.sum() / frac) / ((~near).sum() / (1 - frac))

    knots = curve.grid.knots
    quarter = [knots[:-1] + f * np.diff(knots) for f in (0.0, 0.25, 0.5, 0.75)]
    fine = KnotGrid(np.sort(np.concatenate(quarter + [knots[-1:]])), curve.grid.order)
    system = GalerkinSystem(fine, FkEvaluator(c, P), 1.0)
    oracle, _ = solve_fixed_omega(system, to_grid(curve, fine).coeffs, 1e-10)
    t = np.linspace(0, P, 100001)
    ref = evaluate(oracle, t)
    err = (np.max(np.abs(evaluate(curve, t) - ref), axis=0) / np.ptp(ref, axis=0)).max()
    detail = f"{curve.grid.n_intervals} knots, edge density x{ratio:.1f}, error vs 4x grid {err:.1e} (eps {eps:.0e})"
    record(acceptance_log, 4, ratio >= 4 and err <= eps, detail)


def test_criterion_5_free_omega_tracking(acceptance_log):
    c = load("fm_rc.cir")
    T = 0.1
    t0 = time.perf_counter()
    res = simulate_envelope(c, EnvelopeConfig(tau_stop=T, free_omega=True, rtol=1e-3, initial_step=1e-4, max_step=T / 40))
    elapsed = time.perf_counter() - t0
    truth = c.sources[0].waveform.instantaneous_frequency(res.taus)
    late = res.taus >= 0.1 * T
    rel = np.abs(res.f_inst()[late] - truth[late]) / truth[late]
    detail = f"{res.n_steps} steps, max rel f_inst error {rel.max():.2e}, {elapsed:.1f} s"
    record(acceptance_log, 5, rel.max() <= 1e-2 and elapsed < 120, detail)


PROPERTY_TESTS = [
    "tests/test_splines.py::test_partition_of_unity",
    "tests/test_splines.py::test_knot_insertion_invariance",
    "tests/test_wavelets.py::test_perfect_reconstruction_property",
    "tests/test_envelope.py::test_bdf_exact_on_monomials",
    "tests/test_transient.py::test_bdf_weights_exact_on_quadratics",
    "tests/test_circuit.py::test_jacobians_match_finite_differences",
    "tests/test_circuit.py::test_mosfet_jacobian_in_all_regions",
    "tests/test_galerkin.py::test_jacobian_matches_finite_differences",
    "tests/test_galerkin.py::test_linear_circuit_converges_in_one_undamped_iteration",
    "tests/test_envelope.py::test_stationary_envelope",
    "tests/test_galerkin.py::test_free_omega_zero_update_when_numerator_vanishes",
]


def test_criterion_6_property_suites(acceptance_log, pytestconfig):
    root = pytestconfig.rootpath
    t0 = time.perf_counter()
    proc = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", *PROPERTY_TESTS],
                          cwd=root, capture_output=True, text=True)
    elapsed = time.perf_counter() - t0
    summary = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr[-200:]
    record(acceptance_log, 6, proc.returncode == 0 and elapsed < 120, f"{summary} ({elapsed:.1f} s)")


def test_criterion_7_determinism(tmp_path, acceptance_log):
    argv = ["envelope", str(netlist_path("mixer.cir")), "--tau-stop", str(10 * P_MIX)]
    codes = [main(argv + ["--out", str(tmp_path / k)]) for k in "ab"]
    names = ["envelope_surface.csv", "grid.csv", "omega.csv"]
    same = all(filecmp.cmp(tmp_path / "a" / n, tmp_path / "b" / n, shallow=False) for n in names)
    record(acceptance_log, 7, codes == [0, 0] and same, f"exit codes {codes}, identical bytes: {same}")

import numpy as np
import pytest
from scipy.optimize import brentq

from mrwave import parse_netlist
from mrwave.exceptions import InvalidArgumentError, OperatingPointError, SimulationAbort
from mrwave.transient import TransientConfig, bdf_weights, dc_operating_point, transient

from conftest import load

RC = 1e3 * 1e-9


def test_dc_divider():
    c = parse_netlist("V1 in 0 DC 2\nR1 in mid 1k\nR2 mid 0 1k")
    x = dc_operating_point(c)
    assert x[c.index_of("mid")] == pytest.approx(1.0, abs=1e-12)
    assert x[c.index_of("i(V1)")] == pytest.approx(-1e-3, abs=1e-15)


def test_dc_diode_against_bisection():
    c = parse_netlist("V1 in 0 DC 5\nR1 in a 1k\nD1 a 0")
    x = dc_operating_point(c)
    IS, VT, GMIN = 1e-14, 0.02585, 1e-12
    vd = brentq(lambda v: (5 - v) / 1e3 - IS * np.expm1(v / VT) - GMIN * v, 0.0, 1.0, xtol=1e-15)
    assert x[c.index_of("a")] == pytest.approx(vd, abs=1e-10)


def test_dc_failure_is_reported():
    with pytest.raises(OperatingPointError):
        dc_operating_point(parse_netlist("V1 a 0 DC 1\nV2 a 0 DC 2"))


def test_no_sources_stays_at_zero():
    res = transient(parse_netlist("R1 a 0 1k\nC1 a 0 1n"), TransientConfig(t_stop=1e-5, step=1e-7))
    np.testing.assert_array_equal(res.x, 0.0)
    assert res.t[-1] == pytest.approx(1e-5, rel=1e-12)


def test_constant_state_is_kept():
    c = load("rc_step.cir")
    x0 = dc_operating_point(c)
    res = transient(c, TransientConfig(t_stop=1e-5, step=1e-7, x0=x0))
    np.testing.assert_allclose(res.x, np.tile(x0, (res.t.size, 1)), atol=1e-14)


def rc_step_error(order, step, t_stop=5 * RC):
    c = load("rc_step.cir")
    res = transient(c, TransientConfig(t_stop=t_stop, step=step, order=order, x0=np.zeros(c.n)))
    exact = 1 - np.exp(-res.t / RC)
    return np.max(np.abs(res.x[:, c.index_of("out")] - exact))


def test_rc_step_response_bdf2():
    assert rc_step_error(2, RC / 1000) <= 1e-6


def test_bdf_observed_orders():
    for order, expected in ((1, 1.0), (2, 2.0)):
        e1, e2 = rc_step_error(order, RC / 100), rc_step_error(order, RC / 200)
        assert np.log2(e1 / e2) == pytest.approx(expected, abs=0.2)


def test_adaptive_rc_matches_analytic():
    c = load("rc_step.cir")
    x0 = np.array([1.0, 0.0, -1e-3])  # consistent with the source constraint
    res = transient(c, TransientConfig(t_stop=5 * RC, step=RC / 100, rtol=1e-6, atol=1e-12, x0=x0))
    t = np.linspace(0, 5 * RC, 500)
    assert np.max(np.abs(res.sample(t)[:, c.index_of("out")] - (1 - np.exp(-t / RC)))) <= 1e-4
    assert np.all(np.diff(res.t) > 0)


def test_lc_energy_drift_small_with_bdf2():
    L, C = 1e-6, 1e-9
    c = parse_netlist(f"L1 a 0 {L!r}\nC1 a 0 {C!r}")
    w = 1 / np.sqrt(L * C)
    period = 2 * np.pi / w
    res = transient(c, TransientConfig(t_stop=5 * period, step=period / 2000, x0=np.array([1.0, 0.0])))
    v, i = res.x[:, c.index_of("a")], res.x[:, c.index_of("i(L1)")]
    energy = 0.5 * C * v**2 + 0.5 * L * i**2
    assert energy[-1] / energy[0] == pytest.approx(1.0, abs=2e-3)
    assert energy[-1] < energy[0]  # BDF damps, never amplifies


def test_pulse_breakpoints_are_hit():
    c = load("pulse_rc.cir")
    res = transient(c, TransientConfig(t_stop=2e-5, step=1e-7, rtol=1e-4))
    for bp in (2e-7, 5e-6, 5.2e-6, 1e-5, 1.02e-5):
        assert np.min(np.abs(res.t - bp)) <= 1e-18


def test_sine_rc_settles_to_phasor():
    c = load("rc_sine.cir")
    P = 1e-6
    res = transient(c, TransientConfig(t_stop=20 * P, step=P / 200, rtol=1e-7, atol=1e-12))
    t = np.linspace(15 * P, 20 * P, 400)
    wrc = 2 * np.pi * 1e6 * RC * 0.15915
    exact = np.imag(np.exp(2j * np.pi * t / P) / (1 + 1j * wrc))
    assert np.max(np.abs(res.sample(t)[:, c.index_of("out")] - exact)) <= 1e-4


def test_sample_outside_span():
    res = transient(load("rc_step.cir"), TransientConfig(t_stop=1e-6, step=1e-8))
    with pytest.raises(InvalidArgumentError):
        res.sample([2e-6])


def test_step_underflow_aborts_with_partial_result():
    c = parse_netlist("V1 a 0 DC 1\nV2 a 0 SIN(0 1 1meg)")
    with pytest.raises((SimulationAbort, OperatingPointError)):
        transient(c, TransientConfig(t_stop=1e-6, step=1e-8, x0=np.zeros(c.n)))


def test_config_validation():
    with pytest.raises(InvalidArgumentError):
        TransientConfig(t_stop=0.0, step=1e-3)
    with pytest.raises(InvalidArgumentError):
        TransientConfig(t_stop=1.0, step=0.0)
    with pytest.raises(InvalidArgumentError):
        TransientConfig(t_stop=1.0, step=1e-3, order=3)


def test_bdf_weights_exact_on_quadratics():
    nodes = np.array([1.0, 0.7, 0.2])
    w = bdf_weights(nodes)
    for j in range(3):
        assert np.dot(w, nodes**j) == pytest.approx(j * nodes[0] ** (j - 1) if j else 0.0, abs=1e-12)

"""scikit-learn style front ends.

``fit`` takes a circuit (object, netlist text or file path) and runs the
analysis; ``predict`` samples the fitted waveform at given times.  All
hyper-parameters are constructor arguments so ``get_params``/``set_params``
and ``clone`` work as usual.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_circuit, check_positive, check_times
from .envelope import EnvelopeConfig, SolveStats, compute_initial_envelope, reconstruct_univariate, simulate_envelope
from .splines import evaluate
from .transient import TransientConfig, transient
from .wavelets import RefinementPolicy

__all__ = ["TransientSimulator", "PeriodicSteadyState", "EnvelopeSimulator", "make_policy"]


def make_policy(wavelet_eps: float = 3e-4, newton_tol: float = 1e-8, max_rounds: int = 20, max_knots: int = 2048) -> RefinementPolicy:
    """Three-stage schedule ending at ``(newton_tol, wavelet_eps)``.

    The coarse stages use thresholds ``100 eps`` and ``10 eps`` with Newton
    tolerances ``1e-4`` and ``1e-6`` (capped so the sequence decreases).
    """
    eps = check_positive("wavelet_eps", wavelet_eps)
    tol = check_positive("newton_tol", newton_tol)
    tols = (max(1e-4, 100 * tol), max(1e-6, 10 * tol), tol)
    return RefinementPolicy(schedule=tuple(zip(tols, (100 * eps, 10 * eps, eps))), max_rounds=max_rounds, max_knots=max_knots)


class TransientSimulator(BaseEstimator):
    """Reference BDF integration of the circuit DAE.

    Parameters
    ----------
    t_stop : float
        End of the integration span.
    step : float, optional
        Initial (or fixed) step; default ``t_stop / 1000`` or ``P / 200`` for
        circuits with fast sources, whichever is smaller.
    order : {1, 2}
        BDF order.
    rtol : float or None
        Local error tolerance; ``None`` integrates with a fixed step.
    atol : float
        Absolute error floor.
    t_start : float
        Start of the span; the initial state is the DC operating point there.

    Attributes
    ----------
    result_ : TransientResult
    variable_names_ : list of str
    """

    def __init__(self, t_stop=1.0, step=None, order=2, rtol=1e-4, atol=1e-9, t_start=0.0):
        self.t_stop = t_stop
        self.step = step
        self.order = order
        self.rtol = rtol
        self.atol = atol
        self.t_start = t_start

    def fit(self, X, y=None):
        circuit = check_circuit(X)
        span = check_positive("t_stop - t_start", float(self.t_stop) - float(self.t_start))
        step = self.step
        if step is None:
            step = span / 1000.0
            if circuit.fast_frequencies():
                step = min(step, circuit.default_period() / 200.0)
        cfg = TransientConfig(
            t_stop=float(self.t_stop), step=float(step), t_start=float(self.t_start), order=int(self.order),
            rtol=self.rtol, atol=float(self.atol),
        )
        self.circuit_ = circuit
        self.result_ = transient(circuit, cfg)
        self.variable_names_ = circuit.variable_names()
        return self

    def predict(self, t) -> np.ndarray:
        """State at times ``t`` by BDF dense output, shape (M, n)."""
        check_is_fitted(self, "result_")
        return self.result_.sample(check_times(t))


class PeriodicSteadyState(BaseEstimator):
    """Periodic steady state on an adaptive periodic spline grid.

    Parameters
    ----------
    period : float, optional
        Fast period ``P``; default is the carrier period of the fastest source.
    spline_order : {3, 4}
    wavelet_eps : float
        Final wavelet refinement threshold (relative to the coefficient range).
    newton_tol : float
        Final scaled Newton tolerance.
    initial_knots : int
    adaptive : bool
        ``False`` keeps the uniform initial grid.

    Attributes
    ----------
    curve_ : SplineCurve
    omega_ : float
    stats_ : SolveStats
    """

    def __init__(self, period=None, spline_order=4, wavelet_eps=3e-4, newton_tol=1e-8, initial_knots=16, adaptive=True):
        self.period = period
        self.spline_order = spline_order
        self.wavelet_eps = wavelet_eps
        self.newton_tol = newton_tol
        self.initial_knots = initial_knots
        self.adaptive = adaptive

    def _config(self, circuit):
        period = check_positive("period", self.period, allow_none=True)
        return EnvelopeConfig(
            tau_stop=period or circuit.default_period(), period=period, spline_order=int(self.spline_order),
            initial_knots=int(self.initial_knots), policy=make_policy(self.wavelet_eps, self.newton_tol),
            adaptive=bool(self.adaptive),
        )

    def fit(self, X, y=None):
        circuit = check_circuit(X)
        cfg = self._config(circuit)
        self.circuit_ = circuit
        self.stats_ = SolveStats()
        self.curve_, self.omega_ = compute_initial_envelope(circuit, cfg, self.stats_)
        self.period_ = cfg.resolved_period(circuit)
        self.variable_names_ = circuit.variable_names()
        return self

    def predict(self, t) -> np.ndarray:
        """Periodic solution at ``t`` (wrapped into one period), shape (M, n)."""
        check_is_fitted(self, "curve_")
        return evaluate(self.curve_, check_times(t))


class EnvelopeSimulator(BaseEstimator):
    """Multi-rate envelope simulation with optional frequency tracking.

    Parameters
    ----------
    tau_stop : float
        End of the slow time span.
    period : float, optional
        Fast period ``P``; default is the carrier period of the fastest source.
    bdf_order : {1, 2}
    free_omega : bool
        Treat the local frequency ``omega(tau)`` as an unknown.
    omega : float or callable, optional
        Fixed frequency (or its start value in free mode).
    weight : float
        Blend ``W`` in ``[0, 1]`` of the shift update.
    wavelet_eps, newton_tol : float
        Final refinement threshold and Newton tolerance.
    spline_order : {3, 4}
    rtol, atol : float
        Local error tolerances of the slow time step control.
    initial_step, max_step : float, optional
        Slow time step bounds (defaults ``tau_stop/100`` and ``tau_stop/20``).
    adaptive : bool
        ``False`` keeps the uniform initial grid at every step.
    initial_knots : int

    Attributes
    ----------
    result_ : EnvelopeResult
    taus_, omegas_, f_inst_ : ndarray
    """

    def __init__(
        self, tau_stop=1.0, period=None, bdf_order=2, free_omega=False, omega=None, weight=0.5, wavelet_eps=3e-4,
        newton_tol=1e-8, spline_order=4, rtol=1e-3, atol=1e-6, initial_step=None, max_step=None, adaptive=True,
        initial_knots=16,
    ):
        self.tau_stop = tau_stop
        self.period = period
        self.bdf_order = bdf_order
        self.free_omega = free_omega
        self.omega = omega
        self.weight = weight
        self.wavelet_eps = wavelet_eps
        self.newton_tol = newton_tol
        self.spline_order = spline_order
        self.rtol = rtol
        self.atol = atol
        self.initial_step = initial_step
        self.max_step = max_step
        self.adaptive = adaptive
        self.initial_knots = initial_knots

    def make_config(self) -> EnvelopeConfig:
        return EnvelopeConfig(
            tau_stop=check_positive("tau_stop", self.tau_stop), period=check_positive("period", self.period, allow_none=True),
            bdf_order=int(self.bdf_order), free_omega=bool(self.free_omega), omega=self.omega, weight=float(self.weight),
            policy=make_policy(self.wavelet_eps, self.newton_tol), spline_order=int(self.spline_order),
            initial_knots=int(self.initial_knots), rtol=float(self.rtol), atol=float(self.atol),
            initial_step=self.initial_step, max_step=self.max_step, adaptive=bool(self.adaptive),
        )

    def fit(self, X, y=None):
        circuit = check_circuit(X)
        self.circuit_ = circuit
        self.result_ = simulate_envelope(circuit, self.make_config())
        self.taus_ = self.result_.taus
        self.omegas_ = self.result_.omegas
        self.f_inst_ = self.result_.f_inst()
        self.variable_names_ = circuit.variable_names()
        return self

    def predict(self, t, theta: float = 0.0) -> np.ndarray:
        """Univariate waveform ``x(t) = x^(t, theta + omega~ t - sigma(t))``, shape (M, n)."""
        check_is_fitted(self, "result_")
        return reconstruct_univariate(self.result_, float(theta), check_times(t))

"""Envelope integration in the slow time ``tau`` (Rothe's method with BDF).

Each accepted step solves the periodic problem

    omega d/dt q(x) + f_k(x, t) = 0,   x(t) = x(t + P)
    f_k = a0 q(x) + g(x) + s^(tau_k, t) + sum_{i>=1} a_i q(X_{k-i}(t))

with ``s^(tau, t) = s~(tau, t + sigma(tau))`` and ``sigma`` the accumulated
phase lag of the carrier against the reference ``omega~``.  The univariate
solution is recovered along ``x(t) = x^(t, omega~ t - sigma(t) + theta)``.
"""

from __future__ import annotations

import logging
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np

from .circuit import Circuit
from .exceptions import (
    ConvergenceError,
    DecompositionError,
    DegenerateFrequencyError,
    InitializationError,
    InvalidArgumentError,
    NumericError,
    OperatingPointError,
    RangeError,
    SimulationAbort,
    SingularMatrixError,
    StateError,
)
from .galerkin import GalerkinSystem, solve_fixed_omega, solve_free_omega
from .splines import SplineCurve, evaluate, insert_knots, to_grid, uniform_grid
from .transient import bdf_weights, dc_operating_point
from .wavelets import RefinementPolicy, coarsen_predictor, fwt_step, pad_to_even, refine_grid

logger = logging.getLogger(__name__)

__all__ = [
    "bdf_coeffs",
    "sigma_update",
    "FkEvaluator",
    "build_fk",
    "EnvelopeConfig",
    "EnvelopeRecord",
    "EnvelopeState",
    "EnvelopeResult",
    "StepResult",
    "compute_initial_envelope",
    "envelope_step",
    "simulate_envelope",
    "reconstruct_univariate",
]

_SOLVER_FAILURES = (ConvergenceError, SingularMatrixError, NumericError, FloatingPointError)
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)


def bdf_coeffs(tau_nodes) -> np.ndarray:
    """BDF weights ``a_0..a_s`` for nodes ``tau_k, tau_{k-1}, ..., tau_{k-s}``.

    ``sum_i a_i p(tau_{k-i}) = p'(tau_k)`` for every polynomial of degree <= s.
    """
    nodes = np.asarray(tau_nodes, dtype=float)
    if nodes.ndim != 1 or nodes.size < 2:
        raise InvalidArgumentError("need at least two BDF nodes")
    if nodes.size > 3:
        raise InvalidArgumentError("BDF order is limited to 2")
    if np.unique(nodes).size != nodes.size:
        raise SingularMatrixError("coincident BDF nodes make the exactness system singular")
    return bdf_weights(nodes)


def sigma_update(sigma_prev: float, dtau: float, omega_prev: float, omega: float, omega_ref: float = 1.0, weight: float = 0.5) -> float:
    """``sigma_k = sigma_{k-1} + h ((w~ - w_{k-1})(1 - W) + (w~ - w_k) W)``."""
    return sigma_prev + dtau * ((omega_ref - omega_prev) * (1.0 - weight) + (omega_ref - omega) * weight)


def _sigma_exact(sigma_prev, tau0, tau1, omega_fn, omega_ref):
    """``sigma_prev + int_{tau0}^{tau1} (omega~ - omega(s)) ds`` by 8-point Gauss."""
    if not callable(omega_fn):
        return sigma_prev + (tau1 - tau0) * (omega_ref - float(omega_fn))
    mid, half = 0.5 * (tau0 + tau1), 0.5 * (tau1 - tau0)
    vals = np.array([omega_fn(mid + half * x) for x in _GL_NODES], dtype=float)
    return sigma_prev + half * float(np.dot(_GL_WEIGHTS, omega_ref - vals))


@dataclass
class FkEvaluator:
    """``f_k`` for one envelope step, plus its derivatives in ``x`` and ``omega``.

    In free-frequency mode ``sigma`` follows the weighted update, so the
    shifted source depends on the unknown ``omega``.  ``blend`` and
    ``source_base`` implement the homotopy ``s_base + blend (s^ - s_base)``.
    """

    circuit: Circuit
    period: float
    tau: float = 0.0
    alpha0: float = 0.0
    history_terms: tuple = ()  # (alpha_i, SplineCurve)
    sigma_fixed: float | None = 0.0
    sigma_prev: float = 0.0
    omega_prev: float = 1.0
    dtau: float = 0.0
    weight: float = 0.5
    omega_ref: float = 1.0
    blend: float = 1.0
    source_base: np.ndarray | None = None

    def sigma(self, omega: float) -> float:
        if self.sigma_fixed is not None:
            return self.sigma_fixed
        return sigma_update(self.sigma_prev, self.dtau, self.omega_prev, omega, self.omega_ref, self.weight)

    def history(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        out = np.zeros((t.size, self.circuit.n))
        for a, curve in self.history_terms:
            q = self.circuit.evaluate(evaluate(curve, t), jacobians=False)[0]
            out += a * q
        return out

    def _shat(self, t, omega):
        s, ds = self.circuit.source_bivariate(self.tau, np.asarray(t, dtype=float) + self.sigma(omega), self.period, self.omega_ref)
        return s, ds

    def source(self, t, omega) -> np.ndarray:
        s = self._shat(t, omega)[0]
        if self.blend == 1.0:
            return s
        base = 0.0 if self.source_base is None else self.source_base
        return base + self.blend * (s - base)

    def omega_jump(self, t_lo, t_hi, omega) -> np.ndarray:
        """``int_{t_lo}^{t_hi} df/domega dt = h W (s~(t_lo + sigma) - s~(t_hi + sigma))``."""
        t_lo = np.asarray(t_lo, dtype=float)
        if self.sigma_fixed is not None or self.weight == 0.0:
            return np.zeros((t_lo.size, self.circuit.n))
        s_lo = self._shat(t_lo, omega)[0]
        s_hi = self._shat(t_hi, omega)[0]
        return self.blend * self.dtau * self.weight * (s_lo - s_hi)

    # pointwise forms, used by tests and diagnostics

    def __call__(self, x, t, omega: float = 1.0) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        q, g, _, _ = self.circuit.evaluate(np.atleast_2d(x), jacobians=False)
        return self.alpha0 * q + g + self.source(t, omega) + self.history(t)

    def dx(self, x) -> np.ndarray:
        _, _, C, G = self.circuit.evaluate(np.atleast_2d(x))
        return self.alpha0 * C + G

    def domega(self, t, omega: float = 1.0) -> np.ndarray:
        """``df_k/domega = -h W d/dt s~(tau_k, t + sigma_k)`` (zero at fixed sigma)."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if self.sigma_fixed is not None:
            return np.zeros((t.size, self.circuit.n))
        return -self.blend * self.dtau * self.weight * self._shat(t, omega)[1]


@dataclass
class EnvelopeConfig:
    """Settings for an envelope run.

    ``omega`` is a constant or a callable ``omega(tau)`` in fixed mode and
    the start value in free mode (``None``: ``P`` times the fastest source
    frequency, or ``omega_ref`` without fast sources).
    """

    tau_stop: float
    period: float | None = None
    initial_step: float | None = None
    min_step: float | None = None
    max_step: float | None = None
    bdf_order: int = 2
    free_omega: bool = False
    omega: float | Callable | None = None
    weight: float = 0.5
    omega_ref: float = 1.0
    policy: RefinementPolicy = field(default_factory=RefinementPolicy)
    coarsen_eps: float | None = None
    adaptive: bool = True
    spline_order: int = 4
    initial_knots: int = 16
    rtol: float = 1e-3
    atol: float = 1e-6
    newton_max_iter: int = 30
    rule: str = "gauss2"
    splitting: str = "shifted"
    max_steps: int = 100000
    max_growth: float = 2.0

    def __post_init__(self):
        if not self.tau_stop > 0:
            raise InvalidArgumentError("tau_stop must be positive")
        if self.bdf_order not in (1, 2):
            raise InvalidArgumentError("BDF order must be 1 or 2")
        if not 0.0 <= self.weight <= 1.0:
            raise InvalidArgumentError("weight W must lie in [0, 1]")
        if self.spline_order < 2:
            raise InvalidArgumentError("spline order must be >= 2")
        if self.initial_knots < 2 * self.spline_order:
            raise InvalidArgumentError("initial grid needs at least 2m intervals")
        if self.initial_step is None:
            self.initial_step = self.tau_stop / 100.0
        if self.max_step is None:
            self.max_step = max(self.tau_stop / 20.0, self.initial_step)
        if self.min_step is None:
            self.min_step = self.initial_step * 1e-6
        if not 0 < self.min_step <= self.initial_step <= self.max_step:
            raise InvalidArgumentError("need 0 < min_step <= initial_step <= max_step")
        if self.coarsen_eps is None:
            self.coarsen_eps = self.policy.threshold / 30.0

    def resolved_period(self, circuit: Circuit) -> float:
        return circuit.default_period() if self.period is None else float(self.period)

    def omega_at(self, tau: float) -> float:
        w = self.omega
        if w is None:
            return self.omega_ref
        return float(w(tau)) if callable(w) else float(w)


@dataclass
class EnvelopeRecord:
    tau: float
    omega: float
    sigma: float
    curve: SplineCurve


@dataclass
class SolveStats:
    newton_iterations: int = 0
    blocks_solved: int = 0
    solves: int = 0
    refinements: int = 0
    rejected_steps: int = 0
    warnings: list = field(default_factory=list)

    def add(self, report):
        self.newton_iterations += report.iterations
        self.blocks_solved += report.blocks_solved
        self.solves += 1
        self.warnings.extend(report.warnings)


@dataclass
class EnvelopeState:
    """Accepted steps ``(tau_i, omega_i, sigma_i, X_i)`` plus the BDF bookkeeping."""

    circuit: Circuit
    config: EnvelopeConfig
    period: float
    records: list = field(default_factory=list)
    alphas: np.ndarray | None = None
    next_step: float = 0.0
    stats: SolveStats = field(default_factory=SolveStats)

    @property
    def bdf_order(self) -> int:
        return self.config.bdf_order

    @property
    def frequency_mode(self) -> str:
        return "free" if self.config.free_omega else "fixed"

    @property
    def weight(self) -> float:
        return self.config.weight

    @property
    def omega_ref(self) -> float:
        return self.config.omega_ref

    @property
    def history(self) -> list:
        return self.records[-(self.bdf_order + 1) :]

    @property
    def tau(self) -> float:
        return self.records[-1].tau


@dataclass
class StepResult:
    curve: SplineCurve
    omega: float
    sigma: float
    accepted: bool
    error: float | None
    step: float


@dataclass
class EnvelopeResult:
    """Completed envelope run (also the input of the reconstruction)."""

    records: list
    period: float
    bdf_order: int
    weight: float = 0.5
    omega_ref: float = 1.0
    free_omega: bool = False
    omega_fn: float | Callable | None = None
    variable_names: list = field(default_factory=list)
    stats: SolveStats = field(default_factory=SolveStats)

    @property
    def taus(self) -> np.ndarray:
        return np.array([r.tau for r in self.records])

    @property
    def omegas(self) -> np.ndarray:
        return np.array([r.omega for r in self.records])

    @property
    def sigmas(self) -> np.ndarray:
        return np.array([r.sigma for r in self.records])

    @property
    def n_steps(self) -> int:
        return len(self.records) - 1

    def f_inst(self) -> np.ndarray:
        return self.omegas / self.period


def build_fk(state: EnvelopeState, tau: float, omega: float | None = None, sigma: float | None = None) -> FkEvaluator:
    """Problem for the step to ``tau`` from the current history.

    ``sigma=None`` in free mode leaves the shift tied to the unknown omega.
    """
    cfg = state.config
    if not state.records:
        raise StateError("envelope history is empty; compute the initial envelope first")
    hist = state.records
    s = min(cfg.bdf_order, len(hist))
    prev = [hist[-1 - i] for i in range(s)]
    alpha = bdf_coeffs([tau] + [r.tau for r in prev])
    state.alphas = alpha
    last = hist[-1]
    if sigma is None and not cfg.free_omega:
        sigma = _sigma_exact(last.sigma, last.tau, tau, cfg.omega if cfg.omega is not None else cfg.omega_ref, cfg.omega_ref)
    return FkEvaluator(
        circuit=state.circuit,
        period=state.period,
        tau=tau,
        alpha0=float(alpha[0]),
        history_terms=tuple((float(alpha[i + 1]), prev[i].curve) for i in range(s)),
        sigma_fixed=sigma,
        sigma_prev=last.sigma,
        omega_prev=last.omega,
        dtau=tau - last.tau,
        weight=cfg.weight,
        omega_ref=cfg.omega_ref,
    )


def _solve_adaptive(fk, curve, omega, cfg, stats, free=False, prev_curve=None, start_stage=0, period=1.0):
    """Newton solve with wavelet-driven refinement, stage by stage."""
    policy = cfg.policy
    last = len(policy.schedule) - 1
    stage = min(start_stage, last)
    refinements = 0
    while True:
        tol, eps = policy.stage(stage)
        sys = GalerkinSystem(curve.grid, fk, omega, cfg.rule, cfg.splitting)
        if free:
            c_prev = to_grid(prev_curve, curve.grid).coeffs
            curve, omega, rep = solve_free_omega(sys, curve.coeffs, omega, c_prev, tol, cfg.newton_max_iter)
        else:
            curve, rep = solve_fixed_omega(sys, curve.coeffs, tol, cfg.newton_max_iter)
        stats.add(rep)
        new = np.empty(0)
        if cfg.adaptive and refinements < policy.max_rounds:
            try:
                dec = fwt_step(curve, policy.floor)
                new = refine_grid(dec, eps, policy.neighborhood_width, policy.min_spacing * period)
                base = pad_to_even(curve)
            except DecompositionError:
                base = curve
                t = curve.grid.knots
                new = 0.5 * (t[:-1] + t[1:])
            if new.size and base.grid.n_intervals + new.size > policy.max_knots:
                stats.warnings.append(f"knot budget {policy.max_knots} reached; refinement stopped")
                new = np.empty(0)
        if new.size == 0:
            if stage >= last:
                return curve, omega
            stage += 1
            continue
        curve = insert_knots(base, new)
        refinements += 1
        stats.refinements += 1
        stage = min(stage + 1, last)


def compute_initial_envelope(circuit: Circuit, config: EnvelopeConfig, stats: SolveStats | None = None):
    """Periodic steady state at ``tau = 0``: ``omega_0 d/dt q + g + s^(0, .) = 0``.

    Homotopy on the source from the DC operating point of its period mean.
    Returns ``(X_0, omega_0)``.
    """
    stats = SolveStats() if stats is None else stats
    period = config.resolved_period(circuit)
    if config.free_omega and config.omega is None:
        fast = circuit.fast_frequencies()
        omega0 = period * max(fast) if fast else config.omega_ref
    else:
        omega0 = config.omega_at(0.0)
    grid = uniform_grid(config.initial_knots, config.spline_order, period)
    probe = grid.start + period * (np.arange(256) + 0.5) / 256
    s_mean = circuit.source_bivariate(0.0, probe, period, config.omega_ref)[0].mean(axis=0)
    try:
        x_dc = dc_operating_point(circuit, s_mean)
    except OperatingPointError as exc:
        raise InitializationError(f"no DC operating point for the initial guess: {exc}") from exc
    curve = SplineCurve(grid, np.tile(x_dc, (grid.n_basis, 1)))
    fk = FkEvaluator(circuit, period, tau=0.0, sigma_fixed=0.0, omega_ref=config.omega_ref, source_base=s_mean)
    tol0 = config.policy.schedule[0][0]
    lam, dlam = 0.0, 1.0
    for _ in range(60):
        if lam >= 1.0:
            break
        trial = min(1.0, lam + dlam)
        fk.blend = trial
        try:
            sys = GalerkinSystem(grid, fk, omega0, config.rule, config.splitting)
            new_curve, rep = solve_fixed_omega(sys, curve.coeffs, tol0, config.newton_max_iter)
            stats.add(rep)
        except _SOLVER_FAILURES:
            dlam *= 0.5
            if dlam < 1e-3:
                raise InitializationError(f"periodic steady state homotopy stalled at source factor {lam:.4f}")
            continue
        curve, lam = new_curve, trial
        dlam = min(1.0, 2.0 * dlam)
    fk.blend = 1.0
    fk.source_base = None
    try:
        curve, _ = _solve_adaptive(fk, curve, omega0, config, stats, period=period)
    except _SOLVER_FAILURES as exc:
        raise InitializationError(f"periodic steady state Newton diverged: {exc}") from exc
    return curve, omega0


def _extrapolate(records, tau, grid, npts):
    """Polynomial extrapolation in tau of the last ``npts`` curves onto ``grid``."""
    pts = records[-npts:]
    taus = [r.tau for r in pts]
    c = np.zeros((grid.n_basis, pts[-1].curve.n))
    for a, rec in enumerate(pts):
        L = 1.0
        for b in range(npts):
            if a != b:
                L *= (tau - taus[b]) / (taus[a] - taus[b])
        c += L * to_grid(rec.curve, grid).coeffs
    return SplineCurve(grid, c)


def _error_samples(grid, per_interval=4):
    t = grid.knots
    frac = (np.arange(per_interval) + 0.5) / per_interval
    return (t[:-1, None] + np.diff(t)[:, None] * frac[None, :]).ravel()


def _local_error(state, tau, curve):
    """Scaled predictor-corrector estimate; ``None`` without enough history."""
    cfg = state.config
    recs = state.records
    s = min(cfg.bdf_order, len(recs))
    npred = min(len(recs), s + 1)
    if npred < 2:
        return None
    ts = _error_samples(curve.grid)
    X = evaluate(curve, ts)
    pred = np.zeros_like(X)
    taus = [r.tau for r in recs[-npred:]]
    for a, rec in enumerate(recs[-npred:]):
        L = 1.0
        for b in range(npred):
            if a != b:
                L *= (tau - taus[b]) / (taus[a] - taus[b])
        pred += L * evaluate(rec.curve, ts)
    scale = cfg.rtol * np.max(np.abs(X), axis=0) + cfg.atol
    const = (tau - recs[-1].tau) / (tau - taus[0])
    return float(const * np.max(np.abs(X - pred) / scale[None, :]))


def envelope_step(state: EnvelopeState, config: EnvelopeConfig | None = None, circuit: Circuit | None = None) -> StepResult:
    """Advance the envelope by one accepted step (halving on failure).

    Raises :class:`SimulationAbort` when the step falls below ``min_step``.
    """
    cfg = state.config if config is None else config
    if not state.records:
        raise StateError("envelope history is empty; compute the initial envelope first")
    last = state.records[-1]
    h = min(state.next_step or cfg.initial_step, cfg.max_step)
    order = cfg.bdf_order
    while True:
        remaining = cfg.tau_stop - last.tau
        if h >= remaining * (1 - 1e-9):
            h = remaining
        if h < cfg.min_step and h < remaining:
            raise SimulationAbort(
                f"envelope step {h:.3e} fell below min_step {cfg.min_step:.3e} at tau={last.tau:.6g}",
                partial=list(state.records),
            )
        tau = last.tau + h
        s = min(order, len(state.records))
        predictor = last.curve
        if cfg.adaptive:
            predictor = coarsen_predictor(predictor, cfg.coarsen_eps, cfg.policy.floor)
        if len(state.records) >= 2:
            predictor = _extrapolate(state.records, tau, predictor.grid, min(s + 1, len(state.records)))
        omega_init = last.omega if cfg.free_omega else cfg.omega_at(tau)
        try:
            if cfg.free_omega:
                fk = build_fk(state, tau)
                try:
                    curve, omega = _solve_adaptive(
                        fk, predictor, omega_init, cfg, state.stats, free=True, prev_curve=last.curve,
                        start_stage=len(cfg.policy.schedule) - 1, period=state.period,
                    )
                except DegenerateFrequencyError:
                    state.stats.warnings.append(f"frequency unobservable at tau={tau:.6g}; omega held fixed")
                    fk = build_fk(state, tau, sigma=sigma_update(last.sigma, h, last.omega, last.omega, cfg.omega_ref, cfg.weight))
                    curve, omega = _solve_adaptive(
                        fk, predictor, last.omega, cfg, state.stats, start_stage=len(cfg.policy.schedule) - 1,
                        period=state.period,
                    )
                sigma = sigma_update(last.sigma, h, last.omega, omega, cfg.omega_ref, cfg.weight)
            else:
                fk = build_fk(state, tau)
                curve, omega = _solve_adaptive(
                    fk, predictor, omega_init, cfg, state.stats, start_stage=len(cfg.policy.schedule) - 1,
                    period=state.period,
                )
                sigma = fk.sigma_fixed
        except _SOLVER_FAILURES as exc:
            state.stats.rejected_steps += 1
            logger.debug("step to tau=%g failed (%s); halving", tau, exc)
            h *= 0.5
            continue
        err = _local_error(state, tau, curve)
        if err is not None and err > 1.0:
            state.stats.rejected_steps += 1
            h *= max(0.2, 0.9 * err ** (-1.0 / (s + 1)))
            continue
        if err is None:
            growth = 1.0
        else:
            growth = min(cfg.max_growth, max(0.2, 0.9 * max(err, 1e-12) ** (-1.0 / (s + 1))))
        state.records.append(EnvelopeRecord(tau, float(omega), float(sigma), curve))
        state.next_step = min(cfg.max_step, h * growth) if h < remaining else state.next_step or h
        return StepResult(curve, float(omega), float(sigma), True, err, h)


def simulate_envelope(circuit: Circuit, config: EnvelopeConfig, initial: tuple | None = None) -> EnvelopeResult:
    """Initial periodic steady state followed by envelope steps up to ``tau_stop``."""
    period = config.resolved_period(circuit)
    state = EnvelopeState(circuit, config, period)
    if initial is None:
        X0, omega0 = compute_initial_envelope(circuit, config, state.stats)
    else:
        X0, omega0 = initial
    state.records.append(EnvelopeRecord(0.0, float(omega0), 0.0, X0))
    state.next_step = config.initial_step
    while state.tau < config.tau_stop * (1 - 1e-12):
        if len(state.records) > config.max_steps:
            raise SimulationAbort(f"more than {config.max_steps} envelope steps", partial=list(state.records))
        envelope_step(state)
    return EnvelopeResult(
        records=state.records,
        period=period,
        bdf_order=config.bdf_order,
        weight=config.weight,
        omega_ref=config.omega_ref,
        free_omega=config.free_omega,
        omega_fn=config.omega,
        variable_names=circuit.variable_names(),
        stats=state.stats,
    )


def _sigma_at(result: EnvelopeResult, j, t):
    """sigma(t) on (tau_{j-1}, tau_j] with the same rule as the stored sigma_k."""
    r0, r1 = result.records[j - 1], result.records[j]
    if not result.free_omega:
        w = result.omega_fn if result.omega_fn is not None else result.omega_ref
        if not callable(w):
            return r0.sigma + (t - r0.tau) * (result.omega_ref - float(w))
        return np.array([_sigma_exact(r0.sigma, r0.tau, ti, w, result.omega_ref) for ti in np.atleast_1d(t)])
    u = (t - r0.tau) / (r1.tau - r0.tau)
    w_t = (1 - u) * r0.omega + u * r1.omega
    W = result.weight
    return r0.sigma + (t - r0.tau) * ((result.omega_ref - r0.omega) * (1 - W) + (result.omega_ref - w_t) * W)


def reconstruct_univariate(result: EnvelopeResult, theta: float, times) -> np.ndarray:
    """Sample ``x_theta(t) = x^(t, theta + omega~ t - sigma(t))``.

    The envelope is interpolated in tau with the BDF order (linear or
    quadratic through neighbouring steps).  Returns shape (M, n).
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    taus = result.taus
    if taus.size < 2:
        raise RangeError("reconstruction needs at least two envelope steps")
    span = taus[-1] - taus[0]
    if times.size and (times.min() < taus[0] - 1e-12 * span or times.max() > taus[-1] + 1e-12 * span):
        raise RangeError(f"sample times outside the stored range [{taus[0]:.6g}, {taus[-1]:.6g}]")
    times = np.clip(times, taus[0], taus[-1])
    j_all = np.clip(np.searchsorted(taus, times, side="left"), 1, taus.size - 1)
    n = result.records[0].curve.n
    out = np.zeros((times.size, n))
    for j in np.unique(j_all):
        sel = np.flatnonzero(j_all == j)
        t = times[sel]
        phase = theta + result.omega_ref * t - _sigma_at(result, j, t)
        if result.bdf_order >= 2 and taus.size >= 3:
            idx = [j - 2, j - 1, j] if j >= 2 else [0, 1, 2]
        else:
            idx = [j - 1, j]
        for a in idx:
            L = np.ones(t.size)
            for b in idx:
                if a != b:
                    L *= (t - taus[b]) / (taus[a] - taus[b])
            out[sel] += L[:, None] * evaluate(result.records[a].curve, phase)
    return out

"""Univariate reference integrator for ``d/dt q(x) + g(x) + s(t) = 0``.

Variable-step BDF (order 1 or 2) with a Newton solve per step.  Used as the
independent oracle for the multi-rate results, so it shares only the device
code with the envelope machinery.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .circuit import Circuit, Pulse
from .exceptions import InvalidArgumentError, OperatingPointError, SimulationAbort

logger = logging.getLogger(__name__)

__all__ = ["TransientConfig", "TransientResult", "dc_operating_point", "transient", "bdf_weights"]


def bdf_weights(nodes) -> np.ndarray:
    """Coefficients ``a_i`` with ``sum a_i p(nodes[i]) = p'(nodes[0])`` for deg p <= len - 1."""
    nodes = np.asarray(nodes, dtype=float)
    s = nodes.size - 1
    d = nodes - nodes[0]
    V = np.vander(d, s + 1, increasing=True).T  # row j: d_i^j
    rhs = np.zeros(s + 1)
    if s >= 1:
        rhs[1] = 1.0
    return np.linalg.solve(V, rhs)


def _newton(fun, x0, tol, max_iter, abstol=1e-12):
    """Damped Newton for small dense systems; returns (x, iterations) or raises."""
    x = np.array(x0, dtype=float)
    r, J, mag = fun(x)
    its = 0
    while True:
        if np.all(np.abs(r) <= tol * mag + abstol):
            return x, its
        if its >= max_iter:
            raise OperatingPointError(f"Newton failed after {max_iter} iterations")
        try:
            dx = np.linalg.solve(J, r)
        except np.linalg.LinAlgError as exc:
            raise OperatingPointError(f"singular Jacobian: {exc}") from exc
        n0 = np.linalg.norm(r / (mag + abstol))
        lam = 1.0
        for _ in range(12):
            xt = x - lam * dx
            try:
                rt, Jt, mt = fun(xt)
            except FloatingPointError:
                lam *= 0.5
                continue
            if np.linalg.norm(rt / (mag + abstol)) <= (1 - 1e-4 * lam) * n0 or lam < 1e-3:
                break
            lam *= 0.5
        x, r, J, mag = xt, rt, Jt, mt
        its += 1


def dc_operating_point(circuit: Circuit, source=None, tol: float = 1e-12, ramp_steps: int = 10, max_iter: int = 100):
    """Solve ``g(x) + s = 0`` with source ramping ``lam * s``, lam: 0 -> 1.

    ``source`` defaults to ``s(0)``.
    """
    s = circuit.source(0.0) if source is None else np.asarray(source, dtype=float)
    n = circuit.n

    def make(lam):
        def fun(x):
            _, g, _, G = circuit.evaluate(x)
            return g + lam * s, G, np.abs(g) + np.abs(G) @ np.abs(x) + np.abs(lam * s)

        return fun

    x = np.zeros(n)
    try:
        return _newton(make(1.0), x, tol, max_iter)[0]
    except (OperatingPointError, FloatingPointError):
        pass
    for lam in np.linspace(0.0, 1.0, ramp_steps + 1)[1:]:
        try:
            x = _newton(make(lam), x, tol, max_iter)[0]
        except (OperatingPointError, FloatingPointError) as exc:
            raise OperatingPointError(f"DC operating point diverged at source factor {lam:.2f}: {exc}") from exc
    return x


@dataclass
class TransientConfig:
    """Settings for :func:`transient`.

    ``rtol`` switches on error control; with ``rtol=None`` the step is fixed.
    """

    t_stop: float
    step: float
    t_start: float = 0.0
    order: int = 2
    rtol: float | None = None
    atol: float = 1e-9
    newton_tol: float = 1e-10
    max_newton: int = 25
    min_step: float | None = None
    max_step: float | None = None
    x0: np.ndarray | None = None  # None: DC operating point at t_start
    breakpoints: bool = True

    def __post_init__(self):
        if not self.t_stop > self.t_start:
            raise InvalidArgumentError("transient span must be positive")
        if not self.step > 0:
            raise InvalidArgumentError("step must be positive")
        if self.order not in (1, 2):
            raise InvalidArgumentError("BDF order must be 1 or 2")


@dataclass
class TransientResult:
    t: np.ndarray
    x: np.ndarray
    order: int
    newton_iterations: int = 0
    linear_solves: int = 0
    rejected: int = 0
    completed: bool = True
    names: list = field(default_factory=list)

    @property
    def blocks_solved(self) -> int:
        return self.linear_solves

    def sample(self, times) -> np.ndarray:
        """Dense output through the BDF interpolation polynomial (quadratic for order 2)."""
        times = np.asarray(times, dtype=float)
        if times.size and (times.min() < self.t[0] - 1e-15 * abs(self.t[-1]) or times.max() > self.t[-1] * (1 + 1e-15) + 1e-300):
            raise InvalidArgumentError("sample times outside the integrated span")
        j = np.clip(np.searchsorted(self.t, times, side="left"), 1, self.t.size - 1)
        if self.order == 1 or self.t.size < 3:
            t0, t1 = self.t[j - 1], self.t[j]
            w = ((times - t0) / (t1 - t0))[:, None]
            return (1 - w) * self.x[j - 1] + w * self.x[j]
        j = np.maximum(j, 2)
        ts = np.stack([self.t[j - 2], self.t[j - 1], self.t[j]], axis=1)
        out = np.zeros((times.size, self.x.shape[1]))
        for a in range(3):
            L = np.ones(times.size)
            for b in range(3):
                if a != b:
                    L *= (times - ts[:, b]) / (ts[:, a] - ts[:, b])
            out += L[:, None] * self.x[j - 2 + a]
        return out


def _lagrange(tp, xp, t):
    """Value at ``t`` of the polynomial through ``(tp[i], xp[i])``."""
    out = np.zeros(xp.shape[1])
    for a in range(tp.size):
        L = 1.0
        for b in range(tp.size):
            if a != b:
                L *= (t - tp[b]) / (tp[a] - tp[b])
        out += L * xp[a]
    return out


def _bdf_solve(circuit, nodes, q_hist, guess, tol, max_iter):
    """Newton solve of one BDF step to ``nodes[0]``; ``q_hist`` holds q at ``nodes[1:]``."""
    alpha = bdf_weights(nodes)
    hist = sum(alpha[i] * q_hist[i - 1] for i in range(1, len(nodes)))
    src = circuit.source(nodes[0])
    a0 = alpha[0]

    def fun(xv):
        q, g, C, G = circuit.evaluate(xv)
        r = a0 * q + hist + g + src
        mag = np.abs(a0 * q) + np.abs(hist) + np.abs(g) + np.abs(src) + np.abs(a0 * C) @ np.abs(xv) + np.abs(G) @ np.abs(xv)
        return r, a0 * C + G, mag

    return _newton(fun, guess, tol, max_iter)


def _breakpoints(circuit, t0, t1):
    pts = []
    for src in circuit.sources:
        w = src.waveform
        if isinstance(w, Pulse):
            per = 1.0 / w.freq
            k0 = int(np.floor(t0 / per))
            k1 = int(np.ceil(t1 / per))
            cyc = np.arange(k0, k1 + 1)[:, None] * per
            pts.append((cyc + np.array([0.0, w.rise, 0.5, 0.5 + w.rise])[None, :] * per).ravel())
    if not pts:
        return np.empty(0)
    b = np.unique(np.concatenate(pts))
    return b[(b > t0) & (b < t1)]


def transient(circuit: Circuit, config: TransientConfig) -> TransientResult:
    """Integrate the circuit DAE over ``[t_start, t_stop]``."""
    cfg = config
    n = circuit.n
    min_step = cfg.min_step if cfg.min_step is not None else cfg.step * 1e-6
    max_step = cfg.max_step if cfg.max_step is not None else (cfg.step if cfg.rtol is None else 50 * cfg.step)
    x = dc_operating_point(circuit, circuit.source(cfg.t_start)) if cfg.x0 is None else np.array(cfg.x0, dtype=float)
    ts = [cfg.t_start]
    xs = [x]
    qs = [circuit.evaluate(x)[0]]
    bps = list(_breakpoints(circuit, cfg.t_start, cfg.t_stop)) if cfg.breakpoints else []
    bp_i = 0
    res = TransientResult(np.empty(0), np.empty((0, n)), cfg.order, names=circuit.variable_names())
    h = cfg.step
    t = cfg.t_start
    span = cfg.t_stop - cfg.t_start
    after_break = True
    xmax = np.abs(x)  # running magnitude per variable for the error scale
    newton_tol = cfg.newton_tol if cfg.rtol is None else min(cfg.newton_tol, 0.01 * cfg.rtol)
    while t < cfg.t_stop - 1e-12 * span:
        h = min(h, max_step, cfg.t_stop - t)
        while bp_i < len(bps) and bps[bp_i] <= t + 1e-12 * span:
            bp_i += 1
        hit_bp = False
        if bp_i < len(bps) and t + h >= bps[bp_i] - 1e-12 * span:
            h = bps[bp_i] - t
            hit_bp = True
        if h < min_step:
            res.t, res.x, res.completed = np.array(ts), np.array(xs), False
            raise SimulationAbort(f"transient step underflow at t={t:.6g}", partial=res)
        s = 1 if (cfg.order == 1 or len(ts) < 2 or after_break) else 2
        tn = t + h
        nodes = [tn] + ts[-1 : -s - 1 : -1]
        # predictor: polynomial extrapolation through the last points
        npred = min(len(ts), s + 1)
        tp = np.array(ts[-npred:])
        pred = _lagrange(tp, np.array(xs[-npred:]), tn)
        try:
            xn, its = _bdf_solve(circuit, nodes, qs[-1 : -s - 1 : -1], pred, newton_tol, cfg.max_newton)
            res.newton_iterations += its
            res.linear_solves += its
            if cfg.rtol is not None and npred == 1:
                # no history yet: step doubling estimates the BDF1 error
                tm = t + 0.5 * h
                xm, its1 = _bdf_solve(circuit, [tm, t], qs[-1:], x, newton_tol, cfg.max_newton)
                qm = circuit.evaluate(xm)[0]
                xh, its2 = _bdf_solve(circuit, [tn, tm], [qm], xm, newton_tol, cfg.max_newton)
                res.newton_iterations += its1 + its2
                res.linear_solves += its1 + its2
        except (OperatingPointError, FloatingPointError):
            res.rejected += 1
            h *= 0.25
            continue
        factor = 2.0
        if cfg.rtol is not None:
            scale = cfg.rtol * np.maximum(xmax, np.abs(xn)) + cfg.atol
            if npred == 1:
                err = np.max(np.abs(xn - xh) / scale)
            else:
                err = h / (tn - tp[0]) * np.max(np.abs(xn - pred) / scale)
            if err > 1.0:
                res.rejected += 1
                h *= max(0.2, 0.9 * err ** (-1.0 / (s + 1)))
                continue
            factor = min(2.0, max(0.2, 0.9 * (err + 1e-16) ** (-1.0 / (s + 1))))
            if npred == 1:
                ts.append(tm)
                xs.append(xm)
                qs.append(qm)
                xn = xh
        t = tn
        x = xn
        xmax = np.maximum(xmax, np.abs(xn))
        ts.append(t)
        xs.append(x)
        qs.append(circuit.evaluate(x)[0])
        after_break = hit_bp
        if cfg.rtol is None:
            h = cfg.step
        else:
            h = h * factor
    res.t = np.array(ts)
    res.x = np.array(xs)
    return res

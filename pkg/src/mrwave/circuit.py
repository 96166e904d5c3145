"""Charge-oriented MNA model ``d/dt q(x) + g(x) + s(t) = 0``.

Unknowns are the non-ground node voltages (first-appearance order) followed
by the branch currents of voltage sources and inductors.  All evaluation
routines are vectorized over a leading batch axis so the Galerkin solver can
evaluate every quadrature node in one call.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .exceptions import CircuitError, NumericError

__all__ = [
    "Circuit",
    "Resistor",
    "Capacitor",
    "Inductor",
    "Diode",
    "Mosfet",
    "VoltageSource",
    "CurrentSource",
    "DC",
    "Sine",
    "FMSine",
    "Pulse",
    "AMSine",
    "assemble",
    "source_bivariate",
    "source_shifted",
]

_EXP_LIMIT = 80.0

# --------------------------------------------------------------------------
# Waveforms
# --------------------------------------------------------------------------


def _split_frequency(freq, period, omega_ref):
    """Carrier harmonic carried by the fast axis and the leftover slow frequency."""
    k = int(np.rint(freq * period / omega_ref))
    return k, freq - k * omega_ref / period


@dataclass(frozen=True)
class DC:
    value: float
    role: str = "slow"
    kind = "dc"

    def __call__(self, t):
        return np.full(np.shape(t), float(self.value))

    def bivariate(self, tau, t, period, omega_ref=1.0):
        t = np.asarray(t, dtype=float)
        return np.full(t.shape, float(self.value)), np.zeros(t.shape)

    def carrier_frequency(self):
        return None


@dataclass(frozen=True)
class Sine:
    """``offset + amplitude * sin(2 pi f t)``; ``role`` picks the time axis."""

    offset: float
    amplitude: float
    freq: float
    role: str = "fast"
    kind = "sine"

    def __call__(self, t):
        return self.offset + self.amplitude * np.sin(2 * np.pi * self.freq * np.asarray(t, dtype=float))

    def bivariate(self, tau, t, period, omega_ref=1.0):
        t = np.asarray(t, dtype=float)
        tau = np.asarray(tau, dtype=float)
        if self.role == "slow":
            v = self.offset + self.amplitude * np.sin(2 * np.pi * self.freq * tau)
            return np.broadcast_to(v, t.shape).astype(float), np.zeros(t.shape)
        k, rest = _split_frequency(self.freq, period, omega_ref)
        ph = 2 * np.pi * (k * t / period + rest * tau)
        return (
            self.offset + self.amplitude * np.sin(ph),
            self.amplitude * np.cos(ph) * 2 * np.pi * k / period,
        )

    def carrier_frequency(self):
        return self.freq if self.role == "fast" else None


@dataclass(frozen=True)
class FMSine:
    """Sine carrier ``fc`` whose frequency swings by ``fdev`` at rate ``fmod``.

    Instantaneous frequency ``fc + fdev cos(2 pi fmod t)``.  The carrier phase
    lives on the fast axis, the modulation phase on the slow axis.
    """

    offset: float
    amplitude: float
    fcenter: float
    fdev: float
    fmod: float
    role: str = "fast"
    kind = "fm_sine"

    def _mod_phase(self, t):
        return self.fdev / (2 * np.pi * self.fmod) * np.sin(2 * np.pi * self.fmod * np.asarray(t, dtype=float))

    def instantaneous_frequency(self, t):
        return self.fcenter + self.fdev * np.cos(2 * np.pi * self.fmod * np.asarray(t, dtype=float))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return self.offset + self.amplitude * np.sin(2 * np.pi * (self.fcenter * t + self._mod_phase(t)))

    def bivariate(self, tau, t, period, omega_ref=1.0):
        t = np.asarray(t, dtype=float)
        k, rest = _split_frequency(self.fcenter, period, omega_ref)
        ph = 2 * np.pi * (k * t / period + rest * tau + self._mod_phase(tau))
        return (
            self.offset + self.amplitude * np.sin(ph),
            self.amplitude * np.cos(ph) * 2 * np.pi * k / period,
        )

    def carrier_frequency(self):
        return self.fcenter


@dataclass(frozen=True)
class Pulse:
    """Square wave between ``v1`` and ``v2`` with linear edges.

    One cycle: rise over ``rise`` (fraction of the cycle), high until 1/2,
    fall over ``rise``, low for the rest.
    """

    v1: float
    v2: float
    freq: float
    rise: float = 0.02
    role: str = "fast"
    kind = "pulse_train"

    def __post_init__(self):
        if not 0.0 < self.rise < 0.5:
            raise CircuitError("pulse rise fraction must lie in (0, 0.5)")

    def _shape(self, u):
        r = self.rise
        u = np.mod(u, 1.0)
        dv = self.v2 - self.v1
        val = np.where(
            u < r,
            self.v1 + dv * u / r,
            np.where(u < 0.5, self.v2, np.where(u < 0.5 + r, self.v2 - dv * (u - 0.5) / r, self.v1)),
        )
        slope = np.where(u < r, dv / r, np.where(u < 0.5, 0.0, np.where(u < 0.5 + r, -dv / r, 0.0)))
        return val, slope

    def __call__(self, t):
        return self._shape(self.freq * np.asarray(t, dtype=float))[0]

    def bivariate(self, tau, t, period, omega_ref=1.0):
        t = np.asarray(t, dtype=float)
        k, rest = _split_frequency(self.freq, period, omega_ref)
        val, slope = self._shape(k * t / period + rest * np.asarray(tau, dtype=float))
        return val, slope * k / period

    def carrier_frequency(self):
        return self.freq


@dataclass(frozen=True)
class AMSine:
    """Product of a fast carrier and a slow envelope ``1 + depth sin(2 pi fmod t)``."""

    offset: float
    amplitude: float
    fcarrier: float
    fmod: float
    depth: float = 1.0
    role: str = "fast"
    kind = "am_product"

    def _env(self, t):
        return 1.0 + self.depth * np.sin(2 * np.pi * self.fmod * np.asarray(t, dtype=float))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return self.offset + self.amplitude * self._env(t) * np.sin(2 * np.pi * self.fcarrier * t)

    def bivariate(self, tau, t, period, omega_ref=1.0):
        t = np.asarray(t, dtype=float)
        k, rest = _split_frequency(self.fcarrier, period, omega_ref)
        ph = 2 * np.pi * (k * t / period + rest * np.asarray(tau, dtype=float))
        a = self.amplitude * self._env(tau)
        return self.offset + a * np.sin(ph), a * np.cos(ph) * 2 * np.pi * k / period

    def carrier_frequency(self):
        return self.fcarrier


# --------------------------------------------------------------------------
# Devices.  Node index ``n`` (one past the last unknown) is ground.
# --------------------------------------------------------------------------


def _add2(M, a, b, val):
    """Stamp ``val`` into the 2x2 pattern [[+,-],[-,+]] of rows/cols a, b."""
    M[:, a, a] += val
    M[:, a, b] -= val
    M[:, b, a] -= val
    M[:, b, b] += val


def _limexp(x):
    """exp with linear continuation above the limit (C^1)."""
    xc = np.minimum(x, _EXP_LIMIT)
    e = np.exp(xc)
    val = np.where(x > _EXP_LIMIT, e * (1.0 + x - _EXP_LIMIT), e)
    return val, e


@dataclass(frozen=True)
class Resistor:
    name: str
    nodes: tuple
    value: float

    def stamp(self, X, q, g, C, G):
        a, b = self.nodes
        cond = 1.0 / self.value
        i = (X[:, a] - X[:, b]) * cond
        g[:, a] += i
        g[:, b] -= i
        _add2(G, a, b, cond)


@dataclass(frozen=True)
class Capacitor:
    name: str
    nodes: tuple
    value: float

    def stamp(self, X, q, g, C, G):
        a, b = self.nodes
        ch = (X[:, a] - X[:, b]) * self.value
        q[:, a] += ch
        q[:, b] -= ch
        _add2(C, a, b, self.value)


@dataclass(frozen=True)
class Inductor:
    name: str
    nodes: tuple
    value: float
    branch: int = -1

    def stamp(self, X, q, g, C, G):
        a, b = self.nodes
        k = self.branch
        i = X[:, k]
        g[:, a] += i
        g[:, b] -= i
        G[:, a, k] += 1.0
        G[:, b, k] -= 1.0
        q[:, k] += self.value * i
        C[:, k, k] += self.value
        g[:, k] -= X[:, a] - X[:, b]
        G[:, k, a] -= 1.0
        G[:, k, b] += 1.0


@dataclass(frozen=True)
class Diode:
    """Shockley diode with optional linear junction capacitance and gmin shunt."""

    name: str
    nodes: tuple
    IS: float = 1e-14
    VT: float = 0.02585
    CJ: float = 0.0
    GMIN: float = 1e-12

    def stamp(self, X, q, g, C, G):
        a, b = self.nodes
        v = X[:, a] - X[:, b]
        ex, dex = _limexp(v / self.VT)
        i = self.IS * (ex - 1.0) + self.GMIN * v
        di = self.IS * dex / self.VT + self.GMIN
        g[:, a] += i
        g[:, b] -= i
        G[:, a, a] += di
        G[:, a, b] -= di
        G[:, b, a] -= di
        G[:, b, b] += di
        if self.CJ:
            ch = self.CJ * v
            q[:, a] += ch
            q[:, b] -= ch
            _add2(C, a, b, self.CJ)


@dataclass(frozen=True)
class Mosfet:
    """Level-1 square-law n-channel MOSFET (symmetric in drain/source)."""

    name: str
    nodes: tuple  # drain, gate, source
    K: float = 1e-3
    VT0: float = 0.5
    GMIN: float = 1e-12

    def stamp(self, X, q, g, C, G):
        d, gt, s = self.nodes
        vd, vg, vs = X[:, d], X[:, gt], X[:, s]
        rev = vd < vs
        vhi = np.where(rev, vs, vd)
        vlo = np.where(rev, vd, vs)
        vds = vhi - vlo
        vov = vg - vlo - self.VT0
        on = vov > 0
        sat = vds >= vov
        K = self.K
        ids = np.where(on, np.where(sat, 0.5 * K * vov**2, K * (vov * vds - 0.5 * vds**2)), 0.0)
        gm = np.where(on, np.where(sat, K * vov, K * vds), 0.0)  # d ids / d vov
        gds = np.where(on, np.where(sat, 0.0, K * (vov - vds)), 0.0)  # d ids / d vds
        # current flows hi -> lo; express through the original terminals
        sign = np.where(rev, -1.0, 1.0)
        i = sign * ids + self.GMIN * (vd - vs)
        # derivatives of ids w.r.t. (vhi, vg, vlo)
        d_hi = gds
        d_g = gm
        d_lo = -gm - gds
        # map to (vd, vs)
        d_vd = np.where(rev, d_lo, d_hi)
        d_vs = np.where(rev, d_hi, d_lo)
        di_d = sign * d_vd + self.GMIN
        di_g = sign * d_g
        di_s = sign * d_vs - self.GMIN
        g[:, d] += i
        g[:, s] -= i
        for col, val in ((d, di_d), (gt, di_g), (s, di_s)):
            G[:, d, col] += val
            G[:, s, col] -= val


@dataclass(frozen=True)
class VoltageSource:
    name: str
    nodes: tuple
    waveform: object
    branch: int = -1

    def stamp(self, X, q, g, C, G):
        a, b = self.nodes
        k = self.branch
        i = X[:, k]
        g[:, a] += i
        g[:, b] -= i
        G[:, a, k] += 1.0
        G[:, b, k] -= 1.0
        g[:, k] += X[:, a] - X[:, b]
        G[:, k, a] += 1.0
        G[:, k, b] -= 1.0

    def source_rows(self):
        return ((self.branch, -1.0),)


@dataclass(frozen=True)
class CurrentSource:
    """Current flows from the first node through the source into the second."""

    name: str
    nodes: tuple
    waveform: object

    def stamp(self, X, q, g, C, G):
        pass

    def source_rows(self):
        a, b = self.nodes
        return ((a, 1.0), (b, -1.0))


# --------------------------------------------------------------------------
# Circuit
# --------------------------------------------------------------------------


_LINEAR = (Resistor, Capacitor, Inductor, VoltageSource, CurrentSource)


class _DiodeBank:
    """All diodes of a circuit evaluated at once through an incidence matrix."""

    def __init__(self, diodes, size):
        self.inc = np.zeros((len(diodes), size))
        for k, d in enumerate(diodes):
            a, b = d.nodes
            self.inc[k, a] += 1.0
            self.inc[k, b] -= 1.0
        self.outer = np.einsum("dj,dk->djk", self.inc, self.inc)
        self.IS = np.array([d.IS for d in diodes])
        self.VT = np.array([d.VT for d in diodes])
        self.GMIN = np.array([d.GMIN for d in diodes])

    def stamp(self, X, q, g, C, G):
        v = X @ self.inc.T
        ex, dex = _limexp(v / self.VT)
        i = self.IS * (ex - 1.0) + self.GMIN * v
        di = self.IS * dex / self.VT + self.GMIN
        g += i @ self.inc
        G += np.tensordot(di, self.outer, axes=1)


@dataclass(frozen=True, eq=True)
class Circuit:
    """Parsed circuit.  ``node_names`` maps node name to unknown index."""

    node_names: dict
    branch_names: dict
    devices: tuple
    title: str = field(default="", compare=False)

    @property
    def n(self) -> int:
        return len(self.node_names) + len(self.branch_names)

    @property
    def sources(self) -> tuple:
        return tuple(d for d in self.devices if isinstance(d, (VoltageSource, CurrentSource)))

    def variable_names(self) -> list:
        names = [None] * self.n
        for k, i in self.node_names.items():
            names[i] = f"v({k})"
        for k, i in self.branch_names.items():
            names[i] = f"i({k})"
        return names

    def index_of(self, name: str) -> int:
        """Unknown index for ``node``, ``v(node)`` or ``i(device)``."""
        key = name.strip()
        low = key.lower()
        if low.startswith("v(") and key.endswith(")"):
            key = key[2:-1]
        elif low.startswith("i(") and key.endswith(")"):
            dev = key[2:-1]
            for k, i in self.branch_names.items():
                if k.lower() == dev.lower():
                    return i
            raise CircuitError(f"no branch current for device {dev!r}")
        if key in self.node_names:
            return self.node_names[key]
        raise CircuitError(f"unknown node {name!r}")

    def fast_frequencies(self) -> list:
        out = []
        for src in self.sources:
            f = src.waveform.carrier_frequency()
            if f:
                out.append(float(f))
        return out

    def default_period(self) -> float:
        """Carrier period: inverse of the highest fast-source frequency (1.0 if none)."""
        f = self.fast_frequencies()
        return 1.0 / max(f) if f else 1.0

    # -- evaluation -------------------------------------------------------

    def evaluate(self, x, jacobians: bool = True):
        """Batched ``q, g`` (and ``C, G``) for states of shape (M, n)."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        X = np.atleast_2d(x)
        M, n = X.shape
        if n != self.n:
            raise CircuitError(f"state has length {n}, circuit has {self.n} unknowns")
        if not np.all(np.isfinite(X)):
            raise NumericError("non-finite state passed to device evaluation")
        Cl, Gl, nonlinear = self._linear_part
        Xe = np.zeros((M, n + 1))
        Xe[:, :n] = X
        q = Xe @ Cl.T  # includes the linear junction charge of diodes
        g = Xe @ Gl.T
        C = np.repeat(Cl[None], M, axis=0)
        G = np.repeat(Gl[None], M, axis=0)
        for dev in nonlinear:
            dev.stamp(Xe, q, g, C, G)
        q, g, C, G = q[:, :n], g[:, :n], C[:, :n, :n], G[:, :n, :n]
        if not (np.all(np.isfinite(g)) and np.all(np.isfinite(G))):
            raise NumericError("device evaluation produced non-finite values")
        if single:
            return q[0], g[0], C[0], G[0]
        return q, g, C, G

    @cached_property
    def _linear_part(self):
        """Constant stamps of the linear devices, stamped once."""
        size = self.n + 1
        X = np.zeros((1, size))
        q, g = np.zeros((1, size)), np.zeros((1, size))
        C, G = np.zeros((1, size, size)), np.zeros((1, size, size))
        nonlinear, diodes = [], []
        for dev in self.devices:
            if isinstance(dev, _LINEAR):
                dev.stamp(X, q, g, C, G)
            elif isinstance(dev, Diode):
                diodes.append(dev)
                if dev.CJ:
                    _add2(C, dev.nodes[0], dev.nodes[1], dev.CJ)
            else:
                nonlinear.append(dev)
        if diodes:
            nonlinear.insert(0, _DiodeBank(diodes, size))
        return C[0], G[0], tuple(nonlinear)

    def _scatter(self, values_per_source, shape):
        out = np.zeros(shape + (self.n + 1,))
        for src, val in zip(self.sources, values_per_source):
            for row, sign in src.source_rows():
                out[..., row] += sign * val
        return out[..., : self.n]

    def source(self, t) -> np.ndarray:
        """Univariate source vector s(t); shape (n,) or (M, n)."""
        t = np.asarray(t, dtype=float)
        vals = [src.waveform(t) for src in self.sources]
        return self._scatter(vals, t.shape)

    def source_bivariate(self, tau, t_fast, period=None, omega_ref=1.0):
        """Multi-rate source and its derivative along the fast axis."""
        period = self.default_period() if period is None else period
        t_fast = np.asarray(t_fast, dtype=float)
        vals, ders = [], []
        for src in self.sources:
            v, dv = src.waveform.bivariate(tau, t_fast, period, omega_ref)
            vals.append(v)
            ders.append(dv)
        return self._scatter(vals, t_fast.shape), self._scatter(ders, t_fast.shape)


def assemble(circuit: Circuit, x, t_abs: float):
    """``q, g, s`` and sparse Jacobians ``C = dq/dx``, ``G = dg/dx`` at one state."""
    x = np.asarray(x, dtype=float)
    if x.shape != (circuit.n,):
        raise CircuitError(f"state must have shape ({circuit.n},), got {x.shape}")
    q, g, C, G = circuit.evaluate(x)
    s = circuit.source(t_abs)
    return q, g, s, sp.csr_matrix(C), sp.csr_matrix(G)


def source_bivariate(circuit: Circuit, tau, t_fast, period=None, omega_ref=1.0):
    return circuit.source_bivariate(tau, t_fast, period, omega_ref)


def source_shifted(circuit: Circuit, tau, t_fast, sigma, period=None, omega_ref=1.0):
    """``s^(tau, t) = s~(tau, t + sigma)``."""
    return circuit.source_bivariate(tau, np.asarray(t_fast, dtype=float) + sigma, period, omega_ref)[0]

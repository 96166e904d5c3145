"""Periodic B-spline spaces on non-uniform grids.

A periodic grid is stored as the knots ``t_0 < t_1 < ... < t_N`` of one
period ``P = t_N - t_0``.  Virtual knots follow ``t_{kN+l} = t_l + k P``
and are generated on demand.  Basis function ``l`` (``0 <= l < N``) is the
periodized B-spline of order ``m`` supported on ``[t_l, t_{l+m}]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .exceptions import InvalidArgumentError, KnotError

__all__ = [
    "KnotGrid",
    "SplineCurve",
    "SplittingPoints",
    "QuadratureRule",
    "bspline",
    "basis_functions",
    "collocation_matrix",
    "evaluate",
    "insert_knots",
    "refinement_matrix",
    "splitting_points",
    "greville",
    "integrate",
    "quadrature_on",
    "interpolate",
    "to_grid",
    "uniform_grid",
]

_GAUSS2 = (np.array([-1.0, 1.0]) / np.sqrt(3.0), np.array([1.0, 1.0]))
_SIMPSON = (np.array([-1.0, 0.0, 1.0]), np.array([1.0, 4.0, 1.0]) / 3.0)


@dataclass(frozen=True, eq=False)
class KnotGrid:
    """Knots of one period plus the spline order.

    Parameters
    ----------
    knots : array_like
        Strictly increasing ``t_0 .. t_N``; the period is ``t_N - t_0``.
    order : int
        Spline order ``m`` (degree ``m - 1``), at least 2.
    """

    knots: np.ndarray
    order: int
    periodic: bool = True

    def __post_init__(self):
        t = np.array(self.knots, dtype=float)
        if t.ndim != 1:
            raise KnotError("knots must be one-dimensional")
        m = int(self.order)
        if m < 2:
            raise InvalidArgumentError(f"spline order must be >= 2, got {m}")
        if not np.all(np.isfinite(t)):
            raise KnotError("knots must be finite")
        if np.any(np.diff(t) <= 0.0):
            raise KnotError("knots must be strictly increasing (only simple knots are supported)")
        if t.size - 1 < m:
            raise KnotError(f"need at least N = m = {m} intervals, got {t.size - 1}")
        t.setflags(write=False)
        object.__setattr__(self, "knots", t)
        object.__setattr__(self, "order", m)

    @property
    def n_intervals(self) -> int:
        return self.knots.size - 1

    @property
    def n_basis(self) -> int:
        return self.knots.size - 1

    @property
    def period(self) -> float:
        return float(self.knots[-1] - self.knots[0])

    @property
    def start(self) -> float:
        return float(self.knots[0])

    def knot(self, index):
        """Virtual knot(s) ``t_index`` for any integer index (array allowed)."""
        index = np.asarray(index)
        n = self.n_intervals
        q, r = np.divmod(index, n)
        return self.knots[r] + q * self.period

    def extended(self, lo: int, hi: int) -> np.ndarray:
        """Virtual knots ``t_lo .. t_hi`` inclusive."""
        return self.knot(np.arange(lo, hi + 1))

    def wrap(self, t) -> np.ndarray:
        """Reduce times to ``[t_0, t_0 + P)``."""
        t = np.asarray(t, dtype=float)
        t0, p = self.start, self.period
        w = t0 + np.mod(t - t0, p)
        return np.where(w >= t0 + p, t0, w)

    def span(self, t) -> np.ndarray:
        """Interval index ``j`` with ``t_j <= t < t_{j+1}`` after wrapping."""
        w = self.wrap(t)
        j = np.searchsorted(self.knots, w, side="right") - 1
        return np.clip(j, 0, self.n_intervals - 1)

    def same_as(self, other: "KnotGrid") -> bool:
        return (
            self.order == other.order
            and self.knots.shape == other.knots.shape
            and np.array_equal(self.knots, other.knots)
        )


def uniform_grid(n_intervals: int, order: int = 4, period: float = 1.0, start: float = 0.0) -> KnotGrid:
    return KnotGrid(start + period * np.arange(n_intervals + 1) / n_intervals, order)


def bspline(knots, order: int, index: int, t: float) -> float:
    """Single non-periodic B-spline ``N^order_index(t)`` by the Cox-de Boor recursion."""
    knots = np.asarray(knots, dtype=float)

    def rec(i, k):
        if k == 1:
            return 1.0 if knots[i] <= t < knots[i + 1] else 0.0
        out = 0.0
        d1 = knots[i + k - 1] - knots[i]
        d2 = knots[i + k] - knots[i + 1]
        if d1 > 0:
            out += (t - knots[i]) / d1 * rec(i, k - 1)
        if d2 > 0:
            out += (knots[i + k] - t) / d2 * rec(i + 1, k - 1)
        return out

    if index < 0 or index + order >= knots.size:
        raise InvalidArgumentError("B-spline index out of range for the knot vector")
    return rec(index, order)


def basis_functions(grid: KnotGrid, t, derivative_order: int = 0):
    """Nonzero periodic basis values at each point.

    Returns
    -------
    idx : ndarray of int, shape (M, m)
        Basis indices (already reduced modulo N).
    val : ndarray, shape (M, m)
        ``phi_idx^(d)(t)``.
    """
    m = grid.order
    d = int(derivative_order)
    if d < 0 or d >= m:
        raise InvalidArgumentError(f"derivative order {d} must satisfy 0 <= d < m = {m}")
    t = np.atleast_1d(np.asarray(t, dtype=float)).ravel()
    w = grid.wrap(t)
    j = grid.span(w)
    # local knots t_{j-m+1} .. t_{j+m}
    offs = np.arange(-m + 1, m + 1)
    K = grid.knot(j[:, None] + offs[None, :])
    B = np.zeros((t.size, m))
    B[:, m - 1] = 1.0
    for k in range(2, m + 1):
        differentiate = k > m - d
        new = np.zeros_like(B)
        for c in range(m - k, m):
            left = B[:, c]
            right = B[:, c + 1] if c + 1 < m else 0.0
            d1 = K[:, c + k - 1] - K[:, c]
            d2 = K[:, c + k] - K[:, c + 1]
            if differentiate:
                new[:, c] = (k - 1) * (left / d1 - right / d2)
            else:
                new[:, c] = (w - K[:, c]) / d1 * left + (K[:, c + k] - w) / d2 * right
        B = new
    idx = np.mod(j[:, None] - m + 1 + np.arange(m)[None, :], grid.n_basis)
    return idx, B


def collocation_matrix(grid: KnotGrid, t, derivative_order: int = 0) -> sp.csr_matrix:
    """Sparse matrix ``M[p, l] = phi_l^(d)(t_p)``."""
    idx, val = basis_functions(grid, t, derivative_order)
    rows = np.repeat(np.arange(idx.shape[0]), idx.shape[1])
    mat = sp.coo_matrix((val.ravel(), (rows, idx.ravel())), shape=(idx.shape[0], grid.n_basis))
    return mat.tocsr()


@dataclass(frozen=True, eq=False)
class SplineCurve:
    """Vector-valued periodic spline ``sum_k c_k phi_k(t)``; ``coeffs`` is N x n."""

    grid: KnotGrid
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float)
        if c.ndim == 1:
            c = c[:, None]
        if c.ndim != 2 or c.shape[0] != self.grid.n_basis:
            raise InvalidArgumentError(
                f"coefficient matrix must have {self.grid.n_basis} rows, got shape {c.shape}"
            )
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def n(self) -> int:
        return self.coeffs.shape[1]

    def __call__(self, t, derivative_order: int = 0) -> np.ndarray:
        return evaluate(self, t, derivative_order)

    def with_coeffs(self, coeffs) -> "SplineCurve":
        return SplineCurve(self.grid, coeffs)


def evaluate(curve: SplineCurve, t, derivative_order: int = 0) -> np.ndarray:
    """Evaluate a curve (or its derivative).

    A scalar ``t`` gives a length-n vector, an array of shape (M,) gives (M, n).
    """
    scalar = np.ndim(t) == 0
    idx, val = basis_functions(curve.grid, t, derivative_order)
    out = np.einsum("pk,pkn->pn", val, curve.coeffs[idx])
    return out[0] if scalar else out


def _blossom_weights(old: KnotGrid, new_knots: np.ndarray):
    """Weights expressing each new-grid coefficient through m old ones.

    New coefficient i is the blossom of the old polynomial piece containing
    ``tau_i`` evaluated at ``tau_{i+1} .. tau_{i+m-1}`` (de Boor recursion
    with a different abscissa on every level).
    """
    m = old.order
    fine = KnotGrid(new_knots, m)
    nn = fine.n_basis
    i = np.arange(nn)
    mu = old.span(fine.knots[:-1])
    offs = np.arange(-m + 1, m + 1)
    K = old.knot(mu[:, None] + offs[None, :])
    U = fine.knot(i[:, None] + np.arange(1, m)[None, :])
    D = np.broadcast_to(np.eye(m), (nn, m, m)).copy()
    for r in range(1, m):
        u = U[:, r - 1]
        for c in range(m - 1, r - 1, -1):
            # old coefficient index mu - m + 1 + c  ->  local knot column c
            alpha = (u - K[:, c]) / (K[:, c + m - r] - K[:, c])
            D[:, c, :] = (1.0 - alpha)[:, None] * D[:, c - 1, :] + alpha[:, None] * D[:, c, :]
    weights = D[:, m - 1, :]
    cols = np.mod(mu[:, None] - m + 1 + np.arange(m)[None, :], old.n_basis)
    return fine, weights, cols


def refinement_matrix(coarse: KnotGrid, fine: KnotGrid) -> sp.csr_matrix:
    """Oslo matrix mapping coarse coefficients to fine ones (fine knots must contain coarse)."""
    if coarse.order != fine.order:
        raise InvalidArgumentError("grids have different spline orders")
    if not _is_subgrid(coarse.knots, fine.knots):
        raise KnotError("fine grid must contain every coarse knot")
    _, w, cols = _blossom_weights(coarse, fine.knots)
    rows = np.repeat(np.arange(fine.n_basis), coarse.order)
    mat = sp.coo_matrix((w.ravel(), (rows, cols.ravel())), shape=(fine.n_basis, coarse.n_basis))
    return mat.tocsr()


def _is_subgrid(coarse, fine) -> bool:
    if coarse[0] != fine[0] or coarse[-1] != fine[-1]:
        return False
    pos = np.searchsorted(fine, coarse)
    return bool(np.all(pos < fine.size) and np.array_equal(fine[np.minimum(pos, fine.size - 1)], coarse))


def insert_knots(curve: SplineCurve, new_knots) -> SplineCurve:
    """Refine the grid by knot insertion without changing the function."""
    grid = curve.grid
    new = np.asarray(new_knots, dtype=float).ravel()
    if new.size == 0:
        return curve
    t0, tn = grid.knots[0], grid.knots[-1]
    if np.any(new < t0) or np.any(new >= tn):
        raise KnotError("inserted knots must lie in [t_0, t_N)")
    merged = np.concatenate([grid.knots, new])
    merged.sort()
    if np.any(np.diff(merged) <= 0.0):
        raise KnotError("knot insertion would create a multiple knot")
    fine, w, cols = _blossom_weights(grid, merged)
    coeffs = np.einsum("ik,ikn->in", w, curve.coeffs[cols])
    return SplineCurve(fine, coeffs)


@dataclass(frozen=True, eq=False)
class SplittingPoints:
    """Points ``t^_0 < ... < t^_N`` with ``t^_N - t^_0 = P`` bounding N integration cells."""

    points: np.ndarray

    def __post_init__(self):
        p = np.array(self.points, dtype=float)
        p.setflags(write=False)
        object.__setattr__(self, "points", p)

    @property
    def n_cells(self) -> int:
        return self.points.size - 1


def greville(grid: KnotGrid) -> np.ndarray:
    """Knot averages ``(t_{l+1} + ... + t_{l+m-1}) / (m-1)`` for l = 0..N-1."""
    m, n = grid.order, grid.n_basis
    idx = np.arange(n)[:, None] + np.arange(1, m)[None, :]
    return grid.knot(idx).mean(axis=1)


def splitting_points(grid: KnotGrid, kind: str = "shifted") -> SplittingPoints:
    """Cell boundaries for the integral conditions.

    ``kind="greville"`` uses the knot averages themselves; ``"centered"``
    uses midpoints between consecutive knot averages; ``"midpoints"`` uses
    knot-interval midpoints.  The default ``"shifted"`` sits a quarter of
    the way from each knot average to the next.

    The alternating coefficient pattern ``(-1)^k`` behaves like
    ``cos(pi t / h)`` with extremes near the knot averages.  Its point values
    vanish halfway between them and its cell integrals vanish on cells
    bounded by them, so the symmetric choices each leave it unseen by one
    kind of equation (differential or algebraic).  The quarter shift sees it
    in both.
    """
    n, p = grid.n_basis, grid.period
    if kind == "greville":
        g = greville(grid)
    elif kind in ("centered", "shifted"):
        g0 = greville(grid)
        w = 0.5 if kind == "centered" else 0.25
        g = (1.0 - w) * g0 + w * np.append(g0[1:], g0[0] + p)
    elif kind == "midpoints":
        g = 0.5 * (grid.knots[:-1] + grid.knots[1:])
    else:
        raise InvalidArgumentError(f"unknown splitting-point kind {kind!r}")
    pts = np.empty(n + 1)
    pts[:n] = g
    pts[n] = g[0] + p
    return SplittingPoints(pts)


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Flattened composite quadrature: ``cell[p]`` tells which cell node p belongs to."""

    nodes: np.ndarray
    weights: np.ndarray
    cell: np.ndarray
    n_cells: int


def _rule(rule: str):
    if rule == "gauss2":
        return _GAUSS2
    if rule == "simpson":
        return _SIMPSON
    raise InvalidArgumentError(f"unknown quadrature rule {rule!r}; use 'gauss2' or 'simpson'")


def quadrature_on(grid: KnotGrid, bounds, rule: str = "gauss2") -> QuadratureRule:
    """Composite rule on consecutive cells ``[bounds[i], bounds[i+1]]``.

    Each cell is subdivided at the (virtual) knots it contains so the
    integrand is polynomial on every piece.
    """
    x, w = _rule(rule)
    bounds = np.asarray(bounds, dtype=float)
    lo, hi = bounds[0], bounds[-1]
    n = grid.n_intervals
    p = grid.period
    k_lo = int(np.floor((lo - grid.start) / p)) * n - 1
    k_hi = int(np.ceil((hi - grid.start) / p)) * n + 1
    kn = grid.extended(k_lo, k_hi)
    kn = kn[(kn > lo) & (kn < hi)]
    brk = np.union1d(bounds, kn)
    a, b = brk[:-1], brk[1:]
    keep = b > a
    a, b = a[keep], b[keep]
    cell = np.searchsorted(bounds, 0.5 * (a + b), side="right") - 1
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    cells = np.repeat(cell, x.size)
    return QuadratureRule(nodes, weights, cells, bounds.size - 1)


def integrate(f: Callable, a: float, b: float, grid: KnotGrid, rule: str = "gauss2") -> np.ndarray:
    """Composite quadrature of ``f`` over ``[a, b]`` split at the grid knots.

    ``f`` takes an array of times and returns shape (M,) or (M, n).
    """
    if not b > a:
        raise InvalidArgumentError("integration requires a < b")
    q = quadrature_on(grid, [a, b], rule)
    vals = np.asarray(f(q.nodes), dtype=float)
    if vals.ndim == 1:
        return np.atleast_1d(q.weights @ vals)
    return q.weights @ vals


def interpolate(grid: KnotGrid, values_fn: Callable) -> SplineCurve:
    """Spline interpolant at the Greville abscissae."""
    g = greville(grid)
    vals = np.asarray(values_fn(g), dtype=float)
    if vals.ndim == 1:
        vals = vals[:, None]
    mat = collocation_matrix(grid, g).tocsc()
    coeffs = spla.splu(mat).solve(vals)
    return SplineCurve(grid, coeffs)


def to_grid(curve: SplineCurve, grid: KnotGrid) -> SplineCurve:
    """Express ``curve`` on ``grid``: exact by knot insertion when the grid is a refinement,
    otherwise interpolation at the Greville abscissae of ``grid``."""
    if curve.grid.same_as(grid):
        return curve
    if grid.order == curve.grid.order and _is_subgrid(curve.grid.knots, grid.knots):
        new = np.setdiff1d(grid.knots[:-1], curve.grid.knots)
        return insert_knots(curve, new)
    return interpolate(grid, curve)

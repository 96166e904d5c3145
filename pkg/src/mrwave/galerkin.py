"""Spline Galerkin solver for periodic problems ``omega d/dt q(x) + f(x, t) = 0``.

Integrating over the cells ``[t^_l, t^_{l+1}]`` bounded by the splitting
points gives one vector condition per basis function::

    F_l(c, omega) = omega (q(x(t^_{l+1})) - q(x(t^_l))) + int f(x(t), t) dt

The Jacobian ``dF/dc`` is cyclic block-banded (bandwidth about m blocks plus
corner blocks from the periodic wrap).  It is assembled in sparse form from
the same quadrature nodes as the residual, so it is the exact derivative of
the discrete residual.

The problem object passed as ``fk`` must provide ``circuit``, ``alpha0``,
``history(t)``, ``source(t, omega)`` and ``omega_jump(t_lo, t_hi, omega)``
(see :class:`mrwave.envelope.FkEvaluator`).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .exceptions import (
    ConvergenceError,
    DegenerateFrequencyError,
    NumericError,
    SingularMatrixError,
)
from .splines import KnotGrid, SplineCurve, basis_functions, quadrature_on, splitting_points

logger = logging.getLogger(__name__)

__all__ = [
    "GalerkinSystem",
    "NewtonReport",
    "BlockFactorization",
    "linear_solve",
    "factorize",
    "residual",
    "jacobian",
    "solve_fixed_omega",
    "solve_free_omega",
]

ABSTOL = 1e-12
_ARMIJO = 1e-4
_MAX_HALVINGS = 8
_ZTZ_FLOOR = 1e-300


class BlockFactorization:
    """Sparse LU of a cyclic block-banded matrix acting on (N, n) block vectors."""

    def __init__(self, A: sp.spmatrix, n: int):
        A = sp.csc_matrix(A)
        self.n = n
        self.shape = A.shape
        self.n_blocks = A.shape[0] // n
        rownorm = np.asarray(abs(A).sum(axis=1)).ravel()
        zero = np.flatnonzero(rownorm == 0.0)
        if zero.size:
            blk = int(zero[0] // n)
            raise SingularMatrixError(f"zero row in block {blk}", block=blk)
        colnorm = np.asarray(abs(A).sum(axis=0)).ravel()
        zero = np.flatnonzero(colnorm == 0.0)
        if zero.size:
            blk = int(zero[0] // n)
            raise SingularMatrixError(f"zero column in block {blk}", block=blk)
        try:
            self._lu = spla.splu(A)
        except RuntimeError as exc:
            raise SingularMatrixError(f"singular Jacobian: {exc}") from exc
        diag = np.abs(self._lu.U.diagonal())
        if not np.all(np.isfinite(diag)) or diag.min() <= 1e-14 * diag.max():
            blk = int(self._lu.perm_c[int(np.argmin(diag))] // n)
            raise SingularMatrixError(f"numerically singular pivot near block {blk}", block=blk)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float)
        shp = rhs.shape
        flat = rhs.reshape(self.shape[0], -1)
        out = self._lu.solve(flat)
        return out.reshape(shp)


def factorize(A, n: int) -> BlockFactorization:
    return BlockFactorization(A, n)


def linear_solve(A, rhs: np.ndarray, n: int | None = None) -> np.ndarray:
    """Direct solve of the cyclic block-banded system ``A x = rhs`` (rhs is N x n)."""
    rhs = np.asarray(rhs, dtype=float)
    n = rhs.shape[1] if n is None and rhs.ndim == 2 else (n or 1)
    return BlockFactorization(A, n).solve(rhs)


@dataclass
class NewtonReport:
    iterations: int = 0
    residual_norms: list = field(default_factory=list)
    converged: bool = False
    omega: float | None = None
    omega_steps: list = field(default_factory=list)
    damping: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    blocks_solved: int = 0

    def summary(self) -> str:
        last = self.residual_norms[-1] if self.residual_norms else float("nan")
        s = f"Newton: {self.iterations} iterations, converged={self.converged}, final scaled residual={last:.3e}"
        if self.omega is not None:
            s += f", omega={self.omega:.12g}"
        return s


class GalerkinSystem:
    """Discrete periodic problem on a fixed grid.

    Parameters
    ----------
    grid : KnotGrid
    fk : problem object (see module docstring)
    omega : float
        Frequency scaling for the fixed-omega solve (start value in free mode).
    rule : {"gauss2", "simpson"}
    splitting : {"shifted", "centered", "greville", "midpoints"}
    """

    def __init__(self, grid: KnotGrid, fk, omega: float = 1.0, rule: str = "gauss2", splitting: str = "shifted"):
        self.grid = grid
        self.fk = fk
        self.omega = float(omega)
        self.rule = rule
        self.split = splitting_points(grid, splitting)
        self.circuit = fk.circuit
        self.n = self.circuit.n
        N = grid.n_basis
        self.N = N
        pts = self.split.points
        self.quad = quadrature_on(grid, pts, rule)
        self.cell_length = np.diff(pts)
        self._s_idx, self._s_val = basis_functions(grid, pts[:-1])
        self._q_idx, self._q_val = basis_functions(grid, self.quad.nodes)
        self.history = fk.history(self.quad.nodes)
        self._src_cache = {}
        self._jac_pattern()

    # -- helpers ----------------------------------------------------------

    def _jac_pattern(self):
        n, N = self.n, self.N
        nxt = np.roll(np.arange(N), -1)
        # charge contributions: +omega C(x(t^_{l+1})) rows l, -omega C(x(t^_l)) rows l
        cells = np.concatenate([np.arange(N), np.arange(N), self.quad.cell])
        idx = np.concatenate([self._s_idx[nxt], self._s_idx, self._q_idx])
        ii = np.arange(n)
        rows = (cells * n)[:, None, None, None] + ii[None, None, :, None] + 0 * idx[:, :, None, None]
        cols = (idx * n)[:, :, None, None] + ii[None, None, None, :]
        rows = np.broadcast_to(rows, (cells.size, idx.shape[1], n, n))
        cols = np.broadcast_to(cols, rows.shape)
        self._rows = rows.ravel()
        self._cols = cols.ravel()
        self._nxt = nxt

    def curve(self, c) -> SplineCurve:
        return SplineCurve(self.grid, c)

    def _at(self, idx, val, c):
        return np.einsum("pk,pkn->pn", val, c[idx])

    def source(self, omega):
        key = float(omega)
        hit = self._src_cache.get(key)
        if hit is None:
            hit = self.fk.source(self.quad.nodes, key)
            if len(self._src_cache) > 8:
                self._src_cache.clear()
            self._src_cache[key] = hit
        return hit

    def _evaluate(self, c, omega, jac=True):
        c = np.asarray(c, dtype=float)
        Xs = self._at(self._s_idx, self._s_val, c)
        Xq = self._at(self._q_idx, self._q_val, c)
        if not (np.all(np.isfinite(Xs)) and np.all(np.isfinite(Xq))):
            raise NumericError("non-finite spline coefficients")
        qs, _, Cs, _ = self.circuit.evaluate(Xs, jacobians=jac)
        qq, gq, Cq, Gq = self.circuit.evaluate(Xq, jacobians=jac)
        a0 = self.fk.alpha0
        src = self.source(omega)
        f = a0 * qq + gq + src + self.history
        w = self.quad.weights
        nc = self.N
        F = omega * (qs[self._nxt] - qs)
        F += _cellsum(self.quad.cell, w[:, None] * f, nc)
        # term magnitudes: |C||x| and |G||x| survive the cancellation in KCL sums
        qmag = np.abs(qs) + _termwise(Cs, Xs) if jac else np.abs(qs)
        mag = omega * (qmag[self._nxt] + qmag)
        fmag = np.abs(a0 * qq) + np.abs(gq) + np.abs(src) + np.abs(self.history)
        if jac:
            fmag += abs(a0) * _termwise(Cq, Xq) + _termwise(Gq, Xq)
        mag += _cellsum(self.quad.cell, w[:, None] * fmag, nc)
        if not np.all(np.isfinite(F)):
            bad = int(np.flatnonzero(~np.all(np.isfinite(F), axis=1))[0])
            raise NumericError(f"non-finite residual in cell {bad} [{self.split.points[bad]:.6g}, {self.split.points[bad + 1]:.6g}]")
        out = {"F": F, "mag": mag + ABSTOL * self.cell_length[:, None], "Xs": Xs, "qs": qs}
        if jac:
            out.update(Cs=Cs, Dxf=a0 * Cq + Gq)
        return out

    # -- public operations ------------------------------------------------

    def residual(self, c, omega=None) -> np.ndarray:
        omega = self.omega if omega is None else omega
        return self._evaluate(c, omega, jac=False)["F"]

    def scaled_norm(self, ev) -> float:
        return float(np.max(np.abs(ev["F"]) / ev["mag"]))

    def jacobian(self, c, omega=None, ev=None) -> sp.csc_matrix:
        omega = self.omega if omega is None else omega
        if ev is None or "Cs" not in ev:
            ev = self._evaluate(c, omega)
        Cs = ev["Cs"]
        w = self.quad.weights
        coef = np.concatenate(
            [omega * self._s_val[self._nxt], -omega * self._s_val, w[:, None] * self._q_val]
        )
        mats = np.concatenate([Cs[self._nxt], Cs, ev["Dxf"]])
        vals = coef[:, :, None, None] * mats[:, None, :, :]
        size = self.N * self.n
        A = sp.csc_matrix((vals.ravel(), (self._rows, self._cols)), shape=(size, size))
        return A

    def omega_column(self, c, omega, ev=None) -> np.ndarray:
        """``z_l = dF_l/domega``: charge jump plus the exact integral of ``df/domega``."""
        if ev is None:
            ev = self._evaluate(c, omega, jac=False)
        qs = ev["qs"]
        z = qs[self._nxt] - qs
        pts = self.split.points
        z += self.fk.omega_jump(pts[:-1], pts[1:], omega)
        return z


def _termwise(M, X):
    return np.einsum("pij,pj->pi", np.abs(M), np.abs(X))


def _cellsum(cell, values, n_cells):
    out = np.zeros((n_cells, values.shape[1]))
    np.add.at(out, cell, values)
    return out


def residual(sys: GalerkinSystem, c) -> np.ndarray:
    return sys.residual(c)


def jacobian(sys: GalerkinSystem, c) -> sp.csc_matrix:
    return sys.jacobian(c)


def _damped_update(sys, c, omega, step_c, step_w, ev, report):
    """Armijo backtracking on the scaled residual (scale frozen at the current iterate)."""
    scale = ev["mag"]
    merit0 = np.linalg.norm(ev["F"] / scale)
    lam = 1.0
    best = None
    for _ in range(_MAX_HALVINGS + 1):
        c_try = c - lam * step_c
        w_try = omega - lam * step_w
        try:
            ev_try = sys._evaluate(c_try, w_try)
        except NumericError:
            lam *= 0.5
            continue
        merit = np.linalg.norm(ev_try["F"] / scale)
        if best is None or merit < best[0]:
            best = (merit, c_try, w_try, ev_try, lam)
        if merit <= (1.0 - _ARMIJO * lam) * merit0:
            report.damping.append(lam)
            return c_try, w_try, ev_try
        lam *= 0.5
    if best is not None and best[0] < merit0:
        report.damping.append(best[4])
        report.warnings.append("damping floor reached; accepted best non-monotone step")
        return best[1], best[2], best[3]
    return None


def solve_fixed_omega(sys: GalerkinSystem, c_init, tol: float = 1e-10, max_iter: int = 30):
    """Damped Newton for ``F(c) = 0`` at fixed omega.

    Converged when ``max |F_l,i| / (magnitude of the terms in F_l,i)`` is at
    most ``tol``.  Raises :class:`ConvergenceError` carrying the best iterate.
    """
    omega = sys.omega
    c = np.array(c_init, dtype=float)
    report = NewtonReport(omega=omega)
    ev = sys._evaluate(c, omega)
    norm = sys.scaled_norm(ev)
    report.residual_norms.append(norm)
    while norm > tol:
        if report.iterations >= max_iter:
            raise ConvergenceError(
                f"Newton did not converge in {max_iter} iterations (residual {norm:.3e})",
                best=sys.curve(c), report=report,
            )
        A = sys.jacobian(c, omega, ev)
        lu = factorize(A, sys.n)
        report.blocks_solved += sys.N
        d = lu.solve(ev["F"])
        upd = _damped_update(sys, c, omega, d, 0.0, ev, report)
        if upd is None:
            raise ConvergenceError(
                f"damped Newton stalled (residual {norm:.3e})", best=sys.curve(c), report=report
            )
        c, _, ev = upd
        report.iterations += 1
        norm = sys.scaled_norm(ev)
        report.residual_norms.append(norm)
    report.converged = True
    return sys.curve(c), report


def solve_free_omega(sys: GalerkinSystem, c_init, omega_init, c_prev, tol: float = 1e-10, max_iter: int = 30):
    """Newton on the underdetermined system ``A d_c + d_omega z = b``.

    Among all corrections the one keeping ``||c - c_prev||_2`` minimal is
    taken: with ``b~ = A^-1 b`` and ``z~ = A^-1 z`` (one factorization),
    ``d_omega = -z~^T (c - c_prev - b~) / (z~^T z~)`` and ``d_c = b~ - d_omega z~``.
    """
    c = np.array(c_init, dtype=float)
    c_prev = np.asarray(c_prev, dtype=float)
    omega = float(omega_init)
    report = NewtonReport(omega=omega)
    ev = sys._evaluate(c, omega)
    norm = sys.scaled_norm(ev)
    report.residual_norms.append(norm)
    d_omega = np.inf
    wtol = tol * max(abs(omega), 1e-300)
    while not (norm <= tol and abs(d_omega) <= wtol):
        if report.iterations >= max_iter:
            raise ConvergenceError(
                f"free-omega Newton did not converge in {max_iter} iterations (residual {norm:.3e})",
                best=(sys.curve(c), omega), report=report,
            )
        A = sys.jacobian(c, omega, ev)
        z = sys.omega_column(c, omega, ev)
        lu = factorize(A, sys.n)
        report.blocks_solved += sys.N
        sol = lu.solve(np.stack([ev["F"], z], axis=-1))
        bt, zt = sol[..., 0], sol[..., 1]
        ztz = float(np.vdot(zt, zt))
        if not ztz > _ZTZ_FLOOR:
            raise DegenerateFrequencyError("frequency direction is unobservable (z~^T z~ ~ 0)")
        d_omega = -float(np.vdot(zt, c - c_prev - bt)) / ztz
        d_c = bt - d_omega * zt
        upd = _damped_update(sys, c, omega, d_c, d_omega, ev, report)
        if upd is None:
            raise ConvergenceError(
                f"damped free-omega Newton stalled (residual {norm:.3e})",
                best=(sys.curve(c), omega), report=report,
            )
        c, omega, ev = upd
        report.iterations += 1
        report.omega_steps.append(d_omega)
        norm = sys.scaled_norm(ev)
        report.residual_norms.append(norm)
        wtol = tol * max(abs(omega), 1e-300)
    report.converged = True
    report.omega = omega
    return sys.curve(c), omega, report

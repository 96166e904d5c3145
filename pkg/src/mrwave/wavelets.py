"""One-level spline wavelet transform on non-uniform periodic grids.

The fine curve ``X`` on knots ``t_0..t_N`` (N even) is split into a coarse
spline on the even knots ``t_{2k}`` plus one detail vector per odd knot.
The wavelet attached to odd knot ``t_r`` is the fine B-spline whose support
is centered on ``t_r`` (index ``r - m // 2``).  Coarse coefficients are
chosen so that the prolonged coarse spline agrees with ``X`` in every other
fine coefficient; the details are the remaining coefficient residuals::

    c_fine = R @ c_coarse + sum_k d_k e_{o_k}

Reconstruction is therefore exact, details vanish whenever ``X`` already
lives on the coarse grid, and since B-splines are a nonnegative partition of
unity ``|X(t) - X_coarse(t)| <= max |d_k|`` over the wavelets active at t.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla

from .exceptions import DecompositionError, InvalidArgumentError, SingularMatrixError
from .splines import KnotGrid, SplineCurve, insert_knots, refinement_matrix

__all__ = [
    "WaveletDecomposition",
    "RefinementPolicy",
    "fwt_step",
    "reconstruct",
    "detail_norms",
    "refine_grid",
    "coarsen_predictor",
    "pad_to_even",
    "DEFAULT_FLOOR",
]

DEFAULT_FLOOR = 1e-6


@dataclass(frozen=True, eq=False)
class WaveletDecomposition:
    coarse: SplineCurve
    fine_grid: KnotGrid
    odd_knots: np.ndarray  # knot indices r = 2k+1 on the fine grid
    wavelet_index: np.ndarray  # fine basis index carrying d_k
    details: np.ndarray  # shape (N/2, n)
    scale: np.ndarray  # per-variable scaling used by the detail norm

    def __add__(self, other: "WaveletDecomposition") -> "WaveletDecomposition":
        if not (self.fine_grid.same_as(other.fine_grid) and self.coarse.grid.same_as(other.coarse.grid)):
            raise InvalidArgumentError("decompositions live on different grids")
        return WaveletDecomposition(
            SplineCurve(self.coarse.grid, self.coarse.coeffs + other.coarse.coeffs),
            self.fine_grid,
            self.odd_knots,
            self.wavelet_index,
            self.details + other.details,
            np.maximum(self.scale, other.scale),
        )


@dataclass(frozen=True)
class RefinementPolicy:
    """Adaptive refinement schedule.

    ``schedule`` holds ``(newton_tol, wavelet_threshold)`` pairs, both
    strictly decreasing; the last pair is the final accuracy target.
    """

    schedule: tuple = ((1e-4, 3e-2), (1e-6, 3e-3), (1e-8, 3e-4))
    max_rounds: int = 20
    neighborhood_width: int = 2
    floor: float = DEFAULT_FLOOR
    max_knots: int = 2048
    min_spacing: float = 1e-7  # relative to the period

    def __post_init__(self):
        sched = tuple((float(a), float(b)) for a, b in self.schedule)
        if not sched:
            raise InvalidArgumentError("refinement schedule must not be empty")
        for (a0, b0), (a1, b1) in zip(sched, sched[1:]):
            if not (a1 < a0 and b1 < b0):
                raise InvalidArgumentError("refinement schedule must be strictly decreasing")
        if any(a <= 0 or b <= 0 for a, b in sched):
            raise InvalidArgumentError("tolerances and thresholds must be positive")
        if self.max_rounds < 1:
            raise InvalidArgumentError("max_rounds must be >= 1")
        if self.neighborhood_width < 1:
            raise InvalidArgumentError("neighborhood_width must be >= 1")
        object.__setattr__(self, "schedule", sched)

    @property
    def threshold(self) -> float:
        return self.schedule[-1][1]

    @property
    def tol(self) -> float:
        return self.schedule[-1][0]

    def stage(self, i: int):
        return self.schedule[min(i, len(self.schedule) - 1)]


def _scale(coeffs: np.ndarray, floor: float) -> np.ndarray:
    return np.ptp(coeffs, axis=0) + floor


def pad_to_even(curve: SplineCurve) -> SplineCurve:
    """Insert the midpoint of the largest interval when N is odd."""
    if curve.grid.n_intervals % 2 == 0:
        return curve
    t = curve.grid.knots
    j = int(np.argmax(np.diff(t)))
    return insert_knots(curve, [0.5 * (t[j] + t[j + 1])])


def _restrict(curve: SplineCurve, removed: np.ndarray):
    """Drop the knots ``removed`` (indices into the fine grid).

    Returns the coarse curve, the fine basis index carrying each residual,
    and the residual coefficients themselves.
    """
    fine = curve.grid
    m, n = fine.order, fine.n_basis
    keep = np.ones(fine.knots.size, dtype=bool)
    keep[removed] = False
    sub = KnotGrid(fine.knots[keep], m)
    R = refinement_matrix(sub, fine)
    carriers = np.mod(removed - m // 2, n)
    rest = np.setdiff1d(np.arange(n), carriers)
    c = curve.coeffs
    try:
        coarse = spla.splu(R[rest].tocsc()).solve(c[rest])
    except RuntimeError as exc:
        raise SingularMatrixError(f"coarse projection is singular: {exc}") from exc
    resid = c[carriers] - R[carriers] @ coarse
    return SplineCurve(sub, coarse), carriers, resid, R


def fwt_step(curve: SplineCurve, floor: float = DEFAULT_FLOOR) -> WaveletDecomposition:
    """One level of the fast wavelet transform (pads odd N by one knot)."""
    curve = pad_to_even(curve)
    grid = curve.grid
    if grid.n_intervals < 2 * grid.order:
        raise DecompositionError(
            f"grid with N = {grid.n_intervals} intervals is too small to decompose (need N >= 2m = {2 * grid.order})"
        )
    odd = np.arange(1, grid.n_intervals, 2)
    coarse, carriers, resid, _ = _restrict(curve, odd)
    return WaveletDecomposition(coarse, grid, odd, carriers, resid, _scale(curve.coeffs, floor))


def reconstruct(dec: WaveletDecomposition) -> SplineCurve:
    """Inverse transform: prolong the coarse part and add the details."""
    R = refinement_matrix(dec.coarse.grid, dec.fine_grid)
    c = R @ dec.coarse.coeffs
    c[dec.wavelet_index] += dec.details
    return SplineCurve(dec.fine_grid, c)


def detail_norms(dec: WaveletDecomposition) -> np.ndarray:
    """Scaled max-norm of every detail vector (one value per odd knot)."""
    return np.max(np.abs(dec.details) / dec.scale[None, :], axis=1)


def refine_grid(dec: WaveletDecomposition, eps: float, width: int = 2, min_spacing: float = 0.0) -> np.ndarray:
    """New knots around every odd knot whose detail exceeds ``eps``.

    For a flagged knot ``t_r`` the midpoints of the ``width`` fine intervals
    nearest to it are emitted (``(width+1)//2`` on the left, ``width//2`` on
    the right).  Intervals shorter than ``2 * min_spacing`` are not split.
    """
    if eps <= 0:
        raise InvalidArgumentError("threshold must be positive")
    grid = dec.fine_grid
    flagged = dec.odd_knots[detail_norms(dec) > eps]
    if flagged.size == 0:
        return np.empty(0)
    left = (width + 1) // 2
    starts = np.concatenate(
        [flagged - j for j in range(1, left + 1)] + [flagged + j for j in range(width // 2)]
    )
    starts = np.unique(np.mod(starts, grid.n_intervals))
    a = grid.knots[starts]
    b = grid.knots[starts + 1]
    starts = starts[(b - a) > 2.0 * min_spacing]
    mids = 0.5 * (grid.knots[starts] + grid.knots[starts + 1])
    return np.unique(mids)


def coarsen_predictor(curve: SplineCurve, eps: float, floor: float = DEFAULT_FLOOR) -> SplineCurve:
    """Remove every odd knot whose wavelet detail is at most ``eps``.

    The result agrees with the input in all fine coefficients not attached
    to a removed knot, so ``|Y - X| <= max |d'_k|`` over the removed wavelets
    (constant 1 in coefficient units, B-splines being a partition of unity).
    """
    if eps <= 0:
        raise InvalidArgumentError("threshold must be positive")
    try:
        dec = fwt_step(curve, floor)
    except DecompositionError:
        return curve
    drop = dec.odd_knots[detail_norms(dec) <= eps]
    if drop.size == 0:
        return curve
    padded = pad_to_even(curve)
    coarse, _, _, _ = _restrict(padded, drop)
    return coarse

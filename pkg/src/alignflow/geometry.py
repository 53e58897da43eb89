"""Box-counting and local dimensions of the limiting measure in one dimension."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import LimitError
from .limits import MeasureDecomposition
from .scenario import cantor_prediction

__all__ = ["DimensionEstimate", "covering_number", "box_dimension", "local_dimension",
           "label_image_cells", "frostman_ratio", "cantor_prediction", "dyadic_radii"]


@dataclass
class DimensionEstimate:
    """A log-log slope fit.

    Attributes
    ----------
    radii : ndarray
        Strictly decreasing radii ``r_k = r0 2^-k``.
    values : ndarray
        Covering counts ``N(r)`` or ball masses ``m(B(x, r))``.
    fit_mask : ndarray of bool
        Radii used in the fit.
    slope, intercept, residual : float
        Fit of ``ln N`` against ``-ln(2r)`` (box) or ``ln m`` against ``ln r``
        (local); ``residual`` is the RMS deviation.
    predicted : float or None
    source : str
    """

    kind: str
    radii: np.ndarray
    values: np.ndarray
    fit_mask: np.ndarray
    slope: float
    intercept: float
    residual: float
    predicted: float | None = None
    source: str = ""
    notes: dict = field(default_factory=dict)

    @property
    def n_fit(self) -> int:
        return int(np.count_nonzero(self.fit_mask))

    def loglog(self) -> np.ndarray:
        """Rows ``(x, y, used)`` of the fitted log-log table."""
        if self.kind == "box":
            x = -np.log(2 * self.radii)
        else:
            x = np.log(self.radii)
        with np.errstate(divide="ignore"):
            y = np.log(self.values.astype(float))
        return np.column_stack([x, y, self.fit_mask.astype(float)])

    def to_dict(self):
        return {"kind": self.kind, "slope": self.slope, "intercept": self.intercept,
                "residual": self.residual, "n_fit": self.n_fit, "predicted": self.predicted,
                "source": self.source, "notes": self.notes,
                "table": [[float(r), float(v), bool(m)] for r, v, m in
                          zip(self.radii, self.values, self.fit_mask)]}


def dyadic_radii(r0: float, r_min: float) -> np.ndarray:
    """``r0, r0/2, r0/4, ...`` down to ``r_min``."""
    if not r0 > 0 or not r_min > 0:
        raise ValueError("radii must be positive")
    k = max(0, int(math.floor(math.log2(r0 / r_min))))
    return r0 * 2.0 ** -np.arange(k + 1)


def covering_number(points: np.ndarray, r: float) -> int:
    """Minimal number of length-``2r`` intervals covering ``points`` (greedy sweep)."""
    x = np.sort(np.asarray(points, dtype=float))
    if x.size == 0:
        return 0
    count, i = 0, 0
    while i < x.size:
        count += 1
        i = int(np.searchsorted(x, x[i] + 2 * r, side="right"))
    return count


def _fit(x, y, mask):
    if np.count_nonzero(mask) < 2:
        return float("nan"), float("nan"), float("nan")
    coef = np.polyfit(x[mask], y[mask], 1)
    res = y[mask] - np.polyval(coef, x[mask])
    return float(coef[0]), float(coef[1]), float(np.sqrt(np.mean(res ** 2)))


def box_dimension(points, radii=None, r_min: float | None = None,
                  r_max: float | None = None, predicted: float | None = None,
                  min_points: int = 5) -> DimensionEstimate:
    """Box-counting dimension of a finite point set.

    The fit uses radii in ``[r_min, r_max]`` (default: above the smallest
    gap, below a tenth of the diameter) and drops saturated radii where
    every distinct point already needs its own interval.

    Raises
    ------
    LimitError
        If fewer than ``min_points`` radii remain in the fit window.
    """
    x = np.unique(np.asarray(points, dtype=float))
    if x.size < 2:
        z = np.zeros(0)
        return DimensionEstimate("box", z, z, z.astype(bool), 0.0, 0.0, 0.0, predicted,
                                 "single point")
    diam = float(x[-1] - x[0])
    if radii is None:
        gap = float(np.min(np.diff(x)))
        radii = dyadic_radii(diam / 2, max(gap / 4, diam * 1e-15))
    radii = np.asarray(radii, dtype=float)
    if np.any(np.diff(radii) >= 0):
        raise ValueError("radii must be strictly decreasing")
    counts = np.array([covering_number(x, r) for r in radii])
    hi = diam / 10 if r_max is None else r_max
    lo = 0.0 if r_min is None else r_min
    mask = (radii <= hi) & (radii >= lo) & (counts < x.size)
    if np.count_nonzero(mask) < min_points:
        raise LimitError(f"only {np.count_nonzero(mask)} radii in the box-counting window")
    slope, icpt, res = _fit(-np.log(2 * radii), np.log(counts), mask)
    return DimensionEstimate("box", radii, counts, mask, slope, icpt, res, predicted,
                             "covering counts", {"n_points": int(x.size), "diameter": diam,
                                                 "window": [lo, hi]})


def local_dimension(dec: MeasureDecomposition, x: float, radii, all_images: np.ndarray,
                    min_points: int = 5, predicted: float | None = None) -> DimensionEstimate:
    """Slope of ``ln m_bar((x - r, x + r))`` against ``ln r``.

    ``all_images`` is ``X_bar`` at every label (positive and zero labels, in
    label order); it fixes the image cells over which each positive label's
    mass is spread.  Atoms contribute their full mass when inside the ball.

    Raises
    ------
    LimitError
        If the ball of largest radius carries no mass.
    """
    radii = np.asarray(radii, dtype=float)
    if np.any(np.diff(radii) >= 0):
        raise ValueError("radii must be strictly decreasing")
    lo, hi = label_image_cells(all_images)
    lab = dec.ac_labels
    lo, hi, w = lo[lab], hi[lab], dec.ac_weights
    width = hi - lo
    masses = np.empty(radii.size)
    for k, r in enumerate(radii):
        a, b = x - r, x + r
        overlap = np.clip(np.minimum(hi, b) - np.maximum(lo, a), 0.0, None)
        frac = np.where(width > 0, overlap / np.where(width > 0, width, 1.0),
                        ((lo > a) & (lo < b)).astype(float))
        masses[k] = math.fsum((w * frac).tolist()) + math.fsum(
            at.mass for at in dec.atoms if a < at.location < b)
    if masses[0] <= 0:
        raise LimitError("x outside the support of the limiting measure")
    mask = masses > 0
    if np.count_nonzero(mask) < min_points:
        raise LimitError("too few radii with positive ball mass")
    slope, icpt, res = _fit(np.log(radii), np.log(np.where(mask, masses, 1.0)), mask)
    return DimensionEstimate("local", radii, masses, mask, slope, icpt, res, predicted,
                             "ball masses", {"x": x})


def label_image_cells(images: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Cell edges halfway between consecutive label images (ends mirrored)."""
    X = np.asarray(images, dtype=float)
    mid = 0.5 * (X[1:] + X[:-1])
    lo = np.concatenate([[X[0] - (mid[0] - X[0])], mid])
    hi = np.concatenate([mid, [X[-1] + (X[-1] - mid[-1])]])
    return lo, hi


def frostman_ratio(locations, masses, s: float, radii, centers=None) -> float:
    """``max m(B(x, r)) / r^s`` over centers (default: the atoms) and radii."""
    loc = np.asarray(locations, dtype=float)
    m = np.asarray(masses, dtype=float)
    order = np.argsort(loc)
    loc, m = loc[order], m[order]
    cum = np.concatenate([[0.0], np.cumsum(m)])
    cen = loc if centers is None else np.asarray(centers, dtype=float)
    best = 0.0
    for r in np.asarray(radii, dtype=float):
        i0 = np.searchsorted(loc, cen - r, side="right")
        i1 = np.searchsorted(loc, cen + r, side="left")
        best = max(best, float(np.max(cum[i1] - cum[i0])) / r ** s)
    return best

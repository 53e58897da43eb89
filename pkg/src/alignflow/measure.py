"""Compactly supported mass measures: lumped densities plus explicit atoms."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import MeasureError
from .kernel import Kernel
from .summation import compensated_sum

MASS_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class MassMeasure:
    """Absolutely continuous part lumped onto grid labels, plus atoms.

    Attributes
    ----------
    positions : ndarray, shape (N,) or (N, n)
        Label positions; in two dimensions column 0 is the active
        coordinate and labels are stored slice-major (one slice per
        lateral grid value).
    weights : ndarray, shape (N,)
        Label masses ``w_i = rho0(alpha_i) * h_i``.
    cell_volumes : ndarray, shape (N,)
    densities : ndarray, shape (N,)
        ``rho0`` at each label.
    atom_positions, atom_weights : ndarray
        Explicit point masses.
    support_box : tuple of (lo, hi)
        Axis-aligned box containing every position.
    shape : tuple of int
        Grid resolution per axis (``(N,)`` or ``(N1, N2)``).
    density_fn : callable, optional
        The density that was lumped, kept for quadrature of sub-regions.
    """

    positions: np.ndarray
    weights: np.ndarray
    cell_volumes: np.ndarray
    densities: np.ndarray
    atom_positions: np.ndarray
    atom_weights: np.ndarray
    support_box: tuple
    shape: tuple
    density_fn: Callable | None = None

    def __post_init__(self):
        if self.weights.size and np.any(self.weights < 0):
            raise MeasureError("label weights must be nonnegative")
        if self.atom_weights.size and np.any(self.atom_weights <= 0):
            raise MeasureError("atom weights must be positive")
        mass = self.total_mass
        if not (mass > 0 and math.isfinite(mass)):
            raise MeasureError("total mass must be finite and positive")

    @property
    def dimension(self) -> int:
        return 1 if self.positions.ndim == 1 else self.positions.shape[1]

    @property
    def total_mass(self) -> float:
        return compensated_sum(np.concatenate([self.weights, self.atom_weights]))

    @property
    def ac_mass(self) -> float:
        return compensated_sum(self.weights)

    def all_points(self):
        """Positions and weights of labels followed by atoms."""
        if self.atom_weights.size == 0:
            return self.positions, self.weights
        return (np.concatenate([self.positions, self.atom_positions]),
                np.concatenate([self.weights, self.atom_weights]))

    def pushforward(self, positions, atom_positions=None) -> "MassMeasure":
        """Move labels (and atoms) keeping their masses."""
        positions = np.asarray(positions, dtype=float)
        atoms = self.atom_positions if atom_positions is None \
            else np.asarray(atom_positions, dtype=float)
        pts = np.concatenate([np.atleast_1d(positions), np.atleast_1d(atoms)]) \
            if atoms.size else positions
        if pts.ndim == 1:
            box = ((float(pts.min()), float(pts.max())),)
        else:
            box = tuple((float(pts[:, k].min()), float(pts[:, k].max()))
                        for k in range(pts.shape[1]))
        return MassMeasure(positions, self.weights, self.cell_volumes, self.densities,
                           atoms, self.atom_weights, box, self.shape)

    def to_dict(self) -> dict:
        return {"dimension": self.dimension, "shape": list(self.shape),
                "support_box": [list(b) for b in self.support_box],
                "total_mass": self.total_mass,
                "atoms": [[np.atleast_1d(p).tolist(), float(w)]
                          for p, w in zip(self.atom_positions, self.atom_weights)]}


def grid_midpoints(lo: float, hi: float, n: int) -> tuple[np.ndarray, float]:
    h = (hi - lo) / n
    return lo + h * (np.arange(n) + 0.5), h


def lumped_measure(rho0: Callable, box: Sequence[Sequence[float]], shape: Sequence[int],
                   atoms: Sequence = (), normalize_to: float | None = None) -> MassMeasure:
    """Midpoint mass lumping of ``rho0`` on a uniform grid over ``box``.

    Parameters
    ----------
    rho0 : callable
        Density; receives ``alpha1`` (1D) or ``(alpha1, alpha2)`` arrays.
    box : sequence of (lo, hi)
    shape : sequence of int
        Labels per axis.
    atoms : sequence of (position, weight)
    normalize_to : float, optional
        Rescale all masses so the total equals this value.
    """
    box = tuple((float(a), float(b)) for a, b in box)
    shape = tuple(int(s) for s in shape)
    if len(box) != len(shape) or len(box) not in (1, 2):
        raise MeasureError("box and shape must both describe 1 or 2 axes")
    if any(s < 1 for s in shape):
        raise MeasureError("grid resolution must be positive")
    if len(box) == 1:
        a, h = grid_midpoints(*box[0], shape[0])
        dens = np.asarray(rho0(a), dtype=float) * np.ones_like(a)
        vol = np.full(a.size, h)
        pos = a
    else:
        a1, h1 = grid_midpoints(*box[0], shape[0])
        a2, h2 = grid_midpoints(*box[1], shape[1])
        A2, A1 = np.meshgrid(a2, a1, indexing="ij")
        pos = np.column_stack([A1.ravel(), A2.ravel()])
        dens = np.asarray(rho0(pos[:, 0], pos[:, 1]), dtype=float) * np.ones(pos.shape[0])
        vol = np.full(pos.shape[0], h1 * h2)
    if np.any(dens < 0) or not np.all(np.isfinite(dens)):
        raise MeasureError("density must be finite and nonnegative")
    weights = dens * vol
    apos = np.array([p for p, _ in atoms], dtype=float) if atoms else \
        np.zeros((0,) if len(box) == 1 else (0, 2))
    awts = np.array([w for _, w in atoms], dtype=float) if atoms else np.zeros(0)
    for p in apos.reshape(len(awts), len(box)):
        for k, (lo, hi) in enumerate(box):
            if not lo <= p[k] <= hi:
                raise MeasureError("atom outside the support box")
    if normalize_to is not None:
        total = compensated_sum(np.concatenate([weights, awts]))
        if total <= 0:
            raise MeasureError("total mass must be finite and positive")
        scale = normalize_to / total
        weights, dens, awts = weights * scale, dens * scale, awts * scale
        fn = rho0
        rho0 = lambda *a: scale * np.asarray(fn(*a), dtype=float)
    return MassMeasure(pos, weights, vol, dens, apos, awts, box, shape, rho0)


def total_mass(m: MassMeasure) -> float:
    return m.total_mass


def convolve(kernel: Kernel, m: MassMeasure, x, positions=None,
             atom_positions=None) -> np.ndarray:
    """``sum_i w_i phi(x - X_i)`` over labels and atoms at their current positions.

    ``positions`` defaults to the initial label positions; it must be indexed
    like ``m.positions``.  ``x`` may be a single point or an array of points.
    """
    pos = m.positions if positions is None else np.asarray(positions, dtype=float)
    apos = m.atom_positions if atom_positions is None else np.asarray(atom_positions, float)
    if pos.shape != m.positions.shape or apos.shape != m.atom_positions.shape:
        raise MeasureError("positions are not indexed like the measure's labels")
    pts = np.concatenate([pos, apos]) if apos.size else pos
    wts = np.concatenate([m.weights, m.atom_weights])
    x = np.asarray(x, dtype=float)
    if m.dimension == 1:
        xs = np.atleast_1d(x)
        out = np.array([np.sum(wts * kernel(xi - pts)) for xi in xs])
        return out if x.ndim else float(out[0])
    xs = np.atleast_2d(x)
    out = np.array([np.sum(wts * kernel(xi[0] - pts[:, 0], xi[1] - pts[:, 1])) for xi in xs])
    return out if x.ndim > 1 else float(out[0])


def _points_1d(m) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(m, MassMeasure):
        if m.dimension != 1:
            raise MeasureError("Wasserstein-1 is only implemented in one dimension")
        return m.all_points()
    pos, wts = m
    return np.asarray(pos, dtype=float).ravel(), np.asarray(wts, dtype=float).ravel()


def w1_distance_1d(mu, nu) -> float:
    """Exact ``W1`` between equal-mass discrete measures on the line.

    Computed as ``int |F_mu - F_nu| dx`` from the piecewise-constant CDFs.
    ``mu`` and ``nu`` are MassMeasures or ``(positions, weights)`` pairs.
    """
    xa, wa = _points_1d(mu)
    xb, wb = _points_1d(nu)
    ma, mb = compensated_sum(wa), compensated_sum(wb)
    if abs(ma - mb) > MASS_RTOL * max(ma, mb):
        raise MeasureError(f"unequal masses {ma!r} and {mb!r}")
    x = np.concatenate([xa, xb])
    signed = np.concatenate([wa, -wb])
    order = np.argsort(x, kind="stable")
    x, signed = x[order], signed[order]
    diff_cdf = np.cumsum(signed)[:-1]
    gaps = np.diff(x)
    return compensated_sum(np.abs(diff_cdf) * gaps)

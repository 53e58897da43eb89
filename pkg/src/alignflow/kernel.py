"""Communication kernels: values, gradients, signed primitives and flocking constants.

A kernel is a radial function ``phi(r)`` on ``R^n``.  The dynamics only ever
evaluate it at displacements ``(x1, x_minus)`` where ``x1`` is the active
component and ``x_minus`` the frozen lateral offset, so every method takes
those two arguments separately (``x_minus`` is ``None`` or ``0`` in 1D).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy import integrate, interpolate, special

from .errors import KernelError, NoDiameterBoundError, QuadratureError

_PRIMITIVE_RTOL = 1e-10


def _lateral_sq(x_minus, dimension: int):
    if x_minus is None or dimension == 1:
        return 0.0
    xm = np.asarray(x_minus, dtype=float)
    if dimension > 2 and xm.ndim >= 1 and xm.shape[-1] == dimension - 1:
        return np.sum(xm * xm, axis=-1)
    return xm * xm


class Kernel:
    """Radially nonincreasing communication kernel on ``R^n``.

    Subclasses provide the radial profile and its derivative.  Everything
    else (component derivatives, signed primitive, sup norms) is derived
    here or overridden when a closed form exists.
    """

    family: str = "abstract"
    dimension: int = 1

    # -- radial profile -------------------------------------------------
    def radial(self, r):
        raise NotImplementedError

    def radial_derivative(self, r):
        raise NotImplementedError

    @property
    def sup_value(self) -> float:
        """``||phi||_inf``, attained at the origin."""
        return float(self.radial(0.0))

    @property
    def grad_sup(self) -> float:
        raise NotImplementedError

    @property
    def heavy_tailed(self) -> bool:
        raise NotImplementedError

    def singularity_distance(self, lateral: float = 0.0) -> float | None:
        """Distance from the real axis to the nearest complex singularity in x1.

        ``None`` means the kernel is not analytic and low-rank summation must
        not be used; ``inf`` means the kernel is a polynomial in x1.
        """
        return None

    # -- evaluation at displacements ----------------------------------
    def __call__(self, x1, x_minus=None):
        x1 = np.asarray(x1, dtype=float)
        r = np.sqrt(x1 * x1 + _lateral_sq(x_minus, self.dimension))
        return self.radial(r)

    def d1(self, x1, x_minus=None):
        """Partial derivative of ``phi(x1, x_minus)`` in ``x1``."""
        x1 = np.asarray(x1, dtype=float)
        r = np.sqrt(x1 * x1 + _lateral_sq(x_minus, self.dimension))
        safe = np.where(r > 0, r, 1.0)
        return np.where(r > 0, self.radial_derivative(r) * x1 / safe, 0.0)

    def d_lateral(self, x1, x_minus):
        """Partial derivative of ``phi`` in the (scalar) lateral offset, n = 2."""
        x1 = np.asarray(x1, dtype=float)
        xm = np.asarray(x_minus, dtype=float)
        r = np.sqrt(x1 * x1 + xm * xm)
        safe = np.where(r > 0, r, 1.0)
        return np.where(r > 0, self.radial_derivative(r) * xm / safe, 0.0)

    def primitive(self, x1, x_minus=None):
        """Signed partial primitive ``int_0^x1 phi(y, x_minus) dy``."""
        x1 = np.asarray(x1, dtype=float)
        lat = np.broadcast_to(np.asarray(_lateral_sq(x_minus, self.dimension), float),
                              x1.shape)
        out = np.empty(x1.shape)
        for idx in np.ndindex(x1.shape):
            out[idx] = self._primitive_scalar(float(x1[idx]), float(lat[idx]))
        return out if out.ndim else float(out)

    def primitive_dlat(self, x1, x_minus):
        """Lateral derivative of the primitive, ``int_0^x1 d_lateral phi(y, x_minus) dy``."""
        x1 = np.asarray(x1, dtype=float)
        xm = np.broadcast_to(np.asarray(x_minus, dtype=float), x1.shape)
        out = np.empty(x1.shape)
        for idx in np.ndindex(x1.shape):
            a, q = float(x1[idx]), float(xm[idx])
            out[idx] = 0.0 if a == 0.0 else integrate.quad(
                lambda y: float(self.d_lateral(y, q)), 0.0, a, epsabs=0.0,
                epsrel=_PRIMITIVE_RTOL, limit=200)[0]
        return out if out.ndim else float(out)

    def _primitive_scalar(self, x1: float, lat_sq: float) -> float:
        if x1 == 0.0:
            return 0.0
        sign = 1.0 if x1 > 0 else -1.0
        f = lambda y: float(self.radial(math.sqrt(y * y + lat_sq)))
        val, err = integrate.quad(f, 0.0, abs(x1), epsabs=0.0,
                                  epsrel=_PRIMITIVE_RTOL, limit=200)
        if err > _PRIMITIVE_RTOL * max(abs(val), 1e-300) * 10:
            raise QuadratureError("kernel primitive did not converge", err)
        return sign * val

    def radial_integral(self, r0: float, r1: float) -> float:
        """``int_{r0}^{r1} phi(r) dr`` along a ray."""
        return float(self._radial_primitive(r1) - self._radial_primitive(r0))

    def _radial_primitive(self, r: float) -> float:
        lat = 0.0
        return self._primitive_scalar(float(r), lat)

    def to_dict(self) -> dict[str, Any]:
        raise NotImplementedError

    def check_invariants(self, r_max: float = 50.0, samples: int = 2001) -> None:
        r = np.linspace(0.0, r_max, samples)
        vals = np.asarray(self.radial(r), dtype=float)
        if np.any(vals < 0):
            raise KernelError("kernel takes negative values")
        if np.any(np.diff(vals) > 1e-14 * max(1.0, abs(vals[0]))):
            raise KernelError("kernel is not radially nonincreasing")


@dataclass(frozen=True, eq=True)
class ConstantKernel(Kernel):
    """``phi = amplitude`` everywhere."""

    amplitude: float = 1.0
    dimension: int = 1
    family: str = field(default="constant", init=False)

    def __post_init__(self):
        if not (self.amplitude > 0 and math.isfinite(self.amplitude)):
            raise KernelError("constant kernel amplitude must be positive")
        if self.dimension < 1:
            raise KernelError("dimension must be a positive integer")

    def radial(self, r):
        return np.full(np.shape(r), self.amplitude) if np.ndim(r) else self.amplitude

    def radial_derivative(self, r):
        return np.zeros(np.shape(r)) if np.ndim(r) else 0.0

    def __call__(self, x1, x_minus=None):
        return np.full(np.shape(x1), self.amplitude) if np.ndim(x1) else self.amplitude

    def d1(self, x1, x_minus=None):
        return np.zeros(np.shape(x1)) if np.ndim(x1) else 0.0

    def d_lateral(self, x1, x_minus):
        return np.zeros(np.broadcast(np.asarray(x1), np.asarray(x_minus)).shape)

    def primitive(self, x1, x_minus=None):
        x1 = np.asarray(x1, dtype=float)
        out = self.amplitude * x1
        if x_minus is not None and np.ndim(x_minus):
            out = np.broadcast_to(out, np.broadcast(x1, np.asarray(x_minus)).shape).copy()
        return out if out.ndim else float(out)

    def primitive_dlat(self, x1, x_minus):
        return np.zeros(np.broadcast(np.asarray(x1), np.asarray(x_minus)).shape)

    def _radial_primitive(self, r: float) -> float:
        return self.amplitude * r

    @property
    def grad_sup(self) -> float:
        return 0.0

    @property
    def heavy_tailed(self) -> bool:
        return True

    def singularity_distance(self, lateral: float = 0.0) -> float:
        return math.inf

    def to_dict(self):
        return {"family": "constant", "amplitude": self.amplitude,
                "dimension": self.dimension}


@dataclass(frozen=True, eq=True)
class PowerTailKernel(Kernel):
    """``phi(r) = scale * (1 + r^2)^(-s/2)``; heavy-tailed iff ``s <= 1``."""

    exponent: float = 1.0
    scale: float = 1.0
    dimension: int = 1
    family: str = field(default="powertail", init=False)

    def __post_init__(self):
        if not (self.exponent > 0 and math.isfinite(self.exponent)):
            raise KernelError("power-tail exponent must be positive")
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise KernelError("power-tail scale must be positive")
        if self.dimension < 1:
            raise KernelError("dimension must be a positive integer")

    def radial(self, r):
        r = np.asarray(r, dtype=float)
        out = self.scale * (1.0 + r * r) ** (-0.5 * self.exponent)
        return out if out.ndim else float(out)

    def radial_derivative(self, r):
        r = np.asarray(r, dtype=float)
        s = self.exponent
        out = -self.scale * s * r * (1.0 + r * r) ** (-0.5 * s - 1.0)
        return out if out.ndim else float(out)

    def __call__(self, x1, x_minus=None):
        x1 = np.asarray(x1, dtype=float)
        q = 1.0 + x1 * x1 + _lateral_sq(x_minus, self.dimension)
        out = self.scale * q ** (-0.5 * self.exponent)
        return out if np.ndim(out) else float(out)

    def d1(self, x1, x_minus=None):
        x1 = np.asarray(x1, dtype=float)
        s = self.exponent
        q = 1.0 + x1 * x1 + _lateral_sq(x_minus, self.dimension)
        out = -self.scale * s * x1 * q ** (-0.5 * s - 1.0)
        return out if np.ndim(out) else float(out)

    def d_lateral(self, x1, x_minus):
        x1 = np.asarray(x1, dtype=float)
        xm = np.asarray(x_minus, dtype=float)
        s = self.exponent
        q = 1.0 + x1 * x1 + xm * xm
        out = -self.scale * s * xm * q ** (-0.5 * s - 1.0)
        return out if np.ndim(out) else float(out)

    def primitive(self, x1, x_minus=None):
        x1 = np.asarray(x1, dtype=float)
        c2 = 1.0 + _lateral_sq(x_minus, self.dimension)
        c = np.sqrt(c2)
        s = self.exponent
        if s == 1.0:
            out = self.scale * np.arcsinh(x1 / c)
        elif s == 2.0:
            out = self.scale * np.arctan(x1 / c) / c
        else:
            z = x1 / c
            out = self.scale * c ** (1.0 - s) * z * special.hyp2f1(0.5, 0.5 * s, 1.5, -z * z)
        return out if np.ndim(out) else float(out)

    def primitive_dlat(self, x1, x_minus):
        x1 = np.asarray(x1, dtype=float)
        xm = np.asarray(x_minus, dtype=float)
        c2 = 1.0 + xm * xm
        s = self.exponent
        if s == 1.0:
            out = -self.scale * xm * x1 / (c2 * np.sqrt(c2 + x1 * x1))
        else:
            m = 0.5 * (s + 2.0)
            out = (-self.scale * s * xm * x1 * c2 ** (-m)
                   * special.hyp2f1(0.5, m, 1.5, -x1 * x1 / c2))
        return out if np.ndim(out) else float(out)

    def _radial_primitive(self, r: float) -> float:
        return float(self.primitive(r))

    @property
    def grad_sup(self) -> float:
        s = self.exponent
        r = 1.0 / math.sqrt(s + 1.0)
        return self.scale * s * r * (1.0 + r * r) ** (-0.5 * s - 1.0)

    @property
    def heavy_tailed(self) -> bool:
        return self.exponent <= 1.0

    def singularity_distance(self, lateral: float = 0.0) -> float:
        return math.sqrt(1.0 + lateral * lateral)

    def to_dict(self):
        return {"family": "powertail", "exponent": self.exponent,
                "scale": self.scale, "dimension": self.dimension}


class TabulatedKernel(Kernel):
    """Radial samples joined by monotone cubic (PCHIP) interpolation.

    Beyond the last sample the profile continues as the power law through
    the last two samples, ``phi(r) = phi_last * (r / r_last)^(-q)``; the
    declared heavy-tail flag must agree with ``q <= 1``.
    """

    family = "tabulated"

    def __init__(self, radii, values, heavy_tailed: bool, dimension: int = 1):
        r = np.asarray(radii, dtype=float)
        v = np.asarray(values, dtype=float)
        if r.ndim != 1 or r.shape != v.shape or r.size < 3:
            raise KernelError("tabulated kernel needs at least 3 matching samples")
        if r[0] != 0.0 or np.any(np.diff(r) <= 0):
            raise KernelError("tabulated radii must start at 0 and increase")
        if np.any(v <= 0):
            raise KernelError("tabulated kernel values must be positive")
        if np.any(np.diff(v) > 0):
            raise KernelError("tabulated kernel values must be nonincreasing")
        self.radii = r
        self.values = v
        self.dimension = int(dimension)
        self._declared = bool(heavy_tailed)
        self._pchip = interpolate.PchipInterpolator(r, v, extrapolate=False)
        self._dpchip = self._pchip.derivative()
        if v[-2] == v[-1]:
            self.tail_exponent = 0.0
        else:
            self.tail_exponent = float(-math.log(v[-1] / v[-2]) / math.log(r[-1] / r[-2]))
        if (self.tail_exponent <= 1.0) != self._declared:
            raise KernelError(
                f"declared heavy_tailed={self._declared} contradicts the extrapolated "
                f"tail exponent {self.tail_exponent:.4g}")

    def radial(self, r):
        r = np.abs(np.asarray(r, dtype=float))
        r_last, v_last = self.radii[-1], self.values[-1]
        inside = r <= r_last
        body = self._pchip(np.where(inside, r, r_last))
        tail = v_last * (np.maximum(r, r_last) / r_last) ** (-self.tail_exponent)
        out = np.where(inside, body, tail)
        return out if out.ndim else float(out)

    def radial_derivative(self, r):
        r = np.abs(np.asarray(r, dtype=float))
        r_last, v_last = self.radii[-1], self.values[-1]
        inside = r <= r_last
        body = self._dpchip(np.where(inside, r, r_last))
        rr = np.maximum(r, r_last)
        tail = -self.tail_exponent * v_last / r_last * (rr / r_last) ** (-self.tail_exponent - 1)
        out = np.where(inside, body, tail)
        return out if out.ndim else float(out)

    @property
    def grad_sup(self) -> float:
        grid = np.concatenate([self.radii, np.linspace(0.0, self.radii[-1], 20001)])
        body = float(np.max(np.abs(self._dpchip(grid))))
        tail = self.tail_exponent * self.values[-1] / self.radii[-1]
        return max(body, tail)

    @property
    def heavy_tailed(self) -> bool:
        return self._declared

    def to_dict(self):
        return {"family": "tabulated", "radii": self.radii.tolist(),
                "values": self.values.tolist(), "heavy_tailed": self._declared,
                "dimension": self.dimension}

    def __eq__(self, other):
        return (isinstance(other, TabulatedKernel) and self.dimension == other.dimension
                and np.array_equal(self.radii, other.radii)
                and np.array_equal(self.values, other.values))

    def __hash__(self):
        return hash((self.dimension, self.radii.tobytes(), self.values.tobytes()))


def make_kernel(spec: dict[str, Any], dimension: int | None = None) -> Kernel:
    """Build a kernel from its configuration block."""
    spec = dict(spec)
    family = spec.pop("family", None)
    if dimension is not None:
        spec["dimension"] = dimension
    if family == "constant":
        k = ConstantKernel(**spec)
    elif family == "powertail":
        k = PowerTailKernel(**spec)
    elif family == "tabulated":
        k = TabulatedKernel(**spec)
    else:
        raise KernelError(f"unknown kernel family {family!r}")
    k.check_invariants()
    return k


def evaluate(kernel: Kernel, x) -> float:
    """``phi(|x|)`` for a point ``x`` in ``R^n`` (scalar allowed when n = 1)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return float(kernel.radial(float(np.linalg.norm(x))))


@dataclass(frozen=True)
class FlockingConstants:
    """A-priori flocking quantities of a heavy-tailed kernel.

    Attributes
    ----------
    diam_bound : float
        Diameter bound ``D_bar`` solving ``kappa*M0*int_{D0}^{D_bar} phi = A0``.
    kernel_floor : float
        ``phi(D_bar)``, the uniform lower bound on pair interactions.
    a, b : float
        ``kappa*M0*||grad phi||*A0`` and ``kappa*M0*phi(D_bar)``.
    """

    diam_bound: float
    kernel_floor: float
    a: float
    b: float

    def to_dict(self):
        return {"diam_bound": self.diam_bound, "kernel_floor": self.kernel_floor,
                "a": self.a, "b": self.b}


def flocking_constants(kernel: Kernel, D0: float, A0: float, kappa: float,
                       M0: float, tol: float = 1e-12) -> FlockingConstants:
    """Solve for the flock diameter bound by bisection.

    Raises
    ------
    NoDiameterBoundError
        If the kernel's radial integral converges.
    """
    if not kernel.heavy_tailed:
        raise NoDiameterBoundError("no a-priori diameter bound: kernel is not heavy-tailed")
    if D0 < 0 or A0 < 0:
        raise KernelError("D0 and A0 must be nonnegative")
    if kappa <= 0 or M0 <= 0:
        raise KernelError("kappa and M0 must be positive")

    def excess(d):
        return kappa * M0 * kernel.radial_integral(D0, d) - A0

    lo, hi = D0, D0 + 1.0
    if A0 == 0.0:
        hi = D0
    else:
        while excess(hi) < 0:
            lo, hi = hi, D0 + 2.0 * (hi - D0)
            if hi > 1e300:
                raise NoDiameterBoundError("diameter bound diverged")
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi:
                break
            if excess(mid) < 0:
                lo = mid
            else:
                hi = mid
    floor = float(kernel.radial(hi))
    return FlockingConstants(diam_bound=hi, kernel_floor=floor,
                             a=kappa * M0 * kernel.grad_sup * A0,
                             b=kappa * M0 * floor)

"""Explicit Runge-Kutta steppers on flat state vectors.

Both steppers advance ``y' = f(t, y)`` one step at a time so the caller can
inspect the state between steps (stopping rules, recording schedule).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import IntegrationError

Rhs = Callable[[float, np.ndarray], np.ndarray]


def rk4_step(f: Rhs, t: float, y: np.ndarray, dt: float) -> np.ndarray:
    """One classical fourth-order Runge-Kutta step."""
    k1 = f(t, y)
    k2 = f(t + 0.5 * dt, y + 0.5 * dt * k1)
    k3 = f(t + 0.5 * dt, y + 0.5 * dt * k2)
    k4 = f(t + dt, y + dt * k3)
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200,
                187 / 2100, 1 / 40])
_E = _B5 - _B4


@dataclass
class DormandPrince:
    """Adaptive Dormand-Prince 5(4) stepper with first-same-as-last reuse.

    The error norm is the RMS of ``err / (atol + rtol * max(|y|, |y_new|))``,
    where ``atol`` may be a per-component array.
    """

    f: Rhs
    rtol: float = 1e-8
    atol: float | np.ndarray = 1e-10
    safety: float = 0.9
    min_factor: float = 0.2
    max_factor: float = 5.0
    min_step: float = 1e-14

    def __post_init__(self):
        self._k_last = None
        self._y_last = None
        self.n_rejected = 0
        self.n_accepted = 0

    def initial_step(self, t: float, y: np.ndarray) -> float:
        f0 = self.f(t, y)
        self._k_last, self._y_last = f0, y
        scale = self.atol + self.rtol * np.abs(y)
        d0 = np.sqrt(np.mean((y / scale) ** 2))
        d1 = np.sqrt(np.mean((f0 / scale) ** 2))
        h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
        y1 = y + h0 * f0
        d2 = np.sqrt(np.mean(((self.f(t + h0, y1) - f0) / scale) ** 2)) / h0
        dmax = max(d1, d2)
        h1 = max(1e-6, h0 * 1e-3) if dmax <= 1e-15 else (0.01 / dmax) ** 0.2
        return min(100 * h0, h1)

    def step(self, t: float, y: np.ndarray, h: float):
        """Attempt steps from ``t`` until one is accepted.

        Returns ``(t_new, y_new, h_taken, h_next)``.
        """
        while True:
            if h < self.min_step:
                raise IntegrationError(f"step size underflow at t = {t:.6g}", last_state=y)
            k = [None] * 7
            k[0] = self._k_last if self._y_last is y else self.f(t, y)
            for i in range(1, 7):
                acc = y.copy()
                for j, aij in enumerate(_A[i]):
                    if aij != 0.0:
                        acc += h * aij * k[j]
                k[i] = self.f(t + _C[i] * h, acc)
                if i == 6:
                    y_new = acc
            err = h * sum(e * ki for e, ki in zip(_E, k) if e != 0.0)
            scale = self.atol + self.rtol * np.maximum(np.abs(y), np.abs(y_new))
            en = float(np.sqrt(np.mean((err / scale) ** 2)))
            if not np.isfinite(en):
                raise IntegrationError(f"non-finite state at t = {t:.6g}", last_state=y)
            if en <= 1.0:
                fac = self.max_factor if en == 0 else \
                    min(self.max_factor, max(self.min_factor, self.safety * en ** -0.2))
                self._k_last, self._y_last = k[6], y_new
                self.n_accepted += 1
                return t + h, y_new, h, h * fac
            self.n_rejected += 1
            h *= max(self.min_factor, self.safety * en ** -0.2)

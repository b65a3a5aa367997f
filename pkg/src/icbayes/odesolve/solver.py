"""Adaptive Dormand-Prince 5(4) integrator with PI step-size control.

One deliberately small solver: explicit RK, FSAL, elementwise mixed
absolute/relative error test, and an optional fixed-step mode used by the
convergence-order check. State arrays can have any shape; the right-hand side
receives and returns that shape.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from ..errors import SolverError

# Butcher tableau (Dormand & Prince 1980), 5th-order propagating solution.
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
# b5 - b4: weights of the embedded error estimate
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920,
               -17253 / 339200, 22 / 525, -1 / 40])

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 10.0
# PI controller exponents for a 5th-order method
_ALPHA = 0.7 / 5.0
_BETA = 0.4 / 5.0


@dataclass
class OdeResult:
    y: np.ndarray
    t: float
    n_steps: int
    n_accepted: int
    n_rejected: int
    n_feval: int

    def stats(self) -> dict:
        return {
            "n_steps": self.n_steps,
            "n_accepted": self.n_accepted,
            "n_rejected": self.n_rejected,
            "n_feval": self.n_feval,
        }


def _rms_norm(x: np.ndarray) -> float:
    return float(np.sqrt(np.mean(np.square(x))))


def _step(f, t, y, h, k1):
    """One DP5 step; returns (y5, err_vector, k7)."""
    k = [k1]
    for i in range(1, 7):
        yi = y + h * sum(a * kj for a, kj in zip(_A[i], k))
        k.append(f(t + _C[i] * h, yi))
    y5 = y + h * sum(b * kj for b, kj in zip(_B5, k) if b != 0.0)
    err = h * sum(e * kj for e, kj in zip(_E, k) if e != 0.0)
    return y5, err, k[6]


def dopri5(
    f: Callable,
    t0: float,
    t1: float,
    y0: np.ndarray,
    *,
    rtol: float = 1e-7,
    atol: float = 1e-7,
    h0: Optional[float] = None,
    max_steps: int = 100_000,
    norm: Optional[Callable] = None,
    fixed_steps: Optional[int] = None,
) -> OdeResult:
    """Integrate dy/dt = f(t, y) from t0 to t1 (either direction).

    ``fixed_steps`` disables error control and takes that many equal steps,
    which is what the order-of-convergence test wants. ``norm`` maps the
    scaled error array to a scalar; the default is the RMS over all entries.
    """
    y = np.array(y0, dtype=float)
    if t1 == t0:
        return OdeResult(y=y, t=t0, n_steps=0, n_accepted=0, n_rejected=0, n_feval=0)
    if norm is None:
        norm = _rms_norm

    if fixed_steps is not None:
        if fixed_steps < 1:
            raise SolverError("fixed_steps must be >= 1")
        h = (t1 - t0) / fixed_steps
        t = t0
        k1 = f(t, y)
        n_feval = 1
        for i in range(fixed_steps):
            y, _, k1 = _step(f, t, y, h, k1)
            t = t0 + (i + 1) * h
            n_feval += 6
        return OdeResult(y=y, t=t1, n_steps=fixed_steps, n_accepted=fixed_steps,
                         n_rejected=0, n_feval=n_feval)

    direction = 1.0 if t1 > t0 else -1.0
    h = (t1 - t0) / 100.0 if h0 is None else direction * abs(h0)
    t = t0
    k1 = f(t, y)
    n_feval = 1
    n_accepted = 0
    n_rejected = 0
    err_prev = 1.0

    for _ in range(max_steps):
        if direction * (t + h - t1) > 0.0:
            h = t1 - t
        y_new, err_vec, k7 = _step(f, t, y, h, k1)
        n_feval += 6
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        err = norm(err_vec / scale)

        if err <= 1.0:
            t = t + h
            y = y_new
            k1 = k7  # FSAL
            n_accepted += 1
            if direction * (t - t1) >= 0.0:
                return OdeResult(y=y, t=t1, n_steps=n_accepted + n_rejected,
                                 n_accepted=n_accepted, n_rejected=n_rejected,
                                 n_feval=n_feval)
            if err == 0.0:
                factor = _MAX_FACTOR
            else:
                factor = _SAFETY * err ** (-_ALPHA) * err_prev**_BETA
            err_prev = max(err, 1e-10)
        else:
            n_rejected += 1
            factor = max(_SAFETY * err ** (-_ALPHA), _MIN_FACTOR)
            factor = min(factor, 1.0)
        h = h * min(max(factor, _MIN_FACTOR), _MAX_FACTOR)
        if t + h == t:
            raise SolverError(f"step size underflow at t={t:.6g}")

    raise SolverError(
        f"no convergence in {max_steps} steps; reached t={t:.6g} of [{t0}, {t1}]"
    )

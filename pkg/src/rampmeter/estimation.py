"""Online estimators of the lumped term ``F`` in the ultra-local model ``dy/dt = F + alpha*u``."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np


@dataclass(frozen=True)
class SampleWindow:
    """Equally spaced samples covering ``[t - tau, t]``, oldest first.

    ``ystar_dot`` and ``e`` are only needed by the closed-loop estimator and
    default to zeros.
    """

    h: float
    y: np.ndarray
    u: np.ndarray
    ystar_dot: Optional[np.ndarray] = None
    e: Optional[np.ndarray] = None
    tau: Optional[float] = None

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError(f"sampling interval h must be > 0, got {self.h!r}")
        y = np.asarray(self.y, dtype=float)
        u = np.asarray(self.u, dtype=float)
        n = y.shape[0]
        if n < 2:
            raise ValueError(f"window needs at least 2 samples, got {n}")
        if u.shape != y.shape:
            raise ValueError("y and u must have the same number of samples")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "u", u)
        for name in ("ystar_dot", "e"):
            arr = getattr(self, name)
            arr = np.zeros(n) if arr is None else np.asarray(arr, dtype=float)
            if arr.shape != y.shape:
                raise ValueError(f"{name} must have the same number of samples as y")
            object.__setattr__(self, name, arr)
        span = (n - 1) * self.h
        if self.tau is None:
            object.__setattr__(self, "tau", span)
        elif abs(self.tau - span) > 1e-6 * span:
            raise ValueError(f"tau={self.tau!r} inconsistent with {n} samples at h={self.h!r}")

    def __len__(self) -> int:
        return self.y.shape[0]


@lru_cache(maxsize=64)
def _algebraic_weights(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Weights of the two kernels on a unit-spaced grid of ``n`` samples.

    Signals are reconstructed piecewise-linearly between samples and the
    polynomial kernels ``(tau - 2s)`` and ``s (tau - s)`` are integrated exactly
    against the reconstruction (2-point Gauss per interval is exact up to cubics).
    Scaling: for spacing ``h`` the first set scales with ``h**2``, the second
    with ``h**3``.
    """
    tau = n - 1.0
    nodes, gw = np.polynomial.legendre.leggauss(2)
    s = 0.5 * (nodes + 1.0)  # position inside an interval, in [0, 1]
    gw = 0.5 * gw
    left = np.arange(n - 1, dtype=float)[:, None] + s[None, :]
    k1 = tau - 2.0 * left
    k2 = left * (tau - left)
    phi_lo = (1.0 - s)[None, :] * gw[None, :]
    phi_hi = s[None, :] * gw[None, :]
    w1 = np.zeros(n)
    w2 = np.zeros(n)
    w1[:-1] += (k1 * phi_lo).sum(axis=1)
    w1[1:] += (k1 * phi_hi).sum(axis=1)
    w2[:-1] += (k2 * phi_lo).sum(axis=1)
    w2[1:] += (k2 * phi_hi).sum(axis=1)
    w1.setflags(write=False)
    w2.setflags(write=False)
    return w1, w2


def algebraic_f_estimate(window: SampleWindow, alpha: float) -> float:
    """Integral estimate of ``F`` over the window, time measured from the window start.

    Exact (up to rounding) whenever ``y`` is affine and ``u`` constant over the
    window, whatever the number of samples.
    """
    n = len(window)
    h = window.h
    tau = (n - 1) * h
    w1, w2 = _algebraic_weights(n)
    integral = h * h * float(w1 @ window.y) + alpha * h**3 * float(w2 @ window.u)
    return -6.0 / tau**3 * integral


def closed_loop_f_estimate(window: SampleWindow, alpha: float, K_P: float) -> float:
    """Mean of ``ystar_dot - alpha*u - K_P*e`` over the window (trapezoidal rule).

    Only meaningful inside the iP loop; it carries no information about the
    measured output, see the notes in the README.
    """
    g = window.ystar_dot - alpha * window.u - K_P * window.e
    integral = window.h * (g.sum() - 0.5 * (g[0] + g[-1]))
    return float(integral / window.tau)


def crude_f_estimate(y_now: float, y_prev: float, h: float, alpha: float, u_prev: float) -> float:
    if not h > 0:
        raise ValueError(f"h must be > 0, got {h!r}")
    return (y_now - y_prev) / h - alpha * u_prev


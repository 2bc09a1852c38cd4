"""Ramp-metering feedback laws: iP, ALINEA (integral) with anti-windup, discrete PI.

Sign convention: the tracking error is ``e = y - y*`` (measured occupancy minus
setpoint). A positive error therefore calls for less green time.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .estimation import (
    SampleWindow,
    algebraic_f_estimate,
    closed_loop_f_estimate,
    crude_f_estimate,
)
from .network import Ramp, VehicleGeometry

CONTROLLER_KINDS = ("none", "alinea", "ip", "pi")
ESTIMATORS = ("algebraic", "closed_loop", "crude")


class ControlConfigError(ValueError):
    pass


@dataclass(frozen=True)
class IpConfig:
    alpha: float = 30.0
    K_P: float = 0.5

    def __post_init__(self):
        if self.alpha == 0 or not math.isfinite(self.alpha):
            raise ValueError(f"alpha must be finite and nonzero, got {self.alpha!r}")
        if not self.K_P > 0:
            raise ValueError(f"K_P must be > 0 for the error to vanish, got {self.K_P!r}")


def ip_control(F_est: float, ystar_dot: float, e: float, cfg: IpConfig) -> float:
    return -(F_est - ystar_dot + cfg.K_P * e) / cfg.alpha


@dataclass
class PiState:
    k_p: float
    k_i: float
    u_prev: float = 0.0
    e_prev: float = 0.0


def discrete_pi_step(state: PiState, e: float, h: float) -> float:
    """Velocity-form PI; the integral is a left Riemann sum with step ``h``."""
    if not h > 0:
        raise ValueError(f"h must be > 0, got {h!r}")
    u = state.u_prev + state.k_p * (e - state.e_prev) + state.k_i * h * e
    state.u_prev = u
    state.e_prev = e
    return u


def discrete_ip_step(e: float, e_prev: float, u_prev: float, alpha: float, K_P: float, h: float) -> float:
    """iP with ``F`` replaced by the one-step finite-difference estimate."""
    if not h > 0:
        raise ValueError(f"h must be > 0, got {h!r}")
    if alpha == 0:
        raise ValueError("alpha must be nonzero")
    return u_prev - (e - e_prev) / (h * alpha) - K_P / alpha * e


def pi_gains_from_ip(alpha: float, h: float, K_P: float) -> tuple[float, float]:
    """PI gains for which the discrete PI and discrete iP coincide (discrete time only)."""
    if not h > 0:
        raise ValueError(f"h must be > 0, the correspondence has no continuous limit; got {h!r}")
    if alpha == 0:
        raise ValueError("alpha must be nonzero")
    return -1.0 / (alpha * h), -K_P / (alpha * h)


@dataclass
class AlineaState:
    """Integral law ``GD = -K_I * integral(To - To*)`` with conditional integration.

    ``dt`` passed to :func:`alinea_step` is in minutes, so with ``K_I = 1`` an
    occupancy error of 1 % sustained over one 40 s cycle moves the green time
    by 2/3 s.
    """

    K_I: float = 1.0
    integrator: float = 29.0
    gd_min: float = 15.0
    gd_max: float = 29.0


def alinea_step(state: AlineaState, To: float, To_star: float, dt: float) -> float:
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt!r}")
    candidate = state.integrator - state.K_I * (To - To_star) * dt
    # anti-windup: never integrate beyond the actuator range
    state.integrator = min(max(candidate, state.gd_min), state.gd_max)
    return state.integrator


@dataclass
class AdaptiveSetpoint:
    """Occupancy setpoint nudged by the measured speed instead of a critical density."""

    To_star: float
    v_free: float
    delta_plus: float = 0.15
    delta_minus: float = 0.3
    speed_margin: float = 10.0
    clamp: tuple[float, float] = (5.0, 40.0)

    def __post_init__(self):
        lo, hi = self.clamp
        if not lo <= hi:
            raise ValueError(f"setpoint clamp must satisfy lo <= hi, got {self.clamp!r}")
        self.To_star = min(max(self.To_star, lo), hi)

    @property
    def v_threshold(self) -> float:
        return self.v_free - self.speed_margin


def adaptive_setpoint_step(sp: AdaptiveSetpoint, V_measured: float) -> float:
    if V_measured > sp.v_threshold:
        value = sp.To_star + sp.delta_plus
    else:
        value = sp.To_star - sp.delta_minus
    lo, hi = sp.clamp
    sp.To_star = min(max(value, lo), hi)
    return sp.To_star


def queue_length_m(queue_veh: float, geometry: VehicleGeometry = VehicleGeometry()) -> float:
    """Single-lane ramp: every queued vehicle takes one mean vehicle length."""
    return queue_veh * geometry.veh_size_km * 1000.0


def queue_override(ramp: Ramp, queue_m: float) -> bool:
    return queue_m > ramp.queue_override_m


def saturate_green(GD_raw: float, ramp: Ramp, queue_m: float) -> float:
    if queue_override(ramp, queue_m):
        return ramp.cycle
    return min(max(GD_raw, ramp.gd_min), ramp.gd_max)


@dataclass(frozen=True)
class RampMeasurement:
    """Detector values of the controlled (merge) segment over the last cycle."""

    To: float
    V: float
    queue_m: float


@dataclass(frozen=True)
class ControllerSettings:
    kind: str = "ip"
    ip: IpConfig = IpConfig()
    estimator: str = "algebraic"
    tau_cycles: int = 5
    time_unit_s: float = 3600.0
    K_I: float = 1.0
    alinea_initial_gd: Optional[float] = None
    pi_gains: Optional[tuple[float, float]] = None
    initial_setpoint: float = 15.0
    delta_plus: float = 0.15
    delta_minus: float = 0.3
    speed_margin: float = 10.0
    setpoint_clamp: tuple[float, float] = (5.0, 40.0)

    def __post_init__(self):
        if self.kind not in CONTROLLER_KINDS:
            raise ControlConfigError(
                f"unknown controller kind {self.kind!r}; allowed: {', '.join(CONTROLLER_KINDS)}"
            )
        if self.estimator not in ESTIMATORS:
            raise ControlConfigError(
                f"unknown estimator {self.estimator!r}; allowed: {', '.join(ESTIMATORS)}"
            )
        if self.tau_cycles < 1:
            raise ControlConfigError("tau_cycles must be >= 1")
        if not self.time_unit_s > 0:
            raise ControlConfigError("time_unit_s must be > 0")


@dataclass
class RampController:
    """Per-ramp controller state: setpoint, ALINEA integrator, PI memory, iP history.

    At every control instant the history receives the occupancy measured over
    the cycle that just ended together with the green time that was applied
    during that cycle.
    """

    ramp: Ramp
    settings: ControllerSettings
    setpoint: AdaptiveSetpoint
    alinea: AlineaState = field(init=False)
    pi: PiState = field(init=False)
    y_hist: deque = field(init=False)
    u_hist: deque = field(init=False)
    e_hist: deque = field(init=False)
    gd: float = field(init=False)
    override: bool = field(init=False, default=False)
    last_F: float = field(init=False, default=float("nan"))

    def __post_init__(self):
        r, s = self.ramp, self.settings
        gd0 = r.gd_max if s.alinea_initial_gd is None else s.alinea_initial_gd
        self.alinea = AlineaState(s.K_I, min(max(gd0, r.gd_min), r.gd_max), r.gd_min, r.gd_max)
        k_p, k_i = s.pi_gains or pi_gains_from_ip(s.ip.alpha, self.h, s.ip.K_P)
        self.pi = PiState(k_p, k_i, u_prev=r.gd_max)
        n = s.tau_cycles + 1
        self.y_hist = deque(maxlen=n)
        self.u_hist = deque(maxlen=n)
        self.e_hist = deque(maxlen=n)
        self.gd = r.cycle if s.kind == "none" else self.alinea.integrator

    @property
    def h(self) -> float:
        """Control period in the iP/PI time unit."""
        return self.ramp.cycle / self.settings.time_unit_s

    def estimate_F(self) -> Optional[float]:
        s = self.settings
        if len(self.y_hist) < 2:
            return None
        if s.estimator == "crude":
            return crude_f_estimate(
                self.y_hist[-1], self.y_hist[-2], self.h, s.ip.alpha, self.u_hist[-1]
            )
        window = SampleWindow(self.h, list(self.y_hist), list(self.u_hist), e=list(self.e_hist))
        if s.estimator == "algebraic":
            return algebraic_f_estimate(window, s.ip.alpha)
        return closed_loop_f_estimate(window, s.ip.alpha, s.ip.K_P)

    def update(self, m: RampMeasurement) -> float:
        """One control period: adapt the setpoint, compute and saturate the green time."""
        s, r = self.settings, self.ramp
        if s.kind == "none":
            self.gd = r.cycle
            self.override = False
            return self.gd
        adaptive_setpoint_step(self.setpoint, m.V)
        e = m.To - self.setpoint.To_star
        self.y_hist.append(m.To)
        self.u_hist.append(self.gd)
        self.e_hist.append(e)
        if s.kind == "alinea":
            raw = alinea_step(self.alinea, m.To, self.setpoint.To_star, r.cycle / 60.0)
        elif s.kind == "pi":
            self.pi.u_prev = self.gd  # velocity form on the applied value: no windup
            if len(self.e_hist) == 1:
                self.pi.e_prev = e
            raw = discrete_pi_step(self.pi, e, self.h)
        else:
            F = self.estimate_F()
            self.last_F = float("nan") if F is None else F
            raw = self.gd if F is None else ip_control(F, 0.0, e, s.ip)
        self.override = queue_override(r, m.queue_m)
        self.gd = saturate_green(raw, r, m.queue_m)
        return self.gd


def ramp_controller_update(
    kind: str, measurements: Sequence[RampMeasurement], states: Sequence[RampController]
) -> list[float]:
    if kind not in CONTROLLER_KINDS:
        raise ControlConfigError(
            f"unknown controller kind {kind!r}; allowed: {', '.join(CONTROLLER_KINDS)}"
        )
    if len(measurements) != len(states):
        raise ValueError("one measurement per ramp controller is required")
    return [c.update(m) for c, m in zip(states, measurements)]


def simulate_ultra_local_loop(
    F: Callable[[float], float],
    alpha_true: float,
    cfg: IpConfig,
    y0: float,
    ystar: Callable[[float], float] = lambda t: 0.0,
    ystar_dot: Callable[[float], float] = lambda t: 0.0,
    t_end: float = 1.0,
    dt: float = 1e-3,
    estimator: str = "exact",
    tau: Optional[float] = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Close the iP loop around the plant ``dy/dt = F(t) + alpha_true*u``.

    ``estimator="exact"`` feeds the true ``F(t)`` to the controller (which then
    uses ``cfg.alpha``); ``"algebraic"`` estimates it online over a sliding
    window of length ``tau`` with the controller's own ``cfg.alpha``. The plant
    is advanced with a zero-order hold on ``u``. Returns ``(t, e)``.
    """
    if estimator not in ("exact", "algebraic"):
        raise ValueError(f"unknown estimator {estimator!r}")
    n = int(round(t_end / dt))
    t = np.arange(n + 1) * dt
    e = np.empty(n + 1)
    y = y0
    if estimator == "algebraic":
        m = max(2, int(round((tau if tau is not None else 20 * dt) / dt)) + 1)
        # open-loop history (u = 0) leading up to y0 at t = 0
        ys = deque([0.0] * m, maxlen=m)
        back = y0
        for j in range(m - 1, -1, -1):
            ys[j] = back
            back -= dt * F(-(m - j) * dt)
        us = deque([0.0] * m, maxlen=m)
    for k in range(n + 1):
        tk = t[k]
        e[k] = y - ystar(tk)
        if k == n:
            break
        if estimator == "exact":
            F_est = F(tk)
        else:
            F_est = algebraic_f_estimate(SampleWindow(dt, np.array(ys), np.array(us)), cfg.alpha)
        u = ip_control(F_est, ystar_dot(tk), e[k], cfg)
        y = y + dt * (F(tk) + alpha_true * u)
        if estimator == "algebraic":
            ys.append(y)
            us.append(u)
    return t, e

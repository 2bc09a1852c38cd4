"""Segment-level conservation scheme for the motorway with metered on-ramps.

Each segment is one finite volume. Flows between volumes are the upstream
sending flow ``rho * v / 60`` limited by the downstream space, and the on-ramp
flow joins the mainline at the first segment it merges into. Vehicles that
cannot enter wait in a queue: one per ramp plus one at the mainline origin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .control import (
    AdaptiveSetpoint,
    ControllerSettings,
    RampController,
    RampMeasurement,
    queue_length_m,
)
from .network import Network, critical_occupancy, flow_capacity, rho_max as _rho_max

CONSERVATION_TOL = 1e-9


class SimulationFault(RuntimeError):
    """A flow computation produced an inadmissible state."""

    def __init__(self, message: str, step: Optional[int] = None, entity: Optional[str] = None):
        self.step = step
        self.entity = entity
        where = []
        if step is not None:
            where.append(f"step {step}")
        if entity is not None:
            where.append(entity)
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


class InvalidScenario(ValueError):
    def __init__(self, errors: Sequence[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass(frozen=True)
class DemandProfile:
    """Piecewise-linear flow [Veh/min] over time [s], held constant outside its span."""

    times_s: tuple[float, ...]
    flows_vpm: tuple[float, ...]

    def __post_init__(self):
        if len(self.times_s) != len(self.flows_vpm) or not self.times_s:
            raise ValueError("demand profile needs matching, non-empty time and flow lists")
        if any(b <= a for a, b in zip(self.times_s, self.times_s[1:])):
            raise ValueError("demand profile times must be strictly increasing")
        if any(f < 0 for f in self.flows_vpm):
            raise ValueError("demand flows must be >= 0")

    @classmethod
    def constant(cls, flow_vpm: float) -> "DemandProfile":
        return cls((0.0,), (float(flow_vpm),))

    def at(self, t_s: float) -> float:
        return float(np.interp(t_s, self.times_s, self.flows_vpm))

    def sample(self, t_s: np.ndarray) -> np.ndarray:
        return np.interp(t_s, self.times_s, self.flows_vpm)


@dataclass(frozen=True)
class Incident:
    segment: int
    lanes: int
    start_s: float = 0.0
    end_s: float = math.inf

    def active(self, t_s: float) -> bool:
        return self.start_s <= t_s < self.end_s


@dataclass(frozen=True)
class Noise:
    """Zero-mean uniform noise on the detector values handed to the controllers."""

    seed: int = 0
    occupancy_pct: float = 0.0
    speed_kmh: float = 0.0


@dataclass(frozen=True)
class Scenario:
    network: Network
    mainline_demand: DemandProfile
    ramp_demands: tuple[DemandProfile, ...]
    horizon_s: float
    controller: ControllerSettings = ControllerSettings()
    incidents: tuple[Incident, ...] = ()
    dt_s: float = 1.0
    log_interval_s: float = 40.0
    exit_capacity_vpm: Optional[float] = None
    noise: Noise = Noise()
    v_free_kmh: Optional[tuple[float, ...]] = None
    name: str = "scenario"
    description: str = ""
    output_dir: Optional[str] = None

    def __post_init__(self):
        errors = scenario_errors(self)
        if errors:
            raise InvalidScenario(errors)

    @property
    def cycle_s(self) -> float:
        return self.network.ramps[0].cycle if self.network.ramps else 40.0


def _divides(small: float, big: float) -> bool:
    ratio = big / small
    return abs(ratio - round(ratio)) < 1e-9 and round(ratio) >= 1


def scenario_errors(sc: Scenario) -> list[str]:
    errors = []
    net = sc.network
    if len(sc.ramp_demands) != len(net.ramps):
        errors.append(f"{len(net.ramps)} ramps but {len(sc.ramp_demands)} ramp demand profiles")
    if not sc.dt_s > 0:
        errors.append("dt_s must be > 0")
    if not sc.horizon_s > 0:
        errors.append("horizon_s must be > 0")
    cycles = {r.cycle for r in net.ramps}
    if len(cycles) > 1:
        errors.append("all ramps must share one signal cycle")
    if sc.dt_s > 0:
        for c in cycles:
            if not _divides(sc.dt_s, c):
                errors.append(f"dt_s={sc.dt_s} must divide the control cycle {c}")
        if not _divides(sc.dt_s, sc.log_interval_s):
            errors.append(f"log_interval_s={sc.log_interval_s} must be a multiple of dt_s")
        if not _divides(sc.dt_s, sc.horizon_s):
            errors.append(f"horizon_s={sc.horizon_s} must be a multiple of dt_s")
    for c in cycles:
        if sc.log_interval_s > 0 and not _divides(sc.log_interval_s, c):
            errors.append(f"log_interval_s={sc.log_interval_s} must divide the control cycle {c}")
    for k, inc in enumerate(sc.incidents):
        if not 0 <= inc.segment < len(net.segments):
            errors.append(f"incident {k}: segment {inc.segment} does not exist")
        elif not 1 <= inc.lanes <= net.segments[inc.segment].lanes:
            errors.append(
                f"incident {k}: lanes must lie in [1, {net.segments[inc.segment].lanes}], got {inc.lanes}"
            )
        if not inc.end_s > inc.start_s:
            errors.append(f"incident {k}: end_s must exceed start_s")
    if sc.exit_capacity_vpm is not None and sc.exit_capacity_vpm < 0:
        errors.append("exit_capacity_vpm must be >= 0")
    if sc.v_free_kmh is not None and len(sc.v_free_kmh) != len(net.ramps):
        errors.append("v_free_kmh needs one value per ramp")
    return errors


# --- elementary flow operations -------------------------------------------


def segment_density_step(
    rho: float, Q_in: float, Q_out: float, L: float, dt_min: float, rho_cap: float = math.inf
) -> float:
    """Advance one segment by ``dt_min`` minutes; flows in Veh/min, ``L`` in km."""
    if not L > 0 or not dt_min > 0:
        raise ValueError("L and dt must be > 0")
    new = rho + dt_min / L * (Q_in - Q_out)
    if new < -CONSERVATION_TOL or new > max(rho_cap, rho) + CONSERVATION_TOL:
        raise SimulationFault(f"density {new!r} outside [0, {rho_cap!r}]")
    return min(max(new, 0.0), max(rho_cap, rho))


def sending_flow(rho: float, v_kmh: float, L: float, dt_min: float) -> float:
    return min(rho * v_kmh / 60.0, rho * L / dt_min)


def receiving_flow(rho: float, rho_cap: float, L: float, dt_min: float) -> float:
    return max(0.0, (rho_cap - rho) * L / dt_min)


def metered_ramp_capacity(GD: float, cycle: float, sat_rate: float) -> float:
    if not 0 <= GD <= cycle:
        raise ValueError(f"green duration {GD!r} outside [0, {cycle!r}]")
    return sat_rate * GD / cycle


def merge_flows(main_demand: float, ramp_demand: float, supply: float) -> tuple[float, float]:
    """Split scarce downstream space between mainline and ramp in proportion to demand."""
    total = main_demand + ramp_demand
    if total <= supply:
        return main_demand, ramp_demand
    share = supply / total
    return main_demand * share, ramp_demand * share


def ramp_queue_step(queue_veh: float, demand: float, admitted: float, dt_min: float) -> float:
    if admitted > demand + queue_veh / dt_min + CONSERVATION_TOL:
        raise SimulationFault(
            f"admitted flow {admitted!r} exceeds demand {demand!r} plus queued vehicles"
        )
    return max(0.0, queue_veh + (demand - admitted) * dt_min)


def apply_incident(network: Network, incidents: Sequence[Incident], t_s: float) -> list[int]:
    lanes = [seg.lanes for seg in network.segments]
    for inc in incidents:
        if inc.active(t_s):
            lanes[inc.segment] = min(lanes[inc.segment], inc.lanes)
    return lanes


# --- trajectory log ---------------------------------------------------------


@dataclass
class TrajectoryLog:
    """Interval-averaged simulation record (one row per ``interval_s``).

    Flows, occupancies, speeds, vehicle counts and queues are means over the
    interval, so sums of ``value * interval`` are exact totals. Green times and
    override flags are the values in force during the interval.
    """

    interval_s: float
    dt_s: float
    t_s: np.ndarray
    segment_names: tuple[str, ...]
    lengths_km: tuple[float, ...]
    seg_Q: np.ndarray
    seg_To: np.ndarray
    seg_V: np.ndarray
    seg_veh: np.ndarray
    ramp_names: tuple[str, ...]
    ramp_GD: np.ndarray
    ramp_override: np.ndarray
    ramp_setpoint: np.ndarray
    ramp_queue_m: np.ndarray
    ramp_veh: np.ndarray
    ramp_admitted: np.ndarray
    ramp_demand: np.ndarray
    origin_demand: np.ndarray
    origin_admitted: np.ndarray
    origin_queue_m: np.ndarray
    origin_veh: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.t_s.shape[0]

    @property
    def outflow(self) -> np.ndarray:
        return self.seg_Q[:, -1]

    @property
    def horizon_s(self) -> float:
        return self.n * self.interval_s


@dataclass
class SimulationResult:
    log: TrajectoryLog
    balance_drift_veh: float
    arrived_veh: float
    exited_veh: float

    @property
    def relative_drift(self) -> float:
        return self.balance_drift_veh / max(1.0, self.arrived_veh)


def _make_controllers(sc: Scenario) -> list[RampController]:
    s = sc.controller
    controllers = []
    for j, ramp in enumerate(sc.network.ramps):
        if sc.v_free_kmh is not None:
            v_free = sc.v_free_kmh[j]
        else:
            v_free = sc.network.segments[ramp.merge_segment].diagram.free_speed
        sp = AdaptiveSetpoint(
            s.initial_setpoint, v_free, s.delta_plus, s.delta_minus, s.speed_margin, s.setpoint_clamp
        )
        controllers.append(RampController(ramp, s, sp))
    return controllers


def simulate(sc: Scenario) -> SimulationResult:
    net = sc.network
    segs = net.segments
    ramps = net.ramps
    size = net.geometry.veh_size_km
    S, R = len(segs), len(ramps)
    dt_s = sc.dt_s
    dt_min = dt_s / 60.0
    n_steps = int(round(sc.horizon_s / dt_s))
    per_rec = int(round(sc.log_interval_s / dt_s))
    per_cycle = int(round(sc.cycle_s / dt_s))
    n_rec = -(-n_steps // per_rec)

    L = [s.length_km for s in segs]
    diagrams = [s.diagram for s in segs]
    ramp_at = [-1] * S
    for j, r in enumerate(ramps):
        ramp_at[r.merge_segment] = j

    times = np.arange(n_steps) * dt_s
    d_main = sc.mainline_demand.sample(times).tolist()
    d_ramp = [p.sample(times).tolist() for p in sc.ramp_demands]

    change_times = sorted({t for inc in sc.incidents for t in (inc.start_s, inc.end_s) if math.isfinite(t)})
    lanes = apply_incident(net, sc.incidents, 0.0)
    cap = [_rho_max(l, size) for l in lanes]
    # the mainline origin cannot push more than the first segment could carry
    origin_max = flow_capacity(diagrams[0], lanes[0], size)

    rho = [s.rho for s in segs]
    for i in range(S):
        if rho[i] > cap[i] + CONSERVATION_TOL:
            raise SimulationFault(f"initial density above the jam density of segment {i}")
    queue = [r.queue_veh for r in ramps]
    origin_q = 0.0

    controllers = _make_controllers(sc)
    kind = sc.controller.kind
    rng = np.random.default_rng(sc.noise.seed)
    gd = [c.gd for c in controllers]
    ramp_cap = [metered_ramp_capacity(g, r.cycle, r.sat_rate) for g, r in zip(gd, ramps)]
    override = [False] * R

    # per-cycle detector accumulators for the controlled segments
    meas_To = [0.0] * R
    meas_V = [0.0] * R
    meas_n = 0

    log = TrajectoryLog(
        interval_s=sc.log_interval_s,
        dt_s=dt_s,
        t_s=np.arange(n_rec) * sc.log_interval_s,
        segment_names=tuple(s.name or f"S{i + 1}" for i, s in enumerate(segs)),
        lengths_km=tuple(L),
        seg_Q=np.zeros((n_rec, S)),
        seg_To=np.zeros((n_rec, S)),
        seg_V=np.zeros((n_rec, S)),
        seg_veh=np.zeros((n_rec, S)),
        ramp_names=tuple(r.name or f"R{j + 1}" for j, r in enumerate(ramps)),
        ramp_GD=np.zeros((n_rec, R)),
        ramp_override=np.zeros((n_rec, R), dtype=bool),
        ramp_setpoint=np.zeros((n_rec, R)),
        ramp_queue_m=np.zeros((n_rec, R)),
        ramp_veh=np.zeros((n_rec, R)),
        ramp_admitted=np.zeros((n_rec, R)),
        ramp_demand=np.zeros((n_rec, R)),
        origin_demand=np.zeros(n_rec),
        origin_admitted=np.zeros(n_rec),
        origin_queue_m=np.zeros(n_rec),
        origin_veh=np.zeros(n_rec),
        meta={
            "scenario": sc.name,
            "controller": kind,
            "dt_s": dt_s,
            "seed": sc.noise.seed,
            "critical_occupancy_pct": [
                critical_occupancy(s.diagram, s.lanes, size) for s in segs
            ],
        },
    )
    acc_Q = [0.0] * S
    acc_To = [0.0] * S
    acc_V = [0.0] * S
    acc_veh = [0.0] * S
    acc_rq = [0.0] * R
    acc_radm = [0.0] * R
    acc_rdem = [0.0] * R
    acc_o = [0.0, 0.0, 0.0]  # origin queue, admitted, demand

    initial_stock = sum(r_ * l_ for r_, l_ in zip(rho, L)) + sum(queue)
    arrived = 0.0
    exited = 0.0
    drift = 0.0
    next_change = 0
    To = [0.0] * S
    V = [0.0] * S
    send = [0.0] * S
    recv = [0.0] * S
    inflow = [0.0] * S
    outflow = [0.0] * S
    rec = 0

    for k in range(n_steps):
        t = k * dt_s
        if next_change < len(change_times) and t >= change_times[next_change]:
            while next_change < len(change_times) and t >= change_times[next_change]:
                next_change += 1
            lanes = apply_incident(net, sc.incidents, t)
            cap = [_rho_max(l, size) for l in lanes]
            origin_max = flow_capacity(diagrams[0], lanes[0], size)

        for i in range(S):
            r_i = rho[i]
            to = r_i / cap[i] * 100.0
            v = diagrams[i].speed(r_i, to)
            To[i] = to
            V[i] = v
            send[i] = sending_flow(r_i, v, L[i], dt_min)
            recv[i] = receiving_flow(r_i, cap[i], L[i], dt_min)

        if k % per_cycle == 0 and R:
            if meas_n:
                m_To = [x / meas_n for x in meas_To]
                m_V = [x / meas_n for x in meas_V]
            else:
                m_To = [To[r.merge_segment] for r in ramps]
                m_V = [V[r.merge_segment] for r in ramps]
            if sc.noise.occupancy_pct > 0:
                a = sc.noise.occupancy_pct
                m_To = [max(0.0, x + rng.uniform(-a, a)) for x in m_To]
            if sc.noise.speed_kmh > 0:
                a = sc.noise.speed_kmh
                m_V = [max(0.0, x + rng.uniform(-a, a)) for x in m_V]
            for j, c in enumerate(controllers):
                qm = queue_length_m(queue[j], net.geometry)
                gd[j] = c.update(RampMeasurement(m_To[j], m_V[j], qm))
                override[j] = c.override
                ramp_cap[j] = metered_ramp_capacity(gd[j], ramps[j].cycle, ramps[j].sat_rate)
            meas_To = [0.0] * R
            meas_V = [0.0] * R
            meas_n = 0

        dm = d_main[k]
        upstream = min(dm + origin_q / dt_min, origin_max)
        ramp_in = [0.0] * R
        for i in range(S):
            j = ramp_at[i]
            if j >= 0:
                rd = min(ramp_cap[j], d_ramp[j][k] + queue[j] / dt_min)
                main_in, ramp_in[j] = merge_flows(upstream, rd, recv[i])
            else:
                main_in = min(upstream, recv[i])
            if i == 0:
                origin_in = main_in
            else:
                outflow[i - 1] = main_in
            inflow[i] = main_in + (ramp_in[j] if j >= 0 else 0.0)
            upstream = send[i]
        out_last = send[S - 1]
        if sc.exit_capacity_vpm is not None:
            out_last = min(out_last, sc.exit_capacity_vpm)
        outflow[S - 1] = out_last

        # interval sums: state at the start of the step, flows during the step
        for i in range(S):
            acc_Q[i] += outflow[i]
            acc_To[i] += To[i]
            acc_V[i] += V[i]
            acc_veh[i] += rho[i] * L[i]
        for j in range(R):
            acc_rq[j] += queue[j]
            acc_radm[j] += ramp_in[j]
            acc_rdem[j] += d_ramp[j][k]
        acc_o[0] += origin_q
        acc_o[1] += origin_in
        acc_o[2] += dm

        for i in range(S):
            try:
                rho[i] = segment_density_step(rho[i], inflow[i], outflow[i], L[i], dt_min, cap[i])
            except SimulationFault as exc:
                raise SimulationFault(str(exc.args[0]), k, log.segment_names[i]) from None
        try:
            origin_q = ramp_queue_step(origin_q, dm, origin_in, dt_min)
            for j in range(R):
                queue[j] = ramp_queue_step(queue[j], d_ramp[j][k], ramp_in[j], dt_min)
        except SimulationFault as exc:
            raise SimulationFault(str(exc.args[0]), k, "queue") from None

        arrived += (dm + sum(d_ramp[j][k] for j in range(R))) * dt_min
        exited += out_last * dt_min

        for j, r in enumerate(ramps):
            meas_To[j] += To[r.merge_segment]
            meas_V[j] += V[r.merge_segment]
        meas_n += 1

        if (k + 1) % per_rec == 0 or k == n_steps - 1:
            m = (k % per_rec) + 1
            log.seg_Q[rec] = acc_Q
            log.seg_To[rec] = acc_To
            log.seg_V[rec] = acc_V
            log.seg_veh[rec] = acc_veh
            log.seg_Q[rec] /= m
            log.seg_To[rec] /= m
            log.seg_V[rec] /= m
            log.seg_veh[rec] /= m
            if R:
                log.ramp_GD[rec] = gd
                log.ramp_override[rec] = override
                log.ramp_setpoint[rec] = [c.setpoint.To_star for c in controllers]
                log.ramp_veh[rec] = acc_rq
                log.ramp_veh[rec] /= m
                log.ramp_queue_m[rec] = log.ramp_veh[rec] * size * 1000.0
                log.ramp_admitted[rec] = acc_radm
                log.ramp_admitted[rec] /= m
                log.ramp_demand[rec] = acc_rdem
                log.ramp_demand[rec] /= m
            log.origin_veh[rec] = acc_o[0] / m
            log.origin_queue_m[rec] = acc_o[0] / m * size * 1000.0
            log.origin_admitted[rec] = acc_o[1] / m
            log.origin_demand[rec] = acc_o[2] / m
            acc_Q = [0.0] * S
            acc_To = [0.0] * S
            acc_V = [0.0] * S
            acc_veh = [0.0] * S
            acc_rq = [0.0] * R
            acc_radm = [0.0] * R
            acc_rdem = [0.0] * R
            acc_o = [0.0, 0.0, 0.0]
            rec += 1

            stock = sum(r_ * l_ for r_, l_ in zip(rho, L)) + sum(queue) + origin_q
            drift = max(drift, abs(stock - initial_stock - (arrived - exited)))

    return SimulationResult(log, drift, arrived, exited)

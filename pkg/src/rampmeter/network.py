"""Motorway network description and fundamental diagrams.

Units used throughout the package:

* length: km
* density: Veh/km, aggregated over all lanes of a segment
* occupancy: percent of the jam density ``lanes / veh_size_km``
* speed: km/h
* flow: Veh/min
* durations on ramps (green time, cycle): s
"""

from __future__ import annotations

import bisect
import csv
import math
from functools import lru_cache
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy as np

DEFAULT_VEH_SIZE_KM = 5.5e-3


class NetworkError(ValueError):
    """Raised when a network fails validation; ``errors`` lists every problem."""

    def __init__(self, errors: Sequence[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


def _require_positive(**params: float) -> None:
    for name, value in params.items():
        if not value > 0:
            raise ValueError(f"{name} must be > 0, got {value!r}")


def speed_greenshield(rho: float, v_f: float, rho_m: float) -> float:
    _require_positive(v_f=v_f, rho_m=rho_m)
    if rho < 0:
        raise ValueError(f"density must be >= 0, got {rho!r}")
    return max(0.0, v_f * (1.0 - rho / rho_m))


def speed_may(rho: float, v_f: float, a: float, rho_c: float) -> float:
    _require_positive(v_f=v_f, a=a, rho_c=rho_c)
    if rho < 0:
        raise ValueError(f"density must be >= 0, got {rho!r}")
    return v_f * math.exp(-((rho / rho_c) ** a) / a)


def occupancy(rho: float, lanes: int, veh_size_km: float = DEFAULT_VEH_SIZE_KM) -> float:
    """Occupancy in percent: density over the jam density of ``lanes`` lanes."""
    if lanes <= 0:
        raise ValueError(f"lanes must be >= 1, got {lanes!r}")
    _require_positive(veh_size_km=veh_size_km)
    return rho / (lanes / veh_size_km) * 100.0


def rho_max(lanes: int, veh_size_km: float = DEFAULT_VEH_SIZE_KM) -> float:
    return lanes / veh_size_km


@dataclass(frozen=True)
class Greenshield:
    v_f: float
    rho_m: float
    kind = "greenshield"

    def __post_init__(self):
        _require_positive(v_f=self.v_f, rho_m=self.rho_m)

    def speed(self, rho: float, to_pct: float) -> float:
        return speed_greenshield(rho, self.v_f, self.rho_m)

    @property
    def free_speed(self) -> float:
        return self.v_f


@dataclass(frozen=True)
class May:
    v_f: float
    a: float
    rho_c: float
    kind = "may"

    def __post_init__(self):
        _require_positive(v_f=self.v_f, a=self.a, rho_c=self.rho_c)

    def speed(self, rho: float, to_pct: float) -> float:
        return speed_may(rho, self.v_f, self.a, self.rho_c)

    @property
    def free_speed(self) -> float:
        return self.v_f


@dataclass(frozen=True)
class Tabulated:
    """Speed as a piecewise-linear function of occupancy, clamped past the last knot."""

    knots: tuple[tuple[float, float], ...]
    _to: tuple[float, ...] = field(init=False, repr=False, compare=False)
    _v: tuple[float, ...] = field(init=False, repr=False, compare=False)
    kind = "tabulated"

    def __post_init__(self):
        knots = tuple((float(o), float(v)) for o, v in self.knots)
        if len(knots) < 2:
            raise ValueError("tabulated diagram needs at least 2 knots")
        if knots[0][0] != 0.0:
            raise ValueError(f"first knot must be at To = 0, got {knots[0][0]!r}")
        for (o0, _), (o1, _) in zip(knots, knots[1:]):
            if not o1 > o0:
                raise ValueError("knot occupancies must be strictly increasing")
        if any(not v >= 0 for _, v in knots):
            raise ValueError("knot speeds must be >= 0")
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "_to", tuple(o for o, _ in knots))
        object.__setattr__(self, "_v", tuple(v for _, v in knots))

    def speed(self, rho: float, to_pct: float) -> float:
        return eval_tabulated(self, to_pct)

    @property
    def free_speed(self) -> float:
        return self._v[0]


FundamentalDiagram = Union[Greenshield, May, Tabulated]


def eval_tabulated(diagram: Tabulated, to_pct: float) -> float:
    if to_pct < 0:
        raise ValueError(f"occupancy must be >= 0, got {to_pct!r}")
    xs, vs = diagram._to, diagram._v
    if to_pct >= xs[-1]:
        return vs[-1]
    i = bisect.bisect_right(xs, to_pct)
    x0, x1 = xs[i - 1], xs[i]
    w = (to_pct - x0) / (x1 - x0)
    return vs[i - 1] + w * (vs[i] - vs[i - 1])


def load_diagram_csv(path: Union[str, Path]) -> Tabulated:
    """Read a ``To_percent,speed_kmh`` table."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["To_percent", "speed_kmh"]:
            raise ValueError(
                f"{path}: expected header 'To_percent,speed_kmh', got {reader.fieldnames!r}"
            )
        knots = [(float(row["To_percent"]), float(row["speed_kmh"])) for row in reader]
    return Tabulated(tuple(knots))


def write_diagram_csv(diagram: Tabulated, path: Union[str, Path]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["To_percent", "speed_kmh"])
        for o, v in diagram.knots:
            writer.writerow([repr(o), repr(v)])


def synthetic_diagram(
    v_f: float,
    to_crit: float,
    a: float = 3.0,
    discharge_ratio: float = 0.85,
    step_pct: float = 1.0,
) -> Tabulated:
    """Tabulate a May-shaped speed/occupancy curve as a stand-in for measured data.

    Past the critical occupancy the May speed is followed until the implied flow
    has fallen to ``discharge_ratio`` of the peak flow; from there on speed
    follows the constant-flow hyperbola, so a saturated segment still discharges
    (a capacity drop rather than gridlock).
    """
    _require_positive(v_f=v_f, to_crit=to_crit, a=a, step_pct=step_pct)
    if not 0 < discharge_ratio <= 1:
        raise ValueError("discharge_ratio must lie in (0, 1]")
    peak = to_crit * v_f * math.exp(-1.0 / a)  # To * v at the critical occupancy
    floor = discharge_ratio * peak
    n = int(round(100.0 / step_pct))
    knots = []
    for i in range(n + 1):
        to = i * step_pct
        v = v_f * math.exp(-((to / to_crit) ** a) / a)
        if to > to_crit and to * v < floor:
            v = floor / to
        knots.append((round(to, 9), round(v, 6)))
    return Tabulated(tuple(knots))


def _flow_curve(diagram: FundamentalDiagram, lanes: int, veh_size_km: float):
    to = np.linspace(0.0, 100.0, 20001)
    if isinstance(diagram, Tabulated):
        to = np.union1d(to, np.asarray(diagram._to))
    jam = rho_max(lanes, veh_size_km)
    flow = np.array([t / 100.0 * jam * diagram.speed(t / 100.0 * jam, t) / 60.0 for t in to])
    return to, flow


@lru_cache(maxsize=256)
def flow_capacity(diagram: FundamentalDiagram, lanes: int, veh_size_km: float = DEFAULT_VEH_SIZE_KM) -> float:
    """Largest equilibrium flow [Veh/min] over occupancies in [0, 100] (grid of 0.005 %)."""
    return float(_flow_curve(diagram, lanes, veh_size_km)[1].max())


@lru_cache(maxsize=256)
def critical_occupancy(diagram: FundamentalDiagram, lanes: int, veh_size_km: float = DEFAULT_VEH_SIZE_KM) -> float:
    """Occupancy [%] at which the equilibrium flow peaks."""
    to, flow = _flow_curve(diagram, lanes, veh_size_km)
    return float(to[int(np.argmax(flow))])


@dataclass(frozen=True)
class VehicleGeometry:
    veh_size_km: float = DEFAULT_VEH_SIZE_KM


@dataclass(frozen=True)
class Segment:
    length_km: float
    lanes: int
    diagram: FundamentalDiagram
    rho: float = 0.0
    name: str = ""


@dataclass(frozen=True)
class Ramp:
    merge_segment: int
    queue_veh: float = 0.0
    sat_rate: float = 30.0
    gd_min: float = 15.0
    gd_max: float = 29.0
    cycle: float = 40.0
    queue_override_m: float = 200.0
    name: str = ""


@dataclass(frozen=True)
class Network:
    segments: tuple[Segment, ...]
    ramps: tuple[Ramp, ...]
    geometry: VehicleGeometry = VehicleGeometry()

    def rho_max(self, i: int, lanes: int | None = None) -> float:
        seg = self.segments[i]
        return rho_max(seg.lanes if lanes is None else lanes, self.geometry.veh_size_km)


def network_errors(
    segments: Sequence[Segment], ramps: Sequence[Ramp], geometry: VehicleGeometry
) -> list[str]:
    errors = []
    if not geometry.veh_size_km > 0:
        errors.append(f"geometry: veh_size_km must be > 0, got {geometry.veh_size_km!r}")
    if not segments:
        errors.append("network has no segments")
    for i, seg in enumerate(segments):
        if not seg.length_km > 0:
            errors.append(f"segment {i}: length_km must be > 0, got {seg.length_km!r}")
        if not (isinstance(seg.lanes, int) and seg.lanes >= 1):
            errors.append(f"segment {i}: lanes must be an integer >= 1, got {seg.lanes!r}")
        elif geometry.veh_size_km > 0:
            cap = rho_max(seg.lanes, geometry.veh_size_km)
            if not 0 <= seg.rho <= cap:
                errors.append(f"segment {i}: rho must lie in [0, {cap:g}], got {seg.rho!r}")
    merged = set()
    for j, ramp in enumerate(ramps):
        if not 0 <= ramp.merge_segment < len(segments):
            errors.append(
                f"ramp {j}: merge_segment {ramp.merge_segment} does not exist "
                f"(network has {len(segments)} segments)"
            )
        elif ramp.merge_segment in merged:
            errors.append(f"ramp {j}: segment {ramp.merge_segment} already has a ramp")
        else:
            merged.add(ramp.merge_segment)
        if ramp.queue_veh < 0:
            errors.append(f"ramp {j}: queue_veh must be >= 0, got {ramp.queue_veh!r}")
        if not ramp.sat_rate > 0:
            errors.append(f"ramp {j}: sat_rate must be > 0, got {ramp.sat_rate!r}")
        if not 0 <= ramp.gd_min <= ramp.gd_max <= ramp.cycle:
            errors.append(
                f"ramp {j}: need 0 <= gd_min <= gd_max <= cycle, got "
                f"{ramp.gd_min!r}, {ramp.gd_max!r}, {ramp.cycle!r}"
            )
        if ramp.queue_override_m < 0:
            errors.append(f"ramp {j}: queue_override_m must be >= 0")
    return errors


def validate_network(
    segments: Sequence[Segment],
    ramps: Sequence[Ramp],
    geometry: VehicleGeometry = VehicleGeometry(),
) -> Network:
    errors = network_errors(segments, ramps, geometry)
    if errors:
        raise NetworkError(errors)
    return Network(tuple(segments), tuple(ramps), geometry)


# Reference motorway: 7 segments, ramps merging into S1, S4 and S7.
REFERENCE_LENGTHS_KM = (4.7, 0.6, 1.4, 1.7, 3.7, 0.6, 0.9)
REFERENCE_LANES = (3, 3, 3, 3, 3, 3, 4)
REFERENCE_RAMP_SEGMENTS = (0, 3, 6)
# (free speed km/h, critical occupancy %) of the synthetic per-segment diagrams
REFERENCE_DIAGRAM_PARAMS = (
    (105.0, 20.0),
    (100.0, 18.0),
    (95.0, 22.0),
    (100.0, 20.0),
    (110.0, 17.0),
    (90.0, 24.0),
    (100.0, 19.0),
)


def reference_network(queue_override_m: float = 200.0) -> Network:
    segments = [
        Segment(length, lanes, synthetic_diagram(v_f, to_c), name=f"S{i + 1}")
        for i, (length, lanes, (v_f, to_c)) in enumerate(
            zip(REFERENCE_LENGTHS_KM, REFERENCE_LANES, REFERENCE_DIAGRAM_PARAMS)
        )
    ]
    ramps = [
        Ramp(seg, queue_override_m=queue_override_m, name=f"R{k + 1}")
        for k, seg in enumerate(REFERENCE_RAMP_SEGMENTS)
    ]
    return validate_network(segments, ramps)

"""Scenario documents: strict JSON schema, conversion to :class:`Scenario`, and back."""

from __future__ import annotations

import json
import math
import re
from importlib import resources
from pathlib import Path
from typing import Annotated, Any, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .control import ControllerSettings, IpConfig
from .network import (
    DEFAULT_VEH_SIZE_KM,
    Greenshield,
    May,
    Ramp,
    Segment,
    Tabulated,
    VehicleGeometry,
    load_diagram_csv,
    Network,
    network_errors,
)
from .simulation import DemandProfile, Incident, InvalidScenario, Noise, Scenario

PRESETS = ("paper-network", "paper-incident")


class ScenarioError(ValueError):
    """Every problem found in a scenario document, each as ``"path: message"``."""

    def __init__(self, errors: list[str], source: str = ""):
        self.errors = list(errors)
        self.source = source
        head = f"{source}: " if source else ""
        super().__init__(head + "invalid scenario\n" + "\n".join(f"  {e}" for e in self.errors))


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


PositiveFloat = Annotated[float, Field(gt=0)]
NonNegFloat = Annotated[float, Field(ge=0)]


class GreenshieldDoc(_Strict):
    kind: Literal["greenshield"]
    v_f: PositiveFloat
    rho_m: PositiveFloat


class MayDoc(_Strict):
    kind: Literal["may"]
    v_f: PositiveFloat
    a: PositiveFloat
    rho_c: PositiveFloat


class TabulatedDoc(_Strict):
    """Either inline ``knots`` or a ``csv`` path relative to the scenario file."""

    kind: Literal["tabulated"]
    knots: Optional[list[tuple[NonNegFloat, NonNegFloat]]] = None
    csv: Optional[str] = None


DiagramDoc = Annotated[Union[GreenshieldDoc, MayDoc, TabulatedDoc], Field(discriminator="kind")]


class SegmentDoc(_Strict):
    name: str = ""
    length_km: PositiveFloat
    lanes: Annotated[int, Field(ge=1)]
    rho: NonNegFloat = 0.0
    diagram: DiagramDoc


class RampDoc(_Strict):
    name: str = ""
    merge_segment: Annotated[int, Field(ge=0)]
    queue_veh: NonNegFloat = 0.0
    sat_rate: PositiveFloat = 30.0
    gd_min: NonNegFloat = 15.0
    gd_max: NonNegFloat = 29.0
    cycle: PositiveFloat = 40.0
    queue_override_m: NonNegFloat = 200.0


class NetworkDoc(_Strict):
    veh_size_km: PositiveFloat = DEFAULT_VEH_SIZE_KM
    segments: Annotated[list[SegmentDoc], Field(min_length=1)]
    ramps: list[RampDoc] = []


class ProfileDoc(_Strict):
    times_s: Annotated[list[float], Field(min_length=1)]
    flows_vpm: Annotated[list[NonNegFloat], Field(min_length=1)]


class DemandDoc(_Strict):
    mainline: ProfileDoc
    ramps: list[ProfileDoc] = []


class IncidentDoc(_Strict):
    segment: Annotated[int, Field(ge=0)]
    lanes: Annotated[int, Field(ge=1)]
    start_s: float = 0.0
    end_s: Optional[float] = None  # null: until the end of the run


class SetpointDoc(_Strict):
    initial: float = 15.0
    delta_plus: NonNegFloat = 0.15
    delta_minus: NonNegFloat = 0.3
    speed_margin: float = 10.0
    clamp: tuple[float, float] = (5.0, 40.0)
    v_free_kmh: Optional[list[PositiveFloat]] = None  # null: free speed of each merge segment


class ControllerDoc(_Strict):
    kind: Literal["none", "alinea", "ip", "pi"] = "ip"
    alpha: float = 30.0
    K_P: PositiveFloat = 0.5
    estimator: Literal["algebraic", "closed_loop", "crude"] = "algebraic"
    tau_cycles: Annotated[int, Field(ge=1)] = 5
    time_unit_s: PositiveFloat = 3600.0
    K_I: PositiveFloat = 1.0
    alinea_initial_gd: Optional[float] = None
    pi_gains: Optional[tuple[float, float]] = None
    setpoint: SetpointDoc = SetpointDoc()


class NoiseDoc(_Strict):
    seed: Annotated[int, Field(ge=0)] = 0
    occupancy_pct: NonNegFloat = 0.0
    speed_kmh: NonNegFloat = 0.0


class ScenarioDoc(_Strict):
    name: str = "scenario"
    description: str = ""
    network: NetworkDoc
    demand: DemandDoc
    incidents: list[IncidentDoc] = []
    controller: ControllerDoc = ControllerDoc()
    noise: NoiseDoc = NoiseDoc()
    horizon_s: PositiveFloat
    dt_s: PositiveFloat = 1.0
    log_interval_s: PositiveFloat = 40.0
    exit_capacity_vpm: Optional[NonNegFloat] = None
    output_dir: Optional[str] = None


def scenario_json_schema() -> dict:
    return ScenarioDoc.model_json_schema()


def _loc(loc: tuple) -> str:
    out = ""
    for part in loc:
        if isinstance(part, int):
            out += f"[{part}]"
        else:
            out += f".{part}" if out else str(part)
    return out or "<root>"


def _pydantic_errors(exc: ValidationError) -> list[str]:
    errors = []
    for err in exc.errors():
        # drop the discriminator tag pydantic inserts for tagged unions
        loc = tuple(p for p in err["loc"] if p not in ("greenshield", "may", "tabulated"))
        errors.append(f"{_loc(loc)}: {err['msg']}")
    return errors


def _network_path(message: str) -> str:
    """``"ramp 2: ..."`` -> ``"network.ramps[2]: ..."``."""
    m = re.match(r"(segment|ramp) (\d+): (.*)", message)
    if m:
        return f"network.{m.group(1)}s[{m.group(2)}]: {m.group(3)}"
    return f"network: {message}"


def _diagram(doc, where: str, base_dir: Optional[Path], errors: list[str]):
    try:
        if isinstance(doc, GreenshieldDoc):
            return Greenshield(doc.v_f, doc.rho_m)
        if isinstance(doc, MayDoc):
            return May(doc.v_f, doc.a, doc.rho_c)
        if (doc.knots is None) == (doc.csv is None):
            errors.append(f"{where}: give exactly one of 'knots' or 'csv'")
            return None
        if doc.knots is not None:
            return Tabulated(tuple(tuple(k) for k in doc.knots))
        path = Path(doc.csv)
        if not path.is_absolute():
            path = (base_dir or Path.cwd()) / path
        return load_diagram_csv(path)
    except (OSError, ValueError) as exc:
        errors.append(f"{where}: {exc}")
        return None


def build_scenario(doc: ScenarioDoc, base_dir: Optional[Path] = None) -> Scenario:
    errors: list[str] = []
    segments = []
    for i, s in enumerate(doc.network.segments):
        dg = _diagram(s.diagram, f"network.segments[{i}].diagram", base_dir, errors)
        segments.append((s, dg))
    if errors:
        raise ScenarioError(errors)
    segs = [Segment(s.length_km, s.lanes, dg, s.rho, s.name or f"S{i + 1}") for i, (s, dg) in enumerate(segments)]
    ramps = [
        Ramp(r.merge_segment, r.queue_veh, r.sat_rate, r.gd_min, r.gd_max, r.cycle, r.queue_override_m, r.name or f"R{j + 1}")
        for j, r in enumerate(doc.network.ramps)
    ]
    geometry = VehicleGeometry(doc.network.veh_size_km)
    errors += [_network_path(e) for e in network_errors(segs, ramps, geometry)]

    profiles = []
    for where, p in [("demand.mainline", doc.demand.mainline)] + [
        (f"demand.ramps[{j}]", p) for j, p in enumerate(doc.demand.ramps)
    ]:
        try:
            profiles.append(DemandProfile(tuple(p.times_s), tuple(p.flows_vpm)))
        except ValueError as exc:
            errors.append(f"{where}: {exc}")
    c = doc.controller
    sp = c.setpoint
    try:
        settings = ControllerSettings(
            kind=c.kind,
            ip=IpConfig(c.alpha, c.K_P),
            estimator=c.estimator,
            tau_cycles=c.tau_cycles,
            time_unit_s=c.time_unit_s,
            K_I=c.K_I,
            alinea_initial_gd=c.alinea_initial_gd,
            pi_gains=c.pi_gains,
            initial_setpoint=sp.initial,
            delta_plus=sp.delta_plus,
            delta_minus=sp.delta_minus,
            speed_margin=sp.speed_margin,
            setpoint_clamp=sp.clamp,
        )
    except ValueError as exc:
        errors.append(f"controller: {exc}")
    if errors:
        raise ScenarioError(errors)

    incidents = tuple(
        Incident(x.segment, x.lanes, x.start_s, math.inf if x.end_s is None else x.end_s) for x in doc.incidents
    )
    kwargs = dict(
        network=Network(tuple(segs), tuple(ramps), geometry),
        mainline_demand=profiles[0],
        ramp_demands=tuple(profiles[1:]),
        horizon_s=doc.horizon_s,
        controller=settings,
        incidents=incidents,
        dt_s=doc.dt_s,
        log_interval_s=doc.log_interval_s,
        exit_capacity_vpm=doc.exit_capacity_vpm,
        noise=Noise(doc.noise.seed, doc.noise.occupancy_pct, doc.noise.speed_kmh),
        v_free_kmh=None if sp.v_free_kmh is None else tuple(sp.v_free_kmh),
        name=doc.name,
        description=doc.description,
        output_dir=doc.output_dir,
    )
    try:
        return Scenario(**kwargs)
    except InvalidScenario as exc:
        raise ScenarioError([f"scenario: {e}" for e in exc.errors]) from None


def parse_scenario(text: str, base_dir: Optional[Path] = None, source: str = "") -> Scenario:
    """Parse a JSON scenario document; raise :class:`ScenarioError` listing every problem."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError([f"<root>: not valid JSON ({exc})"], source) from None
    return scenario_from_dict(raw, base_dir, source)


def scenario_from_dict(raw: Any, base_dir: Optional[Path] = None, source: str = "") -> Scenario:
    try:
        doc = ScenarioDoc.model_validate(raw)
    except ValidationError as exc:
        raise ScenarioError(_pydantic_errors(exc), source) from None
    try:
        return build_scenario(doc, base_dir)
    except ScenarioError as exc:
        raise ScenarioError(exc.errors, source) from None


def _diagram_dict(dg) -> dict:
    if isinstance(dg, Greenshield):
        return {"kind": "greenshield", "v_f": dg.v_f, "rho_m": dg.rho_m}
    if isinstance(dg, May):
        return {"kind": "may", "v_f": dg.v_f, "a": dg.a, "rho_c": dg.rho_c}
    return {"kind": "tabulated", "knots": [list(k) for k in dg.knots]}


def _profile_dict(p: DemandProfile) -> dict:
    return {"times_s": list(p.times_s), "flows_vpm": list(p.flows_vpm)}


def scenario_to_dict(sc: Scenario) -> dict:
    """Fully explicit document (every default spelled out, diagrams inlined)."""
    net = sc.network
    s = sc.controller
    doc = {
        "name": sc.name,
        "description": sc.description,
        "network": {
            "veh_size_km": net.geometry.veh_size_km,
            "segments": [
                {"name": g.name, "length_km": g.length_km, "lanes": g.lanes, "rho": g.rho, "diagram": _diagram_dict(g.diagram)}
                for g in net.segments
            ],
            "ramps": [
                {
                    "name": r.name,
                    "merge_segment": r.merge_segment,
                    "queue_veh": r.queue_veh,
                    "sat_rate": r.sat_rate,
                    "gd_min": r.gd_min,
                    "gd_max": r.gd_max,
                    "cycle": r.cycle,
                    "queue_override_m": r.queue_override_m,
                }
                for r in net.ramps
            ],
        },
        "demand": {
            "mainline": _profile_dict(sc.mainline_demand),
            "ramps": [_profile_dict(p) for p in sc.ramp_demands],
        },
        "incidents": [
            {"segment": x.segment, "lanes": x.lanes, "start_s": x.start_s, "end_s": None if math.isinf(x.end_s) else x.end_s}
            for x in sc.incidents
        ],
        "controller": {
            "kind": s.kind,
            "alpha": s.ip.alpha,
            "K_P": s.ip.K_P,
            "estimator": s.estimator,
            "tau_cycles": s.tau_cycles,
            "time_unit_s": s.time_unit_s,
            "K_I": s.K_I,
            "alinea_initial_gd": s.alinea_initial_gd,
            "pi_gains": None if s.pi_gains is None else list(s.pi_gains),
            "setpoint": {
                "initial": s.initial_setpoint,
                "delta_plus": s.delta_plus,
                "delta_minus": s.delta_minus,
                "speed_margin": s.speed_margin,
                "clamp": list(s.setpoint_clamp),
                "v_free_kmh": None if sc.v_free_kmh is None else list(sc.v_free_kmh),
            },
        },
        "noise": {"seed": sc.noise.seed, "occupancy_pct": sc.noise.occupancy_pct, "speed_kmh": sc.noise.speed_kmh},
        "horizon_s": sc.horizon_s,
        "dt_s": sc.dt_s,
        "log_interval_s": sc.log_interval_s,
        "exit_capacity_vpm": sc.exit_capacity_vpm,
        "output_dir": sc.output_dir,
    }
    return doc


def serialize_scenario(sc: Scenario) -> str:
    return json.dumps(scenario_to_dict(sc), indent=2) + "\n"


def preset_path(name: str) -> Path:
    """Location of a bundled preset; accepts the name with or without ``.json``."""
    stem = name[:-5] if name.endswith(".json") else name
    if stem not in PRESETS:
        raise FileNotFoundError(f"no bundled preset named {name!r}; available: {', '.join(PRESETS)}")
    return Path(str(resources.files("rampmeter") / "data" / f"{stem}.json"))


def resolve_scenario_path(arg: str) -> Path:
    """A path on disk wins; otherwise a bare preset name maps to the bundled file."""
    path = Path(arg)
    if path.exists():
        return path
    if path.parent == Path(".") and (path.stem in PRESETS):
        return preset_path(path.name)
    raise FileNotFoundError(f"scenario file not found: {arg}")


def load_scenario_file(path: Union[str, Path]) -> tuple[Scenario, dict]:
    """Read, parse and validate a scenario file. Returns the scenario and the raw document."""
    path = Path(path)
    text = path.read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError([f"<root>: not valid JSON ({exc})"], str(path)) from None
    return scenario_from_dict(raw, path.parent, str(path)), raw


def load_preset(name: str) -> Scenario:
    return load_scenario_file(preset_path(name))[0]

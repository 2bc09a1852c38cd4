"""Trajectory logs as long-format CSV plus a JSON sidecar with the layout metadata.

One row per (record, entity). Entities are the segments, the ramps and the
mainline origin queue; columns that do not apply to an entity are left blank.
Floats are written with ``repr`` so a write/read round trip is exact.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Union

import numpy as np

from .simulation import TrajectoryLog

COLUMNS = (
    "t_s",
    "entity_kind",
    "entity_id",
    "Q_vpm",
    "To_pct",
    "V_kmh",
    "GD_s",
    "queue_m",
    "admitted_vpm",
    "demand_vpm",
    "veh",
    "override",
    "setpoint_pct",
)


def _f(x) -> str:
    return repr(float(x))


def log_to_csv(log: TrajectoryLog) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    S, R = len(log.segment_names), len(log.ramp_names)
    for k in range(log.n):
        t = _f(log.t_s[k])
        for i in range(S):
            w.writerow(
                [t, "segment", log.segment_names[i], _f(log.seg_Q[k, i]), _f(log.seg_To[k, i]),
                 _f(log.seg_V[k, i]), "", "", "", "", _f(log.seg_veh[k, i]), "", ""]
            )
        for j in range(R):
            w.writerow(
                [t, "ramp", log.ramp_names[j], "", "", "", _f(log.ramp_GD[k, j]), _f(log.ramp_queue_m[k, j]),
                 _f(log.ramp_admitted[k, j]), _f(log.ramp_demand[k, j]), _f(log.ramp_veh[k, j]),
                 str(int(log.ramp_override[k, j])), _f(log.ramp_setpoint[k, j])]
            )
        w.writerow(
            [t, "origin", "O", "", "", "", "", _f(log.origin_queue_m[k]), _f(log.origin_admitted[k]),
             _f(log.origin_demand[k]), _f(log.origin_veh[k]), "", ""]
        )
    return buf.getvalue()


def log_metadata(log: TrajectoryLog) -> dict:
    meta = dict(log.meta)
    meta.update(
        interval_s=log.interval_s,
        dt_s=log.dt_s,
        segment_names=list(log.segment_names),
        lengths_km=list(log.lengths_km),
        ramp_names=list(log.ramp_names),
    )
    return meta


def sidecar_path(csv_path: Union[str, Path]) -> Path:
    p = Path(csv_path)
    return p.with_name(p.stem + ".meta.json")


def write_log(log: TrajectoryLog, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.write_text(log_to_csv(log))
    sidecar_path(path).write_text(json.dumps(log_metadata(log), indent=2, sort_keys=True) + "\n")
    return path


def read_log(path: Union[str, Path]) -> TrajectoryLog:
    path = Path(path)
    meta = json.loads(sidecar_path(path).read_text())
    seg_names = meta["segment_names"]
    ramp_names = meta["ramp_names"]
    seg_idx = {n: i for i, n in enumerate(seg_names)}
    ramp_idx = {n: j for j, n in enumerate(ramp_names)}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != COLUMNS:
            raise ValueError(f"{path}: unexpected columns {reader.fieldnames!r}")
        rows = list(reader)
    times = sorted({float(r["t_s"]) for r in rows})
    rec = {t: k for k, t in enumerate(times)}
    n, S, R = len(times), len(seg_names), len(ramp_names)
    arr = {name: np.zeros((n, S)) for name in ("Q", "To", "V", "veh")}
    rarr = {name: np.zeros((n, R)) for name in ("GD", "q", "adm", "dem", "veh", "sp")}
    rover = np.zeros((n, R), dtype=bool)
    oarr = {name: np.zeros(n) for name in ("q", "adm", "dem", "veh")}
    for r in rows:
        k = rec[float(r["t_s"])]
        kind = r["entity_kind"]
        if kind == "segment":
            i = seg_idx[r["entity_id"]]
            arr["Q"][k, i] = float(r["Q_vpm"])
            arr["To"][k, i] = float(r["To_pct"])
            arr["V"][k, i] = float(r["V_kmh"])
            arr["veh"][k, i] = float(r["veh"])
        elif kind == "ramp":
            j = ramp_idx[r["entity_id"]]
            rarr["GD"][k, j] = float(r["GD_s"])
            rarr["q"][k, j] = float(r["queue_m"])
            rarr["adm"][k, j] = float(r["admitted_vpm"])
            rarr["dem"][k, j] = float(r["demand_vpm"])
            rarr["veh"][k, j] = float(r["veh"])
            rarr["sp"][k, j] = float(r["setpoint_pct"])
            rover[k, j] = r["override"] == "1"
        elif kind == "origin":
            oarr["q"][k] = float(r["queue_m"])
            oarr["adm"][k] = float(r["admitted_vpm"])
            oarr["dem"][k] = float(r["demand_vpm"])
            oarr["veh"][k] = float(r["veh"])
        else:
            raise ValueError(f"{path}: unknown entity kind {kind!r}")
    layout = ("interval_s", "dt_s", "segment_names", "lengths_km", "ramp_names")
    return TrajectoryLog(
        interval_s=meta["interval_s"],
        dt_s=meta["dt_s"],
        t_s=np.array(times),
        segment_names=tuple(seg_names),
        lengths_km=tuple(meta["lengths_km"]),
        seg_Q=arr["Q"],
        seg_To=arr["To"],
        seg_V=arr["V"],
        seg_veh=arr["veh"],
        ramp_names=tuple(ramp_names),
        ramp_GD=rarr["GD"],
        ramp_override=rover,
        ramp_setpoint=rarr["sp"],
        ramp_queue_m=rarr["q"],
        ramp_veh=rarr["veh"],
        ramp_admitted=rarr["adm"],
        ramp_demand=rarr["dem"],
        origin_demand=oarr["dem"],
        origin_admitted=oarr["adm"],
        origin_queue_m=oarr["q"],
        origin_veh=oarr["veh"],
        meta={k: v for k, v in meta.items() if k not in layout},
    )

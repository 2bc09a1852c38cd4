"""Regenerate the bundled reference presets and their synthetic speed/occupancy tables.

Run from the repository root: ``python3 scripts/make_presets.py``.
"""

import json
from pathlib import Path

from rampmeter.network import (
    REFERENCE_DIAGRAM_PARAMS,
    REFERENCE_LANES,
    REFERENCE_LENGTHS_KM,
    REFERENCE_RAMP_SEGMENTS,
    synthetic_diagram,
    write_diagram_csv,
)

DATA = Path(__file__).resolve().parents[1] / "src" / "rampmeter" / "data"
H = 3600.0


def trapezoid(base, peak, rise=(6.0, 7.0), fall=(9.0, 10.0)):
    times = [0.0, rise[0] * H, rise[1] * H, fall[0] * H, fall[1] * H, 24 * H]
    return {"times_s": times, "flows_vpm": [base, base, peak, peak, base, base]}


def network():
    segments = []
    for i, (length, lanes) in enumerate(zip(REFERENCE_LENGTHS_KM, REFERENCE_LANES)):
        segments.append(
            {
                "name": f"S{i + 1}",
                "length_km": length,
                "lanes": lanes,
                "diagram": {"kind": "tabulated", "csv": f"diagrams/S{i + 1}.csv"},
            }
        )
    ramps = [{"name": f"R{k + 1}", "merge_segment": seg} for k, seg in enumerate(REFERENCE_RAMP_SEGMENTS)]
    return {"segments": segments, "ramps": ramps}


def main():
    (DATA / "diagrams").mkdir(parents=True, exist_ok=True)
    for i, (v_f, to_c) in enumerate(REFERENCE_DIAGRAM_PARAMS):
        write_diagram_csv(synthetic_diagram(v_f, to_c), DATA / "diagrams" / f"S{i + 1}.csv")

    normal = {
        "name": "paper-network",
        "description": "Reference 7-segment motorway with a synthetic morning peak (demand and "
        "speed/occupancy tables are synthetic stand-ins, not measured data).",
        "network": network(),
        "demand": {
            "mainline": trapezoid(20.0, 55.0),
            "ramps": [trapezoid(5.0, 18.0), trapezoid(4.0, 12.0), trapezoid(4.0, 10.0)],
        },
        "controller": {"kind": "ip"},
        "horizon_s": 24 * H,
    }
    incident = {
        "name": "paper-incident",
        "description": "Reference motorway, S2 reduced from 3 to 2 lanes from 07:00 to 09:30 during "
        "a synthetic morning peak (synthetic demand and speed/occupancy tables).",
        "network": network(),
        "demand": {
            "mainline": trapezoid(20.0, 55.0),
            "ramps": [trapezoid(5.0, 25.0), trapezoid(4.0, 12.0), trapezoid(4.0, 10.0)],
        },
        "incidents": [{"segment": 1, "lanes": 2, "start_s": 7 * H, "end_s": 9.5 * H}],
        "controller": {"kind": "ip"},
        "horizon_s": 12 * H,
    }
    for doc in (normal, incident):
        (DATA / f"{doc['name']}.json").write_text(json.dumps(doc, indent=2) + "\n")


if __name__ == "__main__":
    main()

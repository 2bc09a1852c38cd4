"""Command-line entry point: ``rampmeter run|compare|sweep|validate|schema``."""

from __future__ import annotations

import argparse
import copy
import dataclasses
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

from .control import CONTROLLER_KINDS
from .logio import write_log
from .metrics import MetricsReport, compare_runs, compute_report, report_table
from .network import critical_occupancy
from .plots import emit_plots
from .scenario import (
    ScenarioError,
    load_scenario_file,
    resolve_scenario_path,
    scenario_from_dict,
    scenario_json_schema,
    scenario_to_dict,
)
from .simulation import Scenario, SimulationFault, TrajectoryLog, simulate

OUT_ENV = "RAMPMETER_OUT"
EXIT_INPUT = 2
EXIT_FAULT = 3


def with_controller(sc: Scenario, kind: Optional[str] = None, seed: Optional[int] = None) -> Scenario:
    if kind is not None:
        sc = dataclasses.replace(sc, controller=dataclasses.replace(sc.controller, kind=kind))
    if seed is not None:
        sc = dataclasses.replace(sc, noise=dataclasses.replace(sc.noise, seed=seed))
    return sc


def run_member(sc: Scenario, out_dir: Path) -> tuple[TrajectoryLog, MetricsReport]:
    """Simulate one scenario and write its log and metrics into ``out_dir``."""
    out_dir.mkdir(parents=True, exist_ok=True)
    log = simulate(sc).log
    report = compute_report(log)
    write_log(log, out_dir / "log.csv")
    (out_dir / "metrics.csv").write_text(report_table(sc.controller.kind, report).to_csv())
    return log, report


def _run_all(members: list[tuple[str, Scenario, Path]], jobs: int):
    if jobs <= 1 or len(members) <= 1:
        results = [run_member(sc, d) for _, sc, d in members]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(run_member, sc, d) for _, sc, d in members]
            results = [f.result() for f in futures]
    logs = {label: r[0] for (label, _, _), r in zip(members, results)}
    reports = {label: r[1] for (label, _, _), r in zip(members, results)}
    return logs, reports


def _out_dir(args, sc: Scenario) -> Path:
    if args.out:
        return Path(args.out)
    base = sc.output_dir or os.environ.get(OUT_ENV) or "rampmeter-out"
    return Path(base) / sc.name


def _load(arg: str):
    path = resolve_scenario_path(arg)
    sc, raw = load_scenario_file(path)
    return sc, raw, path


def cmd_run(args) -> int:
    sc, _, _ = _load(args.scenario)
    sc = with_controller(sc, args.controller, args.seed)
    out = _out_dir(args, sc)
    log, report = run_member(sc, out)
    text = report_table(sc.controller.kind, report).to_text()
    (out / "metrics.txt").write_text(text)
    if not args.no_plots:
        emit_plots({sc.controller.kind: log}, {sc.controller.kind: report}, out / "plots")
    print(text, end="")
    print(f"outputs written to {out}")
    return 0


def _parse_list(text: str) -> list[str]:
    items = [x.strip() for x in text.split(",")]
    if not all(items):
        raise argparse.ArgumentTypeError(f"empty item in list {text!r}")
    return items


def cmd_compare(args) -> int:
    sc, _, _ = _load(args.scenario)
    bad = [k for k in args.controllers if k not in CONTROLLER_KINDS]
    if bad:
        print(f"error: unknown controller kind(s) {', '.join(bad)}; allowed: {', '.join(CONTROLLER_KINDS)}", file=sys.stderr)
        return EXIT_INPUT
    if len(set(args.controllers)) < 2:
        print("error: compare needs at least two distinct controllers", file=sys.stderr)
        return EXIT_INPUT
    out = _out_dir(args, sc)
    members = [(k, with_controller(sc, k, args.seed), out / k) for k in dict.fromkeys(args.controllers)]
    logs, reports = _run_all(members, args.jobs)
    comp = compare_runs(reports, baseline=args.baseline)
    (out / "comparison.csv").write_text(comp.to_csv())
    (out / "comparison.txt").write_text(comp.to_text())
    if not args.no_plots:
        emit_plots(logs, reports, out / "plots")
    print(comp.to_text(), end="")
    print(f"outputs written to {out}")
    return 0


def _set_path(doc: dict, dotted: str, value) -> None:
    """Assign into nested dicts/lists; list indices are plain integers (``network.ramps.0.gd_max``)."""
    parts = dotted.split(".")
    node = doc
    for depth, key in enumerate(parts):
        last = depth == len(parts) - 1
        if isinstance(node, list):
            try:
                idx = int(key)
                node[idx]
            except (ValueError, IndexError):
                raise KeyError(f"--param {dotted}: no list element {key!r}") from None
            if last:
                node[idx] = value
            else:
                node = node[idx]
        elif isinstance(node, dict):
            if last:
                node[key] = value
            else:
                node = node.setdefault(key, {})
        else:
            raise KeyError(f"--param {dotted}: {'.'.join(parts[:depth])} is not an object or list")


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def cmd_sweep(args) -> int:
    base_sc, raw, path = _load(args.scenario)
    out = _out_dir(args, base_sc)
    members = []
    errors = []
    for text in args.values:
        doc = copy.deepcopy(raw)
        try:
            _set_path(doc, args.param, _parse_value(text))
            sc = scenario_from_dict(doc, path.parent, f"{path} [{args.param}={text}]")
        except ScenarioError as exc:
            errors.append(str(exc))
            continue
        except KeyError as exc:
            errors.append(str(exc.args[0]))
            continue
        sc = with_controller(sc, args.controller, args.seed)
        label = f"{args.param}={text}"
        members.append((label, sc, out / label.replace("/", "_")))
    if errors:
        print("\n".join(errors), file=sys.stderr)
        return EXIT_INPUT
    logs, reports = _run_all(members, args.jobs)
    table = compare_runs(reports) if len(reports) > 1 else report_table(*next(iter(reports.items())))
    (out / "sweep.csv").write_text(table.to_csv())
    if not args.no_plots:
        emit_plots(logs, reports, out / "plots")
    print(table.to_text(), end="")
    print(f"outputs written to {out}")
    return 0


def effective_config(sc: Scenario) -> dict:
    net = sc.network
    size = net.geometry.veh_size_km
    return {
        "scenario": scenario_to_dict(sc),
        "derived": {
            "v_free_kmh": [
                net.segments[r.merge_segment].diagram.free_speed if sc.v_free_kmh is None else sc.v_free_kmh[j]
                for j, r in enumerate(net.ramps)
            ],
            "critical_occupancy_pct": [critical_occupancy(s.diagram, s.lanes, size) for s in net.segments],
            "control_period_s": sc.cycle_s,
            "merge_rule": "proportional to demand when supply is short",
            "downstream_boundary": "free discharge" if sc.exit_capacity_vpm is None else "exit capacity",
            "queue_geometry": "single lane, one vehicle length per queued vehicle",
            "measurement": "merge-segment occupancy and speed averaged over the last cycle",
            "noise": "uniform, zero mean" if sc.noise.occupancy_pct or sc.noise.speed_kmh else "off",
        },
    }


def cmd_validate(args) -> int:
    sc, _, path = _load(args.scenario)
    print(
        f"{path}: valid ({len(sc.network.segments)} segments, {len(sc.network.ramps)} ramps, "
        f"horizon {sc.horizon_s:g} s, controller {sc.controller.kind})"
    )
    if args.show_effective:
        print(json.dumps(effective_config(sc), indent=2))
    return 0


def cmd_schema(args) -> int:
    print(json.dumps(scenario_json_schema(), indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rampmeter", description="Ramp-metering simulation and controller comparison.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out=True):
        sp.add_argument("scenario", help="scenario JSON file or a bundled preset name")
        if out:
            sp.add_argument("--out", help=f"output directory (default: ${OUT_ENV}/<name> or ./rampmeter-out/<name>)")
            sp.add_argument("--seed", type=int, help="noise seed override")
            sp.add_argument("--no-plots", action="store_true", help="skip SVG output")

    sp = sub.add_parser("run", help="simulate one scenario")
    common(sp)
    sp.add_argument("--controller", choices=CONTROLLER_KINDS)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("compare", help="run several controllers on one scenario")
    common(sp)
    sp.add_argument("--controllers", type=_parse_list, required=True, help="comma-separated, e.g. none,alinea,ip")
    sp.add_argument("--baseline", help="run the deltas refer to (default: the first)")
    sp.add_argument("--jobs", type=int, default=1, help="parallel simulations")
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("sweep", help="one run per value of a scenario parameter")
    common(sp)
    sp.add_argument("--param", required=True, help="dotted path, e.g. controller.K_P or network.ramps.0.gd_max")
    sp.add_argument("--values", type=_parse_list, required=True, help="comma-separated JSON values")
    sp.add_argument("--controller", choices=CONTROLLER_KINDS)
    sp.add_argument("--jobs", type=int, default=1)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("validate", help="check a scenario file")
    common(sp, out=False)
    sp.add_argument("--show-effective", action="store_true", help="print the configuration with every default")
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("schema", help="print the scenario JSON schema")
    sp.set_defaults(func=cmd_schema)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SimulationFault as exc:
        print(f"simulation fault: {exc}", file=sys.stderr)
        return EXIT_FAULT


if __name__ == "__main__":
    sys.exit(main())

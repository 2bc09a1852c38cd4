"""TTS / TTD / MS and run comparison tables."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .simulation import TrajectoryLog


@dataclass(frozen=True)
class MetricsReport:
    tts: float  # Veh.h
    ttd: float  # Veh.km
    ms: float  # km/h
    ramp_max_queue_m: tuple[float, ...]
    ramp_mean_queue_m: tuple[float, ...]
    time_above_critical_min: tuple[float, ...]
    horizon_s: float
    ramp_names: tuple[str, ...] = ()
    segment_names: tuple[str, ...] = ()


def _check(log: TrajectoryLog) -> None:
    if log.n == 0:
        raise ValueError("empty trajectory log")


def compute_tts(log: TrajectoryLog) -> float:
    """Vehicle-hours spent on the segments and in every queue (ramps and mainline origin)."""
    _check(log)
    stock = log.seg_veh.sum() + log.ramp_veh.sum() + log.origin_veh.sum()
    return float(stock * log.interval_s / 3600.0)


def compute_ttd(log: TrajectoryLog) -> float:
    """Vehicle-km: outflow of each segment times its length."""
    _check(log)
    lengths = np.asarray(log.lengths_km)
    return float((log.seg_Q @ lengths).sum() * log.interval_s / 60.0)


def compute_ms(tts: float, ttd: float) -> float:
    if tts < 0:
        raise ValueError("TTS must be >= 0")
    return ttd / tts if tts > 0 else 0.0


def compute_report(log: TrajectoryLog, critical_occupancy: Optional[Sequence[float]] = None) -> MetricsReport:
    tts = compute_tts(log)
    ttd = compute_ttd(log)
    if critical_occupancy is None:
        critical_occupancy = log.meta.get("critical_occupancy_pct")
    if critical_occupancy is None:
        above = tuple(float("nan") for _ in log.segment_names)
    else:
        crit = np.asarray(critical_occupancy, dtype=float)
        above = tuple((log.seg_To > crit).sum(axis=0) * log.interval_s / 60.0)
    if log.ramp_queue_m.shape[1]:
        qmax = tuple(float(x) for x in log.ramp_queue_m.max(axis=0))
        qmean = tuple(float(x) for x in log.ramp_queue_m.mean(axis=0))
    else:
        qmax = qmean = ()
    return MetricsReport(
        tts=tts,
        ttd=ttd,
        ms=compute_ms(tts, ttd),
        ramp_max_queue_m=qmax,
        ramp_mean_queue_m=qmean,
        time_above_critical_min=tuple(float(x) for x in above),
        horizon_s=log.horizon_s,
        ramp_names=log.ramp_names,
        segment_names=log.segment_names,
    )


@dataclass
class Comparison:
    labels: list[str]
    baseline: str
    rows: list[dict]
    warnings: list[str] = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        fields = list(self.rows[0].keys())
        writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        for row in self.rows:
            writer.writerow(row)
        return buf.getvalue()

    def to_text(self) -> str:
        head = f"{'run':<12}{'TTS [Veh.h]':>14}{'TTD [Veh.km]':>15}{'MS [km/h]':>11}"
        head += f"{'dTTS %':>9}{'dTTD %':>9}{'dMS %':>9}"
        lines = [head, "-" * len(head)]
        for r in self.rows:
            lines.append(
                f"{r['run']:<12}{r['TTS_veh_h']:>14.2f}{r['TTD_veh_km']:>15.1f}{r['MS_kmh']:>11.2f}"
                f"{r['dTTS_pct']:>9.2f}{r['dTTD_pct']:>9.2f}{r['dMS_pct']:>9.2f}"
            )
        lines.append(f"(deltas relative to '{self.baseline}')")
        lines.extend(f"warning: {w}" for w in self.warnings)
        return "\n".join(lines) + "\n"


def _delta_pct(value: float, base: float) -> float:
    if base == 0:
        return 0.0 if value == 0 else float("inf")
    return (value - base) / base * 100.0


def compare_runs(reports: Mapping[str, MetricsReport], baseline: Optional[str] = None) -> Comparison:
    """Side-by-side metrics with percentage deltas against ``baseline`` (first run by default)."""
    if len(reports) < 2:
        raise ValueError("compare_runs needs at least two reports")
    return _table(reports, baseline)


def report_table(label: str, report: MetricsReport) -> Comparison:
    """One-row table in the comparison layout (deltas are zero)."""
    return _table({label: report}, None)


def _table(reports: Mapping[str, MetricsReport], baseline: Optional[str]) -> Comparison:
    labels = list(reports)
    baseline = labels[0] if baseline is None else baseline
    if baseline not in reports:
        raise KeyError(f"baseline {baseline!r} is not among the runs {labels}")
    base = reports[baseline]
    warnings = []
    horizons = {rep.horizon_s for rep in reports.values()}
    if len(horizons) > 1:
        warnings.append(f"runs cover different horizons: {sorted(horizons)} s")
    rows = []
    for label in labels:
        rep = reports[label]
        rows.append(
            {
                "run": label,
                "TTS_veh_h": rep.tts,
                "TTD_veh_km": rep.ttd,
                "MS_kmh": rep.ms,
                "dTTS_pct": _delta_pct(rep.tts, base.tts),
                "dTTD_pct": _delta_pct(rep.ttd, base.ttd),
                "dMS_pct": _delta_pct(rep.ms, base.ms),
                "max_queue_m": max(rep.ramp_max_queue_m, default=0.0),
                "horizon_s": rep.horizon_s,
            }
        )
    return Comparison(labels, baseline, rows, warnings)

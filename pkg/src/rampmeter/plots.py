"""Static SVG figures for one run or an overlay of several runs."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .metrics import MetricsReport  # noqa: E402
from .simulation import TrajectoryLog  # noqa: E402

_SVG_RC = {"svg.hashsalt": "rampmeter", "svg.fonttype": "none"}

SEGMENT_PANELS = (
    ("Q", "outflow [Veh/min]", lambda log, i: log.seg_Q[:, i]),
    ("To", "occupancy [%]", lambda log, i: log.seg_To[:, i]),
    ("V", "mean speed [km/h]", lambda log, i: log.seg_V[:, i]),
)


def _hours(log: TrajectoryLog):
    return log.t_s / 3600.0


def _save(fig, path: Path) -> Path:
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def _line_figure(title: str, ylabel: str):
    fig, ax = plt.subplots(figsize=(7.0, 3.2))
    ax.set_title(title)
    ax.set_xlabel("time [h]")
    ax.set_ylabel(ylabel)
    ax.grid(True, alpha=0.3)
    return fig, ax


def emit_plots(
    logs: Mapping[str, TrajectoryLog],
    reports: Mapping[str, MetricsReport],
    out_dir: Union[str, Path],
) -> list[Path]:
    """Write 3 figures per segment, 3 per ramp and one metrics bar chart.

    Every run in ``logs`` is drawn on the same axes. The output is
    byte-deterministic for identical inputs.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    first = next(iter(logs.values()))
    written = []
    with matplotlib.rc_context(_SVG_RC):
        for i, seg in enumerate(first.segment_names):
            for key, ylabel, get in SEGMENT_PANELS:
                fig, ax = _line_figure(f"{seg}: {ylabel.split(' [')[0]}", ylabel)
                for label, log in logs.items():
                    ax.plot(_hours(log), get(log, i), label=label, lw=1.0)
                ax.legend(loc="upper right", fontsize="small")
                written.append(_save(fig, out / f"segment_{seg}_{key}.svg"))

        for j, ramp in enumerate(first.ramp_names):
            fig, ax = _line_figure(f"{ramp}: green duration", "green [s]")
            for label, log in logs.items():
                ax.step(_hours(log), log.ramp_GD[:, j], where="post", label=label, lw=1.0)
            ax.legend(loc="upper right", fontsize="small")
            written.append(_save(fig, out / f"ramp_{ramp}_green.svg"))

            fig, ax = _line_figure(f"{ramp}: queue length", "queue [m]")
            for label, log in logs.items():
                ax.plot(_hours(log), log.ramp_queue_m[:, j], label=label, lw=1.0)
            ax.legend(loc="upper right", fontsize="small")
            written.append(_save(fig, out / f"ramp_{ramp}_queue.svg"))

            fig, ax = _line_figure(f"{ramp}: demand and admitted flow", "flow [Veh/min]")
            ax.plot(_hours(first), first.ramp_demand[:, j], "k--", label="demand", lw=1.0)
            for label, log in logs.items():
                ax.plot(_hours(log), log.ramp_admitted[:, j], label=f"admitted ({label})", lw=1.0)
            ax.legend(loc="upper right", fontsize="small")
            written.append(_save(fig, out / f"ramp_{ramp}_flow.svg"))

        labels = list(reports)
        fig, axes = plt.subplots(1, 3, figsize=(9.0, 3.2))
        for ax, (attr, title) in zip(axes, (("tts", "TTS [Veh.h]"), ("ttd", "TTD [Veh.km]"), ("ms", "MS [km/h]"))):
            ax.bar(range(len(labels)), [getattr(reports[k], attr) for k in labels], color="0.5")
            ax.set_xticks(range(len(labels)), labels)
            ax.set_title(title)
        fig.tight_layout()
        written.append(_save(fig, out / "metrics.svg"))
    return written

"""Optional figures for simulation logs and calibrated models.

matplotlib is imported lazily with the Agg backend so headless runs work
and the dependency stays out of the core paths.
"""

from __future__ import annotations

from dataclasses import replace
from pathlib import Path
from typing import Sequence

from .calibration import ParamSet, predict_event
from .engine import LogRow
from .extraction import MergeEvent
from .game import Action

_LANE_COLORS = {-1: "tab:red", 0: "tab:blue", 1: "tab:green"}


def _pyplot():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def save_lane_occupancy(rows: Sequence[LogRow], path) -> Path:
    """Trajectory diagram (s over time, colored by lane) plus lane occupancy."""
    plt = _pyplot()
    by_actor: dict = {}
    for row in rows:
        by_actor.setdefault(row.actor_id, []).append(row)
    fig, (ax_s, ax_lane) = plt.subplots(2, 1, figsize=(9, 7), sharex=True)
    for actor_id, actor_rows in sorted(by_actor.items()):
        t = [r.time_s for r in actor_rows]
        s = [r.s_m for r in actor_rows]
        lanes = [r.lane for r in actor_rows]
        color = _LANE_COLORS.get(actor_rows[0].lane, "gray")
        ax_s.plot(t, s, lw=0.8, color=color, alpha=0.7)
        ax_lane.step(t, lanes, where="post", lw=0.8, alpha=0.7)
    ax_s.set_ylabel("s [m]")
    ax_s.set_title("trajectories (colored by initial lane)")
    ax_lane.set_ylabel("lane")
    ax_lane.set_yticks([-1, 0, 1])
    ax_lane.set_xlabel("time [s]")
    out = Path(path)
    fig.tight_layout()
    fig.savefig(out, dpi=120)
    plt.close(fig)
    return out


def save_decision_timelines(events: Sequence[MergeEvent], model: str,
                            params: ParamSet, path, max_events: int = 12) -> Path:
    """Per-event timelines of the fitted model's frame decisions vs the label."""
    plt = _pyplot()
    shown = list(events)[:max_events]
    fig, ax = plt.subplots(figsize=(9, 0.5 * max(4, len(shown))))
    for k, event in enumerate(shown):
        t0 = event.frames[0].time_s
        times = [ef.time_s - t0 for ef in event.frames]
        # replay frame by frame: green once the model would have changed
        changed = False
        colors = []
        for i, ef in enumerate(event.frames):
            if not changed and ef.lag0.lane == 0:
                single = replace(event, frames=event.frames[i:i + 1], decision_index=None)
                changed = predict_event(model, params, single) is Action.CHANGE_LANES
            colors.append("tab:green" if changed else "tab:gray")
        ax.scatter(times, [k] * len(times), c=colors, s=8, marker="s")
        marker = "LC" if event.label is Action.CHANGE_LANES else "KS"
        ax.text(times[-1] + 0.2, k, f"{event.event_id} [{marker}]",
                va="center", fontsize=7)
    ax.set_xlabel("event time [s]")
    ax.set_yticks([])
    ax.set_title(f"{model} frame decisions (gray keep, green change)")
    out = Path(path)
    fig.tight_layout()
    fig.savefig(out, dpi=120)
    plt.close(fig)
    return out

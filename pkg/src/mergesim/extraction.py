"""Merge-event extraction from trajectory logs.

An event is a window in which a cruising-lane vehicle negotiates with a
merging vehicle: the candidate is never attributed to the ramp, stays
within 60 m longitudinally of a ramp vehicle, and the window lasts more
than 5 s.  When a passing-lane follower exists during the window, the
window is trimmed to its presence (longest contiguous run, short dropouts
bridged) before the duration test.  Events are labeled lane-change when the
candidate transitions to the passing lane and stays there for at least a
second, keep-straight otherwise.  Extraction is deterministic and
insensitive to row order within a frame.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from .engine import TRAJECTORY_COLUMNS, LogRow, format_row
from .game import Action
from .scene import ActorState, LaneTopology, assign_roles

PROXIMITY_RADIUS_M = 60.0
MIN_EVENT_DURATION_S = 5.0  # strict lower bound
LANE_PERSISTENCE_S = 1.0  # passing-lane dwell required for a lane-change label
MAX_BRIDGE_FRAMES = 2  # dropout frames absorbed inside a window

_ROLE_NAMES = ("lag0", "ma", "lead0", "lag1", "lead1")


class TrajectoryFormatError(ValueError):
    """Log file violates the trajectory CSV schema; message carries the row number."""


@dataclass(frozen=True)
class Frame:
    """All actor states at one log frame."""

    index: int
    time_s: float
    actors: dict  # actor id -> ActorState


@dataclass(frozen=True)
class EventFrame:
    """Role-bound states at one frame of a merge event."""

    time_s: float
    lag0: ActorState
    ma: Optional[ActorState] = None
    lead0: Optional[ActorState] = None
    lag1: Optional[ActorState] = None
    lead1: Optional[ActorState] = None


@dataclass(frozen=True)
class MergeEvent:
    """One extracted negotiation window.

    ``decision_index`` is the frame index (into ``frames``) of the first
    persistent passing-lane attribution for lane-change events, None for
    keep-straight events.
    """

    event_id: str
    site_id: str
    label: Action
    duration_s: float
    frames: tuple[EventFrame, ...]
    decision_index: Optional[int] = None

    def __post_init__(self) -> None:
        if self.duration_s <= MIN_EVENT_DURATION_S:
            raise ValueError("event duration must exceed 5 s")
        if not self.frames:
            raise ValueError("event must contain frames")


def _parse_float(value: str, row_no: int, column: str) -> float:
    try:
        out = float(value)
    except ValueError:
        raise TrajectoryFormatError(f"row {row_no}: {column} is not a number: {value!r}") from None
    if math.isnan(out):
        raise TrajectoryFormatError(f"row {row_no}: {column} is NaN")
    return out


def load_trajectory_log(path) -> list[Frame]:
    """Read a trajectory CSV into frames.

    Validates the header, numeric fields (NaN rejected) and a non-decreasing
    frame index; failures raise TrajectoryFormatError naming the row.
    """
    frames: list[Frame] = []
    current: Optional[Frame] = None
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in TRAJECTORY_COLUMNS if c not in header]
        if missing:
            raise TrajectoryFormatError(f"header missing columns: {', '.join(missing)}")
        for row_no, row in enumerate(reader, start=2):
            if any(row.get(c) in (None, "") for c in TRAJECTORY_COLUMNS[:10]):
                empty = next(c for c in TRAJECTORY_COLUMNS[:10] if row.get(c) in (None, ""))
                raise TrajectoryFormatError(f"row {row_no}: missing value for {empty}")
            try:
                frame_idx = int(row["frame"])
                lane = int(row["lane"])
            except ValueError:
                raise TrajectoryFormatError(
                    f"row {row_no}: frame and lane must be integers") from None
            time_s = _parse_float(row["time_s"], row_no, "time_s")
            try:
                state = ActorState(
                    id=row["actor_id"], lane=lane,
                    s=_parse_float(row["s_m"], row_no, "s_m"),
                    v=_parse_float(row["v_mps"], row_no, "v_mps"),
                    d=_parse_float(row["d_m"], row_no, "d_m"),
                    a=_parse_float(row["a_mps2"], row_no, "a_mps2"),
                    length=_parse_float(row["len_m"], row_no, "len_m"),
                    width=_parse_float(row["wid_m"], row_no, "wid_m"),
                )
            except ValueError as exc:
                raise TrajectoryFormatError(f"row {row_no}: {exc}") from None
            if current is None or frame_idx != current.index:
                if current is not None and frame_idx < current.index:
                    raise TrajectoryFormatError(
                        f"row {row_no}: frame index decreases ({frame_idx} after {current.index})")
                current = Frame(index=frame_idx, time_s=time_s, actors={})
                frames.append(current)
            if state.id in current.actors:
                raise TrajectoryFormatError(
                    f"row {row_no}: duplicate actor {state.id!r} in frame {frame_idx}")
            current.actors[state.id] = state
    if not frames:
        raise TrajectoryFormatError("log contains no data rows")
    return frames


def _runs_with_bridging(flags: Sequence[bool], eligible: Sequence[bool],
                        max_bridge: int) -> list[tuple[int, int]]:
    """Maximal [start, end] index runs of True flags, bridging short False gaps.

    A gap is bridged only while every gap frame stays eligible (the
    candidate is present); longer gaps or ineligible frames split runs.
    """
    runs: list[tuple[int, int]] = []
    start = None
    last_true = None
    for i, flag in enumerate(flags):
        if flag:
            if start is None:
                start = i
            elif last_true is not None and i - last_true > 1:
                gap = range(last_true + 1, i)
                if len(gap) > max_bridge or not all(eligible[g] for g in gap):
                    runs.append((start, last_true))
                    start = i
            last_true = i
    if start is not None and last_true is not None:
        runs.append((start, last_true))
    return runs


def _has_lag1(frame: Frame, cand: ActorState) -> bool:
    return any(a.lane == 1 and a.s <= cand.s and a.id != cand.id
               for a in frame.actors.values())


def _is_proximate(frame: Frame, cand: ActorState) -> bool:
    return any(a.lane == -1 and abs(a.s - cand.s) <= PROXIMITY_RADIUS_M
               for a in frame.actors.values())


def _label_window(frames: Sequence[Frame], cand_id: str, start: int, end: int,
                  all_frames: Sequence[Frame]) -> tuple[Action, Optional[int]]:
    """Label a window; lane-change needs >= 1 s of persistent passing-lane attribution."""
    for offset, frame in enumerate(frames[start:end + 1]):
        cand = frame.actors.get(cand_id)
        if cand is None or cand.lane != 1:
            continue
        t0 = frame.time_s
        persistent = False
        for later in all_frames:
            if later.time_s < t0:
                continue
            later_cand = later.actors.get(cand_id)
            if later_cand is not None and later_cand.lane != 1:
                break
            if later.time_s - t0 >= LANE_PERSISTENCE_S:
                persistent = True
                break
        if persistent:
            return Action.CHANGE_LANES, offset
    return Action.KEEP_STRAIGHT, None


def _event_frames(frames: Sequence[Frame], cand_id: str, start: int, end: int,
                  topology: LaneTopology) -> tuple[EventFrame, ...]:
    out = []
    for frame in frames[start:end + 1]:
        cand = frame.actors[cand_id]
        if cand.lane == 0:
            roles = assign_roles(tuple(frame.actors.values()), topology, cand_id)
            resolved = {name: frame.actors.get(getattr(roles, name))
                        for name in _ROLE_NAMES if getattr(roles, name) is not None}
        else:
            resolved = {"lag0": cand}
        out.append(EventFrame(time_s=frame.time_s, **resolved))
    return tuple(out)


def extract_lag0_events(frames: Sequence[Frame], topology: LaneTopology,
                        site_id: str = "log") -> list[MergeEvent]:
    """Extract qualifying negotiation events for every candidate ego.

    Candidates are actors attributed to the cruising lane at least once and
    to the ramp never.  Per candidate, maximal proximity windows (within
    60 m of a ramp actor, dropouts of up to 2 frames bridged) are trimmed to
    the longest contiguous passing-lane-follower presence when one exists;
    windows lasting more than 5 s and starting in the cruising lane become
    events.

    Args:
        frames: parsed log frames in time order.
        topology: road geometry for role binding.
        site_id: recording-site tag carried into event ids.

    Returns:
        Events ordered by candidate id then window start.
    """
    actor_ids = sorted({aid for frame in frames for aid in frame.actors})
    events: list[MergeEvent] = []
    for cand_id in actor_ids:
        lanes = [frame.actors[cand_id].lane for frame in frames if cand_id in frame.actors]
        if not lanes or -1 in lanes or 0 not in lanes:
            continue
        eligible = [cand_id in frame.actors for frame in frames]
        proximate = [eligible[i] and _is_proximate(frame, frame.actors[cand_id])
                     for i, frame in enumerate(frames)]
        for start, end in _runs_with_bridging(proximate, eligible, MAX_BRIDGE_FRAMES):
            lag1_present = [eligible[i] and cand_id in frames[i].actors
                            and _has_lag1(frames[i], frames[i].actors[cand_id])
                            for i in range(start, end + 1)]
            if any(lag1_present):
                sub_runs = _runs_with_bridging(lag1_present, eligible[start:end + 1],
                                               MAX_BRIDGE_FRAMES)
                sub_start, sub_end = max(
                    sub_runs, key=lambda r: (frames[start + r[1]].time_s
                                             - frames[start + r[0]].time_s, -r[0]))
                start, end = start + sub_start, start + sub_end
            duration = frames[end].time_s - frames[start].time_s
            if duration <= MIN_EVENT_DURATION_S:
                continue
            if frames[start].actors[cand_id].lane != 0:
                continue
            label, decision_index = _label_window(frames, cand_id, start, end, frames)
            events.append(MergeEvent(
                event_id=f"{site_id}_{cand_id}_{frames[start].index}",
                site_id=site_id,
                label=label,
                duration_s=duration,
                frames=_event_frames(frames, cand_id, start, end, topology),
                decision_index=decision_index,
            ))
    return events


# --- event files ------------------------------------------------------------

MANIFEST_COLUMNS = ("event_id", "site_id", "label", "duration_s", "n_frames", "file")


def write_event_files(events: Sequence[MergeEvent], out_dir) -> list[Path]:
    """Write one CSV per event (trajectory schema, role column bound) plus a manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    manifest_path = out / "manifest.csv"
    with open(manifest_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(MANIFEST_COLUMNS)
        for event in events:
            file_name = f"event_{event.event_id}.csv"
            _write_event_csv(event, out / file_name)
            written.append(out / file_name)
            writer.writerow([event.event_id, event.site_id, event.label.name.lower(),
                             f"{event.duration_s:.3f}", len(event.frames), file_name])
    written.append(manifest_path)
    return written


def _write_event_csv(event: MergeEvent, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRAJECTORY_COLUMNS)
        for i, ef in enumerate(event.frames):
            for role in _ROLE_NAMES:
                st = getattr(ef, role)
                if st is None:
                    continue
                row = LogRow(frame=i, time_s=ef.time_s, actor_id=st.id, lane=st.lane,
                             s_m=st.s, d_m=st.d, v_mps=st.v, a_mps2=st.a,
                             len_m=st.length, wid_m=st.width, role=role, decision="")
                writer.writerow(format_row(row))


def load_event_file(path, event_id: str, site_id: str, label: Action,
                    duration_s: float) -> MergeEvent:
    """Rebuild a MergeEvent from an event CSV written by write_event_files.

    The role column of event files is authoritative: each frame's states are
    bound to the role recorded with them rather than re-derived.
    """
    frames: list[EventFrame] = []
    decision_index: Optional[int] = None
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        grouped: dict = {}
        order: list[int] = []
        for row in reader:
            idx = int(row["frame"])
            if idx not in grouped:
                grouped[idx] = {"time_s": float(row["time_s"]), "roles": {}}
                order.append(idx)
            grouped[idx]["roles"][row["role"]] = ActorState(
                id=row["actor_id"], lane=int(row["lane"]), s=float(row["s_m"]),
                v=float(row["v_mps"]), d=float(row["d_m"]), a=float(row["a_mps2"]),
                length=float(row["len_m"]), width=float(row["wid_m"]))
    for pos, idx in enumerate(order):
        entry = grouped[idx]
        roles = entry["roles"]
        if "lag0" not in roles:
            raise TrajectoryFormatError(f"event frame {idx}: no lag0 state")
        frames.append(EventFrame(time_s=entry["time_s"],
                                 **{k: v for k, v in roles.items() if k in _ROLE_NAMES}))
        if decision_index is None and roles["lag0"].lane == 1:
            decision_index = pos
    if label is Action.KEEP_STRAIGHT:
        decision_index = None
    return MergeEvent(event_id=event_id, site_id=site_id, label=label,
                      duration_s=duration_s, frames=tuple(frames),
                      decision_index=decision_index)


def load_event_dir(path) -> list[MergeEvent]:
    """Load every event listed in a directory's manifest.csv."""
    root = Path(path)
    manifest = root / "manifest.csv"
    if not manifest.exists():
        raise TrajectoryFormatError(f"no manifest.csv in {root}")
    events = []
    with open(manifest, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in MANIFEST_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise TrajectoryFormatError(f"manifest missing columns: {', '.join(missing)}")
        for row in reader:
            label = (Action.CHANGE_LANES if row["label"] == "change_lanes"
                     else Action.KEEP_STRAIGHT)
            events.append(load_event_file(
                root / row["file"], row["event_id"], row["site_id"], label,
                float(row["duration_s"])))
    return events

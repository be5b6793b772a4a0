"""Synthetic merge scenes and labeled event sets.

Stand-ins for drone-recorded merge data: single-instant negotiation scenes
spanning benign to high-pressure geometry, and multi-frame events labeled
by a hidden decision model (optionally with label noise, which makes the
set non-separable the way heterogeneous real drivers are).  Everything is
driven by a caller-supplied generator, so sets are reproducible.
"""

from __future__ import annotations

from dataclasses import replace
from typing import Union

import numpy as np

from .extraction import EventFrame, MergeEvent
from .game import Action, MbrgtParams
from .longitudinal import DEFAULT_IDM, IdmParams
from .mobil import MobilParams
from .scene import ActorState, LaneTopology

DEFAULT_TOPOLOGY = LaneTopology(lane_width_m=3.7, ramp_end_s_m=300.0, road_length_m=1000.0)

Scene = tuple[tuple[ActorState, ...], LaneTopology, str]


def benign_scene(rng: np.random.Generator) -> Scene:
    """No merge pressure: no ramp actor, mild gaps everywhere, keeping favored."""
    ego_s = 150.0 + rng.uniform(-5.0, 5.0)
    ego_v = 30.0 + rng.uniform(-0.5, 0.5)
    ego = ActorState(id="ego", lane=0, s=ego_s, v=ego_v)
    actors = (
        ego,
        ActorState(id="lead0", lane=0, s=ego_s + 75.0 + rng.uniform(-5.0, 5.0),
                   v=ego_v + 0.5 + rng.uniform(0.0, 0.3)),
        ActorState(id="lead1", lane=1, s=ego_s + 65.0 + rng.uniform(-5.0, 5.0),
                   v=ego_v + 0.5 + rng.uniform(0.0, 0.3)),
        ActorState(id="lag1", lane=1, s=ego_s - 35.0 + rng.uniform(-5.0, 5.0),
                   v=max(0.0, ego_v - 0.5 - rng.uniform(0.0, 0.3))),
    )
    return actors, DEFAULT_TOPOLOGY, "ego"


def pressure_scene(rng: np.random.Generator) -> Scene:
    """Strong merge pressure: slow ramp actor close ahead, safe passing lane."""
    ego_s = 200.0 + rng.uniform(-5.0, 5.0)
    ego_v = 31.0 + rng.uniform(-0.5, 0.5)
    ego = ActorState(id="ego", lane=0, s=ego_s, v=ego_v)
    actors = (
        ego,
        ActorState(id="ma", lane=-1, s=ego_s + 12.0 + rng.uniform(0.0, 10.0),
                   v=max(0.0, ego_v - 6.0 - rng.uniform(0.0, 2.0))),
        ActorState(id="lead0", lane=0, s=ego_s + 90.0 + rng.uniform(0.0, 10.0), v=ego_v),
        ActorState(id="lead1", lane=1, s=ego_s + 80.0 + rng.uniform(0.0, 10.0),
                   v=ego_v + 1.0 + rng.uniform(0.0, 0.5)),
        ActorState(id="lag1", lane=1, s=ego_s - 45.0 - rng.uniform(0.0, 10.0),
                   v=max(0.0, ego_v - 1.0 - rng.uniform(0.0, 1.0))),
    )
    return actors, DEFAULT_TOPOLOGY, "ego"


def scene_suite(rng: np.random.Generator, n_benign: int = 10,
                n_pressure: int = 10) -> tuple[list[Scene], list[Scene]]:
    """Fixed-size benign and pressure scene lists from one generator."""
    return ([benign_scene(rng) for _ in range(n_benign)],
            [pressure_scene(rng) for _ in range(n_pressure)])


def synthetic_event(rng: np.random.Generator, pressure: float,
                    dt: float = 0.1) -> MergeEvent:
    """One unlabeled negotiation event with constant-speed role kinematics.

    ``pressure`` in [0, 1] interpolates the ramp actor from distant and
    speed-matched to close and much slower; passing-lane geometry varies
    independently.  Duration lands in (5, 8.5] s as qualification requires.
    """
    if not 0.0 <= pressure <= 1.0:
        raise ValueError("pressure must be in [0, 1]")
    duration = rng.uniform(5.2, 8.5)
    n_frames = int(duration / dt) + 1
    ego_v = rng.uniform(27.0, 32.0)
    ego_s0 = 100.0

    ma_gap = 55.0 - 45.0 * pressure + rng.uniform(-3.0, 3.0)
    ma_dv = 0.5 + 7.5 * pressure + rng.uniform(-0.5, 0.5)
    ma_v = max(0.0, ego_v - ma_dv)
    lead0_gap = rng.uniform(45.0, 90.0)
    lead0_v = ego_v + rng.uniform(-0.5, 1.0)
    has_lead1 = rng.random() < 0.9
    lead1_gap = rng.uniform(30.0, 90.0)
    lead1_v = ego_v + rng.uniform(-1.0, 1.5)
    has_lag1 = rng.random() < 0.8
    lag1_gap = rng.uniform(15.0, 55.0)
    lag1_v = ego_v + rng.uniform(-2.0, 2.0)

    frames = []
    for i in range(n_frames):
        t = i * dt
        ego = ActorState(id="ego", lane=0, s=ego_s0 + ego_v * t, v=ego_v)
        ma = ActorState(id="ma", lane=-1, s=ego_s0 + ma_gap + ma_v * t, v=ma_v)
        lead0 = ActorState(id="lead0", lane=0, s=ego_s0 + lead0_gap + lead0_v * t,
                           v=max(0.0, lead0_v))
        lead1 = (ActorState(id="lead1", lane=1, s=ego_s0 + lead1_gap + lead1_v * t,
                            v=max(0.0, lead1_v)) if has_lead1 else None)
        lag1 = (ActorState(id="lag1", lane=1, s=ego_s0 - lag1_gap + lag1_v * t,
                           v=max(0.0, lag1_v)) if has_lag1 else None)
        frames.append(EventFrame(time_s=t, lag0=ego, ma=ma, lead0=lead0,
                                 lag1=lag1, lead1=lead1))
    return MergeEvent(event_id=f"syn_{rng.integers(1 << 30)}", site_id="synthetic",
                      label=Action.KEEP_STRAIGHT, duration_s=(n_frames - 1) * dt,
                      frames=tuple(frames))


def labeled_event_set(rng: np.random.Generator, n: int,
                      model: str,
                      hidden_params: Union[MobilParams, MbrgtParams],
                      idm: IdmParams = DEFAULT_IDM,
                      label_noise: float = 0.0,
                      min_per_class: int = 2) -> list[MergeEvent]:
    """Events labeled by a hidden model, optionally with flipped labels.

    Pressure is drawn uniformly so the hidden model produces both classes;
    generation retries until each class holds at least ``min_per_class``
    events (raises after a bounded number of attempts if the hidden model
    cannot produce one of the classes).

    Args:
        rng: generator driving geometry, labels and noise.
        n: number of events.
        model: "mobil" or "mbrgt", selects the hidden decision rule.
        hidden_params: parameters of the hidden model.
        idm: car-following parameters used for labeling.
        label_noise: probability of flipping each label.
        min_per_class: minimum events required per class.

    Returns:
        Labeled events, lane-change events carrying decision_index None
        (the decision instant is unobserved for synthetic data).
    """
    from .calibration import predict_event  # local import avoids a cycle

    for _ in range(50):
        events = []
        for _ in range(n):
            event = synthetic_event(rng, pressure=float(rng.uniform(0.0, 1.0)))
            label = predict_event(model, hidden_params, event, idm)
            if label_noise > 0.0 and rng.random() < label_noise:
                label = (Action.KEEP_STRAIGHT if label is Action.CHANGE_LANES
                         else Action.CHANGE_LANES)
            events.append(replace(event, label=label))
        n_lc = sum(1 for e in events if e.label is Action.CHANGE_LANES)
        if min(n_lc, n - n_lc) >= min_per_class:
            return events
    raise RuntimeError("hidden model failed to produce both behavior classes")

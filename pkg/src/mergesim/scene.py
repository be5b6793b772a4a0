"""Road geometry, actor kinematics and negotiation-role assignment.

Coordinates are road-aligned: ``s`` runs along the road in metres, lateral
position is expressed as an offset ``d`` from the centre of the attributed
lane.  Lanes are numbered -1 (on-ramp), 0 (cruising lane) and 1 (passing
lane); the ramp joins from the right, so lane centres sit at
``lane * lane_width_m``.

Role vocabulary around a merge: MA is the merging actor on the ramp, Lag0 is
the cruising-lane vehicle negotiating with it, Lead0 its leader, Lag1/Lead1
the passing-lane vehicles behind/ahead of Lag0.  All functions here are pure;
the state types are frozen and safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

LANE_IDS = (-1, 0, 1)

# A merging actor is considered bindable to an ego while it sits inside
# [s(ego) - MA_WINDOW_M, ramp end]; the same radius bounds proximity in
# event extraction.
MA_WINDOW_M = 60.0  # m


@dataclass(frozen=True)
class LaneTopology:
    """Straight three-lane merge geometry: ramp (-1), cruising (0), passing (1)."""

    lane_width_m: float = 3.7  # m
    ramp_end_s_m: float = 300.0  # m, ramp lane is gone past this point
    road_length_m: float = 1000.0  # m

    def __post_init__(self) -> None:
        if self.lane_width_m <= 0.0:
            raise ValueError("lane_width_m must be > 0")
        if self.ramp_end_s_m <= 0.0:
            raise ValueError("ramp_end_s_m must be > 0")
        if self.road_length_m < self.ramp_end_s_m:
            raise ValueError("road_length_m must be >= ramp_end_s_m")

    def lane_center(self, lane: int) -> float:
        """Lateral centre of a lane in metres."""
        if lane not in LANE_IDS:
            raise ValueError(f"unknown lane id {lane}")
        return lane * self.lane_width_m

    def attribute_lane(self, y: float) -> int:
        """Nearest lane centre to global lateral position ``y``; ties go to the lower id."""
        return min(LANE_IDS, key=lambda lane: (abs(y - self.lane_center(lane)), lane))


@dataclass(frozen=True)
class ActorState:
    """Kinematic snapshot of one vehicle.

    ``s`` is the front-bumper position along the road, so the body occupies
    [s - length, s]; ``d`` is the lateral offset from the attributed lane
    centre.
    """

    id: str
    lane: int
    s: float  # m
    v: float  # m/s
    d: float = 0.0  # m
    a: float = 0.0  # m/s^2
    length: float = 4.5  # m
    width: float = 1.8  # m

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("actor id must be non-empty")
        if self.lane not in LANE_IDS:
            raise ValueError(f"actor {self.id!r}: unknown lane id {self.lane}")
        if self.v < 0.0:
            raise ValueError(f"actor {self.id!r}: speed must be >= 0")
        if self.length <= 0.0 or self.width <= 0.0:
            raise ValueError(f"actor {self.id!r}: length and width must be > 0")


@dataclass(frozen=True)
class RoleAssignment:
    """Actor ids bound to merge-negotiation roles; optional roles may be None."""

    lag0: str
    ma: Optional[str] = None
    lead0: Optional[str] = None
    lag1: Optional[str] = None
    lead1: Optional[str] = None

    def bound_ids(self) -> tuple[str, ...]:
        ids = [self.lag0]
        for other in (self.ma, self.lead0, self.lag1, self.lead1):
            if other is not None:
                ids.append(other)
        return tuple(ids)


def bumper_gap(leader: ActorState, follower: ActorState,
               use_follower_length: bool = False) -> float:
    """Bumper-to-bumper gap between a leader and its follower.

    The default subtracts the leader's length (car-following convention);
    crash-avoidance deceleration uses the follower's length instead.
    """
    length = follower.length if use_follower_length else leader.length
    return leader.s - follower.s - length


def _nearest(actors: Iterable[ActorState], ref_s: float) -> Optional[str]:
    best = min(actors, key=lambda a: (abs(a.s - ref_s), a.id), default=None)
    return None if best is None else best.id


def assign_roles(scene: Sequence[ActorState], topology: LaneTopology,
                 lag0_id: str) -> RoleAssignment:
    """Bind negotiation roles around a cruising-lane ego.

    MA is the nearest ramp actor inside [s(ego) - 60 m, ramp end]; Lead0/Lead1
    are the nearest actors strictly ahead in lanes 0/1, Lag1 the nearest
    passing-lane actor at or behind the ego.  Ties break on distance then id,
    and no actor is bound to two roles.

    Args:
        scene: all actor states at one instant.
        topology: road geometry (supplies the ramp end).
        lag0_id: id of the ego; must exist and be in lane 0.

    Returns:
        RoleAssignment with the ego as lag0 and any resolvable neighbours.
    """
    by_id = {actor.id: actor for actor in scene}
    if lag0_id not in by_id:
        raise ValueError(f"unknown actor id {lag0_id!r}")
    lag0 = by_id[lag0_id]
    if lag0.lane != 0:
        raise ValueError(f"actor {lag0_id!r} is in lane {lag0.lane}, not the cruising lane")

    others = [actor for actor in scene if actor.id != lag0_id]
    ma = _nearest(
        (a for a in others
         if a.lane == -1 and lag0.s - MA_WINDOW_M <= a.s <= topology.ramp_end_s_m),
        lag0.s)
    lead0 = _nearest((a for a in others if a.lane == 0 and a.s > lag0.s), lag0.s)
    lead1 = _nearest((a for a in others if a.lane == 1 and a.s > lag0.s), lag0.s)
    lag1 = _nearest((a for a in others if a.lane == 1 and a.s <= lag0.s), lag0.s)
    return RoleAssignment(lag0=lag0_id, ma=ma, lead0=lead0, lag1=lag1, lead1=lead1)

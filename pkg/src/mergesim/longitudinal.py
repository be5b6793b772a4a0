"""Car-following accelerations and the four-case merge projection.

The base model is the Intelligent Driver Model; the merge-reactive variant
adds the merging actor as a second stimulus, projected as a ghost into the
ego's lane with its interaction term scaled by ``zeta``, and takes the
minimum (most cautious) response.  The projection enumerates the 2x2 joint
action space of a merge negotiation: ego keeps straight or changes to the
passing lane, the passing-lane follower yields or not, and records the
accelerations and crash-avoidance decelerations each combination implies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .scene import ActorState, RoleAssignment, bumper_gap

HARD_BRAKE_MPS2 = 9.0  # m/s^2, applied when a gap has collapsed to zero or less
DRAC_MAX_MPS2 = 10.0  # m/s^2, bounds crash-avoidance deceleration in degenerate geometry

# Action indices shared by every 2x2 array in this package:
# rows i = ego action (0 keep straight, 1 change lanes),
# cols j = passing-lane follower action (0 do not yield, 1 yield).
KEEP, CHANGE = 0, 1
NO_YIELD, YIELD = 0, 1


@dataclass(frozen=True)
class IdmParams:
    """Intelligent-driver-model parameters, defaults per the merge-reactive fit."""

    s0: float = 2.0  # m, jam distance
    T: float = 1.6  # s, desired time headway
    a_max: float = 0.73  # m/s^2, maximum acceleration
    b_comf: float = 1.67  # m/s^2, comfortable deceleration
    v0: float = 33.33  # m/s, desired speed
    delta: float = 4.0  # free-flow exponent
    zeta: float = 1.0  # scaling of the merging-actor interaction term

    def __post_init__(self) -> None:
        for name in ("s0", "T", "a_max", "b_comf", "v0", "delta", "zeta"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be > 0")


DEFAULT_IDM = IdmParams()


def idm_accel(v: float, v_lead: Optional[float] = None, gap: float = math.inf,
              params: IdmParams = DEFAULT_IDM, interaction_scale: float = 1.0) -> float:
    """IDM acceleration for an ego at speed ``v``.

    With no leader (``v_lead`` None or infinite gap) this is the free-flow
    term alone.  A non-positive gap with a leader present returns the hard
    brake.  The desired-gap dynamic term is clamped at zero so the response
    never increases with ego speed.

    Args:
        v: ego speed [m/s], >= 0.
        v_lead: leader speed [m/s], or None for free flow.
        gap: bumper-to-bumper gap to the leader [m].
        params: model parameters.
        interaction_scale: multiplier on the interaction term (ghost stimuli
            use ``params.zeta``).

    Returns:
        Acceleration in m/s^2, never above ``params.a_max``.
    """
    if v < 0.0:
        raise ValueError("speed must be >= 0")
    free = params.a_max * (1.0 - (v / params.v0) ** params.delta)
    if v_lead is None or math.isinf(gap):
        return free
    if gap <= 0.0:
        return -HARD_BRAKE_MPS2
    s_star = params.s0 + max(0.0, v * params.T
                             + v * (v - v_lead) / (2.0 * math.sqrt(params.a_max * params.b_comf)))
    return free - params.a_max * interaction_scale * (s_star / gap) ** 2


def mr_idm_accel(ego: ActorState, lead: Optional[ActorState], ma: Optional[ActorState],
                 params: IdmParams = DEFAULT_IDM) -> float:
    """Merge-reactive acceleration: minimum over lane leader and merging-actor ghost.

    The merging actor is considered only while it is ahead of the ego and
    within 60 m; it is projected into the ego's lane at its own s and v, and
    its interaction term is scaled by ``params.zeta``.  With no stimuli the
    free-flow response is returned.
    """
    responses = [idm_accel(ego.v, None, math.inf, params)]
    if lead is not None:
        responses.append(idm_accel(ego.v, lead.v, bumper_gap(lead, ego), params))
    if ma is not None and 0.0 < ma.s - ego.s <= 60.0:
        ghost_gap = bumper_gap(ma, ego)
        responses.append(idm_accel(ego.v, ma.v, ghost_gap, params,
                                   interaction_scale=params.zeta))
    return min(responses)


def drac(leader: ActorState, follower: ActorState) -> float:
    """Deceleration rate to avoid the crash, for a follower closing on a leader.

    Zero when the follower is not faster than the leader.  The denominator is
    the gap measured with the follower's length; non-positive or vanishing
    gaps saturate at ``DRAC_MAX_MPS2``.
    """
    if follower.v <= leader.v:
        return 0.0
    clearance = bumper_gap(leader, follower, use_follower_length=True)
    if clearance <= 0.0:
        return DRAC_MAX_MPS2
    return min(DRAC_MAX_MPS2, (leader.v - follower.v) ** 2 / clearance)


@dataclass(frozen=True)
class AccelProjection:
    """Projected accelerations and crash-avoidance decelerations over the 2x2 action grid.

    Every array is indexed [i, j] with i the ego action (0 keep, 1 change)
    and j the passing-lane follower action (0 no-yield, 1 yield).  Cells
    whose actor is absent are exactly 0.
    """

    a_lag0: np.ndarray  # m/s^2, ego acceleration per joint action
    a_lag1: np.ndarray  # m/s^2, passing-lane follower acceleration per joint action
    drac_lag0_lead1: np.ndarray  # ego onto its new leader after a change
    drac_lag1_lag0: np.ndarray  # follower onto the ego entering its lane
    drac_lag0_lead0: np.ndarray  # ego onto its current-lane leader while keeping
    drac_lag1_lead1: np.ndarray  # follower onto its own leader

    @property
    def a_keep(self) -> float:
        return float(self.a_lag0[KEEP, NO_YIELD])

    @property
    def a_change(self) -> float:
        return float(self.a_lag0[CHANGE, NO_YIELD])

    @property
    def follower_before(self) -> float:
        """New-follower acceleration if the ego stays out of its lane."""
        return float(self.a_lag1[CHANGE, NO_YIELD])

    @property
    def follower_after(self) -> float:
        """New-follower acceleration once it must react to the ego ahead."""
        return float(self.a_lag1[CHANGE, YIELD])


def project_role_states(lag0: ActorState,
                        lead0: Optional[ActorState] = None,
                        ma: Optional[ActorState] = None,
                        lag1: Optional[ActorState] = None,
                        lead1: Optional[ActorState] = None,
                        params: IdmParams = DEFAULT_IDM) -> AccelProjection:
    """Build the 2x2 projection from explicit role states.

    Ego rows: keeping straight responds to Lead0 and the merging actor
    (merge-reactive minimum); changing lanes responds to Lead1 alone.  The
    follower's columns: no-yield follows Lead1 as if the ego were absent,
    yield additionally reacts to the ego ahead and takes the more cautious
    response.  Crash-avoidance terms are recorded for exactly the conflicts
    each joint action creates.
    """
    a_keep = mr_idm_accel(lag0, lead0, ma, params)
    if lead1 is not None:
        a_change = idm_accel(lag0.v, lead1.v, bumper_gap(lead1, lag0), params)
    else:
        a_change = idm_accel(lag0.v, None, math.inf, params)
    a_lag0 = np.array([[a_keep, a_keep], [a_change, a_change]])

    if lag1 is not None:
        if lead1 is not None:
            follow_lead1 = idm_accel(lag1.v, lead1.v, bumper_gap(lead1, lag1), params)
        else:
            follow_lead1 = idm_accel(lag1.v, None, math.inf, params)
        react_to_ego = idm_accel(lag1.v, lag0.v, bumper_gap(lag0, lag1), params)
        a_lag1 = np.array([[follow_lead1, min(follow_lead1, react_to_ego)]] * 2)
    else:
        a_lag1 = np.zeros((2, 2))

    d_keep = drac(lead0, lag0) if lead0 is not None else 0.0
    d_change = drac(lead1, lag0) if lead1 is not None else 0.0
    d_cut_in = drac(lag0, lag1) if lag1 is not None else 0.0
    d_follow = drac(lead1, lag1) if lag1 is not None and lead1 is not None else 0.0
    return AccelProjection(
        a_lag0=a_lag0,
        a_lag1=a_lag1,
        drac_lag0_lead1=np.array([[0.0, 0.0], [d_change, d_change]]),
        # conflict only arises if the ego enters and the follower does not yield
        drac_lag1_lag0=np.array([[0.0, 0.0], [d_cut_in, 0.0]]),
        drac_lag0_lead0=np.array([[d_keep, d_keep], [0.0, 0.0]]),
        drac_lag1_lead1=np.full((2, 2), d_follow),
    )


def project_accelerations(scene: Sequence[ActorState], roles: RoleAssignment,
                          params: IdmParams = DEFAULT_IDM) -> AccelProjection:
    """Resolve a role assignment against a scene and build the 2x2 projection."""
    by_id = {actor.id: actor for actor in scene}

    def resolve(actor_id: Optional[str]) -> Optional[ActorState]:
        if actor_id is None:
            return None
        if actor_id not in by_id:
            raise ValueError(f"role refers to unknown actor id {actor_id!r}")
        return by_id[actor_id]

    lag0 = resolve(roles.lag0)
    assert lag0 is not None
    return project_role_states(
        lag0=lag0,
        lead0=resolve(roles.lead0),
        ma=resolve(roles.ma),
        lag1=resolve(roles.lag1),
        lead1=resolve(roles.lead1),
        params=params,
    )

"""Incentive-based lane-change baseline.

A change into the passing lane is allowed when it is safe for the new
follower (post-change deceleration no worse than -b_safe) and the ego's
acceleration gain strictly exceeds the politeness-weighted deceleration it
imposes on the surrounding followers plus a switching threshold.  Lane
asymmetry is expected to be folded into the threshold, so no separate bias
term appears.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .game import Action, Decision
from .longitudinal import AccelProjection


@dataclass(frozen=True)
class MobilParams:
    """Politeness-model parameters; intervals match the calibration bounds."""

    b_safe: float  # m/s^2, safe braking limit for the new follower, in (0, 4)
    da_th: float  # m/s^2, acceleration-gain threshold, in (0, 4)
    p: float  # politeness, in (-3, 3); negative values are actively selfish

    def __post_init__(self) -> None:
        if not 0.0 < self.b_safe < 4.0:
            raise ValueError("b_safe must lie in (0, 4)")
        if not 0.0 < self.da_th < 4.0:
            raise ValueError("da_th must lie in (0, 4)")
        if not -3.0 < self.p < 3.0:
            raise ValueError("p must lie in (-3, 3)")


@dataclass(frozen=True)
class FollowerAccels:
    """Follower accelerations before/after the candidate change [m/s^2].

    ``new_*`` is the passing-lane follower, ``old_*`` the current-lane
    follower the ego would leave behind; absent followers contribute 0.
    """

    new_before: float
    new_after: float
    old_before: float = 0.0
    old_after: float = 0.0

    @classmethod
    def from_projection(cls, proj: AccelProjection) -> "FollowerAccels":
        return cls(new_before=proj.follower_before, new_after=proj.follower_after)


def mobil_decide(proj: AccelProjection, params: MobilParams,
                 followers: Optional[FollowerAccels] = None) -> Decision:
    """Safety-then-incentive lane-change test on a 2x2 acceleration projection.

    Args:
        proj: four-case projection for the candidate change.
        params: politeness-model parameters.
        followers: follower accelerations; derived from ``proj`` when omitted.

    Returns:
        Decision with probability_change 1.0 or 0.0 (the test is binary).
    """
    if followers is None:
        followers = FollowerAccels.from_projection(proj)
    if followers.new_after < -params.b_safe:
        return Decision(Action.KEEP_STRAIGHT, 0.0)
    gain = proj.a_change - proj.a_keep
    imposed = ((followers.new_before - followers.new_after)
               + (followers.old_before - followers.old_after))
    if gain > params.p * imposed + params.da_th:
        return Decision(Action.CHANGE_LANES, 1.0)
    return Decision(Action.KEEP_STRAIGHT, 0.0)

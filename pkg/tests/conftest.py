"""Shared fixtures: actor builders, scene suites and a hand-built trajectory log.

The trajectory fixture lays out seven independent road regions, far enough
apart that proximity checks cannot couple them.  Three regions produce
qualifying negotiation events (two keep-straight, one lane-change) and four
are disqualified for exactly one reason each: window not longer than 5 s, a
ramp visit by the candidate, no ramp actor ever within 60 m, and a
passing-lane-follower presence run that trims the window below 5 s.
"""

import numpy as np
import pytest

from mergesim.engine import LogRow, write_trajectory_log
from mergesim.scene import ActorState, LaneTopology
from mergesim.synthetic import scene_suite

FIXTURE_DT_S = 0.1
FIXTURE_FRAMES = 201  # t = 0.0 .. 20.0 s


def make_actor(id="a", lane=0, s=0.0, v=30.0, **kw) -> ActorState:
    return ActorState(id=id, lane=lane, s=s, v=v, **kw)


@pytest.fixture
def topo() -> LaneTopology:
    return LaneTopology()


@pytest.fixture(scope="session")
def fixture_topology() -> LaneTopology:
    # long ramp so role binding works over the whole synthetic layout
    return LaneTopology(lane_width_m=3.7, ramp_end_s_m=10000.0, road_length_m=12000.0)


@pytest.fixture(scope="session")
def scene_suite_20():
    """Ten benign and ten pressure scenes, frozen by seed."""
    return scene_suite(np.random.default_rng(2026))


# --- trajectory log fixture -------------------------------------------------

# (actor, lane, base offset, present-frame range inclusive); candidate rides
# at region base + 30 t, everything else at a fixed offset from it.  Follower
# presence has no search radius, so regions without a passing-lane follower
# must sit below every region that has one.
_REGIONS = {
    # qualifying: 7.5 s window, no lag1 anywhere (no trimming path)
    "c": {"base": 0.0,
          "ma": (-30.0, (0, 75)), "lag1": None, "lc_frame": None},
    # rejected: window exactly 5.0 s (the > 5 s test is strict)
    "d": {"base": 1000.0,
          "ma": (20.0, (20, 70)), "lag1": None, "lc_frame": None},
    # rejected: candidate visits the ramp at t = 10..11
    "e": {"base": 2000.0,
          "ma": (20.0, (0, 80)), "lag1": None, "lc_frame": None, "ramp_visit": (100, 110)},
    # rejected: ramp actor present all along but 80 m ahead, never proximate
    "f": {"base": 3000.0,
          "ma": (80.0, (0, 200)), "lag1": None, "lc_frame": None},
    # rejected: 9 s proximity but lag1 present only 3 s, trimmed below 5 s
    "g": {"base": 4000.0,
          "ma": (20.0, (0, 90)), "lag1": (-15.0, (30, 60)), "lc_frame": None},
    # qualifying: 7.0 s proximity window, lag1 throughout, stays lane 0
    "a": {"base": 5000.0,
          "ma": (20.0, (20, 90)), "lag1": (-15.0, (0, 200)), "lc_frame": None},
    # qualifying: lane change at t = 6.0 inside a 7.0 s window
    "b": {"base": 6000.0,
          "ma": (25.0, (10, 80)), "lag1": (-20.0, (0, 200)), "lc_frame": 60},
}

QUALIFYING_EVENT_IDS = ("fix_cand_a_20", "fix_cand_b_10", "fix_cand_c_0")
EXPECTED_LABELS = {"fix_cand_a_20": "KEEP_STRAIGHT",
                   "fix_cand_b_10": "CHANGE_LANES",
                   "fix_cand_c_0": "KEEP_STRAIGHT"}


def _fixture_row(frame, actor_id, lane, s):
    d = lane * 3.7
    return LogRow(frame=frame, time_s=frame * FIXTURE_DT_S, actor_id=actor_id,
                  lane=lane, s_m=s, d_m=d, v_mps=30.0, a_mps2=0.0,
                  len_m=4.5, wid_m=1.8, role="", decision="")


def fixture_log_rows() -> list[LogRow]:
    rows = []
    for f in range(FIXTURE_FRAMES):
        t = f * FIXTURE_DT_S
        for name, reg in sorted(_REGIONS.items()):
            cand_s = reg["base"] + 30.0 * t
            lane = 0
            if reg.get("ramp_visit") and reg["ramp_visit"][0] <= f <= reg["ramp_visit"][1]:
                lane = -1
            elif reg["lc_frame"] is not None and f >= reg["lc_frame"]:
                lane = 1
            rows.append(_fixture_row(f, f"cand_{name}", lane, cand_s))
            off, (lo, hi) = reg["ma"]
            if lo <= f <= hi:
                rows.append(_fixture_row(f, f"ma_{name}", -1, cand_s + off))
            if reg["lag1"] is not None:
                off, (lo, hi) = reg["lag1"]
                if lo <= f <= hi:
                    rows.append(_fixture_row(f, f"lag1_{name}", 1, cand_s + off))
    return rows


@pytest.fixture(scope="session")
def fixture_log_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("trajlog") / "fixture.csv"
    write_trajectory_log(fixture_log_rows(), path)
    return path

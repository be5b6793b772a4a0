"""Rule-based lane-change criterion: safety veto and incentive threshold."""

import numpy as np
import pytest

from mergesim.game import Action
from mergesim.longitudinal import AccelProjection, project_role_states
from mergesim.mobil import FollowerAccels, MobilParams, mobil_decide

from conftest import make_actor


def _projection(a_keep, a_change, nf_before=0.0, nf_after=0.0):
    a_lag0 = np.array([[a_keep, a_keep], [a_change, a_change]])
    a_lag1 = np.array([[0.0, 0.0], [nf_before, nf_after]])
    zeros = np.zeros((2, 2))
    return AccelProjection(a_lag0=a_lag0, a_lag1=a_lag1,
                           drac_lag0_lead1=zeros, drac_lag1_lag0=zeros,
                           drac_lag0_lead0=zeros, drac_lag1_lead1=zeros)


def test_safety_veto_blocks_any_gain():
    params = MobilParams(b_safe=2.0, da_th=0.1, p=0.0)
    proj = _projection(a_keep=-3.0, a_change=1.0, nf_before=0.0, nf_after=-2.5)
    assert mobil_decide(proj, params).action is Action.KEEP_STRAIGHT


def test_incentive_threshold():
    params = MobilParams(b_safe=3.9, da_th=1.0, p=1.0)
    # gain 2.0, imposed 0.5: 2.0 > 1.0 * 0.5 + 1.0
    go = _projection(a_keep=-1.0, a_change=1.0, nf_before=0.0, nf_after=-0.5)
    assert mobil_decide(go, params).action is Action.CHANGE_LANES
    # gain 1.4 fails the same threshold
    stay = _projection(a_keep=-0.4, a_change=1.0, nf_before=0.0, nf_after=-0.5)
    assert mobil_decide(stay, params).action is Action.KEEP_STRAIGHT


def test_incentive_is_strict_at_equality():
    params = MobilParams(b_safe=3.9, da_th=1.0, p=0.5)
    # gain exactly equals p * imposed + da_th
    proj = _projection(a_keep=0.0, a_change=1.5, nf_before=0.0, nf_after=-1.0)
    assert mobil_decide(proj, params).action is Action.KEEP_STRAIGHT


def test_zero_politeness_ignores_imposition():
    params = MobilParams(b_safe=3.9, da_th=0.5, p=1e-12)
    proj = _projection(a_keep=-1.0, a_change=0.0, nf_before=0.0, nf_after=-3.0)
    assert mobil_decide(proj, params).action is Action.CHANGE_LANES


def test_negative_politeness_rewards_imposition():
    # a pushy driver: the follower's loss lowers the effective threshold
    pushy = MobilParams(b_safe=3.9, da_th=1.0, p=-1.0)
    polite = MobilParams(b_safe=3.9, da_th=1.0, p=1.0)
    proj = _projection(a_keep=-0.2, a_change=0.5, nf_before=0.0, nf_after=-0.5)
    assert mobil_decide(proj, pushy).action is Action.CHANGE_LANES
    assert mobil_decide(proj, polite).action is Action.KEEP_STRAIGHT


def test_threshold_monotone_in_da_th():
    rng = np.random.default_rng(77)
    for _ in range(300):
        proj = _projection(a_keep=float(rng.uniform(-4, 1)),
                           a_change=float(rng.uniform(-4, 1)),
                           nf_before=float(rng.uniform(-2, 1)),
                           nf_after=float(rng.uniform(-3.5, 1)))
        lo = MobilParams(b_safe=2.0, da_th=0.5, p=0.3)
        hi = MobilParams(b_safe=2.0, da_th=1.5, p=0.3)
        if mobil_decide(proj, hi).action is Action.CHANGE_LANES:
            assert mobil_decide(proj, lo).action is Action.CHANGE_LANES


def test_decision_invariant_under_common_accel_shift():
    rng = np.random.default_rng(78)
    for _ in range(300):
        a_keep = float(rng.uniform(-4, 1))
        a_change = float(rng.uniform(-4, 1))
        nf_after = float(rng.uniform(-3.5, 1))
        shift = float(rng.uniform(-2, 2))
        params = MobilParams(b_safe=3.9, da_th=0.8, p=0.4)
        base = mobil_decide(_projection(a_keep, a_change, 0.0, nf_after), params)
        moved = mobil_decide(
            _projection(a_keep + shift, a_change + shift, 0.0, nf_after), params)
        assert base.action is moved.action


def test_follower_accels_from_projection():
    lag0 = make_actor("ego", lane=0, s=100.0, v=30.0)
    lag1 = make_actor("lag1", lane=1, s=60.0, v=31.0)
    lead1 = make_actor("lead1", lane=1, s=200.0, v=30.0)
    proj = project_role_states(lag0, lag1=lag1, lead1=lead1)
    acc = FollowerAccels.from_projection(proj)
    assert acc.new_before == proj.a_lag1[1, 0]
    assert acc.new_after == proj.a_lag1[1, 1]


def test_params_validation_open_intervals():
    with pytest.raises(ValueError):
        MobilParams(b_safe=0.0, da_th=1.0, p=0.5)
    with pytest.raises(ValueError):
        MobilParams(b_safe=4.0, da_th=1.0, p=0.5)
    with pytest.raises(ValueError):
        MobilParams(b_safe=1.0, da_th=0.0, p=0.5)
    with pytest.raises(ValueError):
        MobilParams(b_safe=1.0, da_th=1.0, p=3.0)
    with pytest.raises(ValueError):
        MobilParams(b_safe=1.0, da_th=1.0, p=-3.0)
    MobilParams(b_safe=3.99, da_th=3.99, p=2.99)  # inside the open box

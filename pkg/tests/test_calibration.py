"""Event prediction, success rates, costs and the multi-start fit."""

import numpy as np
import pytest

from mergesim.calibration import (CalibrationDataError, OptimizationResult,
                                  OptimizationSpec, SuccessRates, behavior_cost,
                                  compile_events, cost_for_variant,
                                  default_bounds, multistart_optimize,
                                  overall_cost, predict_event, split_dataset,
                                  success_rates, vector_to_params,
                                  write_calibration_report, _predict_compiled)
from mergesim.extraction import EventFrame, MergeEvent
from mergesim.game import Action, MbrgtParams
from mergesim.mobil import MobilParams
from mergesim.synthetic import labeled_event_set

from conftest import make_actor

KEEP_ALWAYS = MobilParams(b_safe=3.99, da_th=3.99, p=2.99)
CHANGE_PRONE = MobilParams(b_safe=3.99, da_th=0.01, p=0.01)


def _frame(t, pressured):
    lag0 = make_actor("ego", lane=0, s=200.0, v=31.0)
    roles = {"lag0": lag0}
    if pressured:
        roles["ma"] = make_actor("ma", lane=-1, s=216.0, v=24.0)
        roles["lead1"] = make_actor("lead1", lane=1, s=280.0, v=33.0)
    return EventFrame(time_s=t, **roles)


def _event(label, pressure_mask, decision_index=None, event_id="ev"):
    frames = tuple(_frame(0.1 * i, p) for i, p in enumerate(pressure_mask))
    return MergeEvent(event_id=event_id, site_id="t", label=label,
                      duration_s=6.0, frames=frames, decision_index=decision_index)


def test_predict_event_any_pressured_frame_triggers_change():
    calm = _event(Action.KEEP_STRAIGHT, [False] * 10)
    assert predict_event("mobil", CHANGE_PRONE, calm) is Action.KEEP_STRAIGHT
    spiky = _event(Action.KEEP_STRAIGHT, [False] * 9 + [True])
    assert predict_event("mobil", CHANGE_PRONE, spiky) is Action.CHANGE_LANES


def test_predict_event_ignores_frames_after_decision():
    # pressure appears only at the observed decision instant and later
    late = _event(Action.CHANGE_LANES, [False] * 5 + [True] * 5, decision_index=5)
    assert predict_event("mobil", CHANGE_PRONE, late) is Action.KEEP_STRAIGHT
    early = _event(Action.CHANGE_LANES, [False] * 4 + [True] * 6, decision_index=5)
    assert predict_event("mobil", CHANGE_PRONE, early) is Action.CHANGE_LANES


def test_predict_event_skips_non_cruising_frames():
    # a pressured frame is unusable once the ego sits in the passing lane
    moved = EventFrame(time_s=0.0, lag0=make_actor("ego", lane=1, s=205.0, v=31.0),
                       ma=make_actor("ma", lane=-1, s=216.0, v=24.0))
    event = MergeEvent(event_id="x", site_id="t", label=Action.KEEP_STRAIGHT,
                       duration_s=6.0, frames=(moved,))
    assert predict_event("mobil", CHANGE_PRONE, event) is Action.KEEP_STRAIGHT


def test_predict_event_mbrgt_presets_disagree_under_pressure():
    event = _event(Action.CHANGE_LANES, [True] * 10)
    from mergesim.presets import load_preset
    assert predict_event("mbrgt", load_preset("mbrgt-lc"), event) is Action.CHANGE_LANES
    calm = _event(Action.KEEP_STRAIGHT, [False] * 10)
    assert predict_event("mbrgt", load_preset("mbrgt-ks"), calm) is Action.KEEP_STRAIGHT


def _mild_event(label, event_id="ev"):
    """Moderate incentive gain (no merging actor): the da_th threshold decides."""
    fr = EventFrame(time_s=0.0,
                    lag0=make_actor("ego", lane=0, s=205.0, v=31.0),
                    lead0=make_actor("l0", lane=0, s=280.0, v=29.0),
                    lead1=make_actor("l1", lane=1, s=280.0, v=33.0))
    return MergeEvent(event_id=event_id, site_id="t", label=label,
                      duration_s=6.0, frames=(fr,) * 5)


def test_success_rates_exact_fractions():
    events = [
        _mild_event(Action.KEEP_STRAIGHT, "k1"),
        _mild_event(Action.KEEP_STRAIGHT, "k2"),
        _mild_event(Action.KEEP_STRAIGHT, "k3"),
        _mild_event(Action.CHANGE_LANES, "c1"),
    ]
    rates = success_rates("mobil", KEEP_ALWAYS, events)
    assert (rates.r_ks, rates.r_lc, rates.r_overall) == (100.0, 0.0, 75.0)
    assert (rates.n_ks, rates.n_lc) == (3, 1)
    flipped = success_rates("mobil", CHANGE_PRONE, events)
    assert (flipped.r_ks, flipped.r_lc, flipped.r_overall) == (0.0, 100.0, 25.0)


def test_success_rates_empty_class_is_vacuous():
    only_ks = [_event(Action.KEEP_STRAIGHT, [False] * 5)]
    rates = success_rates("mobil", KEEP_ALWAYS, only_ks)
    assert rates.r_lc == 100.0
    assert rates.r_overall == 100.0


def test_cost_hand_values():
    rates = SuccessRates(r_ks=91.8, r_lc=13.7, r_overall=89.2, n_ks=100, n_lc=10)
    # 0.4 * 86.3 + 0.3 * 8.2 + 0.3 * 10.8, computed by hand
    assert overall_cost(rates) == pytest.approx(40.22, abs=0.005)
    assert behavior_cost(rates, "ks") == pytest.approx(8.2)
    assert behavior_cost(rates, "lc") == pytest.approx(86.3)
    assert cost_for_variant(rates, "overall") == pytest.approx(overall_cost(rates))
    with pytest.raises(ValueError):
        behavior_cost(rates, "both")


def test_split_dataset_stratified_and_deterministic():
    events = ([_event(Action.KEEP_STRAIGHT, [False] * 3, event_id=f"k{i}")
               for i in range(10)]
              + [_event(Action.CHANGE_LANES, [True] * 3, event_id=f"c{i}")
                 for i in range(4)])
    train, hold = split_dataset(events, 0.7, np.random.default_rng(2))
    assert len(train) == 7 + 2
    assert len(hold) == 3 + 2
    ids = sorted(e.event_id for e in train + hold)
    assert ids == sorted(e.event_id for e in events)
    again_train, again_hold = split_dataset(events, 0.7, np.random.default_rng(2))
    assert [e.event_id for e in again_train] == [e.event_id for e in train]
    assert [e.event_id for e in again_hold] == [e.event_id for e in hold]


def test_split_dataset_errors():
    few = [_event(Action.KEEP_STRAIGHT, [False] * 3, event_id="k0"),
           _event(Action.KEEP_STRAIGHT, [False] * 3, event_id="k1"),
           _event(Action.CHANGE_LANES, [True] * 3, event_id="c0")]
    with pytest.raises(CalibrationDataError, match="change_lanes"):
        split_dataset(few, 0.7, np.random.default_rng(0))
    with pytest.raises(ValueError):
        split_dataset(few, 1.2, np.random.default_rng(0))


def test_vector_to_params_open_interval_nudge():
    p = vector_to_params("mobil", [0.0, 4.0, -3.0])
    assert 0.0 < p.b_safe < 4.0
    assert 0.0 < p.da_th < 4.0
    assert -3.0 < p.p < 3.0
    g = vector_to_params("mbrgt", [-1.0, 1, 2, 3, 4, 5, 6, 7])
    assert g.w1 == 0.0


def test_optimization_spec_validation():
    bounds = default_bounds("mobil")
    with pytest.raises(ValueError):
        OptimizationSpec(model="other", bounds=bounds)
    with pytest.raises(ValueError):
        OptimizationSpec(model="mobil", bounds=bounds[:2])
    with pytest.raises(ValueError):
        OptimizationSpec(model="mobil", bounds=bounds, starts=0)
    with pytest.raises(ValueError):
        OptimizationSpec(model="mobil", bounds=bounds, cost="speed")
    with pytest.raises(ValueError):
        OptimizationSpec(model="mbrgt", bounds=((1.0, 0.0),) * 8)


@pytest.fixture(scope="module")
def mobil_events():
    hidden = MobilParams(b_safe=1.5, da_th=0.8, p=0.3)
    return labeled_event_set(np.random.default_rng(21), 160, "mobil", hidden)


def test_compiled_predictions_match_public_path(mobil_events):
    events = mobil_events[:40]
    compiled = compile_events(events)
    rng = np.random.default_rng(5)
    for _ in range(6):
        vec = [float(rng.uniform(lo, hi)) for lo, hi in default_bounds("mobil")]
        params = vector_to_params("mobil", vec)
        for ce, ev in zip(compiled, events):
            assert (_predict_compiled("mobil", vec, ce)
                    is predict_event("mobil", params, ev))
    for _ in range(3):
        vec = [float(rng.uniform(0.0, 10.0)) for _ in range(8)]
        params = vector_to_params("mbrgt", vec)
        for ce, ev in zip(compiled, events):
            assert (_predict_compiled("mbrgt", vec, ce)
                    is predict_event("mbrgt", params, ev))


def test_multistart_recovers_hidden_mobil_params(mobil_events):
    train, hold = split_dataset(mobil_events, 0.7, np.random.default_rng(3))
    spec = OptimizationSpec(model="mobil", bounds=default_bounds("mobil"),
                            starts=6, cost="overall", seed=11)
    result = multistart_optimize(spec, train)
    assert isinstance(result, OptimizationResult)
    assert result.best_cost <= 2.0
    rates = success_rates("mobil", result.best_params, hold)
    assert rates.r_overall >= 90.0


def test_multistart_trace_integrity(mobil_events):
    train, _ = split_dataset(mobil_events, 0.7, np.random.default_rng(3))
    spec = OptimizationSpec(model="mobil", bounds=default_bounds("mobil"),
                            starts=5, cost="lc", seed=2,
                            max_evals_per_start=150)
    result = multistart_optimize(spec, train)
    assert len(result.starts) == 5
    for trace in result.starts:
        assert trace.cost_best <= trace.cost0 + 1e-12
        assert trace.n_evals <= 150 + 5
        for x, (lo, hi) in zip(trace.x_best, spec.bounds):
            assert lo - 1e-9 <= x <= hi + 1e-9
    best_costs = [t.cost_best for t in result.starts]
    min_cost = min(best_costs)
    assert result.best_start == best_costs.index(min_cost)
    assert result.best_cost == pytest.approx(min_cost)


def test_mbrgt_optimization_smoke():
    hidden = MbrgtParams(w1=5.06, w2=3.90, w3=0.38, w4=1.71, w5=0.62,
                         u1=4.71, u2=4.24, u3=6.95)
    events = labeled_event_set(np.random.default_rng(33), 60, "mbrgt", hidden)
    train, hold = split_dataset(events, 0.7, np.random.default_rng(1))
    spec = OptimizationSpec(model="mbrgt", bounds=default_bounds("mbrgt", narrow=True),
                            starts=3, cost="lc", seed=7, max_evals_per_start=120)
    result = multistart_optimize(spec, train)
    assert np.isfinite(result.best_cost)
    train_rates = success_rates("mbrgt", result.best_params, train)
    assert train_rates.r_lc >= 80.0


def test_calibration_report_deterministic(mobil_events, tmp_path):
    train, hold = split_dataset(mobil_events, 0.7, np.random.default_rng(3))
    spec = OptimizationSpec(model="mobil", bounds=default_bounds("mobil"),
                            starts=3, cost="overall", seed=4)
    result = multistart_optimize(spec, train)
    t_rates = success_rates("mobil", result.best_params, train)
    h_rates = success_rates("mobil", result.best_params, hold)
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    write_calibration_report(out_a, spec, result, t_rates, h_rates)
    write_calibration_report(out_b, spec, result, t_rates, h_rates)
    assert (out_a / "report.yaml").read_bytes() == (out_b / "report.yaml").read_bytes()
    assert (out_a / "trace.csv").read_bytes() == (out_b / "trace.csv").read_bytes()
    text = (out_a / "report.yaml").read_text()
    assert "best:" in text and "holdout:" in text

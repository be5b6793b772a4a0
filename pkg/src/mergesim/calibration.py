"""Calibration of lane-change models against labeled merge events.

Per-event prediction replays the deterministic model over an event's role
frames; an event is predicted lane-change when any frame before the
observed decision instant says change.  Success rates per behavior class
are exact rationals until final conversion; costs either blend both classes
with the overall rate (0.4/0.3/0.3) or target a single class.  Fitting is
multi-start bounded Nelder-Mead over the model's parameter box with a
deterministic start sequence, per-start trace and lowest-start-index
tie-breaking.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import NamedTuple, Optional, Sequence, Union

import numpy as np
import yaml
from scipy.optimize import Bounds, minimize

from .extraction import MergeEvent
from .game import Action, MbrgtParams, build_payoffs, lemke_howson
from .longitudinal import DEFAULT_IDM, IdmParams, project_role_states
from .mobil import FollowerAccels, MobilParams, mobil_decide

MOBIL_BOUNDS = ((0.0, 4.0), (0.0, 4.0), (-3.0, 3.0))  # b_safe, da_th, p
MBRGT_BOUNDS = ((0.0, 1e3), (0.0, 1e4), (0.0, 1e4), (0.0, 1e4), (0.0, 1e4),
                (0.0, 1e3), (0.0, 1e4), (0.0, 1e4))  # w1..w5, u1..u3
MBRGT_BOUNDS_NARROW = tuple((0.0, 10.0) for _ in range(8))

_COST_VARIANTS = ("overall", "ks", "lc")
_EDGE = 1e-9  # nudge into open parameter intervals after bound clipping

ParamSet = Union[MobilParams, MbrgtParams]


class CalibrationDataError(ValueError):
    """Event set cannot support the requested calibration (too few per class)."""


@dataclass(frozen=True)
class SuccessRates:
    """Percent of events whose predicted decision matches the label, per class."""

    r_ks: float
    r_lc: float
    r_overall: float
    n_ks: int
    n_lc: int


@dataclass(frozen=True)
class OptimizationSpec:
    """What to fit: model, parameter box, cost variant and search budget."""

    model: str  # "mobil" or "mbrgt"
    bounds: tuple[tuple[float, float], ...]
    starts: int = 20
    cost: str = "overall"
    seed: int = 0
    xatol: float = 1e-3  # simplex size tolerance per start
    fatol: float = 1e-4  # cost spread tolerance per start
    max_evals_per_start: int = 400

    def __post_init__(self) -> None:
        if self.model not in ("mobil", "mbrgt"):
            raise ValueError(f"unknown model {self.model!r}")
        expected = 3 if self.model == "mobil" else 8
        if len(self.bounds) != expected:
            raise ValueError(f"{self.model} needs {expected} bound pairs")
        for lo, hi in self.bounds:
            if not lo < hi:
                raise ValueError("each bound pair needs lo < hi")
        if self.starts < 1:
            raise ValueError("starts must be >= 1")
        if self.cost not in _COST_VARIANTS:
            raise ValueError(f"cost must be one of {_COST_VARIANTS}")


def default_bounds(model: str, narrow: bool = False) -> tuple[tuple[float, float], ...]:
    if model == "mobil":
        return MOBIL_BOUNDS
    if model == "mbrgt":
        return MBRGT_BOUNDS_NARROW if narrow else MBRGT_BOUNDS
    raise ValueError(f"unknown model {model!r}")


def vector_to_params(model: str, vector: Sequence[float]) -> ParamSet:
    """Parameter object from an optimizer vector, nudged into open intervals."""
    v = [float(x) for x in vector]
    if model == "mobil":
        lo_hi = MOBIL_BOUNDS
        clipped = [min(max(x, lo + _EDGE), hi - _EDGE)
                   for x, (lo, hi) in zip(v, lo_hi)]
        return MobilParams(b_safe=clipped[0], da_th=clipped[1], p=clipped[2])
    if model == "mbrgt":
        v = [max(x, 0.0) for x in v]
        return MbrgtParams(w1=v[0], w2=v[1], w3=v[2], w4=v[3], w5=v[4],
                           u1=v[5], u2=v[6], u3=v[7])
    raise ValueError(f"unknown model {model!r}")


def _event_eval_frames(event: MergeEvent):
    """Frames a prediction may use: everything before the observed decision."""
    if event.decision_index is None:
        return event.frames
    return event.frames[:event.decision_index]


def predict_event(model: str, params: ParamSet, event: MergeEvent,
                  idm: IdmParams = DEFAULT_IDM) -> Action:
    """Deterministic event-level prediction.

    The model is evaluated at every usable frame (ego attributed to the
    cruising lane); the event is predicted lane-change as soon as one frame
    says change.  The game model uses the expected-payoff argmax, so the
    temperature schedule does not influence this path.
    """
    for ef in _event_eval_frames(event):
        if ef.lag0.lane != 0:
            continue
        proj = project_role_states(ef.lag0, ef.lead0, ef.ma, ef.lag1, ef.lead1, idm)
        if model == "mobil":
            decision = mobil_decide(proj, params, FollowerAccels.from_projection(proj))
            if decision.action is Action.CHANGE_LANES:
                return Action.CHANGE_LANES
        elif model == "mbrgt":
            payoffs = build_payoffs(proj, params, lag0_in_cruising=True)
            eq = lemke_howson(payoffs.ego, payoffs.follower)
            expected = payoffs.ego @ eq.col
            if expected[1] > expected[0]:
                return Action.CHANGE_LANES
        else:
            raise ValueError(f"unknown model {model!r}")
    return Action.KEEP_STRAIGHT


def success_rates(model: str, params: ParamSet, events: Sequence[MergeEvent],
                  idm: IdmParams = DEFAULT_IDM) -> SuccessRates:
    """Per-class and overall match rates in percent, exact until conversion.

    Empty classes count as fully matched (vacuous success).
    """
    hits = {Action.KEEP_STRAIGHT: 0, Action.CHANGE_LANES: 0}
    totals = {Action.KEEP_STRAIGHT: 0, Action.CHANGE_LANES: 0}
    for event in events:
        totals[event.label] += 1
        if predict_event(model, params, event, idm) is event.label:
            hits[event.label] += 1
    n_ks = totals[Action.KEEP_STRAIGHT]
    n_lc = totals[Action.CHANGE_LANES]

    def rate(h: int, n: int) -> Fraction:
        return Fraction(100) if n == 0 else Fraction(100 * h, n)

    overall = rate(hits[Action.KEEP_STRAIGHT] + hits[Action.CHANGE_LANES], n_ks + n_lc)
    return SuccessRates(
        r_ks=float(rate(hits[Action.KEEP_STRAIGHT], n_ks)),
        r_lc=float(rate(hits[Action.CHANGE_LANES], n_lc)),
        r_overall=float(overall),
        n_ks=n_ks, n_lc=n_lc,
    )


def overall_cost(rates: SuccessRates) -> float:
    """Blended calibration cost: 0.4 on lane-change, 0.3 each on keep and overall."""
    return (0.4 * (100.0 - rates.r_lc)
            + 0.3 * (100.0 - rates.r_ks)
            + 0.3 * (100.0 - rates.r_overall))


def behavior_cost(rates: SuccessRates, target: str) -> float:
    """Single-class calibration cost, 100 minus the targeted class rate."""
    if target == "ks":
        return 100.0 - rates.r_ks
    if target == "lc":
        return 100.0 - rates.r_lc
    raise ValueError("target must be 'ks' or 'lc'")


def cost_for_variant(rates: SuccessRates, variant: str) -> float:
    return overall_cost(rates) if variant == "overall" else behavior_cost(rates, variant)


def split_dataset(events: Sequence[MergeEvent], ratio: float,
                  rng: np.random.Generator) -> tuple[list[MergeEvent], list[MergeEvent]]:
    """Stratified train/holdout split, floor(ratio * n) per class into train.

    Raises:
        CalibrationDataError: a class holds fewer than 2 events.
    """
    if not 0.0 < ratio < 1.0:
        raise ValueError("ratio must be in (0, 1)")
    train: list[MergeEvent] = []
    holdout: list[MergeEvent] = []
    for label in (Action.KEEP_STRAIGHT, Action.CHANGE_LANES):
        members = [e for e in events if e.label is label]
        if len(members) < 2:
            raise CalibrationDataError(
                f"class {label.name.lower()} has {len(members)} events; need at least 2")
        perm = rng.permutation(len(members))
        n_train = int(ratio * len(members))
        train.extend(members[i] for i in perm[:n_train])
        holdout.extend(members[i] for i in perm[n_train:])
    return train, holdout


# --- fast evaluation for the optimizer --------------------------------------

_LAM = np.array([[1.0, 1.0], [-1.0, -1.0]])  # lane bias sign per ego action


@dataclass
class _CompiledEvent:
    """Per-frame projection features of one event, stacked into arrays."""

    label: Action
    a_lag0: np.ndarray  # (n, 2, 2)
    a_lag1: np.ndarray
    drac_lag0_lead1: np.ndarray
    drac_lag1_lag0: np.ndarray
    drac_lag0_lead0: np.ndarray
    drac_lag1_lead1: np.ndarray
    gain: np.ndarray  # (n,) ego acceleration advantage of changing
    nf_before: np.ndarray  # (n,) new-follower acceleration, ego absent
    nf_after: np.ndarray  # (n,) new-follower acceleration, ego ahead


def compile_events(events: Sequence[MergeEvent],
                   idm: IdmParams = DEFAULT_IDM) -> list[_CompiledEvent]:
    """Precompute projection features so cost evaluations avoid re-projection."""
    compiled = []
    for event in events:
        projs = [project_role_states(ef.lag0, ef.lead0, ef.ma, ef.lag1, ef.lead1, idm)
                 for ef in _event_eval_frames(event) if ef.lag0.lane == 0]

        def stack(attr: str) -> np.ndarray:
            if projs:
                return np.stack([getattr(p, attr) for p in projs])
            return np.zeros((0, 2, 2))

        a_lag0 = stack("a_lag0")
        a_lag1 = stack("a_lag1")
        compiled.append(_CompiledEvent(
            label=event.label,
            a_lag0=a_lag0,
            a_lag1=a_lag1,
            drac_lag0_lead1=stack("drac_lag0_lead1"),
            drac_lag1_lag0=stack("drac_lag1_lag0"),
            drac_lag0_lead0=stack("drac_lag0_lead0"),
            drac_lag1_lead1=stack("drac_lag1_lead1"),
            gain=a_lag0[:, 1, 0] - a_lag0[:, 0, 0],
            nf_before=a_lag1[:, 1, 0],
            nf_after=a_lag1[:, 1, 1],
        ))
    return compiled


def _predict_compiled(model: str, vector: Sequence[float],
                      ce: _CompiledEvent) -> Action:
    if model == "mobil":
        b_safe, da_th, p = vector
        ok = (ce.nf_after >= -b_safe) & (ce.gain > p * (ce.nf_before - ce.nf_after) + da_th)
        return Action.CHANGE_LANES if bool(np.any(ok)) else Action.KEEP_STRAIGHT
    w1, w2, w3, w4, w5, u1, u2, u3 = vector
    ego = (w1 * ce.a_lag0 - w2 * ce.drac_lag0_lead1 - w3 * ce.drac_lag1_lag0
           - w4 * ce.drac_lag0_lead0 + w5 * _LAM)
    follower = u1 * ce.a_lag1 - u2 * ce.drac_lag1_lead1 - u3 * ce.drac_lag1_lag0
    for k in range(ego.shape[0]):
        a = ego[k]
        # a dominant ego row settles the argmax without solving the game
        if np.all(a[0] >= a[1]):
            continue
        if np.all(a[1] > a[0]):
            return Action.CHANGE_LANES
        eq = lemke_howson(a, follower[k])
        expected = a @ eq.col
        if expected[1] > expected[0]:
            return Action.CHANGE_LANES
    return Action.KEEP_STRAIGHT


def _compiled_cost(model: str, vector: np.ndarray,
                   compiled: Sequence[_CompiledEvent], variant: str) -> float:
    hits = {Action.KEEP_STRAIGHT: 0, Action.CHANGE_LANES: 0}
    totals = {Action.KEEP_STRAIGHT: 0, Action.CHANGE_LANES: 0}
    for ce in compiled:
        totals[ce.label] += 1
        if _predict_compiled(model, vector, ce) is ce.label:
            hits[ce.label] += 1

    def rate(label: Action) -> Fraction:
        n = totals[label]
        return Fraction(100) if n == 0 else Fraction(100 * hits[label], n)

    n_all = totals[Action.KEEP_STRAIGHT] + totals[Action.CHANGE_LANES]
    overall = (Fraction(100) if n_all == 0 else
               Fraction(100 * (hits[Action.KEEP_STRAIGHT] + hits[Action.CHANGE_LANES]), n_all))
    rates = SuccessRates(r_ks=float(rate(Action.KEEP_STRAIGHT)),
                         r_lc=float(rate(Action.CHANGE_LANES)),
                         r_overall=float(overall),
                         n_ks=totals[Action.KEEP_STRAIGHT],
                         n_lc=totals[Action.CHANGE_LANES])
    return cost_for_variant(rates, variant)


# --- multi-start search -----------------------------------------------------

class StartTrace(NamedTuple):
    """One local search: where it started, where it ended, and the budget used."""

    index: int
    x0: tuple[float, ...]
    cost0: float
    x_best: tuple[float, ...]
    cost_best: float
    n_evals: int


@dataclass(frozen=True)
class OptimizationResult:
    model: str
    cost_variant: str
    best_vector: tuple[float, ...]
    best_params: ParamSet
    best_cost: float
    best_start: int
    starts: tuple[StartTrace, ...]


def _initial_simplex(x0: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Simplex spanning 15% of each bound range, reflected to stay in the box."""
    dim = x0.size
    simplex = np.tile(x0, (dim + 1, 1))
    step = 0.15 * (hi - lo)
    for k in range(dim):
        moved = x0[k] + step[k]
        if moved > hi[k]:
            moved = x0[k] - step[k]
        simplex[k + 1, k] = moved
    return simplex


def multistart_optimize(spec: OptimizationSpec, events: Sequence[MergeEvent],
                        idm: IdmParams = DEFAULT_IDM) -> OptimizationResult:
    """Fit model parameters to labeled events.

    Starts are drawn uniformly inside the bounds from default_rng(seed);
    each runs a bounded Nelder-Mead simplex.  The winner is the lowest final
    cost, ties resolved toward the lowest start index, so the whole search
    is reproducible.

    Args:
        spec: model, bounds, budget, cost variant and seed.
        events: labeled training events (both classes recommended).
        idm: car-following parameters for the projections.

    Returns:
        OptimizationResult with the winning vector/params and per-start trace.
    """
    if not events:
        raise CalibrationDataError("no events to calibrate against")
    compiled = compile_events(events, idm)
    lo = np.array([b[0] for b in spec.bounds])
    hi = np.array([b[1] for b in spec.bounds])
    rng = np.random.default_rng(spec.seed)
    x0s = rng.uniform(lo, hi, size=(spec.starts, lo.size))

    def cost(vec: np.ndarray) -> float:
        return _compiled_cost(spec.model, np.clip(vec, lo, hi), compiled, spec.cost)

    traces: list[StartTrace] = []
    for i in range(spec.starts):
        x0 = x0s[i]
        result = minimize(
            cost, x0, method="Nelder-Mead", bounds=Bounds(lo, hi),
            options={
                "initial_simplex": _initial_simplex(x0, lo, hi),
                "xatol": spec.xatol,
                "fatol": spec.fatol,
                "maxfev": spec.max_evals_per_start,
            })
        traces.append(StartTrace(
            index=i,
            x0=tuple(float(v) for v in x0),
            cost0=cost(x0),
            x_best=tuple(float(v) for v in np.clip(result.x, lo, hi)),
            cost_best=float(result.fun),
            n_evals=int(result.nfev),
        ))
    best = min(traces, key=lambda tr: (tr.cost_best, tr.index))
    return OptimizationResult(
        model=spec.model,
        cost_variant=spec.cost,
        best_vector=best.x_best,
        best_params=vector_to_params(spec.model, best.x_best),
        best_cost=best.cost_best,
        best_start=best.index,
        starts=tuple(traces),
    )


# --- reports ----------------------------------------------------------------

def _params_dict(params: ParamSet) -> dict:
    if isinstance(params, MobilParams):
        return {"b_safe": params.b_safe, "da_th": params.da_th, "p": params.p}
    return {name: getattr(params, name)
            for name in ("w1", "w2", "w3", "w4", "w5", "u1", "u2", "u3")}


def _rates_dict(rates: SuccessRates) -> dict:
    return {"r_ks": rates.r_ks, "r_lc": rates.r_lc, "r_overall": rates.r_overall,
            "n_ks": rates.n_ks, "n_lc": rates.n_lc}


def write_calibration_report(out_dir, spec: OptimizationSpec,
                             result: OptimizationResult,
                             train_rates: SuccessRates,
                             holdout_rates: Optional[SuccessRates] = None) -> list[Path]:
    """Write report.yaml (spec echo, best fit, rates) and trace.csv; both deterministic."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report = {
        "spec": {
            "model": spec.model,
            "cost": spec.cost,
            "starts": spec.starts,
            "seed": spec.seed,
            "bounds": [[float(lo), float(hi)] for lo, hi in spec.bounds],
            "xatol": spec.xatol,
            "fatol": spec.fatol,
            "max_evals_per_start": spec.max_evals_per_start,
        },
        "best": {
            "cost": result.best_cost,
            "start": result.best_start,
            "params": {k: float(v) for k, v in _params_dict(result.best_params).items()},
            "vector": [float(v) for v in result.best_vector],
        },
        "rates": {
            "train": _rates_dict(train_rates),
            **({"holdout": _rates_dict(holdout_rates)} if holdout_rates else {}),
        },
    }
    report_path = out / "report.yaml"
    report_path.write_text(yaml.safe_dump(report, sort_keys=False))

    trace_path = out / "trace.csv"
    dim = len(result.best_vector)
    with open(trace_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["start", "cost0", "cost_best", "n_evals"]
                        + [f"x0_{k}" for k in range(dim)]
                        + [f"best_{k}" for k in range(dim)])
        for tr in result.starts:
            writer.writerow([tr.index, f"{tr.cost0:.6f}", f"{tr.cost_best:.6f}", tr.n_evals]
                            + [f"{v:.6f}" for v in tr.x0]
                            + [f"{v:.6f}" for v in tr.x_best])
    return [report_path, trace_path]

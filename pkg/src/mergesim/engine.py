"""Fixed-step merge-scenario engine: config, stepping, logging, timing.

Scenarios are YAML files binding actors to lane-change models (the
politeness baseline, the game model, or none).  The engine steps all actors
on a common clock with semi-implicit Euler integration, executes committed
lane changes along a smooth quintic lateral profile over a lognormal
duration, lets ramp actors merge on gap acceptance, and reports wall-clock
and model-only real-time factors next to per-type decision counts.
Trajectory logs are byte-identical for identical configs and seeds; all
timing lives in the metrics, never in the log.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import NamedTuple, Optional, Sequence, Union

import numpy as np
import yaml

from .game import Action, MbrgtParams, mbrgt_decide
from .longitudinal import DEFAULT_IDM, IdmParams, idm_accel, mr_idm_accel, project_accelerations
from .mobil import MobilParams, mobil_decide
from .presets import load_preset, sample_behavior
from .scene import ActorState, LaneTopology, assign_roles, bumper_gap

TRAJECTORY_COLUMNS = ("frame", "time_s", "actor_id", "lane", "s_m", "d_m",
                      "v_mps", "a_mps2", "len_m", "wid_m", "role", "decision")

DEFAULT_DT_S = 0.02  # s, 50 Hz
DEFAULT_LC_MU_LN = math.log(5.0)  # lognormal location: median duration 5 s
DEFAULT_LC_SIGMA_LN = 0.3

_MISSING = object()


class ConfigError(ValueError):
    """Config validation failure; the message names the offending field path."""


@dataclass(frozen=True)
class ActorSpec:
    """One actor row of a scenario config, with its model binding resolved."""

    id: str
    lane: int
    s_m: float
    v_mps: float
    d_m: float = 0.0
    a_mps2: float = 0.0
    length_m: float = 4.5
    width_m: float = 1.8
    model: str = "none"  # "none", "mobil" or "mbrgt"
    preset: Optional[str] = None  # preset id, or "sample" to draw ks/lc
    params: Optional[Union[MobilParams, MbrgtParams]] = None


@dataclass(frozen=True)
class ScenarioConfig:
    """Validated scenario: geometry, actors, models and engine settings."""

    topology: LaneTopology
    actors: tuple[ActorSpec, ...]
    idm: IdmParams = DEFAULT_IDM
    dt_s: float = DEFAULT_DT_S
    duration_s: float = 60.0
    seed: int = 0
    lc_mu_ln: float = DEFAULT_LC_MU_LN
    lc_sigma_ln: float = DEFAULT_LC_SIGMA_LN
    p_lane_change: float = 0.033  # share of sampled drivers using an -lc preset
    # ramp gap acceptance: both neighbours must leave at least the minimum
    # physical gap and imply no more braking than max_brake (so a yielded,
    # slow follower admits a merge a fixed distance threshold never would)
    merge_min_lead_gap_m: float = 2.0
    merge_min_lag_gap_m: float = 3.0
    merge_max_brake_mps2: float = 2.0

    @property
    def n_steps(self) -> int:
        return int(round(self.duration_s / self.dt_s))


def lateral_profile(progress: float) -> float:
    """Smooth monotone 0..1 lateral interpolation (zero end slopes and curvature)."""
    if not 0.0 <= progress <= 1.0:
        raise ValueError("progress must be in [0, 1]")
    return progress ** 3 * (progress * (6.0 * progress - 15.0) + 10.0)


def sample_lc_duration(rng: np.random.Generator,
                       mu_ln: float = DEFAULT_LC_MU_LN,
                       sigma_ln: float = DEFAULT_LC_SIGMA_LN) -> float:
    """Lane-change duration in seconds, lognormal with median exp(mu_ln)."""
    if sigma_ln < 0.0:
        raise ValueError("sigma_ln must be >= 0")
    return float(rng.lognormal(mu_ln, sigma_ln))


# --- config loading ---------------------------------------------------------

def _mapping(value, path: str) -> dict:
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ConfigError(f"{path}: must be a mapping")
    return value


def _num(m: dict, key: str, path: str, default=_MISSING,
         ge: Optional[float] = None, gt: Optional[float] = None,
         le: Optional[float] = None) -> float:
    if key not in m:
        if default is _MISSING:
            raise ConfigError(f"{path}.{key}: required")
        return default
    v = m[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{path}.{key}: must be a number")
    v = float(v)
    if ge is not None and v < ge:
        raise ConfigError(f"{path}.{key}: must be >= {ge}")
    if gt is not None and v <= gt:
        raise ConfigError(f"{path}.{key}: must be > {gt}")
    if le is not None and v > le:
        raise ConfigError(f"{path}.{key}: must be <= {le}")
    return v


def _int(m: dict, key: str, path: str, default=_MISSING, ge: Optional[int] = None) -> int:
    if key not in m:
        if default is _MISSING:
            raise ConfigError(f"{path}.{key}: required")
        return default
    v = m[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{path}.{key}: must be an integer")
    if ge is not None and v < ge:
        raise ConfigError(f"{path}.{key}: must be >= {ge}")
    return v


def _actor_spec(entry, index: int) -> ActorSpec:
    path = f"actors[{index}]"
    m = _mapping(entry, path)
    actor_id = m.get("id")
    if not isinstance(actor_id, str) or not actor_id:
        raise ConfigError(f"{path}.id: must be a non-empty string")
    lane = _int(m, "lane", path)
    if lane not in (-1, 0, 1):
        raise ConfigError(f"{path}.lane: must be -1, 0 or 1")
    model = m.get("model", "none")
    if model not in ("none", "mobil", "mbrgt"):
        raise ConfigError(f"{path}.model: must be none, mobil or mbrgt")

    preset = m.get("preset")
    raw_params = m.get("params")
    params: Optional[Union[MobilParams, MbrgtParams]] = None
    if model == "none":
        if preset is not None or raw_params is not None:
            raise ConfigError(f"{path}: preset/params given but model is none")
    else:
        if (preset is None) == (raw_params is None):
            raise ConfigError(f"{path}: exactly one of preset or params is required")
        if preset is not None:
            if not isinstance(preset, str):
                raise ConfigError(f"{path}.preset: must be a string")
            if preset != "sample":
                try:
                    loaded = load_preset(preset)
                except KeyError as exc:
                    raise ConfigError(f"{path}.preset: {exc.args[0]}") from None
                wanted = MobilParams if model == "mobil" else MbrgtParams
                if not isinstance(loaded, wanted):
                    raise ConfigError(f"{path}.preset: {preset!r} is not a {model} preset")
        else:
            cls = MobilParams if model == "mobil" else MbrgtParams
            try:
                params = cls(**_mapping(raw_params, f"{path}.params"))
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{path}.params: {exc}") from None

    return ActorSpec(
        id=actor_id,
        lane=lane,
        s_m=_num(m, "s_m", path),
        v_mps=_num(m, "v_mps", path, ge=0.0),
        d_m=_num(m, "d_m", path, default=0.0),
        a_mps2=_num(m, "a_mps2", path, default=0.0),
        length_m=_num(m, "length_m", path, default=4.5, gt=0.0),
        width_m=_num(m, "width_m", path, default=1.8, gt=0.0),
        model=model,
        preset=preset if isinstance(preset, str) else None,
        params=params,
    )


def scenario_config_from_dict(data) -> ScenarioConfig:
    """Validate a parsed scenario mapping; raises ConfigError with field paths."""
    m = _mapping(data, "scenario")
    topo_m = _mapping(m.get("topology"), "topology")
    try:
        topology = LaneTopology(
            lane_width_m=_num(topo_m, "lane_width_m", "topology", default=3.7, gt=0.0),
            ramp_end_s_m=_num(topo_m, "ramp_end_s_m", "topology", default=300.0, gt=0.0),
            road_length_m=_num(topo_m, "road_length_m", "topology", default=1000.0, gt=0.0),
        )
    except ValueError as exc:
        raise ConfigError(f"topology: {exc}") from None

    idm_m = _mapping(m.get("idm"), "idm")
    idm_kwargs = {}
    for name in ("s0", "T", "a_max", "b_comf", "v0", "delta", "zeta"):
        if name in idm_m:
            idm_kwargs[name] = _num(idm_m, name, "idm", gt=0.0)
    unknown = set(idm_m) - {"s0", "T", "a_max", "b_comf", "v0", "delta", "zeta"}
    if unknown:
        raise ConfigError(f"idm.{sorted(unknown)[0]}: unknown field")
    idm = IdmParams(**idm_kwargs)

    lc_m = _mapping(m.get("lane_change_duration"), "lane_change_duration")
    mix_m = _mapping(m.get("behavior_mix"), "behavior_mix")
    gaps_m = _mapping(m.get("merge_acceptance"), "merge_acceptance")

    entries = m.get("actors")
    if not isinstance(entries, list) or not entries:
        raise ConfigError("actors: must be a non-empty list")
    actors = tuple(_actor_spec(entry, i) for i, entry in enumerate(entries))
    ids = [a.id for a in actors]
    if len(set(ids)) != len(ids):
        dupe = next(i for i in ids if ids.count(i) > 1)
        raise ConfigError(f"actors: duplicate id {dupe!r}")

    return ScenarioConfig(
        topology=topology,
        actors=actors,
        idm=idm,
        dt_s=_num(m, "dt_s", "scenario", default=DEFAULT_DT_S, gt=0.0),
        duration_s=_num(m, "duration_s", "scenario", default=60.0, gt=0.0),
        seed=_int(m, "seed", "scenario", default=0, ge=0),
        lc_mu_ln=_num(lc_m, "mu_ln", "lane_change_duration", default=DEFAULT_LC_MU_LN),
        lc_sigma_ln=_num(lc_m, "sigma_ln", "lane_change_duration",
                         default=DEFAULT_LC_SIGMA_LN, ge=0.0),
        p_lane_change=_num(mix_m, "p_lane_change", "behavior_mix",
                           default=0.033, ge=0.0, le=1.0),
        merge_min_lead_gap_m=_num(gaps_m, "min_lead_gap_m", "merge_acceptance",
                                  default=2.0, ge=0.0),
        merge_min_lag_gap_m=_num(gaps_m, "min_lag_gap_m", "merge_acceptance",
                                 default=3.0, ge=0.0),
        merge_max_brake_mps2=_num(gaps_m, "max_brake_mps2", "merge_acceptance",
                                  default=2.0, gt=0.0),
    )


def bundled_scenario_path(name: str = "merge17") -> Path:
    """Path of a scenario file shipped with the package."""
    path = Path(__file__).parent / "configs" / f"{name}.yaml"
    if not path.exists():
        raise ConfigError(f"no bundled scenario named {name!r}")
    return path


def load_scenario_config(path) -> ScenarioConfig:
    """Parse and validate a YAML scenario file."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read scenario config: {exc}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML: {exc}") from None
    return scenario_config_from_dict(data)


# --- world state ------------------------------------------------------------

@dataclass
class _LaneChange:
    start_t: float
    duration_s: float
    source_lane: int
    target_lane: int


@dataclass
class _Vehicle:
    state: ActorState
    y: float  # global lateral position [m]
    model: str
    params: Optional[Union[MobilParams, MbrgtParams]]
    lane_change: Optional[_LaneChange] = None
    negotiation_start: Optional[float] = None


class TickRecord(NamedTuple):
    """What one step produced: the pre-step states and any decisions taken."""

    frame: int
    time_s: float
    states: tuple[ActorState, ...]
    roles: dict  # actor id -> role label for the log
    decisions: dict  # actor id -> Decision


class World:
    """Mutable simulation state advanced one fixed step at a time."""

    def __init__(self, config: ScenarioConfig):
        self.config = config
        self.rng = np.random.default_rng(config.seed)
        self.t = 0.0
        self.frame = 0
        self.model_time_s = 0.0
        self.decision_counts = {Action.KEEP_STRAIGHT: 0, Action.CHANGE_LANES: 0}
        self.lane_changes_committed = 0
        self.merges_completed = 0
        self.vehicles: list[_Vehicle] = []
        for spec in config.actors:
            params = spec.params
            if spec.model != "none" and params is None:
                preset_id = spec.preset
                if preset_id == "sample":
                    preset_id = f"{spec.model}-{sample_behavior(self.rng, config.p_lane_change)}"
                params = load_preset(preset_id)
            state = ActorState(id=spec.id, lane=spec.lane, s=spec.s_m, v=spec.v_mps,
                               d=spec.d_m, a=spec.a_mps2,
                               length=spec.length_m, width=spec.width_m)
            y = config.topology.lane_center(spec.lane) + spec.d_m
            self.vehicles.append(_Vehicle(state=state, y=y, model=spec.model, params=params))

    def _leader(self, states: Sequence[ActorState], ego: ActorState,
                lane: int) -> Optional[ActorState]:
        best = None
        for other in states:
            if other.id == ego.id or other.lane != lane or other.s <= ego.s:
                continue
            if best is None or (other.s, other.id) < (best.s, best.id):
                best = other
        return best

    def _follower(self, states: Sequence[ActorState], ego: ActorState,
                  lane: int) -> Optional[ActorState]:
        best = None
        for other in states:
            if other.id == ego.id or other.lane != lane or other.s > ego.s:
                continue
            if best is None or (-other.s, other.id) < (-best.s, best.id):
                best = other
        return best

    def _passing_lane_density(self, states: Sequence[ActorState],
                              ego: ActorState) -> float:
        count = sum(1 for a in states if a.lane == 1 and abs(a.s - ego.s) <= 100.0)
        return count / 0.2  # +-100 m window -> veh/km

    def step(self, dt: Optional[float] = None) -> TickRecord:
        """Advance one tick; returns pre-step states plus this tick's decisions.

        Order within a tick: lane-change decisions for eligible cruising-lane
        actors, ramp gap-acceptance, then accelerations and integration, all
        from the same pre-step snapshot.
        """
        cfg = self.config
        dt = cfg.dt_s if dt is None else dt
        topo = cfg.topology
        states = tuple(v.state for v in self.vehicles)
        roles_log: dict = {}
        decisions: dict = {}

        # decisions for cruising-lane actors negotiating with a ramp actor
        for veh in self.vehicles:
            if veh.model == "none" or veh.lane_change is not None or veh.state.lane != 0:
                continue
            roles = assign_roles(states, topo, veh.state.id)
            if roles.ma is None:
                veh.negotiation_start = None
                continue
            if veh.negotiation_start is None:
                veh.negotiation_start = self.t
            t_neg = self.t - veh.negotiation_start + 1.0
            started = time.perf_counter()
            if veh.model == "mobil":
                proj = project_accelerations(states, roles, cfg.idm)
                decision = mobil_decide(proj, veh.params)
            else:
                density = self._passing_lane_density(states, veh.state)
                decision = mbrgt_decide(states, roles, cfg.idm, veh.params,
                                        t=t_neg, density_veh_km=density, rng=self.rng)
            self.model_time_s += time.perf_counter() - started
            self.decision_counts[decision.action] += 1
            decisions[veh.state.id] = decision
            if not roles_log:
                for role_name in ("lag0", "ma", "lead0", "lag1", "lead1"):
                    bound = getattr(roles, role_name)
                    if bound is not None:
                        roles_log[bound] = role_name
            if decision.action is Action.CHANGE_LANES:
                duration = sample_lc_duration(self.rng, cfg.lc_mu_ln, cfg.lc_sigma_ln)
                veh.lane_change = _LaneChange(self.t, duration, 0, 1)
                veh.negotiation_start = None
                self.lane_changes_committed += 1

        # ramp actors merge once both cruising-lane neighbours accept them:
        # enough physical gap, and no implied braking beyond the comfort limit
        for veh in self.vehicles:
            if veh.state.lane != -1 or veh.lane_change is not None:
                continue
            roles_log.setdefault(veh.state.id, "ma")
            ego = veh.state
            lead = self._leader(states, ego, 0)
            lag = self._follower(states, ego, 0)
            lead_ok = lead is None or (
                bumper_gap(lead, ego) >= cfg.merge_min_lead_gap_m
                and idm_accel(ego.v, lead.v, bumper_gap(lead, ego), cfg.idm)
                >= -cfg.merge_max_brake_mps2)
            lag_ok = lag is None or (
                bumper_gap(ego, lag) >= cfg.merge_min_lag_gap_m
                and idm_accel(lag.v, ego.v, bumper_gap(ego, lag), cfg.idm)
                >= -cfg.merge_max_brake_mps2)
            if lead_ok and lag_ok and ego.s <= topo.ramp_end_s_m:
                duration = sample_lc_duration(self.rng, cfg.lc_mu_ln, cfg.lc_sigma_ln)
                veh.lane_change = _LaneChange(self.t, duration, -1, 0)

        # accelerations from the pre-step snapshot
        accels = []
        for veh in self.vehicles:
            ego = veh.state
            lead = self._leader(states, ego, ego.lane)
            if ego.lane == 0:
                ramp_ahead = None
                for other in states:
                    if other.lane == -1 and other.s > ego.s:
                        if ramp_ahead is None or (other.s, other.id) < (ramp_ahead.s, ramp_ahead.id):
                            ramp_ahead = other
                accels.append(mr_idm_accel(ego, lead, ramp_ahead, cfg.idm))
            elif ego.lane == -1 and veh.lane_change is None:
                # ramp runs out: brake against a standing wall at the ramp end
                a_lead = (idm_accel(ego.v, lead.v, bumper_gap(lead, ego), cfg.idm)
                          if lead is not None else idm_accel(ego.v, params=cfg.idm))
                a_wall = idm_accel(ego.v, 0.0, topo.ramp_end_s_m - ego.s, cfg.idm)
                accels.append(min(a_lead, a_wall))
            else:
                accels.append(idm_accel(ego.v, lead.v, bumper_gap(lead, ego), cfg.idm)
                              if lead is not None else idm_accel(ego.v, params=cfg.idm))

        record = TickRecord(frame=self.frame, time_s=self.t, states=states,
                            roles=roles_log, decisions=decisions)

        # semi-implicit Euler plus lateral interpolation
        t_next = self.t + dt
        for veh, a in zip(self.vehicles, accels):
            st = veh.state
            v_new = max(0.0, st.v + a * dt)
            s_new = st.s + v_new * dt
            y = veh.y
            if veh.lane_change is not None:
                lc = veh.lane_change
                progress = min(1.0, (t_next - lc.start_t) / lc.duration_s)
                y_src = topo.lane_center(lc.source_lane)
                y_tgt = topo.lane_center(lc.target_lane)
                y = y_src + (y_tgt - y_src) * lateral_profile(progress)
                if progress >= 1.0:
                    y = y_tgt
                    veh.lane_change = None
                    if lc.source_lane == -1:
                        self.merges_completed += 1
            lane = topo.attribute_lane(y)
            veh.y = y
            veh.state = replace(st, lane=lane, s=s_new, v=v_new,
                                d=y - topo.lane_center(lane), a=a)

        self.t = t_next
        self.frame += 1
        return record


def step(world: World, dt: Optional[float] = None) -> World:
    """Advance a world one tick and return it (thin wrapper over World.step)."""
    world.step(dt)
    return world


class LogRow(NamedTuple):
    frame: int
    time_s: float
    actor_id: str
    lane: int
    s_m: float
    d_m: float
    v_mps: float
    a_mps2: float
    len_m: float
    wid_m: float
    role: str
    decision: str


@dataclass(frozen=True)
class RunMetrics:
    """Timing and decision statistics of one run; never written into the log."""

    steps: int
    dt_s: float
    sim_time_s: float
    wall_time_s: float
    model_time_s: float
    rtf_overall: float  # simulated seconds per wall second
    rtf_model_only: float  # simulated seconds per second of decision-model work
    decisions_keep_straight: int
    decisions_change_lanes: int
    lane_changes_committed: int
    merges_completed: int

    def to_dict(self) -> dict:
        return {
            "steps": self.steps,
            "dt_s": self.dt_s,
            "sim_time_s": self.sim_time_s,
            "wall_time_s": self.wall_time_s,
            "model_time_s": self.model_time_s,
            "rtf_overall": self.rtf_overall,
            "rtf_model_only": self.rtf_model_only,
            "decisions": {
                "keep_straight": self.decisions_keep_straight,
                "change_lanes": self.decisions_change_lanes,
            },
            "lane_changes_committed": self.lane_changes_committed,
            "merges_completed": self.merges_completed,
        }

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)


def _tick_rows(record: TickRecord) -> list[LogRow]:
    rows = []
    for st in record.states:
        decision = record.decisions.get(st.id)
        rows.append(LogRow(
            frame=record.frame, time_s=record.time_s, actor_id=st.id, lane=st.lane,
            s_m=st.s, d_m=st.d, v_mps=st.v, a_mps2=st.a, len_m=st.length,
            wid_m=st.width, role=record.roles.get(st.id, ""),
            decision="" if decision is None else decision.action.name.lower(),
        ))
    return rows


def run_scenario(config: ScenarioConfig) -> tuple[list[LogRow], RunMetrics]:
    """Run a scenario to completion.

    Returns:
        (rows, metrics): one log row per actor per frame, frames 0..n_steps-1
        capturing the pre-step state and any decision taken that tick, plus
        run metrics with overall and model-only real-time factors.
    """
    world = World(config)
    rows: list[LogRow] = []
    started = time.perf_counter()
    for _ in range(config.n_steps):
        record = world.step()
        rows.extend(_tick_rows(record))
    wall = time.perf_counter() - started
    sim_time = config.n_steps * config.dt_s
    metrics = RunMetrics(
        steps=config.n_steps,
        dt_s=config.dt_s,
        sim_time_s=sim_time,
        wall_time_s=wall,
        model_time_s=world.model_time_s,
        rtf_overall=sim_time / wall if wall > 0.0 else math.inf,
        rtf_model_only=(sim_time / world.model_time_s
                        if world.model_time_s > 0.0 else math.inf),
        decisions_keep_straight=world.decision_counts[Action.KEEP_STRAIGHT],
        decisions_change_lanes=world.decision_counts[Action.CHANGE_LANES],
        lane_changes_committed=world.lane_changes_committed,
        merges_completed=world.merges_completed,
    )
    return rows, metrics


def format_row(row: LogRow) -> list[str]:
    return [
        str(row.frame), f"{row.time_s:.3f}", row.actor_id, str(row.lane),
        f"{row.s_m:.6f}", f"{row.d_m:.6f}", f"{row.v_mps:.6f}", f"{row.a_mps2:.6f}",
        f"{row.len_m:.3f}", f"{row.wid_m:.3f}", row.role, row.decision,
    ]


def write_trajectory_log(rows: Sequence[LogRow], path) -> None:
    """Write rows in the canonical trajectory CSV schema, LF line endings."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRAJECTORY_COLUMNS)
        for row in rows:
            writer.writerow(format_row(row))

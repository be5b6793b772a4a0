"""Published calibrated parameter sets for both lane-change models.

Values are stored as decimal strings exactly as published and parsed on
load, so echoing a preset into a config or report round-trips bit-exact.
The ``-ks`` presets reproduce keep-straight negotiation behavior, the
``-lc`` presets lane-changing behavior; driver populations mix them with a
small lane-change share.
"""

from __future__ import annotations

from dataclasses import dataclass
from types import MappingProxyType
from typing import Union

import numpy as np

from .game import MbrgtParams
from .mobil import MobilParams

# Share of drivers resolving a merge negotiation by changing lanes.
DEFAULT_LANE_CHANGE_SHARE = 0.033

ParamSet = Union[MobilParams, MbrgtParams]


@dataclass(frozen=True)
class Preset:
    """One published parameter set; ``values`` keeps the printed decimals."""

    model: str  # "mobil" or "mbrgt"
    fields: tuple[str, ...]
    values: tuple[str, ...]
    note: str

    def as_floats(self) -> tuple[float, ...]:
        return tuple(float(v) for v in self.values)


_MOBIL_FIELDS = ("b_safe", "da_th", "p")
_MBRGT_FIELDS = ("w1", "w2", "w3", "w4", "w5", "u1", "u2", "u3")

PRESETS = MappingProxyType({
    "mobil-ks": Preset(
        model="mobil",
        fields=_MOBIL_FIELDS,
        values=("0.22", "3.72", "0.46"),
        note="politeness model fit to keep-straight negotiations",
    ),
    "mobil-lc": Preset(
        model="mobil",
        fields=_MOBIL_FIELDS,
        values=("3.36", "0.24", "-2.18"),
        note="politeness model fit to lane-change negotiations",
    ),
    "mbrgt-ks": Preset(
        model="mbrgt",
        fields=_MBRGT_FIELDS,
        values=("11.90", "5107.72", "9786.81", "225.13", "4852.29",
                "662.01", "1362.93", "9391.42"),
        note="game model fit to keep-straight negotiations",
    ),
    "mbrgt-lc": Preset(
        model="mbrgt",
        fields=_MBRGT_FIELDS,
        values=("5.06", "3.90", "0.38", "1.71", "0.62",
                "4.71", "4.24", "6.95"),
        note="game model fit to lane-change negotiations",
    ),
})


def available_presets() -> tuple[str, ...]:
    return tuple(PRESETS)


def preset_strings(preset_id: str) -> tuple[str, ...]:
    """The published decimal strings of a preset, for bit-exact echoing."""
    return _lookup(preset_id).values


def load_preset(preset_id: str) -> ParamSet:
    """Parameter object for a preset id.

    Raises:
        KeyError: unknown id; the message lists the available ids.
    """
    preset = _lookup(preset_id)
    values = preset.as_floats()
    if preset.model == "mobil":
        return MobilParams(**dict(zip(preset.fields, values)))
    return MbrgtParams(**dict(zip(preset.fields, values)))


def _lookup(preset_id: str) -> Preset:
    if preset_id not in PRESETS:
        known = ", ".join(sorted(PRESETS))
        raise KeyError(f"unknown preset {preset_id!r}; available: {known}")
    return PRESETS[preset_id]


def sample_behavior(rng: np.random.Generator,
                    p_lane_change: float = DEFAULT_LANE_CHANGE_SHARE) -> str:
    """Draw a driver behavior class, "ks" or "lc"."""
    if not 0.0 <= p_lane_change <= 1.0:
        raise ValueError("p_lane_change must be in [0, 1]")
    return "lc" if rng.random() < p_lane_change else "ks"

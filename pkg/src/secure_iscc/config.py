"""Scenario configuration, unit conversion and the three built-in presets."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np


class ConfigError(ValueError):
    """Invalid scenario configuration; ``fields`` names the offending keys."""

    def __init__(self, message: str, fields: Sequence[str] = ()):
        super().__init__(message)
        self.fields = tuple(fields)


def db_to_linear(db: float) -> float:
    return float(10.0 ** (db / 10.0))


def dbm_to_watt(dbm: float) -> float:
    return float(10.0 ** ((dbm - 30.0) / 10.0))


Point = tuple[float, float]


def _point(value, name: str) -> Point:
    arr = np.asarray(value, dtype=float)
    if arr.shape != (2,) or not np.all(np.isfinite(arr)):
        raise ConfigError(f"{name} must be a finite 2D point, got {value!r}", [name])
    return (float(arr[0]), float(arr[1]))


def _per_user(value, k: int, name: str) -> tuple[float, ...]:
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.size == 1:
        arr = np.repeat(arr, k)
    if arr.shape != (k,):
        raise ConfigError(f"{name} needs one value or {k} values, got {arr.size}", [name])
    return tuple(float(v) for v in arr)


@dataclass(frozen=True)
class ScenarioConfig:
    """All physical constants, geometry and thresholds of one scenario.

    Every quantity is stored in linear SI units (watts, meters, seconds,
    bits, cycles). Per-user task parameters accept a scalar which is
    broadcast to all users.
    """

    user_pos: tuple[Point, ...] = ((50.0, 25.0), (100.0, 40.0), (150.0, 70.0), (175.0, 150.0))
    uav_start: Point = (0.0, 0.0)
    uav_end: Point = (200.0, 200.0)
    eve_center: Point = (100.0, 100.0)
    eve_half_side: float = 10.0
    v_max: float = 8.0
    altitude: float = 50.0
    num_slots: int = 40
    slot_len: float = 1.0
    total_time: float = 40.0

    ref_gain: float = 1e-3
    rcs: float = 1.0
    bandwidth: float = 1e6
    user_tx_power: float = 0.1
    noise_s: float = 1e-12
    noise_e: float = 1e-12
    gamma_s: float = db_to_linear(7.0)
    gamma_e: float = db_to_linear(-10.0)
    gamma_sen: float = db_to_linear(-50.0)

    task_bits: tuple[float, ...] = (2e7,)
    cycles_user: tuple[float, ...] = (1000.0,)
    cycles_uav: float = 1000.0
    cpu_user: tuple[float, ...] = (1e8,)
    cpu_uav: float = 5e9
    cpu_eff: float = 1e-26

    p_max: float = dbm_to_watt(37.0)
    e_max: float = 20000.0
    array_x: int = 4
    array_y: int = 4
    spacing_ratio: float = 0.5

    p_blade: float = 79.86
    p_induced: float = 88.63
    u_tip: float = 120.0
    v0: float = 4.03
    d0: float = 0.6
    rho: float = 1.225
    solidity: float = 0.05
    disc_area: float = 0.503

    conv_tol: float = 1e-3
    eve_grid: int = 5
    enforce_deadline: bool = False
    init_waypoints: Optional[tuple[Point, ...]] = None
    name: str = "custom"

    def __post_init__(self):
        users = tuple(_point(p, "user_pos") for p in self.user_pos)
        if not users:
            raise ConfigError("at least one user is required", ["user_pos"])
        k = len(users)
        set_ = lambda key, val: object.__setattr__(self, key, val)  # noqa: E731
        set_("user_pos", users)
        for key in ("uav_start", "uav_end", "eve_center"):
            set_(key, _point(getattr(self, key), key))
        for key in ("task_bits", "cycles_user", "cpu_user"):
            set_(key, _per_user(getattr(self, key), k, key))
        if self.init_waypoints is not None:
            set_("init_waypoints", tuple(_point(p, "init_waypoints") for p in self.init_waypoints))
        set_("num_slots", int(self.num_slots))
        set_("array_x", int(self.array_x))
        set_("array_y", int(self.array_y))
        set_("eve_grid", int(self.eve_grid))
        self._validate()

    def _validate(self):
        if self.num_slots < 2:
            raise ConfigError("num_slots must be at least 2", ["num_slots"])
        if not np.isclose(self.num_slots * self.slot_len, self.total_time, rtol=1e-12, atol=0.0):
            raise ConfigError(
                f"num_slots*slot_len = {self.num_slots * self.slot_len} differs from "
                f"total_time = {self.total_time}",
                ["num_slots", "slot_len", "total_time"],
            )
        if self.array_x < 1 or self.array_y < 1:
            raise ConfigError("antenna counts must be >= 1", ["array_x", "array_y"])
        if self.eve_grid < 1:
            raise ConfigError("eve_grid must be >= 1", ["eve_grid"])
        if self.altitude <= 0:
            raise ConfigError("altitude must be positive", ["altitude"])
        positive = (
            "slot_len", "ref_gain", "bandwidth", "user_tx_power", "cycles_uav",
            "cpu_uav", "cpu_eff", "u_tip", "v0",
        )
        for key in positive:
            val = getattr(self, key)
            if not (np.isfinite(val) and val > 0):
                raise ConfigError(f"{key} must be positive, got {val}", [key])
        nonneg = (
            "eve_half_side", "v_max", "rcs", "noise_s", "noise_e", "gamma_s", "gamma_sen",
            "p_max", "e_max", "p_blade", "p_induced", "d0", "rho", "solidity", "disc_area",
            "conv_tol",
        )
        for key in nonneg:
            val = getattr(self, key)
            if not (val >= 0 and not np.isnan(val)):
                raise ConfigError(f"{key} must be nonnegative, got {val}", [key])
        if not self.gamma_e > 0:
            raise ConfigError(f"gamma_e must be positive, got {self.gamma_e}", ["gamma_e"])
        for key in ("task_bits", "cycles_user", "cpu_user"):
            if min(getattr(self, key)) <= 0:
                raise ConfigError(f"{key} entries must be positive", [key])
        reach = (self.num_slots - 1) * self.slot_len * self.v_max
        gap = float(np.hypot(*np.subtract(self.uav_end, self.uav_start)))
        if gap > reach * (1 + 1e-12):
            raise ConfigError(
                f"end point {gap:.3f} m away but at most {reach:.3f} m reachable",
                ["uav_start", "uav_end", "v_max"],
            )

    # derived quantities
    @property
    def num_users(self) -> int:
        return len(self.user_pos)

    @property
    def num_antennas(self) -> int:
        return self.array_x * self.array_y

    @property
    def users(self) -> np.ndarray:
        return np.asarray(self.user_pos, dtype=float)

    @property
    def D(self) -> np.ndarray:
        return np.asarray(self.task_bits)

    @property
    def F(self) -> np.ndarray:
        return np.asarray(self.cycles_user)

    @property
    def f(self) -> np.ndarray:
        return np.asarray(self.cpu_user)

    @property
    def step_max(self) -> float:
        return self.slot_len * self.v_max

    def replace(self, **changes) -> "ScenarioConfig":
        if "user_pos" in changes and len(changes["user_pos"]) != self.num_users:
            # uniform per-user values follow the new user count
            for key in ("task_bits", "cycles_user", "cpu_user"):
                vals = getattr(self, key)
                if key not in changes and len(set(vals)) == 1:
                    changes[key] = vals[:1]
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        out = {}
        for fld in dataclasses.fields(self):
            val = getattr(self, fld.name)
            if isinstance(val, tuple):
                val = [list(v) if isinstance(v, tuple) else v for v in val]
            out[fld.name] = val
        return out


_DB_KEYS = {
    "p_max_dbm": ("p_max", dbm_to_watt),
    "noise_s_dbm": ("noise_s", dbm_to_watt),
    "noise_e_dbm": ("noise_e", dbm_to_watt),
    "ref_gain_db": ("ref_gain", db_to_linear),
    "gamma_s_db": ("gamma_s", db_to_linear),
    "gamma_e_db": ("gamma_e", db_to_linear),
    "gamma_sen_db": ("gamma_sen", db_to_linear),
}

FIELD_NAMES = frozenset(f.name for f in dataclasses.fields(ScenarioConfig))


def config_from_dict(data: dict) -> ScenarioConfig:
    """Build a config from flat key/value pairs; ``*_db``/``*_dbm`` keys are converted."""
    kwargs = {}
    for key, val in data.items():
        if key in _DB_KEYS:
            target, conv = _DB_KEYS[key]
            if target in data:
                raise ConfigError(f"both {key} and {target} given", [key, target])
            try:
                kwargs[target] = conv(float(val))
            except (TypeError, ValueError):
                raise ConfigError(f"{key} must be a number, got {val!r}", [key]) from None
        elif key in FIELD_NAMES:
            kwargs[key] = val
        else:
            raise ConfigError(f"unknown configuration key {key!r}", [key])
    for key in ("user_pos", "init_waypoints"):
        if kwargs.get(key) is not None:
            kwargs[key] = tuple(tuple(p) for p in kwargs[key])
    for key in ("task_bits", "cycles_user", "cpu_user"):
        if key in kwargs:
            kwargs[key] = tuple(np.atleast_1d(np.asarray(kwargs[key], dtype=float)).tolist())
    try:
        return ScenarioConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def _scenario1() -> ScenarioConfig:
    return ScenarioConfig(name="scenario1")


def _scenario2() -> ScenarioConfig:
    return ScenarioConfig(
        name="scenario2",
        uav_start=(0.0, 0.0),
        uav_end=(200.0, 0.0),
        v_max=8.0,
        eve_center=(100.0, 40.0),
        user_pos=((20.0, 20.0), (60.0, 120.0), (140.0, 120.0), (180.0, 20.0)),
    )


def _scenario3() -> ScenarioConfig:
    users = ((40.0, 40.0), (160.0, 40.0), (160.0, 160.0), (40.0, 160.0))
    return ScenarioConfig(
        name="scenario3",
        uav_start=(20.0, 100.0),
        uav_end=(20.0, 100.0),
        v_max=15.0,
        eve_center=(80.0, 120.0),
        user_pos=users,
        # counterclockwise closed tour through the user corners
        init_waypoints=users,
    )


PRESETS = {"scenario1": _scenario1, "scenario2": _scenario2, "scenario3": _scenario3}


def preset(name: str, **overrides) -> ScenarioConfig:
    try:
        cfg = PRESETS[name]()
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}", ["scenario"]) from None
    return cfg.replace(**overrides) if overrides else cfg

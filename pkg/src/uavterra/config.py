"""Layered experiment configuration: defaults, YAML file, environment.

Precedence (lowest to highest): built-in defaults, the config file,
``UAVTERRA_``-prefixed environment variables, explicit overrides.  Every
key must already exist in the defaults; unknown keys are rejected with
their dotted path.  Environment variables use double underscores for
nesting (``UAVTERRA_COVERAGE__TRIALS=5000``) and YAML syntax for values.
"""

from __future__ import annotations

import copy
import hashlib
import os
from dataclasses import dataclass

import yaml

from uavterra.errors import ConfigError

ENV_PREFIX = "UAVTERRA_"
#: environment variables with the prefix that are not config keys
ENV_EXCLUDE = {"UAVTERRA_PURE_PY"}

DEFAULTS = {
    "master_seed": 20260823,
    "out_dir": "runs",
    "workers": 1,
    "region": {"width_m": 1000.0, "height_m": 1000.0,
               "guard_margin_m": 100.0},
    "buildings": {
        "density_per_km2": 500.0,
        "radius_m": 8.0,
        "height": {"kind": "lognormal", "mu_log": 3.0, "sigma_log": 0.4},
    },
    "channel": {
        "zeta_dbm": 30.0, "eta_los_db": -35.0, "eta_nlos_db": -48.0,
        "alpha_los": 2.0, "alpha_nlos": 2.3, "m_los": 1.0, "m_nlos": 2.0,
        "sigma2_dbm": -90.0,
    },
    "losfit": {
        "uav_height_m": 80.0,
        "n_pairs": 2_000_000,
        "bin_width_deg": 1.0,
        "min_trials": 1000,
        "seeds": 5,
        "azimuth": {
            "theta0_deg": 30.0,
            "bins_deg": [0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 8.0, 10.0,
                         12.0, 15.0, 20.0, 25.0, 30.0, 40.0, 50.0, 60.0,
                         75.0, 90.0],
            "n_pairs": 400_000,
        },
    },
    "coverage": {
        "uav_height_m": 80.0,
        "densities_per_km2": [4.0, 8.0, 12.0, 16.0, 20.0, 24.0],
        "thresholds_db": [0.0, 4.0],
        "trials": 20_000,
        "users_per_trial": 4,
        "curve_a": 2.8240,
        "curve_b": 0.0628,
    },
    "relay": {
        "n_scenes": 20,
        "scene_size_m": 500.0,
        "n_buildings": 3,
        "radius_range_m": [10.0, 25.0],
        "height_range_m": [30.0, 70.0],
        "user_distance_range_m": [100.0, 300.0],
        "z_bounds_m": [20.0, 120.0],
        "budget_m": 4000.0,
        "granularity_m": 0.2,
        "grid_step_m": 1.0,
    },
    "sweep": {
        "budgets_m": [0.0, 250.0, 500.0, 1000.0, 2000.0, 4000.0],
        "region_size_m": 500.0,
        "user_density_per_km2": 200.0,
        "uav_density_per_km2": 12.0,
        "threshold_db": 4.0,
        "granularity_m": 0.2,
        "z_bounds_m": [20.0, 120.0],
    },
    "reconstruct": {
        "cell_m": 4.0,
        "sample_step_m": 2.0,
        "scan_altitudes_m": [45.0, 60.0],
        "scan_spacing_m": 8.0,
        "receiver_spacing_m": 20.0,
        "receiver_band_m": 40.0,
        "corridor_width_m": 80.0,
        "scan_margin_m": 16.0,
        "max_range_m": 200.0,
        "fading_avg": 4,
    },
    "tracking": {
        "pace_m_per_slot": 50.0,
        "slots": 6,
        "crowd_size_mean": 25.0,
        "crowd_spread_m": 20.0,
        "jitter_m": 2.0,
        "step_budget_m": 60.0,
        "start_altitude_m": 30.0,
        "altitude_bounds_m": [20.0, 40.0],
        "plan_sample_step_m": 1.0,
        "route_a": [[640.0, 355.0], [565.0, 420.0],
                    [465.0, 420.0], [300.0, 540.0]],
        "route_b": [[385.0, 355.0], [465.0, 420.0],
                    [565.0, 420.0], [690.0, 540.0]],
        "map_seeds": 20,
    },
}

#: (dotted path, predicate on the value, requirement text)
_RANGE_RULES = [
    ("master_seed", lambda v: isinstance(v, int) and v >= 0,
     "a non-negative integer"),
    ("workers", lambda v: isinstance(v, int) and v >= 1,
     "an integer >= 1"),
    ("region.width_m", lambda v: v > 0, "> 0"),
    ("region.height_m", lambda v: v > 0, "> 0"),
    ("region.guard_margin_m", lambda v: v >= 0, ">= 0"),
    ("buildings.density_per_km2", lambda v: v >= 0, ">= 0"),
    ("buildings.radius_m", lambda v: v > 0, "> 0"),
    ("losfit.uav_height_m", lambda v: v > 0, "> 0"),
    ("losfit.n_pairs", lambda v: v >= 1, ">= 1"),
    ("losfit.bin_width_deg", lambda v: v > 0, "> 0"),
    ("losfit.min_trials", lambda v: v >= 1, ">= 1"),
    ("losfit.seeds", lambda v: v >= 1, ">= 1"),
    ("losfit.azimuth.n_pairs", lambda v: v >= 1, ">= 1"),
    ("coverage.uav_height_m", lambda v: v > 0, "> 0"),
    ("coverage.densities_per_km2",
     lambda v: len(v) > 0 and all(x > 0 for x in v),
     "a non-empty list of positive densities"),
    ("coverage.trials", lambda v: v >= 1, ">= 1"),
    ("coverage.users_per_trial", lambda v: v >= 1, ">= 1"),
    ("relay.n_scenes", lambda v: v >= 1, ">= 1"),
    ("relay.scene_size_m", lambda v: v > 0, "> 0"),
    ("relay.n_buildings", lambda v: v >= 0, ">= 0"),
    ("relay.budget_m", lambda v: v >= 0, ">= 0"),
    ("relay.granularity_m", lambda v: v > 0, "> 0"),
    ("relay.grid_step_m", lambda v: v > 0, "> 0"),
    ("sweep.budgets_m",
     lambda v: len(v) > 0 and v[0] >= 0
     and all(x <= y for x, y in zip(v, v[1:])),
     "a non-decreasing list of budgets starting >= 0"),
    ("sweep.user_density_per_km2", lambda v: v > 0, "> 0"),
    ("sweep.uav_density_per_km2", lambda v: v > 0, "> 0"),
    ("reconstruct.cell_m", lambda v: v > 0, "> 0"),
    ("reconstruct.sample_step_m", lambda v: v > 0, "> 0"),
    ("reconstruct.receiver_band_m", lambda v: v >= 0, ">= 0"),
    ("reconstruct.fading_avg", lambda v: v >= 1, ">= 1"),
    ("tracking.pace_m_per_slot", lambda v: v > 0, "> 0"),
    ("tracking.slots", lambda v: v >= 1, ">= 1"),
    ("tracking.crowd_size_mean", lambda v: v > 0, "> 0"),
    ("tracking.step_budget_m", lambda v: v >= 0, ">= 0"),
    ("tracking.plan_sample_step_m", lambda v: v > 0, "> 0"),
    ("tracking.map_seeds", lambda v: v >= 1, ">= 1"),
]

_PAIR_RULES = ["relay.radius_range_m", "relay.height_range_m",
               "relay.user_distance_range_m", "relay.z_bounds_m",
               "sweep.z_bounds_m", "tracking.altitude_bounds_m"]


def _merge(dst: dict, src: dict, prefix: str = "") -> None:
    for key, val in src.items():
        path = f"{prefix}{key}"
        if key not in dst:
            raise ConfigError(f"unknown config key '{path}'")
        have = dst[key]
        if isinstance(have, dict):
            if not isinstance(val, dict):
                raise ConfigError(f"config key '{path}' must be a mapping")
            _merge(have, val, prefix=f"{path}.")
        elif isinstance(have, list) and not isinstance(val, list):
            raise ConfigError(f"config key '{path}' must be a list")
        elif isinstance(val, dict):
            raise ConfigError(f"config key '{path}' must be a scalar")
        else:
            dst[key] = val


def _set_path(data: dict, dotted: str, value) -> None:
    parts = dotted.split(".")
    node = data
    for part in parts[:-1]:
        if not isinstance(node, dict) or part not in node:
            raise ConfigError(f"unknown config key '{dotted}'")
        node = node[part]
    if not isinstance(node, dict) or parts[-1] not in node:
        raise ConfigError(f"unknown config key '{dotted}'")
    _merge(node, {parts[-1]: value},
           prefix=".".join(parts[:-1]) + "." if len(parts) > 1 else "")


def _get_path(data: dict, dotted: str):
    node = data
    for part in dotted.split("."):
        node = node[part]
    return node


def _env_overrides(env) -> dict:
    out = {}
    for name, raw in sorted(env.items()):
        if not name.startswith(ENV_PREFIX) or name in ENV_EXCLUDE:
            continue
        dotted = name[len(ENV_PREFIX):].lower().replace("__", ".")
        try:
            out[dotted] = yaml.safe_load(raw)
        except yaml.YAMLError as exc:
            raise ConfigError(
                f"cannot parse environment override {name}: {exc}")
    return out


def _validate(data: dict) -> None:
    for dotted, ok, req in _RANGE_RULES:
        val = _get_path(data, dotted)
        try:
            good = bool(ok(val))
        except TypeError:
            good = False
        if not good:
            raise ConfigError(
                f"config value '{dotted}' must be {req} (got {val!r})")
    for dotted in _PAIR_RULES:
        val = _get_path(data, dotted)
        if (not isinstance(val, list) or len(val) != 2
                or not val[0] <= val[1]):
            raise ConfigError(
                f"config value '{dotted}' must be a [low, high] pair")
    for name in ("route_a", "route_b"):
        route = _get_path(data, f"tracking.{name}")
        if (not isinstance(route, list) or len(route) < 2
                or any(not isinstance(p, list) or len(p) != 2
                       for p in route)):
            raise ConfigError(
                f"config value 'tracking.{name}' must be a polyline of"
                " at least two [x, y] points")


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated configuration tree with canonical serialization."""

    data: dict

    def __getitem__(self, key: str):
        return self.data[key]

    def path(self, dotted: str):
        """Value at a dotted key path; unknown paths raise ConfigError."""
        try:
            return _get_path(self.data, dotted)
        except (KeyError, TypeError):
            raise ConfigError(f"unknown config key '{dotted}'") from None

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.data, sort_keys=True,
                              default_flow_style=None)

    @property
    def sha256(self) -> str:
        return hashlib.sha256(self.to_yaml().encode()).hexdigest()


def parse_config(path=None, env=None, overrides=None) -> ExperimentConfig:
    """Build the effective config from defaults, file, env, overrides.

    ``path`` may be None (defaults only).  ``env`` defaults to
    ``os.environ``; ``overrides`` maps dotted key paths to values and is
    applied last (used for CLI flags).
    """
    data = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            with open(path) as fh:
                loaded = yaml.safe_load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}")
        except yaml.YAMLError as exc:
            raise ConfigError(f"malformed config file {path}: {exc}")
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError(
                f"config file {path} must contain a mapping at top level")
        _merge(data, loaded)
    env = os.environ if env is None else env
    for dotted, value in _env_overrides(env).items():
        _set_path(data, dotted, value)
    for dotted, value in (overrides or {}).items():
        _set_path(data, dotted, value)
    _validate(data)
    return ExperimentConfig(data=data)

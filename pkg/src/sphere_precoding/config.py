"""TOML run configuration.

Key names carry their units (``spacing_m``, ``frequency_hz``). Only the
``[users]`` table with ``count`` is required; everything else falls back to
the reference setup (16x64 panel at 3 m, 28 GHz, sigma^2 = 1e-2, R_s = 5 cm,
100 covariance samples, 10 scatterers, C = 1, eps = 1e-3, 100 experiments).
"""

from __future__ import annotations

import copy
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .geometry import ArrayGeometry, wavelength
from .precoding import METHODS, PrecoderConfig
from .simulation import ScenarioConfig


class ConfigError(ValueError):
    pass


DEFAULTS: Dict[str, Dict[str, Any]] = {
    "array": {"rows": 16, "columns": 64, "spacing_wavelengths": 0.5, "height_m": 3.0},
    "carrier": {"frequency_hz": 28e9},
    "users": {
        "height_m": 1.5,
        "drop_r_min_m": 2.0,
        "drop_r_max_m": 20.0,
        "drop_sector_deg": 120.0,
        "min_separation_m": 0.5,
        "move_distance_m": [0.0],
        "horizon_s": 1.0,
        "sinr_target_db": 20.0,
    },
    "channel": {
        "noise_power": 1e-2,
        "scatter_radius_m": 0.05,
        "covariance_samples": 100,
        "scatterer_count": 10,
        "zone_measure": "parameter",
        "evaluation_channel": "geometric",
        "realization_mode": "scatterers",
        "los_weight": 1.0,
        "evaluation_positions": "zone",
        "persistent_scatterers": False,
    },
    "precoder": {"target_level": 1.0, "interference_cap": 1e-3, "truncation": 0.99},
    "simulation": {
        "experiments": 100,
        "eval_samples": 100,
        "seed": 0,
        "seeds": 1,
        "workers": 1,
        "methods": list(METHODS),
        "cdf_grid_db": [-20.0, 80.0, 0.5],
    },
    "beampattern": {"user": 1, "method": "sphere", "plane": "horizontal", "resolution": 201, "margin_m": 0.5, "experiment": 0},
    "output": {"dir": ""},
}

REQUIRED = {"users": ["count"]}
OPTIONAL_KEYS = {"array": ["spacing_m"]}


@dataclass
class RunConfig:
    """A fully resolved configuration and the objects built from it."""

    resolved: Dict[str, Dict[str, Any]]
    scenario: ScenarioConfig
    move_distances: List[float]
    seed: int
    seeds: int
    workers: int

    @property
    def beampattern(self) -> Dict[str, Any]:
        return self.resolved["beampattern"]


def parse_toml(text: str, source: str = "<config>") -> Dict[str, Any]:
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: {exc}") from exc


def load_config(path) -> Dict[str, Any]:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from exc
    return parse_toml(text, str(p))


def merge_defaults(raw: Dict[str, Any]) -> Dict[str, Dict[str, Any]]:
    """Validate section and key names and fill in defaults."""
    for section, keys in REQUIRED.items():
        if section not in raw:
            raise ConfigError(f"missing required field '{section}'")
        for key in keys:
            if key not in raw[section]:
                raise ConfigError(f"missing required field '{section}.{key}'")
    out = copy.deepcopy(DEFAULTS)
    for section, table in raw.items():
        if section not in out:
            raise ConfigError(f"unknown section '{section}'")
        if not isinstance(table, dict):
            raise ConfigError(f"'{section}' must be a table")
        allowed = set(out[section]) | set(REQUIRED.get(section, [])) | set(OPTIONAL_KEYS.get(section, []))
        for key, value in table.items():
            if key not in allowed:
                raise ConfigError(f"unknown field '{section}.{key}'")
            out[section][key] = value
    if "spacing_m" in out["array"]:
        out["array"].pop("spacing_wavelengths", None)
    dx = out["users"]["move_distance_m"]
    out["users"]["move_distance_m"] = [dx] if isinstance(dx, (int, float)) else list(dx)
    return out


def _field(resolved, section, key, kind):
    value = resolved[section][key]
    try:
        if kind is bool:
            if not isinstance(value, bool):
                raise TypeError
            return value
        if kind is int and (isinstance(value, bool) or int(value) != value):
            raise TypeError
        return kind(value)
    except (TypeError, ValueError):
        raise ConfigError(f"field '{section}.{key}' must be {kind.__name__}, got {value!r}") from None


def build(resolved: Dict[str, Dict[str, Any]]) -> RunConfig:
    """Turn a resolved configuration into simulation objects."""
    f = lambda s, k, t=float: _field(resolved, s, k, t)  # noqa: E731
    try:
        freq = f("carrier", "frequency_hz")
        arr = resolved["array"]
        spacing = f("array", "spacing_m") if "spacing_m" in arr else f("array", "spacing_wavelengths") * wavelength(freq)
        geom = ArrayGeometry(f("array", "rows", int), f("array", "columns", int), spacing, f("array", "height_m"))
        target = resolved["users"]["sinr_target_db"]
        target = tuple(float(t) for t in target) if isinstance(target, list) else f("users", "sinr_target_db")
        grid = resolved["simulation"]["cdf_grid_db"]
        if not isinstance(grid, list) or len(grid) != 3:
            raise ConfigError("field 'simulation.cdf_grid_db' must be [low, high, step]")
        dxs = [float(x) for x in resolved["users"]["move_distance_m"]]
        if not dxs or any(x < 0 for x in dxs):
            raise ConfigError("field 'users.move_distance_m' must list non-negative distances")
        scenario = ScenarioConfig(
            geometry=geom,
            frequency_hz=freq,
            user_count=f("users", "count", int),
            noise_power=f("channel", "noise_power"),
            scatter_radius=f("channel", "scatter_radius_m"),
            covariance_samples=f("channel", "covariance_samples", int),
            scatterer_count=f("channel", "scatterer_count", int),
            move_distance=dxs[0],
            sinr_target_db=target,
            drop_r_min=f("users", "drop_r_min_m"),
            drop_r_max=f("users", "drop_r_max_m"),
            drop_sector_deg=f("users", "drop_sector_deg"),
            user_height=f("users", "height_m"),
            min_separation=f("users", "min_separation_m"),
            horizon_s=f("users", "horizon_s"),
            experiments=f("simulation", "experiments", int),
            eval_samples=f("simulation", "eval_samples", int),
            precoder=PrecoderConfig(
                f("precoder", "target_level"), f("precoder", "interference_cap"), f("precoder", "truncation")
            ),
            zone_measure=f("channel", "zone_measure", str),
            evaluation_channel=f("channel", "evaluation_channel", str),
            realization_mode=f("channel", "realization_mode", str),
            los_weight=f("channel", "los_weight"),
            evaluation_positions=f("channel", "evaluation_positions", str),
            persistent_scatterers=f("channel", "persistent_scatterers", bool),
            cdf_grid_db=tuple(float(x) for x in grid),
            methods=tuple(resolved["simulation"]["methods"]),
            workers=f("simulation", "workers", int),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc
    return RunConfig(
        resolved=resolved,
        scenario=scenario,
        move_distances=dxs,
        seed=f("simulation", "seed", int),
        seeds=f("simulation", "seeds", int),
        workers=f("simulation", "workers", int),
    )

"""TOML scenario files <-> ScenarioConfig.

Schema (every key optional, defaults from ``ScenarioConfig``)::

    [scenario]   id, seed, n_tti, tti_seconds
    [network]    n_subchannels, n_cue, n_d2d, cells, inter_site_distance,
                 min_bs_distance, d2d_min_distance, d2d_max_distance,
                 max_power_dbm
    [scheduler]  kind ("phpfs" | "optimal"), window, iterations,
                 cue_budget, d2d_budget, waterfill_mode, max_patterns, validate
    [averaging]  initial_avg_rate, min_avg_rate
    [mobility]   enabled, speed_min, speed_max, flight_min, flight_max
    [channel]    fading, mcs_table, carrier_freq, bandwidth,
                 cellular_pl_intercept_db, cellular_pl_slope_db,
                 d2d_pl_intercept_db, d2d_pl_slope_db,
                 cellular_shadow_std_db, d2d_shadow_std_db,
                 decorrelation_length, bs_antenna_gain_db, ue_antenna_gain_db,
                 noise_figure_db, noise_density_dbm_hz
"""

from __future__ import annotations

import dataclasses
import math
import os
import re
import sys

from .channel import ChannelParams, PathlossModel
from .sim import ScenarioConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SEED_ENV = "D2DPF_SEED"


class ConfigError(ValueError):
    """Bad scenario file or override; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        where = ""
        if source is not None:
            where = f"{source}:{line}: " if line is not None else f"{source}: "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(where + message)
        self.line = line


# (section, key) -> (ScenarioConfig field or channel.<field>, type)
_SCALAR = {
    ("scenario", "id"): ("scenario_id", str),
    ("scenario", "seed"): ("seed", int),
    ("scenario", "n_tti"): ("n_tti", int),
    ("scenario", "tti_seconds"): ("tti_seconds", float),
    ("network", "n_subchannels"): ("n_subchannels", int),
    ("network", "n_cue"): ("n_cue", int),
    ("network", "n_d2d"): ("n_d2d", int),
    ("network", "cells"): ("cells", int),
    ("network", "inter_site_distance"): ("inter_site_distance", float),
    ("network", "min_bs_distance"): ("min_bs_distance", float),
    ("network", "d2d_min_distance"): ("d2d_min_distance", float),
    ("network", "d2d_max_distance"): ("d2d_max_distance", float),
    ("network", "max_power_dbm"): ("max_power_dbm", float),
    ("scheduler", "kind"): ("scheduler", str),
    ("scheduler", "window"): ("window", int),
    ("scheduler", "iterations"): ("iterations", int),
    ("scheduler", "cue_budget"): ("cue_budget", float),
    ("scheduler", "d2d_budget"): ("d2d_budget", float),
    ("scheduler", "waterfill_mode"): ("waterfill_mode", str),
    ("scheduler", "max_patterns"): ("max_patterns", int),
    ("scheduler", "validate"): ("validate", bool),
    ("averaging", "initial_avg_rate"): ("initial_avg_rate", float),
    ("averaging", "min_avg_rate"): ("min_avg_rate", float),
    ("mobility", "enabled"): ("mobility", bool),
    ("mobility", "speed_min"): ("speed_range.0", float),
    ("mobility", "speed_max"): ("speed_range.1", float),
    ("mobility", "flight_min"): ("flight_range.0", float),
    ("mobility", "flight_max"): ("flight_range.1", float),
    ("channel", "fading"): ("fading", str),
    ("channel", "mcs_table"): ("mcs_table", str),
    ("channel", "carrier_freq"): ("channel.carrier_freq", float),
    ("channel", "bandwidth"): ("channel.bandwidth", float),
    ("channel", "cellular_pl_intercept_db"): ("channel.cellular_pathloss.0", float),
    ("channel", "cellular_pl_slope_db"): ("channel.cellular_pathloss.1", float),
    ("channel", "d2d_pl_intercept_db"): ("channel.d2d_pathloss.0", float),
    ("channel", "d2d_pl_slope_db"): ("channel.d2d_pathloss.1", float),
    ("channel", "cellular_shadow_std_db"): ("channel.cellular_shadow_std_db", float),
    ("channel", "d2d_shadow_std_db"): ("channel.d2d_shadow_std_db", float),
    ("channel", "decorrelation_length"): ("channel.decorrelation_length", float),
    ("channel", "bs_antenna_gain_db"): ("channel.bs_antenna_gain_db", float),
    ("channel", "ue_antenna_gain_db"): ("channel.ue_antenna_gain_db", float),
    ("channel", "noise_figure_db"): ("channel.noise_figure_db", float),
    ("channel", "noise_density_dbm_hz"): ("channel.noise_density_dbm_hz", float),
}
SECTIONS = tuple(dict.fromkeys(s for s, _ in _SCALAR))


def _locate(text: str | None, section: str, key: str | None = None) -> int | None:
    """Best-effort line number of ``[section]`` or of ``key`` inside it."""
    if text is None:
        return None
    current = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        m = re.fullmatch(r"\[\s*([^\]]+?)\s*\]", line)
        if m:
            current = m.group(1)
            if key is None and current == section:
                return lineno
            continue
        if key is not None and current == section and re.match(rf"{re.escape(key)}\s*=", line):
            return lineno
    return None


def _coerce(value, typ, where: str):
    if typ is float:
        if isinstance(value, bool):
            raise ValueError(f"{where}: expected a number, got {value!r}")
        if isinstance(value, (int, float)):
            return float(value)
        if isinstance(value, str) and value.strip().lower() in ("inf", "+inf", "infinity"):
            return math.inf
        raise ValueError(f"{where}: expected a number, got {value!r}")
    if typ is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ValueError(f"{where}: expected an integer, got {value!r}")
        return value
    if typ is bool:
        if not isinstance(value, bool):
            raise ValueError(f"{where}: expected true/false, got {value!r}")
        return value
    if not isinstance(value, str):
        raise ValueError(f"{where}: expected a string, got {value!r}")
    return value


def _flatten(doc: dict, text: str | None, source: str | None) -> dict:
    """Validate section/key names and types; return {(section, key): value}."""
    out = {}
    for section, body in doc.items():
        if section not in SECTIONS or not isinstance(body, dict):
            raise ConfigError(
                f"unknown section [{section}] (expected one of {', '.join(SECTIONS)})",
                _locate(text, section),
                source,
            )
        for key, value in body.items():
            spec = _SCALAR.get((section, key))
            if spec is None:
                raise ConfigError(f"unknown key '{key}' in [{section}]", _locate(text, section, key), source)
            try:
                out[(section, key)] = _coerce(value, spec[1], f"{section}.{key}")
            except ValueError as exc:
                raise ConfigError(str(exc), _locate(text, section, key), source) from None
    return out


def _build(values: dict) -> ScenarioConfig:
    top: dict = {}
    chan: dict = {}
    ranges = {
        "speed_range": list(ScenarioConfig.speed_range),
        "flight_range": list(ScenarioConfig.flight_range),
    }
    defaults = ChannelParams()
    pathloss = {
        "cellular_pathloss": [defaults.cellular_pathloss.intercept_db, defaults.cellular_pathloss.slope_db],
        "d2d_pathloss": [defaults.d2d_pathloss.intercept_db, defaults.d2d_pathloss.slope_db],
    }
    for (section, key), value in values.items():
        target = _SCALAR[(section, key)][0]
        parts = target.split(".")
        if parts[0] == "channel":
            if len(parts) == 3:
                pathloss[parts[1]][int(parts[2])] = value
            else:
                chan[parts[1]] = value
        elif len(parts) == 2:
            ranges[parts[0]][int(parts[1])] = value
        else:
            top[target] = value
    channel = ChannelParams(
        **chan,
        cellular_pathloss=PathlossModel(*pathloss["cellular_pathloss"]),
        d2d_pathloss=PathlossModel(*pathloss["d2d_pathloss"]),
    )
    return ScenarioConfig(
        **top,
        channel=channel,
        speed_range=tuple(ranges["speed_range"]),
        flight_range=tuple(ranges["flight_range"]),
    )


def parse_override(item: str) -> tuple[str, str, object]:
    """``section.key=value``; the value is read as a TOML literal, else a string."""
    if "=" not in item or "." not in item.split("=", 1)[0]:
        raise ConfigError(f"override {item!r} is not of the form section.key=value")
    lhs, raw = item.split("=", 1)
    section, key = (s.strip() for s in lhs.split(".", 1))
    try:
        value = tomllib.loads(f"v = {raw.strip()}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw.strip()
    return section, key, value


def load_config(
    path: str | None = None,
    overrides: list[str] = (),
    env: dict | None = None,
    text: str | None = None,
) -> ScenarioConfig:
    """Read a scenario file, then apply the seed env variable, then overrides."""
    source = None
    doc: dict = {}
    if path is not None:
        source = str(path)
        with open(path, "rb") as fh:
            raw = fh.read()
        text = raw.decode("utf-8")
    if text is not None:
        try:
            doc = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            m = re.search(r"line (\d+)", str(exc))
            raise ConfigError(f"TOML syntax error: {exc}", int(m.group(1)) if m else None, source) from None
    values = _flatten(doc, text, source)
    env = os.environ if env is None else env
    if env.get(SEED_ENV):
        try:
            values[("scenario", "seed")] = int(env[SEED_ENV])
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {env[SEED_ENV]!r}") from None
    for item in overrides:
        section, key, value = parse_override(item)
        values.update(_flatten({section: {key: value}}, None, "--set"))
    try:
        return _build(values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), None, source) from None


def config_to_dict(cfg: ScenarioConfig) -> dict:
    """Nested, JSON-safe view of every schema key (infinities as "inf")."""
    out: dict = {s: {} for s in SECTIONS}
    for (section, key), (target, _typ) in _SCALAR.items():
        obj = cfg
        for part in target.split("."):
            if part.isdigit():
                obj = obj[int(part)] if isinstance(obj, tuple) else dataclasses.astuple(obj)[int(part)]
            else:
                obj = getattr(obj, part)
        if isinstance(obj, float) and math.isinf(obj):
            obj = "inf" if obj > 0 else "-inf"
        if obj is None:
            continue
        out[section][key] = obj
    return out


def config_from_dict(doc: dict) -> ScenarioConfig:
    return _build(_flatten(doc, None, "manifest"))

"""Experiment configuration: TOML/JSON loading, presets and schema validation."""

import hashlib
import json
from importlib import resources
from pathlib import Path

import jsonschema

from .errors import ConfigError

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .noise import PARAMETER

_NUM = {"type": "number"}
_SITE = {"type": "integer", "minimum": 1}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "preset": {"type": "string"},
        "command": {"enum": ["otoc", "noise", "varprep", "check-symmetry"]},
        "title": {"type": "string"},
        "model": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n": {"type": "integer", "minimum": 2, "maximum": 12},
                "J": _NUM,
                "hamiltonian": {"type": "string"},
                "frame_mask": {"type": "integer", "minimum": 0},
            },
        },
        "hamiltonian": {"type": "object"},
        "sites": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "w": _SITE,
                "v": {"oneOf": [_SITE, {"type": "array", "items": _SITE, "minItems": 1}]},
            },
        },
        "time": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "start": {"type": "number", "minimum": 0},
                "stop": {"type": "number", "minimum": 0},
                "points": {"type": "integer", "minimum": 0},
                "values": {"type": "array", "items": {"type": "number", "minimum": 0}},
            },
        },
        "shots": {"type": "integer", "minimum": 0},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "noise": {
            "type": "object",
            "additionalProperties": False,
            "required": ["channel"],
            "properties": {
                "channel": {"enum": sorted(set(PARAMETER) | {k.replace("_", "-") for k in PARAMETER})},
                "strength": _NUM,
                "strengths": {"type": "array", "items": _NUM, "minItems": 1},
                "marker_times": {"type": "array", "items": {"type": "number", "minimum": 0}},
                "series": {"type": "boolean"},
                "dt": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "prepare": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "k": {"type": "integer", "minimum": 1},
                "depth": {"type": "integer", "minimum": 0, "maximum": 3},
            },
        },
        "varprep": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "spectra": {
                    "type": "array",
                    "minItems": 1,
                    "items": {
                        "type": "object",
                        "required": ["type"],
                        "additionalProperties": False,
                        "properties": {
                            "type": {"type": "string"},
                            "label": {"type": "string"},
                            "params": {"type": "object"},
                            "levels": {"type": "array"},
                            "depths": {"type": "array", "items": {"type": "integer", "minimum": 0, "maximum": 3}},
                        },
                    },
                },
                "depths": {"type": "array", "items": {"type": "integer", "minimum": 0, "maximum": 3}},
                "landscape": {"type": "boolean"},
                "points": {"type": "integer", "minimum": 2, "maximum": 512},
            },
        },
    },
}

PRESETS = ("fig2b", "fig3a", "fig3b", "fig3c", "fig3d", "fig3e", "fig3f",
           "figs1a", "figs1b", "figs1c", "figs1d", "figs1e", "figs1f",
           "table-s1", "fig4b", "fig4c")


def preset_text(name):
    return resources.files("otoc_lab").joinpath("presets", f"{name}.toml").read_text()


def _parse(text, source):
    try:
        if source.endswith(".json"):
            return json.loads(text)
        return tomllib.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def _merge(base, over):
    out = dict(base)
    for k, v in over.items():
        out[k] = _merge(out[k], v) if isinstance(v, dict) and isinstance(out.get(k), dict) else v
    return out


def load_config(path):
    """Read a TOML or JSON file (or a bundled preset name) into a validated dict.

    A ``preset`` key pulls in that preset first and overlays the file on top.
    """
    p = Path(path)
    if p.exists():
        raw = _parse(p.read_text(), p.name)
        base_dir = p.parent
    elif str(path) in PRESETS:
        raw = _parse(preset_text(str(path)), f"{path}.toml")
        base_dir = Path.cwd()
    else:
        raise ConfigError(f"{path}: no such file or preset (presets: {', '.join(PRESETS)})")
    if "preset" in raw and raw["preset"] != str(path):
        name = raw["preset"]
        if name not in PRESETS:
            raise ConfigError(f"unknown preset {name!r}")
        raw = _merge(_parse(preset_text(name), f"{name}.toml"), raw)
    validate(raw)
    ham = raw.get("model", {}).get("hamiltonian")
    if ham and not Path(ham).is_absolute():
        raw["model"]["hamiltonian"] = str((base_dir / ham).resolve())
    return raw


def validate(cfg):
    errors = sorted(jsonschema.Draft202012Validator(SCHEMA).iter_errors(cfg), key=lambda e: list(e.path))
    if errors:
        lines = [f"  at {'/'.join(map(str, e.path)) or '<root>'}: {e.message}" for e in errors]
        raise ConfigError("configuration failed schema validation:\n" + "\n".join(lines))
    t = cfg.get("time", {})
    if "values" in t:
        vals = t["values"]
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise ConfigError("time/values must be strictly increasing")
    elif t.get("stop", 0) < t.get("start", 0):
        raise ConfigError("time/stop must not precede time/start")
    return cfg


def config_hash(cfg):
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()

"""Flat ``key = value`` config files.

Keys carry their unit (``window_s``, ``depth_db``). Values are numbers,
booleans, bare words or comma-separated lists; ``#`` starts a comment.
"""
from __future__ import annotations

from pathlib import Path


class SchemaError(ValueError):
    """Unknown key or a value of the wrong type."""


def _scalar(text: str):
    low = text.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    if low in ("none", "null", ""):
        return None
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def parse(text: str) -> dict:
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SchemaError(f"line {n}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        if not key.replace("_", "").isalnum():
            raise SchemaError(f"line {n}: bad key {key!r}")
        if key in out:
            raise SchemaError(f"line {n}: duplicate key {key!r}")
        out[key] = [_scalar(v.strip()) for v in val.split(",")] if "," in val else _scalar(val)
    return out


def dump(cfg: dict) -> str:
    lines = []
    for k in sorted(cfg):
        v = cfg[k]
        if isinstance(v, (list, tuple)):
            v = ", ".join(str(x) for x in v)
        lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"


def load(path) -> tuple[dict, bytes]:
    """Parsed config and its raw bytes (for hashing)."""
    raw = Path(path).read_bytes()
    return parse(raw.decode()), raw


def _check(key, value, kind):
    if kind == "list":
        value = value if isinstance(value, list) else [value]
        if not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in value):
            raise SchemaError(f"{key}: expected a list of numbers")
        return [float(x) for x in value]
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise SchemaError(f"{key}: expected a number, got {value!r}")
        return float(value)
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise SchemaError(f"{key}: expected an integer, got {value!r}")
        return value
    if kind is bool:
        if not isinstance(value, bool):
            raise SchemaError(f"{key}: expected true/false, got {value!r}")
        return value
    if kind == "optint":
        return None if value is None else _check(key, value, int)
    if isinstance(kind, tuple):
        if value not in kind:
            raise SchemaError(f"{key}: expected one of {kind}, got {value!r}")
        return value
    return value


def validate(cfg: dict, schema: dict, defaults: dict | None = None) -> dict:
    """Type-check ``cfg`` against ``schema`` (key -> kind) and fill defaults."""
    unknown = sorted(set(cfg) - set(schema))
    if unknown:
        raise SchemaError(f"unknown config keys: {', '.join(unknown)}")
    out = dict(defaults or {})
    for k, v in cfg.items():
        out[k] = _check(k, v, schema[k])
    return out

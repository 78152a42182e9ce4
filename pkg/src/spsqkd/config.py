"""Flat dotted key = value run configuration, plus output hash binding.

The file format is one assignment per line, dotted section keys, `#`
comments, e.g.::

    link.distance_km = 2.0
    session.pulses = 1000000

Command-line flags override file values, which override built-in defaults.
Every output file starts with a short hash of the effective settings so a
CSV can always be traced back to the run that produced it.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

__all__ = [
    "parse_config_text",
    "load_config_file",
    "config_hash",
    "coerce_value",
    "format_value",
]

_BOOL_WORDS = {
    "true": True,
    "yes": True,
    "on": True,
    "1": True,
    "false": False,
    "no": False,
    "off": False,
    "0": False,
}


def parse_config_text(text: str) -> dict[str, str]:
    """Raw key -> value strings; duplicate keys keep the last assignment."""
    entries: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not key:
            raise ValueError(f"config line {lineno}: empty key")
        entries[key] = value
    return entries


def load_config_file(path: str) -> dict[str, str]:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    return parse_config_text(p.read_text())


def coerce_value(key: str, raw: str, kind: type):
    """Parse a config string into kind; bools accept yes/no style words."""
    try:
        if kind is bool:
            word = raw.strip().lower()
            if word not in _BOOL_WORDS:
                raise ValueError(raw)
            return _BOOL_WORDS[word]
        if kind is int:
            # tolerate scientific notation for counts, e.g. pulses = 1e6
            as_float = float(raw)
            as_int = int(as_float)
            if as_int != as_float:
                raise ValueError(raw)
            return as_int
        return kind(raw)
    except ValueError:
        raise ValueError(f"config key {key}: cannot parse {raw!r} as {kind.__name__}")


def format_value(value) -> str:
    """Canonical string form used for hashing and echo lines."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.12g}"
    return str(value)


def config_hash(effective: dict) -> str:
    """12 hex chars binding an output file to its effective settings."""
    blob = "\n".join(f"{k}={format_value(v)}" for k, v in sorted(effective.items()))
    return hashlib.sha256(blob.encode()).hexdigest()[:12]

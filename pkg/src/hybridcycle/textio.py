"""Deterministic text I/O helpers: full-precision floats, key-value files, tables.

All writers emit byte-stable output for identical inputs: no timestamps,
no locale, '%.17g' float encoding (lossless float64 round trip).
"""

from __future__ import annotations

import os

from .errors import SchemaError


def fmt(x) -> str:
    """Lossless float64 text encoding."""
    return format(float(x), ".17g")


def fmt_row(values) -> str:
    return " ".join(fmt(v) for v in values)


def write_text(path, content: str) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="\n") as f:
        f.write(content)


def write_keyvalue(path, header: str, items: dict) -> None:
    """Write a versioned key-value file; nested dicts use dotted keys."""
    lines = [f"# {header}"]
    for key, value in _flatten(items):
        lines.append(f"{key} = {value}")
    write_text(path, "\n".join(lines) + "\n")


def _flatten(items, prefix=""):
    for key, value in items.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            yield from _flatten(value, prefix=f"{name}.")
        elif isinstance(value, float):
            yield name, fmt(value)
        elif isinstance(value, (list, tuple)):
            yield name, " ".join(fmt(v) for v in value)
        else:
            yield name, str(value)


def read_keyvalue(path, expected_header: str) -> dict:
    """Read a key-value file written by write_keyvalue; values stay strings."""
    with open(path) as f:
        lines = f.read().splitlines()
    if not lines or not lines[0].startswith("# "):
        raise SchemaError(f"{path}: missing header line")
    if lines[0][2:] != expected_header:
        raise SchemaError(f"{path}: expected header {expected_header!r}, found {lines[0][2:]!r}")
    out = {}
    for line in lines[1:]:
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise SchemaError(f"{path}: malformed line {line!r}")
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out


def kv_float(kv: dict, key: str) -> float:
    try:
        return float(kv[key])
    except KeyError:
        raise SchemaError(f"missing key {key!r}") from None


def kv_floats(kv: dict, key: str) -> list[float]:
    try:
        return [float(tok) for tok in kv[key].split()]
    except KeyError:
        raise SchemaError(f"missing key {key!r}") from None

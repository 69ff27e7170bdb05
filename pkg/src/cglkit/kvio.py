"""Flat key=value text files (configs, metadata, manifests, reports)."""

from __future__ import annotations

from pathlib import Path

from .errors import ParseError


def format_value(v) -> str:
    if isinstance(v, float):
        return format(v, ".17g")
    if isinstance(v, (list, tuple)):
        return ",".join(format_value(x) for x in v)
    return str(v)


def dump_kv(pairs) -> str:
    items = pairs.items() if isinstance(pairs, dict) else pairs
    return "".join(f"{k}={format_value(v)}\n" for k, v in items)


def write_kv(path, pairs):
    Path(path).write_text(dump_kv(pairs), encoding="utf-8")


def parse_kv(text: str, source="<string>") -> dict:
    out = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ParseError(source, line_no, f"expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out


def read_kv(path) -> dict:
    return parse_kv(Path(path).read_text(encoding="utf-8"), source=str(path))

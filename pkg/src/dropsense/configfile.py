"""Flat ``section.key = value`` config files.

    # comment
    acquisition.sample_rate = 50000.0
    droplets.profile = sinusoid
    brownian.heavy_tail_alpha = none

Floats are written with ``repr`` so a dump/load cycle is bit-exact. Keys not
present keep their defaults. Comma-separated values parse to lists (used by
extra, non-experiment keys such as titration concentrations).
"""
from __future__ import annotations

import enum
import typing
from dataclasses import fields, replace
from pathlib import Path
from typing import Any, Optional, Union

from .core import SECTIONS, ExperimentConfig


class ConfigParseError(ValueError):
    pass


def _field_types(section_obj) -> dict[str, Any]:
    hints = typing.get_type_hints(type(section_obj))
    return {f.name: hints[f.name] for f in fields(section_obj)}


def _format(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, enum.Enum):
        return str(v.value)
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return ", ".join(_format(x) for x in v)
    return str(v)


def _coerce(raw: str, tp, key: str):
    origin = typing.get_origin(tp)
    if origin is Union:
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if raw.lower() == "none":
            return None
        tp = args[0]
    try:
        if isinstance(tp, type) and issubclass(tp, enum.Enum):
            return tp(raw)
        if tp is bool:
            if raw.lower() not in ("true", "false", "1", "0"):
                raise ValueError(raw)
            return raw.lower() in ("true", "1")
        if tp is int:
            return int(raw)
        if tp is float:
            return float(raw)
    except ValueError as exc:
        raise ConfigParseError(f"{key}: cannot parse {raw!r}") from exc
    return raw


def parse_lines(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigParseError(f"line {n}: expected 'key = value'")
        k, v = (s.strip() for s in line.split("=", 1))
        if not k:
            raise ConfigParseError(f"line {n}: empty key")
        if k in out:
            raise ConfigParseError(f"line {n}: duplicate key {k!r}")
        out[k] = v
    return out


def loads(text: str, base: Optional[ExperimentConfig] = None) -> tuple[ExperimentConfig, dict[str, str]]:
    """Parse config text; returns the experiment config and any keys outside its sections."""
    cfg = base or ExperimentConfig()
    kv = parse_lines(text)
    extra = {}
    updates: dict[str, dict] = {}
    for key, raw in kv.items():
        section, _, name = key.partition(".")
        if section not in SECTIONS:
            extra[key] = raw
            continue
        types = _field_types(getattr(cfg, section))
        if name not in types:
            raise ConfigParseError(f"unknown key {key!r}")
        updates.setdefault(section, {})[name] = _coerce(raw, types[name], key)
    for section, ch in updates.items():
        cfg = replace(cfg, **{section: replace(getattr(cfg, section), **ch)})
    return cfg, extra


def dumps(cfg: ExperimentConfig, extra: Optional[dict] = None) -> str:
    lines = []
    for section in SECTIONS:
        obj = getattr(cfg, section)
        for f in fields(obj):
            lines.append(f"{section}.{f.name} = {_format(getattr(obj, f.name))}")
    for k, v in (extra or {}).items():
        lines.append(f"{k} = {_format(v)}")
    return "\n".join(lines) + "\n"


def load(path) -> tuple[ExperimentConfig, dict[str, str]]:
    return loads(Path(path).read_text())


def dump(cfg: ExperimentConfig, path, extra: Optional[dict] = None) -> None:
    Path(path).write_text(dumps(cfg, extra))


def as_list(raw: str, cast=float) -> list:
    return [cast(x.strip()) for x in raw.split(",") if x.strip()]

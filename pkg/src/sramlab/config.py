"""Technology config files: one `name = value` per line.

A bare key applies to both polarities; `nmos.<key>` / `pmos.<key>` target
one.  `temperature` is global.  Values take the same magnitude suffixes as
netlist numbers.  `lambda` is accepted for the channel-length-modulation
field (stored as `lam`).  Blank lines and `#` comments are skipped; unknown
keys are rejected with their line number.
"""

from __future__ import annotations

from dataclasses import fields

from .devices import DeviceParams, TechnologyParams
from .numbers import parse_spice_number


class ConfigError(Exception):
    pass


_DEVICE_KEYS = {f.name for f in fields(DeviceParams)}
_ALIASES = {"lambda": "lam"}


def parse_config(text: str, base: TechnologyParams | None = None) -> TechnologyParams:
    tech = base if base is not None else TechnologyParams.default()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected `name = value`, got {raw.strip()!r}")
        key, _, value_text = line.partition("=")
        key = key.strip().lower()
        try:
            value = parse_spice_number(value_text.strip())
        except ValueError:
            raise ConfigError(f"line {lineno}: bad value {value_text.strip()!r}") from None

        if key == "temperature":
            tech.temperature = value
            continue
        polarity = None
        if "." in key:
            polarity, _, key = key.partition(".")
            if polarity not in ("nmos", "pmos"):
                raise ConfigError(f"line {lineno}: unknown device prefix {polarity!r}")
        key = _ALIASES.get(key, key)
        if key not in _DEVICE_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        targets = {
            None: (tech.nmos, tech.pmos),
            "nmos": (tech.nmos,),
            "pmos": (tech.pmos,),
        }[polarity]
        for dev in targets:
            setattr(dev, key, value)
    return tech


def load_config(path) -> TechnologyParams:
    with open(path) as fh:
        return parse_config(fh.read())


def tech_header_lines(tech: TechnologyParams) -> list[str]:
    """Deterministic one-line-per-polarity parameter echo for reports."""

    def fmt(dev: DeviceParams) -> str:
        parts = []
        for f in fields(DeviceParams):
            v = getattr(dev, f.name)
            if v is not None:
                parts.append(f"{f.name}={v:.6g}")
        return " ".join(parts)

    return [
        f"temperature = {tech.temperature:.6g}",
        f"nmos: {fmt(tech.nmos)}",
        f"pmos: {fmt(tech.pmos)}",
    ]

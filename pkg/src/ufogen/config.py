"""Flat dotted-key configuration text: ``section.key = value`` lines.

The format is deliberately tiny: one assignment per line, ``#`` comments,
blank lines ignored.  Parsing is schema-driven with unknown-key rejection so
a typo in a hyperparameter name fails loudly instead of training the wrong
model.
"""

from __future__ import annotations

from typing import Any, Callable, Mapping


class ConfigError(ValueError):
    """Invalid configuration value, key, or constraint violation."""


def _parse_bool(raw: str) -> bool:
    low = raw.lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise ValueError(raw)


_PARSERS: dict[type, Callable[[str], Any]] = {
    int: int,
    float: float,
    str: str,
    bool: _parse_bool,
}


def parse_config_text(text: str, schema: Mapping[str, type]) -> dict[str, Any]:
    """Parse dotted-key text into a {key: typed value} dict.

    ``schema`` maps every permitted key to its Python type.  Unknown keys,
    malformed lines, and untypeable values raise :class:`ConfigError` naming
    the offending key path.
    """
    values: dict[str, Any] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line.strip()!r}")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key not in schema:
            raise ConfigError(f"unknown config key '{key}'")
        if key in values:
            raise ConfigError(f"duplicate config key '{key}'")
        try:
            values[key] = _PARSERS[schema[key]](raw)
        except ValueError:
            raise ConfigError(
                f"config key '{key}': cannot parse {raw!r} as {schema[key].__name__}"
            ) from None
    return values


def format_config_text(values: Mapping[str, Any]) -> str:
    """Canonical serialization: sorted keys, ``repr`` floats, final newline."""
    lines = []
    for key in sorted(values):
        val = values[key]
        if isinstance(val, bool):
            rendered = "true" if val else "false"
        elif isinstance(val, float):
            rendered = repr(val)
        else:
            rendered = str(val)
        lines.append(f"{key} = {rendered}")
    return "\n".join(lines) + "\n"

"""Experiment configs: a flat key/value text format with one nesting level.

Grammar (documented in the README):

    # comment
    [section]
    key = value

Values are integers, floats (shortest round-trip form), booleans
(true/false), double-quoted strings (bare identifiers are accepted on
input), or bracketed arrays of numbers.  Emission is canonical (fixed
section order, sorted keys), so a config round-trips losslessly and its
sha256 hash is stable.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field

SECTION_ORDER = ("experiment", "data", "model", "potential", "loss", "schedule", "run")

_BARE_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_.\-]*$")
_INT_RE = re.compile(r"^[+-]?\d+$")


class ConfigError(ValueError):
    """Malformed config text; carries line/field diagnostics in the message."""


def _emit_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, str):
        return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_emit_value(v) for v in value) + "]"
    raise ConfigError(f"unsupported config value type {type(value).__name__}")


def _parse_scalar(token: str, lineno: int, key: str):
    token = token.strip()
    if token.startswith('"'):
        if not token.endswith('"') or len(token) < 2:
            raise ConfigError(f"line {lineno}: unterminated string for {key!r}")
        body = token[1:-1]
        return body.replace('\\"', '"').replace("\\\\", "\\")
    if token == "true":
        return True
    if token == "false":
        return False
    if _INT_RE.match(token):
        return int(token)
    try:
        return float(token)
    except ValueError:
        pass
    if _BARE_RE.match(token):
        return token
    raise ConfigError(f"line {lineno}: cannot parse value {token!r} for {key!r}")


def _parse_value(token: str, lineno: int, key: str):
    token = token.strip()
    if token.startswith("["):
        if not token.endswith("]"):
            raise ConfigError(f"line {lineno}: unterminated array for {key!r}")
        body = token[1:-1].strip()
        if not body:
            return []
        return [_parse_scalar(part, lineno, key) for part in body.split(",")]
    return _parse_scalar(token, lineno, key)


@dataclass
class ExperimentConfig:
    """Sectioned key/value settings for one scenario run."""

    sections: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in SECTION_ORDER:
            self.sections.setdefault(name, {})

    def __getitem__(self, name: str) -> dict:
        return self.sections[name]

    def get(self, section: str, key: str, default=None):
        return self.sections.get(section, {}).get(key, default)

    def set(self, section: str, key: str, value) -> None:
        self.sections.setdefault(section, {})[key] = value

    def to_text(self) -> str:
        lines = []
        extra = [s for s in self.sections if s not in SECTION_ORDER]
        for name in list(SECTION_ORDER) + sorted(extra):
            body = self.sections.get(name, {})
            if not body:
                continue
            lines.append(f"[{name}]")
            for key in sorted(body):
                lines.append(f"{key} = {_emit_value(body[key])}")
            lines.append("")
        return "\n".join(lines)

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        sections: dict = {}
        current: dict | None = None
        current_name = ""
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if line.startswith("["):
                if not line.endswith("]"):
                    raise ConfigError(f"line {lineno}: malformed section header {line!r}")
                current_name = line[1:-1].strip()
                if not current_name:
                    raise ConfigError(f"line {lineno}: empty section name")
                current = sections.setdefault(current_name, {})
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
            if current is None:
                raise ConfigError(f"line {lineno}: key outside any [section]")
            key, _, value = line.partition("=")
            key = key.strip()
            if not key:
                raise ConfigError(f"line {lineno}: empty key in section [{current_name}]")
            current[key] = _parse_value(value, lineno, key)
        return cls(sections=sections)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_text(fh.read())

    def to_file(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_text())

    def hash(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()

    def copy(self) -> "ExperimentConfig":
        return ExperimentConfig(
            sections={name: dict(body) for name, body in self.sections.items()}
        )

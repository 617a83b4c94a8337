"""Run configuration: sectioned ``key = value`` text and matrix files.

Example::

    scenario = optics
    [beam]
    lambda = 2.0          # angstrom
    [medium]
    n_o = 1e-3
    b = 5                 # fm
    D = 1e6, 2e6          # a list sweeps the thickness

Every key belongs to one section and may also appear before the first
section header.
"""
from __future__ import annotations

import difflib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np


class ConfigError(ValueError):
    pass


class ParseError(ConfigError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class UnknownKey(ConfigError):
    def __init__(self, name: str, line: int, suggestion: str | None):
        hint = f" (did you mean {suggestion!r}?)" if suggestion else ""
        super().__init__(f"line {line}: unknown key {name!r}{hint}")
        self.name = name
        self.line = line
        self.suggestion = suggestion


class DomainError(ConfigError):
    def __init__(self, key: str, constraint: str, line: int | None = None):
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{key} must be {constraint}")
        self.key = key
        self.constraint = constraint
        self.line = line


SCENARIOS = ("cp-check", "evolve", "optics", "interferometer")
FORMATS = ("csv", "json")
INTEGRATORS = ("rk4", "kraus_step")


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _float_list(text: str) -> list[float]:
    return [float(x) for x in text.split(",")]


@dataclass(frozen=True)
class Key:
    section: str
    parse: Callable[[str], Any]
    default: Any = None
    check: Callable[[Any], bool] | None = None
    constraint: str = ""


def _positive(x):
    return x > 0


def _non_negative(x):
    return x >= 0


KEYS: dict[str, Key] = {
    "scenario": Key("run", str, None, lambda s: s in SCENARIOS, "one of " + ", ".join(SCENARIOS)),
    "seed": Key("run", int, 0),
    "lambda": Key("beam", float, None, _positive, "> 0"),
    "b": Key("medium", float, None),
    "n_o": Key("medium", float, None, _non_negative, ">= 0"),
    "D": Key("medium", _float_list, None, lambda xs: all(x >= 0 for x in xs), ">= 0"),
    "s_table": Key("medium", str, None),
    "order": Key("quadrature", int, 64, lambda n: n >= 2, ">= 2"),
    "n_dirs": Key("quadrature", int, 8, lambda n: n >= 1, ">= 1"),
    "dt": Key("evolution", float, None, _positive, "> 0"),
    "t_final": Key("evolution", float, None, _non_negative, ">= 0"),
    "integrator": Key("evolution", str, "rk4", lambda s: s in INTEGRATORS, "one of " + ", ".join(INTEGRATORS)),
    "renormalize": Key("evolution", _bool, False),
    "monitor_every": Key("evolution", int, 1, lambda n: n >= 1, ">= 1"),
    "kraus": Key("inputs", str, None),
    "random_maps": Key("inputs", int, 0, _non_negative, ">= 0"),
    "random_dim": Key("inputs", int, 2, lambda n: 1 <= n <= 8, "between 1 and 8"),
    "H0": Key("inputs", str, None),
    "V": Key("inputs", str, None),
    "Ls": Key("inputs", str, None),
    "Gamma": Key("inputs", str, None),
    "w0": Key("inputs", str, None),
    "output": Key("output", str, None),
    "format": Key("output", str, "csv", lambda s: s in FORMATS, "csv or json"),
    "include_states": Key("output", _bool, False),
}
SECTIONS = sorted({k.section for k in KEYS.values()})
PATH_KEYS = ("s_table", "kraus", "H0", "V", "Ls", "Gamma", "w0")

REQUIRED = {
    "cp-check": (),
    "evolve": ("H0", "w0", "t_final"),
    "optics": ("lambda", "b", "n_o", "D"),
    "interferometer": ("lambda", "b", "n_o", "D"),
}


@dataclass
class RunConfig:
    values: dict[str, Any]
    base_dir: Path = field(default=Path("."))
    lines: dict[str, int] = field(default_factory=dict)

    def __getattr__(self, name):
        try:
            return self.__dict__["values"][name]
        except KeyError:
            raise AttributeError(name) from None

    @property
    def scenario(self) -> str:
        return self.values["scenario"]

    def path(self, key: str) -> Path | None:
        raw = self.values.get(key)
        if raw is None:
            return None
        p = Path(raw)
        return p if p.is_absolute() else self.base_dir / p

    def resolved(self) -> dict[str, Any]:
        """All keys with defaults filled in, in declaration order."""
        return {k: self.values.get(k) for k in KEYS}


def suggest(name: str) -> str | None:
    match = difflib.get_close_matches(name, list(KEYS), n=1, cutoff=0.6)
    return match[0] if match else None


def parse_config(text: str, base_dir: Path | str = ".", check_files: bool = True) -> RunConfig:
    """Parse and validate configuration text.

    Relative paths resolve against ``base_dir``. Every error names the
    offending key and line.
    """
    raw: dict[str, tuple[str, int]] = {}
    section = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        content = line.split("#", 1)[0].strip()
        if not content:
            continue
        if content.startswith("["):
            if not content.endswith("]"):
                raise ParseError(lineno, f"malformed section header {content!r}")
            section = content[1:-1].strip()
            if section not in SECTIONS:
                raise ParseError(lineno, f"unknown section [{section}]; expected one of {', '.join(SECTIONS)}")
            continue
        if "=" not in content:
            raise ParseError(lineno, f"expected 'key = value', got {content!r}")
        key, value = (part.strip() for part in content.split("=", 1))
        if not key:
            raise ParseError(lineno, "missing key before '='")
        if key not in KEYS:
            raise UnknownKey(key, lineno, suggest(key))
        if section is not None and KEYS[key].section != section:
            raise ParseError(lineno, f"key {key!r} belongs in [{KEYS[key].section}], not [{section}]")
        if key in raw:
            raise ParseError(lineno, f"duplicate key {key!r} (first set on line {raw[key][1]})")
        if not value:
            raise ParseError(lineno, f"empty value for {key!r}")
        raw[key] = (value, lineno)

    values: dict[str, Any] = {}
    lines: dict[str, int] = {}
    for key, entry in KEYS.items():
        if key not in raw:
            values[key] = entry.default
            continue
        text_value, lineno = raw[key]
        lines[key] = lineno
        try:
            parsed = entry.parse(text_value)
        except ValueError:
            raise ParseError(lineno, f"cannot parse {key} = {text_value!r}") from None
        if entry.check is not None and not entry.check(parsed):
            raise DomainError(key, entry.constraint, lineno)
        values[key] = parsed

    if values["scenario"] is None:
        raise DomainError("scenario", "set (one of " + ", ".join(SCENARIOS) + ")")
    for key in REQUIRED[values["scenario"]]:
        if values[key] is None:
            raise DomainError(key, f"set for scenario {values['scenario']}")
    if values["scenario"] == "cp-check" and values["kraus"] is None and values["random_maps"] == 0:
        raise DomainError("kraus", "set, or random_maps > 0, for scenario cp-check")
    if values["scenario"] == "evolve" and values["dt"] is not None and values["t_final"] > 0:
        if values["dt"] > values["t_final"]:
            raise DomainError("dt", "<= t_final", lines.get("dt"))

    cfg = RunConfig(values, Path(base_dir), lines)
    if check_files:
        for key in PATH_KEYS:
            p = cfg.path(key)
            if p is not None and not p.is_file():
                raise DomainError(key, f"an existing file (not found: {p})", lines.get(key))
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    return parse_config(path.read_text(), base_dir=path.parent)


def parse_matrices(text: str, source: str = "<text>") -> list[np.ndarray]:
    """Blank-line separated blocks of rows of ``re+imj`` entries."""
    blocks: list[list[list[complex]]] = [[]]
    for lineno, line in enumerate(text.splitlines(), start=1):
        content = line.split("#", 1)[0].strip()
        if not content:
            if blocks[-1]:
                blocks.append([])
            continue
        try:
            blocks[-1].append([complex(tok) for tok in content.split()])
        except ValueError:
            raise ParseError(lineno, f"{source}: bad matrix entry in {content!r}") from None
    mats = []
    for rows in blocks:
        if not rows:
            continue
        if any(len(r) != len(rows) for r in rows):
            raise ConfigError(f"{source}: matrix block is not square")
        mats.append(np.array(rows, dtype=complex))
    if not mats:
        raise ConfigError(f"{source}: no matrix found")
    return mats


def read_matrices(path) -> list[np.ndarray]:
    path = Path(path)
    return parse_matrices(path.read_text(), str(path))


def read_matrix(path) -> np.ndarray:
    mats = read_matrices(path)
    if len(mats) != 1:
        raise ConfigError(f"{path}: expected one matrix, found {len(mats)}")
    return mats[0]


def format_matrix(m: np.ndarray) -> str:
    return "\n".join(" ".join(f"{z.real:.17g}{z.imag:+.17g}j" for z in row) for row in np.asarray(m, dtype=complex))

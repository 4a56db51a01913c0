"""Run configuration: INI text with fixed sections, strict keys, canonical emit."""
from __future__ import annotations

import configparser
import re
from dataclasses import asdict, dataclass, field, fields, replace

from .guidance import IntegratorConfig
from .hardy import DetectorSpec, HardyGeometry, run_start

COMMANDS = ("hardy", "equilibrium", "nogo", "dirac", "measure")


class ConfigError(ValueError):
    """Parse or validation failure; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None, field_name: str | None = None):
        self.line = line
        self.field_name = field_name
        where = f"line {line}: " if line is not None else ""
        super().__init__(where + message)


@dataclass(frozen=True)
class DiracConfig:
    length: float = 80.0
    points: int = 512
    mass: float = 1.0
    x0: float = -5.0
    k0: float = 1.0
    width: float = 2.0
    t_end: float = 10.0
    steps: int = 1000
    dt: float = 0.05
    bins: int = 32
    paths: int = 5


@dataclass(frozen=True)
class EquilibriumConfig:
    h_values: tuple = (-1.0, 0.0, 1.0)
    s_values: tuple = (0.4, 0.9, 1.4)


@dataclass(frozen=True)
class NogoConfig:
    constraints: str = ""  # path to a constraint file; empty means the Hardy set
    drop: str = ""  # constraint name to remove before certifying


@dataclass(frozen=True)
class MeasureConfig:
    cases: int = 100
    events: int = 3


@dataclass(frozen=True)
class RunConfig:
    command: str = "hardy"
    h: float | None = None  # None means -theta
    n: int = 20000
    seed: int = 1
    out: str = "out"
    check: bool = False
    record_every: float = 0.25
    geometry: HardyGeometry = field(default_factory=HardyGeometry)
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    detectors: tuple = ()
    equilibrium: EquilibriumConfig = field(default_factory=EquilibriumConfig)
    dirac: DiracConfig = field(default_factory=DiracConfig)
    nogo: NogoConfig = field(default_factory=NogoConfig)
    measure: MeasureConfig = field(default_factory=MeasureConfig)

    @property
    def offset(self) -> float:
        return -self.geometry.theta if self.h is None else self.h


_RUN_KEYS = ("command", "h", "n", "seed", "out", "check", "record_every")
_SECTIONS = {
    "geometry": HardyGeometry,
    "integrator": IntegratorConfig,
    "equilibrium": EquilibriumConfig,
    "dirac": DiracConfig,
    "nogo": NogoConfig,
    "measure": MeasureConfig,
}
_DETECTOR = re.compile(r"detector\.(a|b)$")


def _line_map(text: str) -> dict:
    """(section, key) -> line number, by a plain scan of the text."""
    out = {}
    sec = None
    for i, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        m = re.match(r"\[(.+)\]$", line)
        if m:
            sec = m.group(1).strip()
            out[(sec, None)] = i
            continue
        key = re.split(r"[=:]", line, maxsplit=1)[0].strip().lower()
        out[(sec, key)] = i
    return out


def _convert(kind, raw: str):
    raw = raw.strip()
    if kind is bool:
        low = raw.lower()
        if low in ("true", "yes", "on", "1"):
            return True
        if low in ("false", "no", "off", "0"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if kind is int:
        return int(raw, 0)
    if kind is float:
        return float(raw)
    if kind is tuple:
        return tuple(float(v) for v in raw.split(",") if v.strip())
    return raw


def _kind(default):
    for k in (bool, int, float, tuple, str):
        if isinstance(default, k):
            return k
    return float


def parse_config(text: str) -> RunConfig:
    lines = _line_map(text)
    cp = configparser.ConfigParser(interpolation=None, default_section="__none__")
    try:
        cp.read_string(text)
    except configparser.Error as e:
        ln = getattr(e, "lineno", None)
        if ln is None and getattr(e, "errors", None):
            ln = e.errors[0][0]
        raise ConfigError(str(e).splitlines()[0], ln) from None

    def at(sec, key=None):
        return lines.get((sec, key))

    run_kw = {}
    sub_kw = {}
    detectors = []
    for sec in cp.sections():
        items = list(cp.items(sec))
        if sec == "run":
            for key, raw in items:
                if key not in _RUN_KEYS:
                    raise ConfigError(f"unknown key {key!r} in [run]", at(sec, key), f"run.{key}")
                default = getattr(RunConfig(), key)
                kind = float if key == "h" else _kind(default)
                try:
                    run_kw[key] = _convert(kind, raw)
                except ValueError as e:
                    raise ConfigError(f"run.{key}: {e}", at(sec, key), f"run.{key}") from None
        elif sec in _SECTIONS:
            cls = _SECTIONS[sec]
            names = {f.name: f for f in fields(cls)}
            kw = {}
            for key, raw in items:
                if key not in names:
                    raise ConfigError(f"unknown key {key!r} in [{sec}]", at(sec, key), f"{sec}.{key}")
                try:
                    kw[key] = _convert(_kind(getattr(cls(), key)), raw)
                except ValueError as e:
                    raise ConfigError(f"{sec}.{key}: {e}", at(sec, key), f"{sec}.{key}") from None
            sub_kw[sec] = (kw, cls)
        elif _DETECTOR.match(sec):
            sub = _DETECTOR.match(sec).group(1)
            kw = dict(items)
            for key in kw:
                if key not in ("region", "time"):
                    raise ConfigError(f"unknown key {key!r} in [{sec}]", at(sec, key), f"{sec}.{key}")
            if set(kw) != {"region", "time"}:
                raise ConfigError(f"[{sec}] needs both region and time", at(sec), sec)
            try:
                detectors.append(DetectorSpec(sub, kw["region"].strip(), float(kw["time"])))
            except ValueError as e:
                raise ConfigError(f"{sec}: {e}", at(sec), sec) from None
        else:
            raise ConfigError(f"unknown section [{sec}]", at(sec), sec)

    built = {}
    for sec, (kw, cls) in sub_kw.items():
        try:
            built[sec] = cls(**kw)
        except (TypeError, ValueError) as e:
            msg = str(e)
            bad = next((k for k in kw if k in msg), None)
            if "track separation" in msg:
                bad = "separation"
            name = f"{sec}.{bad}" if bad else sec
            raise ConfigError(f"{name}: {msg}", at(sec, bad) if bad else at(sec), name) from None
    cfg = RunConfig(**run_kw, **built, detectors=tuple(sorted(detectors, key=lambda d: d.subsystem)))
    return validate(cfg, lines)


def validate(cfg: RunConfig, lines: dict | None = None) -> RunConfig:
    lines = lines or {}

    def fail(msg, sec, key):
        raise ConfigError(msg, lines.get((sec, key)), f"{sec}.{key}")

    if cfg.command not in COMMANDS:
        fail(f"run.command must be one of {COMMANDS}", "run", "command")
    if cfg.n < 1:
        fail("run.n must be >= 1", "run", "n")
    if not 0 <= cfg.seed < 2**64:
        fail("run.seed must be a 64-bit unsigned integer", "run", "seed")
    if not cfg.record_every > 0:
        fail("run.record_every must be positive", "run", "record_every")
    if cfg.command in ("hardy", "equilibrium"):
        hs = [cfg.offset] if cfg.command == "hardy" else list(cfg.equilibrium.h_values)
        for h in hs:
            try:
                run_start(cfg.geometry, h)
            except ValueError as e:
                fail(f"h: {e}", "run" if cfg.command == "hardy" else "equilibrium", "h" if cfg.command == "hardy" else "h_values")
    if cfg.command == "equilibrium":
        if not cfg.equilibrium.s_values or any(s <= 0 for s in cfg.equilibrium.s_values):
            fail("equilibrium.s_values must be positive", "equilibrium", "s_values")
    d = cfg.dirac
    if d.points < 2 or d.points & (d.points - 1):
        fail("dirac.points must be a power of two", "dirac", "points")
    if d.steps < 1 or d.bins < 2 or d.paths < 1 or not d.dt > 0 or not d.t_end > 0 or not d.width > 0:
        fail("dirac: steps, bins, paths, dt, t_end, width must be positive", "dirac", "steps")
    if cfg.measure.cases < 1 or cfg.measure.events < 1:
        fail("measure.cases and measure.events must be positive", "measure", "cases")
    return cfg


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ", ".join(repr(float(x)) for x in v)
    return str(v)


def emit_config(cfg: RunConfig) -> str:
    """Canonical text: every section, every key, fixed order."""
    out = ["[run]"]
    for key in _RUN_KEYS:
        v = getattr(cfg, key)
        if key == "h":
            v = cfg.offset
        out.append(f"{key} = {_fmt(v)}")
    for sec, cls in _SECTIONS.items():
        out.append("")
        out.append(f"[{sec}]")
        obj = getattr(cfg, sec)
        for f in fields(cls):
            out.append(f"{f.name} = {_fmt(getattr(obj, f.name))}")
    for d in cfg.detectors:
        out += ["", f"[detector.{d.subsystem}]", f"region = {d.region}", f"time = {_fmt(float(d.time))}"]
    return "\n".join(out) + "\n"


def config_dict(cfg: RunConfig) -> dict:
    d = asdict(replace(cfg, h=cfg.offset))
    d["detectors"] = [asdict(x) for x in cfg.detectors]
    for k in ("equilibrium",):
        d[k] = {kk: list(vv) if isinstance(vv, tuple) else vv for kk, vv in d[k].items()}
    return d


def load_config(path: str) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())

"""Scenario files: INI sections [scenario], [actuator], [load], [controller], [sim].

Only ``[load] type`` is required; everything else falls back to the fitted
prototype parameters and the package defaults.  Unknown keys warn, unknown
sections and duplicate keys are errors.
"""

from __future__ import annotations

import configparser
import io
import math
import warnings
from dataclasses import dataclass, fields, replace
from importlib import resources
from pathlib import Path
from typing import Optional

from .controller import ControllerConfig, format_schedule, parse_schedule
from .environment import LOAD_TYPES, LoadModel
from .params import PARAM_KEYS, ActuatorParams, ParameterError, params_from_section
from .simulator import SimConfig

SECTIONS = ("scenario", "actuator", "load", "controller", "sim")
LOAD_KEYS = {
    "free": (),
    "fixed": ("contact_angle",),
    "inertial": ("I_L", "resistive_torque", "contact_angle"),
    "compliant": ("k_c", "b_c", "contact_angle"),
}
CONTROLLER_KEYS = tuple(f.name for f in fields(ControllerConfig))
SIM_KEYS = tuple(f.name for f in fields(SimConfig))


class ScenarioError(ValueError):
    """Malformed or invalid scenario.  ``line``/``column`` are 1-based when known."""

    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None, keys=()):
        loc = f"line {line}" + (f", column {column}" if column else "") + ": " if line else ""
        super().__init__(loc + message)
        self.line, self.column, self.keys = line, column, tuple(keys)


class ScenarioWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ScenarioSpec:
    actuator: ActuatorParams
    load: LoadModel
    controller: ControllerConfig
    sim: SimConfig
    name: str = "scenario"


def _key_lines(text: str) -> dict[tuple[str, str], int]:
    """Line number of every ``key = value`` (for error messages)."""
    out, section = {}, None
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
        elif section and line and line[0] not in "#;" and "=" in line:
            key = line.split("=", 1)[0].strip()
            out.setdefault((section, key), n)
    return out


def _num(section: str, key: str, raw: str, lines) -> float:
    try:
        v = float(raw)
    except ValueError:
        raise ScenarioError(
            f"[{section}] {key}: {raw!r} is not a number", lines.get((section, key)), keys=(key,)
        ) from None
    if math.isnan(v):
        raise ScenarioError(f"[{section}] {key}: NaN not allowed", lines.get((section, key)), keys=(key,))
    return v


def _warn_unknown(section: str, keys, known, lines):
    for k in keys:
        if k not in known:
            where = lines.get((section, k))
            warnings.warn(
                f"[{section}] unknown key {k!r}" + (f" (line {where})" if where else "") + " ignored",
                ScenarioWarning,
                stacklevel=3,
            )


def parse_scenario(text: str, name: Optional[str] = None) -> ScenarioSpec:
    cp = configparser.ConfigParser(
        interpolation=None, strict=True, delimiters=("=",), inline_comment_prefixes=("#", ";")
    )
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.DuplicateOptionError as e:
        raise ScenarioError(f"duplicate key {e.option!r} in [{e.section}]", e.lineno, keys=(e.option,)) from None
    except configparser.DuplicateSectionError as e:
        raise ScenarioError(f"duplicate section [{e.section}]", e.lineno) from None
    except configparser.MissingSectionHeaderError as e:
        raise ScenarioError("expected a [section] header", e.lineno, 1) from None
    except configparser.ParsingError as e:
        lineno = e.errors[0][0] if e.errors else None
        raise ScenarioError("malformed line (expected key = value)", lineno, 1) from None
    lines = _key_lines(text)

    for sec in cp.sections():
        if sec not in SECTIONS:
            where = next((n for n, l in enumerate(text.splitlines(), 1) if l.strip() == f"[{sec}]"), None)
            raise ScenarioError(f"unknown section [{sec}]", where)

    # [actuator]
    act = dict(cp.items("actuator")) if cp.has_section("actuator") else {}
    _warn_unknown("actuator", act, PARAM_KEYS, lines)
    act = {k: _num("actuator", k, v, lines) for k, v in act.items() if k in PARAM_KEYS}

    # [controller]
    ctl_raw = dict(cp.items("controller")) if cp.has_section("controller") else {}
    _warn_unknown("controller", ctl_raw, CONTROLLER_KEYS, lines)
    ctl_kw = {}
    for k, v in ctl_raw.items():
        if k == "k_d_schedule":
            try:
                ctl_kw[k] = parse_schedule(v)
            except ValueError as e:
                raise ScenarioError(f"[controller] k_d_schedule: {e}", lines.get(("controller", k)), keys=(k,)) from None
        elif k in CONTROLLER_KEYS:
            ctl_kw[k] = _num("controller", k, v, lines)

    # one brake delay drives both the plant and the controller timer
    if "brake_delay" in act and "brake_delay" in ctl_kw and act["brake_delay"] != ctl_kw["brake_delay"]:
        raise ScenarioError(
            "[actuator] brake_delay and [controller] brake_delay disagree",
            lines.get(("controller", "brake_delay")),
            keys=("brake_delay",),
        )
    if "brake_delay" in ctl_kw:
        act["brake_delay"] = ctl_kw["brake_delay"]
    try:
        params = params_from_section(act)
    except ParameterError as e:
        first = next((lines[("actuator", k)] for k in e.keys if ("actuator", k) in lines), None)
        raise ScenarioError(str(e), first, keys=e.keys) from None
    ctl_kw["brake_delay"] = params.brake_delay
    try:
        controller = ControllerConfig(**ctl_kw)
    except ValueError as e:
        raise ScenarioError(f"[controller] {e}") from None

    # [load]
    if not cp.has_section("load") or not cp.has_option("load", "type"):
        raise ScenarioError("[load] type is required", keys=("type",))
    load_raw = dict(cp.items("load"))
    kind = load_raw.pop("type").strip().lower()
    if kind not in LOAD_TYPES:
        raise ScenarioError(
            f"[load] type {kind!r} is not one of {', '.join(LOAD_TYPES)}", lines.get(("load", "type")), keys=("type",)
        )
    _warn_unknown("load", load_raw, LOAD_KEYS[kind], lines)
    load_kw = {k: _num("load", k, v, lines) for k, v in load_raw.items() if k in LOAD_KEYS[kind]}
    try:
        load = LOAD_TYPES[kind](**load_kw)
    except ParameterError as e:
        first = next((lines[("load", k)] for k in e.keys if ("load", k) in lines), None)
        raise ScenarioError(f"[load] {e}", first, keys=e.keys) from None

    # [sim]
    sim_raw = dict(cp.items("sim")) if cp.has_section("sim") else {}
    _warn_unknown("sim", sim_raw, SIM_KEYS, lines)
    try:
        sim = SimConfig(**{k: _num("sim", k, v, lines) for k, v in sim_raw.items() if k in SIM_KEYS})
    except ValueError as e:
        raise ScenarioError(f"[sim] {e}") from None

    meta = dict(cp.items("scenario")) if cp.has_section("scenario") else {}
    _warn_unknown("scenario", meta, ("name",), lines)
    return ScenarioSpec(params, load, controller, sim, meta.get("name", name or "scenario"))


def load_scenario(path) -> ScenarioSpec:
    path = Path(path)
    return parse_scenario(path.read_text(encoding="utf-8"), name=path.stem)


def serialize_scenario(spec: ScenarioSpec) -> str:
    """Write every value explicitly, so the result parses back to an equal spec."""
    buf = io.StringIO()
    w = buf.write
    w(f"[scenario]\nname = {spec.name}\n\n[actuator]\n")
    for k in PARAM_KEYS:
        w(f"{k} = {getattr(spec.actuator, k)!r}\n")
    w(f"\n[load]\ntype = {spec.load.kind}\n")
    for k in LOAD_KEYS[spec.load.kind]:
        w(f"{k} = {getattr(spec.load, k)!r}\n")
    w("\n[controller]\n")
    for k in CONTROLLER_KEYS:
        v = getattr(spec.controller, k)
        w(f"{k} = {format_schedule(v) if k == 'k_d_schedule' else repr(v)}\n")
    w("\n[sim]\n")
    for k in SIM_KEYS:
        w(f"{k} = {getattr(spec.sim, k)!r}\n")
    return buf.getvalue()


def bundled_scenarios() -> dict[str, Path]:
    root = resources.files("dsdm").joinpath("scenarios")
    return {Path(str(f)).stem: Path(str(f)) for f in root.iterdir() if str(f).endswith(".scenario")}


def with_overrides(spec: ScenarioSpec, dt: Optional[float] = None, duration: Optional[float] = None) -> ScenarioSpec:
    kw = {k: v for k, v in (("dt", dt), ("duration", duration)) if v is not None}
    if not kw:
        return spec
    sim = replace(spec.sim, **kw)
    return replace(spec, sim=sim)

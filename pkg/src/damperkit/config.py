"""JSON configuration: schema, validation with line/column diagnostics, and
conversion to model objects.

Durations carry their unit in the key name: ``delta_us``, ``epsilon_ns``,
``period_ms`` or ``latency_s``.  Exactly one spelling of a duration may be
given.  See ``docs/config.md`` for the full format.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema

from .bounds import BdsSpec, Block, JcsSpec
from .clocks import ClockModel, preset
from .curves import Curve, LeakyBucket, PacketStaircase, RateLatency
from .dampers import DamperSpec, HeaderMode, from_tolerances
from .errors import ConfigError, DamperkitError

SCHEMA_VERSION = 1
UNITS = {"ns": 1e-9, "us": 1e-6, "ms": 1e-3, "s": 1.0}


# ---------------------------------------------------------------------------
# Schema
# ---------------------------------------------------------------------------


def _durations(*names: str, nullable: tuple[str, ...] = ()) -> dict:
    props = {}
    for name in names:
        for unit in UNITS:
            if name in nullable:
                # null or "inf" stands for an unbounded value
                props[f"{name}_{unit}"] = {"anyOf": [{"type": "number", "exclusiveMinimum": 0},
                                                     {"type": "null"}, {"const": "inf"}]}
            else:
                props[f"{name}_{unit}"] = {"type": "number", "minimum": 0}
    return props


def _one_of_units(name: str) -> dict:
    return {"anyOf": [{"required": [f"{name}_{u}"]} for u in UNITS]}


_CLOCK = {
    "type": "object",
    "additionalProperties": False,
    "properties": {"preset": {"enum": ["gptp", "white_rabbit", "ntp", "free_running", "perfect"]},
                   "rho": {"type": "number", "minimum": 1},
                   "rho_minus_one": {"type": "number", "minimum": 0},
                   **_durations("eta", "omega", nullable=("omega",))},
    "not": {"required": ["rho", "rho_minus_one"]},
}

_CURVE = {
    "type": "object",
    "required": ["type"],
    "properties": {"type": {"enum": ["leaky_bucket", "leaky_bucket_packets", "staircase", "rate_latency"]}},
    "allOf": [
        {"if": {"properties": {"type": {"const": "leaky_bucket"}}},
         "then": {"required": ["rate_bytes_per_s", "burst_bytes"],
                  "properties": {"type": True, "rate_bytes_per_s": {"type": "number", "minimum": 0},
                                 "burst_bytes": {"type": "number", "minimum": 0}},
                  "additionalProperties": False}},
        {"if": {"properties": {"type": {"const": "leaky_bucket_packets"}}},
         "then": {"required": ["rate_packets_per_s", "burst_packets"],
                  "properties": {"type": True, "rate_packets_per_s": {"type": "number", "minimum": 0},
                                 "burst_packets": {"type": "number", "minimum": 0}},
                  "additionalProperties": False}},
        {"if": {"properties": {"type": {"const": "staircase"}}},
         "then": {"required": ["burst_packets", "packets_per_period"],
                  "allOf": [_one_of_units("period")],
                  "properties": {"type": True, "burst_packets": {"type": "number", "minimum": 0},
                                 "packets_per_period": {"type": "number", "minimum": 0},
                                 "packet_bytes": {"type": "number", "exclusiveMinimum": 0},
                                 **_durations("period")},
                  "additionalProperties": False}},
        {"if": {"properties": {"type": {"const": "rate_latency"}}},
         "then": {"required": ["rate_bytes_per_s"],
                  "allOf": [_one_of_units("latency")],
                  "properties": {"type": True, "rate_bytes_per_s": {"type": "number", "minimum": 0},
                                 **_durations("latency")},
                  "additionalProperties": False}},
    ],
}

_JCS = {
    "type": "object",
    "required": ["type"],
    "allOf": [_one_of_units("delta")],
    "additionalProperties": False,
    "properties": {"type": {"const": "jcs"}, "name": {"type": "string"}, "fifo": {"type": "boolean"},
                   "clock_id": {"type": "string"}, **_durations("delta", "epsilon", "delta_min")},
}

_BDS = {
    "type": "object",
    "required": ["type"],
    "additionalProperties": False,
    "properties": {"type": {"const": "bds"}, "name": {"type": "string"}, "fifo": {"type": "boolean"},
                   **_durations("delay", "pi_lower", "pi_upper", "nu")},
}

_ELEMENT = {
    "type": "object",
    "required": ["type"],
    "properties": {"type": {"enum": ["jcs", "bds"]}},
    "allOf": [
        {"if": {"properties": {"type": {"const": "jcs"}}}, "then": _JCS},
        {"if": {"properties": {"type": {"const": "bds"}}}, "then": _BDS},
    ],
}

_DAMPER = {
    "type": "object",
    "required": ["preset"],
    "additionalProperties": False,
    "properties": {"preset": {"enum": ["ideal", "rcsp", "rgcq", "fopleq", "sced_plus", "hol"]},
                   "header_mode": {"enum": ["default", "te_stamping"]},
                   **_durations("delta_l", "delta_u", "phi_min", "phi_max", "granularity", "epsilon")},
}

_BLOCK = {
    "type": "object",
    "required": ["elements", "damper"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "elements": {"type": "array", "items": _ELEMENT},
        "damper": _DAMPER,
        "clock": _CLOCK,
        "distinct_clock_count": {"type": "integer", "minimum": 0},
        "repeat": {"type": "integer", "minimum": 1},
    },
}

_SOURCE = {
    "type": "object",
    "additionalProperties": False,
    "properties": {"kind": {"enum": ["periodic", "back_to_back", "greedy", "bounded_random"]},
                   "packets": {"type": "integer", "minimum": 0},
                   "alpha": _CURVE,
                   **_durations("period", "spacing")},
}

_SIMULATION = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "flow": {"type": "string"},
        "source": _SOURCE,
        "clock_modes": {"anyOf": [{"type": "string"}, {"type": "array", "items": {"type": "string"}}]},
        "jcs_policy": {"enum": ["uniform", "extremes", "max"]},
        "jcs_low_fraction": {"type": "number", "minimum": 0, "maximum": 1},
        "header_error": {"enum": ["random", "plus", "minus", "zero"]},
        "release_policy": {"enum": ["random", "latest", "earliest"]},
        "grid_phase": {"enum": ["random", "zero"]},
        "trials": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        **_durations("clock_segment", "prefix_jitter"),
    },
}

_REFERENCE = {
    "type": "object",
    "required": ["quantity"],
    "additionalProperties": False,
    "properties": {"flow": {"type": "string"}, "quantity": {"type": "string"}, "note": {"type": "string"},
                   **_durations("value", "tolerance", "resolution")},
}

_PATH_FLOW = {
    "type": "object",
    "required": ["id", "blocks"],
    "additionalProperties": False,
    "properties": {
        "id": {"type": "string"},
        "alpha": _CURVE,
        "alpha_packets": _CURVE,
        "l_min_bytes": {"type": "number", "exclusiveMinimum": 0},
        "l_max_bytes": {"type": "number", "exclusiveMinimum": 0},
        "blocks": {"type": "array", "minItems": 1, "items": _BLOCK},
        "tail": {"type": "array", "items": _BDS},
    },
}

_NET_FLOW = {
    "type": "object",
    "required": ["id", "path", "alpha"],
    "additionalProperties": False,
    "properties": {
        "id": {"type": "string"},
        "path": {"type": "array", "minItems": 2, "items": {"type": "string"}},
        "alpha": _CURVE,
        "alpha_packets": _CURVE,
        "l_min_bytes": {"type": "number", "exclusiveMinimum": 0},
        "l_max_bytes": {"type": "number", "exclusiveMinimum": 0},
    },
}

_COMMON = {
    "schema": {"const": SCHEMA_VERSION},
    "kind": {"enum": ["paths", "network"]},
    "name": {"type": "string"},
    "description": {"type": "string"},
    "clock": _CLOCK,
}

PATHS_SCHEMA = {
    "type": "object",
    "required": ["schema", "kind", "flows"],
    "additionalProperties": False,
    "properties": {
        **_COMMON,
        "flows": {"type": "array", "minItems": 1, "items": _PATH_FLOW},
        "simulation": _SIMULATION,
        "reference": {"type": "array", "items": _REFERENCE},
    },
}

NETWORK_SCHEMA = {
    "type": "object",
    "required": ["schema", "kind", "nodes", "flows", "service"],
    "additionalProperties": False,
    "properties": {
        **_COMMON,
        "service": _CURVE,
        "nodes": {"type": "array", "minItems": 1, "items": {
            "type": "object", "required": ["id", "kind"], "additionalProperties": False,
            "properties": {"id": {"type": "string"}, "kind": {"enum": ["switch", "host"]}}}},
        "links": {"type": "array", "items": {
            "type": "object", "required": ["from", "to"], "additionalProperties": False,
            "properties": {"from": {"type": "string"}, "to": {"type": "string"}, "service": _CURVE,
                           **_durations("propagation")}}},
        "propagation": {"type": "object", "additionalProperties": False, "properties": _durations("delay")},
        "fabric": {"type": "object", "additionalProperties": False,
                   "properties": _durations("delta", "delta_min", "epsilon")},
        "queue": {"type": "object", "additionalProperties": False, "properties": _durations("epsilon")},
        "flows": {"type": "array", "minItems": 1, "items": _NET_FLOW},
        "dampers": {"type": "object", "additionalProperties": False,
                    "properties": {k: _DAMPER for k in ("rcsp", "rgcq_te", "fopleq", "hol")}},
    },
}

ENVELOPE_SCHEMA = {
    "type": "object",
    "required": ["schema", "kind"],
    "properties": {"schema": {"const": SCHEMA_VERSION}, "kind": {"enum": ["paths", "network"]}},
}


# ---------------------------------------------------------------------------
# Diagnostics
# ---------------------------------------------------------------------------


def _locate(text: str, path: list) -> tuple[int, int]:
    """Best-effort line/column of the JSON value at ``path``.

    Keys are searched for in order; list indices advance past that many
    sibling objects at the current nesting level.
    """
    pos = 0
    for part in path:
        if isinstance(part, str):
            idx = text.find(f'"{part}"', pos)
            if idx < 0:
                break
            pos = idx
        else:
            start = text.find("[", pos)
            if start < 0:
                break
            pos = _nth_item(text, start, int(part))
    line = text.count("\n", 0, pos) + 1
    col = pos - (text.rfind("\n", 0, pos) + 1) + 1
    return line, col


def _nth_item(text: str, start: int, n: int) -> int:
    depth, in_str, esc, item = 0, False, False, 0
    i = start + 1
    while i < len(text):
        c = text[i]
        if in_str:
            esc = c == "\\" and not esc
            if c == '"' and not esc:
                in_str = False
        elif c == '"':
            in_str = True
        elif c in "[{":
            if depth == 0 and item == n:
                return i
            depth += 1
        elif c in "]}":
            if depth == 0:
                return i
            depth -= 1
        elif c == "," and depth == 0:
            item += 1
        elif depth == 0 and item == n and not c.isspace():
            return i
        i += 1
    return start


@dataclass
class ConfigDiagnostic(ConfigError):
    """A config problem with its position in the source text."""

    message: str
    source: str = "<config>"
    line: int | None = None
    column: int | None = None

    def __str__(self) -> str:
        where = self.source
        if self.line is not None:
            where += f":{self.line}:{self.column}"
        return f"{where}: {self.message}"


def _path_str(path) -> str:
    out = ""
    for p in path:
        out += f"[{p}]" if isinstance(p, int) else f".{p}"
    return out.lstrip(".") or "<root>"


def parse_text(text: str, source: str = "<config>") -> dict:
    """Parse and schema-check a config document."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigDiagnostic(f"invalid JSON: {exc.msg}", source, exc.lineno, exc.colno) from None
    _validate(doc, ENVELOPE_SCHEMA, text, source)
    _validate(doc, PATHS_SCHEMA if doc["kind"] == "paths" else NETWORK_SCHEMA, text, source)
    _check_duration_spellings(doc, [], text, source)
    return doc


def _validate(doc: Any, schema: dict, text: str, source: str) -> None:
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(doc), key=lambda e: (len(e.absolute_path), list(map(str, e.absolute_path))))
    if not errors:
        return
    err = max(errors, key=lambda e: len(e.absolute_path))
    best = jsonschema.exceptions.best_match([err]) or err
    path = list(best.absolute_path)
    line, col = _locate(text, path)
    raise ConfigDiagnostic(f"{_path_str(path)}: {best.message}", source, line, col)


def _check_duration_spellings(node: Any, path: list, text: str, source: str) -> None:
    if isinstance(node, dict):
        seen: dict[str, str] = {}
        for key in node:
            for unit in UNITS:
                if key.endswith(f"_{unit}"):
                    base = key[: -len(unit) - 1]
                    if base in seen:
                        line, col = _locate(text, path + [key])
                        raise ConfigDiagnostic(f"{_path_str(path + [key])}: duration '{base}' given twice "
                                               f"({seen[base]} and {key})", source, line, col)
                    seen[base] = key
        for key, val in node.items():
            _check_duration_spellings(val, path + [key], text, source)
    elif isinstance(node, list):
        for i, val in enumerate(node):
            _check_duration_spellings(val, path + [i], text, source)


def load_text(path: str | Path) -> tuple[str, str]:
    p = Path(path)
    if not p.exists():
        bundled = bundled_config_path(str(path))
        if bundled is None:
            raise ConfigDiagnostic(f"no such config file or bundled config: {path}", str(path))
        p = bundled
    return p.read_text(encoding="utf-8"), str(p)


def bundled_config_path(name: str) -> Path | None:
    stem = name[:-5] if name.endswith(".json") else name
    ref = resources.files("damperkit") / "configs" / f"{stem}.json"
    return Path(str(ref)) if ref.is_file() else None


def load(path: str | Path) -> dict:
    text, source = load_text(path)
    return parse_text(text, source)


# ---------------------------------------------------------------------------
# Conversion
# ---------------------------------------------------------------------------


def duration(obj: dict, name: str, default: float | None = None, *, required: bool = False) -> float | None:
    """Read ``name_<unit>`` from ``obj`` in seconds; ``None`` values mean infinity."""
    for unit, scale in UNITS.items():
        key = f"{name}_{unit}"
        if key in obj:
            val = obj[key]
            return math.inf if val is None or val == "inf" else val * scale
    if required:
        raise ConfigError(f"missing duration '{name}' (give it as {name}_ns, {name}_us, {name}_ms or {name}_s)")
    return default


def clock_from(obj: dict | None, fallback: ClockModel | None = None) -> ClockModel:
    if obj is None:
        return fallback if fallback is not None else preset("free_running")
    if "preset" in obj:
        base = ClockModel() if obj["preset"] == "perfect" else preset(obj["preset"])
    else:
        base = fallback if fallback is not None else ClockModel()
    rho = 1 + obj["rho_minus_one"] if "rho_minus_one" in obj else obj.get("rho", base.rho)
    eta = duration(obj, "eta", base.eta)
    omega = duration(obj, "omega", base.omega)
    try:
        return ClockModel(rho, eta, omega)
    except DamperkitError as exc:
        raise ConfigError(str(exc)) from None


def curve_from(obj: dict) -> Curve:
    kind = obj["type"]
    if kind == "leaky_bucket":
        return LeakyBucket(obj["rate_bytes_per_s"], obj["burst_bytes"])
    if kind == "leaky_bucket_packets":
        return LeakyBucket(obj["rate_packets_per_s"], obj["burst_packets"], unit="packets")
    if kind == "staircase":
        return PacketStaircase(obj["burst_packets"], duration(obj, "period", required=True),
                               obj["packets_per_period"], obj.get("packet_bytes"))
    return RateLatency(obj["rate_bytes_per_s"], duration(obj, "latency", required=True))


def packet_curve(alpha: Curve | None, explicit: dict | None, l_min: float | None) -> Curve | None:
    """Per-packet arrival curve of a flow, derived from its byte curve when possible."""
    if explicit is not None:
        return curve_from(explicit)
    if alpha is None:
        return None
    if alpha.unit == "packets":
        return alpha
    if isinstance(alpha, PacketStaircase):
        return PacketStaircase(alpha.burst_packets, alpha.period, alpha.packets_per_period)
    if isinstance(alpha, LeakyBucket) and l_min:
        return LeakyBucket(alpha.rate / l_min, alpha.burst / l_min, unit="packets")
    return None


def element_from(obj: dict) -> JcsSpec | BdsSpec:
    try:
        if obj["type"] == "jcs":
            return JcsSpec(duration(obj, "delta", required=True), duration(obj, "epsilon", 0.0),
                           obj.get("fifo", True), obj.get("clock_id"), duration(obj, "delta_min", 0.0),
                           obj.get("name"))
        delay = duration(obj, "delay")
        lo = duration(obj, "pi_lower", delay)
        hi = duration(obj, "pi_upper", delay)
        if lo is None or hi is None:
            raise ConfigError("a BDS needs delay_* or both pi_lower_* and pi_upper_*")
        nu = duration(obj, "nu")
        return BdsSpec(lo, hi, nu, obj.get("fifo", True), obj.get("name"))
    except DamperkitError as exc:
        raise ConfigError(f"element {obj.get('name', obj['type'])}: {exc}") from None


def damper_from(obj: dict) -> DamperSpec:
    """A damper from its preset and either its tolerances or, for rounding
    presets, its slot granularity and header-error bound."""
    try:
        granularity = duration(obj, "granularity")
        if granularity is not None:
            return _from_granularity(obj, granularity)
        if duration(obj, "epsilon") is not None:
            raise ConfigError("epsilon_* goes with granularity_*; give delta_l_*/delta_u_* otherwise")
        return from_tolerances(obj["preset"], duration(obj, "delta_l", 0.0), duration(obj, "delta_u", 0.0),
                               HeaderMode(obj.get("header_mode", "default")),
                               duration(obj, "phi_min", 0.0), duration(obj, "phi_max", 0.0))
    except DamperkitError as exc:
        raise ConfigError(f"damper: {exc}") from None


def _from_granularity(obj: dict, granularity: float) -> DamperSpec:
    from . import dampers

    makers = {"rcsp": dampers.rcsp, "rgcq": dampers.rgcq, "fopleq": dampers.fopleq, "sced_plus": dampers.sced_plus}
    name = obj["preset"]
    if name not in makers:
        raise ConfigError(f"preset {name!r} has no slot granularity")
    for other in ("delta_l", "delta_u", "phi_min", "phi_max"):
        if duration(obj, other) is not None:
            raise ConfigError(f"give either granularity_* or {other}_*, not both")
    return makers[name](granularity, duration(obj, "epsilon", 0.0),
                        HeaderMode(obj.get("header_mode", "default")))


def block_from(obj: dict, clock: ClockModel) -> list[Block]:
    blk = Block([element_from(e) for e in obj["elements"]], damper_from(obj["damper"]),
                clock_from(obj.get("clock"), clock), obj.get("distinct_clock_count"), obj.get("name"))
    return [blk] * obj.get("repeat", 1)


@dataclass
class PathFlow:
    id: str
    blocks: list[Block]
    tail: list[BdsSpec] = field(default_factory=list)
    alpha: Curve | None = None
    alpha_packets: Curve | None = None
    l_min: float | None = None
    l_max: float | None = None


@dataclass
class PathsConfig:
    name: str
    clock: ClockModel
    flows: list[PathFlow]
    simulation: dict
    reference: list[dict]
    raw: dict

    def flow(self, flow_id: str | None = None) -> PathFlow:
        if flow_id is None:
            return self.flows[0]
        for f in self.flows:
            if f.id == flow_id:
                return f
        raise ConfigError(f"no flow named {flow_id!r}")


def paths_config(doc: dict) -> PathsConfig:
    if doc["kind"] != "paths":
        raise ConfigError("expected a 'paths' config")
    clock = clock_from(doc.get("clock"))
    flows = []
    for f in doc["flows"]:
        blocks = [b for obj in f["blocks"] for b in block_from(obj, clock)]
        alpha = curve_from(f["alpha"]) if "alpha" in f else None
        flows.append(PathFlow(f["id"], blocks, [element_from(t) for t in f.get("tail", [])], alpha,
                              packet_curve(alpha, f.get("alpha_packets"), f.get("l_min_bytes")),
                              f.get("l_min_bytes"), f.get("l_max_bytes")))
    ids = [f.id for f in flows]
    if len(set(ids)) != len(ids):
        raise ConfigError("flow ids must be unique")
    return PathsConfig(doc.get("name", "paths"), clock, flows, doc.get("simulation", {}),
                       doc.get("reference", []), doc)

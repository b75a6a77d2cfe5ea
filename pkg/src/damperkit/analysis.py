"""Per-flow bounds for ``paths`` configs and comparison with reference values."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .bounds import BoundsResult, block_bounds, e2e_sum, theorem2_te_bounds
from .curves import shift_left
from .config import PathFlow, PathsConfig, duration
from .dampers import HeaderMode, Variant
from .errors import ConfigError


@dataclass
class FlowAnalysis:
    flow_id: str
    blocks: list[BoundsResult]
    e2e: BoundsResult
    te: BoundsResult | None

    def quantity(self, name: str) -> float:
        """Look up ``block[i].field``, ``e2e.field`` or ``te.field`` (in seconds)."""
        head, _, fld = name.partition(".")
        if head == "e2e":
            res = self.e2e
        elif head == "te":
            if self.te is None:
                raise ConfigError(f"{self.flow_id}: TE bounds do not apply to this path")
            res = self.te
        elif head.startswith("block[") and head.endswith("]"):
            try:
                res = self.blocks[int(head[6:-1])]
            except (ValueError, IndexError):
                raise ConfigError(f"{self.flow_id}: no {head}") from None
        else:
            raise ConfigError(f"unknown quantity {name!r}")
        values = res.as_dict()
        if fld not in values or fld == "label":
            raise ConfigError(f"unknown field {fld!r} in quantity {name!r}")
        return values[fld]


def te_applicable(flow: PathFlow) -> bool:
    return all(b.damper.variant in (Variant.IDEAL, Variant.TOLERANCE) for b in flow.blocks)


def analyze_flow(flow: PathFlow) -> FlowAnalysis:
    """Per-block bounds, their sum and, when every damper has tolerances,
    the bounds with TE time-stamping at every damper."""
    results = []
    jitter = 0.0
    for i, blk in enumerate(flow.blocks):
        alpha = None
        if blk.damper.variant is Variant.HEAD_OF_LINE:
            if flow.alpha_packets is None:
                raise ConfigError(f"flow {flow.id}: head-of-line dampers need alpha_packets or l_min_bytes")
            alpha = shift_left(flow.alpha_packets, jitter)
        res = replace(block_bounds(blk, alpha), label=blk.name or f"B{i + 1}")
        results.append(res)
        jitter += res.jitter
    e2e = e2e_sum(results + list(flow.tail), "e2e")
    te = None
    if te_applicable(flow):
        te_blocks = [replace(b, damper=replace(b.damper, header_mode=HeaderMode.TE_STAMPING)) for b in flow.blocks]
        te = theorem2_te_bounds(te_blocks, tail=flow.tail, label="te")
    return FlowAnalysis(flow.id, results, e2e, te)


@dataclass
class ReferenceCheck:
    flow_id: str
    quantity: str
    computed: float
    reference: float
    tolerance: float
    resolution: float
    note: str = ""

    @property
    def allowed(self) -> float:
        """Tolerance, widened to half the printed resolution of the reference."""
        return max(self.tolerance, self.resolution / 2)

    @property
    def error(self) -> float:
        return self.computed - self.reference

    @property
    def passed(self) -> bool:
        return abs(self.error) <= self.allowed * (1 + 1e-9)


def check_references(cfg: PathsConfig) -> list[ReferenceCheck]:
    cache: dict[str, FlowAnalysis] = {}
    out = []
    for ref in cfg.reference:
        flow = cfg.flow(ref.get("flow"))
        if flow.id not in cache:
            cache[flow.id] = analyze_flow(flow)
        value = duration(ref, "value")
        if value is None:
            raise ConfigError(f"reference {ref['quantity']}: missing value")
        out.append(ReferenceCheck(flow.id, ref["quantity"], cache[flow.id].quantity(ref["quantity"]), value,
                                  duration(ref, "tolerance", 0.0), duration(ref, "resolution", 0.0),
                                  ref.get("note", "")))
    return out


def format_duration(seconds: float, precision_ns: bool = False) -> str:
    """``µs`` with three decimals, or integer ``ns``."""
    if math.isinf(seconds) or math.isnan(seconds):
        return str(seconds)
    if precision_ns:
        return f"{round(seconds * 1e9)}"
    return f"{seconds * 1e6:.3f}"

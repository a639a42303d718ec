"""Domain types for space-time market instances and their validation."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Hashable, Sequence

NodeId = Hashable


class NetworkModel(str, Enum):
    DC = "dc"
    TRANSPORT = "transport"


@dataclass(frozen=True, order=True)
class SpaceTimeIndex:
    """A (node, time) pair; time is 1-based."""

    node: NodeId
    time: int

    def __str__(self) -> str:
        return f"({self.node},{self.time})"


@dataclass(frozen=True)
class Supplier:
    id: str
    node: NodeId
    price: tuple[float, ...]
    capacity: tuple[float, ...]
    ramp_limit: float | None = None


@dataclass(frozen=True)
class Demand:
    id: str
    node: NodeId
    price: tuple[float, ...]
    capacity: tuple[float, ...]


@dataclass(frozen=True)
class TransmissionLine:
    id: str
    snd: NodeId
    rec: NodeId
    susceptance: float
    flow_cap: float
    angle_cap: float = math.inf
    price: float = 0.0

    @property
    def effective_angle_cap(self) -> float:
        return min(self.flow_cap / self.susceptance, self.angle_cap)


@dataclass(frozen=True)
class VirtualLink:
    id: str
    snd: SpaceTimeIndex
    rec: SpaceTimeIndex
    price: float
    capacity: float
    owner: str


@dataclass(frozen=True)
class Scenario:
    """A complete market instance.

    ``computing_cap`` maps a ``SpaceTimeIndex`` to its finite computing
    capacity; absent keys mean +inf. Per-time vectors on players have length
    ``T``.
    """

    T: int
    nodes: tuple[NodeId, ...]
    lines: tuple[TransmissionLine, ...] = ()
    suppliers: tuple[Supplier, ...] = ()
    demands: tuple[Demand, ...] = ()
    virtual_links: tuple[VirtualLink, ...] = ()
    computing_cap: dict[SpaceTimeIndex, float] = field(default_factory=dict)
    network_model: NetworkModel = NetworkModel.DC
    reference_node: NodeId | None = None
    name: str = ""

    def __post_init__(self):
        # coerce list inputs so scenarios hash/compare predictably
        for attr in ("nodes", "lines", "suppliers", "demands", "virtual_links"):
            value = getattr(self, attr)
            if not isinstance(value, tuple):
                object.__setattr__(self, attr, tuple(value))
        if not isinstance(self.network_model, NetworkModel):
            object.__setattr__(self, "network_model", NetworkModel(self.network_model))

    @property
    def times(self) -> range:
        return range(1, self.T + 1)

    @property
    def has_ramping(self) -> bool:
        return any(s.ramp_limit is not None for s in self.suppliers)

    def cap_at(self, node: NodeId, time: int) -> float:
        return self.computing_cap.get(SpaceTimeIndex(node, time), math.inf)

    def link(self, link_id: str) -> VirtualLink:
        for v in self.virtual_links:
            if v.id == link_id:
                return v
        raise KeyError(f"unknown virtual link {link_id!r}")

    def with_link_capacity(self, link_id: str, capacity: float) -> "Scenario":
        self.link(link_id)
        links = tuple(replace(v, capacity=capacity) if v.id == link_id else v
                      for v in self.virtual_links)
        return replace(self, virtual_links=links)

    def with_line_capacity(self, line_id: str, capacity: float) -> "Scenario":
        if not any(l.id == line_id for l in self.lines):
            raise KeyError(f"unknown line {line_id!r}")
        lines = tuple(replace(l, flow_cap=capacity) if l.id == line_id else l
                      for l in self.lines)
        return replace(self, lines=lines)


def _finite(values: Sequence[float]) -> bool:
    return all(math.isfinite(x) for x in values)


def validate(scenario: Scenario) -> list[str]:
    """Return a list of human-readable invariant violations (empty when valid)."""
    problems: list[str] = []
    T = scenario.T
    if not isinstance(T, int) or T < 1:
        problems.append(f"scenario: horizon T must be a positive integer, got {T!r}")
        return problems
    nodes = set(scenario.nodes)
    if len(nodes) != len(scenario.nodes):
        problems.append("scenario: duplicate node ids")

    def check_ids(kind, items):
        seen = set()
        for item in items:
            if item.id in seen:
                problems.append(f"{kind} {item.id}: duplicate id")
            seen.add(item.id)

    check_ids("supplier", scenario.suppliers)
    check_ids("demand", scenario.demands)
    check_ids("line", scenario.lines)
    check_ids("virtual link", scenario.virtual_links)

    for s in scenario.suppliers:
        tag = f"supplier {s.id}"
        if s.node not in nodes:
            problems.append(f"{tag}: unknown node {s.node!r}")
        if len(s.price) != T or len(s.capacity) != T:
            problems.append(f"{tag}: per-time vectors must have length {T}")
        if not _finite(s.price):
            problems.append(f"{tag}: price entries must be finite")
        if any(not (c >= 0) for c in s.capacity) or not _finite(s.capacity):
            problems.append(f"{tag}: capacity entries must be finite and >= 0")
        if s.ramp_limit is not None and not (s.ramp_limit >= 0):
            problems.append(f"{tag}: ramp limit must be >= 0")

    demands = {d.id: d for d in scenario.demands}
    for d in scenario.demands:
        tag = f"demand {d.id}"
        if d.node not in nodes:
            problems.append(f"{tag}: unknown node {d.node!r}")
        if len(d.price) != T or len(d.capacity) != T:
            problems.append(f"{tag}: per-time vectors must have length {T}")
        if not _finite(d.price):
            problems.append(f"{tag}: price entries must be finite")
        if any(not (c >= 0) for c in d.capacity) or not _finite(d.capacity):
            problems.append(f"{tag}: capacity entries must be finite and >= 0")

    for l in scenario.lines:
        tag = f"line {l.id}"
        if l.snd not in nodes or l.rec not in nodes:
            problems.append(f"{tag}: unknown endpoint")
        if l.snd == l.rec:
            problems.append(f"{tag}: sending and receiving node coincide")
        if not (l.flow_cap >= 0) or not math.isfinite(l.flow_cap):
            problems.append(f"{tag}: flow capacity must be finite and >= 0")
        if not (l.price >= 0):
            problems.append(f"{tag}: price must be >= 0")
        if scenario.network_model is NetworkModel.DC:
            if not (l.susceptance > 0):
                problems.append(f"{tag}: susceptance must be > 0")
            elif not (l.angle_cap > 0):
                problems.append(f"{tag}: angle cap must be > 0")
            elif not (l.effective_angle_cap > 0):
                problems.append(f"{tag}: effective angle cap must be > 0")

    for v in scenario.virtual_links:
        tag = f"virtual link {v.id}"
        for end in (v.snd, v.rec):
            if end.node not in nodes or not (1 <= end.time <= T):
                problems.append(f"{tag}: endpoint {end} does not resolve")
        if v.rec.time < v.snd.time:
            problems.append(f"{tag}: receiving time precedes sending time")
        if v.snd == v.rec:
            problems.append(f"{tag}: sending and receiving space-time nodes coincide")
        if not (v.price >= 0) or not math.isfinite(v.price):
            problems.append(f"{tag}: price must be finite and >= 0")
        if not (v.capacity >= 0) or not math.isfinite(v.capacity):
            problems.append(f"{tag}: capacity must be finite and >= 0")
        owner = demands.get(v.owner)
        if owner is None:
            problems.append(f"{tag}: unknown owner demand {v.owner!r}")
        elif owner.node != v.snd.node:
            problems.append(f"{tag}: sending node differs from owner's hub node {owner.node!r}")

    for key, cap in scenario.computing_cap.items():
        if key.node not in nodes or not (1 <= key.time <= T):
            problems.append(f"computing cap {key}: index does not resolve")
        if not (cap >= 0):
            problems.append(f"computing cap {key}: must be >= 0")

    if scenario.reference_node is not None and scenario.reference_node not in nodes:
        problems.append(f"scenario: reference node {scenario.reference_node!r} unknown")
    return problems


class ScenarioError(ValueError):
    """Raised when a scenario fails validation where a valid one is required."""

    def __init__(self, violations: list[str]):
        self.violations = violations
        super().__init__("; ".join(violations))


def require_valid(scenario: Scenario) -> None:
    violations = validate(scenario)
    if violations:
        raise ScenarioError(violations)

"""JSON scenario files.

Documents mirror :class:`~stclear.model.Scenario` field by field. Times are
1-based integers, an infinite computing capacity is simply left out, and an
absent ``angle_cap`` means no angle limit beyond the one implied by the flow
cap.
"""
from __future__ import annotations

import json
import math
from pathlib import Path

from .model import (Demand, NetworkModel, Scenario, SpaceTimeIndex, Supplier,
                    TransmissionLine, VirtualLink)


class SchemaError(ValueError):
    """A malformed scenario document; ``path`` locates the offending entity."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


def _require(obj, key, path):
    if not isinstance(obj, dict):
        raise SchemaError(path, "expected an object")
    if key not in obj:
        raise SchemaError(key if path == "$" else f"{path}.{key}", "missing")
    return obj[key]


def _number(value, path, *, allow_inf=False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(path, f"expected a number, got {value!r}")
    x = float(value)
    if math.isnan(x) or (math.isinf(x) and not allow_inf):
        raise SchemaError(path, f"expected a finite number, got {value!r}")
    return x


def _series(value, T, path) -> tuple[float, ...]:
    if not isinstance(value, list):
        raise SchemaError(path, "expected a list")
    if len(value) != T:
        raise SchemaError(path, f"expected {T} entries, got {len(value)}")
    return tuple(_number(x, f"{path}[{i}]") for i, x in enumerate(value))


def _node(value, path):
    if isinstance(value, bool) or not isinstance(value, (int, str)):
        raise SchemaError(path, f"node ids must be integers or strings, got {value!r}")
    return value


def _text(value, path) -> str:
    if not isinstance(value, str) or not value:
        raise SchemaError(path, "expected a nonempty string")
    return value


def _items(doc, key) -> list:
    value = doc.get(key, [])
    if not isinstance(value, list):
        raise SchemaError(key, "expected a list")
    return value


def _st(obj, path) -> SpaceTimeIndex:
    node = _node(_require(obj, "node", path), f"{path}.node")
    time = _require(obj, "time", path)
    if isinstance(time, bool) or not isinstance(time, int):
        raise SchemaError(f"{path}.time", "expected an integer")
    return SpaceTimeIndex(node, time)


def scenario_from_dict(doc) -> Scenario:
    if not isinstance(doc, dict) or not doc:
        raise SchemaError("$", "scenario document must be a nonempty object")
    T = _require(doc, "T", "$")
    if isinstance(T, bool) or not isinstance(T, int) or T < 1:
        raise SchemaError("T", "expected a positive integer")
    nodes_raw = _require(doc, "nodes", "$")
    if not isinstance(nodes_raw, list) or not nodes_raw:
        raise SchemaError("nodes", "expected a nonempty list")
    nodes = tuple(_node(n, f"nodes[{i}]") for i, n in enumerate(nodes_raw))

    lines = []
    for i, obj in enumerate(_items(doc, "lines")):
        p = f"lines[{i}]"
        lines.append(TransmissionLine(
            _text(_require(obj, "id", p), f"{p}.id"),
            _node(_require(obj, "snd", p), f"{p}.snd"),
            _node(_require(obj, "rec", p), f"{p}.rec"),
            susceptance=_number(obj.get("susceptance", 1.0), f"{p}.susceptance"),
            flow_cap=_number(_require(obj, "flow_cap", p), f"{p}.flow_cap"),
            angle_cap=_number(obj.get("angle_cap", math.inf), f"{p}.angle_cap", allow_inf=True),
            price=_number(obj.get("price", 0.0), f"{p}.price")))

    suppliers = []
    for i, obj in enumerate(_items(doc, "suppliers")):
        p = f"suppliers[{i}]"
        ramp = obj.get("ramp_limit") if isinstance(obj, dict) else None
        suppliers.append(Supplier(
            _text(_require(obj, "id", p), f"{p}.id"),
            _node(_require(obj, "node", p), f"{p}.node"),
            _series(_require(obj, "price", p), T, f"{p}.price"),
            _series(_require(obj, "capacity", p), T, f"{p}.capacity"),
            None if ramp is None else _number(ramp, f"{p}.ramp_limit")))

    demands = []
    for i, obj in enumerate(_items(doc, "demands")):
        p = f"demands[{i}]"
        demands.append(Demand(
            _text(_require(obj, "id", p), f"{p}.id"),
            _node(_require(obj, "node", p), f"{p}.node"),
            _series(_require(obj, "price", p), T, f"{p}.price"),
            _series(_require(obj, "capacity", p), T, f"{p}.capacity")))

    links = []
    for i, obj in enumerate(_items(doc, "virtual_links")):
        p = f"virtual_links[{i}]"
        links.append(VirtualLink(
            _text(_require(obj, "id", p), f"{p}.id"),
            _st(_require(obj, "snd", p), f"{p}.snd"),
            _st(_require(obj, "rec", p), f"{p}.rec"),
            price=_number(obj.get("price", 0.0), f"{p}.price"),
            capacity=_number(_require(obj, "capacity", p), f"{p}.capacity"),
            owner=_text(_require(obj, "owner", p), f"{p}.owner")))

    caps = {}
    for i, obj in enumerate(_items(doc, "computing_cap")):
        p = f"computing_cap[{i}]"
        key = _st(obj, p)
        if key in caps:
            raise SchemaError(p, f"duplicate entry for {key}")
        caps[key] = _number(_require(obj, "cap", p), f"{p}.cap")

    model = doc.get("network_model", "dc")
    try:
        model = NetworkModel(model)
    except ValueError:
        raise SchemaError("network_model", f"expected 'dc' or 'transport', got {model!r}") from None
    ref = doc.get("reference_node")
    return Scenario(T=T, nodes=nodes, lines=tuple(lines), suppliers=tuple(suppliers),
                    demands=tuple(demands), virtual_links=tuple(links), computing_cap=caps,
                    network_model=model,
                    reference_node=None if ref is None else _node(ref, "reference_node"),
                    name=str(doc.get("name", "")))


def _num(x: float):
    return int(x) if float(x).is_integer() and abs(x) < 2 ** 53 else float(x)


def scenario_to_dict(scenario: Scenario) -> dict:
    def st(ix):
        return {"node": ix.node, "time": ix.time}

    doc = {"name": scenario.name, "T": scenario.T, "nodes": list(scenario.nodes),
           "network_model": scenario.network_model.value}
    if scenario.reference_node is not None:
        doc["reference_node"] = scenario.reference_node
    doc["lines"] = []
    for l in scenario.lines:
        entry = {"id": l.id, "snd": l.snd, "rec": l.rec, "susceptance": _num(l.susceptance),
                 "flow_cap": _num(l.flow_cap), "price": _num(l.price)}
        if math.isfinite(l.angle_cap):
            entry["angle_cap"] = _num(l.angle_cap)
        doc["lines"].append(entry)
    doc["suppliers"] = []
    for s in scenario.suppliers:
        entry = {"id": s.id, "node": s.node, "price": [_num(x) for x in s.price],
                 "capacity": [_num(x) for x in s.capacity]}
        if s.ramp_limit is not None:
            entry["ramp_limit"] = _num(s.ramp_limit)
        doc["suppliers"].append(entry)
    doc["demands"] = [{"id": d.id, "node": d.node, "price": [_num(x) for x in d.price],
                       "capacity": [_num(x) for x in d.capacity]} for d in scenario.demands]
    doc["virtual_links"] = [{"id": v.id, "snd": st(v.snd), "rec": st(v.rec),
                             "price": _num(v.price), "capacity": _num(v.capacity),
                             "owner": v.owner} for v in scenario.virtual_links]
    doc["computing_cap"] = [{"node": k.node, "time": k.time, "cap": _num(c)}
                            for k, c in scenario.computing_cap.items() if math.isfinite(c)]
    return doc


def load_scenario(path) -> Scenario:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise SchemaError("$", f"cannot read {path}: {exc.strerror}") from exc
    if not text.strip():
        raise SchemaError("$", "scenario file is empty")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError("$", f"invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    return scenario_from_dict(doc)


def dump_scenario(scenario: Scenario, path=None) -> str:
    text = json.dumps(scenario_to_dict(scenario), indent=2) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text

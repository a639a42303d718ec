import json
import math
from dataclasses import replace

import pytest

from stclear import cases
from stclear.model import SpaceTimeIndex
from stclear.scenario_io import (SchemaError, dump_scenario, load_scenario, scenario_from_dict,
                                 scenario_to_dict)


@pytest.mark.parametrize("sc", [cases.builtin_temporal(9), cases.builtin_seven_bus(5),
                                cases.builtin_seven_bus(6)], ids=lambda s: s.name)
def test_round_trip(sc, tmp_path):
    path = tmp_path / "sc.json"
    dump_scenario(sc, path)
    assert load_scenario(path) == sc
    assert scenario_from_dict(json.loads(dump_scenario(sc))) == sc


def test_infinite_caps_are_omitted():
    sc = cases.builtin_seven_bus(1)
    open_lines = tuple(replace(line, angle_cap=math.inf) for line in sc.lines)
    sc = replace(sc, lines=open_lines,
                 computing_cap={**sc.computing_cap, SpaceTimeIndex(2, 1): math.inf})
    doc = scenario_to_dict(sc)
    assert all("angle_cap" not in line for line in doc["lines"])
    assert len(doc["computing_cap"]) == 4
    assert all(math.isfinite(e["cap"]) for e in doc["computing_cap"])
    assert "Infinity" not in dump_scenario(sc)
    assert math.isinf(scenario_from_dict(doc).lines[0].angle_cap)


def minimal():
    return {"T": 1, "nodes": [1],
            "suppliers": [{"id": "s", "node": 1, "price": [1], "capacity": [5]}],
            "demands": [{"id": "d", "node": 1, "price": [4], "capacity": [3]}]}


def test_minimal_document_defaults():
    sc = scenario_from_dict(minimal())
    assert sc.lines == () and sc.virtual_links == () and sc.computing_cap == {}
    assert sc.network_model.value == "dc"


@pytest.mark.parametrize("mutate,path", [
    (lambda d: d.pop("T"), "T"),
    (lambda d: d.update(T=0), "T"),
    (lambda d: d["suppliers"][0].update(price=["x"]), "suppliers[0].price"),
    (lambda d: d["demands"][0].update(capacity=[1, 2]), "demands[0].capacity"),
    (lambda d: d.update(network_model="ac"), "network_model"),
    (lambda d: d["suppliers"][0].pop("id"), "suppliers[0].id"),
])
def test_schema_errors_carry_paths(mutate, path):
    doc = minimal()
    mutate(doc)
    with pytest.raises(SchemaError) as err:
        scenario_from_dict(doc)
    assert err.value.path.startswith(path)


def test_empty_and_broken_files(tmp_path):
    empty = tmp_path / "empty.json"
    empty.write_text("")
    with pytest.raises(SchemaError, match="empty"):
        load_scenario(empty)
    broken = tmp_path / "broken.json"
    broken.write_text("{\"T\": 1,")
    with pytest.raises(SchemaError, match="invalid JSON"):
        load_scenario(broken)
    with pytest.raises(SchemaError):
        load_scenario(tmp_path / "missing.json")

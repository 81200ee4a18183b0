import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from neckspec.config import ConfigGraph, from_dict, parse_config, serialize_config
from neckspec.errors import ConfigError, ConfigParseError, ValidationError


def _doc(**over):
    doc = {
        "vertices": [{"id": "A", "side": 4}, {"id": "B", "side": 4}],
        "edges": [{"id": "e1", "endpoints": ["A", "B"]}],
        "s_grid": [1e-2, 1e-3],
    }
    doc.update(over)
    return doc


def test_dumbbell_fields():
    cfg = from_dict(_doc())
    assert cfg.n_components == 2
    assert cfg.masses() == {"A": 16.0, "B": 16.0}
    assert cfg.eig_count == 5
    assert cfg.degree("A") == 1


def test_duplicate_vertex_id():
    doc = _doc(vertices=[{"id": "a", "side": 4}, {"id": "a", "side": 4}],
               edges=[{"id": "e1", "endpoints": ["a", "a"]}])
    with pytest.raises(ConfigError, match="duplicate") as err:
        from_dict(doc)
    assert err.value.field == "vertices[1].id"


def test_single_vertex_no_edges():
    cfg = from_dict({"vertices": [{"id": "A", "side": 4}], "s_grid": []})
    assert cfg.n_components == 1 and cfg.edges == () and cfg.s_grid == ()


@pytest.mark.parametrize("over, field", [
    ({"s_grid": [1e-3, 1e-2]}, "s_grid[1]"),
    ({"s_grid": [1.0]}, "s_grid[0]"),
    ({"s_grid": [0.0]}, "s_grid[0]"),
    ({"vertices": [{"id": "A", "side": 3}, {"id": "B", "side": 4}]}, "vertices[0].side"),
    ({"vertices": [{"id": "A", "side": -4}, {"id": "B", "side": 4}]}, "vertices[0].side"),
    ({"edges": [{"id": "e1", "endpoints": ["A", "Z"]}]}, "edges[0].endpoints"),
    ({"edges": []}, "edges"),
    ({"eig_count": 3}, "eig_count"),
    ({"seed": -1}, "seed"),
    ({"tolerances": {"eig_residual": 2.0}}, "tolerances.eig_residual"),
])
def test_errors_name_the_field(over, field):
    with pytest.raises(ConfigError) as err:
        from_dict(_doc(**over))
    assert err.value.field == field
    assert field in str(err.value)


def test_disconnected_lists_components():
    doc = _doc(vertices=[{"id": v, "side": 4} for v in "ABCD"],
               edges=[{"id": "e1", "endpoints": ["A", "B"]}, {"id": "e2", "endpoints": ["C", "D"]}])
    with pytest.raises(ConfigError, match=r"\{A, B\}; \{C, D\}"):
        from_dict(doc)


def test_unknown_key_strict_and_lenient():
    with pytest.raises(ConfigError, match="colour"):
        from_dict(_doc(colour="red"))
    assert from_dict(_doc(colour="red"), lenient=True).n_components == 2


def test_malformed_json_offset():
    text = '{"vertices": [}'
    with pytest.raises(ConfigParseError) as err:
        parse_config(text)
    assert err.value.offset == 14
    assert isinstance(err.value, ValidationError)


def test_offset_counts_bytes():
    text = '{"name": "éé", x}'
    with pytest.raises(ConfigParseError) as err:
        parse_config(text)
    assert err.value.offset == text.index("x") + 2


sides = st.floats(4.0, 50.0, allow_nan=False).map(lambda x: round(x, 6))


@st.composite
def configs(draw):
    n = draw(st.integers(1, 5))
    ids = [f"v{i}" for i in range(n)]
    # random spanning tree plus a few extra edges
    edges = [(ids[draw(st.integers(0, i - 1))], ids[i]) for i in range(1, n)]
    edges += draw(st.lists(st.tuples(st.sampled_from(ids), st.sampled_from(ids)), max_size=2))
    deg = {v: 0 for v in ids}
    for a, b in edges:
        deg[a] += 1
        deg[b] += 1
    vertices = [(v, max(draw(sides), 4.0 * deg[v])) for v in ids]
    grid = sorted(draw(st.sets(st.floats(1e-9, 0.99), max_size=5)), reverse=True)
    return ConfigGraph.build(vertices, [(f"e{i}", e) for i, e in enumerate(edges)], grid,
                             mesh_h=draw(st.sampled_from([0.1, 0.2, 0.25])),
                             seed=draw(st.integers(0, 2**31)), name=draw(st.text(max_size=8)))


@settings(max_examples=60, deadline=None)
@given(configs())
def test_parse_serialize_roundtrip(cfg):
    assert parse_config(serialize_config(cfg)) == cfg
    assert json.loads(serialize_config(cfg))["eig_count"] == cfg.eig_count

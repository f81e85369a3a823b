import json

import numpy as np
import pytest

from mpray.config import DEFAULTS, SCHEMA, ConfigError, from_dict, load_config
from mpray.fieldexpr import ExprSyntaxError


def test_catalog_reference_gets_defaults():
    cfg = from_dict({"system": "SYS-E"})
    assert cfg.seed == 42
    assert cfg["integrator"]["rtol"] == 1e-10
    assert cfg["grids"]["fan"] == [8, 8]
    assert cfg.system.name == "SYS-E"


def test_catalog_with_params():
    cfg = from_dict({"system": {"catalog": "SYS-B", "params": {"B": 0.3}}})
    assert cfg.system.params == {"B": 0.3}
    with pytest.raises(ConfigError) as info:
        from_dict({"system": {"catalog": "SYS-B", "params": {"eps": 0.3}}})
    assert info.value.pointer == "/system/params"


def test_inline_conformal_metric_parses():
    cfg = from_dict({"system": {"dim": 2, "conformal": "exp(0.1*(x1^2+x2^2))", "alpha": ["-0.1*x2", "0.1*x1"]}})
    g = cfg.system.metric_at([0.5, 0.0])
    np.testing.assert_allclose(g, np.exp(0.025) * np.eye(2))


def test_bad_expression_reports_offset():
    with pytest.raises(ExprSyntaxError) as info:
        from_dict({"system": {"dim": 2, "potential": "0.1*x1^^2"}})
    assert info.value.offset == 7


@pytest.mark.parametrize("doc,pointer", [
    ({"system": "SYS-E", "extra": 1}, "/"),
    ({"system": "SYS-E", "integrator": {"rtol": 0.5}}, "/integrator/rtol"),
    ({"system": "SYS-E", "integrator": {"atol": 0}}, "/integrator/atol"),
    ({"system": "SYS-E", "grids": {"fan": [8, 4]}}, "/grids/fan/1"),
    ({"system": "SYS-E", "grids": {"phasee": [8, 8, 8]}}, "/grids"),
    ({"system": "SYS-E", "seed": -1}, "/seed"),
    ({"system": "SYS-Z"}, "/system"),
    ({"system": {"dim": 2, "metric": [[1, 0], [0, 1]], "conformal": "2"}}, "/system"),
    ({"system": {"dim": 5}}, "/system/dim"),
    ({"system": "SYS-E", "transform": {"weight": "heavy"}}, "/transform/weight"),
    ({}, "/"),
])
def test_schema_violations_report_pointer(doc, pointer):
    with pytest.raises(ConfigError) as info:
        from_dict(doc)
    assert info.value.pointer in (pointer, "") if pointer == "/" else info.value.pointer == pointer
    assert str(info.value).startswith(pointer)


def test_load_config_file(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"system": "SYS-U", "seed": 7}))
    cfg = load_config(p)
    assert cfg.seed == 7 and cfg.system.name == "SYS-U"
    p.write_text("{not json")
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_config(p)
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.json")


def test_defaults_satisfy_schema():
    import jsonschema

    doc = {"system": "SYS-E", **DEFAULTS}
    jsonschema.validate(doc, SCHEMA)
    assert from_dict(doc).echo()["seed"] == 42

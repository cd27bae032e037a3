import io
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from flexsky.cli import run_command
from flexsky.errors import DataError, QuerySpecError
from flexsky.io import (
    default_schema,
    dumps_document,
    gen_dataset,
    load_relation,
    parse_query,
    parse_query_text,
    parse_schema_flag,
    write_relation,
)
from flexsky.scoring import AttributeSchema

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"
HOSPITAL_CSV = SCENARIOS / "hospitals.csv"
HOSPITAL_QUERY = SCENARIOS / "hospitals.yaml"

QUERY = """
schema:
  - {name: rate, kind: rate}
  - {name: dist, kind: normalized}
transforms:
  - {attribute: rate, kind: poisson_survival, k: 8}
  - {attribute: dist, kind: identity}
constraints: ["w1 + w2 = 1", "w1 <= w2"]
"""


def run(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = run_command([str(a) for a in argv], out, err)
    return code, out.getvalue(), err.getvalue()


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return path


class TestLoadRelation:
    def test_direct_parse(self, tmp_path):
        rel = load_relation(write(tmp_path, "r.csv", "id,rate,dist\nH1,10,0.4\n"))
        assert rel.ids == ("H1",)
        assert rel.values.tolist() == [[10.0, 0.4]]
        assert [k.value for k in rel.schema.kinds] == ["rate", "normalized"]

    def test_domain_violation_is_named(self, tmp_path):
        schema = AttributeSchema.of([("rate", "rate"), ("dist", "normalized")])
        path = write(tmp_path, "r.csv", "id,rate,dist\nH1,10,0.4\nH7,3,1.2\n")
        with pytest.raises(DataError, match=r"r.csv:3.*H7.*dist.*1\.2"):
            load_relation(path, schema)

    def test_malformed_row_has_line_number(self, tmp_path):
        with pytest.raises(DataError, match=r":3: expected 3 fields"):
            load_relation(write(tmp_path, "r.csv", "id,a,b\nx,0.1,0.2\ny,0.3\n"))
        with pytest.raises(DataError, match=r":2: tuple x, attribute a"):
            load_relation(write(tmp_path, "r.csv", "id,a\nx,abc\n"))

    def test_header_problems(self, tmp_path):
        with pytest.raises(DataError, match="no 'id'"):
            load_relation(write(tmp_path, "r.csv", "a,b\n0.1,0.2\n"))
        with pytest.raises(DataError, match="empty"):
            load_relation(write(tmp_path, "r.csv", ""))
        with pytest.raises(DataError, match="duplicate tuple ids"):
            load_relation(write(tmp_path, "r.csv", "id,a\nx,0.1\nx,0.2\n"))
        with pytest.raises(DataError, match="cannot read"):
            load_relation(tmp_path / "missing.csv")
        schema = AttributeSchema.of([("a", "normalized")])
        with pytest.raises(DataError, match="unexpected b"):
            load_relation(write(tmp_path, "r.csv", "id,a,b\nx,0.1,0.2\n"), schema)

    def test_hospital_file(self):
        spec = parse_query(HOSPITAL_QUERY)
        rel = load_relation(HOSPITAL_CSV, spec.schema)
        assert len(rel) == 5 and rel.schema.arity == 2
        assert rel.schema.names == ("AverageFrequency", "Distance")


class TestGen:
    def test_round_trip(self, tmp_path):
        schema = default_schema(4)
        rel = gen_dataset(300, schema, seed=5)
        path = tmp_path / "g.csv"
        write_relation(path, rel)
        back = load_relation(path, schema)
        assert back.ids == rel.ids
        assert np.array_equal(back.values, rel.values)

    def test_same_seed_same_file(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        assert run("gen", "--n", 50, "--seed", 9, "--out", a)[0] == 0
        assert run("gen", "--n", 50, "--seed", 9, "--out", b)[0] == 0
        assert a.read_bytes() == b.read_bytes()
        c = tmp_path / "c.csv"
        run("gen", "--n", 50, "--seed", 10, "--out", c)
        assert a.read_bytes() != c.read_bytes()

    def test_rejects_empty(self, tmp_path):
        with pytest.raises(DataError):
            gen_dataset(0, default_schema(2), seed=1)
        code, out, err = run("gen", "--n", 0, "--seed", 1, "--out", tmp_path / "x.csv")
        assert code == 2 and out == "" and "at least 1" in err
        assert not (tmp_path / "x.csv").exists()

    def test_ranges(self):
        rel = gen_dataset(2000, default_schema(3), seed=0, rate_range=(2.0, 3.0))
        assert rel.values[:, 0].min() >= 2.0 and rel.values[:, 0].max() <= 3.0
        assert np.all((rel.values[:, 1:] >= 0) & (rel.values[:, 1:] <= 1))

    def test_schema_flag(self):
        schema = parse_schema_flag("load:rate,dist:normalized")
        assert schema.names == ("load", "dist")
        with pytest.raises(DataError):
            parse_schema_flag("load:weird")


class TestQuery:
    def test_valid_spec(self):
        spec = parse_query_text(QUERY)
        assert [t.kind.value for t in spec.transforms] == ["poisson_survival", "identity"]
        assert len(spec.constraints) == 1  # the simplex row is implied
        assert spec.family.polytope.vertices.tolist() == [[0.0, 1.0], [0.5, 0.5]]
        assert spec.outputs == ("sky", "nd", "po")

    def test_empty_constraints_mean_simplex(self):
        spec = parse_query_text(QUERY.replace('["w1 + w2 = 1", "w1 <= w2"]', "[]"))
        assert spec.constraints == ()
        assert spec.family.polytope.vertices.tolist() == [[0.0, 1.0], [1.0, 0.0]]

    def test_structured_constraint(self):
        text = QUERY.replace('["w1 + w2 = 1", "w1 <= w2"]', "[{coeffs: [1, -1], sense: '<=', bound: 0}]")
        assert parse_query_text(text).family.polytope.vertices.tolist() == [[0.0, 1.0], [0.5, 0.5]]

    def test_text_constraints(self):
        spec = parse_query_text(QUERY.replace('"w1 <= w2"', '"2*w1 - 0.5 >= w2 - 1"'))
        (c,) = spec.constraints
        assert c.coeffs == (2.0, -1.0) and c.sense.value == ">=" and c.bound == -0.5

    @pytest.mark.parametrize(
        "old,new,field",
        [
            ("kind: identity", "kind: poisson_survival, k: 2", "transforms[1].kind"),
            ("kind: poisson_survival, k: 8", "kind: poisson_survival", "transforms[0]"),
            ("kind: identity", "kind: squash", "transforms[1].kind"),
            ("w1 <= w2", "w1 <= w9", "constraints[1]"),
            ("w1 <= w2", "w1 <=", "constraints[1]"),
            ("constraints:", "colour: red\nconstraints:", "query"),
            ("{name: rate, kind: rate}", "{name: rate, kind: count}", "schema[0].kind"),
        ],
    )
    def test_errors_are_addressed(self, old, new, field):
        text = QUERY.replace(old, new, 1)
        assert text != QUERY
        with pytest.raises(QuerySpecError) as info:
            parse_query_text(text)
        assert info.value.field == f"<query>: {field}" or field in str(info.value)

    def test_empty_polytope(self):
        with pytest.raises(QuerySpecError, match="no weight vector"):
            parse_query_text(QUERY.replace('"w1 <= w2"', '"w1 >= 0.7", "w2 >= 0.7"'))

    def test_yaml_syntax_error_position(self):
        with pytest.raises(QuerySpecError, match=r"<query>:\d+:\d+"):
            parse_query_text("schema: [unclosed\n")

    def test_json_is_accepted(self):
        doc = {
            "schema": [{"name": "a", "kind": "normalized"}, {"name": "b", "kind": "normalized"}],
            "transforms": [{"attribute": "a", "kind": "identity"}, {"attribute": "b", "kind": "power", "p": 2}],
            "outputs": ["nd"],
            "engine": {"clamp": True, "tolerance": 1e-8},
        }
        spec = parse_query_text(json.dumps(doc))
        assert spec.outputs == ("nd",)
        cfg = spec.engine_config()
        assert cfg.use_clamp and cfg.tolerance == 1e-8

    def test_canonical_document(self):
        assert dumps_document({"b": 1, "a": [1, 2]}) == '{\n  "a": [\n    1,\n    2\n  ],\n  "b": 1\n}\n'
        with pytest.raises(ValueError):
            dumps_document({"x": float("nan")})


class TestCli:
    def test_cdf(self):
        assert run("cdf", "--lambda", 1, "--k", 0, "--mode", "cdf") == (0, "0.3678794412\n", "")
        assert run("cdf", "--lambda", 10, "--p", 0.5, "--mode", "quantile")[1] == "10\n"
        code, out, _ = run("cdf", "--lambda", 25, "--k", 40, "--mode", "survival", "--clamp")
        assert code == 0 and float(out) == 0.0

    def test_cdf_usage_and_domain(self):
        assert run("cdf", "--lambda", 1, "--mode", "cdf")[0] == 1
        assert run("cdf", "--lambda", 1, "--mode", "quantile")[0] == 1
        assert run("cdf", "--lambda", -1, "--k", 0)[0] == 2
        assert run("cdf", "--lambda", 1, "--k", 0.5, "--mode", "pmf")[0] == 2

    def test_usage_errors(self):
        assert run()[0] == 1
        assert run("frobnicate")[0] == 1
        code, out, err = run("nd", "--relation", HOSPITAL_CSV)
        assert code == 1 and out == "" and "--query" in err

    def test_hospital_nd(self):
        code, out, _ = run("nd", "--relation", HOSPITAL_CSV, "--query", HOSPITAL_QUERY)
        assert code == 0
        doc = json.loads(out)
        assert set(doc["sets"]) == {"sky", "nd", "po"}  # the query asks for all three
        assert set(doc["sets"]["nd"]) <= set(doc["sets"]["sky"])
        assert doc["timing_ms"] == {}

    def test_hospital_po_with_oracle(self):
        code, out, err = run("po", "--relation", HOSPITAL_CSV, "--query", HOSPITAL_QUERY, "--oracle", "--timing")
        assert code == 0, err
        doc = json.loads(out)
        sets = doc["sets"]
        assert set(sets["po"]) <= set(sets["nd"]) <= set(sets["sky"])
        assert doc["oracle"]["sky"] == doc["oracle"]["nd"] == "match"
        assert doc["oracle"]["po"]["status"] == "consistent"
        assert set(doc["timing_ms"]) == {"sky", "score", "nd", "po"}

    def test_subcommand_limits_sets(self, tmp_path):
        query = write(tmp_path, "q.yaml", QUERY + "outputs: [sky]\n")
        rel = write(tmp_path, "r.csv", "id,rate,dist\na,3,0.2\nb,9,0.1\nc,4,0.3\n")
        doc = json.loads(run("sky", "--relation", rel, "--query", query)[1])
        assert set(doc["sets"]) == {"sky"}
        doc = json.loads(run("nd", "--relation", rel, "--query", query)[1])
        assert set(doc["sets"]) == {"sky", "nd"}

    def test_data_errors(self, tmp_path):
        query = write(tmp_path, "q.yaml", QUERY)
        bad = write(tmp_path, "r.csv", "id,rate,dist\na,3,1.5\n")
        code, out, err = run("nd", "--relation", bad, "--query", query)
        assert code == 2 and out == "" and "dist" in err
        code, out, err = run("nd", "--relation", bad, "--query", tmp_path / "nope.yaml")
        assert code == 2 and out == ""
        broken = write(tmp_path, "b.yaml", QUERY.replace("identity", "bogus"))
        code, _, err = run("nd", "--relation", bad, "--query", broken)
        assert code == 2 and "transforms[1].kind" in err

    def test_oracle_mismatch_exit(self, tmp_path, monkeypatch):
        from flexsky import oracle

        monkeypatch.setattr(oracle, "nd_brute", lambda *a, **k: set())
        code, out, err = run("nd", "--relation", HOSPITAL_CSV, "--query", HOSPITAL_QUERY, "--oracle")
        assert code == 4 and out == "" and "nd differs" in err

    def test_numerical_failure_exit(self, monkeypatch):
        from flexsky import engine
        from flexsky.errors import NumericalFailure

        def boom(*a, **k):
            raise NumericalFailure("simplex exceeded 1 iterations")

        monkeypatch.setattr(engine, "convex_combination_dominates", boom)
        code, out, err = run("po", "--relation", HOSPITAL_CSV, "--query", HOSPITAL_QUERY)
        assert code == 3 and out == "" and "numerical failure" in err

    def test_byte_identical_outputs(self, tmp_path):
        rel = tmp_path / "r.csv"
        run("gen", "--n", 200, "--seed", 4, "--out", rel, "--schema", "rate:rate,dist:normalized")
        query = write(tmp_path, "q.yaml", QUERY)
        first = run("po", "--relation", rel, "--query", query)
        second = run("po", "--relation", rel, "--query", query)
        assert first[0] == 0 and first == second

    def test_bench_small(self):
        code, out, _ = run("bench", "--n", 500, "--d", 3, "--clamp", "--po")
        assert code == 0
        doc = json.loads(out)
        assert set(doc["timing_ms"]) == {"exact", "clamp"}
        assert "nd_symmetric_difference_count" in doc
        assert doc["filtered"]["nd_symmetric_difference_count"] == 0

    def test_module_entry_point(self):
        proc = subprocess.run(
            [sys.executable, "-m", "flexsky", "cdf", "--lambda", "1", "--k", "0"],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0 and proc.stdout == "0.3678794412\n"

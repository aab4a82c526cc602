import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from errcalc.cli import main
from errcalc.config import RunConfig, default_config_text, parse_config
from errcalc.errors import ParseError, ValidationError


def test_minimal_document_gets_defaults():
    cfg = parse_config('{"seed": 3}')
    assert isinstance(cfg, RunConfig)
    assert cfg.samples.m_samples == 100_000 and cfg.samples.realizations == 10_000
    assert cfg.tolerance.z == 3.0 and cfg.structure.name == "gaussian_product"


def test_seed_is_required():
    with pytest.raises(ValidationError) as err:
        parse_config("{}")
    assert any("seed" in v for v in err.value.violations)


def test_expression_accepted_in_three_dims():
    cfg = parse_config('{"seed": 1, "structure": {"dim": 3}, "functionals": {"X": "x1*x2 + sin(x3)"}}')
    assert cfg.functionals["X"] == "x1*x2 + sin(x3)"


def test_expression_parse_error_location():
    with pytest.raises(ParseError) as err:
        parse_config('{"seed": 1, "functionals": {"X": "x1 +"}}')
    assert err.value.column == 4


def test_arity_violation_is_validation_error():
    with pytest.raises(ValidationError):
        parse_config('{"seed": 1, "structure": {"dim": 1}, "functionals": {"X": "x2"}}')


def test_json_syntax_error_has_line():
    with pytest.raises(ParseError) as err:
        parse_config('{"seed": 1,\n "samples": }')
    assert err.value.line == 2


def test_all_violations_collected():
    doc = {"seed": 1, "bogus": 1, "samples": {"realizations": 0, "m_samples": 10}, "estimator": {"kind": "nope"},
           "tolerance": {"ks_level": 2}}
    with pytest.raises(ValidationError) as err:
        parse_config(json.dumps(doc))
    text = " ".join(err.value.violations)
    for key in ("bogus", "realizations", "m_samples", "estimator.kind", "ks_level"):
        assert key in text


def test_default_config_is_valid():
    cfg = parse_config(default_config_text())
    assert cfg.functionals["X"] == "x1^2"


@given(st.integers(0, 2 ** 31), st.integers(1000, 10 ** 6), st.integers(2, 10 ** 5))
def test_roundtrip(seed, m, r):
    cfg = parse_config(json.dumps({"seed": seed, "samples": {"m_samples": m, "realizations": r}}))
    assert parse_config(json.dumps(cfg.to_dict())) == cfg


@given(st.dictionaries(st.text(min_size=1, max_size=8).filter(lambda k: k not in {
    "seed", "structure", "functionals", "inputs", "white_noise", "estimator", "samples", "tolerance", "wiener"}),
    st.integers(), min_size=1, max_size=3))
def test_unknown_top_level_keys_rejected(extra):
    doc = {"seed": 1, **extra}
    with pytest.raises(ValidationError):
        parse_config(json.dumps(doc))


# ---- CLI


def test_cli_parse(capsys):
    assert main(["parse", "--expr", "x1*x2", "--at", "1,2"]) == 0
    out = capsys.readouterr().out
    assert "Binary *" in out and "grad: [2.0, 1.0]" in out


def test_cli_parse_error_exit_code(capsys):
    assert main(["parse", "--expr", "x1 +"]) == 2
    assert "column 4" in capsys.readouterr().err


def test_cli_bad_config(tmp_path, capsys):
    p = tmp_path / "c.json"
    p.write_text('{"seed": 1, "samples": {"realizations": 0}}')
    assert main(["check", "--config", str(p), "--suite", "all"]) == 2
    assert "realizations" in capsys.readouterr().err


def test_cli_missing_file():
    assert main(["check", "--config", "/definitely/not/here.json"]) == 2


def test_cli_check_star_passes(tmp_path):
    out = tmp_path / "r.json"
    assert main(["check", "--suite", "star", "--out", str(out)]) == 0
    rows = json.loads(out.read_text())
    assert all(r["verdict"] == "pass" for r in rows)
    assert "wall_time" not in rows[0]


def test_cli_check_csv_with_timings(tmp_path):
    out = tmp_path / "r.csv"
    assert main(["check", "--suite", "corollary", "--format", "csv", "--timings", "--out", str(out)]) == 0
    header = out.read_text().splitlines()[0]
    assert header.startswith("name,verdict") and "wall_time" in header


def test_cli_failing_check_exit_code(tmp_path):
    # tolerances below rounding level make the factorization identities fail
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"seed": 1, "functionals": {"X": "x1^2", "f": "1"},
                             "tolerance": {"exact": 1e-30, "factorization": 1e-30}}))
    assert main(["check", "--config", str(p), "--suite", "corollary"]) == 1


def test_cli_sens(tmp_path):
    out = tmp_path / "s.json"
    assert main(["sens", "--quantity", "x1", "--out", str(out)]) == 0
    r = json.loads(out.read_text())
    assert r["total"]["value"] == 1.0 and r["decomposition"][0]["value"] == 1.0

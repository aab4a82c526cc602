import json
import math

import pytest

from errcalc import harness as H
from errcalc.config import parse_config
from errcalc.errors import ValidationError


def cfg(**samples):
    doc = {"seed": 5, "functionals": {"X": "x1^2", "f": "1"}}
    if samples:
        doc["samples"] = samples
    return parse_config(json.dumps(doc))


def test_stat_rule():
    r = H.stat("a", 1.0, 1.05, 0.02, 0.0, 3.0)
    assert r.passed and r.z == pytest.approx(2.5)
    assert not H.stat("b", 1.0, 1.07, 0.02, 0.0, 3.0).passed
    assert H.stat("c", 1.0, 1.07, 0.02, 0.02, 3.0).passed  # defect widens the band


def test_exact_rule_rejects_nan():
    assert not H.exact("n", float("nan"), 1.0).passed
    assert H.exact("ok", 1e-12, 1e-10).passed


def test_payload_is_json_safe():
    r = H.stat("inf", 0.0, 1.0, 0.0, 0.0, 3.0, arr=[math.inf])
    text = json.dumps(r.payload(), allow_nan=False)
    assert '"inf"' in text


def test_group_errors_become_failures(monkeypatch):
    def boom(cfg, seed):
        raise RuntimeError("kaput")

    monkeypatch.setitem(H.GROUPS, "star", ("star", boom))
    reports = H.run_suite(cfg(), "star")
    assert [r.name for r in reports] == ["star.error"]
    assert not reports[0].passed and "kaput" in reports[0].details["error"]


def test_unknown_suite():
    with pytest.raises(ValidationError):
        H.groups_for("nope")


def test_suite_selection():
    assert set(H.groups_for("axioms")) == {"axioms.core", "axioms.dgradient", "axioms.white_noise",
                                           "axioms.transforms"}
    assert set(H.groups_for("all")) == set(H.GROUPS)


def test_zero_realizations_rejected_before_running():
    with pytest.raises(ValidationError):
        parse_config('{"seed": 1, "samples": {"realizations": 0}}')


def test_prop1_suite_default_config():
    reports = {r.name: r for r in H.run_suite(cfg(), "prop1")}
    assert reports["prop1.variance[x1^2,1]"].target == 4.0
    assert all(r.passed for r in reports.values())
    assert reports["prop1.config"].provenance == "oracle-estimated"


def test_star_suite_reports_positive_gap():
    reports = H.run_suite(cfg(), "star")
    gap = next(r for r in reports if r.name == "star.gap_positive[x1^2]")
    assert gap.passed and gap.estimate > 5


def test_seed_changes_results():
    a = H.reports_json(H.run_suite(cfg(), "prop1"))
    other = parse_config(json.dumps({"seed": 6, "functionals": {"X": "x1^2", "f": "1"}}))
    b = H.reports_json(H.run_suite(other, "prop1"))
    assert a != b


def test_sensitivity_examples():
    one = parse_config('{"seed": 1}')
    r = H.run_sensitivity(one, "x1", ["x1"])
    assert r["total"]["value"] == 1.0 and r["decomposition"][0]["value"] == 1.0
    two = parse_config('{"seed": 1, "structure": {"dim": 2}}')
    r = H.run_sensitivity(two, "x1+x2", ["x1", "x2"])
    assert r["total"]["value"] == 2.0
    assert [d["value"] for d in r["decomposition"]] == [1.0, 1.0]
    assert r["image"]["nabla_X"][0] == [1.0, 1.0]
    w = parse_config('{"seed": 1, "structure": {"name": "wiener_ou", "n_inc": 16}}')
    assert H.run_sensitivity(w, "w(1)^2", [])["total"] == {"value": 4.0, "stderr": 0.0, "provenance": "analytic"}


def test_sensitivity_monte_carlo_path():
    c = parse_config('{"seed": 2, "samples": {"m_samples": 200000}}')
    r = H.run_sensitivity(c, "sin(x1)", ["x1"])
    # E[cos^2 x] = (1 + e^-2) / 2
    t = r["total"]
    assert t["provenance"] == "monte-carlo"
    assert abs(t["value"] - (1 + math.exp(-2)) / 2) <= 3 * t["stderr"]

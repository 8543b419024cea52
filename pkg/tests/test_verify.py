import json

import pytest

from finitekey.verify import (
    SUITES,
    VerifyConfig,
    check_case_analysis,
    check_exp_s_squared,
    check_oracle_dominance,
    check_phi_sandwich,
    run_verification,
)

SMALL = dict(lemma_sizes=(20,), chvatal_size=30, case_size=200, case_s=(2.0, 3.0),
             case_c_min=(5, 10), oracle_sizes=(200,), oracle_s=(2.0, 3.0), oracle_D=(1, 10))


def test_small_grid_passes():
    report = run_verification(VerifyConfig(**SMALL))
    assert report.passed, [c.to_dict() for c in report.failures]
    names = {c.name for c in report.checks}
    assert {"stirling_tail", "gauss_tail", "oracle_vs_prop2", "oracle_vs_thm3",
            "case_small_k", "case_large_k_sum"} <= names
    json.dumps(report.to_dict(), allow_nan=False)
    assert len(report.lines()) == len(report.checks)


def test_corrupted_stirling_constant_is_caught():
    report = run_verification(VerifyConfig(mu=-5.0, **SMALL))
    assert not report.passed
    failed = {c.name for c in report.failures}
    assert {"gauss_tail", "oracle_vs_prop2"} <= failed
    worst = next(c for c in report.failures if c.name == "oracle_vs_prop2")
    assert worst.worst_margin < 0
    assert {"n", "l", "k", "s", "D"} <= set(worst.witness)


def test_literal_phi_pair_is_informational():
    corrected = check_phi_sandwich(VerifyConfig())
    literal = check_phi_sandwich(VerifyConfig(), literal=True)
    assert corrected.passed and corrected.gating
    assert not literal.passed and not literal.gating


def test_exp_s_squared_threshold_reported():
    res = check_exp_s_squared(VerifyConfig())
    assert not res.gating
    assert not res.passed and res.witness["s"] == pytest.approx(2.0)
    above = check_exp_s_squared(VerifyConfig(s_grid_b7=(2.3, 3.0, 8.0)))
    assert above.passed


def test_case_analysis_small():
    results = check_case_analysis(VerifyConfig(**SMALL))
    assert all(r.passed for r in results if r.gating)
    assert all(r.checked > 0 for r in results)


def test_oracle_checks_gate_only_rigorous_bounds():
    results = {r.name: r for r in check_oracle_dominance(VerifyConfig(**SMALL))}
    assert results["oracle_vs_prop2"].gating and results["oracle_vs_thm3"].gating
    assert not results["oracle_vs_prop1"].gating and not results["oracle_vs_thm2"].gating


def test_suite_selection():
    report = run_verification(VerifyConfig(suites=("stirling_tail",), lemma_sizes=(20,)))
    assert [c.name for c in report.checks] == ["stirling_tail"]
    with pytest.raises(ValueError):
        VerifyConfig(suites=("nope",))
    assert set(SUITES) >= {"case_analysis", "oracle_dominance"}

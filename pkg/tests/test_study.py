import numpy as np
import pytest

from oscille import study
from oscille.core import BoundarySpec, Scenario, preset_coefficient


def test_fit_rate_exact_linear():
    fit = study.fit_rate([(0.1, 0.1), (0.05, 0.05), (0.025, 0.025)])
    assert fit.slope == pytest.approx(1.0, abs=1e-12)
    assert fit.residual == pytest.approx(0.0, abs=1e-12)


def test_fit_rate_exact_quadratic():
    eps = [0.2, 0.1, 0.05, 0.025]
    fit = study.fit_rate([(e, 7.0 * e**2) for e in eps])
    assert fit.slope == pytest.approx(2.0, abs=1e-12)


def test_fit_rate_noisy_half_order():
    rng = np.random.default_rng(4)
    eps = [2.0**-k for k in range(3, 9)]
    pts = [(e, e**0.5 * (1.0 + 0.05 * rng.uniform(-1, 1))) for e in eps]
    fit = study.fit_rate(pts)
    assert abs(fit.slope - 0.5) <= 0.05
    assert fit.residual <= 0.15


def test_fit_rate_errors():
    with pytest.raises(study.InsufficientData):
        study.fit_rate([(0.1, 1.0), (0.05, 0.5)])
    with pytest.raises(study.NonPositiveError):
        study.fit_rate([(0.1, 1.0), (0.05, 0.0), (0.025, 0.2)])
    with pytest.raises(study.InsufficientData):
        study.fit_rate([(0.1, 1.0), (0.1, 0.5), (0.025, 0.2)])


def test_verdict_rules():
    fit = study.FitResult(0.97, 0.0, 0.01)
    assert study.verdict(fit, 1.0) == "PASS"
    assert study.verdict(study.FitResult(0.55, 0.0, 0.01), 0.5) == "PASS"
    assert study.verdict(study.FitResult(0.3, 0.0, 0.01), 0.5) == "FAIL"
    assert study.verdict(study.FitResult(1.2, 0.0, 0.3), 1.0) == "FAIL"  # bad residual
    assert study.verdict(None, 1.0) == "NotApplicable"


def test_derive_targets_exponents():
    sc = Scenario(
        field=preset_coefficient("Sine1D", [2, 1], 1),
        domain=((0.0, 1.0),),
        bc=BoundarySpec("dirichlet"),
        mu=0.0,
        p=2.0,
        s=1.0,
        s_plus=1.0,
        epsilons=(1 / 8, 1 / 16, 1 / 32),
        points_per_period=8,
        interior_margin=0.0,
    )
    targets = {t.name: t for t in study.derive_targets(sc)}
    assert targets["lp"].guaranteed_exponent == pytest.approx(1.0)
    assert targets["w1_corr"].guaranteed_exponent == pytest.approx(0.5)
    assert targets["besov_half"].guaranteed_exponent == pytest.approx(0.5)
    assert "w1_corr_interior" not in targets  # no interior margin requested

    sc2 = Scenario(
        field=preset_coefficient("LocallyPeriodic2D", [2, 1, 0.5], 2),
        domain=((0.0, 1.0), (0.0, 1.0)),
        bc=BoundarySpec("mixed", ("left",)),
        mu=-1.0,
        p=2.0,
        s=0.5,
        s_plus=0.5,
        epsilons=(1 / 8, 1 / 16, 1 / 32, 1 / 64, 1 / 128),
        points_per_period=8,
        interior_margin=0.3,
    )
    targets2 = {t.name: t for t in study.derive_targets(sc2)}
    assert targets2["lp"].guaranteed_exponent == pytest.approx(0.5)
    assert targets2["w1_corr"].guaranteed_exponent == pytest.approx(0.25)
    assert targets2["w1_corr_interior"].guaranteed_exponent == pytest.approx(0.5)
    assert targets2["besov_half"].guaranteed_exponent == pytest.approx(0.25)


def test_rate_target_validation():
    with pytest.raises(ValueError):
        study.RateTarget("bad", 2.5, "lp", False, "global")


@pytest.fixture(scope="module")
def constant_report():
    sc = Scenario(
        field=preset_coefficient("Constant", [2.0], 1),
        domain=((0.0, 1.0),),
        bc=BoundarySpec("dirichlet"),
        mu=0.0,
        p=2.0,
        s=1.0,
        s_plus=1.0,
        epsilons=(1 / 4, 1 / 8, 1 / 16),
        points_per_period=8,
        interior_margin=0.0,
    )
    return study.run_study(sc)


def test_constant_field_rows_excluded(constant_report):
    rep = constant_report
    for row in rep.rows:
        for name, err in row.errors.items():
            assert err <= 1e-8
            assert row.excluded[name]
    assert all(v == "NotApplicable" for v in rep.verdicts.values())
    assert all(f is None for f in rep.fits.values())
    assert rep.all_passed  # NotApplicable does not fail the run


@pytest.fixture(scope="module")
def small_sine_report():
    sc = Scenario(
        field=preset_coefficient("Sine1D", [2, 1], 1),
        domain=((0.0, 1.0),),
        bc=BoundarySpec("dirichlet"),
        mu=0.0,
        p=2.0,
        s=1.0,
        s_plus=1.0,
        epsilons=(1 / 8, 1 / 16, 1 / 32, 1 / 64),
        points_per_period=16,
        interior_margin=0.2,
    )
    return study.run_study(sc, threads=2)


def test_small_sine_passes(small_sine_report):
    rep = small_sine_report
    assert rep.verdicts["lp"] == "PASS"
    assert rep.verdicts["w1_corr"] == "PASS"
    assert rep.fits["lp"].slope >= 0.9


def test_corrector_earns_its_keep(small_sine_report):
    # with-corrector gradient error beats the plain one at every eps <= 1/16
    for row in small_sine_report.rows:
        if row.eps <= 1 / 16 + 1e-12:
            assert row.errors["w1_corr"] < row.aux["w1_plain"]


def test_interior_error_below_global(small_sine_report):
    for row in small_sine_report.rows:
        assert row.errors["w1_corr_interior"] <= row.errors["w1_corr"] + 1e-14


def test_corrector_ratio_stable(small_sine_report):
    ratios = [r.aux["corrector_ratio"] for r in small_sine_report.rows]
    assert max(ratios) / min(ratios) <= 1.5


def test_rows_sorted_and_threaded_matches_serial(small_sine_report):
    eps = [r.eps for r in small_sine_report.rows]
    assert eps == sorted(eps, reverse=True)


def test_summarize_contains_verdicts(small_sine_report):
    text = study.summarize(small_sine_report)
    assert "lp:" in text and "verdict=PASS" in text
    assert "corrector boundedness ratio" in text

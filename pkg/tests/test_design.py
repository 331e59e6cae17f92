import math

import pytest

from gsdmix import design as dm
from gsdmix.sub_density import Design, stage_densities, stopping_probabilities

from conftest import ORDERED_SPEC


@pytest.fixture(scope="module")
def solved():
    return dm.solve_design(ORDERED_SPEC)


def test_alpha0_closed_form():
    a0 = dm.solve_alpha0(0.05, 3)
    assert a0 == pytest.approx(1 - 0.95 ** (1 / 3), rel=1e-14)
    assert dm.overall_alpha([a0] * 3) == pytest.approx(0.05, rel=1e-14)
    assert dm.solve_alpha0(0.05, 1) == pytest.approx(0.05, rel=1e-14)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(alpha=0.0, power=0.8, alternatives=(0.3,)),
        dict(alpha=0.05, power=1.0, alternatives=(0.3,)),
        dict(alpha=0.05, power=0.8, alternatives=()),
        dict(alpha=0.05, power=0.8, alternatives=(0.2, 0.3)),
        dict(alpha=0.05, power=0.8, alternatives=(0.3, -0.1)),
        dict(alpha=0.05, power=0.8, alternatives=(0.3, 0.2), alpha_k=(0.02,)),
        dict(alpha=0.05, power=0.8, alternatives=(0.3,), alpha0_override=1.5),
        dict(alpha=0.6, power=0.3, alternatives=(0.3,)),
    ],
)
def test_spec_rejects_bad_input(kwargs):
    with pytest.raises(dm.SpecError):
        dm.DesignSpec(**kwargs)


def test_single_stage_matches_fixed_sample_formula():
    s = dm.solve_design(dm.DesignSpec(alpha=0.025, power=0.8, alternatives=(0.3,)))
    assert s.design.n == (88,)
    assert s.design.c[0] == pytest.approx(1.959963984540054, abs=1e-12)


def test_solved_design_meets_its_own_targets(solved):
    d = solved.design
    null = stopping_probabilities(d, 0.0)
    for k in range(d.K):
        assert null.reject[k] / null.reach[k] == pytest.approx(0.0172, abs=1e-9)
    for k, th in enumerate(ORDERED_SPEC.alternatives):
        assert stopping_probabilities(d, th).cumulative_reject[k] >= 0.8 - 1e-9


def test_solved_n_is_minimal(solved):
    # one fewer subject at the last stage misses the power target
    d = solved.design
    n = d.n[:-1] + (d.n[-1] - 1,)
    shorter = Design(n, d.c[:-1] + (math.inf,))
    dens = stage_densities(shorter, 0.0)
    c_last = dm._critical_value(shorter, 3, dens[1], 0.0172 * dens[1].total_mass)
    trial = Design(n, d.c[:-1] + (c_last,))
    assert stopping_probabilities(trial, 0.1).cumulative_reject[2] < 0.8


def test_validation_report(solved):
    rep = dm.validate_design(solved.design, ORDERED_SPEC)
    assert rep.alpha == pytest.approx(dm.overall_alpha([0.0172] * 3), abs=1e-9)
    assert rep.passed and rep.to_dict()["passed"]
    bad = Design(solved.design.n, (3.0, 3.0, 3.0))
    assert not dm.validate_design(bad, ORDERED_SPEC).passed


def test_oc_summary_schema(solved):
    rows = dm.oc_summary(solved.design, [0.0])
    assert [r["stage"] for r in rows] == [1, 2, 3]
    assert set(rows[0]) >= {"theta", "reject_prob_stagewise", "reject_prob_cumulative", "stop_prob", "expected_N"}
    assert rows[-1]["reject_prob_cumulative"] == pytest.approx(sum(r["reject_prob_stagewise"] for r in rows))


def test_infeasible_cap():
    spec = dm.DesignSpec(alpha=0.05, power=0.9, alternatives=(0.3, 0.01))
    with pytest.raises(dm.InfeasibleDesignError) as info:
        dm.solve_design(spec, cap=500)
    assert info.value.stage == 2 and info.value.achieved < 0.9
    with pytest.raises(dm.InfeasibleDesignError):
        dm.solve_design(dm.DesignSpec(alpha=0.05, power=0.9, alternatives=(0.01,)), cap=500)

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from gsdmix import sub_density as sd
from gsdmix.estimation import mlr_check
from gsdmix.sub_density import Design, DesignError

# frozen from the bivariate-normal CDF in scipy
POCOCK_ALPHA = 0.024895


def _bvn_reject2(design, theta):
    """Pr(Z1 <= c1, Z2 > c2) for a two-stage design, via scipy."""
    n1, n2 = design.n
    rho = math.sqrt(n1 / (n1 + n2))
    d1, d2 = theta * math.sqrt(n1), theta * math.sqrt(n1 + n2)
    c1, c2 = design.c
    cov = [[1, rho], [rho, 1]]
    below_both = stats.multivariate_normal.cdf([c1 - d1, c2 - d2], mean=[0, 0], cov=cov, abseps=1e-12, releps=1e-12, maxpts=200000)
    return stats.norm.cdf(c1 - d1) - below_both


def test_design_validation():
    with pytest.raises(DesignError):
        Design((100, 50.5), (2, 2))
    with pytest.raises(DesignError):
        Design((100, 0), (2, 2))
    with pytest.raises(DesignError):
        Design((100,), (2, 2))
    with pytest.raises(DesignError):
        Design((100, 100), (2, float("nan")))
    d = Design((100.0, 50), (2, math.inf))
    assert d.n == (100, 50) and list(d.cum_n) == [100, 150]


def test_single_stage_closed_form():
    d = Design((50,), (1.7,))
    p = sd.stopping_probabilities(d, 0.2)
    assert p.stop[0] == pytest.approx(1.0, abs=1e-14)
    assert p.reject[0] == pytest.approx(stats.norm.sf(1.7 - 0.2 * math.sqrt(50)), abs=1e-14)


def test_pocock_type_one_error(pocock):
    assert sd.stopping_probabilities(pocock, 0.0).power == pytest.approx(POCOCK_ALPHA, abs=2e-6)


@pytest.mark.parametrize("theta", [-0.1, 0.0, 0.1, 0.218, 0.4])
def test_two_stage_matches_bivariate_normal(pocock, theta):
    p = sd.stopping_probabilities(pocock, theta)
    assert p.reject[1] == pytest.approx(_bvn_reject2(pocock, theta), abs=1e-7)
    assert p.reject[0] == pytest.approx(stats.norm.sf(2.18 - theta * 10), abs=1e-14)


def test_infinite_boundary_never_stops():
    d = Design((100, 100), (math.inf, 2.0))
    p = sd.stopping_probabilities(d, 0.1)
    assert p.stop[0] == 0.0 and p.reach[1] == pytest.approx(1.0, abs=1e-12)
    assert sd.expected_sample_size(d, 0.1) == pytest.approx(200.0, abs=1e-9)


def test_minus_infinite_boundary_always_stops():
    d = Design((100, 100), (-math.inf, 2.0))
    p = sd.stopping_probabilities(d, 0.1)
    assert p.stop[0] == 1.0 and p.stop[1] == 0.0


def test_expected_sample_size_two_stage(pocock):
    p1 = stats.norm.sf(2.18)
    assert sd.expected_sample_size(pocock, 0.0) == pytest.approx(100 + 100 * (1 - p1), abs=1e-9)


def test_mixture_cdf_limits(three_stage):
    v = np.array([-40.0, 2.0, 40.0])
    total = sd.mixture_cdf(three_stage, 0.1, v)
    assert total[0] == pytest.approx(0.0, abs=1e-14) and total[2] == pytest.approx(1.0, abs=1e-10)
    comps = sd.mixture_cdf_components(three_stage, 0.1, [40.0])
    np.testing.assert_allclose(comps[0], sd.stopping_probabilities(three_stage, 0.1).stop, atol=1e-10)


def test_mixture_cdf_monotone(three_stage):
    v = np.linspace(-4, 8, 200)
    assert np.all(np.diff(sd.mixture_cdf(three_stage, 0.2, v, centered=True)) >= -1e-14)


design_st = st.integers(1, 4).flatmap(
    lambda K: st.tuples(
        st.lists(st.integers(1, 400), min_size=K, max_size=K),
        st.lists(
            st.one_of(st.floats(-1.0, 4.0), st.just(math.inf), st.just(-math.inf)),
            min_size=K,
            max_size=K,
        ),
    )
)


@settings(max_examples=120, deadline=None)
@given(nc=design_st, theta=st.floats(-0.5, 0.5))
def test_mass_conservation(nc, theta):
    n, c = nc
    d = Design(tuple(n), tuple(c))
    p = sd.stopping_probabilities(d, theta)
    assert abs(p.stop.sum() - 1.0) < 1e-8
    assert np.all(p.stop >= -1e-15)
    # reach(k+1) = reach(k) - stop(k)
    np.testing.assert_allclose(p.reach[1:], p.reach[:-1] - p.stop[:-1], atol=1e-8)


@settings(max_examples=25, deadline=None)
@given(
    n=st.lists(st.integers(10, 300), min_size=3, max_size=3),
    c=st.lists(st.floats(1.0, 3.0), min_size=3, max_size=3),
    thetas=st.tuples(st.floats(-0.2, 0.4), st.floats(0.01, 0.3)),
    stage=st.integers(1, 3),
)
def test_mlr_monotone(n, c, thetas, stage):
    lo, gap = thetas
    d = Design(tuple(n), tuple(c))
    assert mlr_check(d, lo + gap, lo, stage, np.linspace(-3, 4, 41))


@pytest.mark.parametrize("theta", [0.0, 0.1, 0.3])
def test_grid_refinement(three_stage, theta):
    coarse = sd.stopping_probabilities(three_stage, theta)
    fine = sd.stopping_probabilities(three_stage, theta, panels=512, order=20)
    assert np.max(np.abs(coarse.stop - fine.stop)) < 1e-6
    assert np.max(np.abs(coarse.reject - fine.reject)) < 1e-6

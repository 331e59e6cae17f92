import math

import numpy as np
import pytest
from scipy import stats

from gsdmix import asymptotics as asy
from gsdmix.sub_density import Design

from conftest import POCOCK, THREE_STAGE

V = np.linspace(-5, 5, 101)


def test_spec_validation():
    with pytest.raises(asy.LocalAltError):
        asy.LocalAltSpec(0.0, ((1.0,), (2.0, 3.0)), (2.0,))  # 1/2 + 1/3 != 1
    with pytest.raises(asy.LocalAltError):
        asy.LocalAltSpec(0.0, ((1.0,), (2.0,)), (2.0,))  # wrong row length
    with pytest.raises(asy.LocalAltError):
        asy.LocalAltSpec(0.0, ((1.0,), (2.0, 2.0)), ())  # missing boundary
    with pytest.raises(asy.LocalAltError):
        asy.LocalAltSpec(0.0, ((1.0,), (2.0, 2.0), (4.0, 2.0, 4.0)), (2.0, 2.0))  # rows not proportional
    asy.LocalAltSpec(0.0, ((1.0,), (2.0, 2.0), (4.0, 4.0, 2.0)), (2.0, 2.0))


def test_from_design_ratios():
    spec = asy.LocalAltSpec.from_design(THREE_STAGE, 1.0)
    assert spec.ratios[2][2] == pytest.approx(772 / 576)
    d, theta = spec.limit_design()
    assert sum(d.n) == pytest.approx(1.0)
    assert theta * math.sqrt(d.n[0]) == pytest.approx(1.0)


def test_convolution_identity():
    spec = asy.LocalAltSpec(0.0, ((1.0,), (2.0, 2.0)), (math.inf,))
    np.testing.assert_allclose(asy.mixture_cdf_two_stage(spec, V), stats.norm.cdf(V), atol=1e-8)


@pytest.mark.parametrize("h", [0.0, 1.5, 8.0])
def test_two_stage_routes_agree(h):
    spec = asy.LocalAltSpec.from_design(POCOCK, h)
    a = asy.mixture_cdf_two_stage(spec, V, components=True)
    b = asy.mixture_cdf_k_stage(spec, V, components=True)
    np.testing.assert_allclose(a, b, atol=1e-10)


def test_pocock_limit_equals_finite_sample():
    spec = asy.LocalAltSpec.from_design(POCOCK, 0.0)
    np.testing.assert_allclose(asy.mixture_cdf_two_stage(spec, V), asy.finite_sample_cdf(POCOCK, 0.0, V), atol=1e-6)
    assert asy.mixture_cdf_k_stage(spec, 2.18) == pytest.approx(0.975, abs=1e-3)


def test_large_h_degenerates_to_stage_one():
    p = asy.LocalAltSpec.from_design(POCOCK, 8.0).limit_probs()
    assert p[0] > 0.999 and p.sum() == pytest.approx(1.0, abs=1e-10)


def test_three_stage_tail():
    spec = asy.LocalAltSpec.from_design(THREE_STAGE, 0.0)
    assert 1 - asy.mixture_cdf_k_stage(spec, 2.02) == pytest.approx(0.0509, abs=2e-3)


def test_convergence_normal_and_exponential():
    rows = asy.convergence_check(POCOCK, 1.0, [1, 4], V[::10])
    assert all(r["sup_diff"] < 1e-8 for r in rows)
    rows = asy.convergence_check(Design((5, 5), (2.18, 2.18)), 1.0, [1, 20], V[::10], "exponential", reps=20_000, seed=1)
    assert rows[1]["sup_diff"] < rows[0]["sup_diff"]
    with pytest.raises(ValueError):
        asy.convergence_check(POCOCK, 0.0, [1], V, "cauchy")

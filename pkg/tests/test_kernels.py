import importlib

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gsdmix import _kernels_py, kernels

compiled = pytest.importorskip("gsdmix._kernels")


@settings(max_examples=40, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    a=st.floats(0.1, 1.0),
    m=st.floats(-3, 3),
    s=st.floats(0.1, 2.0),
    upper=st.booleans(),
)
def test_backends_agree(seed, a, m, s, upper):
    rng = np.random.default_rng(seed)
    nodes = np.sort(rng.uniform(-6, 4, 300))
    wv = rng.uniform(0, 0.05, 300)
    out_nodes = np.linspace(-7, 5, 517)
    ref = _kernels_py.propagate(out_nodes, nodes, wv, a, m, s)
    np.testing.assert_allclose(compiled.propagate(out_nodes, nodes, wv, a, m, s), ref, rtol=1e-12, atol=1e-15)
    xs = np.linspace(-8, 8, 33)
    ref = _kernels_py.cdf_mass(nodes, wv, a, m, s, xs, upper)
    np.testing.assert_allclose(compiled.cdf_mass(nodes, wv, a, m, s, xs, upper), ref, rtol=1e-12, atol=1e-15)


def test_compiled_backend_selected_by_default():
    assert kernels.BACKEND == "cython"


def test_env_forces_fallback(monkeypatch):
    monkeypatch.setenv("GSDMIX_PURE_PYTHON", "1")
    try:
        mod = importlib.reload(kernels)
        assert mod.BACKEND == "python" and mod.propagate is _kernels_py.propagate
    finally:
        monkeypatch.delenv("GSDMIX_PURE_PYTHON")
        importlib.reload(kernels)

"""NumPy implementations of the transition kernels in ``_kernels.pyx``."""

import numpy as np
from scipy import special

_INV_SQRT_2PI = 0.3989422804014327
_BLOCK = 256


def propagate(out_nodes, in_nodes, in_wv, a, m, s):
    """Sub-density at ``out_nodes`` after one Gaussian transition.

    ``out[i] = sum_j in_wv[j] * phi((out_nodes[i] - a*in_nodes[j] - m) / s) / s``
    """
    out_nodes = np.asarray(out_nodes, dtype=float)
    shifted = a * np.asarray(in_nodes, dtype=float)
    in_wv = np.asarray(in_wv, dtype=float)
    out = np.empty(out_nodes.size)
    for start in range(0, out_nodes.size, _BLOCK):
        z = (out_nodes[start:start + _BLOCK, None] - m - shifted[None, :]) / s
        out[start:start + _BLOCK] = np.exp(-0.5 * z * z) @ in_wv
    return out * (_INV_SQRT_2PI / s)


def cdf_mass(in_nodes, in_wv, a, m, s, xs, upper):
    """``sum_j in_wv[j] * Phi((x - a*in_nodes[j] - m) / s)`` for each ``x``.

    With ``upper`` the survival function replaces ``Phi``.
    """
    xs = np.asarray(xs, dtype=float)
    shifted = a * np.asarray(in_nodes, dtype=float) + m
    in_wv = np.asarray(in_wv, dtype=float)
    sign = -1.0 if upper else 1.0
    out = np.empty(xs.size)
    for start in range(0, xs.size, _BLOCK):
        z = (xs[start:start + _BLOCK, None] - shifted[None, :]) / s
        out[start:start + _BLOCK] = special.ndtr(sign * z) @ in_wv
    return out

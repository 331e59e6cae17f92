"""Shared numerical kernel: normal functions, composite Gauss-Legendre
quadrature, bracketing root finding and counter-based random streams."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import optimize, special

SQRT_2PI = math.sqrt(2.0 * math.pi)
TAIL_SD = 8.5
DEFAULT_PANELS = 256
DEFAULT_ORDER = 16

_SEED_MASK = (1 << 64) - 1


class DomainError(ValueError):
    """Argument outside the domain of a function."""


class BracketError(ValueError):
    """The supplied bracket does not contain a sign change."""

    def __init__(self, lower, upper, f_lower, f_upper):
        self.lower, self.upper = lower, upper
        self.f_lower, self.f_upper = f_lower, f_upper
        super().__init__(
            f"no sign change on [{lower!r}, {upper!r}]: "
            f"f(lower)={f_lower!r}, f(upper)={f_upper!r}"
        )


class IntegrationError(ArithmeticError):
    """Integrand produced a non-finite value."""


def norm_pdf(x):
    """Standard normal density; accepts scalars or arrays."""
    x = np.asarray(x, dtype=float)
    out = np.exp(-0.5 * x * x) / SQRT_2PI
    return float(out) if out.ndim == 0 else out


def norm_cdf(x):
    """Standard normal CDF (erfc based, accurate in both tails)."""
    out = special.ndtr(np.asarray(x, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


def norm_sf(x):
    """Upper tail ``1 - norm_cdf(x)`` without cancellation."""
    out = special.ndtr(-np.asarray(x, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


def norm_quantile(p):
    """Inverse of :func:`norm_cdf`.

    Raises:
        DomainError: if any ``p`` lies outside the open interval (0, 1).
    """
    arr = np.asarray(p, dtype=float)
    if np.any(~((arr > 0.0) & (arr < 1.0))):
        raise DomainError(f"quantile level must lie in (0, 1), got {p!r}")
    out = special.ndtri(arr)
    return float(out) if out.ndim == 0 else out


def find_root(
    f: Callable[[float], float], lower: float, upper: float, tol: float = 1e-12
) -> float:
    """Root of ``f`` on ``[lower, upper]`` by Brent's method.

    Raises:
        BracketError: if ``f(lower)`` and ``f(upper)`` have the same sign.
    """
    f_lo, f_hi = f(lower), f(upper)
    if f_lo == 0.0:
        return float(lower)
    if f_hi == 0.0:
        return float(upper)
    if not (np.isfinite(f_lo) and np.isfinite(f_hi)) or f_lo * f_hi > 0.0:
        raise BracketError(lower, upper, f_lo, f_hi)
    return float(optimize.brentq(f, lower, upper, xtol=tol, rtol=4 * np.finfo(float).eps, maxiter=500))


@lru_cache(maxsize=16)
def _legendre(order: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(order)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


@dataclass(frozen=True, eq=False)
class QuadratureGrid:
    """Nodes and positive weights of a quadrature rule on ``[lower, upper]``."""

    lower: float
    upper: float
    nodes: np.ndarray
    weights: np.ndarray

    @classmethod
    def composite(
        cls,
        lower: float,
        upper: float,
        panels: int = DEFAULT_PANELS,
        order: int = DEFAULT_ORDER,
    ) -> "QuadratureGrid":
        """Composite Gauss-Legendre rule with equal-width panels."""
        if not (np.isfinite(lower) and np.isfinite(upper)):
            raise DomainError("quadrature limits must be finite")
        if upper <= lower:
            empty = np.empty(0)
            return cls(float(lower), float(lower), empty, empty)
        x, w = _legendre(order)
        edges = np.linspace(lower, upper, panels + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[:-1] + edges[1:])
        nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
        weights = (half[:, None] * w[None, :]).ravel()
        return cls(float(lower), float(upper), nodes, weights)

    def __len__(self) -> int:
        return self.nodes.size


def integrate(f: Callable[[np.ndarray], np.ndarray], grid: QuadratureGrid) -> float:
    """Apply ``grid`` to a vectorised integrand.

    Raises:
        IntegrationError: naming the first node where ``f`` is not finite.
    """
    vals = np.broadcast_to(np.asarray(f(grid.nodes), dtype=float), grid.nodes.shape)
    bad = ~np.isfinite(vals)
    if bad.any():
        node = grid.nodes[np.argmax(bad)]
        raise IntegrationError(f"integrand is not finite at node {node!r}")
    return float(np.dot(grid.weights, vals))


def derive_stream(master_seed: int, replicate_index: int) -> np.random.Generator:
    """Random stream for one replicate.

    Philox is keyed by the master seed and the replicate index occupies the
    third counter word, so streams never overlap and do not depend on the
    order in which replicates are evaluated.
    """
    if replicate_index < 0:
        raise DomainError("replicate_index must be non-negative")
    bitgen = np.random.Philox(
        key=int(master_seed) & _SEED_MASK, counter=[0, 0, int(replicate_index), 0]
    )
    return np.random.Generator(bitgen)

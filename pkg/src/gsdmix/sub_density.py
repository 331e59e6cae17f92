"""Recursive sub-densities of the cumulative Z statistic.

Observations are ``X_i ~ N(theta, 1)``; after ``n_(k)`` observations the
cumulative statistic ``Z_(k) = S_(k) / sqrt(n_(k))`` has drift
``theta * sqrt(n_(k))``. Stage ``k`` stops (and rejects) when
``Z_(k) > c_k``; the last stage always stops.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from gsdmix import kernels
from gsdmix.numerics import (
    DEFAULT_ORDER,
    DEFAULT_PANELS,
    TAIL_SD,
    QuadratureGrid,
    norm_cdf,
    norm_pdf,
    norm_sf,
)


class DesignError(ValueError):
    """Invalid design or stage index."""


@dataclass(frozen=True)
class Design:
    """Stage sizes ``n`` and upper critical values ``c`` on the Z scale.

    ``fractional=True`` admits non-integer sizes; the asymptotic code uses
    it for designs expressed in information fractions.
    """

    n: tuple
    c: tuple
    fractional: bool = field(default=False, repr=False, compare=False)

    def __post_init__(self):
        n = tuple(float(v) if self.fractional else v for v in self.n)
        c = tuple(float(v) for v in self.c)
        if len(n) == 0 or len(n) != len(c):
            raise DesignError(f"need matching non-empty n and c, got {len(n)} and {len(c)}")
        for k, v in enumerate(n, start=1):
            if not self.fractional:
                if isinstance(v, float) and not v.is_integer():
                    raise DesignError(f"n_{k}={v} is not an integer")
                v = int(v)
                if v < 1:
                    raise DesignError(f"n_{k}={v} must be >= 1")
            elif not (v > 0 and math.isfinite(v)):
                raise DesignError(f"n_{k}={v} must be positive")
        if any(math.isnan(v) for v in c):
            raise DesignError("critical values must not be NaN")
        if not self.fractional:
            n = tuple(int(v) for v in n)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "c", c)

    @property
    def K(self) -> int:
        return len(self.n)

    @property
    def cum_n(self) -> np.ndarray:
        return np.cumsum(np.asarray(self.n, dtype=float))

    def drift(self, theta: float, k: int) -> float:
        """Mean of ``Z_(k)`` (1-based ``k``)."""
        return theta * math.sqrt(self.cum_n[k - 1])

    def to_dict(self) -> dict:
        return {"n": list(self.n), "c": list(self.c)}


@dataclass(frozen=True, eq=False)
class StageDensity:
    """Sub-density of ``Z_(k)`` on the continuation region ``Z_(k) <= c_k``."""

    stage: int
    theta: float
    grid: QuadratureGrid
    values: np.ndarray

    @property
    def total_mass(self) -> float:
        return float(np.dot(self.grid.weights, self.values))

    @property
    def weighted(self) -> np.ndarray:
        return self.grid.weights * self.values


@dataclass(frozen=True)
class StoppingProbabilities:
    """Per-stage operating probabilities at one ``theta``.

    Attributes:
        stop: ``Pr(D = k)``.
        reject: ``Pr(R_k)``, stopping at ``k`` by crossing ``c_k``.
        reach: ``Pr(D >= k)``.
    """

    theta: float
    stop: np.ndarray
    reject: np.ndarray
    reach: np.ndarray

    @property
    def cumulative_reject(self) -> np.ndarray:
        return np.cumsum(self.reject)

    @property
    def power(self) -> float:
        return float(self.reject.sum())


def _transition(design: Design, k: int, theta: float) -> tuple[float, float, float]:
    """Coefficients ``(a, m, s)`` of ``Z_(k) | Z_(k-1)=t ~ N(a t + m, s^2)``."""
    cum = design.cum_n
    prev, cur = cum[k - 2], cum[k - 1]
    nk = design.n[k - 1]
    return math.sqrt(prev / cur), theta * nk / math.sqrt(cur), math.sqrt(nk / cur)


def continuation_grid(
    design: Design,
    k: int,
    theta: float,
    panels: int = DEFAULT_PANELS,
    order: int = DEFAULT_ORDER,
) -> QuadratureGrid:
    """Grid covering ``Z_(k) <= c_k`` down to ``TAIL_SD`` below the drift or the boundary."""
    ck = design.c[k - 1]
    mu = design.drift(theta, k)
    if ck == -math.inf:
        return QuadratureGrid.composite(0.0, 0.0)
    upper = ck if math.isfinite(ck) else mu + TAIL_SD
    lower = min(upper, mu) - TAIL_SD
    return QuadratureGrid.composite(lower, upper, panels, order)


def initial_density(
    design: Design, theta: float, panels: int = DEFAULT_PANELS, order: int = DEFAULT_ORDER
) -> StageDensity:
    """Stage-1 sub-density: ``N(theta sqrt(n_1), 1)`` restricted to ``Z_(1) <= c_1``."""
    grid = continuation_grid(design, 1, theta, panels, order)
    values = norm_pdf(grid.nodes - design.drift(theta, 1))
    return StageDensity(1, theta, grid, np.atleast_1d(values))


def propagate(
    prev: StageDensity,
    design: Design,
    theta: float,
    panels: int = DEFAULT_PANELS,
    order: int = DEFAULT_ORDER,
    grid: QuadratureGrid | None = None,
) -> StageDensity:
    """Continuation sub-density at stage ``prev.stage + 1``.

    ``grid`` overrides the default continuation grid, e.g. to evaluate the
    sub-density of the final-stage statistic over its whole support.
    """
    k = prev.stage + 1
    if k > design.K:
        raise DesignError(f"cannot propagate past stage {design.K}")
    if grid is None:
        grid = continuation_grid(design, k, theta, panels, order)
    a, m, s = _transition(design, k, theta)
    if len(prev.grid) == 0 or len(grid) == 0:
        values = np.zeros(len(grid))
    else:
        values = kernels.propagate(grid.nodes, prev.grid.nodes, prev.weighted, a, m, s)
    return StageDensity(k, theta, grid, values)


def stage_densities(
    design: Design, theta: float, panels: int = DEFAULT_PANELS, order: int = DEFAULT_ORDER
) -> list[StageDensity]:
    """Continuation sub-densities for stages ``1 .. K-1``."""
    out: list[StageDensity] = []
    if design.K == 1:
        return out
    dens = initial_density(design, theta, panels, order)
    out.append(dens)
    for _ in range(2, design.K):
        dens = propagate(dens, design, theta, panels, order)
        out.append(dens)
    return out


def stage_cdf(
    design: Design,
    k: int,
    theta: float,
    x,
    prev: StageDensity | None = None,
    upper: bool = False,
) -> np.ndarray:
    """``Pr(reach k, Z_(k) <= x)`` for each ``x`` (``> x`` when ``upper``).

    Stages after the first need ``prev``, the continuation density of stage
    ``k - 1``.
    """
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    if k == 1:
        z = xs - design.drift(theta, 1)
        return np.atleast_1d(norm_sf(z) if upper else norm_cdf(z))
    if prev is None or prev.stage != k - 1:
        raise DesignError(f"stage {k} needs the stage {k - 1} continuation density")
    if len(prev.grid) == 0:
        return np.zeros(xs.size)
    a, m, s = _transition(design, k, theta)
    return kernels.cdf_mass(prev.grid.nodes, prev.weighted, a, m, s, np.ascontiguousarray(xs), upper)


def crossing_mass(design: Design, k: int, theta: float, c: float, prev: StageDensity | None = None) -> float:
    """``Pr(reach k, Z_(k) > c)``."""
    return float(stage_cdf(design, k, theta, [c], prev, upper=True)[0])


def stop_moment(
    design: Design,
    k: int,
    theta: float,
    prev: StageDensity | None = None,
    panels: int = DEFAULT_PANELS,
    order: int = DEFAULT_ORDER,
) -> tuple[float, float]:
    """``(Pr(D = k), E[Z_(k) 1{D = k}])``.

    The first moment over the stopping region has a closed form per
    quadrature node, which gives the exact theta-score of ``Pr(D = k)``.
    """
    K = design.K
    ck = design.c[k - 1] if k < K else -math.inf
    if k > 1 and prev is None:
        prev = initial_density(design, theta, panels, order)
        for _ in range(2, k):
            prev = propagate(prev, design, theta, panels, order)
    if k == 1:
        mu = np.array([design.drift(theta, 1)])
        w, sd = np.ones(1), 1.0
    else:
        a, m, sd = _transition(design, k, theta)
        mu = a * prev.grid.nodes + m
        w = prev.weighted
    if ck == math.inf or mu.size == 0:
        return 0.0, 0.0
    if ck == -math.inf:
        return float(w.sum()), float(np.dot(w, mu))
    u = (ck - mu) / sd
    tail = norm_sf(u)
    return float(np.dot(w, tail)), float(np.dot(w, mu * tail + sd * norm_pdf(u)))


def stopping_probabilities(
    design: Design,
    theta: float,
    panels: int = DEFAULT_PANELS,
    order: int = DEFAULT_ORDER,
    densities: Sequence[StageDensity] | None = None,
) -> StoppingProbabilities:
    """Stopping, rejection and reach probabilities for every stage.

    Reach masses come from integrating the continuation densities and the
    crossing masses from the transition kernel, so their sum checks the
    quadrature independently.
    """
    K = design.K
    if densities is None:
        densities = stage_densities(design, theta, panels, order)
    reach = np.ones(K)
    reject = np.zeros(K)
    for k in range(1, K + 1):
        prev = densities[k - 2] if k > 1 else None
        if k > 1:
            reach[k - 1] = prev.total_mass
        ck = design.c[k - 1]
        if ck == math.inf:
            reject[k - 1] = 0.0
        elif ck == -math.inf:
            reject[k - 1] = reach[k - 1]
        else:
            reject[k - 1] = crossing_mass(design, k, theta, ck, prev)
    stop = reject.copy()
    stop[K - 1] = reach[K - 1]
    return StoppingProbabilities(float(theta), stop, reject, reach)


def mixture_cdf_components(
    design: Design,
    theta: float,
    v,
    centered: bool = False,
    panels: int = DEFAULT_PANELS,
    order: int = DEFAULT_ORDER,
) -> np.ndarray:
    """``Pr(D = k, Z_(k) <= v)`` as an array of shape ``(len(v), K)``.

    With ``centered`` the statistic at stage ``k`` is ``Z_(k)`` minus its
    drift, i.e. the standardized estimation error ``sqrt(n_(k)) (theta_hat - theta)``.
    """
    vs = np.atleast_1d(np.asarray(v, dtype=float))
    densities = stage_densities(design, theta, panels, order)
    K = design.K
    out = np.zeros((vs.size, K))
    for k in range(1, K + 1):
        prev = densities[k - 2] if k > 1 else None
        shift = design.drift(theta, k) if centered else 0.0
        xs = vs + shift
        if k == K:
            out[:, k - 1] = stage_cdf(design, k, theta, xs, prev)
            continue
        ck = design.c[k - 1]
        if ck == math.inf:
            continue
        at_c = stage_cdf(design, k, theta, [ck], prev)[0] if ck > -math.inf else 0.0
        above = np.maximum(xs, ck)
        out[:, k - 1] = np.maximum(stage_cdf(design, k, theta, above, prev) - at_c, 0.0)
    return out


def mixture_cdf(design: Design, theta: float, v, centered: bool = False, **quad) -> np.ndarray | float:
    """``Pr(Z_(D) <= v)``, the CDF of the stopped statistic."""
    total = mixture_cdf_components(design, theta, v, centered, **quad).sum(axis=1)
    return float(total[0]) if np.ndim(v) == 0 else total


def expected_sample_size(design: Design, theta: float, **quad) -> float:
    """``E[N] = sum_k n_(k) Pr(D = k)``."""
    probs = stopping_probabilities(design, theta, **quad)
    return float(np.dot(design.cum_n, probs.stop))

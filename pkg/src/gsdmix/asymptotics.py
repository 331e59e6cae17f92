"""Limiting mixture law of the standardized MLE under local alternatives
``theta = h / sqrt(n_1)``."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from gsdmix.numerics import TAIL_SD, QuadratureGrid, derive_stream, norm_cdf, norm_sf
from gsdmix.sub_density import Design, mixture_cdf_components


class LocalAltError(ValueError):
    """Ratios that cannot come from any sequence of stage sizes."""


@dataclass(frozen=True)
class LocalAltSpec:
    """Limit ratios ``r_(k)j = lim n_(k) / n_j`` and boundaries ``c_1 .. c_{K-1}``.

    ``ratios[k-1][j-1]`` holds ``r_(k)j`` for ``j <= k``.
    """

    h: float
    ratios: tuple
    boundary: tuple

    def __post_init__(self):
        ratios = tuple(tuple(float(x) for x in row) for row in self.ratios)
        object.__setattr__(self, "ratios", ratios)
        object.__setattr__(self, "boundary", tuple(float(c) for c in self.boundary))
        K = len(ratios)
        if K == 0:
            raise LocalAltError("need at least one stage")
        if len(self.boundary) not in (K - 1, K):
            raise LocalAltError(f"need {K - 1} boundaries, got {len(self.boundary)}")
        for k, row in enumerate(ratios, start=1):
            if len(row) != k:
                raise LocalAltError(f"row {k} must have {k} ratios")
            if any(not (r >= 1.0 - 1e-12) for r in row):
                raise LocalAltError(f"ratios in row {k} must be >= 1")
            # stage fractions n_j / n_(k) sum to one
            if abs(sum(1.0 / r for r in row) - 1.0) > 1e-9:
                raise LocalAltError(f"row {k}: sum of 1/r_(k)j must equal 1")
            if k > 1:
                prev = ratios[k - 2]
                scale = [row[j] / prev[j] for j in range(k - 1)]
                if max(scale) - min(scale) > 1e-9 * max(scale):
                    raise LocalAltError(f"row {k} is not proportional to row {k - 1}")

    @property
    def K(self) -> int:
        return len(self.ratios)

    @classmethod
    def from_design(cls, design: Design, h: float) -> "LocalAltSpec":
        cum = design.cum_n
        n = np.asarray(design.n, dtype=float)
        ratios = tuple(tuple(cum[k] / n[j] for j in range(k + 1)) for k in range(design.K))
        return cls(h, ratios, tuple(design.c[:-1]))

    def limit_design(self) -> tuple[Design, float]:
        """Fractional design with ``n_(K) = 1`` and the matching drift ``theta``."""
        last = self.ratios[-1]
        n = tuple(1.0 / r for r in last)
        c = tuple(self.boundary[: self.K - 1]) + (math.inf,)
        return Design(n, c, fractional=True), self.h / math.sqrt(n[0])

    def limit_probs(self) -> np.ndarray:
        """``p_k = lim Pr(D = k)``."""
        design, theta = self.limit_design()
        comps = mixture_cdf_components(design, theta, [math.inf], centered=True)
        return comps[0]


def mixture_cdf_two_stage(spec: LocalAltSpec, v, components: bool = False, panels: int = 256, order: int = 16):
    """Limiting CDF of ``V_(D)`` for two stages by direct quadrature.

    Stage 1 stops when ``xi_1 > c_1 - h``; otherwise
    ``V_(2) = sqrt((r-1)/r) xi_1 + xi_2 / sqrt(r)`` with ``r = r_(2)2``.
    """
    if spec.K != 2:
        raise LocalAltError("two-stage formula needs K = 2")
    vs = np.atleast_1d(np.asarray(v, dtype=float))
    r = spec.ratios[1][1]
    cut = spec.boundary[0] - spec.h
    out = np.zeros((vs.size, 2))
    if cut < math.inf:
        out[:, 0] = np.maximum(norm_cdf(vs) - norm_cdf(cut), 0.0)
    if cut > -math.inf:
        upper = cut if math.isfinite(cut) else TAIL_SD
        grid = QuadratureGrid.composite(min(upper, 0.0) - TAIL_SD, upper, panels, order)
        phi = np.exp(-0.5 * grid.nodes**2) / math.sqrt(2 * math.pi) * grid.weights
        inner = math.sqrt(r) * vs[:, None] - math.sqrt(r - 1.0) * grid.nodes[None, :]
        out[:, 1] = norm_cdf(inner) @ phi
    if components:
        return out
    total = out.sum(axis=1)
    return float(total[0]) if np.ndim(v) == 0 else total


def mixture_cdf_k_stage(spec: LocalAltSpec, v, components: bool = False, **quad):
    """Limiting CDF of ``V_(D)`` for any ``K`` via the sub-density recursion
    on the information-fraction scale."""
    design, theta = spec.limit_design()
    comps = mixture_cdf_components(design, theta, v, centered=True, **quad)
    if components:
        return comps
    total = comps.sum(axis=1)
    return float(total[0]) if np.ndim(v) == 0 else total


def finite_sample_cdf(design: Design, h: float, v, scale: int = 1, **quad) -> np.ndarray:
    """CDF of ``V_(D)`` with stage sizes ``scale * n`` and ``theta = h / sqrt(scale n_1)``."""
    scaled = Design(tuple(scale * x for x in design.n), design.c, fractional=design.fractional)
    theta = h / math.sqrt(scaled.n[0])
    return mixture_cdf_components(scaled, theta, v, centered=True, **quad).sum(axis=1)


def _mc_exponential_cdf(design: Design, h: float, v, scale: int, reps: int, seed: int) -> np.ndarray:
    """Empirical CDF of ``V_(D)`` when observations are centred unit exponentials plus ``theta``."""
    n = np.asarray(design.n, dtype=float) * scale
    theta = h / math.sqrt(n[0])
    cum = np.cumsum(n)
    sums = np.empty((reps, design.K))
    for i in range(reps):
        g = derive_stream(seed, i)
        sums[i] = g.gamma(n) - n + theta * n
    z = np.cumsum(sums, axis=1) / np.sqrt(cum)
    crossed = z[:, :-1] > np.asarray(design.c[:-1])
    stop = np.where(crossed.any(axis=1), crossed.argmax(axis=1), design.K - 1) if design.K > 1 else np.zeros(reps, int)
    vstat = z[np.arange(reps), stop] - theta * np.sqrt(cum[stop])
    vs = np.atleast_1d(np.asarray(v, dtype=float))
    return np.searchsorted(np.sort(vstat), vs, side="right") / reps


def convergence_check(
    design: Design,
    h: float,
    scale_factors: Sequence[int],
    v_grid: Sequence[float],
    increments: str = "normal",
    reps: int = 20_000,
    seed: int = 0,
    **quad,
) -> list[dict]:
    """Sup-distance between finite-sample and limiting CDFs of ``V_(D)`` per scale.

    ``increments="normal"`` uses the exact recursion (the distance is pure
    quadrature error); ``"exponential"`` simulates skewed observations.
    """
    spec = LocalAltSpec.from_design(design, h)
    vs = np.asarray(v_grid, dtype=float)
    limit = mixture_cdf_k_stage(spec, vs, **quad)
    rows = []
    for m in scale_factors:
        if increments == "normal":
            finite = finite_sample_cdf(design, h, vs, m, **quad)
        elif increments == "exponential":
            finite = _mc_exponential_cdf(design, h, vs, m, reps, seed)
        else:
            raise ValueError(f"unknown increments {increments!r}")
        rows.append({"scale": int(m), "sup_diff": float(np.max(np.abs(finite - limit)))})
    return rows

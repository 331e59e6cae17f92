"""Designs driven by a sequence of ordered alternatives.

Stage ``k`` gets a conditional type-1 error ``alpha_k`` and the smallest
integer ``n_k`` whose cumulative power at ``theta_k`` reaches the target.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from gsdmix.numerics import DEFAULT_ORDER, DEFAULT_PANELS, find_root, norm_quantile, norm_sf
from gsdmix.sub_density import (
    Design,
    StageDensity,
    crossing_mass,
    expected_sample_size,
    initial_density,
    propagate,
    stopping_probabilities,
)

log = logging.getLogger(__name__)

DEFAULT_N_CAP = 10**6


class SpecError(ValueError):
    """Inconsistent design specification."""


class InfeasibleDesignError(RuntimeError):
    """Target power cannot be reached with ``n_k`` up to the cap."""

    def __init__(self, stage: int, cap: int, achieved: float, target: float):
        self.stage, self.cap, self.achieved, self.target = stage, cap, achieved, target
        super().__init__(
            f"stage {stage}: power {achieved:.6f} at n_{stage}={cap} is below target {target}"
        )


@dataclass(frozen=True)
class DesignSpec:
    """User intent for an ordered-alternatives design.

    ``alpha_k`` gives explicit conditional stage errors; otherwise every stage
    uses the common ``alpha0`` (solved from ``alpha`` unless overridden).
    """

    alpha: float
    power: float
    alternatives: tuple
    alpha_k: tuple | None = None
    alpha0_override: float | None = None

    def __post_init__(self):
        alts = tuple(float(t) for t in self.alternatives)
        object.__setattr__(self, "alternatives", alts)
        if not alts:
            raise SpecError("at least one alternative is required")
        if not 0 < self.alpha < 1:
            raise SpecError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not 0 < self.power < 1:
            raise SpecError(f"power must lie in (0, 1), got {self.power}")
        if self.alpha + (1 - self.power) >= 1:
            raise SpecError("alpha + (1 - power) must be below 1")
        if any(t <= 0 for t in alts):
            raise SpecError("alternatives must be positive")
        if any(b >= a for a, b in zip(alts, alts[1:])):
            raise SpecError("alternatives must be strictly decreasing")
        if self.alpha_k is not None:
            ak = tuple(float(a) for a in self.alpha_k)
            if len(ak) != len(alts):
                raise SpecError("alpha_k must have one entry per stage")
            if any(not 0 < a < 1 for a in ak):
                raise SpecError("every alpha_k must lie in (0, 1)")
            object.__setattr__(self, "alpha_k", ak)
        if self.alpha0_override is not None and not 0 < self.alpha0_override < 1:
            raise SpecError("alpha0_override must lie in (0, 1)")

    @property
    def K(self) -> int:
        return len(self.alternatives)

    def stage_alphas(self) -> tuple:
        if self.alpha_k is not None:
            return self.alpha_k
        a0 = self.alpha0_override if self.alpha0_override is not None else solve_alpha0(self.alpha, self.K)
        return (a0,) * self.K


def solve_alpha0(alpha: float, K: int) -> float:
    """Common conditional stage error with overall level ``alpha``.

    Equal conditional errors accumulate as ``1 - (1 - alpha0)**K``.
    """
    if not 0 < alpha < 1 or K < 1:
        raise SpecError("need 0 < alpha < 1 and K >= 1")
    return -math.expm1(math.log1p(-alpha) / K)


def overall_alpha(stage_alphas: Sequence[float]) -> float:
    """``sum_k alpha_k prod_{j<k} (1 - alpha_j)``."""
    return 1.0 - float(np.prod([1.0 - a for a in stage_alphas]))


@dataclass
class _Partial:
    """Stages solved so far plus continuation densities at the thetas still needed."""

    n: list = field(default_factory=list)
    c: list = field(default_factory=list)
    densities: dict = field(default_factory=dict)
    rejected: dict = field(default_factory=dict)


def _stage_one(alpha_1: float, theta: float, target: float, cap: int) -> tuple[int, float]:
    c1 = norm_quantile(1.0 - alpha_1)
    n1 = math.ceil(((c1 + norm_quantile(target)) / theta) ** 2 - 1e-9)
    n1 = max(n1, 1)
    if n1 > cap:
        achieved = norm_sf(c1 - theta * math.sqrt(cap))
        raise InfeasibleDesignError(1, cap, achieved, target)
    return n1, c1


def _critical_value(design: Design, k: int, prev0: StageDensity, target_mass: float) -> float:
    """``c`` with ``Pr_0(reach k, Z_(k) > c) = target_mass``."""

    def excess(c):
        return crossing_mass(design, k, 0.0, c, prev0) - target_mass

    lo, hi = -10.0, 10.0
    while excess(hi) > 0:
        hi += 10.0
    while excess(lo) < 0:
        lo -= 10.0
    return find_root(excess, lo, hi, tol=1e-12)


def solve_stage_k(
    partial: _Partial,
    spec: DesignSpec,
    k: int,
    cap: int = DEFAULT_N_CAP,
    panels: int = DEFAULT_PANELS,
    order: int = DEFAULT_ORDER,
) -> tuple[int, float]:
    """Solve ``(n_k, c_k)`` given stages ``1 .. k-1`` in ``partial``.

    ``c_k`` fixes the conditional null crossing probability at ``alpha_k``;
    ``n_k`` is the smallest integer with cumulative power at ``theta_k`` at
    least ``spec.power``.

    Raises:
        InfeasibleDesignError: when ``n_k = cap`` still falls short.
    """
    alpha_k = spec.stage_alphas()[k - 1]
    theta_k = spec.alternatives[k - 1]
    target = spec.power
    if k == 1:
        return _stage_one(alpha_k, theta_k, target, cap)

    prev0 = partial.densities[(k - 1, 0.0)]
    prev1 = partial.densities[(k - 1, theta_k)]
    reach0 = prev0.total_mass
    already = partial.rejected[(k - 1, theta_k)]

    def evaluate(nk: int) -> tuple[float, float]:
        trial = Design(tuple(partial.n) + (nk,), tuple(partial.c) + (math.inf,))
        ck = _critical_value(trial, k, prev0, alpha_k * reach0)
        return ck, already + crossing_mass(trial, k, theta_k, ck, prev1)

    lo, hi = 0, 1
    c_hi, p_hi = evaluate(hi)
    while p_hi < target:
        if hi >= cap:
            raise InfeasibleDesignError(k, cap, p_hi, target)
        lo, hi = hi, min(2 * hi, cap)
        c_hi, p_hi = evaluate(hi)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        c_mid, p_mid = evaluate(mid)
        if p_mid >= target:
            hi, c_hi, p_hi = mid, c_mid, p_mid
        else:
            lo = mid
    log.debug("stage %d: n=%d c=%.6f power=%.6f", k, hi, c_hi, p_hi)
    return hi, c_hi


def _advance(partial: _Partial, k: int, thetas: Sequence[float], panels: int, order: int) -> None:
    """Record stage-``k`` continuation densities and cumulative rejection at ``thetas``."""
    design = Design(tuple(partial.n), tuple(partial.c))
    for th in thetas:
        if k == 1:
            dens = initial_density(design, th, panels, order)
            rej = crossing_mass(design, 1, th, design.c[0])
        else:
            prev = partial.densities[(k - 1, th)]
            dens = propagate(prev, design, th, panels, order)
            rej = partial.rejected[(k - 1, th)] + crossing_mass(design, k, th, design.c[k - 1], prev)
        partial.densities[(k, th)] = dens
        partial.rejected[(k, th)] = rej


@dataclass
class SolvedDesign:
    """A solved design with its operating-characteristic summary."""

    design: Design
    spec: DesignSpec
    stage_alphas: tuple
    oc: list


def oc_summary(design: Design, thetas: Sequence[float], **quad) -> list[dict]:
    rows = []
    for th in thetas:
        probs = stopping_probabilities(design, th, **quad)
        cum = probs.cumulative_reject
        for k in range(design.K):
            rows.append(
                {
                    "theta": float(th),
                    "stage": k + 1,
                    "reject_prob_stagewise": float(probs.reject[k]),
                    "reject_prob_cumulative": float(cum[k]),
                    "stop_prob": float(probs.stop[k]),
                    "expected_N": float(np.dot(design.cum_n, probs.stop)),
                }
            )
    return rows


def solve_design(
    spec: DesignSpec,
    cap: int = DEFAULT_N_CAP,
    panels: int = DEFAULT_PANELS,
    order: int = DEFAULT_ORDER,
) -> SolvedDesign:
    """Solve every stage in turn and attach an OC summary at 0 and each alternative."""
    partial = _Partial()
    K = spec.K
    for k in range(1, K + 1):
        nk, ck = solve_stage_k(partial, spec, k, cap, panels, order)
        partial.n.append(nk)
        partial.c.append(ck)
        if k < K:
            _advance(partial, k, (0.0,) + spec.alternatives[k:], panels, order)
    design = Design(tuple(partial.n), tuple(partial.c))
    oc = oc_summary(design, (0.0,) + spec.alternatives, panels=panels, order=order)
    return SolvedDesign(design, spec, spec.stage_alphas(), oc)


@dataclass
class ValidationReport:
    alpha: float
    alpha_target: float
    alpha_ok: bool
    powers: list
    power_ok: list
    conditional_alphas: list
    expected_N_null: float

    @property
    def passed(self) -> bool:
        return self.alpha_ok and all(self.power_ok)

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "alpha": self.alpha,
            "alpha_target": self.alpha_target,
            "alpha_ok": self.alpha_ok,
            "powers": self.powers,
            "power_ok": self.power_ok,
            "conditional_alphas": self.conditional_alphas,
            "expected_N_null": self.expected_N_null,
        }


def validate_design(
    design: Design,
    spec: DesignSpec,
    alpha_tol: float = 0.002,
    power_tol: float = 0.005,
    **quad,
) -> ValidationReport:
    """Recompute overall alpha and the cumulative power at each ``theta_k``."""
    null = stopping_probabilities(design, 0.0, **quad)
    alpha = null.power
    cond = [float(r / m) if m > 0 else float("nan") for r, m in zip(null.reject, null.reach)]
    powers, ok = [], []
    for k, th in enumerate(spec.alternatives[: design.K], start=1):
        cum = stopping_probabilities(design, th, **quad).cumulative_reject[k - 1]
        powers.append(float(cum))
        ok.append(bool(spec.power - power_tol <= cum <= 1.0 + 1e-12))
    return ValidationReport(
        alpha=float(alpha),
        alpha_target=spec.alpha,
        alpha_ok=bool(abs(alpha - spec.alpha) <= alpha_tol),
        powers=powers,
        power_ok=ok,
        conditional_alphas=cond,
        expected_N_null=float(np.dot(design.cum_n, null.stop)),
    )

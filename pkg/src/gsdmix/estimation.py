"""Unconditional and conditional-on-stopping MLEs, information measures
and estimator moments for the normal-mean model with unit variance."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import special

from gsdmix.numerics import (
    DEFAULT_ORDER,
    DEFAULT_PANELS,
    BracketError,
    QuadratureGrid,
    find_root,
    norm_cdf,
    norm_pdf,
    norm_sf,
)
from gsdmix.sub_density import (
    Design,
    _transition,
    initial_density,
    propagate,
    stop_moment,
    stopping_probabilities,
)

FD_STEP = 1e-4
BRACKET_HALF_WIDTH = 10.0
_LOG_TINY = math.log(1e-300)


class PathError(ValueError):
    """Stage data inconsistent with the design's stopping rule."""

    def __init__(self, stage: int, message: str):
        self.stage = stage
        super().__init__(f"stage {stage}: {message}")


class UnderflowError(ArithmeticError):
    """``Pr(D = k)`` is too small to take logarithms."""

    def __init__(self, stage: int, prob: float):
        self.stage = stage
        super().__init__(f"Pr(D={stage}) = {prob!r} underflows")


@dataclass(frozen=True)
class TrialOutcome:
    """A stopped trial: stopping stage and per-stage sample means."""

    design: Design
    stop_stage: int
    stage_means: tuple
    cumulative_z: tuple = field(default=None)

    def __post_init__(self):
        means = tuple(float(x) for x in self.stage_means)
        object.__setattr__(self, "stage_means", means)
        k = self.stop_stage
        if not 1 <= k <= self.design.K:
            raise PathError(k, f"stop stage must lie in 1..{self.design.K}")
        if len(means) != k:
            raise PathError(k, f"expected {k} stage means, got {len(means)}")
        z = tuple(cumulative_z(self.design, means))
        if self.cumulative_z is not None:
            given = tuple(float(x) for x in self.cumulative_z)
            if len(given) != k or any(abs(a - b) > 1e-10 for a, b in zip(given, z)):
                raise PathError(k, "cumulative_z does not match stage means")
        object.__setattr__(self, "cumulative_z", z)
        c = self.design.c
        for j in range(k - 1):
            if z[j] > c[j]:
                raise PathError(j + 1, f"Z_({j + 1})={z[j]:.6g} crossed c={c[j]:.6g} but the trial continued")
        if k < self.design.K and not z[k - 1] > c[k - 1]:
            raise PathError(k, f"Z_({k})={z[k - 1]:.6g} did not cross c={c[k - 1]:.6g}; the trial has not stopped")

    @classmethod
    def from_stage_means(cls, design: Design, means: Sequence[float]) -> "TrialOutcome":
        return cls(design, len(means), tuple(means))

    @property
    def cum_sum(self) -> float:
        n = self.design.n
        return float(sum(n[j] * m for j, m in enumerate(self.stage_means)))

    @property
    def cum_n(self) -> float:
        return float(self.design.cum_n[self.stop_stage - 1])


def cumulative_z(design: Design, means: Sequence[float]) -> np.ndarray:
    n = np.asarray(design.n[: len(means)], dtype=float)
    return np.cumsum(n * np.asarray(means, dtype=float)) / np.sqrt(np.cumsum(n))


@dataclass(frozen=True)
class MleResult:
    estimate: float
    kind: str
    diverged: bool = False
    search_bracket: tuple | None = None


def mle_unconditional(outcome: TrialOutcome) -> MleResult:
    """Cumulative sample mean; identical to the fixed-sample MLE."""
    return MleResult(outcome.cum_sum / outcome.cum_n, "unconditional")


# --- stopping-stage log probabilities -------------------------------------


def _closed_form(design: Design, k: int) -> bool:
    return design.K == 1 or k == 1 or design.K == 2


def _log_prob_closed(design: Design, k: int, theta):
    """``log Pr(D=k)`` and its theta-derivative where closed forms exist."""
    theta = np.asarray(theta, dtype=float)
    if design.K == 1:
        return np.zeros_like(theta), np.zeros_like(theta)
    rn1 = math.sqrt(design.n[0])
    c1 = design.c[0]
    x = theta * rn1 - c1 if k == 1 else c1 - theta * rn1
    sign = 1.0 if k == 1 else -1.0
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        logp = special.log_ndtr(x)
        mills = np.exp(-0.5 * x * x - 0.5 * math.log(2 * math.pi) - logp)
    mills = np.where(np.isfinite(x), mills, 0.0)
    return logp, sign * rn1 * mills


def log_stop_prob(design: Design, theta: float, k: int, **quad) -> float:
    """``log Pr_theta(D = k)``.

    Raises:
        UnderflowError: if the probability is below 1e-300.
    """
    if _closed_form(design, k):
        val = float(_log_prob_closed(design, k, theta)[0])
    else:
        p = stopping_probabilities(design, theta, **quad).stop[k - 1]
        val = math.log(p) if p > 0 else -math.inf
    if not val >= _LOG_TINY:
        raise UnderflowError(k, math.exp(val) if val > -math.inf else 0.0)
    return val


def dlog_stop_prob(design: Design, theta: float, k: int, **quad) -> float:
    """First theta-derivative of ``log Pr(D = k)``.

    Uses ``d/dtheta Pr(D=k) = E[(S_(k) - n_(k) theta) 1{D=k}]``, exact for
    unit-variance normal data.
    """
    if _closed_form(design, k):
        return float(_log_prob_closed(design, k, theta)[1])
    p, first = stop_moment(design, k, theta, **quad)
    if not p > 1e-300:
        raise UnderflowError(k, p)
    nk = float(design.cum_n[k - 1])
    return math.sqrt(nk) * first / p - nk * theta


def d2log_stop_prob(design: Design, theta: float, k: int, h: float = FD_STEP, **quad) -> float:
    """Second theta-derivative of ``log Pr(D = k)`` by Richardson-extrapolated
    central differences."""
    f0 = log_stop_prob(design, theta, k, **quad)
    fp, fm = log_stop_prob(design, theta + h, k, **quad), log_stop_prob(design, theta - h, k, **quad)
    fp2, fm2 = (log_stop_prob(design, theta + h / 2, k, **quad), log_stop_prob(design, theta - h / 2, k, **quad))
    coarse = (fp - 2 * f0 + fm) / h**2
    fine = (fp2 - 2 * f0 + fm2) / (h / 2) ** 2
    return (4 * fine - coarse) / 3


# --- conditional MLE -------------------------------------------------------


def _half_width(design: Design) -> float:
    return BRACKET_HALF_WIDTH / math.sqrt(design.n[0])


def conditional_mle_array(design: Design, k: int, theta_hat, iterations: int = 80):
    """Vectorised conditional MLE for stage ``k`` where ``Pr(D=k)`` has a
    closed form.

    The conditional log-likelihood is strictly concave in these cases, so
    bisection on the score inside the bracket finds the unique maximiser;
    when the score does not change sign the bracket end nearer the maximum
    is returned and flagged.

    Returns:
        ``(estimate, diverged)`` arrays.
    """
    if not _closed_form(design, k):
        raise ValueError(f"no closed form for Pr(D={k}) with K={design.K}")
    theta_hat = np.asarray(theta_hat, dtype=float)
    nk = float(design.cum_n[k - 1])
    w = _half_width(design)

    def score(t):
        return nk * (theta_hat - t) - _log_prob_closed(design, k, t)[1]

    lo, hi = theta_hat - w, theta_hat + w
    s_lo, s_hi = score(lo), score(hi)
    below = s_lo < 0
    above = s_hi > 0
    a, b = lo.copy(), hi.copy()
    for _ in range(iterations):
        mid = 0.5 * (a + b)
        pos = score(mid) > 0
        a = np.where(pos, mid, a)
        b = np.where(pos, b, mid)
    est = 0.5 * (a + b)
    est = np.where(below, lo, np.where(above, hi, est))
    return est, below | above


def conditional_loglik(design: Design, k: int, theta_hat: float, theta: float, **quad) -> float:
    """Conditional log-likelihood up to a data-only constant."""
    nk = float(design.cum_n[k - 1])
    return nk * (theta_hat * theta - 0.5 * theta * theta) - log_stop_prob(design, theta, k, **quad)


def mle_conditional(outcome: TrialOutcome, **quad) -> MleResult:
    """Maximiser of ``f(data | theta) / Pr_theta(D = k)``.

    The search is confined to the unconditional MLE +/- ``10 / sqrt(n_1)``;
    without an interior root of the score the better bracket end is returned
    with ``diverged=True``.
    """
    design, k = outcome.design, outcome.stop_stage
    th = outcome.cum_sum / outcome.cum_n
    w = _half_width(design)
    bracket = (th - w, th + w)
    if _closed_form(design, k):
        est, div = conditional_mle_array(design, k, np.array([th]))
        return MleResult(float(est[0]), "conditional", bool(div[0]), bracket)
    nk = outcome.cum_n

    def score(t):
        return nk * (th - t) - dlog_stop_prob(design, t, k, **quad)

    try:
        est = find_root(score, *bracket, tol=1e-10)
        return MleResult(est, "conditional", False, bracket)
    except BracketError:
        ends = [conditional_loglik(design, k, th, t, **quad) for t in bracket]
        return MleResult(bracket[int(np.argmax(ends))], "conditional", True, bracket)


# --- information -----------------------------------------------------------


def observed_info(outcome: TrialOutcome, theta: float, **quad) -> tuple[float, float, float]:
    """``(I_obs, I_obs_c, I_obs_fix)`` at ``theta``."""
    nk = outcome.cum_n
    d2 = d2log_stop_prob(outcome.design, theta, outcome.stop_stage, **quad)
    return nk, nk + d2, nk


@dataclass
class InfoReport:
    """Expected information at one ``theta``; per-stage lists are indexed by stage - 1."""

    theta: float
    stop_probs: list
    I_stage: list
    Ic_stage: list
    Ifix_stage: list
    I: float
    Ic: float
    Ifix: float
    info_loss: float
    fraction: list
    fraction_fix: list
    fraction_c: list

    def row(self) -> dict:
        out = {
            "theta": self.theta,
            "I": self.I,
            "I_c": self.Ic,
            "I_fix": self.Ifix,
            "info_loss": self.info_loss,
        }
        for k in range(len(self.I_stage)):
            s = k + 1
            out[f"pr_D{s}"] = self.stop_probs[k]
            out[f"I_{s}"] = self.I_stage[k]
            out[f"I_c_{s}"] = self.Ic_stage[k]
            out[f"I_fix_{s}"] = self.Ifix_stage[k]
            out[f"frac_{s}"] = self.fraction[k]
            out[f"frac_fix_{s}"] = self.fraction_fix[k]
            out[f"frac_c_{s}"] = self.fraction_c[k]
        return out


def expected_info(design: Design, theta: float, **quad) -> InfoReport:
    """Stopped expected, conditional and fixed-design information.

    With unit-variance normal data the observed information is the constant
    ``n_(k)``, so ``I_(k) = n_(k)`` and ``I^c_(k) = n_(k) + d2 log Pr(D=k)``.
    Stages that cannot occur get NaN conditional values and zero weight.
    """
    probs = stopping_probabilities(design, theta, **quad).stop
    cum = design.cum_n
    K = design.K
    d2 = np.full(K, np.nan)
    for k in range(1, K + 1):
        if probs[k - 1] > 1e-300:
            try:
                d2[k - 1] = d2log_stop_prob(design, theta, k, **quad)
            except UnderflowError:
                pass
    live = np.isfinite(d2)
    w = np.where(live, probs, 0.0)
    I_stage = cum.copy()
    Ic_stage = cum + d2
    I = float(np.dot(w, I_stage))
    Ic = float(np.dot(w, np.where(live, Ic_stage, 0.0)))
    loss = float(np.dot(w, np.where(live, -d2, 0.0)))
    Ifix = float(np.dot(probs, cum))
    return InfoReport(
        theta=float(theta),
        stop_probs=probs.tolist(),
        I_stage=I_stage.tolist(),
        Ic_stage=Ic_stage.tolist(),
        Ifix_stage=cum.tolist(),
        I=I,
        Ic=Ic,
        Ifix=Ifix,
        info_loss=loss,
        fraction=(I_stage / I_stage[-1]).tolist(),
        fraction_fix=(cum / cum[-1]).tolist(),
        fraction_c=(Ic_stage / Ic_stage[-1]).tolist(),
    )


# --- estimator moments -----------------------------------------------------


@dataclass
class StageMoments:
    stage: int
    prob: float
    bias: float
    sd: float
    mse: float
    diverged_rate: float = 0.0
    count: int | None = None
    bias_se: float | None = None
    sd_se: float | None = None
    mse_se: float | None = None


@dataclass
class MomentTable:
    theta: float
    estimator: str
    method: str
    stages: list
    overall: StageMoments


def _trunc_moments(mu: float, lower: float, upper: float) -> tuple[float, float]:
    """Mean and variance of ``N(mu, 1)`` restricted to ``(lower, upper)``."""
    a, b = lower - mu, upper - mu
    if b == math.inf:
        lam = math.exp(_log_pdf(a) - special.log_ndtr(-a))
        return mu + lam, 1.0 + a * lam - lam * lam
    lam = math.exp(_log_pdf(b) - special.log_ndtr(b))
    return mu - lam, 1.0 - b * lam - lam * lam


def _log_pdf(x: float) -> float:
    return -0.5 * x * x - 0.5 * math.log(2 * math.pi)


def _overall(stages: list, theta: float) -> StageMoments:
    live = [s for s in stages if s.prob > 0 and np.isfinite(s.bias)]
    w = np.array([s.prob * (1 - s.diverged_rate) for s in live])
    w = w / w.sum()
    mean = sum(wi * (theta + s.bias) for wi, s in zip(w, live))
    second = sum(wi * (s.sd**2 + (theta + s.bias) ** 2) for wi, s in zip(w, live))
    mse = sum(wi * s.mse for wi, s in zip(w, live))
    div = sum(s.prob * s.diverged_rate for s in live)
    return StageMoments(0, 1.0, mean - theta, math.sqrt(max(second - mean**2, 0.0)), mse, div)


def _unconditional_quadrature(design: Design, theta: float) -> list:
    K, cum = design.K, design.cum_n
    if K == 1:
        sd = 1 / math.sqrt(cum[0])
        return [StageMoments(1, 1.0, 0.0, sd, sd * sd)]
    mu1 = design.drift(theta, 1)
    c1 = design.c[0]
    rn1 = math.sqrt(design.n[0])
    out = []
    p1 = norm_sf(c1 - mu1)
    if p1 > 0:
        m, v = _trunc_moments(mu1, c1, math.inf)
        bias, sd = m / rn1 - theta, math.sqrt(v) / rn1
        out.append(StageMoments(1, p1, bias, sd, bias**2 + sd**2))
    else:
        out.append(StageMoments(1, 0.0, math.nan, math.nan, math.nan))
    p2 = norm_cdf(c1 - mu1)
    if p2 > 0:
        m, v = _trunc_moments(mu1, -math.inf, c1) if c1 < math.inf else (mu1, 1.0)
        n2 = design.n[1]
        mean = (rn1 * m + theta * n2) / cum[1]
        var = (design.n[0] * v + n2) / cum[1] ** 2
        bias, sd = mean - theta, math.sqrt(var)
        out.append(StageMoments(2, p2, bias, sd, bias**2 + sd**2))
    else:
        out.append(StageMoments(2, 0.0, math.nan, math.nan, math.nan))
    return out


def _cut_points(fn, lower: float, upper: float, scan: int = 2001) -> list:
    """Sign changes of a continuous function on ``[lower, upper]``."""
    xs = np.linspace(lower, upper, scan)
    ys = fn(xs)
    cuts = []
    for i in np.nonzero(np.sign(ys[:-1]) * np.sign(ys[1:]) < 0)[0]:
        cuts.append(find_root(lambda x: float(fn(np.array([x]))[0]), xs[i], xs[i + 1], tol=1e-13))
    return cuts


def _conditional_quadrature(design: Design, theta: float, panels: int, order: int) -> list:
    """Moments of the conditional MLE per stage for ``K <= 2``.

    The estimator depends on the data only through ``Z_(k)``; the support is
    split where the divergence flag switches so each piece is smooth.
    """
    K, cum = design.K, design.cum_n
    w = _half_width(design)
    out = []
    probs = stopping_probabilities(design, theta).stop
    for k in range(1, K + 1):
        pk = probs[k - 1]
        if pk <= 0:
            out.append(StageMoments(k, 0.0, math.nan, math.nan, math.nan))
            continue
        rnk = math.sqrt(cum[k - 1])
        if k == 1:
            mu = design.drift(theta, 1)
            lo = design.c[0] if K > 1 else mu - 9.0
            hi = max(lo, mu) + 9.0

            def density(z):
                return norm_pdf(z - mu)

        else:
            a, m, s = _transition(design, 2, theta)
            prev = initial_density(design, theta, panels, order)
            centre = [design.drift(theta, 2)]
            if math.isfinite(design.c[0]):
                centre.append(a * design.c[0] + m)
            lo, hi = min(centre) - 9.0, max(centre) + 9.0

            def density(z, prev=prev):
                g = QuadratureGrid(lo, hi, np.asarray(z, dtype=float), np.ones(np.size(z)))
                return propagate(prev, design, theta, grid=g).values

        def edge_scores(z, k=k, rnk=rnk):
            th = np.asarray(z) / rnk
            nk = rnk * rnk
            s_lo = nk * w - _log_prob_closed(design, k, th - w)[1]
            s_hi = -nk * w - _log_prob_closed(design, k, th + w)[1]
            return s_lo, s_hi

        cuts = _cut_points(lambda z: edge_scores(z)[0], lo, hi) + _cut_points(lambda z: edge_scores(z)[1], lo, hi)
        edges = [lo] + sorted(cuts) + [hi]
        mass = div_mass = m1 = m2 = mse = 0.0
        for left, right in zip(edges[:-1], edges[1:]):
            if right <= left:
                continue
            g = QuadratureGrid.composite(left, right, max(panels // 4, 8), order)
            dens = np.asarray(density(g.nodes)) * g.weights
            est, div = conditional_mle_array(design, k, g.nodes / rnk)
            if div.mean() > 0.5:
                div_mass += dens.sum()
                continue
            mass += dens.sum()
            m1 += np.dot(dens, est)
            m2 += np.dot(dens, est * est)
            mse += np.dot(dens, (est - theta) ** 2)
        if mass <= 0:
            out.append(StageMoments(k, pk, math.nan, math.nan, math.nan, 1.0))
            continue
        mean = m1 / mass
        var = max(m2 / mass - mean * mean, 0.0)
        rate = div_mass / (mass + div_mass)
        out.append(StageMoments(k, pk, mean - theta, math.sqrt(var), mse / mass, rate))
    return out


def estimator_moments(
    design: Design,
    theta: float,
    estimator: str = "unconditional",
    method: str = "quadrature",
    reps: int = 100_000,
    seed: int = 0,
    workers: int | None = None,
    panels: int = DEFAULT_PANELS,
    order: int = DEFAULT_ORDER,
) -> MomentTable:
    """Bias, SD and MSE of an MLE conditional on each stopping stage and overall.

    Args:
        estimator: ``"unconditional"`` or ``"conditional"``.
        method: ``"quadrature"`` (closed truncated-normal forms, ``K <= 2``)
            or ``"montecarlo"``.

    Divergent conditional estimates are excluded; their rate is reported.
    """
    if estimator not in ("unconditional", "conditional"):
        raise ValueError(f"unknown estimator {estimator!r}")
    if method == "quadrature":
        if design.K > 2:
            raise ValueError("quadrature moments are available for K <= 2 only")
        if estimator == "unconditional":
            stages = _unconditional_quadrature(design, theta)
        else:
            stages = _conditional_quadrature(design, theta, panels, order)
        return MomentTable(float(theta), estimator, method, stages, _overall(stages, theta))
    if method != "montecarlo":
        raise ValueError(f"unknown method {method!r}")
    from gsdmix.simulation import SimConfig, run_estimator_study

    res = run_estimator_study(SimConfig(design, theta, reps, seed), workers=workers)
    return res.moments(estimator)


def mlr_check(
    design: Design,
    theta_a: float,
    theta_b: float,
    stage: int,
    grid: Sequence[float],
    panels: int = DEFAULT_PANELS,
    order: int = DEFAULT_ORDER,
    slack: float = 1e-9,
) -> bool:
    """True iff the stage sub-density likelihood ratio (a over b) is
    nondecreasing on ``grid``."""
    if theta_a < theta_b:
        raise ValueError("theta_a must not be below theta_b")
    pts = np.sort(np.asarray(grid, dtype=float))

    def sub_density(theta):
        if stage == 1:
            return norm_pdf(pts - design.drift(theta, 1))
        dens = initial_density(design, theta, panels, order)
        for _ in range(2, stage):
            dens = propagate(dens, design, theta, panels, order)
        g = QuadratureGrid(float(pts[0]), float(pts[-1]), pts, np.ones(pts.size))
        return propagate(dens, design, theta, grid=g).values

    fa, fb = np.atleast_1d(sub_density(theta_a)), np.atleast_1d(sub_density(theta_b))
    ok = (fa > 0) & (fb > 0)
    ratio = fa[ok] / fb[ok]
    if ratio.size < 2:
        return True
    step = np.diff(ratio)
    return bool(np.all(step >= -slack * np.maximum(1.0, np.abs(ratio[:-1]))))

"""Seeded Monte-Carlo trials under a design.

Replicate ``i`` always draws its ``K`` standard normals from
``derive_stream(master_seed, i)``, so results do not depend on how
replicates are split across workers.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from gsdmix.estimation import (
    MomentTable,
    StageMoments,
    TrialOutcome,
    _closed_form,
    _overall,
    conditional_mle_array,
    mle_conditional,
)
from gsdmix.numerics import derive_stream
from gsdmix.sub_density import Design

CHUNK = 8192


def default_workers() -> int:
    return max(1, int(os.environ.get("GSDMIX_THREADS", "1")))


@dataclass(frozen=True)
class SimConfig:
    design: Design
    theta: float
    reps: int
    master_seed: int = 0
    collect: frozenset = frozenset({"oc"})

    def __post_init__(self):
        if self.reps < 1:
            raise ValueError("reps must be >= 1")


def draw_normals(master_seed: int, start: int, stop: int, K: int) -> np.ndarray:
    out = np.empty((stop - start, K))
    for row, i in enumerate(range(start, stop)):
        out[row] = derive_stream(master_seed, i).standard_normal(K)
    return out


def _draw_chunk(args):
    return draw_normals(*args)


def replicate_normals(master_seed: int, reps: int, K: int, workers: int | None = None) -> np.ndarray:
    """``(reps, K)`` standard normals, row ``i`` from replicate stream ``i``."""
    workers = default_workers() if workers is None else workers
    jobs = [(master_seed, s, min(s + CHUNK, reps), K) for s in range(0, reps, CHUNK)]
    if workers <= 1 or len(jobs) == 1:
        blocks = [_draw_chunk(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            blocks = list(pool.map(_draw_chunk, jobs))
    return np.concatenate(blocks, axis=0)


def paths_from_normals(design: Design, theta: float, normals: np.ndarray):
    """Stopping stage, stage means and cumulative Z for each row of normals.

    Returns:
        ``(stop_stage, means, z)`` with 1-based stop stages.
    """
    n = np.asarray(design.n, dtype=float)
    means = theta + normals / np.sqrt(n)
    z = np.cumsum(means * n, axis=1) / np.sqrt(np.cumsum(n))
    crossed = z[:, :-1] > np.asarray(design.c[:-1])
    K = design.K
    first = np.where(crossed.any(axis=1), crossed.argmax(axis=1) + 1, K) if K > 1 else np.ones(len(z), int)
    return first.astype(int), means, z


def simulate_trial(design: Design, theta: float, stream: np.random.Generator) -> TrialOutcome:
    """One trial: stage means ``N(theta, 1/n_k)`` until the first crossing."""
    normals = stream.standard_normal(design.K)[None, :]
    stop, means, z = paths_from_normals(design, theta, normals)
    k = int(stop[0])
    return TrialOutcome(design, k, tuple(means[0, :k]), tuple(z[0, :k]))


@dataclass
class SimResult:
    theta: float
    reps: int
    seed_echo: int
    stop_stage_counts: np.ndarray
    rejection_by_stage: np.ndarray
    mean_N: float
    estimator_samples: dict | None = field(default=None, repr=False)
    design: Design | None = field(default=None, repr=False)

    @property
    def reject_prob(self) -> np.ndarray:
        return self.rejection_by_stage / self.reps

    @property
    def reject_prob_cumulative(self) -> np.ndarray:
        return np.cumsum(self.rejection_by_stage) / self.reps

    @property
    def stop_prob(self) -> np.ndarray:
        return self.stop_stage_counts / self.reps

    def binomial_se(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        return np.sqrt(p * (1 - p) / self.reps)

    def moments(self, estimator: str = "unconditional") -> MomentTable:
        """Per-stage bias/SD/MSE with Monte-Carlo standard errors."""
        if self.estimator_samples is None:
            raise ValueError("estimator samples were not collected")
        s = self.estimator_samples
        key = "theta_hat" if estimator == "unconditional" else "theta_hat_c"
        stages = []
        for k in range(1, len(self.stop_stage_counts) + 1):
            at_k = s["stop_stage"] == k
            count = int(at_k.sum())
            prob = count / self.reps
            keep = at_k & ~s["diverged"] if estimator == "conditional" else at_k
            est = s[key][keep]
            rate = float(s["diverged"][at_k].mean()) if estimator == "conditional" and count else 0.0
            stages.append(_sample_moments(k, prob, est, self.theta, rate, count))
        return MomentTable(self.theta, estimator, "montecarlo", stages, _overall(stages, self.theta))


def _sample_moments(k, prob, est, theta, rate, count) -> StageMoments:
    m = est.size
    if m < 2:
        return StageMoments(k, prob, math.nan, math.nan, math.nan, rate, count)
    err = est - theta
    bias = float(err.mean())
    sd = float(est.std(ddof=1))
    sq = err * err
    centred = est - est.mean()
    m4 = float(np.mean(centred**4))
    sd_se = math.sqrt(max(m4 - sd**4, 0.0) / m) / (2 * sd) if sd > 0 else 0.0
    return StageMoments(
        k,
        prob,
        bias,
        sd,
        float(sq.mean()),
        rate,
        count,
        bias_se=sd / math.sqrt(m),
        sd_se=sd_se,
        mse_se=float(sq.std(ddof=1)) / math.sqrt(m),
    )


def _aggregate(config: SimConfig, stop: np.ndarray) -> SimResult:
    design = config.design
    K = design.K
    stop_counts = np.bincount(stop - 1, minlength=K)
    reject = stop_counts.copy()
    reject[K - 1] = 0
    return SimResult(
        theta=float(config.theta),
        reps=config.reps,
        seed_echo=config.master_seed,
        stop_stage_counts=stop_counts,
        rejection_by_stage=reject,
        mean_N=float(np.dot(stop_counts, design.cum_n)) / config.reps,
        design=design,
    )


def run_oc(config: SimConfig, workers: int | None = None) -> SimResult:
    """Operating characteristics from ``config.reps`` simulated trials."""
    design = config.design
    normals = replicate_normals(config.master_seed, config.reps, design.K, workers)
    stop, means, z = paths_from_normals(design, config.theta, normals)
    res = _aggregate(config, stop)
    last = z[:, design.K - 1]
    res.rejection_by_stage[design.K - 1] = int(np.sum((stop == design.K) & (last > design.c[-1])))
    if "estimators" in config.collect or "paths" in config.collect:
        res.estimator_samples = _estimators(design, stop, means, z, "estimators" in config.collect)
    return res


def _estimators(design: Design, stop, means, z, conditional: bool) -> dict:
    reps = stop.size
    cum = design.cum_n
    idx = np.arange(reps)
    theta_hat = z[idx, stop - 1] / np.sqrt(cum[stop - 1])
    out = {"stop_stage": stop, "theta_hat": theta_hat, "cumulative_z": z, "stage_means": means}
    if not conditional:
        return out
    est = np.full(reps, np.nan)
    div = np.zeros(reps, dtype=bool)
    for k in range(1, design.K + 1):
        at_k = stop == k
        if not at_k.any():
            continue
        if _closed_form(design, k):
            est[at_k], div[at_k] = conditional_mle_array(design, k, theta_hat[at_k])
        else:
            for i in np.nonzero(at_k)[0]:
                r = mle_conditional(TrialOutcome(design, k, tuple(means[i, :k])))
                est[i], div[i] = r.estimate, r.diverged
    out["theta_hat_c"] = est
    out["diverged"] = div
    return out


def run_estimator_study(config: SimConfig, workers: int | None = None) -> SimResult:
    """``run_oc`` plus unconditional and conditional MLEs for every replicate."""
    collect = frozenset(config.collect | {"estimators"})
    cfg = SimConfig(config.design, config.theta, config.reps, config.master_seed, collect)
    return run_oc(cfg, workers)


def histogram_rows(samples: np.ndarray, bins=50, range_=None) -> list[tuple[float, float, int]]:
    """``(bin_left, bin_right, count)`` rows for a histogram of ``samples``."""
    counts, edges = np.histogram(np.asarray(samples, dtype=float), bins=bins, range=range_)
    return [(float(edges[i]), float(edges[i + 1]), int(counts[i])) for i in range(counts.size)]


def oc_rows(design: Design, result: SimResult) -> list[dict]:
    cum = result.reject_prob_cumulative
    return [
        {
            "theta": result.theta,
            "stage": k + 1,
            "reject_prob_stagewise": float(result.reject_prob[k]),
            "reject_prob_cumulative": float(cum[k]),
            "stop_prob": float(result.stop_prob[k]),
            "expected_N": result.mean_N,
        }
        for k in range(design.K)
    ]

"""Tail predictions, rare-event estimators, and the single-atypical-
environment detector.

Predictions are the closed-form asymptotic equivalents of the population
tail: ``n * tail(log m)`` at fixed horizon; ``integrated-tail mass on
(log m, log m + n a] / a`` uniformly in the horizon; ``integrated tail at
log m / a`` for the stationary law (a = -E xi > 0).  They are m -> infinity
statements, so every evaluation is capped at 1.

Estimators are replication Monte Carlo over fixed-size chunks with
addressable substreams (see :mod:`bpre.streams`): a crude hit-fraction
baseline and an importance sampler whose proposal plants one oversized
environment value at a uniformly chosen generation, mixed defensively with
the plain law so every likelihood ratio is bounded.  Aggregation across
chunks is an ordered compensated reduction, making results independent of
the worker count.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import branching, heavytail
from .branching import Trajectory, batch_evolve, burn_in_steps
from .exceptions import BpreError, LawError
from .heavytail import TailLaw, law_spec, parse_law
from .streams import DOMAIN_BRANCH, DOMAIN_ENV, DOMAIN_PROPOSAL, chunk_bounds, substream

__all__ = [
    "TailEstimate",
    "PsaeEstimate",
    "thm1_prediction",
    "finite_horizon_prediction",
    "stationary_prediction",
    "detect_single_big_jump",
    "estimate_tail_crude",
    "estimate_tail_importance",
    "estimate_perpetuity_tail",
    "psae_conditional_prob",
]

DEFAULT_RHO = 0.9
DEFAULT_DELTA = 5.0


# ---------------------------------------------------------------------------
# closed-form predictions
# ---------------------------------------------------------------------------


def _drift(law: TailLaw) -> float:
    a = -heavytail.mean_xi(law)
    if not a > 0:
        raise LawError("prediction requires a subcritical law (E xi < 0)")
    return a


def thm1_prediction(law: TailLaw, n: int, m: float) -> float:
    """Fixed-horizon prediction n * P(xi > log m), capped at 1."""
    if n < 1 or m <= 1:
        raise LawError("need n >= 1 and m > 1")
    return min(1.0, n * float(heavytail.tail(law, math.log(m))))


def finite_horizon_prediction(law: TailLaw, n: int, m: float) -> float:
    """Uniform-in-horizon prediction: integrated-tail mass of (log m,
    log m + n a] over a, capped at 1."""
    if n < 1 or m <= 1:
        raise LawError("need n >= 1 and m > 1")
    a = _drift(law)
    lm = math.log(m)
    return min(1.0, heavytail.integrated_tail_interval(law, lm, lm + n * a) / a)


def stationary_prediction(law: TailLaw, m: float) -> float:
    """Stationary prediction: integrated tail at log m over a, capped at 1."""
    if m <= 1:
        raise LawError("need m > 1")
    a = _drift(law)
    return min(1.0, heavytail.integrated_tail(law, math.log(m)) / a)


# ---------------------------------------------------------------------------
# single-atypical-environment detector
# ---------------------------------------------------------------------------


def detect_single_big_jump(
    traj: Trajectory, m: float, c: float, eps: float, mean: float | None = None
):
    """Smallest index k whose single-atypical-environment event holds, else
    None: population at k at most c, xi_k above log m + (a + eps)(n - k), and
    every suffix window after k inside the LLN corridor
    |S_{j,n-1} - (n-j) E xi| <= c + eps (n-j).
    """
    if not c > 1 or not eps > 0:
        raise ValueError("need c > 1 and eps > 0")
    if mean is None:
        if traj.env.law is None:
            raise LawError("no law attached to the trajectory; pass mean explicitly")
        mean = heavytail.mean_xi(traj.env.law)
    xs = traj.env.xs
    n = xs.size
    a = -mean
    lm = math.log(m)
    suffix = np.concatenate([np.cumsum(xs[::-1])[::-1], [0.0]])  # S_{j,n-1}, j=0..n
    lens = n - np.arange(n + 1)
    corridor = np.abs(suffix - lens * mean) <= c + eps * lens
    ok_after = True
    corridor_suffix = np.empty(n, dtype=bool)  # all windows j in [k+1, n-1] ok
    for k in range(n - 1, -1, -1):
        corridor_suffix[k] = ok_after
        ok_after = ok_after and bool(corridor[k])
    for k in range(n):
        if (
            traj.zs[k] <= c
            and xs[k] > lm + (a + eps) * (n - k)
            and corridor_suffix[k]
        ):
            return k
    return None


def _detect_batch(xs, log_hist, mean: float, m: float, c: float, eps: float):
    """Vectorized detector over a chunk: xs (B, n), log_hist (n+1, B) log
    populations.  Returns a boolean hit per replication."""
    B, n = xs.shape
    a = -mean
    lm = math.log(m)
    suffix = np.cumsum(xs[:, ::-1], axis=1)[:, ::-1]  # S_{j,n-1}
    lens = (n - np.arange(n))[None, :]
    corridor = np.abs(suffix - lens * mean) <= c + eps * lens
    corridor_suffix = np.empty((B, n), dtype=bool)
    acc = np.ones(B, dtype=bool)
    for k in range(n - 1, -1, -1):
        corridor_suffix[:, k] = acc
        acc &= corridor[:, k]
    jump = xs > (lm + (a + eps) * (n - np.arange(n)))[None, :]
    zsmall = log_hist[:n].T <= np.log(c)
    return (jump & zsmall & corridor_suffix).any(axis=1)


# ---------------------------------------------------------------------------
# estimates
# ---------------------------------------------------------------------------


@dataclass
class TailEstimate:
    """A tail-probability estimate together with the asymptotic prediction
    it targets."""

    value: float
    std_error: float
    reps: int
    method: str  # crude | importance | exact-quadrature
    prediction: float
    prediction_kind: str  # thm1 | finite-horizon | stationary | perp-finite | perp-stationary
    law: str = ""
    n: int | None = None
    m: float = math.nan
    mode: str = ""
    seed: int | None = None
    weight_mean: float = math.nan

    def to_dict(self) -> dict:
        return {
            "law": self.law,
            "n": "stationary" if self.n is None else self.n,
            "m": self.m,
            "mode": self.mode,
            "method": self.method,
            "value": self.value,
            "se": self.std_error,
            "reps": self.reps,
            "prediction": self.prediction,
            "prediction_kind": self.prediction_kind,
            "seed": self.seed,
        }


@dataclass
class PsaeEstimate:
    """Conditional probability of the single-atypical-environment union given
    a large population, with a normal-approximation CI on the ratio."""

    value: float
    ci_low: float
    ci_high: float
    std_error: float
    reps: int
    denominator: float  # estimated P(Z_n > m)


def _proposal_thresholds(law: TailLaw, n: int, m: float, delta: float):
    a = _drift(law)
    lm = math.log(m)
    t = lm + a * (n - 1 - np.arange(n)) - delta
    ft = np.asarray(law.tail(t), dtype=float)
    if np.any(ft <= 0.0):
        raise LawError("degenerate proposal: the law has no mass above a threshold")
    return t, ft


def _sample_proposal(law, n, size, rng, t, ft, rho):
    """Environment matrix from the defensive single-jump mixture plus the
    exact likelihood weights (target density over proposal density)."""
    xs = np.asarray(law.quantile(rng.uniform(size=(size, n))), dtype=float)
    pick = rng.uniform(size=size) < rho
    ks = rng.integers(0, n, size=size)
    u = rng.uniform(size=size)
    jump = np.asarray(law.quantile(1.0 - u * ft[ks]), dtype=float)
    rows = np.where(pick)[0]
    xs[rows, ks[rows]] = jump[rows]
    ratio_sum = ((xs > t[None, :]) / ft[None, :]).sum(axis=1)
    w = 1.0 / ((1.0 - rho) + (rho / n) * ratio_sum)
    return xs, w


def _combine(partials, keys):
    return {k: math.fsum(p[k] for p in partials) for k in keys}


def _run_chunks(task: dict, reps: int, workers: int):
    jobs = [dict(task, chunk=c, size=s) for c, s in chunk_bounds(reps)]
    if workers <= 1:
        return [_chunk_worker(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(_chunk_worker, jobs))


def _chunk_worker(job: dict) -> dict:
    law = parse_law(job["law"])
    kind = job["kind"]
    n, m, seed = job["n"], job["m"], job["seed"]
    c_idx, size = job["chunk"], job["size"]
    if kind == "crude":
        env_rng = substream(seed, DOMAIN_ENV, c_idx)
        xs = np.asarray(law.quantile(env_rng.uniform(size=(size, n))), dtype=float)
        w = np.ones(size)
    else:
        prop_rng = substream(seed, DOMAIN_PROPOSAL, c_idx)
        t = np.asarray(job["t"])
        ft = np.asarray(job["ft"])
        xs, w = _sample_proposal(law, n, size, prop_rng, t, ft, job["rho"])

    if job["target"] == "perpetuity":
        suffix = np.cumsum(xs[:, ::-1], axis=1)[:, ::-1]
        hi = suffix.max(axis=1)
        logperp = hi + np.log(np.exp(suffix - hi[:, None]).sum(axis=1))
        hit = logperp > math.log(m)
        det = None
    else:
        br_rng = substream(seed, DOMAIN_BRANCH, c_idx)
        keep = job.get("detect") is not None
        out = batch_evolve(xs, job["mode"], br_rng, keep_history=keep)
        state, hist = out if keep else (out, None)
        hit = state.exceeds(m)
        det = None
        if keep:
            d = job["detect"]
            det = _detect_batch(xs, hist, job["mean"], m, d["c"], d["eps"])

    x = w * hit
    part = {
        "sum_x": float(np.sum(x)),
        "sum_x2": float(np.sum(x * x)),
        "sum_w": float(np.sum(w)),
        "count": float(size),
    }
    if det is not None:
        y = x * det
        part.update(
            {
                "sum_y": float(np.sum(y)),
                "sum_y2": float(np.sum(y * y)),
                "sum_xy": float(np.sum(x * y)),
            }
        )
    return part


def estimate_tail_crude(
    law: TailLaw,
    n: int,
    m: float,
    mode: str,
    reps: int,
    seed: int,
    workers: int = 1,
) -> TailEstimate:
    """Plain replication estimate of P(Z_n > m): hit fraction with binomial
    standard error."""
    if reps < 1:
        raise ValueError("reps must be >= 1")
    task = {
        "kind": "crude",
        "target": "population",
        "law": law_spec(law),
        "n": int(n),
        "m": float(m),
        "mode": mode,
        "seed": int(seed),
    }
    tot = _combine(_run_chunks(task, reps, workers), ["sum_x", "count"])
    p = tot["sum_x"] / tot["count"]
    se = math.sqrt(max(p * (1.0 - p), 0.0) / tot["count"])
    return TailEstimate(
        value=p,
        std_error=se,
        reps=reps,
        method="crude",
        prediction=finite_horizon_prediction(law, n, m),
        prediction_kind="finite-horizon",
        law=law_spec(law),
        n=n,
        m=m,
        mode=mode,
        seed=seed,
        weight_mean=1.0,
    )


def _importance_estimate(task, law, reps, workers):
    tot = _combine(
        _run_chunks(task, reps, workers), ["sum_x", "sum_x2", "sum_w", "count"]
    )
    N = tot["count"]
    mean = tot["sum_x"] / N
    var = max(tot["sum_x2"] / N - mean * mean, 0.0)
    se = math.sqrt(var / N)
    return mean, se, tot["sum_w"] / N


def estimate_tail_importance(
    law: TailLaw,
    n: int,
    m: float,
    mode: str,
    reps: int,
    seed: int,
    rho: float = DEFAULT_RHO,
    delta: float = DEFAULT_DELTA,
    workers: int = 1,
) -> TailEstimate:
    """Unbiased importance-sampling estimate of P(Z_n > m).

    With probability rho the proposal redraws one uniformly chosen
    environment entry from the law conditioned above
    t(k) = log m + a (n-1-k) - delta (inverse-CDF tail sampling); otherwise
    the whole path is drawn from the law.  Replications carry the exact
    mixture likelihood ratio, which is bounded by 1/(1-rho).
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    t, ft = _proposal_thresholds(law, n, m, delta)
    task = {
        "kind": "importance",
        "target": "population",
        "law": law_spec(law),
        "n": int(n),
        "m": float(m),
        "mode": mode,
        "seed": int(seed),
        "rho": float(rho),
        "delta": float(delta),
        "t": t.tolist(),
        "ft": ft.tolist(),
    }
    mean, se, wmean = _importance_estimate(task, law, reps, workers)
    return TailEstimate(
        value=mean,
        std_error=se,
        reps=reps,
        method="importance",
        prediction=finite_horizon_prediction(law, n, m),
        prediction_kind="finite-horizon",
        law=law_spec(law),
        n=n,
        m=m,
        mode=mode,
        seed=seed,
        weight_mean=wmean,
    )


def estimate_perpetuity_tail(
    law: TailLaw,
    n: int | None,
    m: float,
    reps: int,
    seed: int,
    rho: float = DEFAULT_RHO,
    delta: float = DEFAULT_DELTA,
    workers: int = 1,
) -> TailEstimate:
    """Importance estimate of P(conditional-mean perpetuity > m) over the
    environment alone (no branching noise).  ``n=None`` targets the
    stationary law through the burn-in horizon."""
    if reps < 1:
        raise ValueError("reps must be >= 1")
    horizon = burn_in_steps(law, m) if n is None else int(n)
    t, ft = _proposal_thresholds(law, horizon, m, delta)
    task = {
        "kind": "importance",
        "target": "perpetuity",
        "law": law_spec(law),
        "n": horizon,
        "m": float(m),
        "seed": int(seed),
        "rho": float(rho),
        "delta": float(delta),
        "t": t.tolist(),
        "ft": ft.tolist(),
    }
    mean, se, wmean = _importance_estimate(task, law, reps, workers)
    if n is None:
        pred, kind = stationary_prediction(law, m), "perp-stationary"
    else:
        pred, kind = finite_horizon_prediction(law, n, m), "perp-finite"
    return TailEstimate(
        value=mean,
        std_error=se,
        reps=reps,
        method="importance",
        prediction=pred,
        prediction_kind=kind,
        law=law_spec(law),
        n=n,
        m=m,
        mode="environment",
        seed=seed,
        weight_mean=wmean,
    )


def psae_conditional_prob(
    law: TailLaw,
    n: int,
    m: float,
    c: float,
    eps: float,
    reps: int,
    seed: int,
    mode: str = "size1",
    rho: float = DEFAULT_RHO,
    delta: float = DEFAULT_DELTA,
    workers: int = 1,
) -> PsaeEstimate:
    """Importance-weighted estimate of P(single-atypical-environment union |
    Z_n > m): ratio of the weighted mass of {detected and Z_n > m} to the
    weighted mass of {Z_n > m}, with a normal-approximation CI."""
    if reps < 1:
        raise ValueError("reps must be >= 1")
    t, ft = _proposal_thresholds(law, n, m, delta)
    task = {
        "kind": "importance",
        "target": "population",
        "law": law_spec(law),
        "n": int(n),
        "m": float(m),
        "mode": mode,
        "seed": int(seed),
        "rho": float(rho),
        "delta": float(delta),
        "t": t.tolist(),
        "ft": ft.tolist(),
        "detect": {"c": float(c), "eps": float(eps)},
        "mean": heavytail.mean_xi(law),
    }
    keys = ["sum_x", "sum_x2", "sum_y", "sum_y2", "sum_xy", "count"]
    tot = _combine(_run_chunks(task, reps, workers), keys)
    N = tot["count"]
    xbar = tot["sum_x"] / N  # weighted mass of {Z_n > m}
    if xbar <= 0.0:
        raise BpreError("no replication hit the target event; cannot condition")
    ybar = tot["sum_y"] / N
    ratio = ybar / xbar
    # var of the residual y - ratio*x via accumulated cross moments
    var_res = (
        tot["sum_y2"] - 2.0 * ratio * tot["sum_xy"] + ratio * ratio * tot["sum_x2"]
    ) / N - (ybar - ratio * xbar) ** 2
    se = math.sqrt(max(var_res, 0.0) / N) / xbar
    return PsaeEstimate(
        value=ratio,
        ci_low=max(0.0, ratio - 1.96 * se),
        ci_high=min(1.0, ratio + 1.96 * se),
        std_error=se,
        reps=reps,
        denominator=xbar,
    )

"""Exact simulation of the population process and closed-form tail oracles.

The population recursion draws, per generation, a sum of r independent
geometric(A) offspring counts: r = Z+1 with one immigrant per generation,
r = max(1, Z) with state-dependent immigration, r = Z without immigration.
The sum is sampled exactly as a negative binomial via its Gamma-Poisson
mixture, which is O(1) per step regardless of r.

Populations are exact integers while that is numerically possible.  Above
``CEILING`` (or when the Poisson mixing rate exceeds it) a step falls back to
deterministic/partly deterministic propagation carried in the log domain and
is flagged in the trajectory; values re-enter exact integer dynamics when
they decay back below the ceiling.  Log-domain values are materialized as
exact (arbitrary-precision) integers so downstream comparisons never
overflow.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from . import heavytail
from .environment import EnvPath, sample_env
from .exceptions import LawError, QuadratureError
from .heavytail import TailLaw

__all__ = [
    "MODES",
    "CEILING",
    "Trajectory",
    "geometric_tail",
    "negbinom_tail",
    "negbinom_pmf",
    "step",
    "simulate",
    "simulate_coupled",
    "exact_tail_Z1",
    "exact_tail_Z2",
    "stationary_sample",
    "burn_in_steps",
    "write_trajectory",
]

MODES = ("size1", "statedep", "noimm")

#: Exact integer dynamics are kept up to this population / Poisson-rate scale;
#: the negative-binomial coefficient of variation is ~1e-6 there.
CEILING = 10**12
_LOG_CEILING = math.log(CEILING)
_LN2 = math.log(2.0)


def _initial_population(mode: str) -> int:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    return 1 if mode == "noimm" else 0


def _offspring_groups(z: int, mode: str) -> int:
    if mode == "size1":
        return z + 1
    if mode == "statedep":
        return max(1, z)
    return z


def int_from_log(log_value: float) -> int:
    """Exact integer nearest to exp(log_value), without float overflow."""
    if log_value < 0.5 * _LN2:
        return 0 if log_value < -0.7 else 1
    if log_value <= 700.0:
        return int(round(math.exp(log_value)))
    shift = int(math.floor(log_value / _LN2)) - 52
    frac = math.exp(log_value - shift * _LN2)  # in [2^52, ~2^53)
    return int(round(frac)) << shift


def log_of_int(v: int) -> float:
    """log(v) for arbitrary-precision positive integers."""
    if v <= 0:
        return -math.inf
    if v.bit_length() <= 53:
        return math.log(v)
    bl = v.bit_length()
    return math.log(v >> (bl - 53)) + (bl - 53) * _LN2


# ---------------------------------------------------------------------------
# geometric / negative-binomial tails
# ---------------------------------------------------------------------------


def geometric_tail(p: float, m: int) -> float:
    """P(B > m) = (1-p)^{m+1} for a geometric count of failures before the
    first success at success probability p; m >= -1."""
    if not 0.0 < p < 1.0:
        raise LawError(f"success probability must lie in (0,1), got {p}")
    if m < -1:
        raise LawError("m must be >= -1")
    return float(np.exp((m + 1) * np.log1p(-p)))


def negbinom_tail(k: int, m: int, p: float) -> float:
    """P(B_1 + ... + B_k > m) for i.i.d. geometric(p) failure counts:
    sum_{j=0}^{k-1} C(m+k, j) p^j (1-p)^{m+k-j}, accumulated from log-space
    terms with compensated summation."""
    if not 0.0 < p < 1.0:
        raise LawError(f"success probability must lie in (0,1), got {p}")
    if k < 1 or m < 0:
        raise LawError("need k >= 1 and m >= 0")
    lp, lq = math.log(p), math.log1p(-p)
    lgmk = math.lgamma(m + k + 1)
    js = np.arange(k)
    terms = np.exp(
        lgmk - special.gammaln(js + 1) - special.gammaln(m + k - js + 1) + js * lp + (m + k - js) * lq
    )
    return min(1.0, math.fsum(terms))


def negbinom_pmf(k: int, j: int, p: float) -> float:
    """P(B_1 + ... + B_k = j) = p^k (1-p)^j C(j+k-1, k-1)."""
    if not 0.0 < p < 1.0:
        raise LawError(f"success probability must lie in (0,1), got {p}")
    if k < 1 or j < 0:
        raise LawError("need k >= 1 and j >= 0")
    return float(
        np.exp(
            k * math.log(p)
            + j * math.log1p(-p)
            + special.gammaln(j + k)
            - special.gammaln(k)
            - special.gammaln(j + 1)
        )
    )


# ---------------------------------------------------------------------------
# single-step and whole-trajectory simulation
# ---------------------------------------------------------------------------


def step(
    z: int, p: float | None, mode: str, rng: np.random.Generator, log_odds: float | None = None
):
    """One generation step from population z at success probability p.

    Returns ``(z_next, approx)``.  Exact negative-binomial sampling (Gamma-
    Poisson) while the group count and the Poisson rate stay below
    ``CEILING``; otherwise deterministic propagation of the conditional mean
    (flagged).  ``log_odds`` = log((1-p)/p) may be passed instead of (or in
    addition to) p, keeping extreme environments exact when p underflows.
    """
    if log_odds is None:
        if p is None or not 0.0 < p < 1.0:
            raise LawError(f"success probability must lie in (0,1), got {p}")
        log_odds = float(np.log1p(-p) - np.log(p))
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    r = _offspring_groups(z, mode)
    if r == 0:
        return 0, False
    if r <= CEILING:
        g = float(rng.standard_gamma(float(r)))
        log_rate = math.log(g) + log_odds if g > 0 else -math.inf
        if log_rate <= _LOG_CEILING:
            return int(rng.poisson(math.exp(log_rate))), False
        # Poisson CV below 1e-6 here: keep the exact Gamma factor, replace
        # the Poisson draw by its mean
        return int_from_log(log_rate), True
    # population beyond exact range: propagate the conditional mean r*e^xi
    return int_from_log(log_of_int(r) + log_odds), True


@dataclass
class Trajectory:
    """A realized population path Z_0..Z_n with its environment.

    ``approx[k]`` is True where the value Z_k was produced by the
    deterministic-propagation fallback rather than an exact draw.
    """

    env: EnvPath
    zs: list = field(default_factory=list)
    mode: str = "size1"
    approx: list = field(default_factory=list)

    def __len__(self):
        return len(self.zs) - 1


def simulate(law: TailLaw, n: int, mode: str, rng: np.random.Generator) -> Trajectory:
    """Sample an environment, then fold the step recursion; deterministic
    given the generator state."""
    env = sample_env(law, n, rng)
    z = _initial_population(mode)
    zs = [z]
    approx = [False]
    for k in range(n):
        z, ap = step(z, float(env.a[k]), mode, rng, log_odds=float(env.xs[k]))
        zs.append(z)
        approx.append(ap)
    return Trajectory(env=env, zs=zs, mode=mode, approx=approx)


def simulate_coupled(law: TailLaw, n: int, rng: np.random.Generator):
    """One environment, two coupled trajectories: with one immigrant per
    generation and with state-dependent immigration.

    The group counts satisfy max(1, Zhat) <= Z + 1 whenever Zhat <= Z, so the
    Gamma and Poisson draws are coupled by superposition (shape and rate
    additivity), which makes the state-dependent path dominate pointwise.
    Returns ``(size1_trajectory, statedep_trajectory)``.
    """
    env = sample_env(law, n, rng)
    z1, z2 = _initial_population("size1"), _initial_population("statedep")
    t1 = Trajectory(env=env, zs=[z1], mode="size1", approx=[False])
    t2 = Trajectory(env=env, zs=[z2], mode="statedep", approx=[False])
    for k in range(n):
        x = float(env.xs[k])
        r1 = _offspring_groups(z1, "size1")
        r2 = _offspring_groups(z2, "statedep")
        assert r2 <= r1
        g2 = float(rng.standard_gamma(float(r2)))
        g1 = g2 + (float(rng.standard_gamma(float(r1 - r2))) if r1 > r2 else 0.0)
        if r1 > CEILING or (g1 > 0 and math.log(g1) + x > _LOG_CEILING):
            # monotone deterministic fallback for both lanes
            z1 = int_from_log(log_of_int(r1) + x)
            z2 = int_from_log(log_of_int(r2) + x) if r2 > 0 else 0
            a1 = a2 = True
        else:
            lam2 = g2 * math.exp(x)
            lam1 = g1 * math.exp(x)
            p2 = int(rng.poisson(lam2))
            p1 = p2 + int(rng.poisson(lam1 - lam2))
            z1, z2 = p1, p2
            a1 = a2 = False
        t1.zs.append(z1), t1.approx.append(a1)
        t2.zs.append(z2), t2.approx.append(a2)
    return t1, t2


# ---------------------------------------------------------------------------
# exact small-horizon tails
# ---------------------------------------------------------------------------


def exact_tail_Z1(law: TailLaw, m: int) -> float:
    """P(Z_1 > m) = E[(1-A)^{m+1}], by quadrature over the law of xi."""
    if m < 0:
        raise LawError("m must be >= 0")
    return heavytail.expected_one_minus_A_pow(law, m + 1)


def _tk_khi(m: int, a1: float, eps: float, cap: int) -> int:
    """Smallest k with P(NB(k+1, a1) <= m) <= eps (complement regularized
    incomplete beta), by doubling and bisection."""
    if special.betainc(1, m + 1, a1) <= eps:
        return 0
    lo, hi = 0, 64
    while special.betainc(hi + 1, m + 1, a1) > eps:
        lo, hi = hi, hi * 2
        if hi > cap:
            raise QuadratureError("truncation bound not attainable within iteration cap")
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if special.betainc(mid + 1, m + 1, a1) > eps:
            lo = mid
        else:
            hi = mid
    return hi


def _tk_klo(m: int, a1: float, eps: float, cap: int) -> int:
    """Largest k with P(NB(k+1, a1) > m) <= eps, or -1 if none."""
    if special.betainc(m + 1, 1, 1.0 - a1) > eps:
        return -1
    lo, hi = 0, 64
    while special.betainc(m + 1, hi + 1, 1.0 - a1) <= eps:
        lo, hi = hi, hi * 2
        if hi > cap:
            return lo
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if special.betainc(m + 1, mid + 1, 1.0 - a1) <= eps:
            lo = mid
        else:
            hi = mid
    return lo


def _z2_knots(law: TailLaw, m: int):
    b = math.log(max(m, 2))
    lo = law.support_min
    ks = sorted({k for k in (2.0, b - 20.0, b - 5.0, b + 5.0, b + 30.0, b + 120.0) if k > lo})
    return [lo] + ks


def exact_tail_Z2(law: TailLaw, m: int, trunc_eps: float = 1e-12):
    """P(Z_2 > m) by double quadrature over (xi_0, xi_1) of the population
    decomposition sum_k A_0 (1-A_0)^k P(B_1+...+B_{k+1} > m | A_1).

    The k-sum is truncated where the negative-binomial tail saturates to 1
    within ``trunc_eps/4`` (the remainder is then an exact geometric sum) and
    where it is still below ``trunc_eps/4`` (discarded); both remainders are
    rigorously bounded.  Returns ``(value, error_bound)`` where the bound
    combines the truncation remainders with the quadrature error estimate.

    Raises :class:`QuadratureError` when the truncation bound cannot be met
    within the iteration cap.
    """
    if m < 0:
        raise LawError("m must be >= 0")
    if trunc_eps <= 0:
        raise LawError("trunc_eps must be > 0")
    eps_lo = trunc_eps / 4.0
    cap = 10**9

    if isinstance(law, heavytail.TwoPoint):
        atoms = [(law.u, law.p), (-law.v, 1.0 - law.p)]
        total = 0.0
        for x0, w0 in atoms:
            for x1, w1 in atoms:
                total += w0 * w1 * _inner_geometric_mix(m, x0, x1, eps_lo, cap)
        return total, 2.0 * eps_lo

    knots = _z2_knots(law, m)
    segs = list(zip(knots[:-1], knots[1:])) + [(knots[-1], np.inf)]
    pdf = law.pdf

    def outer_integrand(x1: float) -> float:
        a1 = float(special.expit(-x1))
        klo = _tk_klo(m, a1, eps_lo, cap)
        khi = _tk_khi(m, a1, eps_lo, cap)
        if khi - klo > 2_000_000:
            raise QuadratureError("truncation bound not attainable within iteration cap")
        kwin = np.arange(klo + 1, khi + 1, dtype=float)
        tw = special.betainc(m + 1, kwin + 1, 1.0 - a1) if kwin.size else np.empty(0)

        def inner_integrand(x0: float) -> float:
            lq0 = float(heavytail.log_failure_prob(x0))
            la0 = float(heavytail.log_success_prob(x0))
            s = float(np.exp(la0 + kwin * lq0) @ tw) if kwin.size else 0.0
            s += math.exp((khi + 1) * lq0)  # tail where the NB tail is 1
            return s * float(pdf(x0))

        acc = 0.0
        for lo0, hi0 in segs:
            v, _ = integrate.quad(inner_integrand, lo0, hi0, limit=100, epsabs=1e-13, epsrel=1e-8)
            acc += v
        return acc * float(pdf(x1))

    total = 0.0
    quad_err = 0.0
    for lo1, hi1 in segs:
        v, e = integrate.quad(outer_integrand, lo1, hi1, limit=60, epsabs=1e-13, epsrel=1e-7)
        total += v
        quad_err += e
    return min(1.0, total), 2.0 * eps_lo + quad_err


def _inner_geometric_mix(m: int, x0: float, x1: float, eps_lo: float, cap: int) -> float:
    """sum_k A_0 (1-A_0)^k P(NB(k+1, A_1) > m) at fixed (xi_0, xi_1)."""
    a1 = float(special.expit(-x1))
    klo = _tk_klo(m, a1, eps_lo, cap)
    khi = _tk_khi(m, a1, eps_lo, cap)
    if khi - klo > 2_000_000:
        raise QuadratureError("truncation bound not attainable within iteration cap")
    kwin = np.arange(klo + 1, khi + 1, dtype=float)
    tw = special.betainc(m + 1, kwin + 1, 1.0 - a1) if kwin.size else np.empty(0)
    lq0 = float(heavytail.log_failure_prob(x0))
    la0 = float(heavytail.log_success_prob(x0))
    s = float(np.exp(la0 + kwin * lq0) @ tw) if kwin.size else 0.0
    return s + math.exp((khi + 1) * lq0)


# ---------------------------------------------------------------------------
# stationary draws
# ---------------------------------------------------------------------------


def burn_in_steps(law: TailLaw, m_max: float) -> int:
    """Burn-in horizon ceil(4 (log m_max + 20)/a): long enough that the
    finite-horizon tail prediction at m <= m_max is within ~1e-8 relative of
    the stationary one for the shipped families."""
    a = -heavytail.mean_xi(law)
    if not a > 0:
        raise LawError("stationary regime requires a subcritical law (E xi < 0)")
    return math.ceil(4.0 * (math.log(m_max) + 20.0) / a)


def stationary_sample(law: TailLaw, m_max: float, rng: np.random.Generator):
    """One draw approximately from the stationary population law, by burn-in
    from zero over ``burn_in_steps(law, m_max)`` generations with one
    immigrant per generation.  Returns ``(value, approx_used)``."""
    n = burn_in_steps(law, m_max)
    traj = simulate(law, n, "size1", rng)
    return traj.zs[-1], bool(any(traj.approx))


# ---------------------------------------------------------------------------
# vectorized batch engine (used by the estimators)
# ---------------------------------------------------------------------------


class BatchState:
    """Population state for a chunk of replications: exact int64 lane plus a
    log-domain lane for values beyond the ceiling."""

    __slots__ = ("z", "logz", "esc", "approx")

    def __init__(self, size: int, mode: str):
        z0 = _initial_population(mode)
        self.z = np.full(size, z0, dtype=np.int64)
        self.logz = np.full(size, -np.inf)
        self.esc = np.zeros(size, dtype=bool)
        self.approx = np.zeros(size, dtype=bool)

    def log_value(self):
        """log Z on both lanes (-inf at zero), exact for the integer lane."""
        with np.errstate(divide="ignore"):
            lv = np.where(self.z > 0, np.log(np.maximum(self.z, 1)), -np.inf)
        return np.where(self.esc, self.logz, lv)

    def exceeds(self, m: float):
        """Elementwise Z > m, lane-aware (valid for any m, above or below the
        ceiling)."""
        return np.where(self.esc, self.logz > math.log(m), self.z > m)


def batch_step(state: BatchState, xs_k: np.ndarray, mode: str, rng: np.random.Generator) -> None:
    """Advance every replication one generation under environment column
    ``xs_k``.  The rng call pattern is fixed (one Gamma and one Poisson call
    per step) so a chunk's draws depend only on its substream."""
    z, logz, esc = state.z, state.logz, state.esc
    if mode == "size1":
        r = z + 1
        log_r_esc = np.logaddexp(logz, 0.0)
    elif mode == "statedep":
        r = np.maximum(z, 1)
        log_r_esc = logz
    else:
        r = z
        log_r_esc = logz

    shape = np.where(esc, 1.0, r.astype(float))
    g = rng.standard_gamma(np.maximum(shape, 0.0))
    with np.errstate(divide="ignore"):
        log_rate = np.where(g > 0, np.log(np.maximum(g, 1e-310)), -np.inf) + xs_k

    int_lane = ~esc
    small_r = int_lane & (r <= CEILING)
    easy = small_r & (log_rate <= _LOG_CEILING)
    lam = np.where(easy, np.exp(np.minimum(log_rate, _LOG_CEILING)), 0.0)
    drawn = rng.poisson(lam)

    # int-lane fallbacks: huge Poisson rate (keep Gamma, mean out the Poisson)
    # or group count beyond the ceiling (fully deterministic propagation)
    hard_rate = small_r & ~easy
    hard_r = int_lane & (r > CEILING)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_det = np.where(r > 0, np.log(np.maximum(r, 1)), -np.inf) + xs_k
    new_log = np.where(hard_rate, log_rate, np.where(hard_r, log_det, logz))
    new_log = np.where(esc, log_r_esc + xs_k, new_log)

    new_esc = esc | hard_rate | hard_r
    state.approx |= hard_rate | hard_r | esc

    z_new = np.where(easy, drawn, z)
    # log-lane values that decayed back below the ceiling re-enter the int lane
    back = new_esc & (new_log <= _LOG_CEILING)
    z_new = np.where(back, np.round(np.exp(np.where(back, new_log, 0.0))).astype(np.int64), z_new)
    new_esc = new_esc & ~back

    state.z = z_new
    state.logz = np.where(new_esc, new_log, -np.inf)
    state.esc = new_esc


def batch_evolve(
    xs: np.ndarray,
    mode: str,
    rng: np.random.Generator,
    keep_history: bool = False,
):
    """Evolve a chunk through environment matrix ``xs`` of shape (B, n).

    Returns the final :class:`BatchState`; with ``keep_history`` also an
    (n+1, B) float array of log populations (exact in log for the int lane,
    -inf at zero), needed by the single-big-jump detector.
    """
    B, n = xs.shape
    state = BatchState(B, mode)
    hist = None
    if keep_history:
        hist = np.empty((n + 1, B))
        hist[0] = state.log_value()
    for k in range(n):
        batch_step(state, xs[:, k], mode, rng)
        if keep_history:
            hist[k + 1] = state.log_value()
    return (state, hist) if keep_history else state


# ---------------------------------------------------------------------------
# trajectory CSV
# ---------------------------------------------------------------------------


def write_trajectory(traj: Trajectory, f) -> None:
    """CSV with header ``# bpre-traj v1 mode=<mode>`` and columns
    step,xi,A,Z,approx; the step-0 row has empty environment fields."""
    f.write(f"# bpre-traj v1 mode={traj.mode}\n")
    f.write("step,xi,A,Z,approx\n")
    f.write(f"0,,,{traj.zs[0]},0\n")
    a = traj.env.a
    for k in range(1, len(traj.zs)):
        f.write(
            f"{k},{float(traj.env.xs[k-1])!r},{float(a[k-1])!r},{traj.zs[k]},{int(traj.approx[k])}\n"
        )

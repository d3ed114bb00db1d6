"""Nearest-neighbour random walk on the integers in a random environment.

At site i the walk steps right with probability A_i and left with 1 - A_i,
with (A_i) i.i.d. from the environment law.  Reported per walk: the first
hitting time of level n, the per-site downcrossing counts, and the visited
range.  The hitting time satisfies T_n = n + 2 * sum_i U_i exactly on every
path.

Two implementations are provided.  ``simulate_walk`` builds the outcome from
the walk's per-site visit structure: reading site i's move coins in visit
order, the number of downcrossings at i is a negative-binomial count with
group parameter equal to the number of upcrossings from i, which is
U_{i+1} + 1 for 0 <= i < n and U_{i+1} for i < 0.  That construction costs
O(visited sites) regardless of T_n, which is unavoidable here: T_n has a
log-scale heavy tail, so step-by-step simulation has unbounded expected
cost.  ``simulate_walk_stepwise`` is the literal stepper, kept as a
reference for cross-validation at small n.

Both draw the environment from per-site substreams keyed by
(seed, site index), so the environment is a deterministic function of the
seed, independent of visit order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import branching
from .exceptions import StepCapExceededError
from .heavytail import TailLaw
from .streams import DOMAIN_COINS, DOMAIN_SITE_ENV, fold_site

__all__ = [
    "WalkOutcome",
    "simulate_walk",
    "simulate_walk_stepwise",
    "verify_hitting_identity",
    "sample_U_positive_sum",
    "ks_two_sample",
    "write_outcomes",
]

DEFAULT_STEP_CAP = 10**9


@dataclass
class WalkOutcome:
    """Summary of one walk run to its target level.

    ``u`` holds only the nonzero downcrossing counts; ``approx`` is True when
    any count came from the large-population fallback of the negative-
    binomial sampler rather than an exact draw.
    """

    n_target: int
    t_n: int
    u: dict = field(default_factory=dict)
    min_site: int = 0
    approx: bool = False

    @property
    def sites_visited(self):
        return (self.min_site, self.n_target)

    def sum_u(self) -> int:
        return sum(self.u.values())

    def sum_u_positive(self) -> int:
        return sum(v for i, v in self.u.items() if i >= 1)

    def sum_u_nonpositive(self) -> int:
        return sum(v for i, v in self.u.items() if i <= 0)


def substream_seeded(seed, *key):
    """Substream keyed under a seed that may itself be an (entropy) tuple."""
    ss = np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def _site_env(law: TailLaw, seed, site: int) -> float:
    rng = substream_seeded(seed, DOMAIN_SITE_ENV, fold_site(site))
    return float(law.quantile(rng.uniform()))


def simulate_walk(law: TailLaw, n: int, seed, step_cap: int | None = DEFAULT_STEP_CAP) -> WalkOutcome:
    """Walk from 0 to first hitting of level n >= 1; exact in law.

    ``seed`` may be an int or a tuple of ints (e.g. ``(master, walk_index)``).
    Sites are consulted lazily, right to left from n-1 and then down through
    the visited negative sites.  Aborts with :class:`StepCapExceededError`
    once the accumulated number of transitions exceeds ``step_cap`` (pass
    ``None`` for no cap).
    """
    if n < 1:
        raise ValueError("target level n must be >= 1")
    cap = math.inf if step_cap is None else int(step_cap)
    u: dict[int, int] = {}
    t = 0
    approx = False
    u_right = 0  # U_{i+1} while scanning site i
    min_site = 0

    site = n - 1
    while True:
        upcross = u_right + 1 if site >= 0 else u_right
        if upcross == 0:
            min_site = site + 1
            break
        xi = _site_env(law, seed, site)
        coins = substream_seeded(seed, DOMAIN_COINS, fold_site(site))
        # downcrossings at this site: failures before the upcross-th success
        down, ap = branching.step(upcross, None, "noimm", coins, log_odds=xi)
        approx = approx or ap
        if down > 0:
            u[site] = down
        t += upcross + down
        if t > cap:
            raise StepCapExceededError(
                f"walk exceeded step cap {cap} before hitting {n}", steps_done=t
            )
        u_right = down
        site -= 1

    return WalkOutcome(n_target=n, t_n=t, u=u, min_site=min_site, approx=approx)


def simulate_walk_stepwise(
    law: TailLaw, n: int, seed, step_cap: int | None = 10**6
) -> WalkOutcome:
    """Literal step-by-step walk; reference implementation for small n.

    Uses the same per-site environment substreams as :func:`simulate_walk`
    (site coins are consumed per visit, so the two implementations agree in
    law, not pathwise).
    """
    if n < 1:
        raise ValueError("target level n must be >= 1")
    cap = math.inf if step_cap is None else int(step_cap)
    env: dict[int, float] = {}
    coin_rngs: dict[int, np.random.Generator] = {}
    u: dict[int, int] = {}
    pos = 0
    t = 0
    min_site = 0
    while pos != n:
        if pos not in env:
            env[pos] = _site_env(law, seed, pos)
            coin_rngs[pos] = substream_seeded(seed, DOMAIN_COINS, fold_site(pos))
        a = 1.0 / (1.0 + math.exp(env[pos]))
        if coin_rngs[pos].uniform() < a:
            pos += 1
        else:
            u[pos] = u.get(pos, 0) + 1
            pos -= 1
            min_site = min(min_site, pos)
        t += 1
        if t > cap:
            raise StepCapExceededError(
                f"walk exceeded step cap {cap} before hitting {n}", steps_done=t
            )
    return WalkOutcome(n_target=n, t_n=t, u={i: c for i, c in u.items() if c}, min_site=min_site)


def verify_hitting_identity(outcome: WalkOutcome) -> bool:
    """Exact pathwise identity T_n = n + 2 sum_i U_i; never False for a
    correctly simulated walk."""
    return outcome.t_n == outcome.n_target + 2 * outcome.sum_u()


def sample_U_positive_sum(law: TailLaw, n: int, seed, step_cap: int | None = DEFAULT_STEP_CAP) -> int:
    """sum_{i=1}^{n} U_i from one walk."""
    return simulate_walk(law, n, seed, step_cap=step_cap).sum_u_positive()


# ---------------------------------------------------------------------------
# two-sample Kolmogorov-Smirnov test
# ---------------------------------------------------------------------------


def _kolmogorov_sf(lam: float) -> float:
    """Asymptotic Kolmogorov survival function Q(lam) = 2 sum (-1)^{j-1} e^{-2 j^2 lam^2}."""
    if lam <= 0:
        return 1.0
    total = 0.0
    for j in range(1, 101):
        term = 2.0 * (-1.0) ** (j - 1) * math.exp(-2.0 * j * j * lam * lam)
        total += term
        if abs(term) < 1e-16:
            break
    return min(1.0, max(0.0, total))


def ks_two_sample(a, b):
    """Two-sample KS statistic (sup distance of the empirical CDFs) and its
    asymptotic-series p-value."""
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    n1, n2 = a.size, b.size
    if n1 == 0 or n2 == 0:
        raise ValueError("both samples must be nonempty")
    grid = np.concatenate([a, b])
    cdf1 = np.searchsorted(a, grid, side="right") / n1
    cdf2 = np.searchsorted(b, grid, side="right") / n2
    d = float(np.max(np.abs(cdf1 - cdf2)))
    en = math.sqrt(n1 * n2 / (n1 + n2))
    return d, _kolmogorov_sf((en + 0.12 + 0.11 / en) * d)


def write_outcomes(outcomes, f) -> None:
    """CSV rows ``n, T_n, sum_U_pos, sum_U_nonpos, min_site``."""
    f.write("n,T_n,sum_U_pos,sum_U_nonpos,min_site\n")
    for w in outcomes:
        f.write(
            f"{w.n_target},{w.t_n},{w.sum_u_positive()},{w.sum_u_nonpositive()},{w.min_site}\n"
        )

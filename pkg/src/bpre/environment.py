"""Environment realizations: sampled paths of xi, their partial sums,
law-of-large-numbers corridor events, and the conditional-mean perpetuity.

An :class:`EnvPath` holds one realization ``xi_0..xi_{n-1}``; prefix sums are
cached at construction so every window sum is O(1).  The perpetuity value
``sum_k exp(S_{k,n-1})`` equals the conditional mean of the generation-n
population given the environment, and is kept in the log domain because it
reaches scales far beyond floating range.
"""
from __future__ import annotations

import io
import math

import numpy as np

from . import heavytail
from .exceptions import LawError
from .heavytail import TailLaw, law_spec, parse_law, success_prob


class EnvPath:
    """A realized environment: xi values, derived success probabilities,
    and O(1) window sums via a cached prefix-sum array."""

    def __init__(self, xs, law: TailLaw | None = None, seed: int | None = None):
        self.xs = np.asarray(xs, dtype=float).reshape(-1)
        self.law = law
        self.seed = seed
        self._prefix = np.concatenate(([0.0], np.cumsum(self.xs)))

    def __len__(self):
        return self.xs.size

    @property
    def a(self):
        """Success probabilities A_k = 1/(1 + e^{xi_k}), in (0,1)."""
        return success_prob(self.xs)

    def partial_sum(self, j: int, k: int) -> float:
        """S_{j,k} = xi_j + ... + xi_k (inclusive), 0 <= j <= k < n."""
        n = len(self)
        if not (0 <= j <= k < n):
            raise IndexError(f"window ({j},{k}) out of range for n={n}")
        return float(self._prefix[k + 1] - self._prefix[j])

    def __repr__(self):
        return f"EnvPath(n={len(self)}, law={None if self.law is None else law_spec(self.law)})"


def sample_env(law: TailLaw, n: int, rng: np.random.Generator) -> EnvPath:
    """n i.i.d. draws of xi by inverse-CDF sampling; deterministic given rng state."""
    if n < 0:
        raise ValueError("n must be >= 0")
    if n == 0:
        return EnvPath(np.empty(0), law=law)
    u = rng.uniform(size=n)
    return EnvPath(np.asarray(law.quantile(u), dtype=float), law=law)


def partial_sum(env: EnvPath, j: int, k: int) -> float:
    """S_{j,k} from the prefix-sum cache."""
    return env.partial_sum(j, k)


def lln_corridor_ok(
    env: EnvPath, c: float, eps: float, j: int, k: int, mean: float | None = None
) -> bool:
    """True iff |S_{j,k} - (k-j+1) E xi| <= c + eps (k-j+1) for the window.

    ``mean`` overrides E xi; otherwise it is taken from the path's law.
    """
    if c <= 0 or eps <= 0:
        raise ValueError("corridor needs c > 0 and eps > 0")
    if mean is None:
        if env.law is None:
            raise LawError("no law attached to the path; pass mean explicitly")
        mean = heavytail.mean_xi(env.law)
    length = k - j + 1
    return abs(env.partial_sum(j, k) - length * mean) <= c + eps * length


def perpetuity(env: EnvPath) -> float:
    """log of sum_{k=0}^{n-1} exp(S_{k,n-1}): the log conditional mean of the
    generation-n population given this environment.  -inf for an empty path."""
    n = len(env)
    if n == 0:
        return -math.inf
    # suffix sums S_{k,n-1}, then log-sum-exp
    suffix = env._prefix[n] - env._prefix[:n]
    hi = float(np.max(suffix))
    return hi + math.log(float(np.sum(np.exp(suffix - hi))))


def perpetuity_recursive(env: EnvPath) -> float:
    """Same value through the recursion P_j = e^{xi_{j-1}} (1 + P_{j-1}),
    in the log domain; independent route kept as a cross-check."""
    logp = -math.inf
    for x in env.xs:
        logp = x + np.logaddexp(0.0, logp)
    return float(logp)


# ---------------------------------------------------------------------------
# serialization: one xi per line under a versioned header
# ---------------------------------------------------------------------------

_HEADER_PREFIX = "# bpre-env v1"


def write_env(env: EnvPath, f) -> None:
    """Write ``# bpre-env v1 n=<n> law=<spec> seed=<seed>`` then one xi per line."""
    spec = "none" if env.law is None else law_spec(env.law)
    seed = "none" if env.seed is None else str(env.seed)
    f.write(f"{_HEADER_PREFIX} n={len(env)} law={spec} seed={seed}\n")
    for x in env.xs:
        f.write(f"{float(x)!r}\n")


def read_env(f) -> EnvPath:
    """Inverse of :func:`write_env`."""
    if isinstance(f, str):
        with io.open(f, "r") as fh:
            return read_env(fh)
    header = f.readline().strip()
    if not header.startswith(_HEADER_PREFIX):
        raise ValueError(f"not a bpre-env v1 stream: {header!r}")
    fields = dict(
        part.split("=", 1) for part in header[len(_HEADER_PREFIX):].strip().split(" ") if "=" in part
    )
    n = int(fields["n"])
    law = None if fields.get("law", "none") == "none" else parse_law(fields["law"])
    seed = None if fields.get("seed", "none") == "none" else int(fields["seed"])
    xs = [float(f.readline()) for _ in range(n)]
    return EnvPath(np.asarray(xs), law=law, seed=seed)

"""Heavy-tailed laws for the environment variable and their tail calculus.

The environment of the branching process is a sequence of i.i.d. real
variables ``xi``; each ``xi`` maps to a reproduction success probability
``A = 1/(1 + e^xi)``, so ``e^xi`` is the conditional mean offspring count.
The shifted families (``ParetoShift``, ``WeibullShift``, ``LogNormalShift``)
realise ``xi = W - mu`` with ``W >= 0`` heavy-tailed, which bounds ``A`` away
from 1 by ``1/(1 + e^-mu)``.  ``TwoPoint`` is a light-tailed diagnostic law
kept around because its exponential-moment root is known in closed form.

Besides the distribution calculus (tail, quantile, integrated tail) the
module provides trend diagnostics for the heavy-tail classes (long-tailed,
subexponential, strong subexponential, square-root insensitive) and the
quadrature oracles ``E[(1-A)^m]`` and ``E[A^j (1-A)^m]`` that anchor the
exact small-horizon population-tail computations.

Diagnostics return raw ratio sequences, never verdicts: membership in an
asymptotic class cannot be decided from finitely many probes, so the caller
judges the trend.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .exceptions import KappaUndefinedError, LawError, LawParseError, QuadratureError

__all__ = [
    "ParetoShift",
    "WeibullShift",
    "LogNormalShift",
    "TwoPoint",
    "TailLaw",
    "parse_law",
    "law_spec",
    "tail",
    "cdf",
    "quantile",
    "mean_xi",
    "integrated_tail",
    "integrated_tail_interval",
    "check_long_tailed",
    "check_subexponential",
    "check_strong_subexponential",
    "check_sqrt_insensitive",
    "expected_one_minus_A_pow",
    "expected_Aj_one_minus_A_pow",
    "kesten_kappa",
    "success_prob",
    "log_failure_prob",
    "log_success_prob",
]

_QUAD_RTOL = 1e-8
_QUAD_LIMIT = 200


def success_prob(x):
    """A(xi) = 1/(1+e^xi), the success probability induced by xi."""
    return special.expit(-np.asarray(x, dtype=float))


def log_success_prob(x):
    """log A(xi) = -log(1+e^xi), stable for large |xi|."""
    return -np.logaddexp(0.0, np.asarray(x, dtype=float))


def log_failure_prob(x):
    """log (1-A(xi)) = -log(1+e^-xi), stable for large |xi|."""
    return -np.logaddexp(0.0, -np.asarray(x, dtype=float))


# ---------------------------------------------------------------------------
# law families
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ParetoShift:
    """xi = W - mu with P(W > w) = (x0/w)^alpha for w >= x0 (W >= x0 > 0)."""

    alpha: float
    x0: float
    mu: float

    def __post_init__(self):
        if not (self.alpha > 0 and self.x0 > 0):
            raise LawError(f"pareto needs alpha > 0 and x0 > 0, got {self}")

    has_density = True

    @property
    def support_min(self):
        return self.x0 - self.mu

    def tail(self, x):
        w = np.asarray(x, dtype=float) + self.mu
        safe = np.maximum(w, self.x0)
        return np.where(w <= self.x0, 1.0, (self.x0 / safe) ** self.alpha)

    def log_tail(self, x):
        w = np.asarray(x, dtype=float) + self.mu
        safe = np.maximum(w, self.x0)
        return np.where(w <= self.x0, 0.0, self.alpha * (math.log(self.x0) - np.log(safe)))

    def cdf(self, x):
        return 1.0 - self.tail(x)

    def quantile(self, u):
        u = np.asarray(u, dtype=float)
        return self.x0 * (1.0 - u) ** (-1.0 / self.alpha) - self.mu

    def pdf(self, x):
        w = np.asarray(x, dtype=float) + self.mu
        safe = np.maximum(w, self.x0)
        return np.where(
            w < self.x0, 0.0, self.alpha * self.x0**self.alpha * safe ** (-self.alpha - 1.0)
        )

    def mean_xi(self):
        if self.alpha <= 1.0:
            return math.inf
        return self.alpha * self.x0 / (self.alpha - 1.0) - self.mu

    def tail_integral(self, x):
        """Uncapped integral of the tail over (x, inf); inf when alpha <= 1."""
        if self.alpha <= 1.0:
            return math.inf
        w = float(x) + self.mu
        head = self.x0 / (self.alpha - 1.0)
        if w <= self.x0:
            return (self.x0 - w) + head
        return self.x0**self.alpha * w ** (1.0 - self.alpha) / (self.alpha - 1.0)


@dataclass(frozen=True)
class WeibullShift:
    """xi = W - mu with P(W > w) = exp(-(w/scale)^beta) for w >= 0."""

    beta: float
    scale: float
    mu: float

    def __post_init__(self):
        if not (self.beta > 0 and self.scale > 0):
            raise LawError(f"weibull needs beta > 0 and scale > 0, got {self}")

    has_density = True

    @property
    def support_min(self):
        return -self.mu

    def log_tail(self, x):
        w = np.asarray(x, dtype=float) + self.mu
        return np.where(w <= 0.0, 0.0, -((np.maximum(w, 0.0) / self.scale) ** self.beta))

    def tail(self, x):
        return np.exp(self.log_tail(x))

    def cdf(self, x):
        return 1.0 - self.tail(x)

    def quantile(self, u):
        u = np.asarray(u, dtype=float)
        return self.scale * (-np.log1p(-u)) ** (1.0 / self.beta) - self.mu

    def pdf(self, x):
        w = np.asarray(x, dtype=float) + self.mu
        safe = np.maximum(w, 1e-300)
        return np.where(
            w <= 0.0,
            0.0,
            (self.beta / self.scale)
            * (safe / self.scale) ** (self.beta - 1.0)
            * np.exp(-((safe / self.scale) ** self.beta)),
        )

    def mean_xi(self):
        return self.scale * math.gamma(1.0 + 1.0 / self.beta) - self.mu

    def tail_integral(self, x):
        w = float(x) + self.mu
        mean_w = self.scale * math.gamma(1.0 + 1.0 / self.beta)
        if w <= 0.0:
            return -w + mean_w
        # int_w^inf exp(-(y/s)^b) dy = (s/b) * Gamma(1/b) * Q(1/b, (w/s)^b)
        a = 1.0 / self.beta
        z = (w / self.scale) ** self.beta
        return (self.scale / self.beta) * math.gamma(a) * special.gammaincc(a, z)


@dataclass(frozen=True)
class LogNormalShift:
    """xi = W - mu with log W ~ Normal(mu_log, sigma_log^2)."""

    mu_log: float
    sigma_log: float
    mu: float

    def __post_init__(self):
        if not self.sigma_log > 0:
            raise LawError(f"lognormal needs sigma_log > 0, got {self}")

    has_density = True

    @property
    def support_min(self):
        return -self.mu

    def _z(self, w):
        return (np.log(np.maximum(w, 1e-300)) - self.mu_log) / self.sigma_log

    def tail(self, x):
        w = np.asarray(x, dtype=float) + self.mu
        return np.where(w <= 0.0, 1.0, special.ndtr(-self._z(w)))

    def log_tail(self, x):
        w = np.asarray(x, dtype=float) + self.mu
        return np.where(w <= 0.0, 0.0, special.log_ndtr(-self._z(w)))

    def cdf(self, x):
        return 1.0 - self.tail(x)

    def quantile(self, u):
        u = np.asarray(u, dtype=float)
        return np.exp(self.mu_log + self.sigma_log * special.ndtri(u)) - self.mu

    def pdf(self, x):
        w = np.asarray(x, dtype=float) + self.mu
        safe = np.maximum(w, 1e-300)
        z = self._z(safe)
        dens = np.exp(-0.5 * z * z) / (safe * self.sigma_log * math.sqrt(2.0 * math.pi))
        return np.where(w <= 0.0, 0.0, dens)

    def mean_xi(self):
        return math.exp(self.mu_log + 0.5 * self.sigma_log**2) - self.mu

    def tail_integral(self, x):
        w = float(x) + self.mu
        mean_w = math.exp(self.mu_log + 0.5 * self.sigma_log**2)
        if w <= 0.0:
            return -w + mean_w
        # E[(W - w)+] = E[W] * Phi(-z + sigma) - w * Phi(-z)
        z = (math.log(w) - self.mu_log) / self.sigma_log
        return mean_w * special.ndtr(-z + self.sigma_log) - w * special.ndtr(-z)


@dataclass(frozen=True)
class TwoPoint:
    """xi = u with probability p, xi = -v with probability 1-p.

    Light-tailed diagnostic law; the only shipped family whose exponential
    moments are finite, hence the only one where ``kesten_kappa`` applies.
    """

    u: float
    v: float
    p: float

    def __post_init__(self):
        if not (0.0 < self.p < 1.0):
            raise LawError(f"twopoint needs p in (0,1), got {self}")
        if not self.u > -self.v:
            raise LawError(f"twopoint needs u > -v, got {self}")

    has_density = False

    @property
    def support_min(self):
        return -self.v

    def tail(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x < -self.v, 1.0, np.where(x < self.u, self.p, 0.0))

    def log_tail(self, x):
        with np.errstate(divide="ignore"):
            return np.log(self.tail(x))

    def cdf(self, x):
        return 1.0 - self.tail(x)

    def quantile(self, u):
        u = np.asarray(u, dtype=float)
        return np.where(u <= 1.0 - self.p, -self.v, self.u)

    def mean_xi(self):
        return self.p * self.u - (1.0 - self.p) * self.v

    def mgf(self, s):
        return self.p * math.exp(s * self.u) + (1.0 - self.p) * math.exp(-s * self.v)

    def tail_integral(self, x):
        x = float(x)
        if x >= self.u:
            return 0.0
        if x >= -self.v:
            return self.p * (self.u - x)
        return (-self.v - x) + self.p * (self.u + self.v)


TailLaw = ParetoShift | WeibullShift | LogNormalShift | TwoPoint

_SHIFT_FAMILIES = (ParetoShift, WeibullShift, LogNormalShift)


# ---------------------------------------------------------------------------
# law specification grammar
# ---------------------------------------------------------------------------

_LAW_RE = re.compile(r"^\s*([a-z_]+)\s*\(([^)]*)\)\s*$", re.IGNORECASE)
_FAMILIES = {
    "pareto": (ParetoShift, 3),
    "weibull": (WeibullShift, 3),
    "lognormal": (LogNormalShift, 3),
    "twopoint": (TwoPoint, 3),
}


def parse_law(spec: str) -> TailLaw:
    """Parse ``pareto(alpha,x0,mu)`` / ``weibull(beta,scale,mu)`` /
    ``lognormal(muL,sigmaL,mu)`` / ``twopoint(u,v,p)``, case-insensitively."""
    m = _LAW_RE.match(spec)
    if m is None:
        raise LawParseError(f"cannot parse law spec {spec!r}: expected name(args)")
    name = m.group(1).lower()
    if name not in _FAMILIES:
        raise LawParseError(f"unknown law family {m.group(1)!r} in {spec!r}")
    cls, arity = _FAMILIES[name]
    raw = [t.strip() for t in m.group(2).split(",")] if m.group(2).strip() else []
    if len(raw) != arity:
        raise LawParseError(f"{name} takes {arity} parameters, got {len(raw)} in {spec!r}")
    vals = []
    for tok in raw:
        try:
            vals.append(float(tok))
        except ValueError:
            raise LawParseError(f"bad numeric literal {tok!r} in {spec!r}") from None
    return cls(*vals)


def law_spec(law: TailLaw) -> str:
    """Inverse of :func:`parse_law` (lossless round-trip)."""
    if isinstance(law, ParetoShift):
        return f"pareto({law.alpha!r},{law.x0!r},{law.mu!r})"
    if isinstance(law, WeibullShift):
        return f"weibull({law.beta!r},{law.scale!r},{law.mu!r})"
    if isinstance(law, LogNormalShift):
        return f"lognormal({law.mu_log!r},{law.sigma_log!r},{law.mu!r})"
    if isinstance(law, TwoPoint):
        return f"twopoint({law.u!r},{law.v!r},{law.p!r})"
    raise LawError(f"unknown law type {type(law)!r}")


# ---------------------------------------------------------------------------
# basic calculus
# ---------------------------------------------------------------------------


def tail(law: TailLaw, x):
    """P(xi > x)."""
    return law.tail(x)


def cdf(law: TailLaw, x):
    """P(xi <= x)."""
    return law.cdf(x)


def quantile(law: TailLaw, u):
    """Generalised inverse of the CDF, inf{x : cdf(x) >= u}, for u in (0,1)."""
    arr = np.asarray(u, dtype=float)
    if np.any((arr <= 0.0) | (arr >= 1.0)):
        raise LawError("quantile argument must lie strictly inside (0,1)")
    return law.quantile(u)


def mean_xi(law: TailLaw) -> float:
    """E xi; +inf marks an infinite-mean family.  Subcritical iff < 0."""
    return law.mean_xi()


def _tail_integral_quadrature(law: TailLaw, x: float) -> float:
    """Generic adaptive-quadrature evaluation of the uncapped tail integral."""
    pieces = []
    knots = [x, x + 1.0, x + 10.0, x + 100.0, x + 1000.0]
    total_err = 0.0
    for lo, hi in zip(knots[:-1], knots[1:]):
        v, e = integrate.quad(
            lambda y: float(law.tail(y)), lo, hi, limit=_QUAD_LIMIT, epsabs=1e-300, epsrel=1e-10
        )
        pieces.append(v)
        total_err += e
    v, e = integrate.quad(
        lambda y: float(law.tail(y)), knots[-1], np.inf, limit=_QUAD_LIMIT, epsabs=1e-14, epsrel=1e-10
    )
    pieces.append(v)
    total_err += e
    val = math.fsum(pieces)
    if not math.isfinite(val) or total_err > _QUAD_RTOL * max(val, 1e-300) + 1e-13:
        raise QuadratureError(f"tail-integral quadrature did not converge at x={x}")
    return val


def integrated_tail(law: TailLaw, x, method: str = "auto"):
    """Tail of the integrated-tail distribution, min(1, int_x^inf P(xi > y) dy).

    ``method="auto"`` uses the family's closed form; ``method="quadrature"``
    forces the generic adaptive path (kept as an independent cross-check).
    """
    if not math.isfinite(law.mean_xi()):
        raise LawError("integrated tail requires a finite-mean law")
    if method == "auto":
        f = law.tail_integral
    elif method == "quadrature":
        f = lambda t: _tail_integral_quadrature(law, t)  # noqa: E731
    else:
        raise ValueError(f"unknown method {method!r}")
    if np.ndim(x) == 0:
        return min(1.0, f(float(x)))
    return np.array([min(1.0, f(float(t))) for t in np.asarray(x, dtype=float).ravel()]).reshape(
        np.shape(x)
    )


def integrated_tail_interval(law: TailLaw, x: float, y: float, method: str = "auto") -> float:
    """Integrated-tail mass on (x, y]; y may be +inf."""
    if not x <= y:
        raise LawError(f"interval needs x <= y, got ({x}, {y})")
    hi = 0.0 if math.isinf(y) else integrated_tail(law, y, method=method)
    return max(0.0, integrated_tail(law, x, method=method) - hi)


# ---------------------------------------------------------------------------
# heavy-tail class diagnostics (raw ratios; the caller judges the trend)
# ---------------------------------------------------------------------------


def check_long_tailed(law: TailLaw, y: float, xs) -> list[float]:
    """Ratios P(xi > x - y)/P(xi > x); trend toward 1 supports long-tailedness."""
    if y == 0:
        raise LawError("probe offset y must be nonzero")
    out = []
    for x in np.atleast_1d(np.asarray(xs, dtype=float)):
        t = float(law.tail(x))
        if t <= 0.0:
            raise LawError(f"tail vanishes at x={x}; ratio undefined")
        out.append(float(law.tail(x - y)) / t)
    return out


def _convolution_tail(law: TailLaw, x: float) -> float:
    """P(xi1 + xi2 > x) surrogate: tail(x) + int_{-inf}^{x} tail(x-y) dF(y)."""
    lo = law.support_min
    f = law.pdf
    t = law.tail

    def integrand(yv):
        return float(t(x - yv)) * float(f(yv))

    knots = sorted({lo, lo + 2.0, min(5.0, x / 2.0), x / 2.0, x - 5.0, x - 2.0, x})
    knots = [k for k in knots if lo <= k <= x]
    if knots[0] > lo:
        knots.insert(0, lo)
    if knots[-1] < x:
        knots.append(x)
    pieces = []
    err = 0.0
    for a, b in zip(knots[:-1], knots[1:]):
        if b <= a:
            continue
        v, e = integrate.quad(integrand, a, b, limit=_QUAD_LIMIT, epsabs=1e-300, epsrel=1e-9)
        pieces.append(v)
        err += e
    val = float(t(x)) + math.fsum(pieces)
    if err > 1e-6 * max(val, 1e-300):
        raise QuadratureError(f"convolution quadrature did not converge at x={x}")
    return val


def check_subexponential(law: TailLaw, xs) -> list[float]:
    """Two-fold convolution tail over the tail; trend toward 2 supports
    subexponentiality over the probed range."""
    if not law.has_density:
        raise LawError("subexponentiality probe needs a continuous law")
    out = []
    for x in np.atleast_1d(np.asarray(xs, dtype=float)):
        t = float(law.tail(x))
        if t <= 0.0:
            raise LawError(f"tail vanishes at x={x}")
        out.append(_convolution_tail(law, float(x)) / t)
    return out


def check_strong_subexponential(law: TailLaw, xs) -> list[float]:
    """Ratio of int_0^x tail(x-y) tail(y) dy to 2 tail(x) int_0^inf tail(y) dy;
    trend toward 1 supports strong subexponentiality."""
    if not math.isfinite(law.mean_xi()):
        raise LawError("strong-subexponential probe requires a finite mean")
    full = law.tail_integral(0.0)
    out = []
    for x in np.atleast_1d(np.asarray(xs, dtype=float)):
        x = float(x)
        if x <= 0.0:
            out.append(0.0)
            continue
        t = float(law.tail(x))
        if t <= 0.0:
            raise LawError(f"tail vanishes at x={x}")

        def integrand(yv):
            return float(law.tail(x - yv)) * float(law.tail(yv))

        knots = sorted({0.0, min(5.0, x / 2.0), x / 2.0, max(x - 5.0, x / 2.0), x})
        pieces = []
        for a, b in zip(knots[:-1], knots[1:]):
            if b <= a:
                continue
            v, _ = integrate.quad(integrand, a, b, limit=_QUAD_LIMIT, epsabs=1e-300, epsrel=1e-9)
            pieces.append(v)
        out.append(math.fsum(pieces) / (2.0 * t * full))
    return out


def check_sqrt_insensitive(law: TailLaw, ms) -> list[tuple[float, float]]:
    """Per probe m: (tail(m - sqrt(m))/tail(m), tail(m) * e^sqrt(m)).

    The first trends to 1 and the second to infinity for conforming laws.
    Both are computed in log space; the product may overflow to ``inf``,
    which is the honest report at that probe.
    """
    out = []
    for m in np.atleast_1d(np.asarray(ms, dtype=float)):
        if m <= 0:
            raise LawError("probe points must be positive")
        lt = float(law.log_tail(m))
        lt_shift = float(law.log_tail(m - math.sqrt(m)))
        with np.errstate(over="ignore"):
            ratio = float(np.exp(lt_shift - lt)) if math.isfinite(lt) else math.nan
            product = float(np.exp(lt + math.sqrt(m)))
        out.append((ratio, product))
    return out


# ---------------------------------------------------------------------------
# quadrature oracles for E[(1-A)^m] and E[A^j (1-A)^m]
# ---------------------------------------------------------------------------


def _expectation_by_parts(law: TailLaw, g, gprime, breakpoints) -> float:
    """E[g(xi)] = g(xmin) + int g'(x) P(xi > x) dx for absolutely continuous g
    of bounded variation; needs only the closed-form tail."""
    lo = law.support_min
    knots = sorted({b for b in breakpoints if b > lo})
    knots = [lo] + knots
    pieces = []
    err = 0.0

    def integrand(x):
        return gprime(x) * float(law.tail(x))

    for a, b in zip(knots[:-1], knots[1:]):
        v, e = integrate.quad(integrand, a, b, limit=_QUAD_LIMIT, epsabs=1e-300, epsrel=1e-11)
        pieces.append(v)
        err += e
    v, e = integrate.quad(integrand, knots[-1], np.inf, limit=_QUAD_LIMIT, epsabs=1e-300, epsrel=1e-11)
    pieces.append(v)
    err += e
    val = g(lo) + math.fsum(pieces)
    if not math.isfinite(val) or err > _QUAD_RTOL * max(abs(val), 1e-300):
        raise QuadratureError("expectation quadrature did not reach the requested tolerance")
    return val


def _log_one_minus_A(x):
    return -np.logaddexp(0.0, -x)


def _log_A(x):
    return -np.logaddexp(0.0, x)


def expected_one_minus_A_pow(law: TailLaw, m: int) -> float:
    """E[(1-A)^m] with A = 1/(1+e^xi); exact oracle for P(Z_1 > m-1)."""
    if m < 0:
        raise LawError("power m must be >= 0")
    if m == 0:
        return 1.0
    if isinstance(law, TwoPoint):
        return float(
            law.p * np.exp(m * _log_one_minus_A(law.u))
            + (1.0 - law.p) * np.exp(m * _log_one_minus_A(-law.v))
        )

    def g(x):
        return float(np.exp(m * _log_one_minus_A(x)))

    def gprime(x):
        # m * A * (1-A)^m
        return float(np.exp(math.log(m) + _log_A(x) + m * _log_one_minus_A(x)))

    b = math.log(max(m, 2))
    return _expectation_by_parts(
        law, g, gprime, [b + c for c in (-45.0, -20.0, -5.0, 0.0, 5.0, 20.0, 45.0, 120.0)]
    )


def expected_Aj_one_minus_A_pow(law: TailLaw, j: int, m: int) -> float:
    """E[A^j (1-A)^m]; for fixed j >= 1 the ratio to tail(log m) must vanish
    as m grows."""
    if j < 0 or m < 0:
        raise LawError("powers must be >= 0")
    if j == 0:
        return expected_one_minus_A_pow(law, m)
    if isinstance(law, TwoPoint):
        def atom(x):
            return np.exp(j * _log_A(x) + m * _log_one_minus_A(x))

        return float(law.p * atom(law.u) + (1.0 - law.p) * atom(-law.v))

    def g(x):
        return float(np.exp(j * _log_A(x) + m * _log_one_minus_A(x)))

    def gprime(x):
        # A^j (1-A)^m (m A - j (1-A))
        la, lq = _log_A(x), _log_one_minus_A(x)
        return float(np.exp(j * la + m * lq) * (m * np.exp(la) - j * np.exp(lq)))

    bs = [math.log(max(m, 2) / k) for k in (max(j, 1), 1)]
    breakpoints = sorted({b + c for b in bs for c in (-40.0, -10.0, 0.0, 10.0, 40.0, 120.0)})
    return _expectation_by_parts(law, g, gprime, breakpoints)


# ---------------------------------------------------------------------------
# exponential-moment root (light-tailed regime diagnostic)
# ---------------------------------------------------------------------------


def kesten_kappa(law: TailLaw, xtol: float = 1e-12) -> float | None:
    """Positive root of E e^{s xi} = 1, found by bracketing and bisection.

    Returns ``None`` when no positive root exists (e.g. E xi >= 0, or xi <= 0
    almost surely).  Heavy-tailed shifted families have no finite exponential
    moments; they raise :class:`KappaUndefinedError`.
    """
    if isinstance(law, _SHIFT_FAMILIES):
        raise KappaUndefinedError("heavy-tailed: kappa undefined (E e^{s xi} = inf for s > 0)")
    if law.mean_xi() >= 0.0:
        return None  # phi is convex with phi(0)=1, phi'(0) >= 0: no crossing
    if law.u <= 0.0:
        return None  # xi <= 0 a.s.: phi < 1 on s > 0

    def f(s):
        return law.mgf(s) - 1.0

    s_hi = 1.0
    while f(s_hi) <= 0.0:
        s_hi *= 2.0
        if s_hi > 2.0**40:
            return None
    s_lo = s_hi / 2.0
    while f(s_lo) >= 0.0:
        s_lo /= 2.0
        if s_lo < 2.0**-40:
            # mgf dips below 1 immediately right of 0 for subcritical laws,
            # so failure to find a negative value means no usable bracket
            return None
    while s_hi - s_lo > xtol:
        mid = 0.5 * (s_lo + s_hi)
        if f(mid) < 0.0:
            s_lo = mid
        else:
            s_hi = mid
    return 0.5 * (s_lo + s_hi)

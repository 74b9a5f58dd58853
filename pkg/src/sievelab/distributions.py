"""Laws of the stick-breaking factor W, of shot-noise pairs and of stable limits.

Every law of W exposes accurate samples of both W and 1 - W. Heavy-tailed
families put W extremely close to 0 or 1, where ``1 - w`` computed in
floating point loses all information; the simulators need the small side
exactly to run exact binomial thinning.

Stable parametrization
----------------------
The limit Z(1) has characteristic function

    exp{-|u|^a G(1-a) (cos(pi a/2) + i sin(pi a/2) sgn u)},   1 < a < 2.

Writing K = G(1-a) cos(pi a/2) (a product of two negative numbers, so
K > 0) this is exp{-K |u|^a (1 + i tan(pi a/2) sgn u)}. Matching the usual
one-parametrization exp{-s^a |u|^a (1 - i b tan(pi a/2) sgn u)} gives skew
b = -1 and scale s = K^(1/a), location 0. Samples come from the
Chambers-Mallows-Stuck construction with those parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from fractions import Fraction

import numpy as np
from scipy import integrate, special

from .rng import uniform_open

GEOM_KMAX_CAP = 64


class QuadratureError(RuntimeError):
    """An adaptive quadrature did not reach its tolerance."""


def quad(f, a, b, points=None, epsabs=1e-10, limit=500):
    """``scipy.integrate.quad`` with a hard failure instead of a warning."""
    res, err, info = integrate.quad(
        f, a, b, points=points, epsabs=epsabs, epsrel=1e-10, limit=limit, full_output=1
    )[:3]
    if not np.isfinite(res) or err > max(100 * epsabs, 1e-8 * abs(res)):
        raise QuadratureError(f"quad on [{a}, {b}] failed: value {res}, error estimate {err}")
    return res


def _pareto(rng, index, xm, size):
    return xm * uniform_open(rng, size) ** (-1.0 / index)


def _pareto_sf(x, index, xm):
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(x < xm, 1.0, (np.maximum(x, xm) / xm) ** (-index))


def _pareto_sf_integral(t, index, xm):
    """Integral of min(1, (y/xm)^-index) over [0, t]."""
    t = np.asarray(t, dtype=float)
    if index == 1.0:
        tail = xm * np.log(np.maximum(t, xm) / xm)
    else:
        tail = xm**index / (1.0 - index) * (np.maximum(t, xm) ** (1.0 - index) - xm ** (1.0 - index))
    return np.where(t <= xm, t, xm + tail)


def _pareto_mean(index, xm):
    return xm * index / (index - 1.0) if index > 1 else math.inf


def _log1m_exp(x):
    """log(1 - e^{-x}) for x > 0, accurate at both ends."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(x > 0.693, np.log1p(-np.exp(-x)), np.log(-np.expm1(-x)))


def _neg_log1m_exp_inverse(y):
    """z with -log(1 - e^{-z}) = y; +inf at y = 0."""
    y = np.asarray(y, dtype=float)
    with np.errstate(divide="ignore"):
        return -_log1m_exp(y)


# --------------------------------------------------------------------------
# Laws of W


@dataclass(frozen=True)
class WLaw:
    """Base class of the supported laws of W on (0, 1)."""

    lattice = False

    def sample_split(self, rng, size=None):
        """Return ``(w, 1 - w)`` with the smaller side computed accurately."""
        raise NotImplementedError

    def sample(self, rng, size=None):
        return self.sample_split(rng, size)[0]

    def log_tail_left(self, x):
        raise NotImplementedError

    def log_tail_right(self, x):
        raise NotImplementedError

    def components(self):
        """Mixture representation ``[(weight, quantile)]``.

        ``quantile(u)`` maps u in (0, 1) to ``(log W, log(1 - W))`` so that
        E f(W) = sum weight * int_0^1 f(quantile(u)) du.
        """
        raise NotImplementedError

    def expect(self, f, points_for=None):
        """E f(log W, log(1 - W)) by quadrature over each component."""
        total = 0.0
        for weight, q in self.components():
            if q is None:
                continue
            pts = points_for(q) if points_for is not None else None
            total += weight * quad(lambda u: f(*q(u)), 0.0, 1.0, points=pts)
        return total

    @cached_property
    def mu(self):
        return self.expect(lambda lw, l1: -lw)

    @cached_property
    def nu(self):
        return self.expect(lambda lw, l1: -l1)

    @cached_property
    def sigma2(self):
        m = self.mu
        return self.expect(lambda lw, l1: lw * lw) - m * m


@dataclass(frozen=True)
class Uniform01(WLaw):
    """W uniform on (0, 1); W and 1 - W have the same law."""

    def sample_split(self, rng, size=None):
        u = uniform_open(rng, size)
        return u, 1.0 - u

    def log_tail_left(self, x):
        return np.exp(-np.asarray(x, dtype=float))

    log_tail_right = log_tail_left

    def components(self):
        return [(1.0, lambda u: (math.log(u), math.log1p(-u)))]

    mu = nu = sigma2 = 1.0


@dataclass(frozen=True)
class Beta(WLaw):
    a: float
    b: float

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise ValueError("Beta parameters must be positive")

    def sample_split(self, rng, size=None):
        x = rng.standard_gamma(self.a, size)
        y = rng.standard_gamma(self.b, size)
        s = x + y
        tiny = np.finfo(float).tiny
        w = np.clip(x / s, tiny, 1.0)
        wbar = np.clip(y / s, tiny, 1.0)
        return w, wbar

    def log_tail_left(self, x):
        return special.betainc(self.a, self.b, np.exp(-np.asarray(x, dtype=float)))

    def log_tail_right(self, x):
        return special.betainc(self.b, self.a, np.exp(-np.asarray(x, dtype=float)))

    def components(self):
        a, b = self.a, self.b

        def q(u):
            if u < 0.5:
                x = special.betaincinv(a, b, u)
                return math.log(x), math.log1p(-x)
            y = special.betaincinv(b, a, 1.0 - u)
            return math.log1p(-y), math.log(y)

        return [(1.0, q)]

    @property
    def mu(self):
        return special.digamma(self.a + self.b) - special.digamma(self.a)

    @property
    def nu(self):
        return special.digamma(self.a + self.b) - special.digamma(self.b)

    @property
    def sigma2(self):
        return special.polygamma(1, self.a) - special.polygamma(1, self.a + self.b)


@dataclass(frozen=True)
class PointMass(WLaw):
    x: float

    lattice = True

    def __post_init__(self):
        if not 0.0 < self.x < 1.0:
            raise ValueError("PointMass location must lie in (0, 1)")

    def sample_split(self, rng, size=None):
        if size is None:
            return self.x, 1.0 - self.x
        return np.full(size, self.x), np.full(size, 1.0 - self.x)

    def log_tail_left(self, x):
        return np.where(np.asarray(x, dtype=float) < -math.log(self.x), 1.0, 0.0)

    def log_tail_right(self, x):
        return np.where(np.asarray(x, dtype=float) < -math.log1p(-self.x), 1.0, 0.0)

    def components(self):
        return [(1.0, lambda u: (math.log(self.x), math.log1p(-self.x)))]

    def expect(self, f, points_for=None):
        return f(math.log(self.x), math.log1p(-self.x))

    @property
    def mu(self):
        return -math.log(self.x)

    @property
    def nu(self):
        return -math.log1p(-self.x)

    sigma2 = 0.0


class _RightLog(WLaw):
    """W = 1 - exp(-eta) for a heavy-tailed eta >= 0; |log W| is bounded."""

    def eta_sf(self, x):
        raise NotImplementedError

    def eta_quantile(self, v):
        """eta with P{eta > value} = v."""
        raise NotImplementedError

    def sample_split(self, rng, size=None):
        with np.errstate(over="ignore"):
            eta = self.eta_quantile(uniform_open(rng, size))
        return -np.expm1(-eta), np.exp(-eta)

    def log_tail_right(self, x):
        return self.eta_sf(x)

    def log_tail_left(self, x):
        z = _neg_log1m_exp_inverse(x)
        return np.clip(1.0 - self.eta_sf(z), 0.0, 1.0)

    def components(self):
        def q(v):
            with np.errstate(over="ignore"):
                eta = float(self.eta_quantile(v))
            if math.isinf(eta):
                return 0.0, -math.inf
            return float(_log1m_exp(eta)), -eta

        return [(1.0, q)]

    nu = math.inf


@dataclass(frozen=True)
class RightLogPareto(_RightLog):
    """eta Pareto: P{eta > x} = (x/xm)^-beta for x >= xm."""

    beta: float
    xm: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.beta < 1.0:
            raise ValueError("RightLogPareto needs beta in (0, 1)")
        if not self.xm > 0:
            raise ValueError("xm must be positive")

    def eta_sf(self, x):
        return _pareto_sf(x, self.beta, self.xm)

    def eta_quantile(self, v):
        return self.xm * np.asarray(v, dtype=float) ** (-1.0 / self.beta)

    def eta_sf_integral(self, x):
        return _pareto_sf_integral(x, self.beta, self.xm)


@dataclass(frozen=True)
class RightLogLogTail(_RightLog):
    """P{eta > x} = min(1, c0 / ln(e + x)); slowly varying right log-tail."""

    c0: float

    def __post_init__(self):
        # c0 < 1 would put an atom of W at 0
        if not self.c0 >= 1.0:
            raise ValueError("RightLogLogTail needs c0 >= 1")

    def eta_sf(self, x):
        x = np.asarray(x, dtype=float)
        return np.minimum(1.0, self.c0 / np.log(math.e + x))

    def eta_quantile(self, v):
        return np.exp(self.c0 / np.asarray(v, dtype=float)) - math.e

    def eta_sf_integral(self, x):
        x = np.asarray(x, dtype=float)
        x0 = math.exp(self.c0) - math.e
        # int c0/ln(e+y) dy = c0 * li(e+y) and li(z) = Ei(ln z)
        li = lambda z: special.expi(np.log(z))
        tail = self.c0 * (li(math.e + np.maximum(x, x0)) - li(math.e + x0))
        return np.where(x <= x0, x, x0 + tail)


@dataclass(frozen=True)
class TwoSidedLogPareto(WLaw):
    """With probability p, W = exp(-xi); otherwise W = 1 - exp(-eta).

    xi ~ Pareto(theta0, xm) and eta ~ Pareto(theta1, xm), so
    P{|log W| > x} ~ p (x/xm)^-theta0 and P{|log(1-W)| > x} ~ (1-p) (x/xm)^-theta1.
    """

    p: float
    theta0: float
    theta1: float
    xm: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.p < 1.0:
            raise ValueError("mixture weight p must lie in (0, 1)")
        if not (self.theta0 > 0 and self.theta1 > 0 and self.xm > 0):
            raise ValueError("theta0, theta1 and xm must be positive")

    def sample_split(self, rng, size=None):
        left = rng.random(size) < self.p
        xi = _pareto(rng, self.theta0, self.xm, size)
        eta = _pareto(rng, self.theta1, self.xm, size)
        w = np.where(left, np.exp(-xi), -np.expm1(-eta))
        wbar = np.where(left, -np.expm1(-xi), np.exp(-eta))
        if size is None:
            return float(w), float(wbar)
        return w, wbar

    def log_tail_left(self, x):
        z = _neg_log1m_exp_inverse(x)
        near_one = np.clip(1.0 - _pareto_sf(z, self.theta1, self.xm), 0.0, 1.0)
        return self.p * _pareto_sf(x, self.theta0, self.xm) + (1 - self.p) * near_one

    def log_tail_right(self, x):
        z = _neg_log1m_exp_inverse(x)
        near_zero = np.clip(1.0 - _pareto_sf(z, self.theta0, self.xm), 0.0, 1.0)
        return self.p * near_zero + (1 - self.p) * _pareto_sf(x, self.theta1, self.xm)

    def components(self):
        def left(v):
            xi = self.xm * v ** (-1.0 / self.theta0)
            return -xi, float(_log1m_exp(xi))

        def right(v):
            eta = self.xm * v ** (-1.0 / self.theta1)
            if math.isinf(eta):
                return 0.0, -math.inf
            return float(_log1m_exp(eta)), -eta

        return [(self.p, left), (1.0 - self.p, right)]

    def _branch_expect(self, branch, f):
        weight, q = self.components()[branch]
        return weight * quad(lambda u: f(*q(u)), 0.0, 1.0)

    @cached_property
    def mu(self):
        if self.theta0 <= 1:
            return math.inf
        return self.p * _pareto_mean(self.theta0, self.xm) + self._branch_expect(1, lambda lw, l1: -lw)

    @cached_property
    def nu(self):
        if self.theta1 <= 1:
            return math.inf
        return (1 - self.p) * _pareto_mean(self.theta1, self.xm) + self._branch_expect(0, lambda lw, l1: -l1)

    @cached_property
    def sigma2(self):
        if self.theta0 <= 2:
            return math.inf
        second = self.p * self.xm**2 * self.theta0 / (self.theta0 - 2)
        second += self._branch_expect(1, lambda lw, l1: lw * lw)
        return second - self.mu**2


def sample_w(law: WLaw, rng, size=None):
    return law.sample(rng, size)


def log_tail_left(law: WLaw, x):
    """P{|log W| > x}."""
    return law.log_tail_left(x)


def log_tail_right(law: WLaw, x):
    """P{|log(1 - W)| > x}."""
    return law.log_tail_right(x)


def mu_of(law: WLaw) -> float:
    return float(law.mu)


def nu_of(law: WLaw) -> float:
    return float(law.nu)


def sigma2_of(law: WLaw) -> float:
    return float(law.sigma2)


def is_symmetric(law: WLaw) -> bool:
    """True for the built-in laws with W and 1 - W equal in law."""
    if isinstance(law, Uniform01):
        return True
    if isinstance(law, Beta):
        return law.a == law.b
    if isinstance(law, PointMass):
        return law.x == 0.5
    return False


# --------------------------------------------------------------------------
# Shot-noise pairs (xi, eta)


@dataclass(frozen=True)
class PairLaw:
    """Joint law of an inter-renewal time xi > 0 and a mark eta >= 0."""

    def sample(self, rng, size):
        raise NotImplementedError

    @property
    def xi_mean(self) -> float:
        raise NotImplementedError

    def eta_sf(self, x):
        """Marginal tail P{eta > x}; raises when not available in closed form."""
        raise NotImplementedError(f"{type(self).__name__} has no analytic eta tail")

    def eta_sf_integral(self, t):
        raise NotImplementedError(f"{type(self).__name__} has no analytic eta tail")


@dataclass(frozen=True)
class IndependentExpPareto(PairLaw):
    rate: float
    beta: float
    xm: float = 1.0

    def __post_init__(self):
        if not (self.rate > 0 and self.xm > 0):
            raise ValueError("rate and xm must be positive")
        if not 0.0 < self.beta < 1.0:
            raise ValueError("beta must lie in (0, 1)")

    def sample(self, rng, size):
        return rng.exponential(1.0 / self.rate, size), _pareto(rng, self.beta, self.xm, size)

    @property
    def xi_mean(self):
        return 1.0 / self.rate

    def eta_sf(self, x):
        return _pareto_sf(x, self.beta, self.xm)

    def eta_sf_integral(self, t):
        return _pareto_sf_integral(t, self.beta, self.xm)


@dataclass(frozen=True)
class IndependentParetoPareto(PairLaw):
    alpha: float
    beta: float
    xm: float = 1.0

    def __post_init__(self):
        if not 1.0 < self.alpha < 2.0:
            raise ValueError("alpha must lie in (1, 2)")
        if not 0.0 < self.beta < 1.0:
            raise ValueError("beta must lie in (0, 1)")
        if not self.xm > 0:
            raise ValueError("xm must be positive")

    def sample(self, rng, size):
        return _pareto(rng, self.alpha, self.xm, size), _pareto(rng, self.beta, self.xm, size)

    @property
    def xi_mean(self):
        return _pareto_mean(self.alpha, self.xm)

    def eta_sf(self, x):
        return _pareto_sf(x, self.beta, self.xm)

    def eta_sf_integral(self, t):
        return _pareto_sf_integral(t, self.beta, self.xm)


@dataclass(frozen=True)
class IndependentExpConstant(PairLaw):
    """xi ~ Exp(rate) and eta fixed; a bounded-memory reference case."""

    rate: float
    eta: float

    def __post_init__(self):
        if not (self.rate > 0 and self.eta > 0):
            raise ValueError("rate and eta must be positive")

    def sample(self, rng, size):
        return rng.exponential(1.0 / self.rate, size), np.full(size, self.eta)

    @property
    def xi_mean(self):
        return 1.0 / self.rate

    def eta_sf(self, x):
        return np.where(np.asarray(x, dtype=float) < self.eta, 1.0, 0.0)

    def eta_sf_integral(self, t):
        return np.minimum(np.asarray(t, dtype=float), self.eta)


@dataclass(frozen=True)
class CommonShock(PairLaw):
    """(xi, eta + scale * xi) built from a base pair law."""

    base: PairLaw
    scale: float

    def __post_init__(self):
        if self.scale < 0:
            raise ValueError("shock scale must be nonnegative")

    def sample(self, rng, size):
        xi, eta = self.base.sample(rng, size)
        return xi, eta + self.scale * xi

    @property
    def xi_mean(self):
        return self.base.xi_mean

    def eta_sf(self, x):
        if self.scale == 0:
            return self.base.eta_sf(x)
        return super().eta_sf(x)

    def eta_sf_integral(self, t):
        if self.scale == 0:
            return self.base.eta_sf_integral(t)
        return super().eta_sf_integral(t)


def sample_pair(law: PairLaw, rng, size=None):
    if size is None:
        xi, eta = law.sample(rng, 1)
        return float(xi[0]), float(eta[0])
    return law.sample(rng, size)


# --------------------------------------------------------------------------
# Stable limits


@dataclass(frozen=True)
class StableSpec:
    """Spectrally negative alpha-stable Z(1), 1 < alpha < 2, centered."""

    alpha: float

    def __post_init__(self):
        if not 1.0 < self.alpha < 2.0:
            raise ValueError("alpha must lie in (1, 2)")

    @property
    def scale_power(self) -> float:
        """G(1 - alpha) cos(pi alpha / 2), the coefficient of |u|^alpha."""
        return special.gamma(1.0 - self.alpha) * math.cos(math.pi * self.alpha / 2)

    @property
    def scale(self) -> float:
        return self.scale_power ** (1.0 / self.alpha)

    skew = -1.0

    def cf(self, u):
        """Characteristic function of Z(1)."""
        u = np.asarray(u, dtype=float)
        a = self.alpha
        g = special.gamma(1.0 - a)
        ph = math.pi * a / 2
        return np.exp(-np.abs(u) ** a * g * (math.cos(ph) + 1j * math.sin(ph) * np.sign(u)))


def sample_stable_z1(spec: StableSpec, rng, size=None):
    """Chambers-Mallows-Stuck draw with skew -1 and the matched scale."""
    a = spec.alpha
    t = math.tan(math.pi * a / 2)
    shift = math.atan(spec.skew * t) / a
    factor = (1.0 + t * t) ** (1.0 / (2 * a))
    v = math.pi * (uniform_open(rng, size) - 0.5)
    e = rng.standard_exponential(size)
    x = (
        factor
        * np.sin(a * (v + shift))
        / np.cos(v) ** (1.0 / a)
        * (np.cos(v - a * (v + shift)) / e) ** ((1.0 - a) / a)
    )
    return spec.scale * x


def limit_integral_factor(alpha: float, beta: float) -> float:
    """(1 - alpha beta)^(-1/alpha): law of int v^-beta dZ(v) over Z(1)."""
    if not 1.0 < alpha <= 2.0:
        raise ValueError("alpha must lie in (1, 2]")
    if not 0.0 <= beta < 1.0 / alpha:
        raise ValueError("integral not defined: need 0 <= beta < 1/alpha")
    return (1.0 - alpha * beta) ** (-1.0 / alpha)


def sample_limit_integral(alpha: float, beta: float, rng, size=None):
    """Draws of int_0^1 v^-beta dZ(v); alpha = 2 means Z is standard Brownian motion."""
    factor = limit_integral_factor(alpha, beta)
    if alpha == 2.0:
        return factor * rng.standard_normal(size)
    return factor * sample_stable_z1(StableSpec(alpha), rng, size)


# --------------------------------------------------------------------------
# Geometric moments


def geometric_moments(a: float, kmax: int) -> list[float]:
    """E X^j, j = 1..kmax, for X ~ geom(a) via m_j = b (1 + sum_{i<j} C(j,i) m_i)."""
    if not 0.0 < a <= 1.0:
        raise ValueError("a must lie in (0, 1]")
    if not 1 <= kmax <= GEOM_KMAX_CAP:
        raise ValueError(f"kmax must lie in [1, {GEOM_KMAX_CAP}]")
    fa = Fraction(a)
    b = (1 - fa) / fa
    m: list[Fraction] = []
    for j in range(1, kmax + 1):
        m.append(b * (1 + sum(math.comb(j, i) * m[i - 1] for i in range(1, j))))
    return [float(x) for x in m]

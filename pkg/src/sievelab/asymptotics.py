"""Centering and norming functions for L_n and the regime classifier.

psi(s) = E exp(-s (1 - W)),  phi(y) = psi(e^y),
k(x) = int_0^x phi,  m(x) = int_0^x P{|log(1 - W)| > y} dy,
b_n = k(log n) / mu,  b'_n = m(log n) / mu.

For the built-in families every slowly varying factor in the tail
conditions is an explicit function of the parameters, so the regime of a
law is decided from its exponents alone.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import integrate, interpolate, optimize, special

from .distributions import (
    Beta,
    IndependentExpConstant,
    IndependentExpPareto,
    IndependentParetoPareto,
    CommonShock,
    PairLaw,
    PointMass,
    QuadratureError,
    RightLogLogTail,
    RightLogPareto,
    TwoSidedLogPareto,
    Uniform01,
    WLaw,
    _pareto_sf,
    _pareto_sf_integral,
    quad,
    sample_limit_integral,
)


class Regime(enum.Enum):
    FINITE_FINITE = "FiniteFinite"
    MU_INF_NU_FIN = "MuInfNuFin"
    A = "CaseA"
    B1 = "CaseB1"
    B2 = "CaseB2"
    C1 = "CaseC1"
    C2 = "CaseC2"
    B3_OPEN = "CaseB3Open"
    C3_OPEN = "CaseC3Open"
    COMPARABLE = "Comparable"
    ASYM_INF_ZERO = "AsymInfZero"
    LATTICE = "Lattice"


NORMAL_CASES = (Regime.A, Regime.B1, Regime.B2, Regime.C1)
OPEN_CASES = (Regime.B3_OPEN, Regime.C3_OPEN)


@dataclass(frozen=True)
class RegimeCase:
    regime: Regime
    c: float | None = None  # tail ratio for Comparable
    alpha: float | None = None  # stable index of |log W| in cases b/c
    beta: float | None = None  # regular variation index of the right log-tail
    note: str = ""

    @property
    def label(self) -> str:
        if self.regime is Regime.COMPARABLE:
            return f"Comparable(c={self.c:g})"
        return self.regime.value

    def __str__(self):
        return self.label


class UnsupportedRegime(ValueError):
    pass


# --------------------------------------------------------------------------
# psi, phi, k, m


def psi(law: WLaw, s: float) -> float:
    """Laplace transform of 1 - W."""
    if s < 0:
        raise ValueError("s must be nonnegative")
    if s == 0:
        return 1.0
    if isinstance(law, Uniform01):
        return -math.expm1(-s) / s
    if isinstance(law, PointMass):
        return math.exp(-s * (1.0 - law.x)) if law.x < 1.0 else 1.0
    if isinstance(law, Beta):
        # 1 - W ~ Beta(b, a), whose Laplace transform is 1F1(b; a + b; -s)
        return _kummer_neg(law.b, law.a + law.b, s)
    return law.expect(lambda lw, l1: math.exp(-s * math.exp(l1)) if l1 > -745 else 1.0)


def _kummer_neg(a: float, c: float, s: float) -> float:
    """1F1(a; c; -s) for s >= 0."""
    if s <= 1e6:
        v = float(special.hyp1f1(a, c, -s))
        if math.isfinite(v):
            return v
    # large-argument expansion; the e^-s companion series is below rounding here
    total, term = 1.0, 1.0
    for k in range(60):
        term *= (a + k) * (a - c + 1 + k) / ((k + 1) * s)
        total += term
        if abs(term) < 1e-17 * abs(total):
            break
    with np.errstate(under="ignore"):
        return float(math.exp(special.gammaln(c) - special.gammaln(c - a) - a * math.log(s))) * total


def phi(law: WLaw, y: float) -> float:
    if isinstance(law, (Uniform01, PointMass, Beta)):
        return psi(law, math.exp(y) if y < 709.0 else math.inf)
    return law.expect(lambda lw, l1: math.exp(-math.exp(min(y + l1, 700.0))))


def _phi_vec(law: WLaw, y: np.ndarray) -> np.ndarray:
    """phi on a whole grid with one vector-valued adaptive quadrature."""
    y = np.asarray(y, dtype=float)
    if isinstance(law, Uniform01):
        s = np.exp(np.minimum(y, 700.0))
        return -np.expm1(-s) / s
    if isinstance(law, PointMass):
        if law.x == 1.0:
            return np.ones_like(y)
        return np.exp(-np.exp(np.minimum(y + math.log1p(-law.x), 700.0)))
    total = np.zeros_like(y)
    for weight, q in law.components():

        def f(u):
            _, l1 = q(u)
            return np.exp(-np.exp(np.minimum(y + l1, 700.0)))

        res, err = integrate.quad_vec(f, 0.0, 1.0, epsabs=1e-10, epsrel=1e-10, norm="max", limit=2000)
        if err > 1e-8:
            raise QuadratureError(f"phi grid quadrature error {err}")
        total += weight * res
    return total


@lru_cache(maxsize=16)
def _phi_interpolant(law: WLaw, top: float):
    fine = np.linspace(0.0, min(top, 40.0), 2001)
    grid = fine
    if top > 40.0:
        grid = np.concatenate([fine, np.geomspace(40.0, top, 600)[1:]])
    values = _phi_vec(law, grid)
    # flat stretches where phi underflows give harmless 0/0 slope ratios
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        return interpolate.PchipInterpolator(grid, values, extrapolate=False)


def phi_table(law: WLaw, top: float) -> Callable:
    """Vectorized phi on [0, top], interpolated from a cached quadrature grid."""
    # round the range up so nearby horizons share a table
    top = float(2 ** math.ceil(math.log2(max(top, 1.0))))
    f = _phi_interpolant(law, top)

    def phi_vec(y):
        y = np.asarray(y, dtype=float)
        if y.size and (y.min() < 0 or y.max() > top):
            raise ValueError("phi table evaluated outside its range")
        return f(y)

    return phi_vec


def _int_exp_exp(l1: float, t: float) -> float:
    """int_0^t exp(-e^{y + l1}) dy = E1(e^l1) - E1(e^{l1 + t})."""
    if l1 == -math.inf:
        return t
    top = l1 + t
    if top < -14.0:
        # E1(x) = -gamma - ln x + x - ..., so the difference is t - a(e^t - 1)
        return t - (math.exp(top) - math.exp(l1))
    if l1 > 700:
        return 0.0
    far = 0.0 if top > 700 else float(special.exp1(math.exp(top)))
    if l1 < -30.0:
        # E1(a) = -gamma - log a + a + O(a^2) for tiny a
        return -np.euler_gamma - l1 + math.exp(l1) - far
    return float(special.exp1(math.exp(l1))) - far


_U_LADDER = sorted({10.0**-k for k in range(1, 13)} | {1 - 10.0**-k for k in range(1, 13)})


def k_of(law: WLaw, t: float) -> float:
    """k(t) = int_0^t phi(y) dy, as E int_0^t exp(-e^y (1 - W)) dy."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0:
        return 0.0
    if isinstance(law, Uniform01):
        # int_1^T (1 - e^-u) u^-2 du with T = e^t, integrated by parts
        big = math.exp(t) if t < 709.0 else math.inf
        return -math.expm1(-1.0) + float(special.exp1(1.0) - special.exp1(big)) + math.expm1(-big) / big
    # features sit at 1 - W ~ e^-t, so split the u-range at every scale
    return law.expect(lambda lw, l1: _int_exp_exp(l1, t), points_for=lambda q: _U_LADDER)


def m_of(law: WLaw, x: float) -> float:
    """m(x) = int_0^x P{|log(1 - W)| > y} dy."""
    if x < 0:
        raise ValueError("x must be nonnegative")
    if x == 0:
        return 0.0
    if isinstance(law, Uniform01):
        return -math.expm1(-x)
    if isinstance(law, PointMass):
        return min(x, -math.log1p(-law.x))
    if isinstance(law, (RightLogPareto, RightLogLogTail)):
        return float(law.eta_sf_integral(x))
    if isinstance(law, TwoSidedLogPareto):
        # the W-near-0 branch only reaches |log(1 - W)| <= -log(1 - e^-xm)
        reach = float(-np.log(-np.expm1(-law.xm)))
        right = lambda y: (1 - law.p) * float(_pareto_sf(y, law.theta1, law.xm))
        near0 = lambda y: float(law.log_tail_right(y)) - right(y)
        part = quad(near0, 0.0, min(x, reach))
        return part + (1 - law.p) * float(_pareto_sf_integral(x, law.theta1, law.xm))
    return quad(law.log_tail_right, 0.0, x)


def _finite_mu(law: WLaw) -> float:
    mu = law.mu
    if not mu < math.inf:
        raise UnsupportedRegime("centering needs mu < infinity")
    return mu


def centering_b(law: WLaw, n: float) -> float:
    if n < 1:
        raise ValueError("n must be at least 1")
    return k_of(law, math.log(n)) / _finite_mu(law)


def centering_b_prime(law: WLaw, n: float) -> float:
    if n < 1:
        raise ValueError("n must be at least 1")
    return m_of(law, math.log(n)) / _finite_mu(law)


# --------------------------------------------------------------------------
# Regular variation of |log W|


def _branch2_second_moment(law: TwoSidedLogPareto) -> float:
    weight, q = law.components()[1]
    return weight * quad(lambda u: q(u)[0] ** 2, 0.0, 1.0)


def truncated_second_moment(law: TwoSidedLogPareto):
    """l~(x) for theta0 = 2: int_0^x y^2 P{|log W| in dy} up to o(1)."""
    base = _branch2_second_moment(law)
    coef = 2.0 * law.p * law.xm**2
    return lambda x: base + coef * math.log(max(x, law.xm) / law.xm)


def solve_norming(x: float, index: float, ell: Callable[[float], float]) -> float:
    """Positive c with x * ell(c) / c^index = 1, by bisection."""
    if x < 0:
        raise ValueError("x must be nonnegative")
    if x == 0:
        return 0.0
    g = lambda c: math.log(x) + math.log(ell(c)) - index * math.log(c)
    lo, hi = 1e-300, 1.0
    while g(hi) > 0:
        hi *= 2.0
    return optimize.brentq(g, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=2000)


def norming_c(law: WLaw, x: float) -> float:
    """c(x) with x l~(c(x)) / c(x)^alpha -> 1 (equality for our families)."""
    if not isinstance(law, TwoSidedLogPareto) or not 1.0 < law.theta0 <= 2.0:
        raise UnsupportedRegime("norming c(x) is defined in cases (b) and (c) only")
    if x == 0:
        return 0.0
    a = law.theta0
    if a < 2.0:
        return (law.p * law.xm**a * x) ** (1.0 / a)
    return solve_norming(x, 2.0, truncated_second_moment(law))


def ell_tilde(law: WLaw) -> Callable[[float], float]:
    if isinstance(law, TwoSidedLogPareto) and 1.0 < law.theta0 < 2.0:
        const = law.p * law.xm**law.theta0
        return lambda x: const
    if isinstance(law, TwoSidedLogPareto) and law.theta0 == 2.0:
        return truncated_second_moment(law)
    raise UnsupportedRegime("l~ is defined in cases (b) and (c) only")


# --------------------------------------------------------------------------
# Classification


def _close(a, b):
    return math.isclose(a, b, rel_tol=1e-12, abs_tol=1e-15)


def classify_regime(law: WLaw) -> RegimeCase:
    if law.lattice:
        return RegimeCase(Regime.LATTICE, note="|log W| is lattice")
    if isinstance(law, (Uniform01, Beta)):
        return RegimeCase(Regime.FINITE_FINITE)
    if isinstance(law, (RightLogPareto, RightLogLogTail)):
        # |log W| is bounded, so sigma^2 < infinity while nu = infinity
        return RegimeCase(Regime.A)
    if isinstance(law, TwoSidedLogPareto):
        t0, t1, p = law.theta0, law.theta1, law.p
        mu_inf, nu_inf = t0 <= 1.0, t1 <= 1.0
        if not mu_inf and not nu_inf:
            return RegimeCase(Regime.FINITE_FINITE)
        if mu_inf and not nu_inf:
            return RegimeCase(Regime.MU_INF_NU_FIN)
        if mu_inf:
            if _close(t0, t1):
                return RegimeCase(Regime.COMPARABLE, c=(1.0 - p) / p)
            if t1 > t0:
                note = "P{1-W<=x}/P{W<=x} -> 0: L_n -> 0 in probability"
            else:
                note = "P{1-W<=x}/P{W<=x} -> infinity: L_n grows without centering"
            return RegimeCase(Regime.ASYM_INF_ZERO, note=note)
        if t0 > 2.0:
            return RegimeCase(Regime.A, beta=t1)
        if _close(t0, 2.0):
            # l*(x)^2 grows like log x while the right tail decays like x^-theta1
            return RegimeCase(Regime.B1, alpha=2.0, beta=t1)
        crit = 2.0 / t0 - 1.0
        if _close(t1, crit):
            return RegimeCase(Regime.C3_OPEN, alpha=t0, beta=t1, note="boundary beta = 2/alpha - 1")
        if t1 < crit:
            return RegimeCase(Regime.C2, alpha=t0, beta=t1)
        return RegimeCase(Regime.C1, alpha=t0, beta=t1)
    raise UnsupportedRegime(f"cannot certify the tail form of {type(law).__name__}")


# --------------------------------------------------------------------------
# Norming


def scaling_a(law: WLaw, n: float, case: RegimeCase | None = None, prime: bool = False) -> float:
    """Case-appropriate a_n; ``prime`` uses b'_n inside the square root."""
    case = classify_regime(law) if case is None else case
    if case.regime in OPEN_CASES:
        raise UnsupportedRegime(f"{case.label}: no limit theorem for L_n is available (open case)")
    mu = _finite_mu(law)
    if case.regime in (Regime.A, Regime.B1, Regime.C1):
        b = centering_b_prime(law, n) if prime else centering_b(law, n)
        return math.sqrt(b)
    if case.regime is Regime.B2:
        return mu**-1.5 * norming_c(law, math.log(n)) * psi(law, n)
    if case.regime is Regime.C2:
        return mu ** (-1.0 - 1.0 / case.alpha) * norming_c(law, math.log(n)) * psi(law, n)
    raise UnsupportedRegime(f"{case.label}: no centered and normed limit for L_n")


@dataclass(frozen=True, eq=False)
class NormingPlan:
    case: RegimeCase
    b: Callable[[float], float]
    b_prime: Callable[[float], float]
    a: Callable[[float], float]
    sample_limit: Callable


def norming_plan(law: WLaw, prime: bool = False) -> NormingPlan:
    case = classify_regime(law)
    if case.regime is Regime.C2:
        sampler = lambda rng, size=None: sample_limit_integral(case.alpha, case.beta, rng, size)
    elif case.regime in NORMAL_CASES:
        sampler = lambda rng, size=None: rng.standard_normal(size)
    else:
        raise UnsupportedRegime(f"{case.label}: no centered and normed limit for L_n")
    return NormingPlan(
        case=case,
        b=lambda n: centering_b(law, n),
        b_prime=lambda n: centering_b_prime(law, n),
        a=lambda n: scaling_a(law, n, case, prime=prime),
        sample_limit=sampler,
    )


# --------------------------------------------------------------------------
# Shot-noise pairs


@dataclass(frozen=True)
class PairVerdict:
    """Whether m^-1 int_0^t G may replace the random centering of V(t)."""

    replaceable: bool | None
    alpha: float = 2.0
    beta: float = 0.0
    note: str = ""


def pair_norming_c(pair: PairLaw, t: float) -> float:
    """c(t) for the law of xi."""
    if isinstance(pair, CommonShock):
        return pair_norming_c(pair.base, t)
    if isinstance(pair, IndependentParetoPareto):
        # P{xi > x} = (x/xm)^-alpha, so l~ = xm^alpha
        return pair.xm * t ** (1.0 / pair.alpha)
    raise UnsupportedRegime("c(t) needs xi in a stable domain with infinite variance")


def classify_pair(pair: PairLaw) -> PairVerdict:
    base = pair.base if isinstance(pair, CommonShock) else pair
    if isinstance(pair, CommonShock) and pair.scale > 0:
        return PairVerdict(None, note="tail of eta + s xi not available in closed form")
    if isinstance(base, (IndependentExpPareto, IndependentExpConstant)):
        return PairVerdict(True, note="E xi^2 < infinity")
    if isinstance(base, IndependentParetoPareto):
        a, b = base.alpha, base.beta
        crit = 2.0 / a - 1.0
        if _close(b, crit):
            return PairVerdict(None, a, b, note="boundary beta = 2/alpha - 1 with constant slowly varying factors")
        if b > crit:
            return PairVerdict(True, a, b, note="G(x) c(x)^2 / x -> 0")
        return PairVerdict(False, a, b, note="stable limit with non-random centering")
    raise UnsupportedRegime(f"cannot classify {type(pair).__name__}")


def shotnoise_stable_norming(pair: PairLaw, t: float) -> float:
    """m^(-1 - 1/alpha) c(t) G(t)."""
    v = classify_pair(pair)
    return pair.xi_mean ** (-1.0 - 1.0 / v.alpha) * pair_norming_c(pair, t) * float(pair.eta_sf(t))

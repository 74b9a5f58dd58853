"""Random walks, renewal counts and renewal shot-noise sums.

S_k = |log W_1| + ... + |log W_k| (or xi_1 + ... + xi_k for pair laws),
N(t) = #{k >= 0 : S_k <= t}. The stationary version shifts the walk by an
independent delay with the integrated-tail law of the step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .distributions import (
    PairLaw,
    PointMass,
    RightLogLogTail,
    RightLogPareto,
    TwoSidedLogPareto,
    Uniform01,
    WLaw,
    _neg_log1m_exp_inverse,
    quad,
)
from .rng import uniform_open


@dataclass(frozen=True, eq=False)
class WalkPath:
    """Partial sums up to and including the first one beyond ``t``."""

    sums: np.ndarray
    t: float
    delay: float = 0.0

    def __post_init__(self):
        self.sums.setflags(write=False)

    @property
    def count(self) -> int:
        """N(t), the number of sums (S_0 included) not exceeding t."""
        return int(np.searchsorted(self.sums, self.t, side="right"))

    def count_at(self, x: float) -> int:
        if x > self.t:
            raise ValueError("path only covers [0, t]")
        return int(np.searchsorted(self.sums, x, side="right"))

    @property
    def within(self) -> np.ndarray:
        return self.sums[: self.count]


_TINY = float(np.nextafter(0.0, 1.0))


def _steps(source, rng, size):
    if isinstance(source, WLaw):
        w, wbar = source.sample_split(rng, size)
        with np.errstate(divide="ignore"):
            x = np.where(w > 0.5, -np.log1p(-wbar), -np.log(w))
        # |log W| below the least subnormal rounds to 0; keep it positive
        return np.maximum(x, _TINY)
    if isinstance(source, PairLaw):
        return source.sample(rng, size)[0]
    raise TypeError("source must be a WLaw or a PairLaw")


def _step_mean(source):
    m = source.mu if isinstance(source, WLaw) else source.xi_mean
    return m if 0 < m < math.inf else 1.0


def simulate_walk(source, t: float, rng, delay: float = 0.0) -> WalkPath:
    """Walk started at ``delay`` and run until it first exceeds t."""
    if t < 0:
        raise ValueError("horizon must be nonnegative")
    chunk = int(min(max(1.2 * t / _step_mean(source), 64), 1 << 20))
    pieces = [np.array([delay], dtype=float)]
    last = delay
    while last <= t:
        s = last + np.cumsum(_steps(source, rng, chunk))
        pieces.append(s)
        last = s[-1]
    sums = np.concatenate(pieces)
    # keep exactly one sum beyond t
    end = int(np.searchsorted(sums, t, side="right"))
    return WalkPath(sums[: end + 1].copy(), t, delay)


# --------------------------------------------------------------------------
# Stationary delay


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(20)


class _IntegratedTail:
    """Inverse of x -> int_0^x P{|log W| > y} dy on a cached grid.

    Kinks of the tail sit on grid points, so a fixed Gauss-Legendre rule is
    accurate inside every cell and Newton steps (derivative = tail) converge fast.
    """

    def __init__(self, law: WLaw, points=1025):
        self.law = law
        self.tail_index = None
        kinks = []
        if isinstance(law, (RightLogPareto, RightLogLogTail)):
            lo = law.xm if isinstance(law, RightLogPareto) else math.exp(law.c0) - math.e
            top = float(-np.log(-np.expm1(-lo))) if lo > 0 else 50.0
        elif isinstance(law, TwoSidedLogPareto):
            if law.theta0 <= 1:
                raise ValueError("no stationary version: mu is infinite")
            bounded = float(-np.log(-np.expm1(-law.xm)))
            top = max(law.xm, bounded)
            kinks = [law.xm, bounded]
            self.tail_index = (law.p * law.xm**law.theta0, law.theta0)
        else:
            top = 1.0
            while law.log_tail_left(top) > 1e-17:
                top *= 2.0
        # geometric cells toward 0 confine the cusp there to a negligible first cell
        near0 = np.geomspace(1e-12, top / (points - 1), 48)
        self.grid = np.unique(np.concatenate([np.linspace(0.0, top, points), near0, [k for k in kinks if 0 < k < top]]))
        f = law.log_tail_left
        pieces = [quad(f, a, b) for a, b in zip(self.grid[:-1], self.grid[1:])]
        self.cum = np.concatenate([[0.0], np.cumsum(pieces)])
        self.total = self.cum[-1]
        if self.tail_index is not None:
            c, th = self.tail_index
            self.total += c * top ** (1 - th) / (th - 1)

    def _partial(self, a: float, x: float) -> float:
        if a == 0.0:
            # the tail can have a logarithmic cusp at 0
            return quad(self.law.log_tail_left, 0.0, x)
        half = 0.5 * (x - a)
        y = a + half * (_GL_NODES + 1.0)
        return float(half * np.dot(_GL_WEIGHTS, self.law.log_tail_left(y)))

    def invert(self, target: float) -> float:
        grid, cum = self.grid, self.cum
        if target >= cum[-1]:
            if self.tail_index is None:
                return float(grid[-1])
            c, th = self.tail_index
            rest = target - cum[-1]
            # int_top^x c y^-th dy = rest
            return float((grid[-1] ** (1 - th) - rest * (th - 1) / c) ** (1 / (1 - th)))
        i = int(np.searchsorted(cum, target, side="right")) - 1
        a, b = float(grid[i]), float(grid[i + 1])
        need = target - cum[i]
        lo, hi = a, b
        x = a + (b - a) * min(1.0, need / max(cum[i + 1] - cum[i], 1e-300))
        for _ in range(100):
            g = self._partial(a, x) - need
            if g == 0.0:
                break
            if g > 0:
                hi = x
            else:
                lo = x
            d = float(self.law.log_tail_left(x))
            if d > 0 and abs(g / d) <= 1e-14 * max(1.0, x):
                break
            step = x - g / d if d > 0 else math.nan
            x = step if lo < step < hi else 0.5 * (lo + hi)
            if hi - lo <= 1e-14 * max(1.0, x):
                break
        return x


@lru_cache(maxsize=32)
def _integrated_tail(law: WLaw) -> _IntegratedTail:
    return _IntegratedTail(law)


def sample_stationary_delay(law: WLaw, rng) -> float:
    """Draw from P{D <= x} = mu^-1 int_0^x P{|log W| > y} dy."""
    mu = law.mu
    if not mu < math.inf:
        raise ValueError("no stationary version: mu is infinite")
    u = float(uniform_open(rng))
    if isinstance(law, Uniform01):
        return -math.log(u)
    if isinstance(law, PointMass):
        return u * mu
    it = _integrated_tail(law)
    return it.invert(u * it.total)


def simulate_stationary_walk(law: WLaw, t: float, rng) -> WalkPath:
    return simulate_walk(law, t, rng, delay=sample_stationary_delay(law, rng))


# --------------------------------------------------------------------------
# Shot noise


def shot_noise_on_path(phi, path: WalkPath) -> float:
    """sum of phi(t - S_k) over S_k <= t; deterministic given the path."""
    return float(np.sum(phi(path.t - path.within)))


def shot_noise_C(law: WLaw, t: float, stationary: bool, rng, phi=None) -> float:
    """C(t) (or its stationary version) with phi(x) = psi(e^x)."""
    if not t > 0:
        raise ValueError("t must be positive")
    if phi is None:
        from .asymptotics import phi_table

        phi = phi_table(law, t)
    path = simulate_stationary_walk(law, t, rng) if stationary else simulate_walk(law, t, rng)
    return shot_noise_on_path(phi, path)


def occupancy_range_series(path: WalkPath, t: float) -> float:
    """sum_k (1 - exp(-t e^{-S_k})); its mean is E M(t) for the Poissonized sieve.

    The path must extend to about log(t) + 40 so the neglected terms are below e^-40.
    """
    return float(np.sum(-np.expm1(-t * np.exp(-path.sums))))


@dataclass(frozen=True)
class ShotNoiseSample:
    v_count: int
    r_center: float
    t: float
    n_count: int


def shot_noise_V(pair: PairLaw, t: float, rng) -> ShotNoiseSample:
    """One draw of V(t) with its random centering sum of G(t - S_{k-1}).

    The centering is NaN when the pair law has no analytic tail of eta.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    chunk = int(min(max(1.2 * t / pair.xi_mean, 64), 1 << 20))
    starts, marks = [], []
    last = 0.0
    while last <= t:
        xi, eta = pair.sample(rng, chunk)
        s = last + np.concatenate([[0.0], np.cumsum(xi[:-1])])
        starts.append(s)
        marks.append(eta)
        last = s[-1] + xi[-1]
    s = np.concatenate(starts)
    eta = np.concatenate(marks)
    keep = s <= t
    s, eta = s[keep], eta[keep]
    v = int(np.count_nonzero(s + eta > t))
    try:
        r = float(np.sum(pair.eta_sf(t - s)))
    except NotImplementedError:
        r = math.nan
    return ShotNoiseSample(v, r, t, int(s.size))


def deterministic_centering(pair: PairLaw, t: float) -> float:
    """m^-1 int_0^t P{eta > y} dy."""
    return float(pair.eta_sf_integral(t)) / pair.xi_mean

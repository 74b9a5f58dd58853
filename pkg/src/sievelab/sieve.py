"""Bernoulli sieve simulators and the nonincreasing Markov chain engine.

Conventions: box k is the interval (T_k, T_{k-1}] with T_k = W_1 ... W_k,
so a ball still in play at round k lands in box k with probability 1 - W_k
and stays in play with probability W_k. The number of balls still in play
is the nonincreasing chain with kernel C(i, j) E W^j (1 - W)^(i - j), and
the empty boxes L_n are its zero decrements.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, NamedTuple

import numpy as np
from scipy import special, stats

from .distributions import Beta, PointMass, Uniform01, WLaw
from .rng import uniform_open

ROUND_CAP = 10**7
DIRECT_MAX_N = 10**6


class RoundCapExceeded(RuntimeError):
    pass


class SieveOutcome(NamedTuple):
    k_occupied: int
    m_range: int
    l_empty: int


EMPTY_OUTCOME = SieveOutcome(0, 0, 0)


class _WStream:
    """Blocks of (w, 1 - w) draws with geometrically growing block size."""

    def __init__(self, law: WLaw, rng, first=16, largest=1024):
        self.law, self.rng = law, rng
        self.size, self.largest = first, largest
        self.w = self.wbar = ()
        self.pos = 0

    def next(self):
        if self.pos == len(self.w):
            w, wbar = self.law.sample_split(self.rng, self.size)
            self.w, self.wbar = w.tolist(), wbar.tolist()
            self.pos = 0
            self.size = min(2 * self.size, self.largest)
        i = self.pos
        self.pos += 1
        return self.w[i], self.wbar[i]


# numpy's binomial forms 1 - p internally and loses p below about 1e-13
SMALL_P = 1e-9


def binomial_small_p(rng, n: int, p: float) -> int:
    """Binomial(n, p) for tiny p by summing Geometric(p) gaps between successes.

    Each gap is ceil(E / -log1p(-p)) with E standard exponential, which is
    exactly Geometric(p); the cost is about n p draws.
    """
    if p <= 0.0 or n <= 0:
        return 0
    lam = -math.log1p(-p)
    mean = n * p
    chunk = int(mean + 6.0 * math.sqrt(mean) + 16)
    count, left = 0, float(n)
    while True:
        # subnormal p gives infinite gaps, which is the right answer
        with np.errstate(over="ignore"):
            pos = np.cumsum(np.ceil(rng.standard_exponential(chunk) / lam))
        hits = int(np.searchsorted(pos, left, side="right"))
        count += hits
        if hits < chunk:
            return min(count, n)
        left -= pos[-1]


def thinning_survivors(rng, remaining, w, wbar):
    """Binomial(remaining, w), drawing on the side with the smaller probability."""
    if w <= 0.5:
        if w < SMALL_P:
            return binomial_small_p(rng, remaining, w)
        return int(rng.binomial(remaining, w))
    if wbar < SMALL_P:
        return remaining - binomial_small_p(rng, remaining, wbar)
    return remaining - int(rng.binomial(remaining, wbar))


def simulate_sieve_thinning(law: WLaw, n: int, rng, round_cap: int = ROUND_CAP) -> SieveOutcome:
    """Round-by-round binomial thinning; works for n up to about 1e18."""
    n = int(n)
    if n < 0:
        raise ValueError("n must be nonnegative")
    if n == 0:
        return EMPTY_OUTCOME
    ws = _WStream(law, rng)
    remaining, rounds, empty = n, 0, 0
    while remaining > 0:
        w, wbar = ws.next()
        stay = thinning_survivors(rng, remaining, w, wbar)
        rounds += 1
        if stay == remaining:
            empty += 1
        remaining = stay
        if rounds >= round_cap:
            raise RoundCapExceeded(f"no absorption after {round_cap} rounds")
    return SieveOutcome(rounds - empty, rounds, empty)


def _neg_log_w(w, wbar):
    w = np.asarray(w)
    wbar = np.asarray(wbar)
    with np.errstate(divide="ignore"):
        return np.where(w > 0.5, -np.log1p(-wbar), -np.log(w))


def simulate_sieve_direct(law: WLaw, n: int, rng, w_rng=None) -> SieveOutcome:
    """Drop n uniform balls on the intervals (T_k, T_{k-1}] and count.

    Works in the log scale: ball u sits in box k iff S_{k-1} <= -log u < S_k
    with S_k = -log T_k. ``w_rng`` optionally supplies the W stream
    separately from the ball positions (used for coupling checks).
    """
    n = int(n)
    if n > DIRECT_MAX_N:
        raise ValueError(f"direct simulation is limited to n <= {DIRECT_MAX_N}")
    if n <= 0:
        return EMPTY_OUTCOME
    depth = -np.log(uniform_open(rng, n))
    deepest = depth.max()
    w_rng = rng if w_rng is None else w_rng
    sums = [np.zeros(1)]
    total, block = 0.0, 16
    while total <= deepest:
        w, wbar = law.sample_split(w_rng, block)
        s = total + np.cumsum(_neg_log_w(w, wbar))
        sums.append(s)
        total = s[-1]
        block = min(2 * block, 4096)
        if sum(len(x) for x in sums) > ROUND_CAP:
            raise RoundCapExceeded("walk did not pass the deepest ball")
    path = np.concatenate(sums)
    boxes = np.searchsorted(path, depth, side="right")
    m = int(boxes.max())
    k = int(np.unique(boxes).size)
    return SieveOutcome(k, m, m - k)


def simulate_poissonized(law: WLaw, t: float, rng) -> SieveOutcome:
    """Sieve with a Poisson(t) number of balls."""
    if not t > 0:
        raise ValueError("t must be positive")
    n = int(rng.poisson(t))
    return simulate_sieve_thinning(law, n, rng) if n else EMPTY_OUTCOME


# --------------------------------------------------------------------------
# Nonincreasing Markov chains


@dataclass(frozen=True, eq=False)
class KernelSpec:
    """Transition law of a nonincreasing chain absorbed at ``absorbing``.

    Either ``row(i)`` returns the probabilities of j = 0..i, or ``sampler``
    draws the next state directly; in the latter case ``delay(i)`` (pi_ii)
    must be given. ``strict_sampler`` optionally draws from the rows
    conditioned on leaving i.
    """

    absorbing: int = 0
    row: Callable[[int], np.ndarray] | None = None
    sampler: Callable | None = None
    delay: Callable[[int], float] | None = None
    absorb: Callable[[int], float] | None = None
    strict_sampler: Callable | None = None
    check_states: int = 64
    _cdf: Callable = field(init=False, repr=False)

    def __post_init__(self):
        if self.row is None and (self.sampler is None or self.delay is None):
            raise ValueError("kernel needs analytic rows or a sampler with a delay accessor")
        if self.row is not None:
            object.__setattr__(self, "_cdf", lru_cache(maxsize=4096)(self._row_cdf))
        for i in range(self.absorbing + 1, self.absorbing + 1 + self.check_states):
            self._validate_state(i)

    def _row_cdf(self, i):
        r = np.asarray(self.row(i), dtype=float)
        return np.cumsum(r)

    def _validate_state(self, i):
        m = self.absorbing
        if self.row is not None:
            r = np.asarray(self.row(i), dtype=float)
            if r.shape != (i + 1,):
                raise ValueError(f"row {i} must list probabilities of states 0..{i}")
            if (r < -1e-15).any() or abs(r.sum() - 1.0) > 1e-9:
                raise ValueError(f"row {i} is not a probability vector")
            if m > 0 and r[:m].sum() > 1e-12:
                raise ValueError(f"row {i} jumps below the absorbing state")
        # leaving i must be possible, otherwise absorption is not certain
        if self.pi_delay(i) >= 1.0:
            raise ValueError(f"state {i} never moves (pi_ii = 1)")

    def pi_delay(self, i: int) -> float:
        if self.delay is not None:
            return float(self.delay(i))
        return float(np.asarray(self.row(i))[i])

    def pi_absorb(self, i: int) -> float:
        if self.absorb is not None:
            return float(self.absorb(i))
        if self.row is None:
            raise ValueError("kernel has no absorption accessor")
        return float(np.asarray(self.row(i))[self.absorbing])

    def next_state(self, i: int, rng) -> int:
        if self.sampler is not None:
            return int(self.sampler(i, rng))
        c = self._cdf(i)
        return min(int(np.searchsorted(c, rng.random() * c[-1], side="right")), i)

    def next_strict(self, i: int, rng) -> int:
        """Next state of the chain with its zero decrements removed."""
        if self.strict_sampler is not None:
            return int(self.strict_sampler(i, rng))
        if self.row is not None:
            c = self._cdf(i)
            return min(int(np.searchsorted(c[:i], rng.random() * c[i - 1], side="right")), i - 1)
        while True:
            j = self.next_state(i, rng)
            if j < i:
                return j


def _check_start(kernel: KernelSpec, n: int):
    if n < kernel.absorbing:
        raise ValueError("start state must be at least the absorbing state")


def simulate_zero_decrements(kernel: KernelSpec, n: int, rng, round_cap: int = ROUND_CAP) -> int:
    """Run the chain from n to absorption and count the steps that stay put."""
    _check_start(kernel, n)
    state, zeros, steps = int(n), 0, 0
    while state > kernel.absorbing:
        nxt = kernel.next_state(state, rng)
        if nxt == state:
            zeros += 1
        state = nxt
        steps += 1
        if steps >= round_cap:
            raise RoundCapExceeded(f"no absorption after {round_cap} steps")
    return zeros


def simulate_zero_decrements_geomrep(kernel: KernelSpec, n: int, rng) -> int:
    """Zero decrements via the strictly decreasing chain plus geometric dwell counts."""
    _check_start(kernel, n)
    state, zeros = int(n), 0
    while state > kernel.absorbing:
        d = kernel.pi_delay(state)
        if d > 0.0:
            zeros += int(rng.geometric(1.0 - d)) - 1
        state = kernel.next_strict(state, rng)
    return zeros


def _beta_binomial_row(a, b):
    def row(i):
        j = np.arange(i + 1)
        logp = (
            special.gammaln(i + 1)
            - special.gammaln(j + 1)
            - special.gammaln(i - j + 1)
            + special.betaln(a + j, b + i - j)
            - special.betaln(a, b)
        )
        return np.exp(logp)

    return row


def sieve_kernel(law: WLaw) -> KernelSpec:
    """Remaining-balls kernel pi_ij = C(i, j) E W^j (1 - W)^(i - j) in closed form."""
    if isinstance(law, Uniform01):
        return KernelSpec(
            row=lambda i: np.full(i + 1, 1.0 / (i + 1)),
            sampler=lambda i, rng: rng.integers(0, i + 1),
            strict_sampler=lambda i, rng: rng.integers(0, i),
            delay=lambda i: 1.0 / (i + 1),
            absorb=lambda i: 1.0 / (i + 1),
        )
    if isinstance(law, Beta):
        a, b = law.a, law.b
        return KernelSpec(
            row=_beta_binomial_row(a, b),
            delay=lambda i: math.exp(special.betaln(a + i, b) - special.betaln(a, b)),
            absorb=lambda i: math.exp(special.betaln(a, b + i) - special.betaln(a, b)),
        )
    if isinstance(law, PointMass):
        x = law.x
        return KernelSpec(
            row=lambda i: stats.binom.pmf(np.arange(i + 1), i, x),
            delay=lambda i: x**i,
            absorb=lambda i: (1.0 - x) ** i,
        )
    raise ValueError(f"no closed-form sieve kernel for {type(law).__name__}; use the thinning simulator")


def delay_absorb_kernel(delay: float, absorbing: int = 0) -> KernelSpec:
    """Each step stays put with probability ``delay`` and otherwise absorbs."""
    if not 0.0 <= delay < 1.0:
        raise ValueError("delay must lie in [0, 1)")

    def row(i):
        r = np.zeros(i + 1)
        r[absorbing] += 1.0 - delay
        r[i] += delay
        return r

    return KernelSpec(absorbing=absorbing, row=row)


def uniform_descent_kernel(absorbing: int = 0) -> KernelSpec:
    """Jump uniformly to a strictly lower state; never delays."""

    def row(i):
        r = np.zeros(i + 1)
        r[absorbing:i] = 1.0 / (i - absorbing)
        return r

    return KernelSpec(absorbing=absorbing, row=row)

"""Upper confidence bounds on the mean of bounded losses.

Four bounds are provided:

* Hoeffding: ``mean + sqrt(ln(1/delta) / (2 n))``.
* Empirical Bernstein: ``mean + sqrt(2 V ln(2/delta) / n) + c ln(2/delta) / (n - 1)``
  with the unbiased sample variance ``V``. ``c = 7/6`` by default
  (``constant="paper"``); ``constant="literature"`` uses the Maurer-Pontil
  value ``c = 7/3``.
* Bernoulli KL ("little kl"): the largest ``p`` with
  ``kl(mean, p) <= ln(sqrt(n)/delta) / n``.
* Hoeffding-Bentkus: the largest ``p`` with
  ``min(exp(-n kl(mean, p)), P(Bin(n, p) <= ceil(n mean))) >= delta``.

The KL and Hoeffding-Bentkus bounds are inverted by bisection on
``[mean, 1]`` to an absolute tolerance of 1e-10. The returned value is the
upper end of the final bracket, so it never undershoots the supremum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy import special

BISECTION_TOL = 1e-10
BISECTION_MAX_ITER = 200


class BoundKind(str, Enum):
    EMPIRICAL_BERNSTEIN = "empirical-bernstein"
    HOEFFDING_BENTKUS = "hoeffding-bentkus"
    BERNOULLI_KL = "bernoulli-kl"
    HOEFFDING = "hoeffding"


class BernsteinConstant(str, Enum):
    DEFAULT = "paper"
    LITERATURE = "literature"


@dataclass(frozen=True)
class BoundSpec:
    kind: BoundKind
    delta: float = 0.05
    loss_range: float = 1.0
    bernstein_constant: BernsteinConstant = BernsteinConstant.DEFAULT

    def __post_init__(self):
        object.__setattr__(self, "kind", BoundKind(self.kind))
        object.__setattr__(self, "bernstein_constant", BernsteinConstant(self.bernstein_constant))
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if not self.loss_range > 0:
            raise ValueError(f"loss_range must be positive, got {self.loss_range}")


def _check_unit(name, x):
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {x}")


def bernoulli_kl(t: float, p: float) -> float:
    """Relative entropy ``kl(t || p)`` of Bernoulli distributions.

    Uses ``0 ln 0 = 0``; returns ``inf`` when ``p`` is 0 or 1 and ``t != p``.
    """
    _check_unit("t", t)
    _check_unit("p", p)
    out = 0.0
    if t > 0.0:
        if p == 0.0:
            return math.inf
        out += t * math.log(t / p)
    if t < 1.0:
        if p == 1.0:
            return math.inf
        out += (1.0 - t) * math.log((1.0 - t) / (1.0 - p))
    return max(out, 0.0)


def binomial_cdf(x: int, n: int, p: float) -> float:
    """``P(Bin(n, p) <= x)`` via the regularised incomplete beta function."""
    if n < 0:
        raise ValueError(f"n must be non-negative, got {n}")
    if not 0 <= x <= n:
        raise ValueError(f"x must lie in [0, {n}], got {x}")
    _check_unit("p", p)
    if x == n:
        return 1.0
    return float(special.bdtr(int(x), int(n), float(p)))


def _bisect_sup(feasible, lo: float, hi: float = 1.0) -> float:
    """Largest point of ``[lo, hi]`` where a monotone predicate holds.

    ``feasible`` must be true at ``lo`` and switch to false at most once.
    """
    if feasible(hi):
        return hi
    for _ in range(BISECTION_MAX_ITER):
        if hi - lo <= BISECTION_TOL:
            break
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            lo = mid
        else:
            hi = mid
    return hi


def ucb_hoeffding(mean: float, n: int, delta: float) -> float:
    _check_unit("mean", mean)
    if n < 1:
        raise ValueError("n must be at least 1")
    return min(1.0, mean + math.sqrt(math.log(1.0 / delta) / (2.0 * n)))


def ucb_hoeffding_padding(n: int, delta: float) -> float:
    """The Hoeffding padding ``sqrt(ln(1/delta) / (2 n))``."""
    return math.sqrt(math.log(1.0 / delta) / (2.0 * n))


def ucb_emp_bernstein(values: Sequence[float], delta: float, loss_range: float = 1.0,
                      constant: BernsteinConstant | str = BernsteinConstant.DEFAULT) -> float:
    values = np.asarray(values, dtype=float)
    n = values.size
    if n < 2:
        raise ValueError("empirical Bernstein needs at least 2 losses")
    if values.min() < 0 or values.max() > loss_range:
        raise ValueError(f"losses must lie in [0, {loss_range}]")
    scale = 7.0 / 6.0 if BernsteinConstant(constant) is BernsteinConstant.DEFAULT else 7.0 / 3.0
    log_term = math.log(2.0 / delta)
    var = float(values.var(ddof=1))
    ucb = values.mean() + math.sqrt(2.0 * var * log_term / n) + scale * loss_range * log_term / (n - 1)
    return min(max(ucb, 0.0), loss_range)


def _snap_mean(mean: float, n: int) -> float:
    # Means arrive as count / n; undo float noise so ceil(n * mean) is exact.
    scaled = n * mean
    nearest = round(scaled)
    return nearest / n if abs(scaled - nearest) < 1e-9 else mean


@lru_cache(maxsize=65536)
def _kl_ucb(mean: float, n: int, delta: float) -> float:
    if mean >= 1.0:
        return 1.0
    level = math.log(math.sqrt(n) / delta) / n
    return _bisect_sup(lambda p: bernoulli_kl(mean, p) <= level, mean)


def ucb_bernoulli_kl(mean: float, n: int, delta: float) -> float:
    _check_unit("mean", mean)
    if n < 1:
        raise ValueError("n must be at least 1")
    return _kl_ucb(float(mean), int(n), float(delta))


def hoeffding_bentkus_tail(mean: float, n: int, p: float) -> float:
    """``min(exp(-n kl(mean, p)), P(Bin(n, p) <= ceil(n mean)))``."""
    mean = _snap_mean(mean, n)
    kl = bernoulli_kl(mean, p)
    chernoff = 0.0 if math.isinf(kl) else math.exp(-n * kl)
    count = min(n, math.ceil(n * mean - 1e-9))
    return min(chernoff, binomial_cdf(count, n, p))


@lru_cache(maxsize=65536)
def _hb_ucb(mean: float, n: int, delta: float) -> float:
    if hoeffding_bentkus_tail(mean, n, mean) < delta:
        return mean
    return _bisect_sup(lambda p: hoeffding_bentkus_tail(mean, n, p) >= delta, mean)


def ucb_hoeffding_bentkus(mean: float, n: int, delta: float) -> float:
    _check_unit("mean", mean)
    if n < 1:
        raise ValueError("n must be at least 1")
    return _hb_ucb(float(mean), int(n), float(delta))


def upper_confidence_bound(losses: Sequence[float], spec: BoundSpec) -> float:
    """UCB on the mean of ``losses`` (each in ``[0, spec.loss_range]``)."""
    losses = np.asarray(losses, dtype=float)
    n = losses.size
    if n == 0:
        raise ValueError("no losses")
    B = spec.loss_range
    if spec.kind is BoundKind.EMPIRICAL_BERNSTEIN:
        return ucb_emp_bernstein(losses, spec.delta, B, spec.bernstein_constant)
    mean = float(losses.mean()) / B
    mean = min(max(mean, 0.0), 1.0)
    if spec.kind is BoundKind.HOEFFDING:
        return B * ucb_hoeffding(mean, n, spec.delta)
    if spec.kind is BoundKind.BERNOULLI_KL:
        return B * ucb_bernoulli_kl(_snap_mean(mean, n), n, spec.delta)
    return B * ucb_hoeffding_bentkus(_snap_mean(mean, n), n, spec.delta)

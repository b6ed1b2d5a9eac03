"""Multiplicative noise distributions and the consistent noisy value oracle.

The multiplier for a set S is ``quantile(u_S)`` where ``u_S`` comes from a keyed
64-bit hash of the set's bit-vector, so re-querying a set always returns the
same value. Algorithm randomness never touches this hash key.
"""
from __future__ import annotations

import math
import threading
from collections import Counter
from dataclasses import dataclass
from typing import Iterable

import numpy as np
from scipy import integrate, special

from .objective import Objective, canonical, to_mask
from .prf import encode_masks, set_uniforms

class NoiseDistribution:
    """A multiplier distribution on [0, inf)."""

    name = "base"
    bounded = True
    psi1_floor = 0.0  # E[exp(|xi-1|/t)] diverges for t at or below this

    def quantile(self, u):
        u = np.asarray(u, dtype=float)
        if np.any((u <= 0) | (u >= 1)):
            raise ValueError("quantile argument must lie in the open interval (0, 1)")
        return self._ppf(u)

    def _ppf(self, u):
        raise NotImplementedError

    def mean(self) -> float:
        raise NotImplementedError

    def support_max(self) -> float:
        raise NotImplementedError

    def expect(self, g) -> float:
        """E[g(xi)] by quadrature over the quantile function."""
        val, _ = integrate.quad(lambda u: g(float(self._ppf(np.array(u)))), 0, 1, limit=200)
        return val

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class NoNoise(NoiseDistribution):
    name = "none"

    def _ppf(self, u):
        return np.ones_like(u)

    def mean(self):
        return 1.0

    def support_max(self):
        return 1.0

    def expect(self, g):
        return g(1.0)

    def to_dict(self):
        return {"family": "none"}


@dataclass(frozen=True)
class Exponential(NoiseDistribution):
    """Exponential with rate 1: tail exponent g(x) = x, so c0 = 1, gamma0 = 1."""

    name = "exponential"
    bounded = False
    psi1_floor = 1.0
    c0 = 1.0
    gamma0 = 1.0

    def _ppf(self, u):
        return -np.log1p(-u)

    def mean(self):
        return 1.0

    def support_max(self):
        return math.inf

    def expect(self, g):
        val, _ = integrate.quad(lambda x: g(x) * math.exp(-x), 0, np.inf, limit=200)
        return val

    def to_dict(self):
        return {"family": "exponential"}


@dataclass(frozen=True)
class UniformBand(NoiseDistribution):
    """Uniform on [1 - a, 1 + a]."""

    halfwidth: float = 0.1
    name = "uniform_band"

    def __post_init__(self):
        if not 0 < self.halfwidth < 1:
            raise ValueError("halfwidth must lie in (0, 1)")

    def _ppf(self, u):
        return 1.0 + self.halfwidth * (2.0 * u - 1.0)

    def mean(self):
        return 1.0

    def support_max(self):
        return 1.0 + self.halfwidth

    def expect(self, g):
        a = self.halfwidth
        val, _ = integrate.quad(g, 1 - a, 1 + a, limit=200)
        return val / (2 * a)

    def to_dict(self):
        return {"family": "uniform_band", "halfwidth": self.halfwidth}


@dataclass(frozen=True)
class TruncatedGaussian(NoiseDistribution):
    """N(1, sigma^2) conditioned on [0, inf), then divided by its mean."""

    sigma: float = 0.2
    name = "truncated_gaussian"
    bounded = False

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")

    @property
    def _lower(self) -> float:
        return -1.0 / self.sigma

    @property
    def _raw_mean(self) -> float:
        a = self._lower
        return 1.0 + self.sigma * math.exp(-a * a / 2) / math.sqrt(2 * math.pi) / special.ndtr(-a)

    def _ppf(self, u):
        lo = special.ndtr(self._lower)
        x = 1.0 + self.sigma * special.ndtri(lo + u * (1.0 - lo))
        return np.maximum(x, 0.0) / self._raw_mean

    def mean(self):
        return 1.0

    def support_max(self):
        return math.inf

    def expect(self, g):
        s, mu = self.sigma, self._raw_mean
        z = special.ndtr(-self._lower)

        def dens(y):  # density of the rescaled variable at y
            x = y * mu
            return mu * math.exp(-((x - 1) / s) ** 2 / 2) / (s * math.sqrt(2 * math.pi) * z)

        val, _ = integrate.quad(lambda y: g(y) * dens(y), 0, np.inf, limit=200)
        return val

    def to_dict(self):
        return {"family": "truncated_gaussian", "sigma": self.sigma}


@dataclass(frozen=True)
class TwoPoint(NoiseDistribution):
    """Value ``high`` with probability ``p``, ``low`` otherwise.

    With ``normalize`` both values are divided by the mean so that E = 1.
    """

    high: float = 10.0
    p: float = 0.01
    low: float = 1.0
    normalize: bool = True
    name = "two_point"

    def __post_init__(self):
        if not 0 <= self.p <= 1:
            raise ValueError("p must be a probability")
        if self.low < 0 or self.high < self.low:
            raise ValueError("need 0 <= low <= high")

    @property
    def _scale(self) -> float:
        raw = self.p * self.high + (1 - self.p) * self.low
        return 1.0 / raw if self.normalize else 1.0

    def _ppf(self, u):
        return np.where(u >= 1.0 - self.p, self.high, self.low) * self._scale

    def mean(self):
        return (self.p * self.high + (1 - self.p) * self.low) * self._scale

    def support_max(self):
        return self.high * self._scale

    def expect(self, g):
        s = self._scale
        return self.p * g(self.high * s) + (1 - self.p) * g(self.low * s)

    def to_dict(self):
        return {"family": "two_point", "high": self.high, "p": self.p,
                "low": self.low, "normalize": self.normalize}


def noise_from_dict(d: dict) -> NoiseDistribution:
    fam = d.get("family", "none")
    if fam == "none":
        return NoNoise()
    if fam == "exponential":
        return Exponential()
    if fam == "uniform_band":
        return UniformBand(float(d.get("halfwidth", 0.1)))
    if fam == "truncated_gaussian":
        return TruncatedGaussian(float(d.get("sigma", 0.2)))
    if fam == "two_point":
        return TwoPoint(float(d.get("high", 10.0)), float(d.get("p", 0.01)),
                        float(d.get("low", 1.0)), bool(d.get("normalize", True)))
    raise ValueError(f"unknown noise family {fam!r}")


def quantile(dist: NoiseDistribution, u):
    return dist.quantile(u)


def sub_exponential_norm(dist: NoiseDistribution, rtol: float = 1e-6) -> float:
    """Least t with E[exp(|xi - 1| / t)] <= 2, by bisection on quadrature values."""
    if isinstance(dist, NoNoise):
        return 0.0

    def ok(t):
        if t <= dist.psi1_floor:
            return False
        return dist.expect(lambda x: math.exp(min(abs(x - 1.0) / t, 700.0))) <= 2.0

    if dist.bounded:
        # |xi - 1| <= b + 1 when the support is bounded by b
        hi = (dist.support_max() + 1.0) / math.log(2.0)
    else:
        hi = max(2.0, 2.0 * dist.psi1_floor)
        while not ok(hi):
            hi *= 2.0
    lo = hi
    while ok(lo):
        lo /= 2.0
        if lo < 1e-12:
            return 0.0
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


class NoisyOracle:
    """Consistent noisy value oracle f~(S) = xi_S * f(S) with query accounting."""

    def __init__(self, objective: Objective, noise: NoiseDistribution | None = None,
                 seed: int = 0, track_sets: bool = False):
        self.objective = objective
        self.noise = noise if noise is not None else NoNoise()
        self.seed = int(seed)
        self.track_sets = track_sets
        self.set_counts: Counter = Counter()
        self._count = 0
        self._lock = threading.Lock()

    @property
    def n(self) -> int:
        return self.objective.n

    @property
    def query_count(self) -> int:
        return self._count

    def multipliers(self, masks: np.ndarray) -> np.ndarray:
        """Noise multipliers of the given sets; does not count as queries."""
        masks = np.atleast_2d(masks)
        if isinstance(self.noise, NoNoise):
            return np.ones(masks.shape[0])
        return self.noise._ppf(set_uniforms(self.seed, masks))

    def noisy_values(self, masks: np.ndarray) -> np.ndarray:
        masks = np.atleast_2d(np.asarray(masks, dtype=bool))
        with self._lock:
            self._count += masks.shape[0]
            if self.track_sets:
                for w in encode_masks(masks):
                    self.set_counts[w.tobytes()] += 1
        return self.multipliers(masks) * self.objective.values(masks)

    def noisy_value(self, S: Iterable[int]) -> float:
        return float(self.noisy_values(to_mask(canonical(S, self.n), self.n)[None, :])[0])

    def times_queried(self, S: Iterable[int]) -> int:
        mask = to_mask(canonical(S, self.n), self.n)[None, :]
        return self.set_counts[encode_masks(mask)[0].tobytes()]


def noisy_value(oracle: NoisyOracle, S: Iterable[int]) -> float:
    return oracle.noisy_value(S)


def query_count(oracle: NoisyOracle) -> int:
    return oracle.query_count

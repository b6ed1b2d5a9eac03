"""Coefficients, smoothing surrogates, the auxiliary function and its estimators.

The auxiliary function of a set function g over a set A of size a is

    phi_g(A) = sum_{T subset of A} m_{a-1, |T|-1} g(T),
    m_{s,t}  = int_0^1 e^p / (e - 1) * p^t (1 - p)^(s - t) dp,   m_{s,-1} = 0.

Two smoothing surrogates replace g: ``h`` averages f over one added element and
``h_H`` averages f over all subsets of a pinned set H. Sampling estimators
draw sets from the normalized coefficient distribution and rescale the mean
noisy value. Each candidate set gets its own RNG stream keyed by a tuple of
integers, so estimates do not depend on how candidates are batched.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import special

from .noise import NoisyOracle
from .objective import Objective, Subset, canonical, to_mask
from .prf import keyed_uniforms

E_NORM = math.e - 1.0
MAX_EXACT_A = 14
MAX_EXACT_H = 12
MAX_SURROGATE_H = 22

ValueFn = Callable[[np.ndarray], np.ndarray]


# ---------------------------------------------------------------- coefficients

@lru_cache(maxsize=None)
def log_m_coefficient(s: int, t: int) -> float:
    """log m_{s,t} for 0 <= t <= s.

    Expands e^p as a power series, giving (e-1)^-1 sum_k B(t+k+1, s-t+1)/k!.
    Successive terms shrink by (t+k+1)/((s+k+2)(k+1)), so the series is summed
    relative to its first term until the geometric tail bound is negligible.
    """
    ratio_sum, term, k = 1.0, 1.0, 0
    while True:
        term *= (t + k + 1) / ((s + k + 2) * (k + 1))
        ratio_sum += term
        k += 1
        if term * 2.0 / (k + 1) < 1e-17 * ratio_sum:
            break
    return special.betaln(t + 1, s - t + 1) + math.log(ratio_sum) - math.log(E_NORM)


def m_coefficient(s: int, t: int) -> float:
    if s < 0 or t < -1 or t > s:
        raise ValueError(f"m_{{s,t}} needs -1 <= t <= s and s >= 0, got s={s}, t={t}")
    if t == -1:
        return 0.0
    return math.exp(log_m_coefficient(s, t))


@lru_cache(maxsize=None)
def m_row(s: int) -> np.ndarray:
    """Array whose entry j is m_{s, j-1} for j = 0..s+1 (entry 0 is m_{s,-1} = 0)."""
    row = np.array([0.0] + [m_coefficient(s, t) for t in range(s + 1)])
    row.setflags(write=False)
    return row


def harmonic(k: int) -> float:
    return float(sum(1.0 / i for i in range(1, k + 1)))


def _log_comb(a, t):
    return special.gammaln(a + 1) - special.gammaln(t + 1) - special.gammaln(a - t + 1)


@dataclass(frozen=True)
class TauClasses:
    """Per-size weights of the coefficient form of phi_h over a set of size a.

    INSIDE: each T inside A with |T| = t carries t (m_{a-1,t-1} + m_{a-1,t-2}) / n.
    OUTSIDE: each pair (S, e) with S inside A, |S| = s >= 1, e outside A
    carries m_{a-1,s-1} / n and stands for the set S + e.
    """

    a: int
    n: int

    def __post_init__(self):
        if not 1 <= self.a <= self.n:
            raise ValueError("need 1 <= a <= n")

    @property
    def sizes(self) -> np.ndarray:
        return np.arange(1, self.a + 1)

    @property
    def inside_weight(self) -> np.ndarray:
        row, t = m_row(self.a - 1), self.sizes
        return t * (row[t] + row[t - 1]) / self.n

    @property
    def outside_weight(self) -> np.ndarray:
        return m_row(self.a - 1)[self.sizes] / self.n

    @property
    def log_inside_count(self) -> np.ndarray:
        return _log_comb(self.a, self.sizes)

    @property
    def log_outside_count(self) -> np.ndarray:
        extra = math.log(self.n - self.a) if self.n > self.a else -np.inf
        return _log_comb(self.a, self.sizes) + extra

    def class_log_mass(self) -> np.ndarray:
        """log of count * weight, INSIDE sizes 1..a followed by OUTSIDE sizes 1..a."""
        with np.errstate(divide="ignore"):
            return np.concatenate([self.log_inside_count + np.log(self.inside_weight),
                                   self.log_outside_count + np.log(self.outside_weight)])

    def total(self) -> float:
        return float(np.exp(special.logsumexp(self.class_log_mass())))

    def sum_squares(self) -> float:
        with np.errstate(divide="ignore"):
            lm = np.concatenate([self.log_inside_count + 2 * np.log(self.inside_weight),
                                 self.log_outside_count + 2 * np.log(self.outside_weight)])
        return float(np.exp(special.logsumexp(lm)))

    def max_weight(self) -> float:
        w = self.inside_weight
        if self.n > self.a:
            w = np.concatenate([w, self.outside_weight])
        return float(w.max())

    def class_probabilities(self) -> np.ndarray:
        lm = self.class_log_mass()
        return np.exp(lm - special.logsumexp(lm))


def h_size_weights(a: int) -> np.ndarray:
    """Entry t-1 is C(a,t) m_{a-1,t-1} for t = 1..a; their sum is s(A)."""
    t = np.arange(1, a + 1)
    return np.exp(_log_comb(a, t) + np.log(m_row(a - 1)[t]))


# ---------------------------------------------------------------- surrogates

def as_value_fn(source) -> ValueFn:
    """Batch value function of an Objective, a NoisyOracle, or a callable on masks."""
    if isinstance(source, NoisyOracle):
        return source.noisy_values
    if isinstance(source, Objective):
        return source.values
    return source


def _n_of(source, n):
    if n is not None:
        return n
    return source.n


def surrogate_h(source, S: Iterable[int], n: int | None = None) -> float:
    """Average of f(S + e) over every e in the ground set."""
    n = _n_of(source, n)
    mask = to_mask(S, n)
    masks = np.repeat(mask[None, :], n, axis=0)
    masks[np.arange(n), np.arange(n)] = True
    return float(as_value_fn(source)(masks).mean())


def subset_masks(base: np.ndarray, ids: Sequence[int]) -> np.ndarray:
    """All 2^k masks base | (subset of ids), subset k-th bit <-> ids[k]."""
    k = len(ids)
    codes = np.arange(1 << k, dtype=np.int64)
    bits = ((codes[:, None] >> np.arange(k)) & 1).astype(bool)
    masks = np.repeat(base[None, :], 1 << k, axis=0)
    if k:
        masks[:, list(ids)] |= bits
    return masks


def surrogate_hH(source, H: Iterable[int], S: Iterable[int], n: int | None = None) -> float:
    """Average of f(S + H_j) over all subsets H_j of H."""
    n = _n_of(source, n)
    H, S = canonical(H, n), canonical(S, n)
    if len(H) > MAX_SURROGATE_H:
        raise ValueError(f"|H| = {len(H)} too large for exact averaging; use the estimator")
    if set(H) & set(S):
        raise ValueError("S must be disjoint from H")
    fn = as_value_fn(source)
    base = to_mask(S, n)
    # enumerate the low 14 bits in one batch per assignment of the high bits
    total = 0.0
    lo_bits = list(H[:14])
    for hi_code in range(1 << max(0, len(H) - 14)):
        b = base.copy()
        for j, e in enumerate(H[14:]):
            if hi_code >> j & 1:
                b[e] = True
        total += float(fn(subset_masks(b, lo_bits)).sum())
    return total / (1 << len(H))


def f0(source, S: Iterable[int], n: int | None = None) -> float:
    """Average of f(S - e) over the elements e of a nonempty S."""
    n = _n_of(source, n)
    S = canonical(S, n)
    if not S:
        raise ValueError("f0 is undefined on the empty set")
    masks = np.repeat(to_mask(S, n)[None, :], len(S), axis=0)
    masks[np.arange(len(S)), list(S)] = False
    return float(as_value_fn(source)(masks).mean())


def noisy_f0(oracle: NoisyOracle, S: Iterable[int]) -> float:
    return f0(oracle, S)


# ---------------------------------------------------------------- exact phi

def _surrogate_batch(fn: ValueFn, masks: np.ndarray, surrogate: str, H: Subset) -> np.ndarray:
    k, n = masks.shape
    if surrogate == "f":
        return fn(masks)
    if surrogate == "h":
        big = np.repeat(masks[:, None, :], n, axis=1)
        big[:, np.arange(n), np.arange(n)] = True
        return fn(big.reshape(k * n, n)).reshape(k, n).mean(axis=1)
    if surrogate == "hH":
        m = len(H)
        sub = subset_masks(np.zeros(n, dtype=bool), H)
        big = masks[:, None, :] | sub[None, :, :]
        return fn(big.reshape(k << m, n)).reshape(k, 1 << m).mean(axis=1)
    raise ValueError(f"unknown surrogate {surrogate!r}")


def phi_exact_batch(fn: ValueFn, masks: np.ndarray, surrogate: str = "h",
                    H: Subset = ()) -> np.ndarray:
    """Exact phi for a batch of equal-size sets, by expanding every subset."""
    masks = np.atleast_2d(masks)
    k, n = masks.shape
    sizes = masks.sum(axis=1)
    a = int(sizes[0])
    if np.any(sizes != a) or a < 1:
        raise ValueError("batch sets must share one positive size")
    if a > MAX_EXACT_A:
        raise ValueError(f"|A| = {a} too large for exact expansion")
    codes = np.arange(1 << a, dtype=np.int64)
    bits = ((codes[:, None] >> np.arange(a)) & 1).astype(bool)
    coef = m_row(a - 1)[bits.sum(axis=1)]  # m_{a-1,|T|-1}
    ids = np.nonzero(masks)[1].reshape(k, a)
    sub = np.zeros((k, 1 << a, n), dtype=bool)
    rows = np.arange(k)[:, None, None]
    sub[rows, np.arange(1 << a)[None, :, None], ids[:, None, :]] = bits[None, :, :]
    vals = _surrogate_batch(fn, sub.reshape(k << a, n), surrogate, H).reshape(k, 1 << a)
    return vals @ coef


def phi_exact_bruteforce(source, A: Iterable[int], surrogate: str = "h",
                         H: Iterable[int] = (), n: int | None = None) -> float:
    """phi of A by direct expansion with exact surrogate values (small sets only)."""
    n = _n_of(source, n)
    A, H = canonical(A, n), canonical(H, n)
    if len(A) > MAX_EXACT_A or len(H) > MAX_EXACT_H:
        raise ValueError("set too large for brute-force expansion")
    if set(A) & set(H):
        raise ValueError("A must be disjoint from H")
    if not A:
        return 0.0
    return float(phi_exact_batch(as_value_fn(source), to_mask(A, n)[None, :], surrogate, H)[0])


def phi_h_coefficient_form(source, A: Iterable[int], n: int | None = None) -> float:
    """phi_h(A) written as a weighted sum of f over the INSIDE and OUTSIDE classes."""
    n = _n_of(source, n)
    A = canonical(A, n)
    a = len(A)
    if not 1 <= a <= MAX_EXACT_A:
        raise ValueError("need 1 <= |A| <= 14")
    fn = as_value_fn(source)
    tau = TauClasses(a, n)
    inside = subset_masks(np.zeros(n, dtype=bool), A)
    sizes = inside.sum(axis=1)
    w_in = np.concatenate([[0.0], tau.inside_weight])[sizes]
    total = float(fn(inside) @ w_in)
    outside = [e for e in range(n) if e not in set(A)]
    if outside:
        w_out = np.concatenate([[0.0], tau.outside_weight])[sizes]
        big = np.repeat(inside[:, None, :], len(outside), axis=1)
        big[:, np.arange(len(outside)), outside] = True
        vals = fn(big.reshape(-1, n)).reshape(inside.shape[0], len(outside))
        total += float(w_out @ vals.sum(axis=1))
    return total


# ---------------------------------------------------------------- estimators

def sample_count_h(r: int, n: int, multiplier: float = 1.0) -> int:
    """ln r * sqrt(n) * max(r, ln n), scaled."""
    base = math.log(max(r, 2)) * math.sqrt(n) * max(r, math.log(n))
    return max(1, math.ceil(multiplier * base))


def sample_count_hH(r: int, n: int, eps: float, multiplier: float = 1.0) -> int:
    """32 r H_r^2 (ln n)^2.5 / eps, scaled."""
    base = 32.0 * r * harmonic(r) ** 2 * math.log(n) ** 2.5 / eps
    return max(1, math.ceil(multiplier * base))


@dataclass
class EstimatorConfig:
    samples: int = 1000
    sample_multiplier: float = 1.0
    seed: int = 0
    alpha: float = 0.0
    delta: float = 0.0

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError("sample count must be at least 1")


def _random_subsets(keys_u: np.ndarray, sizes: np.ndarray) -> np.ndarray:
    """Rows of keys -> boolean selection of the ``size`` smallest keys (a uniform subset)."""
    ranks = np.argsort(np.argsort(keys_u, axis=-1), axis=-1)
    return ranks < sizes[..., None]


class PhiEstimator:
    """Batch approximation oracle: ``__call__(masks, keys)`` returns one value per set.

    Sampling estimators split the batch so that at most ``max_cells`` mask
    entries are materialized at once; every row draws from its own keyed
    stream, so the split does not change any value.
    """

    queries_per_call = 1
    max_cells = 1 << 24

    def __call__(self, masks: np.ndarray, keys: Sequence[Sequence[int]]) -> np.ndarray:
        masks = np.atleast_2d(np.asarray(masks, dtype=bool))
        keys = list(keys)
        if len(keys) != masks.shape[0]:
            raise ValueError("one stream key per set required")
        per = max(1, self.queries_per_call) * masks.shape[1]
        step = max(1, self.max_cells // per)
        return np.concatenate([self._batch(masks[lo:lo + step], keys[lo:lo + step])
                               for lo in range(0, masks.shape[0], step)])

    def _batch(self, masks: np.ndarray, keys: list) -> np.ndarray:
        raise NotImplementedError


class PhiHEstimator(PhiEstimator):
    """Monte-Carlo estimate of phi_h through the INSIDE/OUTSIDE class distribution."""

    def __init__(self, oracle: NoisyOracle, cfg: EstimatorConfig):
        self.oracle, self.cfg = oracle, cfg
        self.queries_per_call = cfg.samples

    def sample_sets(self, masks, keys):
        """Sampled sets (C, M, n) and their class labels (C, M).

        Labels 0..a-1 are INSIDE classes of size label+1, labels a..2a-1 are
        OUTSIDE classes of size label-a+1.
        """
        masks = np.atleast_2d(np.asarray(masks, dtype=bool))
        C, n = masks.shape
        a = int(masks[0].sum())
        M = self.cfg.samples
        tau = TauClasses(a, n)
        cdf = np.cumsum(tau.class_probabilities())
        cdf[-1] = 1.0
        U = keyed_uniforms(self.cfg.seed, keys, M * (a + 2)).reshape(C, M, a + 2)
        cls = np.minimum(np.searchsorted(cdf, U[..., 0], side="right"), 2 * a - 1)
        size = cls % a + 1
        outside = cls >= a
        sel = _random_subsets(U[..., 1:a + 1], size)  # (C, M, a)
        ids_in = np.nonzero(masks)[1].reshape(C, a)
        out = np.zeros((C, M, n), dtype=bool)
        cc = np.arange(C)[:, None, None]
        mm = np.arange(M)[None, :, None]
        out[cc, mm, ids_in[:, None, :]] = sel
        if n > a:
            ids_out = np.nonzero(~masks)[1].reshape(C, n - a)
            j = np.minimum((U[..., a + 1] * (n - a)).astype(np.int64), n - a - 1)
            e = np.take_along_axis(ids_out, j, axis=1)  # (C, M)
            ci, mi = np.nonzero(outside)
            out[ci, mi, e[ci, mi]] = True
        return out, cls

    def sample_values(self, masks, keys):
        """Per-sample rescaled noisy values (C, M); their row means are the estimates."""
        out, _ = self.sample_sets(masks, keys)
        C, M, n = out.shape
        a = int(np.atleast_2d(masks)[0].sum())
        vals = self.oracle.noisy_values(out.reshape(C * M, n)).reshape(C, M)
        return TauClasses(a, n).total() * vals

    def _batch(self, masks, keys):
        return self.sample_values(masks, keys).mean(axis=1)


class PhiHHEstimator(PhiEstimator):
    """Monte-Carlo estimate of phi_{h_H}: draw T by coefficient mass, then a uniform subset of H."""

    def __init__(self, oracle: NoisyOracle, H: Iterable[int], cfg: EstimatorConfig):
        self.oracle, self.cfg = oracle, cfg
        self.H = canonical(H, oracle.n)
        self.queries_per_call = cfg.samples

    def sample_sets(self, masks, keys):
        """Sampled sets (C, M, n) and the drawn size of their part inside A (C, M)."""
        masks = np.atleast_2d(np.asarray(masks, dtype=bool))
        C, n = masks.shape
        if self.H and masks[:, list(self.H)].any():
            raise ValueError("estimated sets must be disjoint from H")
        a = int(masks[0].sum())
        k = len(self.H)
        M = self.cfg.samples
        w = h_size_weights(a)
        cdf = np.cumsum(w / w.sum())
        cdf[-1] = 1.0
        U = keyed_uniforms(self.cfg.seed, keys, M * (a + 1 + k)).reshape(C, M, a + 1 + k)
        size = np.minimum(np.searchsorted(cdf, U[..., 0], side="right"), a - 1) + 1
        sel = _random_subsets(U[..., 1:a + 1], size)
        ids_in = np.nonzero(masks)[1].reshape(C, a)
        out = np.zeros((C, M, n), dtype=bool)
        cc = np.arange(C)[:, None, None]
        mm = np.arange(M)[None, :, None]
        out[cc, mm, ids_in[:, None, :]] = sel
        if k:
            out[:, :, list(self.H)] = U[..., a + 1:] < 0.5
        return out, size

    def sample_values(self, masks, keys):
        """Per-sample rescaled noisy values (C, M); their row means are the estimates."""
        out, _ = self.sample_sets(masks, keys)
        C, M, n = out.shape
        a = int(np.atleast_2d(masks)[0].sum())
        vals = self.oracle.noisy_values(out.reshape(C * M, n)).reshape(C, M)
        return float(h_size_weights(a).sum()) * vals

    def _batch(self, masks, keys):
        return self.sample_values(masks, keys).mean(axis=1)


class ExactPhi(PhiEstimator):
    """Exact phi with a chosen surrogate; a test hook standing in for an estimator."""

    def __init__(self, source, surrogate: str = "h", H: Iterable[int] = (), n: int | None = None):
        self.n = _n_of(source, n)
        self.fn = as_value_fn(source)
        self.surrogate = surrogate
        self.H = canonical(H, self.n)
        self.queries_per_call = 0

    def __call__(self, masks, keys=None):
        return phi_exact_batch(self.fn, np.atleast_2d(masks), self.surrogate, self.H)


def estimate_phi_h(oracle: NoisyOracle, A: Iterable[int], cfg: EstimatorConfig,
                   key: Sequence[int] = (0,)) -> float:
    A = canonical(A, oracle.n)
    if not A:
        raise ValueError("A must be nonempty")
    return float(PhiHEstimator(oracle, cfg)(to_mask(A, oracle.n)[None, :], [key])[0])


def estimate_phi_hH(oracle: NoisyOracle, A: Iterable[int], H: Iterable[int],
                    cfg: EstimatorConfig, key: Sequence[int] = (0,)) -> float:
    A, H = canonical(A, oracle.n), canonical(H, oracle.n)
    if set(A) & set(H):
        raise ValueError("A must be disjoint from H")
    if not A:
        raise ValueError("A must be nonempty")
    return float(PhiHHEstimator(oracle, H, cfg)(to_mask(A, oracle.n)[None, :], [key])[0])

"""End-to-end solvers built on the noisy local search, two baselines, and a dispatcher.

Every solver reads the objective only through the noisy oracle. The true value
of the returned set is computed afterwards from the exact objective, which
does not touch the query counter.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .auxiliary import (EstimatorConfig, ExactPhi, PhiHEstimator, PhiHHEstimator,
                        sample_count_h, sample_count_hH)
from .local_search import NLSConfig, NLSTrace, choose_parameters, iteration_cap, nls
from .matroid import (Constraint, Contraction, Partition, Truncation, Uniform,
                      additions_mask, extend_to_base)
from .noise import NoisyOracle
from .objective import Subset, canonical, from_mask, to_mask

ALGORITHMS = ("card-small", "card-large", "matroid-small", "matroid-large", "sbo",
              "greedy", "bundle-greedy")


@dataclass
class SolverOptions:
    eps: float = 0.2
    seed: int = 0  # algorithm randomness, independent of the noise seed
    sample_multiplier: float = 1.0
    strict: bool = False  # run the full iteration cap, no early stop
    samples: int | None = None  # test hook: fixed sample count per estimate
    exact_phi: bool = False  # test hook: exact auxiliary function on the noise-free objective
    pinned: tuple | int | None = None  # test hook: pinned set (ids) or its size
    part_size: int | None = None  # test hook: part size for the strongly base-orderable solver
    chunk_size: int | None = None


@dataclass
class SolverReport:
    algorithm: str
    chosen: Subset
    value: float  # exact objective value of the chosen set
    queries: int  # noisy queries spent, equal to the oracle counter delta
    feasible: bool
    traces: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"algorithm": self.algorithm, "chosen": list(self.chosen), "value": self.value,
                "queries": self.queries, "feasible": self.feasible,
                "traces": [t.to_dict() for t in self.traces], "timings": self.timings,
                "params": self.params, "extras": self.extras}


def _finish(name, oracle, C, chosen, q0, traces, timings, params, extras=None):
    chosen = canonical(chosen, oracle.n)
    return SolverReport(
        algorithm=name, chosen=chosen, value=oracle.objective.value(chosen),
        queries=oracle.query_count - q0, feasible=C.is_independent(chosen),
        traces=traces, timings=timings, params=params, extras=extras or {})


def _phi_h(oracle, opts, r, n, phase):
    M = opts.samples or sample_count_h(r, n, opts.sample_multiplier)
    if opts.exact_phi:
        return ExactPhi(oracle.objective, "h"), 0
    return PhiHEstimator(oracle, EstimatorConfig(samples=M, seed=_seed(opts, phase))), M


def _phi_hH(oracle, opts, r, n, H, phase):
    M = opts.samples or sample_count_hH(r, n, opts.eps, opts.sample_multiplier)
    if opts.exact_phi:
        return ExactPhi(oracle.objective, "hH", H), 0
    return PhiHHEstimator(oracle, H, EstimatorConfig(samples=M, seed=_seed(opts, phase))), M


def _seed(opts, phase):
    return (int(opts.seed) * 1_000_003 + phase) & 0xFFFFFFFFFFFFFFFF


def _nls_config(step, cap, opts, phase):
    return NLSConfig(step=step, max_iterations=cap, early_stop=not opts.strict,
                     phase=phase, chunk_size=opts.chunk_size)


def _noisy_argmax_addition(oracle, S):
    """argmax over e outside S of noisy f(S + e); ties to the smallest id."""
    n = oracle.n
    mask = to_mask(S, n)
    ys = np.flatnonzero(~mask)
    cand = np.repeat(mask[None, :], ys.size, axis=0)
    cand[np.arange(ys.size), ys] = True
    vals = oracle.noisy_values(cand)
    return int(ys[int(np.argmax(vals))])


def _noisy_f0(oracle, S):
    S = canonical(S, oracle.n)
    masks = np.repeat(to_mask(S, oracle.n)[None, :], len(S), axis=0)
    masks[np.arange(len(S)), list(S)] = False
    return float(oracle.noisy_values(masks).mean())


def pinned_size(n: int) -> int:
    return math.ceil(3.0 * math.log(n))


# ---------------------------------------------------------------- cardinality

def solve_cardinality_small(oracle: NoisyOracle, r: int, opts: SolverOptions | None = None) -> SolverReport:
    """Local search on sets of size r - 1 with the h-surrogate, then one noisy-greedy step."""
    opts = opts or SolverOptions()
    n = oracle.n
    if r < 2 or r > n:
        raise ValueError(f"need 2 <= r <= n, got r={r}, n={n}")
    q0, t0 = oracle.query_count, time.perf_counter()
    alpha, step, _ = choose_parameters(opts.eps, r)
    cap = iteration_cap(alpha, step, r - 1)
    delta = 1.0 / ((cap + 1) * (r - 1) * n * n)
    approx, M = _phi_h(oracle, opts, r, n, 0)
    S_L, trace = nls(approx, Uniform(r - 1, n), _nls_config(step, cap, opts, 0))
    t1 = time.perf_counter()
    e = _noisy_argmax_addition(oracle, S_L)
    chosen = S_L + (e,)
    timings = {"local_search": t1 - t0, "greedy_step": time.perf_counter() - t1}
    params = {"eps": opts.eps, "alpha": alpha, "step": step, "delta": delta, "samples": M,
              "iteration_cap": cap, "r": r, "n": n}
    return _finish("card-small", oracle, Uniform(r, n), chosen, q0, [trace], timings, params,
                   {"local_search_set": list(S_L)})


def solve_cardinality_large(oracle: NoisyOracle, r: int, opts: SolverOptions | None = None) -> SolverReport:
    """Pin H (the smallest ids), local search on the rest with the h_H surrogate, return S + H."""
    opts = opts or SolverOptions()
    n = oracle.n
    if opts.pinned is None:
        H = tuple(range(min(pinned_size(n), n)))
    elif isinstance(opts.pinned, int):
        H = tuple(range(opts.pinned))
    else:
        H = canonical(opts.pinned, n)
    if r > n or r < 2:
        raise ValueError(f"need 2 <= r <= n, got r={r}, n={n}")
    if r <= len(H):
        raise ValueError(f"r={r} does not exceed the pinned size {len(H)}; use card-small")
    q0, t0 = oracle.query_count, time.perf_counter()
    alpha, step, _ = choose_parameters(opts.eps, r)
    cap = iteration_cap(alpha, step, r - len(H))
    delta = 3.0 / n**6
    approx, M = _phi_hH(oracle, opts, r, n, H, 0)
    S_L, trace = nls(approx, Contraction(Uniform(r, n), H), _nls_config(step, cap, opts, 0))
    timings = {"local_search": time.perf_counter() - t0}
    params = {"eps": opts.eps, "alpha": alpha, "step": step, "delta": delta, "samples": M,
              "iteration_cap": cap, "pinned": list(H), "r": r, "n": n}
    return _finish("card-large", oracle, Uniform(r, n), S_L + H, q0, [trace], timings, params)


# ---------------------------------------------------------------- matroids

def solve_matroid_small(oracle: NoisyOracle, C: Constraint, opts: SolverOptions | None = None) -> SolverReport:
    """Local search below the rank, one unconstrained noisy-greedy step, then a deletion-average comparison."""
    opts = opts or SolverOptions()
    n = oracle.n
    r = C.rank()
    if r < 3:
        raise ValueError(f"matroid-small needs rank >= 3, got {r}")
    q0, t0 = oracle.query_count, time.perf_counter()
    alpha, step, _ = choose_parameters(opts.eps, r)
    cap = iteration_cap(alpha, step, r - 1)
    delta = 1.0 / ((cap + 1) * (r - 1) * n * n)
    approx, M = _phi_h(oracle, opts, r, n, 0)
    S_L, trace = nls(approx, Truncation(C, r - 1), _nls_config(step, cap, opts, 0))
    t1 = time.perf_counter()
    e = _noisy_argmax_addition(oracle, S_L)  # S_L + e may be infeasible
    S_M = S_L + (e,)
    f0_L, f0_M = _noisy_f0(oracle, S_L), _noisy_f0(oracle, S_M)
    chosen = S_L if f0_L >= 0.5 * f0_M else (e,)
    timings = {"local_search": t1 - t0, "comparison": time.perf_counter() - t1}
    params = {"eps": opts.eps, "alpha": alpha, "step": step, "delta": delta, "samples": M,
              "iteration_cap": cap, "r": r, "n": n}
    extras = {"local_search_set": list(S_L), "added": e, "f0_local": f0_L, "f0_extended": f0_M,
              "kept_local": chosen == S_L}
    return _finish("matroid-small", oracle, C, chosen, q0, [trace], timings, params, extras)


def _split_parts(B0: Subset, k: int) -> list[Subset]:
    """k consecutive parts of B0 in ascending id order, sizes as equal as possible."""
    return [tuple(int(e) for e in p) for p in np.array_split(np.asarray(B0, dtype=int), k)]


def _pinned_parts_search(name, oracle, C, parts, opts, r):
    n = oracle.n
    q0, t0 = oracle.query_count, time.perf_counter()
    alpha, step, _ = choose_parameters(opts.eps, r)
    delta = 3.0 / n**6
    traces, candidates, scores, caps = [], [], [], []
    M = 0
    for t, H in enumerate(parts):
        contracted = Contraction(C, H)
        cap = iteration_cap(alpha, step, max(1, r - len(H)))
        approx, M = _phi_hH(oracle, opts, r, n, H, t)
        S_t, trace = nls(approx, contracted, _nls_config(step, cap, opts, t))
        traces.append(trace)
        caps.append(cap)
        candidates.append(canonical(S_t + H, n))
    t1 = time.perf_counter()
    scores = [_noisy_f0(oracle, S) for S in candidates]
    best = int(np.argmax(scores))  # first maximum: ties go to the earliest part
    timings = {"local_search": t1 - t0, "comparison": time.perf_counter() - t1}
    params = {"eps": opts.eps, "alpha": alpha, "step": step, "delta": delta, "samples": M,
              "iteration_caps": caps, "parts": [list(p) for p in parts], "r": r, "n": n}
    extras = {"candidates": [list(c) for c in candidates], "scores": scores, "chosen_part": best}
    return _finish(name, oracle, C, candidates[best], q0, traces, timings, params, extras)


def solve_matroid_large(oracle: NoisyOracle, C: Constraint, opts: SolverOptions | None = None) -> SolverReport:
    """Split a base into two halves, grow each half back to a base by local search, keep the better."""
    opts = opts or SolverOptions()
    r = C.rank()
    if r < 4:
        raise ValueError(f"matroid-large needs rank >= 4, got {r}")
    B0 = extend_to_base(C, ())
    parts = [B0[: r // 2], B0[r // 2:]]
    return _pinned_parts_search("matroid-large", oracle, C, parts, opts, r)


def solve_sbo(oracle: NoisyOracle, C: Constraint, opts: SolverOptions | None = None) -> SolverReport:
    """Split a base into floor(r / l) parts and grow each back to a base; keep the best."""
    opts = opts or SolverOptions()
    if not isinstance(C, Partition):
        raise ValueError("the strongly base-orderable solver is implemented for partition matroids")
    r = C.rank()
    l = opts.part_size or pinned_size(oracle.n)
    k = r // l
    if k < 2:
        raise ValueError(f"floor(r/l) = floor({r}/{l}) < 2; use matroid-small or matroid-large")
    parts = _split_parts(extend_to_base(C, ()), k)
    report = _pinned_parts_search("sbo", oracle, C, parts, opts, r)
    report.params["part_size"] = l
    return report


# ---------------------------------------------------------------- baselines

def baseline_greedy_noisy(oracle: NoisyOracle, C: Constraint, opts: SolverOptions | None = None) -> SolverReport:
    """Add the feasible element with the largest noisy value until none fits."""
    q0, t0 = oracle.query_count, time.perf_counter()
    mask = np.zeros(oracle.n, dtype=bool)
    order = []
    while True:
        ys = np.flatnonzero(additions_mask(C, mask))
        if ys.size == 0:
            break
        cand = np.repeat(mask[None, :], ys.size, axis=0)
        cand[np.arange(ys.size), ys] = True
        y = int(ys[int(np.argmax(oracle.noisy_values(cand)))])
        mask[y] = True
        order.append(y)
    return _finish("greedy", oracle, C, from_mask(mask), q0, [],
                   {"total": time.perf_counter() - t0}, {}, {"order": order})


def _feasible_bundles(C, mask, candidates, k):
    """All k-subsets b of ``candidates`` (ascending tuples, lexicographic order)
    with mask + b independent; returns the largest size reached and the bundles."""
    level = np.asarray(candidates, dtype=np.int64)[:, None]
    size = 1
    while size < k:
        rows, ext = [], []
        for i, b in enumerate(level):
            ys = np.asarray([y for y in candidates if y > b[-1]], dtype=np.int64)
            if ys.size == 0:
                continue
            cand = np.repeat(mask[None, :], ys.size, axis=0)
            cand[:, b] = True
            cand[np.arange(ys.size), ys] = True
            ok = ys[C.independent_many(cand)]
            rows.extend([i] * ok.size)
            ext.extend(ok.tolist())
        if not ext:
            break
        level = np.concatenate([level[rows], np.asarray(ext, dtype=np.int64)[:, None]], axis=1)
        size += 1
    return size, level


def _ball_means(bundles, vals):
    """Mean value over each bundle's one-swap neighbours among the feasible bundles.

    Neighbours share all but one element, so each one is found exactly once by
    grouping bundles on the sub-bundle left after deleting one position.
    Returns sums and counts.
    """
    nb, k = bundles.shape
    sums, counts = np.zeros(nb), np.zeros(nb, dtype=np.int64)
    if k == 1:
        return vals.sum() - vals, np.full(nb, nb - 1)
    for i in range(k):
        sub = np.delete(bundles, i, axis=1)
        _, inv = np.unique(sub, axis=0, return_inverse=True)
        inv = inv.ravel()
        gsum = np.bincount(inv, weights=vals)
        gcnt = np.bincount(inv)
        sums += gsum[inv] - vals
        counts += gcnt[inv] - 1
    return sums, counts


def baseline_bundle_greedy(oracle: NoisyOracle, C: Constraint, c: int = 3,
                           opts: SolverOptions | None = None, max_bundles: int = 200_000) -> SolverReport:
    """Greedy over bundles of size c scored by the mean noisy value of their one-swap ball.

    Each round keeps the elements that still fit, picks the bundle whose ball
    has the largest mean noisy value, and adds the ball member with the largest
    noisy value. Ball members are themselves feasible bundles, so every
    distinct set is queried once and ball means are assembled from those values.
    """
    if c < 1:
        raise ValueError("bundle size must be at least 1")
    q0, t0 = oracle.query_count, time.perf_counter()
    n = oracle.n
    mask = np.zeros(n, dtype=bool)
    steps = []
    while True:
        cand = np.flatnonzero(additions_mask(C, mask))
        if cand.size == 0:
            break
        size, bundles = _feasible_bundles(C, mask, cand, c)
        if bundles.shape[0] > max_bundles:
            raise ValueError(f"{bundles.shape[0]} feasible bundles exceed the limit {max_bundles}")
        sets = np.repeat(mask[None, :], bundles.shape[0], axis=0)
        sets[np.arange(bundles.shape[0])[:, None], bundles] = True
        vals = oracle.noisy_values(sets)
        sums, counts = _ball_means(bundles, vals)
        scores = np.where(counts > 0, sums / np.maximum(counts, 1), vals)
        x = int(np.argmax(scores))
        if counts[x] > 0:
            diff = (bundles[:, None, :] == bundles[x][None, :, None]).any(axis=2).sum(axis=1)
            ball = np.flatnonzero(diff == size - 1)
            pick = int(ball[int(np.argmax(vals[ball]))])
        else:
            pick = x
        mask[bundles[pick]] = True
        steps.append({"bundle": bundles[x].tolist(), "added": bundles[pick].tolist(),
                      "ball_size": int(counts[x])})
    return _finish("bundle-greedy", oracle, C, from_mask(mask), q0, [],
                   {"total": time.perf_counter() - t0}, {"c": c}, {"steps": steps})


# ---------------------------------------------------------------- dispatch

def _cube_at_most(r: int, n: int) -> bool:
    return r**3 <= n


def choose_algorithm(C: Constraint, n: int, sbo: bool = False, part_size: int | None = None) -> str:
    """Small-rank solvers when r <= n^(1/3), large-rank ones otherwise.

    When a large-rank solver cannot run (rank not above the pinned size for
    cardinality, rank below 4 for matroids) the small-rank one is used.
    """
    if isinstance(C, Uniform):
        if _cube_at_most(C.r, n) or C.r <= pinned_size(n):
            return "card-small"
        return "card-large"
    r = C.rank()
    if _cube_at_most(r, n) or r < 4:
        return "matroid-small"
    if sbo and isinstance(C, Partition) and r // (part_size or pinned_size(n)) >= 2:
        return "sbo"
    return "matroid-large"


def solve(oracle: NoisyOracle, C: Constraint, opts: SolverOptions | None = None,
          regime: str = "auto", sbo: bool = False, bundle_size: int = 3) -> SolverReport:
    opts = opts or SolverOptions()
    algo = choose_algorithm(C, oracle.n, sbo, opts.part_size) if regime == "auto" else regime
    if algo in ("card-small", "card-large") and not isinstance(C, Uniform):
        raise ValueError(f"{algo} needs a cardinality constraint")
    if algo == "card-small":
        return solve_cardinality_small(oracle, C.r, opts)
    if algo == "card-large":
        return solve_cardinality_large(oracle, C.r, opts)
    if algo == "matroid-small":
        return solve_matroid_small(oracle, C, opts)
    if algo == "matroid-large":
        return solve_matroid_large(oracle, C, opts)
    if algo == "sbo":
        return solve_sbo(oracle, C, opts)
    if algo == "greedy":
        return baseline_greedy_noisy(oracle, C, opts)
    if algo == "bundle-greedy":
        return baseline_bundle_greedy(oracle, C, bundle_size, opts)
    raise ValueError(f"unknown algorithm {algo!r}; choose from {ALGORITHMS}")

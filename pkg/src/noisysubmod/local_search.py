"""Threshold-swap local search driven by an approximate auxiliary-function oracle.

The search runs a greedy phase that fills a base of the constraint, then
repeatedly scans swaps (x out, y in) in lexicographic order and accepts the
first one whose approximate value clears (1 + stepsize) times the current one.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .matroid import Constraint, additions_mask
from .objective import Subset, from_mask

ApproxFn = Callable[[np.ndarray, Sequence[Sequence[int]]], np.ndarray]

GREEDY, SWAP, CURRENT = 0, 1, 2


def iteration_cap(alpha: float, step: float, r: int) -> int:
    """ceil(log_{1+step}(2(1+alpha) / (1 - 2(r+1)alpha)))."""
    if step <= 0:
        raise ValueError("stepsize must be positive")
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    denom = 1.0 - 2.0 * (r + 1) * alpha
    if denom <= 0:
        raise ValueError(f"alpha={alpha} too large for rank {r}: need 2(r+1)alpha < 1")
    x = math.log(2.0 * (1.0 + alpha) / denom) / math.log1p(step)
    return max(1, math.ceil(x - 1e-12))


def choose_parameters(eps: float, r: int) -> tuple[float, float, int]:
    """alpha = stepsize = eps / (4 r ln r), and the matching iteration cap.

    The cap stays below ceil(5 r ln r / eps) for every r >= 3; at r = 2 with
    eps above about 0.35 it exceeds that bound by one (e.g. 20 > 19 at 0.375).
    """
    if r < 2:
        raise ValueError("rank must be at least 2 (ln r vanishes at r = 1)")
    if not 0 < eps < 0.5:
        raise ValueError("eps must lie in (0, 1/2)")
    alpha = eps / (4.0 * r * math.log(r))
    return alpha, alpha, iteration_cap(alpha, alpha, r)


@dataclass
class NLSConfig:
    step: float
    max_iterations: int
    early_stop: bool = True  # stop after a full scan with no accepted swap
    phase: int = 0  # distinguishes RNG streams of several searches in one solver run
    chunk_size: int | None = None  # swap candidates evaluated per batch; None = all y for one x
    reevaluate_current: bool = False  # fresh estimate of the current set at every iteration

    def __post_init__(self):
        if self.step <= 0:
            raise ValueError("stepsize must be positive")
        if self.max_iterations < 1:
            raise ValueError("iteration cap must be at least 1")


@dataclass
class NLSTrace:
    greedy: list = field(default_factory=list)  # (element, approx value) per step
    swaps: list = field(default_factory=list)  # (iteration, x, y, old, new)
    calls: int = 0
    iterations: int = 0
    stopped_early: bool = False
    max_iterations: int = 0
    final_value: float = float("nan")

    def to_dict(self) -> dict:
        return {"greedy": self.greedy, "swaps": self.swaps, "calls": self.calls,
                "iterations": self.iterations, "stopped_early": self.stopped_early,
                "max_iterations": self.max_iterations, "final_value": self.final_value}


def nls(approx: ApproxFn, C: Constraint, cfg: NLSConfig) -> tuple[Subset, NLSTrace]:
    """Greedy initialization followed by thresholded swap improvement.

    ``approx(masks, keys)`` returns one value per row; ``keys`` holds an integer
    tuple per row naming its RNG stream. A swap is accepted when its value is
    at least (1 + step) times the current value and strictly above it. The
    current value is the estimate that got the current set accepted, or a
    fresh estimate at the start of each iteration with ``reevaluate_current``.
    """
    n = C.n
    trace = NLSTrace(max_iterations=cfg.max_iterations)
    mask = np.zeros(n, dtype=bool)
    current = 0.0
    step = 0
    while True:
        ys = np.flatnonzero(additions_mask(C, mask))
        if ys.size == 0:
            break
        cand = np.repeat(mask[None, :], ys.size, axis=0)
        cand[np.arange(ys.size), ys] = True
        vals = np.asarray(approx(cand, [(cfg.phase, GREEDY, step, int(y)) for y in ys]), dtype=float)
        trace.calls += ys.size
        best = int(np.argmax(vals))  # first maximum, i.e. the smallest id
        mask[ys[best]] = True
        current = float(vals[best])
        trace.greedy.append((int(ys[best]), current))
        step += 1
    if step == 0:
        raise ValueError("constraint has rank 0")

    for it in range(1, cfg.max_iterations + 1):
        trace.iterations = it
        if cfg.reevaluate_current:
            current = float(np.asarray(approx(mask[None, :], [(cfg.phase, CURRENT, it, 0, 0)]))[0])
            trace.calls += 1
        accepted = None
        for x in np.flatnonzero(mask):
            base = mask.copy()
            base[x] = False
            ys = np.flatnonzero(~mask)
            if ys.size == 0:
                continue
            cand = np.repeat(base[None, :], ys.size, axis=0)
            cand[np.arange(ys.size), ys] = True
            feas = C.independent_many(cand)
            ys, cand = ys[feas], cand[feas]
            chunk = cfg.chunk_size or max(1, ys.size)
            for lo in range(0, ys.size, chunk):
                sl = slice(lo, lo + chunk)
                keys = [(cfg.phase, SWAP, it, int(x), int(y)) for y in ys[sl]]
                vals = np.asarray(approx(cand[sl], keys), dtype=float)
                trace.calls += len(keys)
                hit = np.flatnonzero((vals >= (1.0 + cfg.step) * current) & (vals > current))
                if hit.size:
                    j = int(hit[0])
                    accepted = (int(x), int(ys[sl][j]), float(vals[j]))
                    break
            if accepted:
                break
        if accepted is None:
            if cfg.early_stop:
                trace.stopped_early = True
                break
            continue
        x, y, val = accepted
        trace.swaps.append((it, x, y, current, val))
        mask[x], mask[y] = False, True
        current = val
    trace.final_value = current
    return from_mask(mask), trace

"""Ground sets, subsets and exact monotone submodular objectives.

Subsets are canonical ascending tuples of element ids at the API boundary and
boolean masks of shape ``(k, n)`` inside batch evaluation.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

Subset = tuple[int, ...]

MAX_VERIFY_N = 14


def canonical(ids: Iterable[int], n: int) -> Subset:
    """Return ids as a sorted duplicate-free tuple, validated against ``n``."""
    out = tuple(sorted({int(i) for i in ids}))
    if out and (out[0] < 0 or out[-1] >= n):
        raise ValueError(f"element id out of range for ground set of size {n}: {out}")
    return out


def to_mask(S: Iterable[int], n: int) -> np.ndarray:
    mask = np.zeros(n, dtype=bool)
    idx = list(canonical(S, n))
    mask[idx] = True
    return mask


def from_mask(mask: np.ndarray) -> Subset:
    return tuple(int(i) for i in np.flatnonzero(mask))


class Objective:
    """Base class: subclasses implement ``_values`` on a batch of masks.

    ``values`` splits large batches so temporaries stay bounded.
    """

    n: int
    chunk_cells = 1 << 22

    def values(self, masks: np.ndarray) -> np.ndarray:
        masks = np.atleast_2d(masks)
        step = max(1, self.chunk_cells // max(1, masks.shape[1]))
        if masks.shape[0] <= step:
            return self._values(masks)
        return np.concatenate([self._values(masks[lo:lo + step])
                               for lo in range(0, masks.shape[0], step)])

    def _values(self, masks: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def value(self, S: Iterable[int]) -> float:
        return float(self.values(to_mask(S, self.n)[None, :])[0])

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class Modular(Objective):
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("modular weights must be a non-empty vector")
        if np.any(w < 0):
            raise ValueError("modular weights must be nonnegative")
        object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return self.weights.size

    def _values(self, masks):
        # row-wise reduction so a set's value does not depend on the batch it sits in
        return np.where(masks, self.weights, 0.0).sum(axis=1)

    def to_dict(self):
        return {"kind": "modular", "weights": self.weights.tolist()}


@dataclass(frozen=True, eq=False)
class WeightedCoverage(Objective):
    """f(S) = total weight of items covered by at least one element of S."""

    covers: Sequence[Sequence[int]]
    item_weights: np.ndarray
    incidence: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        w = np.asarray(self.item_weights, dtype=float)
        if np.any(w < 0):
            raise ValueError("item weights must be nonnegative")
        covers = tuple(tuple(sorted(set(int(u) for u in c))) for c in self.covers)
        if not covers:
            raise ValueError("coverage objective needs at least one element")
        inc = np.zeros((len(covers), w.size))
        for e, items in enumerate(covers):
            if items and (items[0] < 0 or items[-1] >= w.size):
                raise ValueError(f"element {e} covers an unknown item")
            inc[e, list(items)] = 1.0
        object.__setattr__(self, "covers", covers)
        object.__setattr__(self, "item_weights", w)
        object.__setattr__(self, "incidence", inc)

    @property
    def n(self) -> int:
        return len(self.covers)

    def _values(self, masks):
        covered = (masks @ self.incidence) > 0
        return np.where(covered, self.item_weights, 0.0).sum(axis=1)

    def to_dict(self):
        return {
            "kind": "coverage",
            "covers": [list(c) for c in self.covers],
            "item_weights": self.item_weights.tolist(),
        }


@dataclass(frozen=True, eq=False)
class FacilityLocation(Objective):
    """f(S) = sum over clients of the best utility offered by a facility in S."""

    utility: np.ndarray  # clients x elements

    def __post_init__(self):
        u = np.asarray(self.utility, dtype=float)
        if u.ndim != 2 or u.shape[1] == 0:
            raise ValueError("utility must be a clients x elements matrix")
        if np.any(u < 0):
            raise ValueError("utilities must be nonnegative")
        object.__setattr__(self, "utility", u)

    @property
    def n(self) -> int:
        return self.utility.shape[1]

    def _values(self, masks):
        out = np.empty(masks.shape[0])
        # chunk to keep the (k, clients, n) temporary small
        step = max(1, 2_000_000 // max(1, self.utility.size))
        for lo in range(0, masks.shape[0], step):
            m = masks[lo:lo + step, None, :]
            out[lo:lo + step] = np.where(m, self.utility[None], 0.0).max(axis=2).sum(axis=1)
        return out

    def to_dict(self):
        return {"kind": "facility_location", "utility": self.utility.tolist()}


class LookupTable(Objective):
    """Arbitrary set function given by a table. Test hook only: no
    monotonicity or submodularity is enforced."""

    def __init__(self, n: int, table: dict[Subset, float]):
        self.n = n
        self._weights = 1 << np.arange(n, dtype=np.int64)
        self._table = np.zeros(1 << n)
        for S, v in table.items():
            self._table[sum(1 << i for i in canonical(S, n))] = v

    def _values(self, masks):
        return self._table[masks.astype(np.int64) @ self._weights]


def objective_from_dict(d: dict) -> Objective:
    kind = d["kind"]
    if kind == "modular":
        return Modular(d["weights"])
    if kind == "coverage":
        covers = d["covers"]
        weights = d.get("item_weights")
        if weights is None:
            n_items = 1 + max((max(c) for c in covers if c), default=-1)
            weights = [1.0] * n_items
        return WeightedCoverage(covers, weights)
    if kind == "facility_location":
        return FacilityLocation(d["utility"])
    raise ValueError(f"unknown objective kind {kind!r}")


def evaluate(objective: Objective, S: Iterable[int]) -> float:
    return objective.value(canonical(S, objective.n))


def marginal(objective: Objective, S: Iterable[int], x: int) -> float:
    S = canonical(S, objective.n)
    if x in S:
        raise ValueError(f"element {x} already in the set")
    return objective.value(S + (x,)) - objective.value(S)


def all_values(objective: Objective) -> np.ndarray:
    """Values of every subset, indexed by bitmask (element i <-> bit i)."""
    n = objective.n
    codes = np.arange(1 << n, dtype=np.int64)
    masks = ((codes[:, None] >> np.arange(n)) & 1).astype(bool)
    return objective.values(masks)


def _code_to_subset(code: int, n: int) -> Subset:
    return tuple(i for i in range(n) if code >> i & 1)


def verify_submodular_monotone(objective: Objective, max_n: int = MAX_VERIFY_N, tol: float = 1e-12):
    """Exhaustive check of monotonicity and diminishing returns.

    Returns ``(True, None)`` or ``(False, witness)`` where the witness is
    ``("monotone", S, x)`` or ``("submodular", A, B, x)`` with A a subset of B.
    Checking f(S+x)-f(S) >= f(S+y+x)-f(S+y) for all S, x, y suffices.
    """
    n = objective.n
    if n > max_n:
        raise ValueError(f"ground set too large for exhaustive check ({n} > {max_n})")
    f = all_values(objective)
    scale = tol * max(1.0, float(np.abs(f).max()))
    codes = np.arange(1 << n, dtype=np.int64)
    if abs(f[0]) > scale:
        return False, ("normalization", (), None)
    for x in range(n):
        bx = 1 << x
        S = codes[(codes & bx) == 0]
        gain = f[S | bx] - f[S]
        bad = np.flatnonzero(gain < -scale)
        if bad.size:
            return False, ("monotone", _code_to_subset(int(S[bad[0]]), n), x)
        for y in range(n):
            if y == x:
                continue
            by = 1 << y
            T = S[(S & by) == 0]
            drop = (f[T | bx] - f[T]) - (f[T | by | bx] - f[T | by])
            bad = np.flatnonzero(drop < -scale)
            if bad.size:
                A = int(T[bad[0]])
                return False, ("submodular", _code_to_subset(A, n), _code_to_subset(A | by, n), x)
    return True, None

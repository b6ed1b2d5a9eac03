"""Independence oracles for uniform, partition, contracted and truncated matroids.

Every oracle answers membership on a batch of boolean masks; the scalar
helpers wrap the batch call. Brute-force exchange utilities at the bottom are
meant for tests on small ground sets.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .objective import Subset, canonical, from_mask, to_mask


class Constraint:
    """Base class. Subclasses implement ``_independent`` on a batch of masks."""

    n: int
    chunk_cells = 1 << 22

    def independent_many(self, masks: np.ndarray) -> np.ndarray:
        masks = np.atleast_2d(masks)
        step = max(1, self.chunk_cells // max(1, masks.shape[1]))
        if masks.shape[0] <= step:
            return self._independent(masks)
        return np.concatenate([self._independent(masks[lo:lo + step])
                               for lo in range(0, masks.shape[0], step)])

    def _independent(self, masks: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def is_independent(self, S: Iterable[int]) -> bool:
        return bool(self.independent_many(to_mask(S, self.n)[None, :])[0])

    def rank(self) -> int:
        return len(extend_to_base(self, ()))

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Uniform(Constraint):
    r: int
    n: int

    def __post_init__(self):
        if self.n < 1 or self.r < 0:
            raise ValueError("uniform matroid needs n >= 1 and r >= 0")

    def _independent(self, masks):
        return masks.sum(axis=1) <= self.r

    def rank(self):
        return min(self.r, self.n)

    def to_dict(self):
        return {"kind": "uniform", "r": self.r}


@dataclass(frozen=True, eq=False)
class Partition(Constraint):
    """Blocks partition the ground set; at most ``caps[i]`` elements from block i."""

    blocks: Sequence[Sequence[int]]
    caps: Sequence[int]
    n: int
    block_of: np.ndarray = field(init=False, repr=False)
    _onehot: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        blocks = tuple(tuple(sorted(int(e) for e in b)) for b in self.blocks)
        caps = tuple(int(c) for c in self.caps)
        if len(blocks) != len(caps):
            raise ValueError("one cap per block required")
        if any(c < 0 for c in caps):
            raise ValueError("caps must be nonnegative")
        block_of = np.full(self.n, -1, dtype=np.int64)
        for i, b in enumerate(blocks):
            for e in b:
                if not 0 <= e < self.n:
                    raise ValueError(f"element {e} out of range")
                if block_of[e] >= 0:
                    raise ValueError(f"element {e} appears in two blocks")
                block_of[e] = i
        if np.any(block_of < 0):
            raise ValueError("blocks must cover the ground set")
        onehot = np.zeros((self.n, len(blocks)))
        onehot[np.arange(self.n), block_of] = 1.0
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "caps", caps)
        object.__setattr__(self, "block_of", block_of)
        object.__setattr__(self, "_onehot", onehot)

    def _independent(self, masks):
        counts = masks @ self._onehot
        return np.all(counts <= np.asarray(self.caps), axis=1)

    def rank(self):
        return int(sum(min(c, len(b)) for b, c in zip(self.blocks, self.caps)))

    def to_dict(self):
        return {"kind": "partition", "blocks": [list(b) for b in self.blocks],
                "caps": list(self.caps)}


@dataclass(frozen=True, eq=False)
class Contraction(Constraint):
    """S is independent iff S avoids H and S + H is independent in the base."""

    base: Constraint
    H: Subset

    def __post_init__(self):
        H = canonical(self.H, self.base.n)
        if not self.base.is_independent(H):
            raise ValueError("contracted set must be independent")
        object.__setattr__(self, "H", H)

    @property
    def n(self):
        return self.base.n

    def _independent(self, masks):
        hmask = to_mask(self.H, self.n)
        clash = np.any(masks & hmask, axis=1)
        return ~clash & self.base.independent_many(masks | hmask)

    def to_dict(self):
        return {"kind": "contraction", "base": self.base.to_dict(), "H": list(self.H)}


@dataclass(frozen=True, eq=False)
class Truncation(Constraint):
    """Independent in the base and of size at most k."""

    base: Constraint
    k: int

    @property
    def n(self):
        return self.base.n

    def _independent(self, masks):
        return (masks.sum(axis=1) <= self.k) & self.base.independent_many(masks)

    def to_dict(self):
        return {"kind": "truncation", "base": self.base.to_dict(), "k": self.k}


class Explicit(Constraint):
    """Independence given by an explicit list of sets (test hook, n <= 20)."""

    def __init__(self, n: int, sets: Iterable[Iterable[int]]):
        if n > 20:
            raise ValueError("explicit families are limited to n <= 20")
        self.n = n
        self._weights = 1 << np.arange(n, dtype=np.int64)
        self._member = np.zeros(1 << n, dtype=bool)
        for S in sets:
            self._member[sum(1 << i for i in canonical(S, n))] = True

    def _independent(self, masks):
        return self._member[masks.astype(np.int64) @ self._weights]

    def family(self) -> list[Subset]:
        return [tuple(i for i in range(self.n) if c >> i & 1)
                for c in np.flatnonzero(self._member)]


def constraint_from_dict(d: dict, n: int) -> Constraint:
    kind = d["kind"]
    if kind == "uniform":
        return Uniform(int(d["r"]), n)
    if kind == "partition":
        return Partition(d["blocks"], d["caps"], n)
    if kind == "contraction":
        return Contraction(constraint_from_dict(d["base"], n), tuple(d["H"]))
    if kind == "truncation":
        return Truncation(constraint_from_dict(d["base"], n), int(d["k"]))
    raise ValueError(f"unknown constraint kind {kind!r}")


def check_singletons_feasible(C: Constraint) -> None:
    """Raise unless every single element is independent on its own."""
    eye = np.eye(C.n, dtype=bool)
    ok = C.independent_many(eye)
    if not np.all(ok):
        raise ValueError(f"element {int(np.flatnonzero(~ok)[0])} is infeasible on its own")


def additions_mask(C: Constraint, mask: np.ndarray) -> np.ndarray:
    """Boolean vector: y is marked iff y is outside the set and set + y is independent."""
    outside = np.flatnonzero(~mask)
    cand = np.repeat(mask[None, :], outside.size, axis=0)
    cand[np.arange(outside.size), outside] = True
    out = np.zeros(C.n, dtype=bool)
    if outside.size:
        out[outside] = C.independent_many(cand)
    return out


def extend_to_base(C: Constraint, S: Iterable[int] = ()) -> Subset:
    """Greedily add elements in ascending id order while independence holds."""
    S = canonical(S, C.n)
    if not C.is_independent(S):
        raise ValueError("cannot extend a dependent set")
    mask = to_mask(S, C.n)
    for y in range(C.n):
        if mask[y]:
            continue
        mask[y] = True
        if not C.independent_many(mask[None, :])[0]:
            mask[y] = False
    return from_mask(mask)


def is_base(C: Constraint, S: Iterable[int]) -> bool:
    S = canonical(S, C.n)
    return C.is_independent(S) and not additions_mask(C, to_mask(S, C.n)).any()


def brualdi_bijection_bruteforce(C: Constraint, A: Iterable[int], B: Iterable[int]) -> dict[int, int]:
    """Lexicographically least bijection pi: A -> B with A - a + pi(a) a base for all a.

    pi is the identity on the intersection. Exhaustive backtracking; small n only.
    """
    if C.n > 12:
        raise ValueError("brute-force bijection search is limited to n <= 12")
    A, B = canonical(A, C.n), canonical(B, C.n)
    if not (is_base(C, A) and is_base(C, B)):
        raise ValueError("both arguments must be bases")
    Aset, Bset = set(A), set(B)

    def allowed(a, b):
        if a in Bset:
            return b == a
        if b in Aset:
            return False
        return is_base(C, (Aset - {a}) | {b})

    options = {a: [b for b in B if allowed(a, b)] for a in A}
    pi: dict[int, int] = {}
    used: set[int] = set()

    def search(i):
        if i == len(A):
            return True
        a = A[i]
        for b in options[a]:
            if b not in used:
                pi[a] = b
                used.add(b)
                if search(i + 1):
                    return True
                used.discard(b)
                del pi[a]
        return False

    if not search(0):
        raise RuntimeError("no exchange bijection exists; the oracle is not a matroid")
    return dict(pi)


def sbo_bijection_partition(P: Constraint, B1: Iterable[int], B2: Iterable[int]) -> dict[int, int]:
    """Block-respecting bijection B1 -> B2: identity on the overlap, ascending pairing otherwise."""
    if not isinstance(P, Partition):
        raise TypeError("strongly base-orderable bijection is implemented for partition matroids only")
    B1, B2 = canonical(B1, P.n), canonical(B2, P.n)
    if not (is_base(P, B1) and is_base(P, B2)):
        raise ValueError("both arguments must be bases")
    common = set(B1) & set(B2)
    sigma = {e: e for e in common}
    for i in range(len(P.blocks)):
        left = [e for e in B1 if P.block_of[e] == i and e not in common]
        right = [e for e in B2 if P.block_of[e] == i and e not in common]
        if len(left) != len(right):
            raise ValueError("bases disagree on a block count")
        sigma.update(zip(left, right))
    return sigma

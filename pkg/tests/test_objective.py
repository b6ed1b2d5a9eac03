import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from noisysubmod.objective import (FacilityLocation, LookupTable, Modular, WeightedCoverage,
                                   all_values, canonical, evaluate, from_mask, marginal,
                                   objective_from_dict, to_mask, verify_submodular_monotone)


def small_coverage():
    # a -> {u1, u2}, b -> {u2, u3}, c -> {u1}; ids a=0, b=1, c=2 and items u1=0, u2=1, u3=2
    return WeightedCoverage([[0, 1], [1, 2], [0]], [1.0, 1.0, 1.0])


@st.composite
def objectives(draw, max_n=8):
    n = draw(st.integers(1, max_n))
    kind = draw(st.sampled_from(["modular", "coverage", "facility"]))
    seed = draw(st.integers(0, 2**31))
    rng = np.random.default_rng(seed)
    if kind == "modular":
        return Modular(rng.uniform(0, 3, n))
    if kind == "coverage":
        items = int(rng.integers(1, 12))
        covers = [np.flatnonzero(rng.random(items) < 0.4).tolist() for _ in range(n)]
        return WeightedCoverage(covers, rng.uniform(0.5, 1.5, items))
    return FacilityLocation(rng.random((int(rng.integers(1, 6)), n)))


def test_modular_empty_is_zero():
    assert evaluate(Modular(np.ones(4)), ()) == 0.0


def test_coverage_union_of_two():
    assert evaluate(small_coverage(), (0, 1)) == 3.0


def test_modular_sum():
    assert evaluate(Modular([2, 5, 1]), {0, 2}) == 3.0


def test_marginal_examples():
    assert marginal(Modular([2, 5, 1]), (0,), 1) == 5.0
    assert marginal(small_coverage(), (0,), 1) == 1.0


def test_marginal_rejects_member():
    with pytest.raises(ValueError):
        marginal(Modular([2, 5, 1]), (0, 1), 1)


def test_out_of_range_id():
    with pytest.raises(ValueError):
        evaluate(Modular([1, 1]), (2,))
    with pytest.raises(ValueError):
        evaluate(Modular([1, 1]), (-1,))


def test_negative_weights_rejected():
    with pytest.raises(ValueError):
        Modular([1, -1])
    with pytest.raises(ValueError):
        WeightedCoverage([[0]], [-1.0])
    with pytest.raises(ValueError):
        FacilityLocation([[1.0, -0.5]])


def test_canonical_and_masks():
    assert canonical([3, 1, 3], 5) == (1, 3)
    m = to_mask((4, 0), 5)
    assert m.tolist() == [True, False, False, False, True]
    assert from_mask(m) == (0, 4)


def test_checker_accepts_modular_and_coverage():
    assert verify_submodular_monotone(Modular(np.arange(1, 6, dtype=float))) == (True, None)
    rng = np.random.default_rng(3)
    cov = WeightedCoverage([np.flatnonzero(rng.random(9) < 0.35).tolist() for _ in range(6)],
                           rng.uniform(0.5, 1.5, 9))
    assert verify_submodular_monotone(cov)[0]


def test_checker_flags_supermodular_table():
    n = 4
    table = {S: float(len(S) ** 2) for k in range(n + 1) for S in itertools.combinations(range(n), k)}
    ok, witness = verify_submodular_monotone(LookupTable(n, table))
    assert not ok
    assert witness[0] == "submodular"
    _, A, B, x = witness
    f = LookupTable(n, table)
    assert set(A) <= set(B) and x not in B
    assert f.value(A + (x,)) - f.value(A) < f.value(tuple(sorted(B + (x,)))) - f.value(B)


def test_checker_refuses_large_ground_set():
    with pytest.raises(ValueError):
        verify_submodular_monotone(Modular(np.ones(15)))


def test_dict_round_trip():
    for f in (Modular([1.0, 2.0]), small_coverage(), FacilityLocation([[0.1, 0.5], [0.3, 0.2]])):
        g = objective_from_dict(f.to_dict())
        assert np.array_equal(all_values(f), all_values(g))


def test_batches_match_scalar_calls():
    f = FacilityLocation(np.random.default_rng(0).random((7, 9)))
    vals = all_values(f)
    for code in (0, 5, 100, 511):
        S = tuple(i for i in range(9) if code >> i & 1)
        assert vals[code] == f.value(S)


@given(objectives())
def test_normalized(f):
    assert f.value(()) == 0.0


@given(objectives(), st.data())
def test_diminishing_returns(f, data):
    n = f.n
    T = data.draw(st.sets(st.integers(0, n - 1)))
    S = data.draw(st.sets(st.sampled_from(sorted(T)))) if T else set()
    rest = [x for x in range(n) if x not in T]
    if not rest:
        return
    x = data.draw(st.sampled_from(rest))
    lhs = f.value(S | {x}) - f.value(S)
    rhs = f.value(T | {x}) - f.value(T)
    assert lhs >= rhs - 1e-12
    assert rhs >= -1e-12


@given(objectives(), st.data())
def test_deterministic(f, data):
    S = data.draw(st.sets(st.integers(0, f.n - 1)))
    assert f.value(S) == f.value(S)
    assert np.array_equal(f.values(np.stack([to_mask(S, f.n)] * 3)), np.full(3, f.value(S)))


@given(objectives(max_n=7))
def test_exhaustive_check_on_families(f):
    assert verify_submodular_monotone(f)[0]

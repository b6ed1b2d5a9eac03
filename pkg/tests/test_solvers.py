import math

import numpy as np
import pytest

from noisysubmod.auxiliary import ExactPhi, sample_count_h
from noisysubmod.harness import brute_force_opt, generate_instance
from noisysubmod.local_search import NLSConfig, choose_parameters, iteration_cap, nls
from noisysubmod.matroid import Partition, Uniform, is_base
from noisysubmod.noise import NoNoise, NoisyOracle, TwoPoint, UniformBand
from noisysubmod.objective import Modular, WeightedCoverage
from noisysubmod.solvers import (ALGORITHMS, SolverOptions, baseline_bundle_greedy,
                                 baseline_greedy_noisy, choose_algorithm, solve,
                                 solve_cardinality_large, solve_cardinality_small, solve_matroid_large,
                                 solve_matroid_small, solve_sbo)


def coverage(n, seed, density=0.2):
    rng = np.random.default_rng(seed)
    items = 2 * n
    inc = rng.random((n, items)) < density
    for e in np.flatnonzero(~inc.any(axis=1)):
        inc[e, rng.integers(items)] = True
    return WeightedCoverage([np.flatnonzero(r).tolist() for r in inc], rng.uniform(0.5, 1.5, items))


def pairs_partition(n, caps=1):
    return Partition([[2 * i, 2 * i + 1] for i in range(n // 2)], [caps] * (n // 2), n)


# ------------------------------------------------------------------ cardinality

@pytest.mark.parametrize("seed", range(5))
def test_card_small_noise_free_ratio(seed):
    f = coverage(12, seed)
    rep = solve_cardinality_small(NoisyOracle(f), 4, SolverOptions(seed=seed, exact_phi=True))
    opt = brute_force_opt(f, Uniform(4, 12))[1]
    assert len(rep.chosen) == 4 and rep.feasible
    assert rep.value >= 0.63 * opt


def test_card_small_query_accounting():
    f = coverage(20, 1)
    orc = NoisyOracle(f, UniformBand(0.1), seed=3)
    rep = solve_cardinality_small(orc, 5, SolverOptions(seed=2))
    M, cap = rep.params["samples"], rep.params["iteration_cap"]
    assert M == sample_count_h(5, 20)
    assert rep.queries == orc.query_count
    trace = rep.traces[0]
    assert rep.queries == M * trace.calls + (20 - 5 + 1)
    assert rep.queries <= (20 - 5 + 1) + M * (cap + 1) * (5 - 1) * 20
    assert rep.params["delta"] == pytest.approx(1 / ((cap + 1) * 4 * 400))


def test_card_small_rejects_small_rank():
    with pytest.raises(ValueError):
        solve_cardinality_small(NoisyOracle(coverage(6, 0)), 1)


def test_card_large_modular_bound():
    n, r = 40, 14
    rng = np.random.default_rng(0)
    f = Modular(rng.uniform(0.1, 1.0, n))
    rep = solve_cardinality_large(NoisyOracle(f), r, SolverOptions(exact_phi=True))
    H = tuple(range(math.ceil(3 * math.log(n))))
    assert len(H) == 12 and rep.params["pinned"] == list(H)
    assert len(rep.chosen) == r and set(H) <= set(rep.chosen)
    opt = np.sort(f.weights)[-r:].sum()
    assert rep.value >= (1 - len(H) / r) * (1 - 1 / math.e - 0.2) * opt - 1e-9


def test_card_large_empty_pin_reduces_to_plain_search():
    f = coverage(10, 4)
    r = 3
    rep = solve_cardinality_large(NoisyOracle(f), r, SolverOptions(exact_phi=True, pinned=()))
    alpha, step, _ = choose_parameters(0.2, r)
    S, _ = nls(ExactPhi(f, "f"), Uniform(r, 10),
               NLSConfig(step=step, max_iterations=iteration_cap(alpha, step, r)))
    assert rep.chosen == S


def test_card_large_needs_rank_above_pin():
    with pytest.raises(ValueError):
        solve_cardinality_large(NoisyOracle(coverage(12, 0)), 4)


# ------------------------------------------------------------------ matroids

@pytest.mark.parametrize("seed", range(4))
def test_matroid_small_noise_free(seed):
    f = coverage(12, seed)
    P = pairs_partition(12)
    C = Partition(P.blocks[:3] + (P.blocks[3] + P.blocks[4] + P.blocks[5],), [1, 1, 1, 1], 12)
    rep = solve_matroid_small(NoisyOracle(f), C, SolverOptions(seed=seed))
    opt = brute_force_opt(f, C)[1]
    assert rep.feasible
    assert rep.value >= 0.3 * opt
    S_L = tuple(rep.extras["local_search_set"])
    assert len(S_L) == C.rank() - 1
    if rep.extras["kept_local"]:
        assert rep.chosen == S_L
    else:
        assert rep.chosen == (rep.extras["added"],)


def test_matroid_small_comparison_branch():
    # strict >= branch: f0(S_L) >= f0(S_M) / 2 keeps the local-search set
    f = Modular(np.ones(8))
    C = Partition([[0, 1], [2, 3], [4, 5], [6, 7]], [1, 1, 1, 1], 8)
    rep = solve_matroid_small(NoisyOracle(f), C, SolverOptions(exact_phi=True))
    # f0(S_L) = 2 and f0(S_M) = 3 for unit weights and |S_L| = 3
    assert rep.extras["f0_local"] == 2.0 and rep.extras["f0_extended"] == 3.0
    assert rep.chosen == tuple(rep.extras["local_search_set"])


def test_matroid_small_rank_check():
    with pytest.raises(ValueError):
        solve_matroid_small(NoisyOracle(coverage(6, 0)), Partition([[0, 1, 2], [3, 4, 5]], [1, 1], 6))


@pytest.mark.parametrize("seed", range(3))
def test_matroid_large_candidates_are_bases(seed):
    f = coverage(12, seed)
    C = Partition([[0, 1, 2], [3, 4, 5], [6, 7, 8], [9, 10, 11]], [1, 1, 1, 1], 12)
    rep = solve_matroid_large(NoisyOracle(f), C, SolverOptions(seed=seed, samples=300))
    for cand in rep.extras["candidates"]:
        assert is_base(C, cand)
    assert rep.params["parts"] == [[0, 3], [6, 9]]
    assert rep.feasible and rep.value >= 0.3 * brute_force_opt(f, C)[1]


def test_matroid_large_tie_goes_to_first_part():
    f = Modular(np.ones(8))
    C = Partition([[0, 1], [2, 3], [4, 5], [6, 7]], [1, 1, 1, 1], 8)
    rep = solve_matroid_large(NoisyOracle(f), C, SolverOptions(exact_phi=True))
    assert rep.extras["scores"][0] == rep.extras["scores"][1]
    assert rep.extras["chosen_part"] == 0
    assert rep.chosen == tuple(rep.extras["candidates"][0])


def test_matroid_large_rank_check():
    with pytest.raises(ValueError):
        solve_matroid_large(NoisyOracle(coverage(6, 0)), Uniform(3, 6))


def test_sbo_small_instance():
    f = coverage(30, 2, density=0.1)
    C = Partition([list(range(5 * i, 5 * i + 5)) for i in range(6)], [1] * 6, 30)
    rep = solve_sbo(NoisyOracle(f), C, SolverOptions(exact_phi=True, part_size=2))
    assert rep.params["parts"] == [[0, 5], [10, 15], [20, 25]]
    for cand in rep.extras["candidates"]:
        assert is_base(C, cand)
    assert rep.value >= 0.6 * brute_force_opt(f, C)[1]


def test_sbo_errors():
    f = coverage(12, 0)
    with pytest.raises(ValueError):
        solve_sbo(NoisyOracle(f), Uniform(4, 12), SolverOptions(part_size=2))
    C = Partition([[0, 1, 2], [3, 4, 5], [6, 7, 8], [9, 10, 11]], [1, 1, 1, 1], 12)
    with pytest.raises(ValueError):
        solve_sbo(NoisyOracle(f), C, SolverOptions(part_size=3))


def test_sbo_identical_parts_pick_first():
    f = Modular(np.ones(12))
    C = Partition([[0, 1], [2, 3], [4, 5], [6, 7], [8, 9], [10, 11]], [1] * 6, 12)
    rep = solve_sbo(NoisyOracle(f), C, SolverOptions(exact_phi=True, part_size=2))
    assert rep.extras["chosen_part"] == 0


# ------------------------------------------------------------------ baselines

@pytest.mark.parametrize("seed", range(5))
def test_greedy_noise_free_guarantee(seed):
    f = coverage(12, seed)
    rep = baseline_greedy_noisy(NoisyOracle(f), Uniform(4, 12))
    assert rep.value >= (1 - 1 / math.e) * brute_force_opt(f, Uniform(4, 12))[1]
    assert rep.queries == 12 + 11 + 10 + 9


@pytest.mark.parametrize("seed", range(4))
def test_bundle_of_one_matches_greedy(seed):
    f = Modular(np.random.default_rng(seed).permutation(10) + 1.0)
    C = Uniform(4, 10)
    a = baseline_greedy_noisy(NoisyOracle(f), C)
    b = baseline_bundle_greedy(NoisyOracle(f), C, c=1)
    assert a.chosen == b.chosen


def test_bundle_greedy_feasible_every_step():
    f = coverage(12, 1)
    C = Partition([[0, 1, 2, 3], [4, 5, 6], [7, 8, 9, 10, 11]], [2, 1, 2], 12)
    rep = baseline_bundle_greedy(NoisyOracle(f, TwoPoint(10, 0.1), 4), C, c=3)
    S = []
    for step in rep.extras["steps"]:
        S += step["added"]
        assert C.is_independent(S)
    assert is_base(C, rep.chosen)


def test_bundle_greedy_shrinks_bundle_to_fit():
    f = coverage(8, 2)
    rep = baseline_bundle_greedy(NoisyOracle(f), Uniform(4, 8), c=3)
    assert [len(s["added"]) for s in rep.extras["steps"]] == [3, 1]


def test_bundle_greedy_on_adversary_structure():
    instance = generate_instance("partition_adversary", {"n": 40, "r": 4, "m": 10}, seed=3)
    f, C = instance.build()
    rep = baseline_bundle_greedy(instance.oracle(), C, c=3)
    assert rep.feasible and len(rep.chosen) == 4
    assert rep.extras["steps"][0]["ball_size"] > 0


def test_bundle_greedy_rejects_zero():
    with pytest.raises(ValueError):
        baseline_bundle_greedy(NoisyOracle(coverage(5, 0)), Uniform(2, 5), c=0)


# ------------------------------------------------------------------ dispatch and invariants

def test_dispatch_examples():
    assert choose_algorithm(Uniform(9, 1000), 1000) == "card-small"
    assert choose_algorithm(Uniform(50, 1000), 1000) == "card-large"
    P = Partition([list(range(i, 1000, 50)) for i in range(50)], [1] * 50, 1000)
    assert choose_algorithm(P, 1000) == "matroid-large"
    assert choose_algorithm(P, 1000, sbo=True) == "sbo"
    small = Partition([[0, 1], [2, 3], [4, 5]], [1, 1, 1], 6)
    assert choose_algorithm(small, 6) == "matroid-small"


def test_forced_regime_mismatch():
    orc = NoisyOracle(coverage(12, 0))
    P = Partition([[0, 1, 2], [3, 4, 5], [6, 7, 8], [9, 10, 11]], [1] * 4, 12)
    with pytest.raises(ValueError):
        solve(orc, P, regime="card-small")
    with pytest.raises(ValueError):
        solve(orc, Uniform(3, 12), regime="matroid-large")
    with pytest.raises(ValueError):
        solve(orc, Uniform(3, 12), regime="simulated-annealing")


@pytest.mark.parametrize("algo", ALGORITHMS)
def test_reports_are_feasible_and_count_queries(algo):
    f = coverage(12, 7)
    C = Uniform(4, 12) if algo.startswith("card") else \
        Partition([[0, 1, 2], [3, 4, 5], [6, 7, 8], [9, 10, 11]], [1] * 4, 12)
    if algo == "card-large":
        opts = SolverOptions(seed=1, samples=50, pinned=2)
    else:
        opts = SolverOptions(seed=1, samples=50, part_size=2)
    runs = []
    for _ in range(2):
        orc = NoisyOracle(f, UniformBand(0.1), seed=5)
        rep = solve(orc, C, opts, regime=algo)
        assert rep.feasible
        assert rep.queries == orc.query_count
        assert rep.value == pytest.approx(f.value(rep.chosen))
        runs.append((rep.chosen, rep.queries))
    assert runs[0] == runs[1]


def test_algorithm_and_noise_seeds_are_separate():
    f = coverage(14, 3)
    C = Uniform(4, 14)
    a = solve(NoisyOracle(f, UniformBand(0.1), 1), C, SolverOptions(seed=1), regime="card-small")
    b = solve(NoisyOracle(f, UniformBand(0.1), 1), C, SolverOptions(seed=2), regime="card-small")
    c = solve(NoisyOracle(f, UniformBand(0.1), 2), C, SolverOptions(seed=1), regime="card-small")
    assert a.to_dict()["traces"] != b.to_dict()["traces"]
    assert a.to_dict()["traces"] != c.to_dict()["traces"]


def test_no_noise_exact_phi_collapse():
    for seed in range(3):
        f = coverage(11, seed)
        opt = brute_force_opt(f, Uniform(5, 11))[1]
        rep = solve_cardinality_large(NoisyOracle(f, NoNoise()), 5,
                                      SolverOptions(exact_phi=True, pinned=()))
        assert rep.value >= (1 - 1 / math.e) * (1 - 5 * (math.log(5) + 1) * 0.2 / (20 * math.log(5))) * opt - 1e-9

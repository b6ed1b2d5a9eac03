"""Instances, exact optima, seeded trials and CSV reporting.

Instance files are JSON objects with the keys

    n           ground set size
    objective   {"kind": "modular" | "coverage" | "facility_location", ...}
    constraint  {"kind": "uniform", "r": ...} or {"kind": "partition", "blocks": [...], "caps": [...]}
    noise       {"family": "none" | "exponential" | "uniform_band" | "truncated_gaussian" | "two_point", ...}
    seed        noise seed (64-bit integer)
    meta        free-form generator metadata (optional)
"""
from __future__ import annotations

import csv
import itertools
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
from scipy import optimize, sparse

from .matroid import (Constraint, Partition, Uniform, check_singletons_feasible,
                      constraint_from_dict)
from .noise import NoisyOracle, noise_from_dict
from .objective import (FacilityLocation, Modular, Objective, Subset, WeightedCoverage,
                        objective_from_dict)
from .solvers import SolverOptions, solve

BRUTE_FORCE_CAP = 1 << 22


class ConfigError(ValueError):
    """Invalid instance or trial configuration."""


@dataclass
class InstanceSpec:
    n: int
    objective: dict
    constraint: dict
    noise: dict = field(default_factory=lambda: {"family": "none"})
    seed: int = 0
    meta: dict = field(default_factory=dict)

    def build(self) -> tuple[Objective, Constraint]:
        try:
            f = objective_from_dict(self.objective)
            C = constraint_from_dict(self.constraint, self.n)
            noise_from_dict(self.noise)
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed instance: {exc}") from exc
        if f.n != self.n:
            raise ConfigError(f"objective has {f.n} elements but n = {self.n}")
        check_singletons_feasible(C)
        return f, C

    def oracle(self, seed: int | None = None) -> NoisyOracle:
        f, _ = self.build()
        return NoisyOracle(f, noise_from_dict(self.noise), self.seed if seed is None else seed)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "InstanceSpec":
        d = json.loads(text)
        try:
            return cls(n=int(d["n"]), objective=d["objective"], constraint=d["constraint"],
                       noise=d.get("noise", {"family": "none"}), seed=int(d.get("seed", 0)),
                       meta=d.get("meta", {}))
        except KeyError as exc:
            raise ConfigError(f"instance file lacks {exc}") from exc

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "InstanceSpec":
        return cls.from_json(Path(path).read_text())


def _partition_block(n, params):
    """Consecutive near-equal blocks of ids with the given caps."""
    k = int(params["blocks"])
    caps = params.get("caps", 1)
    caps = [int(caps)] * k if np.isscalar(caps) else [int(c) for c in caps]
    blocks = [list(map(int, b)) for b in np.array_split(np.arange(n), k)]
    return {"kind": "partition", "blocks": blocks, "caps": caps}


def _constraint_block(n, params):
    if "blocks" in params:
        return _partition_block(n, params)
    return {"kind": "uniform", "r": int(params.get("r", 8))}


def generate_instance(kind: str, params: dict | None = None, seed: int = 0) -> InstanceSpec:
    """Deterministic instance generator.

    random_coverage: n, items (2n), density (0.05), item weights U[0.5, 1.5].
    random_facility: n, clients (2n), utilities U[0, 1].
    partition_adversary: r - 1 zero-valued singleton blocks and one block of the
    remaining n - r + 1 elements, one of which (``e_star``) is worth m and the
    others 1; caps all 1; two-point noise m with probability 1/(2(n - r)), else 1.
    Both random kinds take either ``r`` (cardinality) or ``blocks`` and ``caps``.
    """
    params = dict(params or {})
    rng = np.random.default_rng([int(seed), 0x5EED])
    n = int(params.get("n", 60))
    if n < 1:
        raise ConfigError("n must be positive")
    noise = params.get("noise", {"family": "none"})
    if kind == "random_coverage":
        items = int(params.get("items", 2 * n))
        density = float(params.get("density", 0.05))
        if not 0 < density <= 1:
            raise ConfigError("density must lie in (0, 1]")
        inc = rng.random((n, items)) < density
        for e in np.flatnonzero(~inc.any(axis=1)):
            inc[e, rng.integers(items)] = True
        covers = [np.flatnonzero(row).tolist() for row in inc]
        weights = np.round(rng.uniform(0.5, 1.5, items), 6).tolist()
        objective = {"kind": "coverage", "covers": covers, "item_weights": weights}
        constraint = _constraint_block(n, params)
        meta = {"generator": kind, "params": params}
    elif kind == "random_facility":
        clients = int(params.get("clients", 2 * n))
        util = np.round(rng.random((clients, n)), 6).tolist()
        objective = {"kind": "facility_location", "utility": util}
        constraint = _constraint_block(n, params)
        meta = {"generator": kind, "params": params}
    elif kind == "partition_adversary":
        r = int(params.get("r", 4))
        m = float(params.get("m", 10.0))
        if not 2 <= r < n:
            raise ConfigError("adversary needs 2 <= r < n")
        big = list(range(r - 1, n))
        e_star = int(rng.choice(big))
        w = np.zeros(n)
        w[big] = 1.0
        w[e_star] = m
        objective = {"kind": "modular", "weights": w.tolist()}
        constraint = {"kind": "partition", "blocks": [[i] for i in range(r - 1)] + [big],
                      "caps": [1] * r}
        noise = {"family": "two_point", "high": m, "p": 1.0 / (2 * (n - r)), "low": 1.0,
                 "normalize": False}
        meta = {"generator": kind, "params": params, "e_star": e_star, "big_block": big}
    else:
        raise ConfigError(f"unknown generator {kind!r}")
    instance = InstanceSpec(n=n, objective=objective, constraint=constraint, noise=noise,
                        seed=int(seed), meta=meta)
    instance.build()
    return instance


# ---------------------------------------------------------------- exact optima

def brute_force_opt(objective: Objective, C: Constraint, cap: int = BRUTE_FORCE_CAP) -> tuple[Subset, float]:
    """Best base by enumeration in lexicographic order; the first maximum wins.

    For monotone objectives some base is optimal, so only sets of size rank(C)
    are enumerated.
    """
    n, r = objective.n, C.rank()
    total = math.comb(n, r)
    if total > cap:
        raise ValueError(f"{total} candidate sets exceed the brute-force cap {cap}")
    best, best_val = None, -np.inf
    combos = itertools.combinations(range(n), r)
    while True:
        chunk = list(itertools.islice(combos, 1 << 15))
        if not chunk:
            break
        idx = np.asarray(chunk, dtype=np.int64).reshape(len(chunk), r)
        masks = np.zeros((len(chunk), n), dtype=bool)
        masks[np.arange(len(chunk))[:, None], idx] = True
        ok = C.independent_many(masks)
        if not ok.any():
            continue
        vals = np.where(ok, objective.values(masks), -np.inf)
        j = int(np.argmax(vals))
        if vals[j] > best_val:
            best, best_val = tuple(chunk[j]), float(vals[j])
    if best is None:
        raise ValueError("no feasible set of full rank")
    return best, best_val


def milp_opt(objective: Objective, C: Constraint) -> tuple[Subset, float]:
    """Exact optimum through a mixed-integer program (HiGHS, zero gap)."""
    n = objective.n
    rows, lo, hi = [], [], []
    if isinstance(C, Uniform):
        cons = [np.ones(n)], [C.r]
    elif isinstance(C, Partition):
        cons = [], []
        for b, cap in zip(C.blocks, C.caps):
            row = np.zeros(n)
            row[list(b)] = 1.0
            cons[0].append(row)
            cons[1].append(cap)
    else:
        raise ValueError("MILP reference handles uniform and partition constraints")
    if isinstance(objective, Modular):
        nv = n
        c = -objective.weights
        integrality = np.ones(nv)
    elif isinstance(objective, WeightedCoverage):
        items = objective.item_weights.size
        nv = n + items
        c = np.concatenate([np.zeros(n), -objective.item_weights])
        integrality = np.concatenate([np.ones(n), np.zeros(items)])
        # y_u - sum_{e covers u} x_e <= 0
        cover = sparse.hstack([-sparse.csr_matrix(objective.incidence.T), sparse.eye(items)])
        rows.append(cover)
        lo.append(np.full(items, -np.inf))
        hi.append(np.zeros(items))
    elif isinstance(objective, FacilityLocation):
        U = objective.utility
        k = U.shape[0]
        nv = n + k * n
        c = np.concatenate([np.zeros(n), -U.ravel()])
        integrality = np.concatenate([np.ones(n), np.zeros(k * n)])
        # z_ce <= x_e and sum_e z_ce <= 1
        link = sparse.hstack([-sparse.kron(np.ones((k, 1)), sparse.eye(n)), sparse.eye(k * n)])
        one = sparse.hstack([sparse.csr_matrix((k, n)), sparse.kron(sparse.eye(k), np.ones((1, n)))])
        rows += [link, one]
        lo += [np.full(k * n, -np.inf), np.full(k, -np.inf)]
        hi += [np.zeros(k * n), np.ones(k)]
    else:
        raise ValueError("MILP reference handles modular, coverage and facility objectives")
    A_cons = sparse.hstack([sparse.csr_matrix(np.asarray(cons[0])),
                            sparse.csr_matrix((len(cons[0]), nv - n))])
    rows.append(A_cons)
    lo.append(np.full(len(cons[1]), -np.inf))
    hi.append(np.asarray(cons[1], dtype=float))
    res = optimize.milp(
        c, integrality=integrality, bounds=optimize.Bounds(0, 1),
        constraints=optimize.LinearConstraint(sparse.vstack(rows).tocsr(), np.concatenate(lo),
                                              np.concatenate(hi)),
        options={"mip_rel_gap": 0.0})
    if not res.success:
        raise RuntimeError(f"MILP failed: {res.message}")
    chosen = tuple(int(e) for e in np.flatnonzero(res.x[:n] > 0.5))
    return chosen, objective.value(chosen)


def exact_opt(objective: Objective, C: Constraint) -> tuple[Subset, float]:
    """Brute force when it fits under the cap, otherwise the MILP reference."""
    if math.comb(objective.n, C.rank()) <= BRUTE_FORCE_CAP:
        return brute_force_opt(objective, C)
    return milp_opt(objective, C)


# ---------------------------------------------------------------- trials

@dataclass
class ResultRow:
    seed: int
    algorithm: str
    n: int
    r: int
    eps: float
    value: float
    opt: float | None
    ratio: float | None
    queries: int
    wall_time: float
    chosen: str = ""
    missed_star: int | None = None


@dataclass
class TrialConfig:
    seeds: list
    algorithms: list = field(default_factory=lambda: ["card-small"])
    instance: dict | None = None  # an InstanceSpec as a dict
    generator: dict | None = None  # {"kind": ..., "params": {...}}; instance seed = trial seed
    eps: float = 0.2
    regime: str = "auto"
    out: str | None = None
    sample_multiplier: float = 1.0
    strict: bool = False
    compute_opt: bool = True
    bundle_size: int = 3
    hooks: dict = field(default_factory=dict)  # samples, exact_phi, pinned, part_size
    workers: int = 1

    def __post_init__(self):
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if (self.instance is None) == (self.generator is None):
            raise ConfigError("give exactly one of instance or generator")
        if not self.algorithms:
            raise ConfigError("at least one algorithm is required")

    @classmethod
    def from_dict(cls, d: dict) -> "TrialConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown trial config keys {sorted(unknown)}")
        if "seeds" not in d:
            raise ConfigError("trial config needs a seed list")
        return cls(**d)


def trial_instance(cfg: TrialConfig, seed: int) -> InstanceSpec:
    if cfg.generator is not None:
        return generate_instance(cfg.generator["kind"], cfg.generator.get("params", {}), seed)
    instance = InstanceSpec(**cfg.instance)
    instance.seed = seed
    return instance


def _one_trial(cfg: TrialConfig, seed: int) -> list[ResultRow]:
    instance = trial_instance(cfg, seed)
    f, C = instance.build()
    opt = None
    if cfg.compute_opt:
        opt = exact_opt(f, C)[1]
    rows = []
    for algo in cfg.algorithms:
        oracle = instance.oracle(seed)
        opts = SolverOptions(eps=cfg.eps, seed=seed, sample_multiplier=cfg.sample_multiplier,
                             strict=cfg.strict, **cfg.hooks)
        regime = cfg.regime if algo == "auto" else algo
        t0 = time.perf_counter()
        rep = solve(oracle, C, opts, regime=regime, bundle_size=cfg.bundle_size)
        wall = time.perf_counter() - t0
        if not rep.feasible:
            raise InfeasibleOutput(f"{algo} returned an infeasible set {rep.chosen} (seed {seed})")
        missed = None
        if "e_star" in instance.meta:
            missed = int(instance.meta["e_star"] not in rep.chosen)
        rows.append(ResultRow(
            seed=seed, algorithm=rep.algorithm if algo == "auto" else algo, n=instance.n, r=C.rank(),
            eps=cfg.eps, value=rep.value, opt=opt,
            ratio=None if not opt else rep.value / opt, queries=rep.queries, wall_time=wall,
            chosen=" ".join(map(str, rep.chosen)), missed_star=missed))
    return rows


class InfeasibleOutput(RuntimeError):
    """A solver returned a set that violates its constraint."""


CSV_FIELDS = [f.name for f in fields(ResultRow)]


def write_csv(rows: list[ResultRow], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_FIELDS)
        for row in rows:
            w.writerow(["" if v is None else (repr(v) if isinstance(v, float) else v)
                        for v in (getattr(row, k) for k in CSV_FIELDS)])


def run_trials(cfg: TrialConfig) -> list[ResultRow]:
    """One row per (seed, algorithm), ordered by seed then algorithm name."""
    seeds = [int(s) for s in cfg.seeds]
    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            batches = list(pool.map(lambda s: _one_trial(cfg, s), seeds))
    else:
        batches = [_one_trial(cfg, s) for s in seeds]
    rows = sorted((r for b in batches for r in b), key=lambda r: (r.seed, r.algorithm))
    if cfg.out:
        write_csv(rows, cfg.out)
    return rows


def summarize(rows: list[ResultRow]) -> dict:
    out = {}
    for algo in sorted({r.algorithm for r in rows}):
        sel = [r for r in rows if r.algorithm == algo]
        ratios = [r.ratio for r in sel if r.ratio is not None]
        entry = {"runs": len(sel), "mean_value": float(np.mean([r.value for r in sel])),
                 "mean_queries": float(np.mean([r.queries for r in sel]))}
        if ratios:
            entry.update(mean_ratio=float(np.mean(ratios)), min_ratio=float(np.min(ratios)))
        missed = [r.missed_star for r in sel if r.missed_star is not None]
        if missed:
            entry["miss_frequency"] = float(np.mean(missed))
        out[algo] = entry
    return out


# ---------------------------------------------------------------- counterexample demo

@dataclass
class DemoResult:
    trials: int
    miss_frequency: float
    bundle_mean_ratio: float
    local_search_mean_ratio: float | None
    passed: bool
    rows: list = field(default_factory=list)


def demo_counterexample(trials: int = 400, n: int = 300, r: int = 4, m: float = 10.0, c: int = 3,
                        seed0: int = 0, eps: float = 0.2, with_local_search: bool = True,
                        miss_threshold: float = 0.25, bundle_ratio_cap: float = 0.5,
                        local_search_floor: float = 0.6) -> DemoResult:
    """Bundle greedy against the adversarial partition instance, optionally next to matroid-small."""
    algos = ["bundle-greedy"] + (["matroid-small"] if with_local_search else [])
    cfg = TrialConfig(seeds=list(range(seed0, seed0 + trials)), algorithms=algos,
                      generator={"kind": "partition_adversary", "params": {"n": n, "r": r, "m": m}},
                      eps=eps, bundle_size=c)
    rows = run_trials(cfg)
    bundle = [row for row in rows if row.algorithm == "bundle-greedy"]
    miss = float(np.mean([row.missed_star for row in bundle]))
    bmean = float(np.mean([row.ratio for row in bundle]))
    lmean = None
    passed = miss >= miss_threshold and bmean <= bundle_ratio_cap
    if with_local_search:
        lmean = float(np.mean([row.ratio for row in rows if row.algorithm == "matroid-small"]))
        passed = passed and lmean >= local_search_floor
    return DemoResult(trials, miss, bmean, lmean, passed, rows)


# ---------------------------------------------------------------- verify

def run_verify(seed: int = 0) -> list[tuple[str, bool, str]]:
    """Desk-scale self checks: coefficients, coefficient bounds, surrogate bounds,
    noise consistency, and small solvers against brute force."""
    from .auxiliary import (TauClasses, f0, harmonic, h_size_weights, m_coefficient,
                            phi_exact_bruteforce, phi_h_coefficient_form, surrogate_h,
                            surrogate_hH)
    from .objective import verify_submodular_monotone

    checks = []

    def check(name, ok, detail=""):
        checks.append((name, bool(ok), detail))

    check("m_00 = 1", abs(m_coefficient(0, 0) - 1) < 1e-12)
    check("m_11 = 1/(e-1)", abs(m_coefficient(1, 1) - 1 / (math.e - 1)) < 1e-12)
    ok = all(h_size_weights(a).sum() <= harmonic(a) + 1e-9 for a in range(2, 33))
    check("s(A) <= H_a", ok)
    ok = True
    for n in (64, 1024):
        for a in range(2, math.isqrt(n) + 1):
            T = TauClasses(a, n)
            ok &= T.sum_squares() <= 12 / (n * a) + 1e-12 and T.max_weight() <= 4 / n + 1e-12 \
                and T.total() <= 2 * (math.log(a) + 2) + 1e-12
    check("tau bounds", ok)
    rng = np.random.default_rng(seed)
    instance = generate_instance("random_coverage", {"n": 10, "items": 20, "density": 0.2, "r": 3}, seed)
    f, C = instance.build()
    check("generated coverage is monotone submodular", verify_submodular_monotone(f)[0])
    ok = True
    for _ in range(20):
        A = tuple(sorted(rng.choice(10, rng.integers(1, 6), replace=False)))
        h = surrogate_h(f, A)
        phi = phi_exact_bruteforce(f, A)
        ok &= h - 1e-9 <= phi <= math.e / (math.e - 1) * harmonic(len(A)) * h + 1e-9
        ok &= abs(phi - phi_h_coefficient_form(f, A)) <= 1e-9
        ok &= (1 - 1 / len(A)) * f.value(A) - 1e-12 <= f0(f, A) <= f.value(A) + 1e-12
        H = tuple(e for e in range(10) if e not in A)[:3]
        ok &= surrogate_hH(f, H, A) >= 0.5 * f.value(A + H) + 0.5 * f.value(A) - 1e-12
    check("surrogate and sandwich bounds", ok)
    orc = NoisyOracle(f, noise_from_dict({"family": "uniform_band", "halfwidth": 0.1}), seed)
    S = (1, 4, 7)
    v = [orc.noisy_value(S) for _ in range(5)]
    check("noisy oracle consistency", len(set(v)) == 1 and orc.query_count == 5)
    opt = brute_force_opt(f, C)[1]
    rep = solve(NoisyOracle(f, seed=seed), C, SolverOptions(seed=seed), regime="card-small")
    check("card-small feasible", rep.feasible)
    check("card-small ratio >= 0.5 (noise-free)", rep.value >= 0.5 * opt, f"{rep.value / opt:.3f}")
    return checks

"""Acceptance criteria, one test per criterion.

Each test prints a single PASS/FAIL line with the measured quantity and its
runtime; the lines are repeated in the pytest terminal summary.
"""
import math
import statistics
import time

import numpy as np
import pytest
import torch

import rishm.controller as controller
from rishm.controller import RunConfig, _Run, initial_design, offspring_accuracy, run
from rishm.evaluator import evaluate, mu_distance, mu_pan
from rishm.ga import GaConfig, ga_offspring
from rishm.genome import EvaluatedSolution, is_valid, random_solution, repair
from rishm.local_eda import fit_eda, fit_rbfn, sample_eda
from rishm.ranker import RankerConfig, RankModel, build_initial_pairs, pairwise_accuracy, predict_pair
from rishm.scenario import SensorParams, generate_instance
from rishm.terrain import DemGrid, Point3, elevation_at, generate_terrain, line_of_sight

from bruteforce import brute_force_fitness
from conftest import ACCEPTANCE_LINES, toy_instance

SEEDS = range(5)
MAX_FES = 600


def report(n, ok, detail, seconds, limit):
    within = seconds < limit
    line = (f"criterion {n:>2}: {'PASS' if ok and within else 'FAIL'}  {detail}; "
            f"runtime {seconds:.1f}s (limit {limit:.0f}s{'' if within else ', EXCEEDED'})")
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line
    assert within, line


def sig(x):
    return 1.0 / (1.0 + math.exp(-x))


@pytest.fixture(scope="module")
def small():
    torch.set_num_threads(1)
    return generate_instance(1, "small", generate_terrain(1))


def test_criterion_01_membership():
    t0 = time.perf_counter()
    p = SensorParams()
    checks = [
        (mu_distance(25.0, p), 0.5, sig(0.0)),
        (mu_pan(0.0, p), 0.9950548, sig(6) - sig(-6)),
        (mu_pan(40.0, p), 0.4999939, sig(12) - sig(0)),
    ]
    err = max(max(abs(v - closed), abs(v - quoted)) for v, quoted, closed in checks)
    report(1, err < 1e-7, f"max |error| {err:.2e} (tol 1e-7)", time.perf_counter() - t0, 1)


def test_criterion_02_evaluator_oracle():
    t0 = time.perf_counter()
    worst, n = 0.0, 0
    for seed in range(20):
        rng = np.random.default_rng(100 + seed)
        z, q = int(rng.integers(2, 5)), int(rng.integers(1, 6))
        k = int(rng.integers(1, min(2, z) + 1))
        inst = toy_instance(100 + seed, n_sites=z, n_targets=q, k=k)
        for _ in range(5):
            sol = random_solution(z, k, rng)
            worst = max(worst, abs(evaluate(sol, inst).fitness - brute_force_fitness(sol, inst)))
            n += 1
    report(2, worst < 1e-9, f"{n} solutions on 20 toy instances, max |diff| {worst:.2e} (tol 1e-9)",
           time.perf_counter() - t0, 5)


def test_criterion_03_line_of_sight():
    t0 = time.perf_counter()
    rough = generate_terrain(3, rows=65, cols=65, cell_size=50 / 64)
    flat = DemGrid((0.0, 0.0), 50 / 64, np.zeros((65, 65)))
    rng = np.random.default_rng(0)

    def endpoint(grid):
        x, y = rng.uniform(0, 50, 2)
        return Point3(x, y, elevation_at(grid, x, y) + rng.uniform(0.01, 1.0))

    asym = flat_blocked = 0
    for _ in range(1000):
        a, b = endpoint(rough), endpoint(rough)
        asym += line_of_sight(rough, a, b) != line_of_sight(rough, b, a)
        flat_blocked += line_of_sight(flat, endpoint(flat), endpoint(flat)) != 1
    elev = np.zeros((12, 12))
    elev[:, 5] = 5.0
    ridge = line_of_sight(DemGrid((0.0, 0.0), 1.0, elev), Point3(1, 1, 1), Point3(10, 1, 1))
    ok = asym == 0 and flat_blocked == 0 and ridge == 0
    report(3, ok, f"1000 pairs: {asym} asymmetric, {flat_blocked} blocked on flat; ridge LoS={ridge}",
           time.perf_counter() - t0, 5)


def test_criterion_04_validity_fuzz(small):
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    z, k = small.n_sites, small.k
    bad = {"repair": 0, "ga_offspring": 0, "sample_eda": 0, "initialize": 0}
    for _ in range(10_000):
        bits = rng.integers(0, 2, z)
        bad["repair"] += int(repair(bits, k, rng).sum() != k)
    pool = [EvaluatedSolution(random_solution(z, k, rng), float(rng.random()), i) for i in range(100)]
    for _ in range(100):
        kids = ga_offspring(pool, GaConfig(mutation_prob=float(rng.random())), k, rng)
        bad["ga_offspring"] += sum(not is_valid(s, k) for s in kids)
    eda = fit_eda(pool, 45)
    bad["sample_eda"] = sum(not is_valid(s, k) for s in sample_eda(eda, 10_000, k, rng))
    bad["initialize"] = sum(not is_valid(s, k) for s in initial_design(small, 10_000, rng))
    detail = ", ".join(f"{name} {v}" for name, v in bad.items())
    report(4, sum(bad.values()) == 0, f"violations per 10^4 outputs: {detail}", time.perf_counter() - t0, 30)


def test_criterion_05_rbfn_interpolation(small):
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    archive = [EvaluatedSolution(s, evaluate(s, small).fitness, i)
               for i, s in enumerate(random_solution(small.n_sites, small.k, rng) for _ in range(30))]
    model = fit_rbfn(archive, 30, ridge=0.0)
    err = float(np.max(np.abs(model.predict([e.solution for e in archive]) - [e.fitness for e in archive])))
    report(5, err < 1e-6 and model.ridge == 0.0, f"max |error| at 30 centers {err:.2e} (tol 1e-6)",
           time.perf_counter() - t0, 5)


def test_criterion_06_ranker(small):
    t0 = time.perf_counter()
    rng = np.random.default_rng(6)
    # separable synthetic task: fitness is a function of the multiset of site triples
    sols = [random_solution(8, 3, rng) for _ in range(60)]
    synth = [EvaluatedSolution(s, float(np.sum(s.select * s.tilt)), i) for i, s in enumerate(sols)]
    cfg = RankerConfig(epochs_per_fit=25, augmentation_factor=1, batch_size=128)
    model = RankModel(cfg, seed=0)
    model.fit(build_initial_pairs(synth, cfg, rng))
    train_acc = pairwise_accuracy(model, sols, [e.fitness for e in synth])
    anti = 0.0
    for _ in range(1000):
        a, b = random_solution(8, 3, rng), random_solution(8, 3, rng)
        anti = max(anti, abs(predict_pair(model, a, b) + predict_pair(model, b, a) - 1.0))
    self_pair = max(abs(predict_pair(model, s, s) - 0.5) for s in sols[:50])
    held = [offspring_accuracy(small, RunConfig(seed=s)).accuracy for s in SEEDS]
    med = statistics.median(held)
    ok = anti < 1e-6 and self_pair < 1e-12 and train_acc >= 0.95 and med >= 0.55
    detail = (f"antisymmetry {anti:.1e}; self-pair |p-0.5| {self_pair:.1e}; synthetic train acc {train_acc:.3f}; "
              f"held-out acc {[round(a, 3) for a in held]} median {med:.3f} (need >= 0.55)")
    report(6, ok, detail, time.perf_counter() - t0, 300)


class Instrumented:
    """Counts true objective calls made by the controller."""

    def __init__(self):
        self.calls = 0

    def __call__(self, sol, inst, counter=None):
        self.calls += 1
        return evaluate(sol, inst, counter)


@pytest.fixture(scope="module")
def campaign(small):
    out, seconds, calls = {}, {}, {}
    original = controller.evaluate
    try:
        for variant in ("ga_only", "rishm", "rishm_wo_local", "rishm_wo_global"):
            for seed in SEEDS:
                probe = Instrumented()
                controller.evaluate = probe
                t0 = time.perf_counter()
                out[variant, seed] = run(small, RunConfig(variant=variant, seed=seed, max_fes=MAX_FES))
                seconds[variant, seed] = time.perf_counter() - t0
                calls[variant, seed] = probe.calls
    finally:
        controller.evaluate = original
    return out, seconds, calls


def finals(campaign, variant):
    return [campaign[0][variant, s].best.fitness for s in SEEDS]


def test_criterion_07_rishm_beats_ga(campaign):
    runs, seconds, _ = campaign
    ga, ri = finals(campaign, "ga_only"), finals(campaign, "rishm")
    gains = [1 - r / g for r, g in zip(ri, ga)]
    med = statistics.median(gains)
    t = sum(seconds[v, s] for v in ("ga_only", "rishm") for s in SEEDS)
    detail = (f"ga_only {[round(x, 1) for x in ga]}, rishm {[round(x, 1) for x in ri]}; "
              f"median paired improvement {med:.1%} (need >= 15%)")
    report(7, med >= 0.15, detail, t, 900)


def test_criterion_08_ablation_order(campaign):
    _, seconds, _ = campaign
    med = {v: statistics.median(finals(campaign, v)) for v in ("rishm", "rishm_wo_local", "rishm_wo_global")}
    ok = med["rishm"] <= med["rishm_wo_local"] <= med["rishm_wo_global"]
    detail = ", ".join(f"{v} median {m:.1f}" for v, m in med.items()) + " (need non-decreasing)"
    report(8, ok, detail, sum(seconds.values()), 1800)


def test_criterion_09_budget_integrity(campaign, small):
    runs, _, calls = campaign
    problems = []
    for key, res in runs.items():
        fes = [fe for fe, _ in res.trace]
        best = [b for _, b in res.trace]
        if res.fe_used != min(MAX_FES, calls[key]) or calls[key] != MAX_FES:
            problems.append(f"{key}: counter {res.fe_used}, calls {calls[key]}")
        if fes != list(range(1, len(fes) + 1)) or len(fes) != res.fe_used:
            problems.append(f"{key}: trace FE column not 1..{res.fe_used}")
        if any(b2 > b1 for b1, b2 in zip(best, best[1:])):
            problems.append(f"{key}: best trace increases")
    # surrogate calls leave the counter alone
    t0 = time.perf_counter()
    r = _Run(small, RunConfig(seed=0, max_fes=400, ranker=RankerConfig(epochs_per_fit=1, augmentation_factor=1)))
    r.initialize()
    before = r.counter.used
    model = RankModel(r.cfg.ranker, seed=0)
    model.fit(build_initial_pairs(r.archive.entries, r.cfg.ranker, r.rng_update))
    model.scores([e.solution for e in r.archive.entries])
    rbfn = fit_rbfn(r.archive.entries, 5 * small.dim)
    rbfn.predict([e.solution for e in r.archive.entries[:20]])
    if r.counter.used != before:
        problems.append("surrogate use changed the FE counter")
    detail = f"{len(runs)} instrumented runs, {len(problems)} problems" + (f": {problems[:3]}" if problems else "")
    report(9, not problems, detail, time.perf_counter() - t0, 60)


def test_criterion_10_determinism(tmp_path):
    from rishm.cli import main

    t0 = time.perf_counter()
    toy = tmp_path / "toy"
    assert main(["gen", "--scale", "small", "--seed", "3", "--out", str(toy)]) == 0
    inst = toy / "small-3.json"
    mismatched = []
    for name in ("a", "b"):
        out = str(tmp_path / name)
        assert main(["gen", "--scale", "small", "--seed", "3", "--out", out]) == 0
        for v in ("rishm", "ga_only", "random_search", "rishm_wo_global"):
            assert main(["run", str(inst), "--variant", v, "--seed", "2", "--max-fes", "200", "--delta", "0.5",
                         "--out", out]) == 0
        results = sorted(str(p) for p in (tmp_path / name).glob("small-3__*.json"))
        assert main(["report", *results, "--out", out]) == 0
        assert main(["accuracy", str(inst), "--seed", "1", "--out", out]) == 0
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    for f in files:
        if (tmp_path / "a" / f).read_bytes() != (tmp_path / "b" / f).read_bytes():
            mismatched.append(f)
    report(10, not mismatched and len(files) >= 9,
           f"{len(files)} output files compared across two invocations, {len(mismatched)} differ {mismatched}",
           time.perf_counter() - t0, 600)

"""End-to-end acceptance runs.

Each test prints one ``criterion k: PASS|FAIL`` line (visible with ``-v``)
before asserting, so a full run doubles as a readable scorecard.
"""

import math
import time
from dataclasses import replace

import numpy as np
import pytest

from multicalib.agnostic_bridge import (ExactLabels, ExhaustiveWeakLearner, WALContract,
                                        correlation, large_sets, learn_via_wal,
                                        wal_from_multicalibration)
from multicalib.auditor import (check_al_multicalibration, check_calibration, check_multi_ae,
                                check_multicalibration, check_observable_calibration)
from multicalib.bestinclass import PredictorFamily, postprocess
from multicalib.learners import (bound_check, learn_multi_ae, learn_multicalibrated,
                                 multi_ae_bound, multicalibration_bound, progress_failures)
from multicalib.oracles import (EmpiricalGuessCheck, ExactGuessCheck, ExactSQOracle,
                                GuessCheckQuery, PrivacyBudget, SampleStore, check_contract,
                                gc_exact, gc_private, required_samples)
from multicalib.population import REAL, All, GroundTruth, Population, sample_outcomes
from multicalib.predictor import DiscretizationGrid, eval_program_all, program_size

from conftest import additive, planted_labels

pytestmark = pytest.mark.slow


@pytest.fixture
def verdict(capsys):
    def emit(k, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {k}: {'PASS' if ok else 'FAIL'} ({detail})")
        return ok
    return emit


def test_criterion_1_multi_ae_convergence(verdict):
    gamma = 0.1
    start = time.perf_counter()
    worst, dirty = 0.0, 0
    for alpha in (0.05, 0.1, 0.2):
        bound = multi_ae_bound(alpha, gamma)
        for seed in range(50):
            pop, truth, coll = additive(n=500, conjunctions=10, gamma=gamma, seed=seed)
            oracle = ExactSQOracle(truth, alpha * gamma / 4)
            x, trace = learn_multi_ae(coll, pop, oracle, alpha, gamma, truth=truth)
            worst = max(worst, trace.updates / bound)
            dirty += bool(check_multi_ae(x, truth, coll, pop, alpha))
    elapsed = time.perf_counter() - start
    ok = worst <= 1.0 and dirty == 0 and elapsed < 30
    assert verdict(1, ok, f"max updates/bound {worst:.3f}, dirty audits {dirty}, "
                          f"{elapsed:.1f}s")


def test_criteria_2_and_3_multicalibration_and_programs(verdict):
    alpha = lam = gamma = 0.1
    grid = DiscretizationGrid(lam)
    bound = multicalibration_bound(alpha, lam, gamma)
    start = time.perf_counter()
    stats = dict(progress=0, over_bound=0, al_violations=0, closed_failures=0,
                 program_mismatch=0, program_too_long=0)
    for seed in range(50):
        pop, truth, coll = additive(n=2000, conjunctions=20, gamma=gamma, seed=seed)
        assert len(coll) == 20
        x_open, _, trace = learn_multicalibrated(coll, pop, ExactGuessCheck(truth), alpha, lam,
                                                 truth=truth, closing_pass=False)
        stats["progress"] += len(progress_failures(trace, alpha))
        stats["over_bound"] += not bound_check(trace, alpha, lam, gamma)["passed"]
        audit = check_al_multicalibration(x_open, truth, coll, pop, alpha, grid)
        stats["al_violations"] += len(audit.violations)

        x, prog, closed_trace = learn_multicalibrated(coll, pop, ExactGuessCheck(truth), alpha,
                                                      lam, truth=truth)
        assert closed_trace.updates == trace.updates
        stats["closed_failures"] += len(check_multicalibration(x, truth, coll, pop,
                                                               alpha + lam, grid))
        stats["program_mismatch"] += not np.array_equal(eval_program_all(prog, pop), x)
        stats["program_mismatch"] += not np.array_equal(
            eval_program_all(replace(prog, final_table=None), pop), x_open)
        stats["program_too_long"] += program_size(prog) > trace.updates
        assert trace.updates <= bound
    elapsed = time.perf_counter() - start
    ok2 = (stats["progress"] == stats["over_bound"] == stats["al_violations"]
           == stats["closed_failures"] == 0 and elapsed < 300)
    ok3 = stats["program_mismatch"] == stats["program_too_long"] == 0
    verdict(2, ok2, f"progress failures {stats['progress']}, over bound {stats['over_bound']}, "
                    f"(a,l) violations {stats['al_violations']}, closed calibration failures "
                    f"{stats['closed_failures']}, {elapsed:.1f}s")
    verdict(3, ok3, f"program mismatches {stats['program_mismatch']}, "
                    f"oversized programs {stats['program_too_long']}")
    assert ok2 and ok3


def test_criterion_4_guess_check_contracts(verdict):
    rng = np.random.default_rng(4)
    n = 100
    exact_breaches = 0
    for q in range(10 ** 5):
        if q % 1000 == 0:
            truth = GroundTruth(rng.random(n) ** rng.uniform(0.2, 5))
        ids = rng.choice(n, size=int(rng.integers(1, n + 1)), replace=False)
        mean = truth.probs[ids].mean()
        guess = float(np.clip(mean + rng.normal(0, 0.2), 0, 1))
        window = float(rng.uniform(1e-4, 0.1))
        policy = ("accept", "answer", "midpoint")[q % 3]
        resp = gc_exact(truth, GuessCheckQuery(ids, guess, window), gray_zone=policy)
        exact_breaches += bool(check_contract(truth.probs[ids].sum(), ids.size, n, guess,
                                              window, resp))

    rates = {}
    size = 1000
    for eps, window in ((1.0, 0.01), (0.5, 0.01), (1.0, 0.02)):
        store_budget = PrivacyBudget(eps, 1e-6, 10 ** 7, 1000)
        truth = GroundTruth(np.random.default_rng(7).uniform(0.1, 0.9, size))
        store = SampleStore.draw(truth, required_samples(store_budget, window, 0.05), seed=8)
        ok = 0
        for t in range(1000):
            trial = np.random.default_rng([int(eps * 100), int(window * 1000), t])
            ids = trial.choice(size, size=int(trial.integers(100, size)), replace=False)
            ref = store.estimate(ids)
            guess = float(np.clip(ref / ids.size + trial.normal(0, 0.05), 0, 1))
            budget = PrivacyBudget(eps, 1e-6, 10 ** 7, 1000)
            resp = gc_private(store, GuessCheckQuery(ids, guess, window), budget, seed=t)
            ok += not check_contract(ref, ids.size, size, guess, 2 * window, resp)
        rates[(eps, window)] = ok / 1000
    ok = exact_breaches == 0 and min(rates.values()) >= 0.95
    detail = ", ".join(f"eps={e} w={w}: {r:.3f}" for (e, w), r in rates.items())
    assert verdict(4, ok, f"exact breaches {exact_breaches}/100000; private {detail}")


def test_criterion_5_observable_calibration(verdict):
    alpha, xi, size = 0.05, 0.01, 10_000
    assert alpha > math.sqrt(math.log(1 / xi) / (2 * size))
    grid = DiscretizationGrid(0.1)
    rng = np.random.default_rng(5)
    # ten categories of 1000 at the grid centers, each off by at most 0.8 alpha
    k = size // grid.size
    x = np.repeat(grid.centers, k)
    p = np.empty(size)
    for c, v in enumerate(grid.centers):
        spread = rng.uniform(-0.009, 0.009, k)
        p[c * k:(c + 1) * k] = v + rng.uniform(-0.8, 0.8) * alpha + spread - spread.mean()
    pop = Population(np.zeros((size, 1)), (REAL,))
    truth = GroundTruth(p)
    assert check_calibration(x, truth, All(), pop, alpha, grid)[0]
    passed = sum(check_observable_calibration(x, sample_outcomes(truth, s), All(), pop, grid,
                                              2 * alpha)
                 for s in range(1000))
    assert verdict(5, passed >= 990, f"{passed}/1000 outcome seeds observably 2a-calibrated")


def test_criterion_6_sample_based_generalization(verdict):
    alpha = lam = 0.15
    gamma = 0.2
    grid = DiscretizationGrid(lam)
    passed, runs = 0, 20
    for seed in range(runs):
        pop, truth, coll = additive(n=2000, conjunctions=10, gamma=gamma, seed=seed)
        n_samples = math.ceil(50 * math.log(len(coll) / (alpha * lam * gamma * 0.05))
                              / (alpha ** 4 * lam ** 1.5 * gamma ** 1.5))
        store = SampleStore.draw(truth, n_samples, seed=1000 + seed)
        x, _, _ = learn_multicalibrated(coll, pop, EmpiricalGuessCheck(store), alpha, lam)
        passed += check_al_multicalibration(x, truth, coll, pop, 2 * alpha, grid).clean
    assert verdict(6, passed >= 0.9 * runs,
                   f"{passed}/{runs} seeds pass the 2a audit with {n_samples} samples")


def test_criterion_7_best_in_class(verdict):
    alpha = 0.1
    n = 1000
    failures, lemma_violations, worst = 0, 0, -math.inf
    for seed in range(20):
        pop, truth, coll = additive(n=n, conjunctions=10, gamma=0.1, seed=seed)
        noisy = np.clip(truth.probs + np.random.default_rng(seed).normal(0, 0.15, n), 0, 1)
        family = PredictorFamily(["truth", "half", "noisy"],
                                 [truth.probs, np.full(n, 0.5), noisy])
        _, _, report = postprocess(coll, family, alpha, pop, lam=alpha, truth=truth)
        failures += not report.passed
        lemma_violations += sum(len(r.violations) for r in report.lemma)
        worst = max(worst, report.gap)
    ok = failures == 0 and lemma_violations == 0
    assert verdict(7, ok, f"max gap {worst:.3f} vs bound {6 * alpha * n:g}, "
                          f"lemma violations {lemma_violations}")


def test_criterion_8_wal_round_trip(verdict):
    alpha = lam = 0.2
    gamma = 0.1
    grid = DiscretizationGrid(lam)
    clean = 0
    for seed in range(10):
        pop, truth, coll = additive(n=500, conjunctions=10, gamma=gamma, seed=seed)
        x, _ = learn_via_wal(coll, pop, ExhaustiveWeakLearner(coll, pop), alpha, lam, gamma,
                             ExactLabels(truth))
        cp = large_sets(coll, pop, gamma)
        clean += check_al_multicalibration(x, truth, cp, pop, alpha, grid).clean

    rho, gamma_b, alpha_b = 0.5, 0.1, 0.02
    target = rho / 4 - 4 * alpha_b
    corrs = []
    for seed in range(10):
        pop, coll, c, y = planted_labels(seed, gamma=gamma_b)
        assert correlation(c, y) >= rho
        h, _ = wal_from_multicalibration(coll, pop, y, WALContract(rho, target), gamma_b, alpha_b)
        corrs.append(correlation(h.values, y))
    ok_a, ok_b = clean == 10, min(corrs) >= target - 1e-12
    assert verdict(8, ok_a and ok_b, f"(a) {clean}/10 audit-clean; (b) min correlation "
                                     f"{min(corrs):.3f} vs {target:.3f}")


def test_criterion_9_fixpoints(verdict):
    pop, _, coll = additive(n=500, conjunctions=10, gamma=0.1, seed=9)
    half = GroundTruth(np.full(pop.n, 0.5))
    _, ae_trace = learn_multi_ae(coll, pop, ExactSQOracle(half, 0.1 * 0.1 / 4), 0.1)
    _, _, mc_trace = learn_multicalibrated(coll, pop, ExactGuessCheck(half), 0.1, 0.1)
    half_ok = ae_trace.updates == 0 and mc_trace.updates == 0

    _, truth, _ = additive(n=500, conjunctions=10, gamma=0.1, seed=9)
    truth_ok = True
    for alpha in (1e-6, 0.01, 0.05, 0.1, 0.3, 1.0):
        for lam in (0.05, 0.1, 0.25):
            grid = DiscretizationGrid(lam)
            truth_ok &= check_al_multicalibration(truth.probs, truth, coll, pop, alpha,
                                                  grid).clean
            truth_ok &= not check_multicalibration(truth.probs, truth, coll, pop, alpha, grid)
        truth_ok &= not check_multi_ae(truth.probs, truth, coll, pop, alpha)

    x1, _, t1 = learn_multicalibrated(coll, pop, ExactGuessCheck(truth), 1.0, 0.1)
    _, t2 = learn_multi_ae(coll, pop, ExactSQOracle(truth, 0.1 / 4), 1.0)
    one_ok = t1.updates == t2.updates == 0 and t1.sweeps == t2.sweeps == 1
    ok = half_ok and truth_ok and one_ok
    assert verdict(9, ok, f"p*=1/2 updates {ae_trace.updates}+{mc_trace.updates}, "
                          f"truth audits clean {truth_ok}, alpha=1 sweeps {t1.sweeps}/{t2.sweeps}")

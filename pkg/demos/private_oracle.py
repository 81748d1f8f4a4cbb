"""Answering guess-and-check queries from a sample under a privacy budget.

A noisy-threshold mechanism answers only when the guess is far off, so a
learner that mostly guesses right spends almost none of its answer budget.
"""

from multicalib.auditor import check_al_multicalibration
from multicalib.learners import learn_multicalibrated
from multicalib.oracles import PrivacyBudget, PrivateGuessCheck, SampleStore, required_samples
from multicalib.population import generate_synthetic
from multicalib.predictor import DiscretizationGrid

config = {"n": 1000, "bool_dim": 6,
          "collection": {"conjunctions": 6, "max_width": 1, "gamma": 0.2},
          "truth": {"kind": "additive", "base": 0.5, "offset_scale": 0.3, "noise": 0.05,
                    "clip": True}}
pop, truth, coll = generate_synthetic(config, seed=2)
alpha = lam = 0.2
window = alpha * (alpha * lam * coll.gamma) / 4     # smallest window the learner will use

budget = PrivacyBudget(epsilon=1.0, delta=1e-6, k_max=100_000, m_max=200)
n = required_samples(budget, window, xi=0.05)
print(f"sample size for a window of {window:.4f}: {n}")
store = SampleStore.draw(truth, n, seed=3)
oracle = PrivateGuessCheck(store, budget, seed=4)

x, _, trace = learn_multicalibrated(coll, pop, oracle, alpha, lam)
print(f"{budget.queries} queries charged, {budget.answers} of {budget.m_max} answers spent")
audit = check_al_multicalibration(x, truth, coll, pop, 2 * (alpha + lam), DiscretizationGrid(lam))
print(f"audit against the true p* at twice alpha + lambda: clean = {audit.clean}")

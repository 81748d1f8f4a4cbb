"""Learning a multicalibrated predictor and shipping it as a short program.

The learner only ever touches the truth through guess-and-check queries.
Its output is reproduced exactly by an update program: a chain of
(set, interval, shift) steps applied to the constant 1/2.
"""

import json

import numpy as np

from multicalib.auditor import check_al_multicalibration
from multicalib.learners import bound_check, learn_multicalibrated, progress_failures
from multicalib.oracles import ExactGuessCheck
from multicalib.population import generate_synthetic
from multicalib.predictor import DiscretizationGrid, eval_program, eval_program_all

config = {"n": 2000, "bool_dim": 8,
          "collection": {"conjunctions": 20, "max_width": 2, "gamma": 0.1},
          "truth": {"kind": "additive", "base": 0.5, "offset_scale": 0.3, "noise": 0.1,
                    "clip": True}}
pop, truth, coll = generate_synthetic(config, seed=4)
alpha = lam = 0.1

x, prog, trace = learn_multicalibrated(coll, pop, ExactGuessCheck(truth), alpha, lam, truth=truth)
print(f"{trace.queries} queries, {trace.accepts} accepted, {trace.updates} updates")
print(f"potential ||x - p*||^2: {trace.potentials()[0]:.2f} -> {trace.potentials()[-1]:.2f}")
print("updates within the worst-case bound:", bound_check(trace, alpha)["passed"],
      f"(bound {bound_check(trace, alpha)['bound']:.0f})")
print("updates below the per-step progress guarantee:", len(progress_failures(trace, alpha)))

audit = check_al_multicalibration(x, truth, coll, pop, alpha + lam, DiscretizationGrid(lam))
print(f"audit at alpha + lambda = {alpha + lam:.1f}: clean = {audit.clean}")

print(f"\nthe program has {len(prog.steps)} steps at {prog.bits} bits of precision")
print("program reproduces every prediction:", np.array_equal(eval_program_all(prog, pop), x))
print("individual 0:", eval_program(prog, 0, pop), "==", x[0])
print("first step:", json.dumps(prog.to_json()["steps"][0]))

"""A predictor can be accurate on average and still badly miscalibrated.

A protected set S of 200 people is split into a qualified half (p* = 1)
and an unqualified half (p* = 0).  The constant 1/2 predictor is exactly
right on S as a whole, yet every prediction inside S is off by 1/2.
"""

import numpy as np

from multicalib.auditor import ae_error, check_al_multicalibration, check_calibration
from multicalib.learners import learn_multicalibrated
from multicalib.oracles import ExactGuessCheck
from multicalib.population import generate_synthetic
from multicalib.predictor import DiscretizationGrid

config = {"n": 1000, "bool_dim": 4, "collection": {"conjunctions": 0, "include_all": True},
          "truth": {"kind": "half_qualified", "set_size": 200, "outside": 0.5}}
pop, truth, coll = generate_synthetic(config, seed=0)
grid = DiscretizationGrid(0.1)
alpha = 0.1

x = np.full(pop.n, 0.5)
print("constant 1/2 predictor")
for k, s in enumerate(coll):
    ok, _ = check_calibration(x, truth, s, pop, alpha, grid)
    print(f"  set {k} ({s!r}): AE error {ae_error(x, truth, s, pop):+.3f}, calibrated: {ok}")

x, prog, trace = learn_multicalibrated(coll, pop, ExactGuessCheck(truth), alpha, 0.1, truth=truth)
report = check_al_multicalibration(x, truth, coll, pop, alpha + 0.1, grid)
print(f"\nafter {trace.updates} guess-and-check updates the audit is clean: {report.clean}")
print(f"squared error fell from {0.25 * 200:.1f} to {report.squared_error:.2f}")

"""Multicalibration and weak agnostic learning solve each other.

First direction: a weak learner over the protected sets drives a
multicalibration learner.  Second direction: a multicalibrated predictor
for a labeling yields a hypothesis correlated with it.
"""

import numpy as np

from multicalib.agnostic_bridge import (ExactLabels, ExhaustiveWeakLearner, WALContract,
                                        concept_vector, correlation, large_sets, learn_via_wal,
                                        wal_from_multicalibration)
from multicalib.auditor import check_al_multicalibration
from multicalib.population import generate_synthetic
from multicalib.predictor import DiscretizationGrid

config = {"n": 500, "bool_dim": 8,
          "collection": {"conjunctions": 10, "max_width": 2, "gamma": 0.1},
          "truth": {"kind": "additive", "base": 0.5, "offset_scale": 0.3, "noise": 0.1,
                    "clip": True}}
pop, truth, coll = generate_synthetic(config, seed=1)
alpha = lam = 0.2
gamma = 0.1
x, trace = learn_via_wal(coll, pop, ExhaustiveWeakLearner(coll, pop), alpha, lam, gamma,
                         ExactLabels(truth), truth=truth)
kinds = {k: sum(r.kind == k for r in trace.records) for k in ("offset", "concept", "constant")}
print(f"weak-learner driven run: {trace.updates} updates {kinds}")
clean = check_al_multicalibration(x, truth, large_sets(coll, pop, gamma), pop, alpha,
                                  DiscretizationGrid(lam)).clean
print(f"audit on the large sets: clean = {clean}")

# labels that follow one protected set, blurred by noise
rng = np.random.default_rng(1)
c = concept_vector(coll[int(np.argmin(np.abs(coll.densities(pop) - 0.5)))], pop)
y = np.clip(c + rng.normal(0, 0.3, pop.n), -1, 1)
contract = WALContract(rho=0.5, tau=0.045)
h, branch = wal_from_multicalibration(coll, pop, y, contract, gamma=0.1, alpha=0.02)
print(f"\nplanted concept correlation {correlation(c, y):.3f}")
print(f"returned a {branch!r} hypothesis with correlation {correlation(h.values, y):.3f}"
      f" (promised at least {contract.tau})")

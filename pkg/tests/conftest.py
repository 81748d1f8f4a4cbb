import numpy as np
import pytest

from multicalib.agnostic_bridge import concept_vector
from multicalib.population import (All, Conjunction, GroundTruth, Population, SubsetCollection,
                                   generate_synthetic, BOOL)


def half_qualified(n=1000, set_size=100, seed=0, outside=0.5):
    """The planted instance: S of ``set_size`` ids, its qualified half S' with p*=1."""
    cfg = {"n": n, "bool_dim": 3, "real_dim": 0,
           "collection": {"conjunctions": 0},
           "truth": {"kind": "half_qualified", "set_size": set_size, "outside": outside}}
    return generate_synthetic(cfg, seed)


def additive(n=500, conjunctions=10, gamma=0.1, seed=0, stumps=0):
    cfg = {"n": n, "bool_dim": 8, "real_dim": 2 if stumps else 0,
           "collection": {"conjunctions": conjunctions, "stumps": stumps, "max_width": 2,
                          "gamma": gamma},
           "truth": {"kind": "additive", "base": 0.5, "offset_scale": 0.3, "noise": 0.1,
                     "clip": True}}
    return generate_synthetic(cfg, seed)


def planted_labels(seed, n=1000, gamma=0.1):
    """Noisy labels around the concept of the conjunction whose density is nearest 1/2."""
    cfg = {"n": n, "bool_dim": 6, "collection": {"conjunctions": 8, "max_width": 2,
                                                 "gamma": gamma},
           "truth": {"kind": "constant", "value": 0.5}}
    pop, _, coll = generate_synthetic(cfg, seed)
    rng = np.random.default_rng(seed)
    dens = coll.densities(pop)
    k = int(np.argmin(np.abs(dens - 0.5)))
    c = concept_vector(coll[k], pop)
    y = np.clip(c + rng.normal(0, 0.3, n), -1, 1)
    return pop, coll, c, y


def bool_population(rows):
    rows = np.asarray(rows, dtype=float)
    return Population(rows, (BOOL,) * rows.shape[1])


@pytest.fixture
def hq():
    return half_qualified()


@pytest.fixture
def small_instance():
    return additive(n=300, conjunctions=6, gamma=0.15, seed=11)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)

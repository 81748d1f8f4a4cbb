"""Brute-force verification of accuracy-in-expectation and calibration.

Every check enumerates the population exactly; this module is the ground
truth against which learned predictors are accepted.  Categories are the
lambda-intervals of a grid, so predictors that are not grid-valued are
audited on their interval-snapped level sets.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import PreconditionError
from .population import GroundTruth, Population, SetPredicate, SubsetCollection, members
from .predictor import DiscretizationGrid, as_predictor


def size_floor(alpha: float, lam: float, set_size: int) -> float:
    """Minimum category size ``alpha * lam * |S|`` that the (alpha, lambda) check covers."""
    return round(alpha * lam * set_size, 9)


def _truth(truth) -> np.ndarray:
    return truth.probs if isinstance(truth, GroundTruth) else np.asarray(truth, dtype=float)


def _set_ids(pred, pop) -> np.ndarray:
    if isinstance(pred, SetPredicate):
        ids = members(pred, pop)[0]
    else:
        ids = np.asarray(pred, dtype=np.int64)
    if ids.size == 0:
        raise PreconditionError("the audited set is empty")
    return ids


def category_errors(x, ref, ids, grid: DiscretizationGrid):
    """Per-interval ``(center, size, signed mean error)`` of ``x - ref`` over ``ids``."""
    xs, rs = x[ids], ref[ids]
    idx = grid.index_of(xs)
    out = []
    for k in np.unique(idx):
        sel = idx == k
        cnt = int(sel.sum())
        err = (math.fsum(xs[sel]) - math.fsum(rs[sel])) / cnt
        out.append((float(grid.centers[k]), cnt, err))
    return out


def ae_error(x, truth, pred, pop: Population) -> float:
    """Signed ``E_{i~S}[x_i - p*_i]``."""
    x = as_predictor(x, pop.n)
    ids = _set_ids(pred, pop)
    p = _truth(truth)
    return (math.fsum(x[ids]) - math.fsum(p[ids])) / ids.size


def _calibration(x, ref, ids, alpha, grid):
    cats = category_errors(x, ref, ids, grid)
    excluded = [(c, n, e) for c, n, e in cats if abs(e) > alpha]
    mass = sum(n for _, n, _ in excluded)
    ok = mass <= alpha * ids.size + 1e-9
    return ok, {"excluded": [{"center": c, "size": n, "error": e} for c, n, e in excluded],
                "excluded_fraction": mass / ids.size}


def check_calibration(x, truth, pred, pop: Population, alpha: float, grid: DiscretizationGrid):
    """Decide alpha-calibration of ``x`` on a set.

    The subset ``S'`` is built from whole categories: every category whose
    mean error exceeds ``alpha`` is excluded, and the check passes iff the
    excluded mass is at most ``alpha * |S|``.  Returns ``(passed, witness)``.
    """
    x = as_predictor(x, pop.n)
    return _calibration(x, _truth(truth), _set_ids(pred, pop), alpha, grid)


def observable_calibration_error(x, outcomes, pred, pop: Population, grid: DiscretizationGrid,
                                 alpha: float) -> float:
    """Worst category error against realized outcomes after excluding at most ``alpha|S|``.

    Categories are dropped greedily from the largest error down while the
    dropped mass stays within ``alpha * |S|``.
    """
    x = as_predictor(x, pop.n)
    o = np.asarray(getattr(outcomes, "bits", outcomes), dtype=float)
    ids = _set_ids(pred, pop)
    cats = sorted(category_errors(x, o, ids, grid), key=lambda t: -abs(t[2]))
    budget = alpha * ids.size + 1e-9
    dropped = 0
    for k, (_, n, err) in enumerate(cats):
        if dropped + n > budget:
            return abs(err)
        dropped += n
    return 0.0


def check_observable_calibration(x, outcomes, pred, pop, grid, alpha) -> bool:
    x = as_predictor(x, pop.n)
    o = np.asarray(getattr(outcomes, "bits", outcomes), dtype=float)
    return _calibration(x, o, _set_ids(pred, pop), alpha, grid)[0]


def squared_error(x, truth) -> float:
    x = np.asarray(x, dtype=float)
    return math.fsum((x - _truth(truth)) ** 2)


@dataclass
class Violation:
    center: float
    size: int
    error: float

    def to_json(self):
        return {"center": self.center, "size": self.size, "error": self.error}


@dataclass
class SetAudit:
    set_id: int
    size: int
    ae_error: float
    calibrated: bool
    witness: float
    violations: list[Violation] = field(default_factory=list)

    def to_json(self):
        return {"set_id": self.set_id, "size": self.size, "ae_error": self.ae_error,
                "calibrated": self.calibrated, "witness": self.witness,
                "violations": [v.to_json() for v in self.violations]}


@dataclass
class AuditReport:
    alpha: float
    lam: float
    sets: list[SetAudit]
    squared_error: float | None

    @property
    def violations(self) -> list[tuple[int, Violation]]:
        return [(s.set_id, v) for s in self.sets for v in s.violations]

    @property
    def clean(self) -> bool:
        return not self.violations

    @property
    def worst(self) -> tuple[int, Violation] | None:
        vs = self.violations
        return max(vs, key=lambda t: abs(t[1].error)) if vs else None

    def to_json(self) -> dict:
        worst = self.worst
        return {
            "alpha": self.alpha, "lambda": self.lam, "clean": self.clean,
            "n_violations": len(self.violations),
            "worst_violation": None if worst is None else {"set_id": worst[0], **worst[1].to_json()},
            "squared_error": self.squared_error,
            "sets": [s.to_json() for s in self.sets],
        }

    def store(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1) + "\n")


def check_al_multicalibration(x, truth, collection, pop: Population, alpha: float,
                              grid: DiscretizationGrid) -> AuditReport:
    """Exhaustive (alpha, lambda) scan over every set and every grid center.

    A category is flagged when it holds at least ``alpha*lambda*|S|``
    individuals and its summed error exceeds ``alpha`` times its size.
    """
    x = as_predictor(x, pop.n)
    p = _truth(truth)
    preds = collection.predicates if isinstance(collection, SubsetCollection) else list(collection)
    records = []
    for k, pred in enumerate(preds):
        ids = members(pred, pop)[0] if isinstance(pred, SetPredicate) else np.asarray(pred)
        if ids.size == 0:
            records.append(SetAudit(k, 0, 0.0, True, 0.0))
            continue
        floor = size_floor(alpha, grid.lam, ids.size)
        viol = [Violation(c, n, e) for c, n, e in category_errors(x, p, ids, grid)
                if n >= floor and abs(e) > alpha]
        ok, wit = _calibration(x, p, ids, alpha, grid)
        ae = (math.fsum(x[ids]) - math.fsum(p[ids])) / ids.size
        records.append(SetAudit(k, int(ids.size), ae, ok, wit["excluded_fraction"], viol))
    return AuditReport(alpha, grid.lam, records, squared_error(x, p))


def check_multi_ae(x, truth, collection, pop: Population, alpha: float) -> list[tuple[int, float]]:
    """Sets whose accuracy-in-expectation error exceeds ``alpha``."""
    out = []
    for k, pred in enumerate(collection):
        e = ae_error(x, truth, pred, pop)
        if abs(e) > alpha:
            out.append((k, e))
    return out


def check_multicalibration(x, truth, collection, pop, alpha, grid) -> list[int]:
    """Indices of sets on which ``x`` fails alpha-calibration."""
    return [k for k, pred in enumerate(collection)
            if not check_calibration(x, truth, pred, pop, alpha, grid)[0]]

"""Post-processing that competes with the best predictor of a family.

The output is multicalibrated on ``C`` and on every level set of every
candidate ``h``; calibrating on ``h``'s level sets forces the output's
squared error down to within ``6 alpha N`` of the best candidate.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .auditor import check_al_multicalibration, check_calibration, size_floor, squared_error
from .exceptions import ConfigError, PreconditionError
from .learners import learn_multicalibrated
from .oracles import ExactGuessCheck
from .population import Explicit, GroundTruth, Population, SubsetCollection, members
from .predictor import DiscretizationGrid, UpdateProgram, as_predictor, eval_program_all


@dataclass
class PredictorFamily:
    """Named candidate predictors; programs are expanded once against a population."""

    names: list[str]
    members: list

    def __post_init__(self):
        if len(self.names) != len(self.members):
            raise ConfigError("names and members differ in length")
        if not self.members:
            raise ConfigError("the predictor family is empty")

    @classmethod
    def from_dict(cls, entries: dict) -> "PredictorFamily":
        return cls(list(entries), list(entries.values()))

    def dense(self, pop: Population) -> list[np.ndarray]:
        out = []
        for h in self.members:
            if isinstance(h, UpdateProgram):
                out.append(eval_program_all(h, pop))
            else:
                out.append(as_predictor(h, pop.n))
        return out


def categories_of(h, grid: DiscretizationGrid, floor: float = 0.0) -> list[Explicit]:
    """Level sets ``{i : h_i in lambda(v)}`` with at least ``floor`` members."""
    h = as_predictor(h)
    idx = grid.index_of(h)
    out = []
    for c in range(grid.size):
        ids = np.flatnonzero(idx == c)
        if ids.size and ids.size >= floor:
            out.append(Explicit(ids))
    return out


@dataclass
class LemmaCheck:
    center: float
    size: int
    lhs: float
    rhs: float
    checked: bool = True

    @property
    def holds(self) -> bool:
        return self.lhs >= self.rhs - 1e-9

    def to_json(self):
        return {"center": self.center, "size": self.size, "lhs": self.lhs, "rhs": self.rhs,
                "checked": self.checked, "holds": self.holds}


@dataclass
class LemmaReport:
    level: float
    lam: float
    categories: list[LemmaCheck]
    global_lhs: float
    global_rhs: float

    @property
    def violations(self) -> list[LemmaCheck]:
        return [c for c in self.categories if c.checked and not c.holds]

    @property
    def global_holds(self) -> bool:
        return self.global_lhs >= self.global_rhs - 1e-9

    def to_json(self):
        return {"level": self.level, "lambda": self.lam,
                "n_violations": len(self.violations), "global_holds": self.global_holds,
                "global_lhs": self.global_lhs, "global_rhs": self.global_rhs,
                "categories": [c.to_json() for c in self.categories]}


def verify_lemma_best(y, x, truth, grid: DiscretizationGrid, alpha: float,
                      pop: Population | None = None, floor: float | None = None) -> LemmaReport:
    """Check the per-category squared-error improvement of ``x`` over ``y``.

    For every level set ``S_v(y)`` holding at least ``floor`` individuals
    (default ``alpha*lambda*N``) the check is

        sum (y_i - p*_i)^2 - (x_i - p*_i)^2  >=  sum (v - x_i)^2 - (4a + lambda)|S_v(y)|

    and the global version uses ``||x - y||^2`` and ``N``.  The level ``a``
    is ``alpha`` when ``x`` is alpha-calibrated on every checked level set,
    and ``alpha + lambda`` (the guarantee after discretization) otherwise.
    Smaller level sets are reported unchecked.
    """
    y = as_predictor(y)
    x = as_predictor(x, y.size)
    p = truth.probs if isinstance(truth, GroundTruth) else np.asarray(truth, dtype=float)
    n = y.size
    pop = pop if pop is not None else Population(np.zeros((n, 0)), ())
    lam = grid.lam
    floor = size_floor(alpha, lam, n) if floor is None else floor
    idx = grid.index_of(y)
    cats = [(c, np.flatnonzero(idx == c)) for c in np.unique(idx)]
    big = [ids for _, ids in cats if ids.size >= floor]

    def calibrated(level):
        return all(check_calibration(x, p, ids, pop, level, grid)[0] for ids in big)

    if calibrated(alpha):
        level = alpha
    elif calibrated(alpha + lam):
        level = alpha + lam
    else:
        raise PreconditionError(f"x is not {alpha + lam:g}-calibrated on the level sets of y")
    slack = 4 * level + lam
    gain = (y - p) ** 2 - (x - p) ** 2
    checks = []
    for c, ids in cats:
        v = float(grid.centers[c])
        checks.append(LemmaCheck(v, int(ids.size), math.fsum(gain[ids]),
                                 math.fsum((v - x[ids]) ** 2) - slack * ids.size,
                                 ids.size >= floor))
    return LemmaReport(level, lam, checks, math.fsum(gain),
                       math.fsum((x - y) ** 2) - slack * n)


@dataclass
class BestInClassReport:
    alpha: float
    lam: float
    names: list[str]
    candidate_errors: list[float] | None
    output_error: float | None
    lemma: list[LemmaReport] = field(default_factory=list)
    audit: dict | None = None
    n: int = 0

    @property
    def best(self) -> float | None:
        return None if self.candidate_errors is None else min(self.candidate_errors)

    @property
    def gap(self) -> float | None:
        return None if self.output_error is None else self.output_error - self.best

    @property
    def bound(self) -> float:
        return 6 * self.alpha * self.n

    @property
    def passed(self) -> bool | None:
        return None if self.gap is None else self.gap < self.bound

    def to_json(self) -> dict:
        errs = None if self.candidate_errors is None else dict(zip(self.names,
                                                                     self.candidate_errors))
        return {"alpha": self.alpha, "lambda": self.lam, "n": self.n,
                "squared_errors": errs, "output_error": self.output_error,
                "best": self.best, "gap": self.gap, "bound": self.bound, "passed": self.passed,
                "lemma": dict(zip(self.names, (r.to_json() for r in self.lemma))),
                "audit": self.audit}

    def store(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1) + "\n")


def postprocess(collection: SubsetCollection, family: PredictorFamily, alpha: float,
                pop: Population, lam: float | None = None, oracle=None,
                truth: GroundTruth | None = None, **learn_kwargs):
    """Multicalibrate on ``C`` plus the level sets of every candidate.

    Level sets are frozen as explicit sets before learning and those smaller
    than ``alpha*lambda*N`` are dropped.  Every set, level sets included,
    then gets the usual category floor ``alpha*lambda*|S|``, so the output is
    calibrated on each kept level set on its own.  ``lam`` defaults to
    ``alpha``.  Returns ``(x, program, report)``.
    """
    lam = alpha if lam is None else lam
    if oracle is None:
        if truth is None:
            raise ConfigError("postprocess needs an oracle or the ground truth")
        oracle = ExactGuessCheck(truth)
    grid = DiscretizationGrid(lam)
    dense = family.dense(pop)
    n = pop.n
    level_floor = size_floor(alpha, lam, n)
    extra = [s for h in dense for s in categories_of(h, grid, level_floor)]
    preds = list(collection.predicates) + extra
    gamma = min(k for k in (members(s, pop)[0].size for s in preds) if k) / n
    combined = SubsetCollection(tuple(preds), gamma)
    x, prog, trace = learn_multicalibrated(combined, pop, oracle, alpha, lam, truth=truth,
                                           **learn_kwargs)
    report = BestInClassReport(alpha, lam, list(family.names), None, None, n=n)
    if truth is not None:
        report.candidate_errors = [squared_error(h, truth) for h in dense]
        report.output_error = squared_error(x, truth)
        report.lemma = [verify_lemma_best(h, x, truth, grid, alpha, pop) for h in dense]
        audit = check_al_multicalibration(x, truth, collection, pop, alpha + lam, grid)
        report.audit = {"level": alpha + lam, "clean": audit.clean,
                        "n_violations": len(audit.violations), "updates": trace.updates}
    return x, prog, report

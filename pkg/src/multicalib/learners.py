"""Iterative learners for multi-accuracy-in-expectation and multicalibration.

Both learners start from the constant 1/2 predictor and sweep the
collection in a fixed order (set index, then grid center), stopping after a
sweep that triggers no update.  When ground truth is supplied it is used
only for instrumentation: the potential ``||x - p*||^2`` is recorded before
and after every update.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .auditor import size_floor, squared_error
from .exceptions import GuardTripped
from .population import GroundTruth, Population, SubsetCollection
from .predictor import (DiscretizationGrid, UpdateProgram, apply_update, precision_bits,
                        quantize)


@dataclass
class UpdateRecord:
    round: int
    set_id: int
    center: float | None
    size: int
    beta: float
    delta: float
    potential_before: float | None = None
    potential_after: float | None = None
    kind: str = "update"

    @property
    def progress(self) -> float | None:
        if self.potential_before is None:
            return None
        return self.potential_before - self.potential_after


@dataclass
class LearnTrace:
    algorithm: str
    params: dict
    n: int
    records: list[UpdateRecord] = field(default_factory=list)
    accepts: int = 0
    queries: int = 0
    sweeps: int = 0
    wall_time: float = 0.0

    @property
    def updates(self) -> int:
        return len(self.records)

    def potentials(self) -> list[float]:
        out = [r.potential_before for r in self.records[:1]]
        out += [r.potential_after for r in self.records]
        return [p for p in out if p is not None]

    def totals(self) -> dict:
        return {"algorithm": self.algorithm, "params": self.params, "n": self.n,
                "updates": self.updates, "accepts": self.accepts, "queries": self.queries,
                "sweeps": self.sweeps, "wall_time": self.wall_time}

    def store(self, path) -> None:
        """JSON lines: one record per update, then a totals footer."""
        with Path(path).open("w") as fh:
            for r in self.records:
                fh.write(json.dumps({"record": asdict(r)}) + "\n")
            fh.write(json.dumps({"totals": self.totals()}) + "\n")

    @classmethod
    def load(cls, path) -> "LearnTrace":
        records, totals = [], None
        for line in Path(path).read_text().splitlines():
            if not line.strip():
                continue
            obj = json.loads(line)
            if "record" in obj:
                records.append(UpdateRecord(**obj["record"]))
            else:
                totals = obj["totals"]
        if totals is None:
            raise ValueError(f"{path}: trace has no totals footer")
        return cls(totals["algorithm"], totals["params"], totals["n"], records,
                   totals["accepts"], totals["queries"], totals["sweeps"], totals["wall_time"])


def multi_ae_bound(alpha: float, gamma: float) -> float:
    return 16.0 / (3.0 * alpha ** 2 * gamma)


def multicalibration_bound(alpha: float, lam: float, gamma: float) -> float:
    return 16.0 / (alpha ** 3 * lam * gamma)


def _potential(x, truth):
    return None if truth is None else squared_error(x, truth)


def learn_multi_ae(collection: SubsetCollection, pop: Population, sq_oracle, alpha: float,
                   gamma: float | None = None, truth: GroundTruth | None = None,
                   guard_factor: float = 10.0):
    """Learn an alpha-multi-AE predictor from statistical queries.

    Each set whose query answer deviates from the current sum by more than
    ``alpha|S| - tau N`` is shifted uniformly by the average deviation.
    Returns ``(x, trace)``.
    """
    gamma = collection.gamma if gamma is None else gamma
    start = time.perf_counter()
    n = pop.n
    sets = collection.member_lists(pop)
    x = np.full(n, 0.5)
    trace = LearnTrace("multi_ae", {"alpha": alpha, "gamma": gamma}, n)
    guard = guard_factor * multi_ae_bound(alpha, gamma)
    updated = True
    while updated:
        updated = False
        trace.sweeps += 1
        for k, ids in enumerate(sets):
            if ids.size == 0:
                continue
            ans = sq_oracle.query(ids)
            trace.queries += 1
            gap = ans.value - math.fsum(x[ids])
            if abs(gap) <= alpha * ids.size - ans.tolerance * n:
                trace.accepts += 1
                continue
            before = _potential(x, truth)
            x = apply_update(x, ids, gap / ids.size)
            trace.records.append(UpdateRecord(trace.sweeps, k, None, int(ids.size), ids.size / n,
                                              gap / ids.size, before, _potential(x, truth)))
            updated = True
            if trace.updates > guard:
                raise GuardTripped(f"multi-AE exceeded {guard:.0f} updates")
    trace.wall_time = time.perf_counter() - start
    return x, trace


def learn_multicalibrated(collection: SubsetCollection, pop: Population, gc_oracle,
                          alpha: float, lam: float, gamma: float | None = None,
                          truth: GroundTruth | None = None, bits: int | None = None,
                          order=None, guard_factor: float = 10.0, closing_pass: bool = True,
                          floors=None):
    """Learn an (alpha, lambda)-multicalibrated predictor through guess-and-check.

    For every set and center, the category ``S_v`` of current predictions in
    the interval of ``v`` is queried when ``|S_v| >= alpha*lam*|S|``, with its
    mean prediction as the guess and window ``alpha*beta/4``,
    ``beta = |S_v|/N``.  An answer ``r`` shifts the category by
    ``r - mean``.  Categories are recomputed from the current predictor at
    every step.  After convergence the closing pass replaces each prediction
    by its interval mean.  ``floors`` overrides the per-set minimum category
    sizes.

    Returns ``(x, program, trace)``; ``program`` reproduces ``x`` exactly.
    """
    gamma = collection.gamma if gamma is None else gamma
    bits = precision_bits(alpha) if bits is None else bits
    start = time.perf_counter()
    n = pop.n
    grid = DiscretizationGrid(lam)
    preds = list(collection.predicates)
    sets = collection.member_lists(pop)
    order = range(len(sets)) if order is None else list(order)
    if floors is None:
        floors = [size_floor(alpha, lam, ids.size) for ids in sets]

    x = np.full(n, 0.5)
    prog = UpdateProgram(grid, bits)
    trace = LearnTrace("multicalibration", {"alpha": alpha, "lambda": lam, "gamma": gamma,
                                            "bits": bits}, n)
    guard = guard_factor * multicalibration_bound(alpha, lam, gamma)
    idx = grid.index_of(x)
    updated = True
    while updated:
        updated = False
        trace.sweeps += 1
        for k in order:
            ids = sets[k]
            if ids.size == 0:
                continue
            for c in range(grid.size):
                cat = ids[idx[ids] == c]
                if cat.size == 0 or cat.size < floors[k]:
                    continue
                mean = math.fsum(x[cat]) / cat.size
                beta = cat.size / n
                resp = gc_oracle.query(cat, mean, alpha * beta / 4)
                trace.queries += 1
                if resp.accepted:
                    trace.accepts += 1
                    continue
                delta = float(quantize(resp.value - mean, bits))
                before = _potential(x, truth)
                x = apply_update(x, cat, delta)
                idx = grid.index_of(x)
                prog.append(preds[k], grid.centers[c], delta)
                trace.records.append(UpdateRecord(trace.sweeps, k, float(grid.centers[c]),
                                                  int(cat.size), beta, delta, before,
                                                  _potential(x, truth)))
                updated = True
                if trace.updates > guard:
                    raise GuardTripped(f"multicalibration exceeded {guard:.0f} updates")
    if closing_pass:
        table = {}
        for c in np.unique(idx):
            sel = idx == c
            m = float(quantize(math.fsum(x[sel]) / sel.sum(), bits))
            table[float(grid.centers[c])] = m
            x[sel] = m
        prog.final_table = table
    trace.wall_time = time.perf_counter() - start
    return x, prog, trace


def bound_check(trace: LearnTrace, alpha: float, lam: float | None = None,
                gamma: float | None = None) -> dict:
    """Compare the non-accept update count with the potential-argument bound."""
    gamma = trace.params.get("gamma") if gamma is None else gamma
    if trace.algorithm == "multi_ae":
        bound = multi_ae_bound(alpha, gamma)
    else:
        lam = trace.params.get("lambda") if lam is None else lam
        bound = multicalibration_bound(alpha, lam, gamma)
    return {"algorithm": trace.algorithm, "updates": trace.updates, "bound": bound,
            "passed": trace.updates <= bound}


def progress_failures(trace: LearnTrace, alpha: float) -> list[UpdateRecord]:
    """Updates whose potential drop is below the per-update guarantee.

    The guarantee is ``(alpha/4)^2 * |S_v|`` for multicalibration updates and
    ``3 alpha^2 |S| / 16`` for multi-AE updates.
    """
    out = []
    for r in trace.records:
        if r.progress is None:
            continue
        if trace.algorithm == "multi_ae":
            need = 3 * alpha ** 2 * r.size / 16
        else:
            need = (alpha / 4) ** 2 * r.beta * trace.n
        if r.progress < need - 1e-9:
            out.append(r)
    return out

"""Dense predictors, lambda-discretization and compressed update programs.

A dense predictor is a plain float array in ``[0, 1]^N``.  The learners keep
every entry on the dyadic grid ``k / 2**bits`` so that an
:class:`UpdateProgram` evaluated with integer arithmetic reproduces the
dense trace bit for bit.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import SchemaError
from .population import (Population, SetPredicate, _load_column, _store_column,
                         evaluate_predicate, format_prob, members)

_EDGE_DIGITS = 12


class DiscretizationGrid:
    """Partition of [0, 1] into ``ceil(1/lam)`` intervals.

    Intervals are ``[k*lam, (k+1)*lam)``; the last one is closed at 1 and
    absorbs any remainder when ``1/lam`` is not an integer.  Centers are the
    interval midpoints, so for integral ``1/lam`` they are
    ``lam/2, 3*lam/2, ..., 1 - lam/2``.
    """

    def __init__(self, lam: float):
        lam = float(lam)
        if not 0.0 < lam <= 1.0:
            raise ValueError(f"lambda must lie in (0, 1], got {lam}")
        self.lam = lam
        self.size = max(1, math.ceil(1.0 / lam - 1e-9))
        lower = np.round(np.arange(self.size) * lam, _EDGE_DIGITS)
        upper = np.append(lower[1:], 1.0)
        self.lower = lower
        self.upper = upper
        self.centers = np.round((lower + upper) / 2.0, _EDGE_DIGITS)
        self._inner = lower[1:]

    def __len__(self):
        return self.size

    def __repr__(self):
        return f"DiscretizationGrid(lam={self.lam})"

    def index_of(self, values) -> np.ndarray:
        v = np.asarray(values, dtype=float)
        if np.any((v < 0.0) | (v > 1.0)) or np.any(np.isnan(v)):
            raise ValueError("values must lie in [0, 1]")
        return np.searchsorted(self._inner, v, side="right")

    def center_index(self, v: float) -> int:
        k = int(np.argmin(np.abs(self.centers - v)))
        if abs(self.centers[k] - v) > 1e-9:
            raise SchemaError(f"{v} is not a center of {self!r}")
        return k

    def contains(self, v: float, values) -> np.ndarray:
        """Boolean mask of ``values`` lying in the interval centred at ``v``."""
        return self.index_of(values) == self.center_index(v)


def interval_of(grid: DiscretizationGrid, value: float) -> float:
    """Center of the unique interval containing ``value``."""
    return float(grid.centers[int(grid.index_of(value))])


def precision_bits(alpha: float) -> int:
    return max(math.ceil(math.log2(1.0 / alpha)), 20)


def quantize(values, bits: int):
    scale = float(2 ** bits)
    return np.round(np.asarray(values, dtype=float) * scale) / scale


def as_predictor(x, n: int | None = None) -> np.ndarray:
    x = np.asarray(x, dtype=float).ravel()
    if n is not None and x.size != n:
        raise SchemaError(f"predictor has {x.size} entries, population has {n}")
    if np.any((x < 0) | (x > 1)) or np.any(np.isnan(x)):
        raise SchemaError("predictions must lie in [0, 1]")
    return x


def _mean_within(vals: np.ndarray) -> float:
    lo, hi = vals.min(), vals.max()
    if lo == hi:
        return float(lo)
    return float(min(max(math.fsum(vals) / vals.size, lo), hi))


def discretize(x, grid: DiscretizationGrid, bits: int | None = None) -> np.ndarray:
    """Replace every prediction by the mean prediction of its interval.

    With ``bits`` the interval means are rounded to the dyadic grid.
    """
    x = as_predictor(x)
    idx = grid.index_of(x)
    out = x.copy()
    for k in np.unique(idx):
        sel = idx == k
        m = _mean_within(x[sel])
        out[sel] = m if bits is None else float(quantize(m, bits))
    return out


def interval_means(x, grid: DiscretizationGrid) -> dict[float, float]:
    x = as_predictor(x)
    idx = grid.index_of(x)
    return {float(grid.centers[k]): _mean_within(x[idx == k]) for k in np.unique(idx)}


@dataclass(frozen=True, eq=False)
class Category:
    set_id: object
    center: float
    members: np.ndarray
    beta: float

    @property
    def size(self) -> int:
        return int(self.members.size)


def category_of(pred: SetPredicate, grid: DiscretizationGrid, v: float, x, pop: Population,
                set_id=None) -> Category:
    x = as_predictor(x, pop.n)
    ids, _ = members(pred, pop)
    inside = ids[grid.index_of(x[ids]) == grid.center_index(v)]
    return Category(set_id, float(v), inside, inside.size / pop.n)


def apply_update(x, member_ids, delta: float) -> np.ndarray:
    """Shift ``x`` by ``delta`` on ``member_ids`` and project onto [0, 1]."""
    out = np.array(x, dtype=float, copy=True)
    ids = np.asarray(member_ids, dtype=np.int64)
    out[ids] = np.clip(out[ids] + delta, 0.0, 1.0)
    return out


# --------------------------------------------------------------------------
# Update programs
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class UpdateStep:
    predicate: SetPredicate
    center: float
    delta: float


@dataclass
class UpdateProgram:
    """Chain of conditional shifts starting from the constant 1/2.

    Step ``(c_S, v, delta)`` adds ``delta`` (then clips) whenever ``c_S``
    holds and the running value lies in the interval of ``v``.  The optional
    ``final_table`` maps interval centers to replacement values.
    """

    grid: DiscretizationGrid
    bits: int
    steps: list[UpdateStep] = field(default_factory=list)
    final_table: dict[float, float] | None = None
    initial: float = 0.5

    def __post_init__(self):
        if self.bits < 1:
            raise ValueError("precision must be at least one bit")
        for s in self.steps:
            self.grid.center_index(s.center)

    def append(self, predicate: SetPredicate, center: float, delta: float) -> None:
        self.grid.center_index(center)
        self.steps.append(UpdateStep(predicate, float(center), float(delta)))

    def _units(self, value: float) -> int:
        """``value`` in units of ``2**-bits``, rounded to the nearest unit."""
        return int(round(value * 2 ** self.bits))

    def to_json(self) -> dict:
        final = None
        if self.final_table is not None:
            final = {repr(float(k)): float(v) for k, v in sorted(self.final_table.items())}
        return {"lambda": self.grid.lam, "bits": self.bits,
                "steps": [{"set": s.predicate.to_json(), "v": s.center, "delta": s.delta}
                          for s in self.steps],
                "final": final}

    @classmethod
    def from_json(cls, obj: dict) -> "UpdateProgram":
        try:
            grid = DiscretizationGrid(float(obj["lambda"]))
            steps = [UpdateStep(SetPredicate.from_json(s["set"]), float(s["v"]), float(s["delta"]))
                     for s in obj["steps"]]
            final = obj.get("final")
            if final is not None:
                final = {float(grid.centers[grid.center_index(float(k))]): float(v)
                         for k, v in final.items()}
            return cls(grid, int(obj["bits"]), steps, final)
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"malformed update program: {exc}") from exc


def program_size(prog: UpdateProgram) -> int:
    return len(prog.steps)


def eval_program(prog: UpdateProgram, individual, pop: Population | None = None) -> float:
    """Prediction of a single individual (id with ``pop``, or a feature row)."""
    one = 2 ** prog.bits
    grid = prog.grid
    u = prog._units(prog.initial)
    for step in prog.steps:
        if not evaluate_predicate(step.predicate, individual, pop):
            continue
        if int(grid.index_of(u / one)) != grid.center_index(step.center):
            continue
        u = min(max(u + prog._units(step.delta), 0), one)
    if prog.final_table is not None:
        c = float(grid.centers[int(grid.index_of(u / one))])
        if c in prog.final_table:
            u = prog._units(prog.final_table[c])
    return u / one


def eval_program_all(prog: UpdateProgram, pop: Population) -> np.ndarray:
    """Vectorized :func:`eval_program` over the whole population."""
    one = 2 ** prog.bits
    grid = prog.grid
    u = np.full(pop.n, prog._units(prog.initial), dtype=np.int64)
    masks: dict = {}
    for step in prog.steps:
        key = id(step.predicate)
        if key not in masks:
            masks[key] = step.predicate.mask(pop)
        sel = masks[key] & (grid.index_of(u / one) == grid.center_index(step.center))
        u[sel] = np.clip(u[sel] + prog._units(step.delta), 0, one)
    if prog.final_table is not None:
        idx = grid.index_of(u / one)
        for c, val in prog.final_table.items():
            u[idx == grid.center_index(c)] = prog._units(val)
    return u / one


def store_program(prog: UpdateProgram, path) -> None:
    Path(path).write_text(json.dumps(prog.to_json(), indent=1) + "\n")


def load_program(path) -> UpdateProgram:
    try:
        obj = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaError(f"cannot parse program {path}: {exc}") from exc
    return UpdateProgram.from_json(obj)


def store_predictor(x, path) -> None:
    _store_column(as_predictor(x), path, "x", format_prob)


def load_predictor(path) -> np.ndarray:
    return as_predictor(_load_column(path, "x"))

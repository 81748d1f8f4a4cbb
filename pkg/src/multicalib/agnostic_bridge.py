"""Two-way bridge between multicalibration and weak agnostic learning.

Concepts are sets viewed as ``c_S: X -> {-1, +1}``; correlations are taken
under the uniform distribution, ``<a, b> = (1/N) sum_i a_i b_i``.

* :func:`learn_via_wal` searches for calibration violations with a weak
  agnostic learner run on labels ``(x_i - o_i)/2`` restricted to one
  prediction interval, and steps against the returned hypothesis.
* :func:`wal_from_multicalibration` answers a weak agnostic learning query
  with the sign of a predictor multicalibrated on the labels.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .auditor import squared_error
from .exceptions import ConfigError, GuardTripped, SchemaError
from .learners import LearnTrace, UpdateRecord, learn_multicalibrated
from .oracles import ExactGuessCheck
from .population import (All, GroundTruth, Population, SetPredicate, SubsetCollection,
                         _load_column, _store_column, members)
from .predictor import DiscretizationGrid, as_predictor


def concept_vector(pred: SetPredicate, pop: Population) -> np.ndarray:
    return np.where(pred.mask(pop), 1.0, -1.0)


def correlation(a, b) -> float:
    a = np.broadcast_to(np.asarray(a, dtype=float), np.shape(b))
    b = np.asarray(b, dtype=float)
    return math.fsum(a * b) / b.size


def to_label_space(u):
    return 2.0 * np.asarray(u, dtype=float) - 1.0


def to_prob_space(y):
    return (np.asarray(y, dtype=float) + 1.0) / 2.0


def build_delta_labels(x, outcomes, grid: DiscretizationGrid, v: float) -> np.ndarray:
    """``(x_i - o_i)/2`` on the interval of ``v``, zero elsewhere."""
    x = as_predictor(x)
    o = np.asarray(getattr(outcomes, "bits", outcomes), dtype=float)
    return np.where(grid.contains(v, x), (x - o) / 2.0, 0.0)


@dataclass
class Hypothesis:
    """A total function ``X -> [-1, 1]`` with a record of where it came from."""

    kind: str
    values: np.ndarray
    source: object = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if np.any(np.abs(self.values) > 1.0):
            raise SchemaError("hypothesis values must lie in [-1, 1]")

    @classmethod
    def constant(cls, c: float, n: int) -> "Hypothesis":
        return cls("constant", np.full(n, float(c)), float(c))

    @classmethod
    def concept(cls, pred: SetPredicate, pop: Population) -> "Hypothesis":
        return cls("concept", concept_vector(pred, pop), pred)

    @classmethod
    def sign_of(cls, x) -> "Hypothesis":
        """``sgn`` of predictor ``x`` read in label space; zero maps to +1."""
        u = to_label_space(as_predictor(x))
        return cls("sign", np.where(u >= 0, 1.0, -1.0), np.asarray(x, dtype=float))

    def to_json(self) -> dict:
        if self.kind == "constant":
            return {"kind": "constant", "value": self.source}
        if self.kind == "concept":
            return {"kind": "concept", "set": self.source.to_json()}
        if self.kind == "sign":
            return {"kind": "sign", "x": [float(v) for v in self.source]}
        return {"kind": "tabulated", "values": {str(i): float(v) for i, v in enumerate(self.values)}}

    @classmethod
    def from_json(cls, obj: dict, pop: Population | None = None, n: int | None = None):
        kind = obj.get("kind")
        if kind == "constant":
            size = pop.n if pop is not None else n
            if size is None:
                raise SchemaError("constant hypotheses need the population size")
            return cls.constant(float(obj["value"]), size)
        if kind == "concept":
            if pop is None:
                raise SchemaError("concept hypotheses need the population")
            return cls.concept(SetPredicate.from_json(obj["set"]), pop)
        if kind == "sign":
            return cls.sign_of(obj["x"])
        if kind == "tabulated":
            vals = obj["values"]
            arr = np.zeros(len(vals))
            for k, v in vals.items():
                arr[int(k)] = float(v)
            return cls("tabulated", arr)
        raise SchemaError(f"unknown hypothesis kind {kind!r}")

    def store(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json()) + "\n")


@dataclass(frozen=True)
class WALContract:
    rho: float
    tau: float

    def __post_init__(self):
        if not self.rho >= self.tau > 0:
            raise ConfigError(f"need rho >= tau > 0, got rho={self.rho}, tau={self.tau}")


class ExhaustiveWeakLearner:
    """Scans every concept of a collection and the constants +-1.

    Called with labeled examples ``(ids, labels)`` it returns the hypothesis
    of largest empirical correlation if that correlation reaches ``tau``,
    otherwise ``None``.  On a full labeling the empirical correlation is the
    exact one.
    """

    def __init__(self, collection, pop: Population):
        preds = list(getattr(collection, "predicates", collection))
        self.pop = pop
        self.predicates = preds
        concepts = [concept_vector(p, pop) for p in preds]
        concepts += [np.ones(pop.n), -np.ones(pop.n)]
        self.matrix = np.vstack(concepts)
        self.last_correlation = None

    def correlations(self, ids, labels) -> np.ndarray:
        ids = np.asarray(ids, dtype=np.int64)
        return self.matrix[:, ids] @ np.asarray(labels, dtype=float) / ids.size

    def __call__(self, ids, labels, contract: WALContract) -> Hypothesis | None:
        corr = self.correlations(ids, labels)
        best = int(np.argmax(corr))
        self.last_correlation = float(corr[best])
        if corr[best] < contract.tau - 1e-12:    # summation-order slack
            return None
        k = len(self.predicates)
        if best < k:
            return Hypothesis.concept(self.predicates[best], self.pop)
        return Hypothesis.constant(1.0 if best == k else -1.0, self.pop.n)


def exhaustive_weak_learner(collection, pop: Population, examples, contract: WALContract):
    ids, labels = examples
    return ExhaustiveWeakLearner(collection, pop)(ids, labels, contract)


class ExactLabels:
    """Every individual once, with its outcome replaced by ``p*``."""

    def __init__(self, truth: GroundTruth):
        self.truth = truth

    def __call__(self, round_: int):
        return np.arange(self.truth.n), np.asarray(self.truth.probs, dtype=float)


class BernoulliSampler:
    """Fresh uniform labeled samples of a fixed size for every round."""

    def __init__(self, truth: GroundTruth, n: int, seed: int):
        self.truth = truth
        self.n = n
        self.rng = np.random.default_rng(seed)

    def __call__(self, round_: int):
        ids = self.rng.integers(0, self.truth.n, size=self.n)
        return ids, (self.rng.random(self.n) < self.truth.probs[ids]).astype(float)


def wal_sample_size(n_sets: int, n_centers: int, beta: float, tau: float, xi: float) -> int:
    """Hoeffding sample size with a union bound over sets and centers.

    Each category statistic averages ``n`` terms in ``[-1/2, 1/2]``; to keep
    every one within ``beta * tau / 8`` of its mean with probability
    ``1 - xi``, take ``n >= 2 ln(2 |C| |Lambda| / xi) / (beta tau / 4)^2``.
    """
    eps = beta * tau / 4.0
    return int(math.ceil(2.0 * math.log(2.0 * n_sets * n_centers / xi) / eps ** 2 / 4.0))


def learn_via_wal(collection, pop: Population, weak_learner: Callable, alpha: float, lam: float,
                  gamma: float, sampler: Callable, contract: WALContract | None = None,
                  truth: GroundTruth | None = None, guard_factor: float = 10.0):
    """Learn an (alpha, lambda)-multicalibrated predictor on the large sets of C.

    Each round draws fresh labels and scans the intervals ``X_v`` of mass at
    least ``beta = alpha*lambda*gamma``.  An interval that is not observably
    ``tau/4``-accurate in expectation is first shifted by its mean residual.
    Otherwise the weak learner is run on the labels ``+-(x - o)/2`` of the
    interval; a hypothesis ``h`` with correlation ``c >= tau`` against the
    labels moves the interval by ``x <- clip(x -+ eta h)`` with
    ``eta = c / (2 beta_v)``, ``beta_v = |X_v|/N``.  The run stops when no
    interval yields a hypothesis.  Returns ``(x, trace)``.
    """
    beta = alpha * lam * gamma
    rho_max = alpha * beta / 2.0
    contract = WALContract(rho_max, rho_max) if contract is None else contract
    if contract.rho > rho_max * (1 + 1e-9):
        raise ConfigError(f"rho = {contract.rho} exceeds alpha^2 lambda gamma / 2 = {rho_max}")
    tau = contract.tau
    start = time.perf_counter()
    n = pop.n
    grid = DiscretizationGrid(lam)
    x = np.full(n, 0.5)
    trace = LearnTrace("wal", {"alpha": alpha, "lambda": lam, "gamma": gamma,
                               "rho": contract.rho, "tau": tau}, n)
    guard = guard_factor * 16.0 / tau ** 2

    def record(kind, c, size, delta, before):
        trace.records.append(UpdateRecord(trace.sweeps, -1, float(grid.centers[c]), int(size),
                                          size / n, float(delta), before,
                                          None if truth is None else squared_error(x, truth),
                                          kind))
        if trace.updates > guard:
            raise GuardTripped(f"weak-learner reduction exceeded {guard:.0f} updates")

    while True:
        trace.sweeps += 1
        ids, o = sampler(trace.sweeps)
        ids = np.asarray(ids, dtype=np.int64)
        m = ids.size
        idx = grid.index_of(x)
        acted = False
        for c in range(grid.size):
            in_v = idx == c
            size = int(in_v.sum())
            if size < beta * n:
                continue
            hit = in_v[ids]
            if not hit.any():
                continue
            resid = x[ids] - o
            drift = math.fsum(resid[hit]) / m
            before = None if truth is None else squared_error(x, truth)
            if abs(drift) > tau / 4:
                shift = -math.fsum(resid[hit]) / hit.sum()
                x[in_v] = np.clip(x[in_v] + shift, 0.0, 1.0)
                record("offset", c, size, shift, before)
                acted = True
                break
            labels = np.where(hit, resid / 2.0, 0.0)
            for sign in (1.0, -1.0):
                trace.queries += 1
                h = weak_learner(ids, sign * labels, contract)
                if h is None:
                    continue
                corr = correlation(h.values[ids], sign * labels)
                if corr < tau - 1e-12:
                    continue
                eta = corr / (2.0 * size / n)
                x[in_v] = np.clip(x[in_v] - sign * eta * h.values[in_v], 0.0, 1.0)
                record(h.kind, c, size, -sign * eta, before)
                acted = True
                break
            if acted:
                break
            trace.accepts += 1
        if not acted:
            break
    trace.wall_time = time.perf_counter() - start
    return x, trace


def large_sets(collection, pop: Population, gamma: float) -> list[SetPredicate]:
    preds = getattr(collection, "predicates", collection)
    return [p for p in preds if members(p, pop)[0].size >= gamma * pop.n]


def default_mc_learner(collection, pop: Population, truth: GroundTruth, alpha: float):
    """Multicalibrate against ``truth`` to level ``alpha`` in label space.

    Label-space error ``alpha`` is ``alpha/2`` on the probability scale; the
    learner runs at ``(alpha/4, alpha/4)`` so that the closing discretization
    lands at ``alpha/2``.
    """
    a = alpha / 4.0
    coll = SubsetCollection(tuple(collection), min(1.0, min(
        members(p, pop)[1] for p in collection)))
    x, _, _ = learn_multicalibrated(coll, pop, ExactGuessCheck(truth), a, a)
    return x


def wal_from_multicalibration(collection, pop: Population, labels, contract: WALContract,
                              gamma: float, alpha: float, mc_learner: Callable = default_mc_learner):
    """Answer a weak agnostic learning query on ``labels`` using a multicalibration learner.

    Returns ``(hypothesis, branch)`` where branch is ``"minus-one"`` (the
    all ``-1`` hypothesis is already correlated enough), ``"constant"``
    (labels are biased beyond ``rho/4``) or ``"sign"`` (sign of a predictor
    multicalibrated on ``C' + {X}`` against the labels).
    """
    rho, tau = contract.rho, contract.tau
    limit = min(rho - 2 * gamma, rho / 4 - 4 * alpha)
    if tau > limit + 1e-12:
        raise ConfigError(f"tau = {tau} exceeds min(rho - 2 gamma, rho/4 - 4 alpha) = {limit}")
    y = np.asarray(labels, dtype=float)
    if np.any(np.abs(y) > 1):
        raise SchemaError("labels must lie in [-1, 1]")
    n = y.size
    if correlation(-1.0, y) >= rho - 2 * gamma:
        return Hypothesis.constant(-1.0, n), "minus-one"
    bias = math.fsum(y) / n
    if abs(bias) > rho / 4:
        return Hypothesis.constant(1.0 if bias > 0 else -1.0, n), "constant"
    sets = large_sets(collection, pop, gamma) + [All()]
    x = mc_learner(sets, pop, GroundTruth(np.clip(to_prob_space(y), 0.0, 1.0)), alpha)
    return Hypothesis.sign_of(x), "sign"


def store_labels(y, path) -> None:
    _store_column(np.asarray(y, dtype=float), path, "y", lambda v: repr(float(v)))


def load_labels(path) -> np.ndarray:
    y = _load_column(path, "y")
    if np.any(np.abs(y) > 1):
        raise SchemaError(f"{path}: labels must lie in [-1, 1]")
    return y

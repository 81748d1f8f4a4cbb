"""Statistical-query and guess-and-check oracles.

Three flavors share one interface: exact (answers from p*), empirical
(answers from a fixed labeled sample through the inflated estimator
``|S| / |S cap X| * sum of outcomes``) and private (a noisy-threshold
mechanism over the empirical estimate with an answer budget).

For a query ``(S, v, w)`` with reference sum ``p_S`` the guess-and-check
contract is::

    |p_S - |S| v| <  2 w N   ->  accept
    |p_S - |S| v| >  4 w N   ->  a value r in [0, 1]
    any value r               ->  p_S - w N <= r |S| <= p_S + w N
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import (BudgetExhausted, ConfigError, EmptyIntersectionError, WindowError)
from .population import (GroundTruth, LabeledSample, chernoff_halfwidth, draw_sample_counts)

GRAY_ZONE_POLICIES = ("accept", "answer", "midpoint")


@dataclass(frozen=True)
class SQAnswer:
    value: float
    tolerance: float


@dataclass(frozen=True)
class GuessCheckQuery:
    members: np.ndarray
    guess: float
    window: float


@dataclass(frozen=True)
class GuessCheckResponse:
    value: float | None = None

    @property
    def accepted(self) -> bool:
        return self.value is None

    def __repr__(self):
        return "GuessCheckResponse(accept)" if self.accepted else f"GuessCheckResponse({self.value!r})"


ACCEPT = GuessCheckResponse(None)


def _ids(members) -> np.ndarray:
    return np.asarray(members, dtype=np.int64).ravel()


def decide(ref_sum: float, size: int, n: int, guess: float, window: float,
           gray_zone: str = "accept") -> GuessCheckResponse:
    """Noise-free guess-and-check decision against a reference sum."""
    dev = abs(ref_sum - size * guess)
    if dev < 2 * window * n:
        return ACCEPT
    answer = GuessCheckResponse(min(max(ref_sum / size, 0.0), 1.0))
    if dev > 4 * window * n:
        return answer
    if gray_zone == "accept":
        return ACCEPT
    if gray_zone == "answer":
        return answer
    return ACCEPT if dev < 3 * window * n else answer


def check_contract(ref_sum: float, size: int, n: int, guess: float, window: float,
                   response: GuessCheckResponse) -> list[str]:
    """Names of the definitional conditions ``response`` breaks (empty if none)."""
    bad = []
    dev = abs(ref_sum - size * guess)
    if dev < 2 * window * n and not response.accepted:
        bad.append("must-accept")
    if dev > 4 * window * n and response.accepted:
        bad.append("must-answer")
    if not response.accepted:
        r = response.value
        if not 0.0 <= r <= 1.0:
            bad.append("range")
        if not ref_sum - window * n - 1e-9 <= r * size <= ref_sum + window * n + 1e-9:
            bad.append("accuracy")
    return bad


# --------------------------------------------------------------------------
# Samples
# --------------------------------------------------------------------------


class SampleStore:
    """Immutable labeled sample, aggregated per individual.

    ``counts[i]`` is how often ``i`` was drawn and ``ones[i]`` the sum of its
    outcomes, so the multiset ``S cap X`` is summarized by two sums.
    """

    def __init__(self, counts, ones):
        counts = np.asarray(counts, dtype=np.int64).copy()
        ones = np.asarray(ones, dtype=float).copy()
        if counts.shape != ones.shape or np.any(counts < 0) or np.any(ones > counts):
            raise ConfigError("inconsistent sample counts")
        counts.setflags(write=False)
        ones.setflags(write=False)
        self.counts = counts
        self.ones = ones
        self.n_individuals = counts.size

    @classmethod
    def from_sample(cls, sample: LabeledSample, n_individuals: int) -> "SampleStore":
        counts = np.bincount(sample.ids, minlength=n_individuals)
        ones = np.bincount(sample.ids, weights=sample.outcomes, minlength=n_individuals)
        return cls(counts, ones)

    @classmethod
    def full(cls, outcomes) -> "SampleStore":
        """Every individual labeled exactly once."""
        o = np.asarray(getattr(outcomes, "bits", outcomes), dtype=float)
        return cls(np.ones(o.size, dtype=np.int64), o)

    @classmethod
    def draw(cls, truth: GroundTruth, n: int, seed: int) -> "SampleStore":
        return cls(*draw_sample_counts(truth, n, seed))

    @property
    def size(self) -> int:
        return int(self.counts.sum())

    def hits(self, members) -> tuple[int, float]:
        ids = _ids(members)
        return int(self.counts[ids].sum()), float(math.fsum(self.ones[ids]))

    def estimate(self, members) -> float:
        """Inflated sum estimate ``|S| / |S cap X| * sum_{S cap X} o``."""
        ids = _ids(members)
        k, s = self.hits(ids)
        if k == 0:
            raise EmptyIntersectionError("no labeled sample falls in the queried set")
        return ids.size * s / k


# --------------------------------------------------------------------------
# Statistical queries
# --------------------------------------------------------------------------


def sq_exact(truth: GroundTruth, members, tau: float, seed: int | None = None,
             perturb: bool = False) -> SQAnswer:
    """``p*_S``, optionally moved by a seeded perturbation of at most ``tau*N``."""
    if tau <= 0:
        raise ValueError("tolerance must be positive")
    ids = _ids(members)
    value = math.fsum(truth.probs[ids])
    if perturb:
        rng = np.random.default_rng(seed)
        value += float(rng.uniform(-1.0, 1.0)) * tau * truth.n
    return SQAnswer(value, tau)


def sq_empirical(store: SampleStore, members, confidence: float = 0.99) -> SQAnswer:
    ids = _ids(members)
    k, _ = store.hits(ids)
    value = store.estimate(ids)
    tau = ids.size * chernoff_halfwidth(k, confidence) / store.n_individuals
    return SQAnswer(value, tau)


class ExactSQOracle:
    def __init__(self, truth: GroundTruth, tolerance: float, perturb: bool = False,
                 seed: int | None = None):
        if tolerance <= 0:
            raise ValueError("tolerance must be positive")
        self.truth = truth
        self.tolerance = tolerance
        self.perturb = perturb
        self._rng = np.random.default_rng(seed)
        self.queries = 0

    @property
    def n(self):
        return self.truth.n

    def query(self, members) -> SQAnswer:
        self.queries += 1
        seed = int(self._rng.integers(2 ** 63)) if self.perturb else None
        return sq_exact(self.truth, members, self.tolerance, seed, self.perturb)


class EmpiricalSQOracle:
    def __init__(self, store: SampleStore, confidence: float = 0.99):
        self.store = store
        self.confidence = confidence
        self.queries = 0

    @property
    def n(self):
        return self.store.n_individuals

    def query(self, members) -> SQAnswer:
        self.queries += 1
        return sq_empirical(self.store, members, self.confidence)


# --------------------------------------------------------------------------
# Guess-and-check
# --------------------------------------------------------------------------


def _check_window(window, window_min):
    if window < window_min:
        raise WindowError(f"window {window} below the oracle minimum {window_min}")


def gc_exact(truth: GroundTruth, query: GuessCheckQuery, window_min: float = 0.0,
             gray_zone: str = "accept") -> GuessCheckResponse:
    _check_window(query.window, window_min)
    ids = _ids(query.members)
    return decide(math.fsum(truth.probs[ids]), ids.size, truth.n, query.guess, query.window,
                  gray_zone)


def gc_empirical(store: SampleStore, query: GuessCheckQuery, window_min: float = 0.0,
                 gray_zone: str = "accept") -> GuessCheckResponse:
    _check_window(query.window, window_min)
    ids = _ids(query.members)
    return decide(store.estimate(ids), ids.size, store.n_individuals, query.guess, query.window,
                  gray_zone)


class GuessCheckOracle:
    """Stateful wrapper used by the learners; counts responses."""

    def __init__(self, window_min: float = 0.0, gray_zone: str = "accept"):
        if gray_zone not in GRAY_ZONE_POLICIES:
            raise ConfigError(f"gray_zone must be one of {GRAY_ZONE_POLICIES}")
        self.window_min = window_min
        self.gray_zone = gray_zone
        self.queries = 0
        self.answers = 0

    n: int

    def _respond(self, query: GuessCheckQuery) -> GuessCheckResponse:
        raise NotImplementedError

    def query(self, members, guess: float, window: float) -> GuessCheckResponse:
        resp = self._respond(GuessCheckQuery(_ids(members), float(guess), float(window)))
        self.queries += 1
        self.answers += not resp.accepted
        return resp

    def reference(self, members) -> float:
        """The reference sum the flavor's contract is stated against."""
        raise NotImplementedError


class ExactGuessCheck(GuessCheckOracle):
    def __init__(self, truth: GroundTruth, window_min: float = 0.0, gray_zone: str = "accept"):
        super().__init__(window_min, gray_zone)
        self.truth = truth
        self.n = truth.n

    def _respond(self, query):
        return gc_exact(self.truth, query, self.window_min, self.gray_zone)

    def reference(self, members):
        return math.fsum(self.truth.probs[_ids(members)])


class EmpiricalGuessCheck(GuessCheckOracle):
    def __init__(self, store: SampleStore, window_min: float = 0.0, gray_zone: str = "accept"):
        super().__init__(window_min, gray_zone)
        self.store = store
        self.n = store.n_individuals

    def _respond(self, query):
        return gc_empirical(self.store, query, self.window_min, self.gray_zone)

    def reference(self, members):
        return self.store.estimate(members)


# --------------------------------------------------------------------------
# Private guess-and-check
# --------------------------------------------------------------------------


@dataclass
class PrivacyBudget:
    epsilon: float
    delta: float
    k_max: int
    m_max: int
    queries: int = 0
    answers: int = 0

    def __post_init__(self):
        if self.epsilon <= 0 or not 0 < self.delta < 1:
            raise ConfigError("need epsilon > 0 and delta in (0, 1)")
        if self.k_max < 0 or self.m_max < 0:
            raise ConfigError("query and answer caps must be non-negative")

    @property
    def exhausted(self) -> bool:
        return self.queries >= self.k_max or self.answers >= self.m_max

    def charge_query(self):
        if self.queries >= self.k_max:
            raise BudgetExhausted(f"query cap k_max={self.k_max} reached")
        self.queries += 1

    def charge_answer(self):
        if self.answers >= self.m_max:
            raise BudgetExhausted(f"answer cap m_max={self.m_max} reached")
        self.answers += 1

    # Split between the sparse (threshold) part and the numeric releases.
    @property
    def eps_sparse(self) -> float:
        return 8.0 * self.epsilon / 9.0

    @property
    def eps_release(self) -> float:
        return self.epsilon / 9.0

    @property
    def sigma(self) -> float:
        """Composition factor ``sqrt(32 m ln(2/delta))`` of numeric sparse."""
        return math.sqrt(32.0 * max(self.m_max, 1) * math.log(2.0 / self.delta))


class PrivateGuessCheck(GuessCheckOracle):
    """Noisy-threshold guess-and-check over a sample.

    A query posed with window ``w`` is answered so that, with high
    probability, the contract holds at window ``2w`` against the empirical
    reference.  The deviation ``|p_hat - |S| v| / N`` is compared with
    ``6w`` (the midpoint of the ``2w`` gray zone) under Laplace noise;
    above-threshold queries release ``p_hat/|S|`` plus Laplace noise and
    spend one unit of answer budget, after which the threshold noise is
    redrawn.  Noise scales follow numeric sparse with the advanced
    composition factor ``sqrt(32 m ln(2/delta))``:

    * threshold ``Lap(b)``, query ``Lap(2b)`` with ``b = D * sigma / eps_sparse``
      and ``D = |S| / (N (|S cap X| - 1))`` the deviation's sensitivity;
    * release ``Lap(D_r * sigma / eps_release)`` with ``D_r = 1 / (|S cap X| - 1)``.

    ``noise_multiplier=0`` gives the noiseless mechanism.
    """

    contract_factor = 2.0

    def __init__(self, store: SampleStore, budget: PrivacyBudget, seed: int,
                 window_min: float = 0.0, noise_multiplier: float = 1.0):
        super().__init__(window_min, "midpoint")
        self.store = store
        self.budget = budget
        self.n = store.n_individuals
        self.noise_multiplier = float(noise_multiplier)
        self._rng = np.random.default_rng(seed)
        self._threshold_noise = None

    def scales(self, size: int, hits: int) -> tuple[float, float]:
        """Laplace scales ``(b_threshold, b_release)`` for a set of ``size`` with ``hits`` samples."""
        denom = max(hits - 1, 1)
        sens_dev = size / (self.n * denom)
        sens_rel = 1.0 / denom
        b = self.budget.sigma / self.budget.eps_sparse * sens_dev
        br = self.budget.sigma / self.budget.eps_release * sens_rel
        return self.noise_multiplier * b, self.noise_multiplier * br

    def failure_probability(self, size: int, hits: int, window: float) -> float:
        """Union bound on breaking the window-``2w`` contract for one query."""
        b, br = self.scales(size, hits)
        w2 = self.contract_factor * window
        p = 0.0
        if b > 0:
            # threshold noise beyond w2/3 or query noise beyond 2*w2/3
            p += math.exp(-w2 / (3 * b)) + math.exp(-(2 * w2 / 3) / (2 * b))
        if br > 0:
            p += math.exp(-w2 * self.n / (size * br))
        return min(p, 1.0)

    def _laplace(self, scale):
        return float(self._rng.laplace(0.0, scale)) if scale > 0 else 0.0

    def _respond(self, query):
        _check_window(query.window, self.window_min)
        self.budget.charge_query()
        ids = query.members
        size = ids.size
        hits, _ = self.store.hits(ids)
        p_hat = self.store.estimate(ids)
        b, br = self.scales(size, hits)
        if self._threshold_noise is None:
            self._threshold_noise = self._laplace(b)
        w2 = self.contract_factor * query.window
        dev = abs(p_hat - size * query.guess) / self.n
        if dev + self._laplace(2 * b) < 3 * w2 + self._threshold_noise:
            return ACCEPT
        self.budget.charge_answer()
        self._threshold_noise = None
        r = p_hat / size + self._laplace(br)
        return GuessCheckResponse(min(max(r, 0.0), 1.0))

    def reference(self, members):
        return self.store.estimate(members)


def gc_private(store: SampleStore, query: GuessCheckQuery, budget: PrivacyBudget,
               seed: int = 0, noise_multiplier: float = 1.0) -> GuessCheckResponse:
    """One-shot private guess-and-check (fresh threshold noise)."""
    return PrivateGuessCheck(store, budget, seed, noise_multiplier=noise_multiplier)._respond(
        GuessCheckQuery(_ids(query.members), query.guess, query.window))


def required_samples(budget: PrivacyBudget, window: float, xi: float) -> int:
    """Sample size at which each private answer meets the ``2w`` contract w.p. >= 1 - xi.

    Uses ``|S cap X| ~ beta n`` so that the deviation sensitivity is about
    ``1/n``: the decision noise needs ``n >= 3 sigma ln(4/xi) / (2 w eps_sparse)``
    and the release noise ``n >= sigma ln(2/xi) / (2 w eps_release)``.
    """
    s = budget.sigma
    n_dec = 3 * s * math.log(4 / xi) / (2 * window * budget.eps_sparse)
    n_rel = s * math.log(2 / xi) / (2 * window * budget.eps_release)
    return int(math.ceil(max(n_dec, n_rel))) + 1


# --------------------------------------------------------------------------
# Config
# --------------------------------------------------------------------------

DEFAULT_ORACLE = {"flavor": "exact", "tolerance": None, "window_min": 0.0, "gray_zone": "accept",
                  "epsilon": 1.0, "delta": 1e-6, "k_max": 10 ** 7, "m_max": 1000, "xi": 0.05,
                  "seed": 0, "samples": None, "noise_multiplier": 1.0}


def oracle_from_config(cfg: dict, truth: GroundTruth) -> GuessCheckOracle:
    """Build a guess-and-check oracle; empirical and private flavors draw
    ``samples`` labeled pairs from ``truth`` with the config seed."""
    c = {**DEFAULT_ORACLE, **(cfg or {})}
    flavor = c["flavor"]
    if flavor == "exact":
        return ExactGuessCheck(truth, c["window_min"], c["gray_zone"])
    if c["samples"] is None:
        raise ConfigError(f"the {flavor} oracle needs 'samples'")
    store = SampleStore.draw(truth, int(c["samples"]), int(c["seed"]))
    if flavor == "empirical":
        return EmpiricalGuessCheck(store, c["window_min"], c["gray_zone"])
    if flavor == "private":
        budget = PrivacyBudget(float(c["epsilon"]), float(c["delta"]), int(c["k_max"]),
                               int(c["m_max"]))
        return PrivateGuessCheck(store, budget, int(c["seed"]) + 1, c["window_min"],
                                 float(c["noise_multiplier"]))
    raise ConfigError(f"unknown oracle flavor {flavor!r}")


def sq_oracle_from_config(cfg: dict, truth: GroundTruth, tolerance: float):
    c = {**DEFAULT_ORACLE, **(cfg or {})}
    tol = c["tolerance"] if c["tolerance"] is not None else tolerance
    if c["flavor"] == "exact":
        return ExactSQOracle(truth, tol, perturb=bool(c.get("perturb", False)), seed=c["seed"])
    if c["flavor"] == "empirical":
        if c["samples"] is None:
            raise ConfigError("the empirical oracle needs 'samples'")
        return EmpiricalSQOracle(SampleStore.draw(truth, int(c["samples"]), int(c["seed"])))
    raise ConfigError(f"statistical queries support exact and empirical flavors, not {c['flavor']!r}")

"""Populations of individuals, ground-truth probabilities and protected sets.

Individuals are dense integer ids ``0..N-1``.  Each carries a fixed-width
feature row; boolean attributes are stored as ``0.0``/``1.0`` under a
per-attribute kind tag so that conjunctions and stumps share one schema.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .exceptions import ConfigError, DensityError, SchemaError

BOOL = "bool"
REAL = "real"

TRUTH_DIGITS = 9


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Population:
    features: np.ndarray
    kinds: tuple[str, ...]

    def __post_init__(self):
        feats = np.array(self.features, dtype=float, copy=True)
        if feats.ndim == 1:
            feats = feats.reshape(-1, 1) if feats.size else feats.reshape(0, 0)
        if feats.ndim != 2 or feats.shape[0] < 1:
            raise SchemaError("a population needs at least one individual")
        kinds = tuple(self.kinds)
        if len(kinds) != feats.shape[1]:
            raise SchemaError(
                f"{len(kinds)} kind tags for {feats.shape[1]} feature columns")
        for j, kind in enumerate(kinds):
            if kind not in (BOOL, REAL):
                raise SchemaError(f"unknown attribute kind {kind!r}")
            if kind == BOOL and not np.isin(feats[:, j], (0.0, 1.0)).all():
                raise SchemaError(f"boolean attribute {j} has non-0/1 values")
        object.__setattr__(self, "features", _frozen(feats))
        object.__setattr__(self, "kinds", kinds)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def __len__(self) -> int:
        return self.n

    def row(self, i: int) -> np.ndarray:
        return self.features[i]


@dataclass(frozen=True, eq=False)
class GroundTruth:
    probs: np.ndarray

    def __post_init__(self):
        p = np.array(self.probs, dtype=float, copy=True).ravel()
        if p.size < 1:
            raise SchemaError("ground truth must cover at least one individual")
        if not np.all((p >= 0.0) & (p <= 1.0)):
            raise SchemaError("ground-truth probabilities must lie in [0, 1]")
        object.__setattr__(self, "probs", _frozen(p))

    @property
    def n(self) -> int:
        return self.probs.size

    def __len__(self) -> int:
        return self.n


@dataclass(frozen=True, eq=False)
class OutcomeVector:
    bits: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        b = np.array(self.bits, dtype=np.int8, copy=True).ravel()
        if not np.isin(b, (0, 1)).all():
            raise SchemaError("outcomes must be 0/1")
        object.__setattr__(self, "bits", _frozen(b))

    def __len__(self) -> int:
        return self.bits.size


@dataclass(frozen=True, eq=False)
class LabeledSample:
    """Individual/outcome pairs drawn uniformly with replacement.

    Stored as parallel arrays; iterating yields ``(id, outcome)`` pairs.
    """

    ids: np.ndarray
    outcomes: np.ndarray

    def __post_init__(self):
        ids = np.asarray(self.ids, dtype=np.int64).ravel()
        out = np.asarray(self.outcomes, dtype=float).ravel()
        if ids.shape != out.shape:
            raise SchemaError("ids and outcomes differ in length")
        object.__setattr__(self, "ids", _frozen(ids.copy()))
        object.__setattr__(self, "outcomes", _frozen(out.copy()))

    def __len__(self) -> int:
        return self.ids.size

    def __iter__(self) -> Iterator[tuple[int, float]]:
        for i, o in zip(self.ids.tolist(), self.outcomes.tolist()):
            yield i, o


# --------------------------------------------------------------------------
# Set predicates
# --------------------------------------------------------------------------


class SetPredicate:
    """Membership circuit ``c_S`` over individuals."""

    kind: str = ""

    def mask(self, pop: Population) -> np.ndarray:
        raise NotImplementedError

    def contains(self, fv: Sequence[float] | None = None, *, idx: int | None = None) -> bool:
        raise NotImplementedError

    def check_schema(self, dim: int, n: int | None = None) -> None:
        pass

    def to_json(self) -> dict:
        raise NotImplementedError

    @staticmethod
    def from_json(obj: dict) -> "SetPredicate":
        try:
            kind = obj["kind"]
            if kind == "all":
                return All()
            if kind == "conjunction":
                return Conjunction(tuple((int(a), float(v)) for a, v in obj["literals"]))
            if kind == "stump":
                return Stump(int(obj["attr"]), float(obj["threshold"]), obj.get("direction", "ge"))
            if kind == "explicit":
                return Explicit(tuple(int(i) for i in obj["ids"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"malformed set predicate {obj!r}") from exc
        raise SchemaError(f"unknown set predicate kind {kind!r}")

    def __eq__(self, other):
        return type(self) is type(other) and self.to_json() == other.to_json()

    def __hash__(self):
        return hash(json.dumps(self.to_json(), sort_keys=True))

    def __repr__(self):
        return f"{type(self).__name__}({self.to_json()})"


class All(SetPredicate):
    kind = "all"

    def mask(self, pop):
        return np.ones(pop.n, dtype=bool)

    def contains(self, fv=None, *, idx=None):
        return True

    def to_json(self):
        return {"kind": "all"}


class Conjunction(SetPredicate):
    """AND of equality literals ``features[attr] == value``."""

    kind = "conjunction"

    def __init__(self, literals: Sequence[tuple[int, float]] = ()):
        self.literals = tuple((int(a), float(v)) for a, v in literals)

    def check_schema(self, dim, n=None):
        for a, _ in self.literals:
            if not 0 <= a < dim:
                raise SchemaError(f"literal attribute {a} outside feature dimension {dim}")

    def mask(self, pop):
        self.check_schema(pop.dim)
        m = np.ones(pop.n, dtype=bool)
        for a, v in self.literals:
            m &= pop.features[:, a] == v
        return m

    def contains(self, fv=None, *, idx=None):
        if fv is None:
            raise SchemaError("conjunctions are evaluated on feature vectors")
        fv = np.asarray(fv, dtype=float)
        self.check_schema(fv.size)
        return all(fv[a] == v for a, v in self.literals)

    def to_json(self):
        return {"kind": "conjunction",
                "literals": [[a, int(v) if float(v).is_integer() else v] for a, v in self.literals]}


class Stump(SetPredicate):
    """Threshold test on one attribute: ``f >= t`` ("ge") or ``f < t`` ("lt")."""

    kind = "stump"

    def __init__(self, attr: int, threshold: float, direction: str = "ge"):
        if direction not in ("ge", "lt"):
            raise SchemaError(f"stump direction must be 'ge' or 'lt', got {direction!r}")
        self.attr = int(attr)
        self.threshold = float(threshold)
        self.direction = direction

    def check_schema(self, dim, n=None):
        if not 0 <= self.attr < dim:
            raise SchemaError(f"stump attribute {self.attr} outside feature dimension {dim}")

    def _test(self, values):
        if self.direction == "ge":
            return values >= self.threshold
        return values < self.threshold

    def mask(self, pop):
        self.check_schema(pop.dim)
        return self._test(pop.features[:, self.attr])

    def contains(self, fv=None, *, idx=None):
        if fv is None:
            raise SchemaError("stumps are evaluated on feature vectors")
        fv = np.asarray(fv, dtype=float)
        self.check_schema(fv.size)
        return bool(self._test(fv[self.attr]))

    def to_json(self):
        return {"kind": "stump", "attr": self.attr, "threshold": self.threshold,
                "direction": self.direction}


class Explicit(SetPredicate):
    """An explicitly enumerated id set."""

    kind = "explicit"

    def __init__(self, ids: Sequence[int]):
        self.ids = tuple(sorted({int(i) for i in ids}))
        self._idset = frozenset(self.ids)

    def check_schema(self, dim, n=None):
        if n is not None and self.ids and not (0 <= self.ids[0] and self.ids[-1] < n):
            raise SchemaError(f"explicit ids outside [0, {n})")

    def mask(self, pop):
        self.check_schema(pop.dim, pop.n)
        m = np.zeros(pop.n, dtype=bool)
        m[list(self.ids)] = True
        return m

    def contains(self, fv=None, *, idx=None):
        if idx is None:
            raise SchemaError("explicit sets are evaluated on ids")
        return int(idx) in self._idset

    def to_json(self):
        return {"kind": "explicit", "ids": list(self.ids)}


def evaluate_predicate(pred: SetPredicate, individual, pop: Population | None = None) -> bool:
    """Membership of one individual, given as an id (needs ``pop``) or a feature row."""
    if isinstance(individual, (int, np.integer)):
        idx = int(individual)
        if isinstance(pred, (All, Explicit)):
            if pop is not None and not 0 <= idx < pop.n:
                raise SchemaError(f"id {idx} outside population")
            return pred.contains(idx=idx)
        if pop is None:
            raise SchemaError("evaluating by id needs the population")
        if not 0 <= idx < pop.n:
            raise SchemaError(f"id {idx} outside population")
        return pred.contains(pop.row(idx), idx=idx)
    return pred.contains(individual)


def members(pred: SetPredicate, pop: Population) -> tuple[np.ndarray, float]:
    ids = np.flatnonzero(pred.mask(pop))
    return ids, ids.size / pop.n


@dataclass(frozen=True, eq=False)
class SubsetCollection:
    predicates: tuple[SetPredicate, ...]
    gamma: float

    def __post_init__(self):
        object.__setattr__(self, "predicates", tuple(self.predicates))
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigError(f"gamma must lie in (0, 1], got {self.gamma}")

    def __len__(self):
        return len(self.predicates)

    def __iter__(self):
        return iter(self.predicates)

    def __getitem__(self, k):
        return self.predicates[k]

    def densities(self, pop: Population) -> np.ndarray:
        return np.array([members(p, pop)[1] for p in self.predicates])

    def validate(self, pop: Population) -> None:
        """Raise :class:`DensityError` if any member set is below ``gamma * N``."""
        for k, p in enumerate(self.predicates):
            p.check_schema(pop.dim, pop.n)
            ids, _ = members(p, pop)
            if ids.size < self.gamma * pop.n - 1e-9:
                raise DensityError(
                    f"set {k} has {ids.size} members, below gamma*N = {self.gamma * pop.n:g}")

    def member_lists(self, pop: Population) -> list[np.ndarray]:
        return [members(p, pop)[0] for p in self.predicates]


# --------------------------------------------------------------------------
# Sampling
# --------------------------------------------------------------------------


def sample_outcomes(truth: GroundTruth, seed: int) -> OutcomeVector:
    rng = np.random.default_rng(seed)
    bits = (rng.random(truth.n) < truth.probs).astype(np.int8)
    return OutcomeVector(bits, seed)


def draw_labeled_samples(pop: Population, truth: GroundTruth, n: int, seed: int) -> LabeledSample:
    if n < 1:
        raise ValueError("need at least one sample")
    rng = np.random.default_rng(seed)
    ids = rng.integers(0, pop.n, size=n)
    outcomes = (rng.random(n) < truth.probs[ids]).astype(float)
    return LabeledSample(ids, outcomes)


def draw_sample_counts(truth: GroundTruth, n: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-id draw counts and outcome sums of ``n`` uniform labeled samples.

    Distributionally identical to aggregating :func:`draw_labeled_samples`,
    but runs in O(N) memory so very large ``n`` stay cheap.
    """
    if n < 1:
        raise ValueError("need at least one sample")
    rng = np.random.default_rng(seed)
    counts = rng.multinomial(n, np.full(truth.n, 1.0 / truth.n))
    ones = rng.binomial(counts, truth.probs)
    return counts, ones


# --------------------------------------------------------------------------
# Synthetic instances
# --------------------------------------------------------------------------


def _random_conjunction(rng, bool_attrs, max_width):
    width = int(rng.integers(1, max_width + 1))
    attrs = rng.choice(bool_attrs, size=min(width, len(bool_attrs)), replace=False)
    values = rng.integers(0, 2, size=attrs.size)
    return Conjunction(sorted(zip(attrs.tolist(), values.tolist())))


def _random_stump(rng, real_attrs):
    attr = int(rng.choice(real_attrs))
    threshold = round(float(rng.uniform(0.1, 0.9)), 6)
    direction = "ge" if rng.random() < 0.5 else "lt"
    return Stump(attr, threshold, direction)


def _draw_sets(rng, pop, gamma, count, draw):
    found = []
    seen = set()
    tries = 0
    while len(found) < count:
        tries += 1
        if tries > 1000 * max(count, 1):
            raise ConfigError("could not draw enough sets above the density floor")
        pred = draw()
        key = json.dumps(pred.to_json(), sort_keys=True)
        if key in seen:
            continue
        if members(pred, pop)[0].size >= gamma * pop.n:
            seen.add(key)
            found.append(pred)
    return found


def generate_synthetic(config: dict, seed: int) -> tuple[Population, GroundTruth, SubsetCollection]:
    """Build a reproducible instance from a config mapping.

    Config keys: ``n``; ``bool_dim`` and ``real_dim`` (feature widths);
    ``collection`` with ``conjunctions``, ``max_width``, ``stumps``,
    ``include_all`` and ``gamma``; ``truth`` with ``kind`` one of

    * ``constant``: ``value``
    * ``additive``: ``base`` plus ``offsets[j]`` on planted set ``j`` plus
      uniform ``noise`` in ``[-noise, noise]``; without explicit
      ``offsets`` every set gets one drawn from ``[-offset_scale,
      offset_scale]``; ``clip`` must be true if the composition can leave
      ``[0, 1]``
    * ``half_qualified``: set ``S`` of ``set_size`` ids and a subset ``S'``
      of half its size with p* = 1 on ``S'`` and 0 on ``S \\ S'``;
      ``outside`` gives p* off ``S``.  ``S`` and ``S'`` are the first two
      sets of the collection.
    """
    try:
        n = int(config["n"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError("config needs an integer 'n'") from exc
    if n < 1:
        raise ConfigError("n must be at least 1")
    bool_dim = int(config.get("bool_dim", 8))
    real_dim = int(config.get("real_dim", 0))
    cspec = dict(config.get("collection", {}))
    tspec = dict(config.get("truth", {"kind": "constant", "value": 0.5}))
    kind = tspec.get("kind", "constant")
    gamma = float(cspec.get("gamma", 0.1))

    rng = np.random.default_rng(seed)
    extra = 2 if kind == "half_qualified" else 0
    bools = rng.integers(0, 2, size=(n, bool_dim)).astype(float)
    reals = np.round(rng.random((n, real_dim)), 9)
    head = np.zeros((n, extra))

    planted: list[SetPredicate] = []
    if kind == "half_qualified":
        size = int(tspec["set_size"])
        if size < 2 or size % 2 or size > n:
            raise ConfigError("set_size must be even and within [2, n]")
        s_ids = rng.choice(n, size=size, replace=False)
        head[s_ids, 0] = 1.0
        head[s_ids[: size // 2], 1] = 1.0
        planted = [Conjunction([(0, 1)]), Conjunction([(0, 1), (1, 1)])]

    features = np.hstack([head, bools, reals])
    kinds = (BOOL,) * (extra + bool_dim) + (REAL,) * real_dim
    pop = Population(features, kinds)

    bool_attrs = np.arange(extra, extra + bool_dim)
    real_attrs = np.arange(extra + bool_dim, extra + bool_dim + real_dim)
    n_conj = int(cspec.get("conjunctions", 0))
    n_stump = int(cspec.get("stumps", 0))
    if n_conj and bool_dim == 0:
        raise ConfigError("conjunctions need boolean attributes")
    if n_stump and real_dim == 0:
        raise ConfigError("stumps need real attributes")
    max_width = int(cspec.get("max_width", 3))
    preds = list(planted)
    if cspec.get("include_all", False):
        preds.append(All())
    preds += _draw_sets(rng, pop, gamma, n_conj,
                        lambda: _random_conjunction(rng, bool_attrs, max_width))
    preds += _draw_sets(rng, pop, gamma, n_stump,
                        lambda: _random_stump(rng, real_attrs))

    if kind == "half_qualified":
        # S' has density set_size / (2n); the collection's floor must admit it
        dens = members(planted[1], pop)[1]
        gamma = min(gamma, dens) if "gamma" not in cspec else gamma
    collection = SubsetCollection(tuple(preds), gamma)
    collection.validate(pop)

    if kind == "constant":
        probs = np.full(n, float(tspec.get("value", 0.5)))
    elif kind == "additive":
        if "offsets" in tspec:
            offsets = [float(o) for o in tspec["offsets"]]
        else:
            scale = float(tspec.get("offset_scale", 0.0))
            offsets = rng.uniform(-scale, scale, size=len(preds)).tolist()
        if len(offsets) > len(preds):
            raise ConfigError("more offsets than sets in the collection")
        probs = np.full(n, float(tspec.get("base", 0.5)))
        for off, pred in zip(offsets, preds):
            probs = probs + off * pred.mask(pop)
        noise = float(tspec.get("noise", 0.0))
        if noise:
            probs = probs + rng.uniform(-noise, noise, size=n)
        if np.any((probs < 0) | (probs > 1)):
            if not tspec.get("clip", False):
                raise ConfigError("offsets push p* outside [0, 1]; set clip to true")
            probs = np.clip(probs, 0.0, 1.0)
    elif kind == "half_qualified":
        probs = np.full(n, float(tspec.get("outside", 0.5)))
        s = planted[0].mask(pop)
        sq = planted[1].mask(pop)
        probs[s] = 0.0
        probs[sq] = 1.0
    else:
        raise ConfigError(f"unknown truth kind {kind!r}")
    if not np.all((probs >= 0) & (probs <= 1)):
        raise ConfigError("truth outside [0, 1]")
    return pop, GroundTruth(np.round(probs, TRUTH_DIGITS)), collection


# --------------------------------------------------------------------------
# File formats
# --------------------------------------------------------------------------


def _fmt_real(v: float) -> str:
    return repr(float(v))


def _read_rows(path, expected_header=None):
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise SchemaError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise SchemaError(f"{path} is empty")
    header, body = rows[0], [r for r in rows[1:] if r]
    if expected_header is not None and header != expected_header:
        raise SchemaError(f"{path}: expected header {expected_header}, got {header}")
    return header, body


def _dense_ids(ids, path):
    order = np.argsort(ids, kind="stable")
    if not np.array_equal(np.asarray(ids)[order], np.arange(len(ids))):
        raise SchemaError(f"{path}: ids must be exactly 0..N-1")
    return order


def store_population(pop: Population, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id"] + [f"f{j}" for j in range(pop.dim)])
        for i in range(pop.n):
            row = [str(i)]
            for j, kind in enumerate(pop.kinds):
                v = pop.features[i, j]
                row.append(str(int(v)) if kind == BOOL else _fmt_real(v))
            w.writerow(row)


def load_population(path) -> Population:
    header, body = _read_rows(path)
    if not header or header[0] != "id" or header[1:] != [f"f{j}" for j in range(len(header) - 1)]:
        raise SchemaError(f"{path}: header must be id,f0,f1,...")
    try:
        ids = [int(r[0]) for r in body]
        feats = np.array([[float(v) for v in r[1:]] for r in body], dtype=float)
    except (ValueError, IndexError) as exc:
        raise SchemaError(f"{path}: malformed row") from exc
    if any(len(r) != len(header) for r in body):
        raise SchemaError(f"{path}: ragged rows")
    if not body:
        raise SchemaError(f"{path}: no individuals")
    feats = feats.reshape(len(body), len(header) - 1)[_dense_ids(ids, path)]
    kinds = tuple(BOOL if np.isin(feats[:, j], (0.0, 1.0)).all() else REAL
                  for j in range(feats.shape[1]))
    return Population(feats, kinds)


def _store_column(values, path, name, fmt):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", name])
        for i, v in enumerate(values):
            w.writerow([str(i), fmt(v)])


def _load_column(path, name, conv=float):
    _, body = _read_rows(path, ["id", name])
    try:
        ids = [int(r[0]) for r in body]
        vals = [conv(r[1]) for r in body]
    except (ValueError, IndexError) as exc:
        raise SchemaError(f"{path}: malformed row") from exc
    if not body:
        raise SchemaError(f"{path}: no rows")
    return np.asarray(vals)[_dense_ids(ids, path)]


def format_prob(v: float) -> str:
    return f"{float(v):.{TRUTH_DIGITS}f}"


def store_truth(truth: GroundTruth, path) -> None:
    _store_column(truth.probs, path, "p", format_prob)


def load_truth(path) -> GroundTruth:
    return GroundTruth(_load_column(path, "p"))


def store_outcomes(out: OutcomeVector, path) -> None:
    _store_column(out.bits, path, "o", lambda b: str(int(b)))


def load_outcomes(path) -> OutcomeVector:
    return OutcomeVector(_load_column(path, "o", int))


def collection_to_json(coll: SubsetCollection) -> dict:
    return {"gamma": coll.gamma, "sets": [p.to_json() for p in coll.predicates]}


def collection_from_json(obj: dict) -> SubsetCollection:
    try:
        return SubsetCollection(tuple(SetPredicate.from_json(s) for s in obj["sets"]),
                                float(obj["gamma"]))
    except (KeyError, TypeError) as exc:
        raise SchemaError("collection JSON needs 'gamma' and 'sets'") from exc


def store_collection(coll: SubsetCollection, path) -> None:
    Path(path).write_text(json.dumps(collection_to_json(coll), indent=1) + "\n")


def load_collection(path, pop: Population | None = None) -> SubsetCollection:
    """Load a collection; with ``pop`` given the density floor is enforced."""
    try:
        obj = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaError(f"cannot parse collection {path}: {exc}") from exc
    coll = collection_from_json(obj)
    if pop is not None:
        coll.validate(pop)
    return coll


def chernoff_halfwidth(n: int, confidence: float) -> float:
    """Two-sided Hoeffding half-width for a mean of ``n`` values in [0, 1]."""
    return math.sqrt(math.log(2.0 / (1.0 - confidence)) / (2.0 * n))

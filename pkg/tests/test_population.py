import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from multicalib.exceptions import ConfigError, DensityError, SchemaError
from multicalib.population import (All, Conjunction, Explicit, GroundTruth, OutcomeVector,
                                   Population, SetPredicate, Stump, SubsetCollection, BOOL, REAL,
                                   draw_labeled_samples, draw_sample_counts, evaluate_predicate,
                                   generate_synthetic, load_collection, load_outcomes,
                                   load_population, load_truth, members, sample_outcomes,
                                   store_collection, store_outcomes, store_population,
                                   store_truth)

from conftest import additive, bool_population, half_qualified


class TestTypes:
    def test_population_needs_a_row(self):
        with pytest.raises(SchemaError):
            Population(np.zeros((0, 2)), (BOOL, BOOL))

    def test_kind_tags_must_match_columns(self):
        with pytest.raises(SchemaError):
            Population(np.zeros((3, 2)), (BOOL,))

    def test_boolean_column_rejects_fractions(self):
        with pytest.raises(SchemaError):
            Population(np.array([[0.5]]), (BOOL,))

    def test_arrays_are_read_only(self):
        pop = bool_population([[0, 1], [1, 1]])
        truth = GroundTruth([0.2, 0.3])
        with pytest.raises(ValueError):
            pop.features[0, 0] = 1
        with pytest.raises(ValueError):
            truth.probs[0] = 0.9

    def test_truth_range(self):
        with pytest.raises(SchemaError):
            GroundTruth([0.2, 1.2])

    def test_outcomes_are_bits(self):
        with pytest.raises(SchemaError):
            OutcomeVector([0, 2])


class TestSampling:
    @pytest.mark.parametrize("value", [0.0, 1.0])
    def test_degenerate_bernoulli(self, value):
        bits = sample_outcomes(GroundTruth(np.full(50, value)), seed=3).bits
        assert np.all(bits == int(value))

    def test_frequency_of_ones(self):
        # mean of 10 000 Bernoulli(0.8): sd 0.004, so +-0.02 is five sd.
        # Hoeffding: P(|mean - 0.8| > 0.02) <= 2 exp(-2 * 10^4 * 0.02^2) = 6.7e-4.
        truth = GroundTruth(np.full(10_000, 0.8))
        hits = [abs(sample_outcomes(truth, s).bits.mean() - 0.8) <= 0.02 for s in range(200)]
        assert np.mean(hits) >= 0.99

    def test_pure_function_of_seed(self):
        truth = GroundTruth(np.linspace(0, 1, 40))
        a, b = sample_outcomes(truth, 9), sample_outcomes(truth, 9)
        assert np.array_equal(a.bits, b.bits) and a.seed == 9

    def test_zero_samples_rejected(self, hq):
        pop, truth, _ = hq
        with pytest.raises(ValueError):
            draw_labeled_samples(pop, truth, 0, seed=1)

    def test_single_individual_forced(self):
        pop = bool_population([[1]])
        sample = draw_labeled_samples(pop, GroundTruth([1.0]), 5, seed=4)
        assert list(sample) == [(0, 1.0)] * 5

    def test_draw_counts_are_balanced(self):
        # each id ~ Binomial(10^4, 0.01): sd 9.95, so +-40 is 4 sd; per-id
        # tail ~6e-5, union over 100 ids ~6e-3 per seed.
        pop = bool_population(np.zeros((100, 1)))
        truth = GroundTruth(np.full(100, 0.5))
        ok = []
        for s in range(100):
            counts = np.bincount(draw_labeled_samples(pop, truth, 10_000, s).ids, minlength=100)
            ok.append(np.all(np.abs(counts - 100) <= 40))
        assert np.mean(ok) >= 0.95

    def test_aggregated_counts_match_totals(self):
        truth = GroundTruth(np.full(20, 0.5))
        counts, ones = draw_sample_counts(truth, 777, seed=2)
        assert counts.sum() == 777 and np.all(ones <= counts)


class TestPredicates:
    def test_all_is_total(self):
        pop = bool_population(np.zeros((7, 1)))
        ids, dens = members(All(), pop)
        assert ids.tolist() == list(range(7)) and dens == 1.0
        assert evaluate_predicate(All(), 3, pop)

    def test_empty_conjunction_is_vacuous(self):
        assert evaluate_predicate(Conjunction([]), [0.0, 1.0])

    def test_conjunction_literals(self):
        fv = [1.0, 0.0, 0.0, 1.0]
        assert evaluate_predicate(Conjunction([(0, 1), (2, 0)]), fv)
        assert not evaluate_predicate(Conjunction([(0, 1), (2, 1)]), fv)

    def test_explicit_members(self):
        pop = bool_population(np.zeros((10, 1)))
        ids, dens = members(Explicit([5, 3]), pop)
        assert ids.tolist() == [3, 5] and dens == pytest.approx(0.2)

    def test_out_of_range_attribute(self):
        with pytest.raises(SchemaError):
            evaluate_predicate(Conjunction([(4, 1)]), [0.0, 1.0])
        with pytest.raises(SchemaError):
            Stump(2, 0.5).mask(bool_population([[0, 1]]))

    def test_explicit_ids_beyond_population(self):
        with pytest.raises(SchemaError):
            Explicit([0, 9]).mask(bool_population(np.zeros((3, 1))))

    def test_stump_direction(self):
        pop = Population(np.array([[0.1], [0.5], [0.9]]), (REAL,))
        assert members(Stump(0, 0.5, "ge"), pop)[0].tolist() == [1, 2]
        assert members(Stump(0, 0.5, "lt"), pop)[0].tolist() == [0]
        with pytest.raises(SchemaError):
            Stump(0, 0.5, "gt")

    @pytest.mark.parametrize("pred", [All(), Conjunction([(1, 0), (3, 1)]), Stump(8, 0.4, "lt"),
                                      Explicit([2, 17, 40])])
    def test_json_round_trip(self, pred):
        assert SetPredicate.from_json(json.loads(json.dumps(pred.to_json()))) == pred

    def test_unknown_kind(self):
        with pytest.raises(SchemaError):
            SetPredicate.from_json({"kind": "halfspace"})

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2 ** 31 - 1), st.integers(0, 3))
    def test_members_match_pointwise_evaluation(self, seed, width):
        rng = np.random.default_rng(seed)
        feats = np.hstack([rng.integers(0, 2, (30, 4)), rng.random((30, 1))])
        pop = Population(feats, (BOOL,) * 4 + (REAL,))
        attrs = rng.choice(4, size=width, replace=False)
        preds = [Conjunction(zip(attrs.tolist(), rng.integers(0, 2, width).tolist())),
                 Stump(4, float(rng.random()), "ge"), Explicit(rng.choice(30, 5).tolist())]
        for pred in preds:
            brute = [i for i in range(pop.n) if evaluate_predicate(pred, i, pop)]
            assert members(pred, pop)[0].tolist() == brute


class TestGenerator:
    def test_half_qualified_split(self):
        pop, truth, coll = half_qualified(set_size=100)
        s_ids = members(coll[0], pop)[0]
        assert s_ids.size == 100
        assert np.sum(truth.probs[s_ids] == 1.0) == 50
        assert np.sum(truth.probs[s_ids] == 0.0) == 50
        assert set(members(coll[1], pop)[0]) <= set(s_ids)

    def test_constant_truth(self):
        _, truth, _ = generate_synthetic({"n": 50, "truth": {"kind": "constant", "value": 0.5}}, 0)
        assert np.all(truth.probs == 0.5)

    def test_planted_densities_respect_floor(self):
        cfg = {"n": 2000, "bool_dim": 6, "collection": {"conjunctions": 3, "gamma": 0.2},
               "truth": {"kind": "additive", "base": 0.4, "offsets": [0.1, -0.1, 0.2],
                         "clip": True}}
        pop, _, coll = generate_synthetic(cfg, 5)
        assert len(coll) == 3
        assert coll.densities(pop).min() >= 0.2

    def test_unclipped_offsets_rejected(self):
        cfg = {"n": 200, "bool_dim": 4, "collection": {"conjunctions": 2, "gamma": 0.1},
               "truth": {"kind": "additive", "base": 0.9, "offsets": [0.5, 0.5]}}
        with pytest.raises(ConfigError):
            generate_synthetic(cfg, 0)

    def test_deterministic(self):
        a = additive(n=200, seed=3)
        b = additive(n=200, seed=3)
        assert np.array_equal(a[0].features, b[0].features)
        assert np.array_equal(a[1].probs, b[1].probs)
        assert a[2].predicates == b[2].predicates

    def test_unknown_truth_kind(self):
        with pytest.raises(ConfigError):
            generate_synthetic({"n": 10, "truth": {"kind": "sigmoid"}}, 0)


class TestFiles:
    def test_round_trips(self, tmp_path):
        pop, truth, coll = additive(n=120, conjunctions=3, seed=1, stumps=2)
        store_population(pop, tmp_path / "pop.csv")
        store_truth(truth, tmp_path / "truth.csv")
        store_collection(coll, tmp_path / "coll.json")
        pop2 = load_population(tmp_path / "pop.csv")
        assert np.array_equal(pop2.features, pop.features) and pop2.kinds == pop.kinds
        assert np.array_equal(load_truth(tmp_path / "truth.csv").probs, truth.probs)
        coll2 = load_collection(tmp_path / "coll.json", pop2)
        assert coll2.predicates == coll.predicates and coll2.gamma == coll.gamma

    def test_outcome_round_trip(self, tmp_path):
        out = sample_outcomes(GroundTruth(np.full(30, 0.3)), 2)
        store_outcomes(out, tmp_path / "o.csv")
        assert np.array_equal(load_outcomes(tmp_path / "o.csv").bits, out.bits)

    def test_density_violation_at_load(self, tmp_path):
        pop = bool_population(np.eye(10)[:, :2])
        store_collection(SubsetCollection((Conjunction([(0, 1)]),), 0.5), tmp_path / "c.json")
        with pytest.raises(DensityError):
            load_collection(tmp_path / "c.json", pop)

    def test_malformed_population(self, tmp_path):
        (tmp_path / "p.csv").write_text("id,f0\n0,1\n2,0\n")
        with pytest.raises(SchemaError):
            load_population(tmp_path / "p.csv")

    def test_malformed_collection(self, tmp_path):
        (tmp_path / "c.json").write_text("{not json")
        with pytest.raises(SchemaError):
            load_collection(tmp_path / "c.json")

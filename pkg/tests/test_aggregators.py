import numpy as np
import pytest

from fedmar.aggregators import (
    AggregationInput,
    bulyan,
    dnc,
    fed_avg,
    fed_median,
    make_aggregator,
    multi_krum,
    trimmed_mean,
)
from fedmar.errors import DimensionMismatch, OvertrimError, TooFewClients

from oracles import bulyan_reference, krum_selection, median_reference, trimmed_mean_reference


def inp(vectors, ids=None, weights=None):
    ids = ids if ids is not None else range(len(vectors))
    return AggregationInput.from_pairs(
        [(cid, np.asarray(v, dtype=float)) for cid, v in zip(ids, vectors)], weights
    )


class TestFedAvg:
    def test_single_vector(self):
        assert np.array_equal(fed_avg(inp([[1.0, 2.0]])), [1.0, 2.0])

    def test_midpoint(self):
        assert np.array_equal(fed_avg(inp([[0.0, 0.0], [2.0, 4.0]])), [1.0, 2.0])

    def test_matches_direct_mean(self):
        rng = np.random.default_rng(0)
        vs = rng.standard_normal((5, 7))
        out = fed_avg(inp(vs))
        direct = sum(v for v in vs) / 5.0
        assert np.allclose(out, direct, atol=1e-12)

    def test_weighted(self):
        out = fed_avg(inp([[0.0], [10.0]], weights=[0.25, 0.75]))
        assert np.allclose(out, [7.5])

    def test_bad_weights(self):
        with pytest.raises(DimensionMismatch):
            inp([[0.0], [1.0]], weights=[0.5, 0.6])


class TestFedMedian:
    def test_odd_count(self):
        out = fed_median(inp([[1.0, 5.0], [2.0, 4.0], [3.0, 3.0]]))
        assert np.array_equal(out, [2.0, 4.0])

    def test_even_count_midpoint(self):
        out = fed_median(inp([[0.0, 0.0], [10.0, 10.0]]))
        assert np.array_equal(out, [5.0, 5.0])

    def test_matches_sort_oracle(self):
        rng = np.random.default_rng(1)
        vs = rng.standard_normal((7, 4))
        assert np.array_equal(fed_median(inp(vs)), median_reference(vs))

    def test_within_coordinate_range(self):
        rng = np.random.default_rng(2)
        vs = rng.standard_normal((6, 5))
        out = fed_median(inp(vs))
        assert np.all(out >= vs.min(axis=0)) and np.all(out <= vs.max(axis=0))


class TestTrimmedMean:
    def test_beta_zero_is_fedavg(self):
        rng = np.random.default_rng(3)
        vs = rng.standard_normal((6, 4))
        assert np.allclose(trimmed_mean(inp(vs), 0.0), fed_avg(inp(vs)), atol=1e-12)

    def test_outlier_trimmed(self):
        vs = [[1.0], [2.0], [3.0], [4.0], [100.0]]
        assert np.allclose(trimmed_mean(inp(vs), 0.2), [3.0])

    def test_floor_behavior(self):
        vs = [[0.0], [10.0]]
        assert np.allclose(trimmed_mean(inp(vs), 0.49), [5.0])

    def test_invalid_beta(self):
        with pytest.raises(OvertrimError):
            trimmed_mean(inp([[1.0]]), 0.5)

    def test_matches_reference(self):
        rng = np.random.default_rng(4)
        vs = rng.standard_normal((9, 3))
        assert np.array_equal(trimmed_mean(inp(vs), 0.2), trimmed_mean_reference(vs, 0.2))


class TestMultiKrum:
    def test_identical_vectors(self):
        vs = [[1.0, 2.0]] * 4
        assert np.array_equal(multi_krum(inp(vs), 0, 1), [1.0, 2.0])

    def test_scalar_outlier_rejected(self):
        vs = [[0.0], [0.1], [0.2], [0.3], [100.0]]
        out = multi_krum(inp(vs), 1, 1)
        chosen = krum_selection(np.asarray(vs), list(range(5)), 1, 1)
        assert np.array_equal(out, np.asarray(vs)[chosen[0]])
        assert out[0] in (0.1, 0.2)

    def test_matches_oracle_selection(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            vs = rng.standard_normal((6, 3))
            for k_sel in (1, 2, 4):
                mine = multi_krum(inp(vs), 1, k_sel)
                chosen = krum_selection(vs, list(range(6)), 1, k_sel)
                assert np.array_equal(mine, np.mean(vs[chosen], axis=0))

    def test_keep_all_is_fedavg(self):
        rng = np.random.default_rng(6)
        vs = rng.standard_normal((5, 4))
        assert np.allclose(multi_krum(inp(vs), 0, 5), fed_avg(inp(vs)), atol=1e-12)

    def test_too_few_clients(self):
        with pytest.raises(TooFewClients):
            multi_krum(inp([[0.0], [1.0]]), 1, 1)


class TestBulyan:
    def test_identical_vectors(self):
        vs = [[2.0, 3.0]] * 3
        assert np.array_equal(bulyan(inp(vs), 0), [2.0, 3.0])

    def test_outlier_never_survives(self):
        vs = [[0.0]] * 6 + [[50.0]]
        assert np.array_equal(bulyan(inp(vs), 1), [0.0])

    def test_matches_reference(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            vs = rng.standard_normal((11, 2))
            assert np.array_equal(bulyan(inp(vs), 2), bulyan_reference(vs, list(range(11)), 2))

    def test_precondition(self):
        vs = [[float(i)] for i in range(6)]
        with pytest.raises(TooFewClients):
            bulyan(inp(vs), 1)  # needs 4b + 3 = 7


class TestDnc:
    def test_identical_vectors_keep_everyone(self):
        vs = [[1.0, 1.0]] * 5
        out = dnc(inp(vs), niters=5, filter_frac=1.0, sub_dim=2, num_malicious=1, seed=0)
        assert np.array_equal(out, [1.0, 1.0])

    def test_far_outlier_removed(self):
        rng = np.random.default_rng(8)
        vs = list(0.01 * rng.standard_normal((9, 4)))
        vs.append(np.full(4, 500.0))
        out = dnc(inp(vs), niters=5, filter_frac=1.0, sub_dim=4, num_malicious=1, seed=1)
        clean_mean = np.mean(np.stack(vs[:9]), axis=0)
        assert np.allclose(out, clean_mean, atol=1e-9)

    def test_deterministic(self):
        rng = np.random.default_rng(9)
        vs = rng.standard_normal((6, 5))
        a = dnc(inp(vs), 5, 1.0, 3, 2, seed=7)
        b = dnc(inp(vs), 5, 1.0, 3, 2, seed=7)
        assert np.array_equal(a, b)

    def test_all_filtered_falls_back_to_best(self):
        rng = np.random.default_rng(10)
        vs = rng.standard_normal((3, 4))
        out = dnc(inp(vs), niters=3, filter_frac=1.0, sub_dim=4, num_malicious=3, seed=2)
        assert out.shape == (4,)
        assert any(np.array_equal(out, v) for v in vs)


class TestPermutationInvariance:
    def test_all_rules(self):
        rng = np.random.default_rng(11)
        vs = rng.standard_normal((7, 3))
        ids = [3, 1, 4, 0, 5, 2, 6]
        perm = [5, 2, 0, 6, 1, 4, 3]
        a = AggregationInput.from_pairs([(i, v) for i, v in zip(ids, vs)])
        b = AggregationInput.from_pairs([(ids[j], vs[j]) for j in perm])
        rules = [
            fed_avg,
            fed_median,
            lambda x: trimmed_mean(x, 0.2),
            lambda x: multi_krum(x, 1, 3),
            lambda x: bulyan(x, 1),
            lambda x: dnc(x, 5, 1.0, 3, 1, seed=3),
        ]
        for rule in rules:
            assert np.array_equal(rule(a), rule(b))


class TestFactory:
    def test_known_names(self):
        rng = np.random.default_rng(12)
        vs = rng.standard_normal((7, 3))
        data = inp(vs)
        for name in ("fedavg", "fedmedian", "trimmed_mean", "multi_krum", "bulyan", "dnc"):
            out = make_aggregator(name, num_malicious=1)(data)
            assert out.shape == (3,)

    def test_unknown_name(self):
        with pytest.raises(ValueError):
            make_aggregator("secure_sum")


def test_oracle_equivalence_random_instances():
    """Brute-force agreement across random small instances (all rules)."""
    rng = np.random.default_rng(13)
    for _ in range(60):
        m = int(rng.integers(5, 7))
        d = int(rng.integers(1, 4))
        vs = rng.standard_normal((m, d))
        data = inp(vs)
        b = 1 if m < 7 else 1
        assert np.array_equal(fed_median(data), median_reference(vs))
        assert np.array_equal(trimmed_mean(data, 0.2), trimmed_mean_reference(vs, 0.2))
        chosen = krum_selection(vs, list(range(m)), b, 2)
        assert np.array_equal(multi_krum(data, b, 2), np.mean(vs[chosen], axis=0))

"""Detection policy, consistency audit, and the noisy-binarization analytics."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hashfed import defense, protocol

from conftest import make_system


class TestDetectionPolicy:
    def test_default_threshold_is_half(self):
        assert defense.DetectionPolicy(code_bits=8).resolved_threshold == 4
        assert defense.DetectionPolicy(code_bits=7).resolved_threshold == 3
        assert defense.DetectionPolicy(code_bits=8, threshold=2).resolved_threshold == 2

    def test_default_threshold_floors_at_one(self):
        assert defense.DetectionPolicy(code_bits=1).resolved_threshold == 1

    def test_threshold_bounds(self):
        with pytest.raises(ValueError):
            defense.DetectionPolicy(code_bits=4, threshold=0)
        with pytest.raises(ValueError):
            defense.DetectionPolicy(code_bits=4, threshold=5)
        with pytest.raises(ValueError):
            defense.DetectionPolicy(code_bits=4, reference="nearest")


class TestDetectAbnormal:
    def test_flag_is_strictly_greater(self):
        policy = defense.DetectionPolicy(code_bits=4, threshold=2)
        agree = [[1.0, 1.0, -1.0, -1.0]] * 2
        two_off = [[1.0, 1.0, -1.0, -1.0], [-1.0, -1.0, -1.0, -1.0]]
        three_off = [[1.0, 1.0, 1.0, -1.0], [-1.0, -1.0, -1.0, -1.0]]
        assert defense.detect_abnormal(agree, policy) == (False, 0)
        assert defense.detect_abnormal(two_off, policy) == (False, 2)
        assert defense.detect_abnormal(three_off, policy) == (True, 3)

    def test_pairwise_takes_worst_pair(self):
        policy = defense.DetectionPolicy(code_bits=2, threshold=1)
        codes = [[1.0, 1.0], [1.0, 1.0], [-1.0, -1.0]]
        flag, worst = defense.detect_abnormal(codes, policy)
        assert (flag, worst) == (True, 2)

    def test_initiator_ignores_non_initiator_pairs(self):
        policy = defense.DetectionPolicy(code_bits=2, threshold=1, reference="initiator")
        # parties 1 and 2 disagree with each other but each sits 1 bit from party 0
        codes = [[1.0, 1.0], [-1.0, 1.0], [1.0, -1.0]]
        flag, worst = defense.detect_abnormal(codes, policy)
        assert (flag, worst) == (False, 1)

    def test_validation(self):
        policy = defense.DetectionPolicy(code_bits=2)
        with pytest.raises(ValueError, match="two parties"):
            defense.detect_abnormal([[1.0, -1.0]], policy)
        with pytest.raises(ValueError, match="does not match"):
            defense.detect_abnormal([[1.0], [1.0]], policy)
        with pytest.raises(ValueError, match="entries"):
            defense.detect_abnormal([[1.0, 0.5], [1.0, 1.0]], policy)


class TestConsistencyAudit:
    def test_report_structure(self):
        ds, parties, server, _ = make_system(epochs=4, seed=6)
        report = defense.consistency_audit(parties, server, ds.test_features(), ds.test_labels())
        assert report["reference"] == "pairwise"
        assert len(report["per_class"]) == 2
        assert report["correct_count"] + report["wrong_count"] == len(ds.test_idx)
        assert report["accuracy"] == pytest.approx(
            report["correct_count"] / len(ds.test_idx)
        )
        for cellname in ("correct", "wrong"):
            mean = report[f"{cellname}_mean"]
            assert mean is None or 0.0 <= mean <= 2.0

    def test_empty_cells_are_none(self):
        ds, parties, server, _ = make_system(epochs=6, seed=3)
        X, y = ds.test_features(), ds.test_labels()
        report = defense.consistency_audit(parties, server, X, y)
        if report["wrong_count"] == 0:
            assert report["wrong_mean"] is None

    def test_distances_match_manual_computation(self):
        ds, parties, server, _ = make_system(epochs=3, seed=9)
        X, y = ds.test_features(), ds.test_labels()
        report = defense.consistency_audit(parties, server, X, y)
        codes = protocol.party_codes(parties, X)
        per_sample = (codes[0] != codes[1]).sum(axis=1)
        correct = protocol.predict(parties, server, X) == y
        if correct.any():
            assert report["correct_mean"] == pytest.approx(per_sample[correct].mean())

    def test_needs_two_parties(self):
        ds, parties, server, _ = make_system(epochs=1, seed=2)
        with pytest.raises(ValueError):
            defense.consistency_audit(parties[:1], server, ds.test_features(), ds.test_labels())
        with pytest.raises(ValueError, match="reference"):
            defense.consistency_audit(
                parties, server, ds.test_features(), ds.test_labels(), reference="median"
            )


class TestDpParams:
    def test_scale(self):
        assert defense.DpParams(epsilon=2.0).scale == 1.0
        assert defense.DpParams(epsilon=0.5).scale == 4.0

    def test_validation(self):
        with pytest.raises(ValueError):
            defense.DpParams(epsilon=0.0)
        with pytest.raises(ValueError):
            defense.DpParams(epsilon=math.inf)
        with pytest.raises(ValueError):
            defense.DpParams(epsilon=1.0, sensitivity=1.0)


class TestLaplaceNoise:
    def test_moments(self):
        rng = np.random.default_rng(0)
        z = defense.laplace_noise(rng, 2.0, 200_000)
        # Laplace(b): mean 0, variance 2 b^2
        assert abs(z.mean()) < 0.02
        assert z.std() == pytest.approx(math.sqrt(8.0), rel=0.02)

    def test_tail_probability(self):
        rng = np.random.default_rng(1)
        z = defense.laplace_noise(rng, 1.0, 200_000)
        # P(|z| > t) = e^(-t) for unit scale
        assert (np.abs(z) > 1.0).mean() == pytest.approx(math.exp(-1.0), abs=0.005)

    def test_deterministic(self):
        a = defense.laplace_noise(np.random.default_rng(7), 1.5, 10)
        b = defense.laplace_noise(np.random.default_rng(7), 1.5, 10)
        assert np.array_equal(a, b)


class TestFlipAnalytics:
    def test_flip_probability_closed_form(self):
        assert defense.flip_probability(10.0) == pytest.approx(0.00336897349954, abs=1e-12)
        assert defense.flip_probability(2.0) == pytest.approx(0.5 * math.exp(-1.0))
        with pytest.raises(ValueError):
            defense.flip_probability(0.0)

    def test_delta_closed_form(self):
        assert defense.dp_delta(2.0) == pytest.approx(1.0 - math.exp(-1.0))
        assert defense.flip_probability(3.0) + defense.dp_delta(3.0) / 2.0 == pytest.approx(0.5)

    def test_pmf_example(self):
        assert defense.flip_count_pmf(16, 4, 1.0) == pytest.approx(0.2014519636, abs=1e-9)

    def test_pmf_sums_to_one(self):
        total = sum(defense.flip_count_pmf(12, k, 0.7) for k in range(13))
        assert total == pytest.approx(1.0, abs=1e-12)

    def test_pmf_validation(self):
        with pytest.raises(ValueError):
            defense.flip_count_pmf(0, 0, 1.0)
        with pytest.raises(ValueError):
            defense.flip_count_pmf(4, 5, 1.0)

    @settings(max_examples=30, deadline=None, derandomize=True)
    @given(st.floats(0.1, 20.0), st.integers(0, 2**31))
    def test_empirical_flip_rate(self, epsilon, seed):
        """Observed flips track the closed form within 4 sigma."""
        n = 20_000
        code = np.where(np.random.default_rng(seed).random(n) < 0.5, -1.0, 1.0)
        noisy = defense.dp_binarize(code, defense.DpParams(epsilon=epsilon), seed=seed + 1)
        p = defense.flip_probability(epsilon)
        sigma = math.sqrt(p * (1.0 - p) / n)
        assert abs((noisy != code).mean() - p) <= 4.0 * sigma + 1e-9


class TestDpBinarize:
    def test_huge_epsilon_is_identity(self):
        code = np.where(np.random.default_rng(2).random(50) < 0.5, -1.0, 1.0)
        out = defense.dp_binarize(code, defense.DpParams(epsilon=1e6), seed=3)
        assert np.array_equal(out, code)

    def test_rejects_non_binary(self):
        with pytest.raises(ValueError):
            defense.dp_binarize([0.5, 1.0], defense.DpParams(epsilon=1.0))

    def test_matrix_shape_preserved(self):
        code = np.ones((3, 4))
        out = defense.dp_binarize(code, defense.DpParams(epsilon=0.1), seed=4)
        assert out.shape == (3, 4)
        assert set(np.unique(out)) <= {-1.0, 1.0}


class TestDpSweep:
    def test_rows_and_baseline(self):
        ds, parties, server, _ = make_system(epochs=4, seed=11)
        X, y = ds.test_features(), ds.test_labels()
        rows = defense.dp_sweep(parties, server, X, y, [1.0, 10.0], seed=0, repeats=2)
        assert [r["epsilon"] for r in rows] == [1.0, 10.0, math.inf]
        clean = protocol.evaluate(parties, server, X, y)["accuracy"]
        assert rows[-1]["accuracy"] == clean
        assert rows[-1]["delta"] is None and rows[-1]["repeats"] == 1
        for r in rows[:-1]:
            assert r["delta"] == pytest.approx(defense.dp_delta(r["epsilon"]))
            assert r["repeats"] == 2

    def test_requested_inf_not_duplicated(self):
        ds, parties, server, _ = make_system(epochs=2, seed=12)
        rows = defense.dp_sweep(
            parties, server, ds.test_features(), ds.test_labels(), [math.inf, 5.0], seed=1
        )
        assert [r["epsilon"] for r in rows] == [math.inf, 5.0]

    def test_deterministic(self):
        ds, parties, server, _ = make_system(epochs=2, seed=13)
        X, y = ds.test_features(), ds.test_labels()
        a = defense.dp_sweep(parties, server, X, y, [0.5], seed=5, repeats=3)
        b = defense.dp_sweep(parties, server, X, y, [0.5], seed=5, repeats=3)
        assert a == b

    def test_tiny_epsilon_hurts_accuracy(self):
        ds, parties, server, _ = make_system(epochs=6, seed=14)
        X, y = ds.test_features(), ds.test_labels()
        rows = defense.dp_sweep(parties, server, X, y, [0.01], seed=2, repeats=5)
        # with flip probability ~0.4975 per bit the codes are nearly random
        assert rows[0]["accuracy"] < rows[-1]["accuracy"]

    def test_repeats_validation(self):
        ds, parties, server, _ = make_system(epochs=1, seed=15, do_train=True)
        with pytest.raises(ValueError):
            defense.dp_sweep(parties, server, ds.test_features(), ds.test_labels(), [1.0], repeats=0)

"""Dataset builders: alignment, splits, balancing, generators, CSV."""

from dataclasses import replace

import numpy as np
import pytest

from hashfed import data


def _toy_dataset():
    X = np.arange(12.0).reshape(4, 3)
    y = np.array([0, 1, 0, 1])
    return data._fresh(X, y)


class TestAlignedDataset:
    def test_partition_overlap_rejected(self):
        with pytest.raises(ValueError, match="overlap"):
            data.AlignedDataset(
                features=np.zeros((2, 3)),
                labels=np.zeros(2, dtype=np.int64),
                feature_partition=(np.array([0, 1]), np.array([1, 2])),
                train_idx=np.array([0]),
                test_idx=np.array([1]),
            )

    def test_partition_must_cover(self):
        with pytest.raises(ValueError, match="cover"):
            data.AlignedDataset(
                features=np.zeros((2, 3)),
                labels=np.zeros(2, dtype=np.int64),
                feature_partition=(np.array([0]), np.array([2])),
                train_idx=np.array([0]),
                test_idx=np.array([1]),
            )

    def test_row_masks_disjoint_and_covering(self):
        ds = _toy_dataset()
        with pytest.raises(ValueError, match="overlap"):
            replace(ds, train_idx=np.array([0, 1]), test_idx=np.array([1, 2, 3]))
        with pytest.raises(ValueError, match="cover"):
            replace(ds, train_idx=np.array([0]), test_idx=np.array([1, 2]))

    def test_label_length_checked(self):
        with pytest.raises(ValueError, match="labels"):
            data._fresh(np.zeros((3, 2)), [0, 1])

    def test_accessors(self):
        ds = replace(_toy_dataset(), train_idx=np.array([2, 0]), test_idx=np.array([1, 3]))
        assert ds.num_rows == 4 and ds.num_features == 3
        assert ds.num_classes == 2 and ds.num_parties == 1
        assert np.array_equal(ds.train_features(), ds.features[[2, 0]])
        assert np.array_equal(ds.test_labels(), np.array([1, 1]))


class TestAlign:
    def test_intersection_sorted_and_blocked(self):
        ds = data.align(
            [
                ([3, 1, 2], [[30.0], [10.0], [20.0]]),
                ([2, 3, 4], [[0.2, 2.0], [0.3, 3.0], [0.4, 4.0]]),
            ],
            ([1, 2, 3], [1, 0, 1]),
        )
        assert np.array_equal(ds.features, [[20.0, 0.2, 2.0], [30.0, 0.3, 3.0]])
        assert np.array_equal(ds.labels, [0, 1])
        assert np.array_equal(ds.feature_partition[0], [0])
        assert np.array_equal(ds.feature_partition[1], [1, 2])

    def test_duplicate_ids_rejected(self):
        with pytest.raises(ValueError, match="unique"):
            data.align([([1, 1], [[0.0], [1.0]])], ([1, 2], [0, 1]))

    def test_empty_intersection_rejected(self):
        with pytest.raises(ValueError, match="intersection"):
            data.align([([1, 2], [[0.0], [1.0]])], ([3, 4], [0, 1]))


class TestVerticalSplit:
    def test_equal_thirds_remainder_goes_last(self):
        blocks = data.vertical_split(10, [1 / 3, 1 / 3, 1 / 3])
        assert [len(b) for b in blocks] == [3, 3, 4]
        assert np.array_equal(np.concatenate(blocks), np.arange(10))

    def test_halves_of_odd_total(self):
        blocks = data.vertical_split(7, [0.5, 0.5])
        assert [len(b) for b in blocks] == [3, 4]

    def test_ratio_validation(self):
        with pytest.raises(ValueError, match="positive"):
            data.vertical_split(10, [1.2, -0.2])
        with pytest.raises(ValueError, match="sum to 1"):
            data.vertical_split(10, [0.5, 0.4])
        with pytest.raises(ValueError, match="0 columns"):
            data.vertical_split(10, [0.05, 0.95])


class TestImageVerticalSplit:
    def test_two_party_bands(self):
        left, right = data.image_vertical_split(4, [0.5, 0.5])
        assert np.array_equal(left, [0, 1, 4, 5, 8, 9, 12, 13])
        assert np.array_equal(right, [2, 3, 6, 7, 10, 11, 14, 15])

    def test_two_party_boundary_rounds_up(self):
        # 9 pixel-columns at 50/50: the left band takes the center column
        left, right = data.image_vertical_split(9, [0.5, 0.5])
        assert len(left) == 5 * 9 and len(right) == 4 * 9

    def test_two_party_exact_ratio(self):
        left, right = data.image_vertical_split(8, [0.75, 0.25])
        assert len(left) == 6 * 8 and len(right) == 2 * 8

    def test_three_parties_floor(self):
        blocks = data.image_vertical_split(10, [1 / 3, 1 / 3, 1 / 3])
        assert [len(b) for b in blocks] == [30, 30, 40]

    def test_validation(self):
        with pytest.raises(ValueError):
            data.image_vertical_split(4, [0.99, 0.01])
        with pytest.raises(ValueError):
            data.image_vertical_split(4, [0.6, 0.5])


def test_with_partition_dispatches_on_kind():
    tab = data.with_partition(_toy_dataset(), [1 / 3, 2 / 3])
    assert [len(b) for b in tab.feature_partition] == [1, 2]
    img = data.synth_images(classes=2, n_per_class=3, side=8, noise=0.0, seed=0)
    img = data.with_partition(img, [0.5, 0.5])
    assert np.array_equal(img.feature_partition[0][:4], [0, 1, 2, 3])
    assert len(img.feature_partition[0]) == 4 * 8


class TestTrainTestSplit:
    def test_sizes_and_determinism(self):
        ds = data._fresh(np.arange(30.0).reshape(10, 3), np.zeros(10, np.int64))
        a = data.train_test_split(ds, ratio=0.7, seed=4)
        b = data.train_test_split(ds, ratio=0.7, seed=4)
        assert len(a.train_idx) == 7 and len(a.test_idx) == 3
        assert np.array_equal(a.train_idx, b.train_idx)
        assert set(a.train_idx) | set(a.test_idx) == set(range(10))

    def test_both_sides_nonempty_at_extremes(self):
        ds = data.synth_blobs(classes=2, n_per_class=1, dim=2, separation=1.0, seed=0)
        out = data.train_test_split(ds, ratio=0.99, seed=0)
        assert len(out.train_idx) == 1 and len(out.test_idx) == 1

    def test_ratio_validation(self):
        with pytest.raises(ValueError):
            data.train_test_split(_toy_dataset(), ratio=0.0)
        with pytest.raises(ValueError):
            data.train_test_split(_toy_dataset(), ratio=1.0)


class TestOversampleBalance:
    def _skewed(self):
        X = np.arange(20.0).reshape(10, 2)
        y = np.array([0] * 7 + [1] * 3)
        ds = data._fresh(X, y)
        return replace(ds, train_idx=np.arange(8), test_idx=np.arange(8, 10))

    def test_equalizes_train_class_counts(self):
        out = data.oversample_balance(self._skewed(), seed=1)
        counts = np.bincount(out.labels[out.train_idx])
        assert counts[0] == counts[1] == 7

    def test_only_duplicates_existing_train_rows(self):
        ds = self._skewed()
        out = data.oversample_balance(ds, seed=1)
        assert set(out.train_idx) <= set(ds.train_idx)
        assert np.array_equal(out.train_idx[:8], ds.train_idx)
        assert np.array_equal(out.test_idx, ds.test_idx)

    def test_balanced_input_unchanged(self):
        ds = replace(self._skewed(), train_idx=np.array([0, 1, 7, 8]), test_idx=np.array([2, 3, 4, 5, 6, 9]))
        out = data.oversample_balance(ds, seed=0)
        assert np.array_equal(out.train_idx, ds.train_idx)

    def test_deterministic(self):
        a = data.oversample_balance(self._skewed(), seed=9)
        b = data.oversample_balance(self._skewed(), seed=9)
        assert np.array_equal(a.train_idx, b.train_idx)


class TestSynthBlobs:
    def test_shape_and_labels(self):
        ds = data.synth_blobs(classes=3, n_per_class=5, dim=4, separation=2.0, seed=0)
        assert ds.features.shape == (15, 4)
        assert np.array_equal(ds.labels, np.repeat([0, 1, 2], 5))

    def test_separation_reached_by_class_means(self):
        ds = data.synth_blobs(classes=3, n_per_class=500, dim=4, separation=6.0, seed=1)
        means = [ds.features[ds.labels == c].mean(axis=0) for c in range(3)]
        gaps = [np.linalg.norm(means[i] - means[j]) for i in range(3) for j in range(i + 1, 3)]
        # sample means wander ~1/sqrt(500) from the true centers
        assert min(gaps) >= 6.0 - 0.5

    def test_unit_covariance(self):
        ds = data.synth_blobs(classes=2, n_per_class=4000, dim=3, separation=4.0, seed=2)
        X = ds.features[ds.labels == 0]
        sd = (X - X.mean(axis=0)).std(axis=0)
        assert np.allclose(sd, 1.0, atol=0.05)

    def test_deterministic(self):
        a = data.synth_blobs(seed=5)
        b = data.synth_blobs(seed=5)
        assert np.array_equal(a.features, b.features)

    def test_validation(self):
        with pytest.raises(ValueError):
            data.synth_blobs(classes=1)
        with pytest.raises(ValueError):
            data.synth_blobs(separation=0.0)
        with pytest.raises(ValueError):
            data.synth_blobs(dim=1)


class TestSynthImages:
    def test_template_zero_is_one_horizontal_stroke(self):
        side = 12
        img = data.class_template(0, side)
        assert np.array_equal(img[side // 4], np.ones(side))
        other = np.delete(img, side // 4, axis=0)
        assert not other.any()

    def test_templates_distinct_and_binary(self):
        side = 12
        seen = set()
        for c in range(16):
            img = data.class_template(c, side)
            assert set(np.unique(img)) <= {0.0, 1.0}
            assert img.any()
            seen.add(img.tobytes())
        assert len(seen) == 16

    def test_template_label_bounds(self):
        with pytest.raises(ValueError):
            data.class_template(-1, 12)
        with pytest.raises(ValueError):
            data.class_template(127, 12)

    def test_noise_free_images_tile_templates(self):
        ds = data.synth_images(classes=3, n_per_class=2, side=8, noise=0.0, seed=0)
        assert ds.image_side == 8
        for c in range(3):
            block = ds.features[ds.labels == c]
            want = data.class_template(c, 8).ravel()
            assert np.array_equal(block, np.tile(want, (2, 1)))

    def test_pixels_clipped(self):
        ds = data.synth_images(classes=2, n_per_class=20, side=8, noise=2.0, seed=3)
        assert ds.features.min() >= 0.0 and ds.features.max() <= 1.0

    def test_validation(self):
        with pytest.raises(ValueError):
            data.synth_images(side=7)
        with pytest.raises(ValueError):
            data.synth_images(noise=-0.1)


class TestLoadCsv:
    def _write(self, tmp_path, text):
        p = tmp_path / "table.csv"
        p.write_text(text)
        return p

    def test_loads_and_standardizes_with_train_stats(self, tmp_path):
        lines = ["id,a,b,y"]
        rng = np.random.default_rng(0)
        for i in range(40):
            lines.append(f"{i},{rng.normal():.6f},{rng.normal(5.0, 2.0):.6f},{i % 2}")
        ds = data.load_csv(self._write(tmp_path, "\n".join(lines) + "\n"), "y", seed=1)
        assert ds.features.shape == (40, 2)  # id column dropped
        train = ds.features[ds.train_idx]
        assert np.allclose(train.mean(axis=0), 0.0, atol=1e-12)
        assert np.allclose(train.std(axis=0), 1.0, atol=1e-12)

    def test_drop_columns(self, tmp_path):
        p = self._write(tmp_path, "a,b,y\n1,2,0\n3,4,1\n5,6,0\n")
        ds = data.load_csv(p, "y", drop_columns=["b"], train_ratio=0.5)
        assert ds.features.shape == (3, 1)

    def test_numeric_label_order(self, tmp_path):
        p = self._write(tmp_path, "a,y\n1,10\n2,2\n3,2\n")
        ds = data.load_csv(p, "y", train_ratio=0.5)
        assert np.array_equal(ds.labels, [1, 0, 0])  # "2" sorts before "10"

    def test_string_labels_sort_lexicographically(self, tmp_path):
        p = self._write(tmp_path, "a,y\n1,dog\n2,cat\n3,dog\n")
        ds = data.load_csv(p, "y", train_ratio=0.5)
        assert np.array_equal(ds.labels, [1, 0, 1])

    def test_errors(self, tmp_path):
        with pytest.raises(ValueError, match="label column"):
            data.load_csv(self._write(tmp_path, "a,b\n1,2\n"), "y")
        with pytest.raises(ValueError, match="column 'a'"):
            data.load_csv(self._write(tmp_path, "a,y\nfoo,0\nbar,1\n"), "y")
        with pytest.raises(ValueError, match="no data rows"):
            data.load_csv(self._write(tmp_path, "a,y\n"), "y")

"""Tests for long-tailed task-stream construction, augmentation, and file ingestion."""

import struct
from collections import Counter

import numpy as np
import pytest

from ltocl.errors import ConfigError, DataError, FormatError, SinglePassError
from ltocl.stream import (
    ArraySource,
    AugmentConfig,
    Batch,
    StreamConfig,
    SyntheticSource,
    augment,
    build_stream,
    load_csv_dataset,
    load_idx_dataset,
    long_tail_counts,
    make_balanced_test_split,
)


def stream_cfg(**overrides):
    base = dict(
        rho=0.5,
        num_classes=4,
        max_per_class=20,
        num_tasks=2,
        classes_per_task=(2, 2),
        batch_size=16,
        seed=0,
    )
    base.update(overrides)
    return StreamConfig(**base)


class TestBatch:
    def test_length_and_dim(self):
        b = Batch(np.zeros((3, 5)), [0, 1, 0])
        assert len(b) == 3
        assert b.dim == 5

    def test_row_label_mismatch(self):
        with pytest.raises(DataError):
            Batch(np.zeros((3, 2)), [0, 1])

    def test_concat_preserves_order(self):
        a = Batch([[1.0, 0.0]], [0])
        b = Batch([[0.0, 1.0]], [1])
        c = Batch.concat([a, b])
        assert list(c.labels) == [0, 1]
        assert np.array_equal(c.features[1], [0.0, 1.0])

    def test_empty(self):
        e = Batch.empty(7)
        assert len(e) == 0
        assert e.dim == 7


class TestLongTailCounts:
    def test_balanced(self):
        assert long_tail_counts(1.0, 5, 100) == [100] * 5

    def test_three_class_decay(self):
        assert long_tail_counts(0.01, 3, 100) == [100, 10, 1]

    def test_hundred_class_endpoints(self):
        counts = long_tail_counts(0.01, 100, 500)
        assert counts[0] == 500
        assert counts[-1] == 5
        assert counts[0] // counts[-1] == 100

    def test_monotone_non_increasing(self):
        counts = long_tail_counts(0.07, 23, 311)
        assert all(a >= b for a, b in zip(counts, counts[1:]))

    def test_single_class(self):
        assert long_tail_counts(0.01, 1, 42) == [42]

    def test_clamped_to_one(self):
        assert min(long_tail_counts(0.001, 50, 10)) == 1

    def test_head_tail_ratio_when_exact(self):
        # n_max * rho integral, so the endpoints divide exactly
        counts = long_tail_counts(0.1, 7, 200)
        assert counts[0] / counts[-1] == pytest.approx(1 / 0.1)

    def test_rejects_bad_rho(self):
        with pytest.raises(ConfigError):
            long_tail_counts(0.0, 3, 10)
        with pytest.raises(ConfigError):
            long_tail_counts(1.5, 3, 10)

    def test_rejects_bad_class_count(self):
        with pytest.raises(ConfigError):
            long_tail_counts(0.5, 0, 10)


class TestSyntheticSource:
    def test_same_seed_same_sequence(self):
        a = SyntheticSource(3, 8, 0.2, seed=9)
        b = SyntheticSource(3, 8, 0.2, seed=9)
        assert np.array_equal(a.take(1, 5), b.take(1, 5))

    def test_zero_spread_collapses_to_mean(self):
        src = SyntheticSource(2, 6, 0.0, seed=4)
        samples = src.take(0, 10)
        assert np.allclose(samples, samples[0])
        assert np.isclose(np.linalg.norm(samples[0]), 1.0)

    def test_nearest_mean_recovers_labels(self):
        src = SyntheticSource(2, 8, 0.1, seed=1)
        means = src.means
        xs = np.concatenate([src.take(0, 500), src.take(1, 500)])
        ys = np.array([0] * 500 + [1] * 500)
        dists = ((xs[:, None, :] - means[None, :, :]) ** 2).sum(axis=2)
        acc = (dists.argmin(axis=1) == ys).mean()
        assert acc >= 0.99

    def test_successive_takes_are_fresh(self):
        src = SyntheticSource(2, 4, 0.3, seed=2)
        first = src.take(0, 3)
        second = src.take(0, 3)
        assert not np.array_equal(first, second)

    def test_test_take_disjoint_from_train_stream(self):
        src = SyntheticSource(2, 4, 0.3, seed=2)
        train = src.take(0, 50)
        held_out = src.test_take(0, 50, seed=77)
        # continuous distributions: row collisions would mean shared draws
        assert not any((held_out == row).all(1).any() for row in train)

    def test_test_take_deterministic(self):
        src = SyntheticSource(2, 4, 0.3, seed=2)
        src.take(0, 10)  # advance the training stream
        a = src.test_take(0, 5, seed=3)
        b = src.test_take(0, 5, seed=3)
        assert np.array_equal(a, b)

    def test_bad_class_raises(self):
        src = SyntheticSource(2, 4, 0.3, seed=2)
        with pytest.raises(DataError):
            src.take(5, 1)


class TestArraySource:
    def make_data(self):
        feats = np.arange(40, dtype=np.float64).reshape(20, 2)
        labels = np.repeat([0, 1], 10)
        return Batch(feats, labels)

    def test_train_and_test_disjoint(self):
        src = ArraySource(self.make_data(), seed=0)
        train = src.take(0, 4)
        test = src.test_take(0, 4, seed=0)
        train_rows = {tuple(r) for r in train}
        assert all(tuple(r) not in train_rows for r in test)

    def test_exhaustion_names_class(self):
        src = ArraySource(self.make_data(), seed=0)
        with pytest.raises(DataError, match="class 1"):
            src.take(1, 11)

    def test_overlap_detected(self):
        src = ArraySource(self.make_data(), seed=0)
        src.take(0, 8)
        with pytest.raises(DataError, match="class 0"):
            src.test_take(0, 5, seed=0)


class TestBuildStream:
    def test_label_order_partition(self):
        tasks = build_stream(SyntheticSource(4, 4, 0.2, seed=0), stream_cfg())
        assert tasks[0].class_ids == (0, 1)
        assert tasks[1].class_ids == (2, 3)

    def test_chunking_arithmetic(self):
        # 33 samples at batch 16 -> [16, 16, 1]
        cfg = stream_cfg(
            rho=1.0, num_classes=3, max_per_class=11, num_tasks=1, classes_per_task=(3,)
        )
        tasks = build_stream(SyntheticSource(3, 4, 0.2, seed=0), cfg)
        assert [len(b) for b in tasks[0].batches] == [16, 16, 1]

    def test_union_is_exact_long_tail_multiset(self):
        cfg = stream_cfg(rho=0.25, max_per_class=16, seed=5)
        tasks = build_stream(SyntheticSource(4, 4, 0.2, seed=5), cfg)
        got = Counter()
        for task in tasks:
            for batch in task:
                got.update(batch.labels.tolist())
        counts = long_tail_counts(0.25, 4, 16)
        assert got == Counter({c: n for c, n in enumerate(counts)})

    def test_single_pass_enforced(self):
        tasks = build_stream(SyntheticSource(4, 4, 0.2, seed=0), stream_cfg())
        list(tasks[0])
        with pytest.raises(SinglePassError):
            iter(tasks[0])

    def test_task_purity(self):
        tasks = build_stream(SyntheticSource(4, 4, 0.2, seed=1), stream_cfg(seed=1))
        seen_by_task = []
        for task in tasks:
            labels = set()
            for batch in task:
                labels.update(batch.labels.tolist())
            assert labels <= set(task.class_ids)
            seen_by_task.append(labels)
        assert seen_by_task[0].isdisjoint(seen_by_task[1])

    def test_determinism(self):
        t1 = build_stream(SyntheticSource(4, 4, 0.2, seed=7), stream_cfg(seed=7))
        t2 = build_stream(SyntheticSource(4, 4, 0.2, seed=7), stream_cfg(seed=7))
        for a, b in zip(t1, t2):
            for ba, bb in zip(a.batches, b.batches):
                assert np.array_equal(ba.features, bb.features)
                assert np.array_equal(ba.labels, bb.labels)

    def test_shuffle_classes_permutes_assignment(self):
        cfg = stream_cfg(num_classes=8, classes_per_task=(4, 4), seed=3, shuffle_classes=True)
        tasks = build_stream(SyntheticSource(8, 4, 0.2, seed=3), cfg)
        union = set(tasks[0].class_ids) | set(tasks[1].class_ids)
        assert union == set(range(8))
        assert tasks[0].class_ids != (0, 1, 2, 3)  # seed 3 happens to scramble

    def test_within_task_shuffle_mixes_classes(self):
        cfg = stream_cfg(rho=1.0, max_per_class=20, seed=0)
        tasks = build_stream(SyntheticSource(4, 4, 0.2, seed=0), cfg)
        first = tasks[0].batches[0].labels
        assert len(set(first.tolist())) > 1  # not sorted runs of one class


class TestAugment:
    def test_identity_config(self):
        b = Batch(np.arange(8, dtype=float).reshape(2, 4), [0, 1])
        out = augment(b, AugmentConfig(noise_sigma=0.0, mask_prob=0.0, seed=0))
        assert np.array_equal(out.features, b.features)

    def test_mask_rate_binomial(self):
        b = Batch(np.ones((1, 1000)), [0])
        out = augment(b, AugmentConfig(noise_sigma=0.0, mask_prob=0.5, seed=0))
        zeros = int((out.features == 0.0).sum())
        sigma = np.sqrt(1000 * 0.5 * 0.5)
        assert abs(zeros - 500) <= 4 * sigma

    def test_labels_preserved(self):
        b = Batch(np.random.default_rng(0).standard_normal((5, 3)), [2, 0, 1, 1, 2])
        out = augment(b, AugmentConfig(seed=1))
        assert np.array_equal(out.labels, b.labels)

    def test_fresh_randomness_per_call(self):
        b = Batch(np.ones((2, 6)), [0, 0])
        cfg = AugmentConfig(noise_sigma=0.1, mask_prob=0.0, seed=4)
        assert not np.array_equal(augment(b, cfg).features, augment(b, cfg).features)

    def test_reset_replays_sequence(self):
        b = Batch(np.ones((2, 6)), [0, 0])
        cfg = AugmentConfig(seed=4)
        first = augment(b, cfg).features
        cfg.reset()
        assert np.array_equal(augment(b, cfg).features, first)

    def test_mask_prob_validation(self):
        with pytest.raises(ConfigError):
            AugmentConfig(mask_prob=1.0)


class TestStreamConfigValidation:
    def test_rho_bounds(self):
        with pytest.raises(ConfigError, match="rho"):
            stream_cfg(rho=0.0)

    def test_classes_per_task_sum(self):
        with pytest.raises(ConfigError):
            stream_cfg(classes_per_task=(2, 3))

    def test_task_count_mismatch(self):
        with pytest.raises(ConfigError):
            stream_cfg(classes_per_task=(4,))

    def test_batch_size(self):
        with pytest.raises(ConfigError):
            stream_cfg(batch_size=0)


class TestBalancedTestSplit:
    def test_counts(self):
        split = make_balanced_test_split(SyntheticSource(4, 4, 0.2, seed=0), 4, 50, seed=1)
        assert len(split) == 200
        assert Counter(split.labels.tolist()) == {c: 50 for c in range(4)}

    def test_determinism(self):
        a = make_balanced_test_split(SyntheticSource(4, 4, 0.2, seed=0), 4, 10, seed=1)
        b = make_balanced_test_split(SyntheticSource(4, 4, 0.2, seed=0), 4, 10, seed=1)
        assert np.array_equal(a.features, b.features)


def write_idx_pair(tmp_path, images, labels):
    """images: uint8 array (n, rows, cols); labels: uint8 array (n,)."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    img_path = tmp_path / "imgs.idx"
    lbl_path = tmp_path / "lbls.idx"
    n, rows, cols = images.shape
    img_path.write_bytes(
        struct.pack(">IIII", 0x00000803, n, rows, cols) + images.tobytes()
    )
    lbl_path.write_bytes(struct.pack(">II", 0x00000801, len(labels)) + labels.tobytes())
    return str(img_path), str(lbl_path)


class TestIdxLoading:
    def test_small_handcrafted_pair(self, tmp_path):
        images = np.arange(12, dtype=np.uint8).reshape(3, 2, 2)
        ip, lp = write_idx_pair(tmp_path, images, [0, 1, 0])
        batch = load_idx_dataset(ip, lp)
        assert len(batch) == 3
        assert batch.dim == 4
        assert list(batch.labels) == [0, 1, 0]

    def test_pixel_scaling_endpoint(self, tmp_path):
        images = np.full((1, 1, 1), 255, dtype=np.uint8)
        ip, lp = write_idx_pair(tmp_path, images, [0])
        batch = load_idx_dataset(ip, lp)
        assert batch.features[0, 0] == 1.0

    def test_row_major_flattening(self, tmp_path):
        images = np.array([[[0, 51], [102, 255]]], dtype=np.uint8)
        ip, lp = write_idx_pair(tmp_path, images, [1])
        batch = load_idx_dataset(ip, lp)
        assert np.allclose(batch.features[0], np.array([0, 51, 102, 255]) / 255.0)

    def test_truncated_payload(self, tmp_path):
        images = np.zeros((2, 2, 2), dtype=np.uint8)
        ip, lp = write_idx_pair(tmp_path, images, [0, 1])
        raw = open(ip, "rb").read()
        open(ip, "wb").write(raw[:-3])
        with pytest.raises(FormatError, match="byte"):
            load_idx_dataset(ip, lp)

    def test_bad_magic(self, tmp_path):
        images = np.zeros((1, 1, 1), dtype=np.uint8)
        ip, lp = write_idx_pair(tmp_path, images, [0])
        raw = bytearray(open(ip, "rb").read())
        raw[3] = 0xFF
        open(ip, "wb").write(bytes(raw))
        with pytest.raises(FormatError):
            load_idx_dataset(ip, lp)

    def test_count_mismatch(self, tmp_path):
        images = np.zeros((2, 1, 1), dtype=np.uint8)
        ip, _ = write_idx_pair(tmp_path, images, [0, 1])
        lp3 = tmp_path / "three.idx"
        lp3.write_bytes(struct.pack(">II", 0x00000801, 3) + bytes([0, 1, 0]))
        with pytest.raises(FormatError):
            load_idx_dataset(ip, str(lp3))


class TestCsvLoading:
    def test_round_trip_shape(self, tmp_path):
        p = tmp_path / "data.csv"
        p.write_text("0,1.5,2.5\n1,3.5,4.5\n")
        batch = load_csv_dataset(str(p))
        assert len(batch) == 2
        assert batch.dim == 2
        assert list(batch.labels) == [0, 1]
        assert batch.features[1, 1] == 4.5

    def test_malformed_raises(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("0,1.5\n1,not_a_number\n")
        with pytest.raises(FormatError):
            load_csv_dataset(str(p))

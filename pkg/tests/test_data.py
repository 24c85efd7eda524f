from datetime import datetime

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hypercast.data import (CorpusFormatError, Normalizer, PatternSpec, RawCorpus,
                            compute_time_indices, fit_normalizer, generate_synthetic,
                            load_corpus, make_windows, normalize_windows, prepare,
                            split_windows, write_corpus)

MONDAY = datetime(2024, 1, 1)


def _write_dataset(tmp_path, values, period=5, start=MONDAY, name="toy"):
    np.save(tmp_path / f"{name}_values.npy", values)
    descriptor = tmp_path / f"{name}.descriptor"
    descriptor.write_text(
        f"nodes={values.shape[1]}\n"
        f"timesteps={values.shape[0]}\n"
        f"period_minutes={period}\n"
        f"start={start.isoformat()}\n"
        f"values_path={name}_values.npy\n"
    )
    return descriptor


def _indices_for(series, period=5, start=MONDAY):
    corpus = RawCorpus(values=series, start=start, period_minutes=period)
    return corpus, compute_time_indices(corpus)


class TestLoadCorpus:
    def test_pems08_shape(self, tmp_path):
        descriptor = _write_dataset(tmp_path, np.ones((17856, 170), dtype=np.float32))
        corpus = load_corpus(descriptor)
        assert corpus.num_nodes == 170
        assert corpus.num_steps == 17856

    def test_pems04_shape(self, tmp_path):
        descriptor = _write_dataset(tmp_path, np.ones((16992, 307), dtype=np.float32))
        corpus = load_corpus(descriptor)
        assert corpus.num_nodes == 307
        assert corpus.num_steps == 16992

    def test_channel_zero_is_flow(self, tmp_path):
        values = np.stack([np.arange(20.0).reshape(10, 2),
                           np.zeros((10, 2))], axis=-1)
        descriptor = _write_dataset(tmp_path, values)
        corpus = load_corpus(descriptor)
        np.testing.assert_array_equal(corpus.values[:, :, 0], values[:, :, 0])

    def test_zero_length_tensor(self, tmp_path):
        descriptor = _write_dataset(tmp_path, np.empty((0, 4)))
        with pytest.raises(CorpusFormatError):
            load_corpus(descriptor)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_corpus(tmp_path / "nope.descriptor")

    def test_shape_mismatch_names_both(self, tmp_path):
        descriptor = _write_dataset(tmp_path, np.ones((10, 4)))
        descriptor.write_text(descriptor.read_text().replace("nodes=4", "nodes=9"))
        with pytest.raises(CorpusFormatError, match="nodes=9"):
            load_corpus(descriptor)

    def test_csv_values(self, tmp_path):
        values = np.arange(12.0).reshape(6, 2)
        np.savetxt(tmp_path / "toy.csv", values, delimiter=",")
        descriptor = tmp_path / "toy.descriptor"
        descriptor.write_text(
            "nodes=2\ntimesteps=6\nperiod_minutes=5\n"
            f"start={MONDAY.isoformat()}\nvalues_path=toy.csv\n"
        )
        corpus = load_corpus(descriptor)
        np.testing.assert_allclose(corpus.values[:, :, 0], values)

    def test_sparse_nans_interpolated(self, tmp_path):
        values = np.tile(np.arange(100.0)[:, None], (1, 2))
        values[50, 0] = np.nan
        descriptor = _write_dataset(tmp_path, values)
        corpus = load_corpus(descriptor)
        assert corpus.values[50, 0, 0] == pytest.approx(50.0)  # midpoint of 49 and 51
        assert np.isfinite(corpus.values).all()

    def test_dense_nans_rejected(self, tmp_path):
        values = np.ones((20, 2))
        values[:5] = np.nan
        descriptor = _write_dataset(tmp_path, values)
        with pytest.raises(CorpusFormatError, match="threshold"):
            load_corpus(descriptor)

    def test_descriptor_roundtrip(self, tmp_path):
        corpus = generate_synthetic(4, 50, seed=3)
        descriptor = write_corpus(corpus, tmp_path, name="synth")
        loaded = load_corpus(descriptor)
        np.testing.assert_array_equal(loaded.values, corpus.values)
        np.testing.assert_array_equal(loaded.node_groups, corpus.node_groups)
        assert loaded.start == corpus.start


class TestTimeIndices:
    def test_epoch_monday_midnight(self):
        _, idx = _indices_for(np.ones((10, 2)))
        assert idx.tod[0] == 0
        assert idx.dow[0] == 0

    def test_day_wraparound(self):
        _, idx = _indices_for(np.ones((300, 2)))
        assert idx.tod[287] == 287 and idx.dow[287] == 0
        assert idx.tod[288] == 0 and idx.dow[288] == 1

    def test_weekly_period(self):
        _, idx = _indices_for(np.ones((2020, 2)))
        assert idx.tod[2016] == 0 and idx.dow[2016] == 0

    def test_tod_periodicity(self):
        _, idx = _indices_for(np.ones((1000, 2)))
        np.testing.assert_array_equal(idx.tod[288:], idx.tod[:-288])

    def test_offset_start(self):
        # Tuesday 01:00 with 5-minute sampling starts at slot 12
        _, idx = _indices_for(np.ones((10, 2)), start=datetime(2024, 1, 2, 1, 0))
        assert idx.tod[0] == 12
        assert idx.dow[0] == 1

    def test_invalid_period_rejected(self):
        with pytest.raises(CorpusFormatError):
            RawCorpus(values=np.ones((10, 2)), start=MONDAY, period_minutes=7)

    def test_misaligned_start_rejected(self):
        corpus = RawCorpus(values=np.ones((10, 2)), start=datetime(2024, 1, 1, 0, 3))
        with pytest.raises(ValueError, match="aligned"):
            compute_time_indices(corpus)


class TestWindows:
    def test_window_count(self):
        corpus, idx = _indices_for(np.random.default_rng(0).normal(size=(100, 3)))
        windows = make_windows(corpus, idx, 12, 12)
        assert len(windows) == 77

    def test_single_window_boundary(self):
        corpus, idx = _indices_for(np.ones((24, 2)))
        assert len(make_windows(corpus, idx, 12, 12)) == 1

    def test_below_boundary_rejected(self):
        corpus, idx = _indices_for(np.ones((23, 2)))
        with pytest.raises(ValueError):
            make_windows(corpus, idx, 12, 12)

    def test_window_contents(self):
        series = np.arange(60.0).reshape(30, 2)
        corpus, idx = _indices_for(series)
        windows = make_windows(corpus, idx, 4, 3)
        w = windows[5]
        np.testing.assert_allclose(w.x[:, :, 0], series[5:9])
        np.testing.assert_allclose(w.y, series[9:12])
        np.testing.assert_array_equal(w.tod_past, idx.tod[5:9])
        np.testing.assert_array_equal(w.tod_future, idx.tod[9:12])
        np.testing.assert_allclose(
            w.x[:, :, 1], np.broadcast_to((idx.tod[5:9] / 288.0)[:, None], (4, 2)))
        np.testing.assert_allclose(
            w.x[:, :, 2], np.broadcast_to((idx.dow[5:9] / 7.0)[:, None], (4, 2)))

    def test_reconstruction(self):
        series = np.random.default_rng(1).normal(size=(50, 2))
        corpus, idx = _indices_for(series)
        windows = make_windows(corpus, idx, 6, 4)
        heads = np.stack([windows[i].x[0, :, 0] for i in range(len(windows))])
        tail = windows[len(windows) - 1].x[1:, :, 0]
        rebuilt = np.concatenate([heads, tail], axis=0)
        np.testing.assert_allclose(rebuilt, series[: len(windows) + 5].astype(np.float32))


class TestSplit:
    @pytest.mark.parametrize("total,expected", [(100, (60, 20, 20)),
                                                (10, (6, 2, 2)),
                                                (7, (4, 1, 2))])
    def test_sizes(self, total, expected):
        corpus, idx = _indices_for(np.ones((total + 5, 2)))
        windows = make_windows(corpus, idx, 3, 3).take(0, total)
        train, val, test = split_windows(windows)
        assert (len(train), len(val), len(test)) == expected

    def test_chronological(self):
        corpus, idx = _indices_for(np.random.default_rng(2).normal(size=(80, 2)))
        train, val, test = split_windows(make_windows(corpus, idx, 5, 5))
        assert train.starts.max() < val.starts.min() <= val.starts.max() < test.starts.min()

    def test_bad_ratios(self):
        corpus, idx = _indices_for(np.ones((30, 2)))
        with pytest.raises(ValueError):
            split_windows(make_windows(corpus, idx, 3, 3), ratios=(1, 0, 1))


class TestNormalizer:
    def test_two_point_stats(self):
        series = np.array([[0.0], [2.0], [0.0], [2.0], [0.0]])
        corpus, idx = _indices_for(series)
        windows = make_windows(corpus, idx, 2, 1)
        norm = fit_normalizer(windows)
        assert norm.mean == pytest.approx(1.0)
        assert norm.std == pytest.approx(1.0)
        np.testing.assert_allclose(norm.normalize(np.array([0.0, 2.0])), [-1.0, 1.0])

    def test_constant_series_rejected(self):
        corpus, idx = _indices_for(np.full((20, 2), 7.0))
        with pytest.raises(ValueError, match="variance"):
            fit_normalizer(make_windows(corpus, idx, 3, 3))

    def test_normalized_train_stats(self):
        corpus, idx = _indices_for(np.random.default_rng(3).normal(5, 3, size=(200, 4)))
        windows = make_windows(corpus, idx, 12, 12)
        train, _, _ = split_windows(windows)
        norm = fit_normalizer(train)
        normalized = normalize_windows(train, norm)
        blocks = np.stack([normalized[i].x[:, :, 0] for i in range(len(normalized))])
        assert abs(blocks.mean()) < 1e-6
        assert abs(blocks.std() - 1.0) < 1e-6

    @given(st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=40))
    @settings(max_examples=50, deadline=None)
    def test_round_trip(self, values):
        norm = Normalizer(mean=12.5, std=3.25)
        arr = np.asarray(values)
        back = norm.denormalize(norm.normalize(arr))
        np.testing.assert_allclose(back, arr, rtol=1e-6, atol=1e-6)

    def test_double_application_inverts(self):
        norm = Normalizer(mean=4.0, std=2.0)
        arr = np.random.default_rng(4).normal(size=(8, 3))
        twice = norm.normalize(norm.normalize(arr))
        back = norm.denormalize(norm.denormalize(twice))
        np.testing.assert_allclose(back, arr, rtol=1e-6, atol=1e-9)


class TestSynthetic:
    def test_deterministic(self):
        a = generate_synthetic(6, 120, seed=9)
        b = generate_synthetic(6, 120, seed=9)
        np.testing.assert_array_equal(a.values, b.values)

    def test_group_correlation(self):
        spec = PatternSpec(group_drift_std=15.0)
        corpus = generate_synthetic(6, 600, seed=7, spec=spec)
        series = corpus.values[:, :, 0]
        groups = corpus.node_groups
        corr = np.corrcoef(series.T)
        for i in range(6):
            for j in range(i + 1, 6):
                if groups[i] == groups[j]:
                    assert corr[i, j] > 0.9

    def test_noiseless_exactly_periodic(self):
        spec = PatternSpec(noise_std=0.0, weekly_amplitude=0.0, group_drift_std=0.0,
                           period_minutes=5)
        corpus = generate_synthetic(4, 600, seed=1, spec=spec)
        series = corpus.values[:, :, 0]
        np.testing.assert_array_equal(series[288:], series[:-288])

    def test_group_labels_cover_groups(self):
        corpus = generate_synthetic(7, 60, seed=2, spec=PatternSpec(num_groups=3))
        assert set(corpus.node_groups.tolist()) == {0, 1, 2}

    def test_bad_sizes(self):
        with pytest.raises(ValueError):
            generate_synthetic(0, 10, seed=0)
        with pytest.raises(ValueError):
            generate_synthetic(3, 10, seed=0, spec=PatternSpec(num_groups=5))


class TestPrepare:
    def test_bundle_shapes_and_chronology(self):
        corpus = generate_synthetic(5, 300, seed=11)
        bundle = prepare(corpus, input_len=12, horizon=12)
        total = 300 - 24 + 1
        assert len(bundle.train) == int(0.6 * total)
        assert len(bundle.val) == int(0.2 * total)
        assert len(bundle.train) + len(bundle.val) + len(bundle.test) == total
        assert bundle.train.starts.max() < bundle.val.starts.min()
        assert bundle.val.starts.max() < bundle.test.starts.min()
        batch = bundle.train.batch([0, 1])
        assert batch["x"].shape == (2, 12, 5, 3)
        assert batch["y"].shape == (2, 12, 5)

    def test_targets_denormalize_to_raw(self):
        corpus = generate_synthetic(4, 200, seed=12)
        bundle = prepare(corpus, input_len=6, horizon=6)
        batch = bundle.test.batch([3])
        start = bundle.test.starts[3]
        raw = bundle.raw_series[start + 6: start + 12]
        np.testing.assert_allclose(bundle.normalizer.denormalize(batch["y"][0]),
                                   raw, rtol=1e-5)

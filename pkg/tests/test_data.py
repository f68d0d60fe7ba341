import numpy as np
import pytest

from nucleusnet.data import (class_name, load_manifest, make_splits,
                             synth_dataset, synth_raw)
from nucleusnet.errors import DataError


def write_manifest(path, rows, header="slice_file_name,fold,classID,class"):
    lines = [header] + [",".join(str(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")


class TestManifest:
    def test_parse_roundtrip(self, tmp_path):
        p = tmp_path / "m.csv"
        write_manifest(p, [("a.wav", 1, 0, "dog"), ("b.wav", 2, 1, "car"),
                           ("c.wav", 1, 0, "dog")])
        m = load_manifest(p)
        assert m.num_classes == 2
        assert m.class_names == ["dog", "car"]
        assert [r.file_name for r in m.rows] == ["a.wav", "b.wav", "c.wav"]

    def test_missing_column(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text("slice_file_name,fold\na.wav,1\n")
        with pytest.raises(DataError, match="missing columns"):
            load_manifest(p)

    def test_sparse_class_ids_rejected(self, tmp_path):
        p = tmp_path / "m.csv"
        write_manifest(p, [("a.wav", 1, 0, "dog"), ("b.wav", 1, 2, "car")])
        with pytest.raises(DataError, match="dense"):
            load_manifest(p)

    def test_conflicting_class_names_rejected(self, tmp_path):
        p = tmp_path / "m.csv"
        write_manifest(p, [("a.wav", 1, 0, "dog"), ("b.wav", 1, 0, "cat"),
                           ("c.wav", 1, 1, "car")])
        with pytest.raises(DataError, match="maps to both"):
            load_manifest(p)

    def test_custom_column_mapping(self, tmp_path):
        p = tmp_path / "m.csv"
        write_manifest(p, [("x.wav", 3, 0, "hum")], header="fname,f,cid,cname")
        m = load_manifest(p, column_map={"file_name": "fname", "fold": "f",
                                         "class_id": "cid", "class_name": "cname"})
        assert m.rows[0].fold == 3


class TestSplits:
    def _rows(self, n=8732, folds=10):
        class Row:
            def __init__(self, i):
                self.fold = (i % folds) + 1
                self.source_id = f"clip{i}"
        return [Row(i) for i in range(n)]

    def test_partition_is_exact_on_full_size_manifest(self):
        rows = self._rows(8732)
        train, test = make_splits(rows, test_folds={10}, seed=0)
        assert len(train) + len(test) == 8732
        assert all(r.fold == 10 for r in test)
        assert all(r.fold != 10 for r in train)

    def test_no_leakage_every_item_exactly_once(self):
        rows = self._rows(100)
        train, test = make_splits(rows, test_folds={1, 2}, seed=3)
        ids = sorted(r.source_id for r in train + test)
        assert ids == sorted(r.source_id for r in rows)

    def test_same_seed_same_order(self):
        rows = self._rows(50)
        t1, _ = make_splits(rows, {10}, seed=7)
        t2, _ = make_splits(rows, {10}, seed=7)
        assert [r.source_id for r in t1] == [r.source_id for r in t2]

    def test_different_seed_different_order(self):
        rows = self._rows(50)
        t1, _ = make_splits(rows, {10}, seed=7)
        t2, _ = make_splits(rows, {10}, seed=8)
        assert [r.source_id for r in t1] != [r.source_id for r in t2]

    def test_empty_test_folds_trains_on_everything(self):
        rows = self._rows(30)
        train, test = make_splits(rows, frozenset(), seed=0)
        assert len(train) == 30 and not test


class TestSynth:
    def test_counts_and_labels(self):
        samples = synth_dataset(4, 10, seed=0, length=1024)
        assert len(samples) == 40
        for c in range(4):
            assert sum(1 for s in samples if s.label == c) == 10

    def test_bitwise_deterministic(self):
        a = synth_dataset(3, 4, seed=5, length=800)
        b = synth_dataset(3, 4, seed=5, length=800)
        for sa, sb in zip(a, b):
            np.testing.assert_array_equal(sa.waveform.array, sb.waveform.array)
            assert sa.source_id == sb.source_id and sa.fold == sb.fold

    def test_waveforms_standardized(self):
        for s in synth_dataset(4, 2, seed=1, length=2000):
            v = s.waveform.array
            assert abs(float(v.mean())) < 1e-4
            assert abs(float(v.std()) - 1.0) < 1e-3

    def test_folds_cover_range(self):
        samples = synth_dataset(2, 10, seed=0, length=512)
        assert {s.fold for s in samples} == set(range(1, 11))

    def test_class_names(self):
        assert class_name(0) == "tone0"
        assert class_name(5) == "chirp1"

    def test_classes_linearly_separable_on_mean_spectra(self):
        """Least-squares one-hot regression on |rfft| separates the classes.

        Offline baseline oracle: if a linear map on spectra cannot reach 90%
        the classes are too hard for any desk-scale training check.
        """
        rng = np.random.default_rng(0)
        train = synth_dataset(4, 30, seed=2, length=4000)
        test = synth_dataset(4, 12, seed=3, length=4000)

        def feats(samples):
            x = np.stack([np.abs(np.fft.rfft(s.waveform.array[0])) for s in samples])
            return np.hstack([x / np.linalg.norm(x, axis=1, keepdims=True),
                              np.ones((len(samples), 1))])

        ftr, fte = feats(train), feats(test)
        onehot = np.eye(4)[[s.label for s in train]]
        coef, *_ = np.linalg.lstsq(ftr, onehot, rcond=None)
        preds = (fte @ coef).argmax(axis=1)
        labels = np.array([s.label for s in test])
        assert (preds == labels).mean() > 0.9

    def test_raw_waveforms_distinct_across_classes(self):
        rng = np.random.default_rng(0)
        raws = [synth_raw(c, np.random.default_rng(1), 2000) for c in range(4)]
        for i in range(4):
            for j in range(i + 1, 4):
                assert float(np.abs(raws[i] - raws[j]).max()) > 0.01

    def test_invalid_args(self):
        with pytest.raises(DataError):
            synth_dataset(0, 5, seed=0)

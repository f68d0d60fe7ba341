import csv
import json
import struct
from pathlib import Path

import numpy as np
import pytest

import nucleusnet.cli as cli
from nucleusnet.audio import decode_wav
from nucleusnet.checkpoint import load_checkpoint
from nucleusnet.errors import NumericalError
from nucleusnet.tensor import as_array


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    """A tiny synthetic WAV corpus generated through the CLI itself."""
    root = tmp_path_factory.mktemp("corpus")
    rc = cli.main([
        "synth-data", "--classes", "4", "--per-class", "3", "--seed", "3",
        "--out-dir", str(root), "--duration", "0.6", "--rate", "8000",
    ])
    assert rc == 0
    return root


@pytest.fixture(scope="module")
def trained(tmp_path_factory, corpus):
    """One short full-pipeline training run shared across CLI tests."""
    out = tmp_path_factory.mktemp("run")
    rc = cli.main([
        "train", "--arch", "inception", "--data-dir", str(corpus),
        "--manifest", str(corpus / "manifest.csv"), "--test-folds", "",
        "--epochs", "1", "--batch-size", "8", "--seed", "1", "--out", str(out),
    ])
    assert rc == 0
    return out


def test_synth_data_layout(corpus):
    manifest = corpus / "manifest.csv"
    assert manifest.exists()
    with open(manifest) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 12
    assert set(rows[0]) == {"slice_file_name", "fold", "classID", "class"}
    for row in rows:
        assert (corpus / f"fold{row['fold']}" / row["slice_file_name"]).exists()


def test_train_writes_artifacts(trained):
    assert (trained / "model.inuc").exists()
    assert (trained / "best.inuc").exists()
    log_lines = (trained / "run_log.jsonl").read_text().strip().splitlines()
    assert len(log_lines) >= 1
    record = json.loads(log_lines[0])
    assert {"epoch", "train_loss", "train_accuracy", "wall_time_s"} <= set(record)
    summary = json.loads((trained / "summary.json").read_text())
    assert summary["epochs_run"] == 1


def test_unknown_arch_exits_2_and_lists_names(capsys):
    rc = cli.main(["train", "--arch", "bogus", "--data-dir", "x", "--manifest", "y"])
    assert rc == 2
    err = capsys.readouterr().err
    assert "inception_bn" in err and "inception_fa" in err


def test_missing_manifest_exits_2(corpus, tmp_path):
    rc = cli.main([
        "train", "--arch", "inception", "--data-dir", str(corpus),
        "--manifest", str(tmp_path / "nope.csv"), "--out", str(tmp_path / "o"),
    ])
    assert rc == 2


def test_unknown_flag_rejected(capsys):
    rc = cli.main(["count-params", "--arch", "inception", "--frobnicate"])
    assert rc == 2


def test_numerical_failure_exits_3(monkeypatch, corpus, tmp_path):
    def boom(*args, **kwargs):
        raise NumericalError("non-finite loss", tensor_name="conv1.weight")
    monkeypatch.setattr(cli, "train", boom)
    rc = cli.main([
        "train", "--arch", "inception", "--data-dir", str(corpus),
        "--manifest", str(corpus / "manifest.csv"), "--epochs", "1",
        "--out", str(tmp_path / "o"),
    ])
    assert rc == 3


class TestCountParams:
    def run(self, argv, capsys):
        rc = cli.main(argv)
        assert rc == 0
        return json.loads(capsys.readouterr().out.strip().splitlines()[-1])

    def test_inception(self, capsys):
        out = self.run(["count-params", "--arch", "inception"], capsys)
        assert out["trainable"] == 289_450
        assert out["reported"] == 289_450

    def test_fa(self, capsys):
        out = self.run(["count-params", "--arch", "inception_fa"], capsys)
        assert out["trainable"] == 789_162

    def test_bn_total_includes_running_stats(self, capsys):
        out = self.run(["count-params", "--arch", "inception_bn",
                        "--include-non-trainable"], capsys)
        assert out["total"] == 292_050
        assert out["reported"] == 292_050

    def test_fi_carries_divergence_note(self, capsys):
        out = self.run(["count-params", "--arch", "inception_fi"], capsys)
        assert out["trainable"] == 593_706
        assert "479" in out["note"]


class TestPredict:
    def test_valid_distribution_on_short_clip(self, trained, corpus, capsys):
        wav = next((corpus / "fold1").glob("*.wav"))
        rc = cli.main(["predict", "--checkpoint", str(trained / "model.inuc"),
                       "--wav", str(wav), "--top-k", "4"])
        assert rc == 0
        lines = capsys.readouterr().out.strip().splitlines()
        rows = [line.split("\t") for line in lines if "\t" in line]
        probs = [float(r[3]) for r in rows]
        assert len(rows) == 4
        assert abs(sum(probs) - 1.0) < 1e-3  # top-4 of 4 classes

    def test_same_wav_same_output(self, trained, corpus, capsys):
        wav = next((corpus / "fold1").glob("*.wav"))
        outs = []
        for _ in range(2):
            rc = cli.main(["predict", "--checkpoint", str(trained / "model.inuc"),
                           "--wav", str(wav)])
            assert rc == 0
            outs.append(capsys.readouterr().out)
        assert outs[0] == outs[1]

    def test_corrupted_wav_exits_2(self, trained, tmp_path):
        bad = tmp_path / "bad.wav"
        bad.write_bytes(b"RIFF" + b"\x00" * 10)
        rc = cli.main(["predict", "--checkpoint", str(trained / "model.inuc"),
                       "--wav", str(bad)])
        assert rc == 2


class TestExports:
    def test_filters_shape_and_reimport(self, trained, capsys):
        out_csv = trained / "filters.csv"
        rc = cli.main(["export-filters", "--checkpoint", str(trained / "model.inuc"),
                       "--out", str(out_csv)])
        assert rc == 0
        rows = [line.split(",") for line in out_csv.read_text().strip().splitlines()]
        assert len(rows) == 32          # first conv1d has 32 filters
        assert len(rows[0]) == 1 + 80   # index + 80 taps
        loaded = load_checkpoint(trained / "model.inuc")
        w = as_array(loaded.model.store["conv1.weight"].value)
        reimported = np.array([[float(v) for v in row[1:]] for row in rows],
                              dtype=np.float32)
        np.testing.assert_array_equal(reimported, w.reshape(32, 80))

    def test_filters_row_count_for_other_layer(self, trained):
        out_csv = trained / "f2.csv"
        rc = cli.main(["export-filters", "--checkpoint", str(trained / "model.inuc"),
                       "--layer", "conv3", "--out", str(out_csv)])
        assert rc == 0
        rows = [line.split(",") for line in out_csv.read_text().strip().splitlines()]
        assert len(rows) == 64          # conv3 is the 64-channel 2D conv
        assert len(rows[0]) == 1 + 32 * 9  # in_channels x kh x kw taps

    def test_embeddings_rows_and_dim(self, trained, corpus):
        out_tsv = trained / "emb.tsv"
        rc = cli.main(["export-embeddings", "--checkpoint", str(trained / "model.inuc"),
                       "--data-dir", str(corpus),
                       "--manifest", str(corpus / "manifest.csv"),
                       "--out", str(out_tsv)])
        assert rc == 0
        rows = [line.split("\t") for line in out_tsv.read_text().strip().splitlines()]
        assert len(rows) == 12
        assert all(len(r) == 2 + 128 for r in rows)

    def test_embeddings_identical_for_identical_inputs(self, trained, corpus, tmp_path):
        # duplicate manifest rows for one file: its feature rows must agree
        manifest = tmp_path / "dup.csv"
        with open(corpus / "manifest.csv") as fh:
            rows = list(csv.DictReader(fh))
        first = rows[0]
        manifest.write_text(
            "slice_file_name,fold,classID,class\n"
            + f"{first['slice_file_name']},{first['fold']},{first['classID']},{first['class']}\n" * 2
        )
        out_tsv = tmp_path / "emb.tsv"
        rc = cli.main(["export-embeddings", "--checkpoint", str(trained / "model.inuc"),
                       "--data-dir", str(corpus), "--manifest", str(manifest),
                       "--out", str(out_tsv)])
        assert rc == 0
        lines = out_tsv.read_text().strip().splitlines()
        assert lines[0].split("\t")[2:] == lines[1].split("\t")[2:]


def test_same_seed_identical_checkpoint_bytes(corpus, tmp_path):
    # four-clip manifest keeps the two runs cheap
    small = tmp_path / "small.csv"
    lines = (corpus / "manifest.csv").read_text().strip().splitlines()
    small.write_text("\n".join(lines[:5]) + "\n")
    blobs = []
    for run in range(2):
        out = tmp_path / f"run{run}"
        rc = cli.main([
            "train", "--arch", "inception", "--data-dir", str(corpus),
            "--manifest", str(small), "--epochs", "1", "--batch-size", "4",
            "--seed", "7", "--out", str(out),
        ])
        assert rc == 0
        blobs.append((out / "model.inuc").read_bytes())
    assert blobs[0] == blobs[1]


def test_eval_reports_json(trained, corpus, capsys):
    rc = cli.main(["eval", "--checkpoint", str(trained / "model.inuc"),
                   "--data-dir", str(corpus),
                   "--manifest", str(corpus / "manifest.csv"),
                   "--test-folds", ""])
    assert rc == 0
    out = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert 0.0 <= out["accuracy"] <= 1.0
    assert len(out["confusion"]) == 4


def test_config_echo_goes_to_stderr(capsys):
    cli.main(["count-params", "--arch", "inception"])
    captured = capsys.readouterr()
    echoed = json.loads(captured.err.strip().splitlines()[0])
    assert echoed["command"] == "count-params"

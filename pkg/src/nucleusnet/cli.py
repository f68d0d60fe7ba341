"""Command-line interface: train, eval, predict, count-params, export-filters,
export-embeddings, synth-data.

Every run echoes its resolved configuration as JSON to stderr. Exit codes:
0 success, 2 usage or input error, 3 numerical failure during training.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import audio, data
from .checkpoint import checkpoint_bytes, load_checkpoint, save_checkpoint
from .errors import (BuildError, CheckpointError, DataError, NumericalError,
                     ShapeError, WavError)
from .model import ARCH_NAMES, build, standard_config
from .tensor import as_array
from .train import TrainConfig, evaluate, train


def _echo_config(args: argparse.Namespace) -> None:
    resolved = {k: v for k, v in vars(args).items() if k != "func"}
    print(json.dumps(resolved, sort_keys=True, default=str), file=sys.stderr)


def _parse_folds(text: str):
    if not text:
        return frozenset()
    try:
        return frozenset(int(part) for part in text.split(",") if part.strip())
    except ValueError as exc:
        raise DataError(f"bad --test-folds value {text!r}: {exc}") from exc


def _load_dataset(args):
    manifest = data.load_manifest(args.manifest)
    samples = data.load_samples(manifest, args.data_dir)
    return manifest, samples


# ---------------------------------------------------------------------------
# subcommands


def cmd_train(args) -> int:
    manifest, samples = _load_dataset(args)
    train_set, test_set = data.make_splits(samples, _parse_folds(args.test_folds),
                                           seed=args.seed)
    if not train_set:
        raise DataError("no training samples left after the fold split")
    model = build(standard_config(args.arch, num_classes=manifest.num_classes),
                  seed=args.seed)
    config = TrainConfig(batch_size=args.batch_size, max_epochs=args.epochs,
                         seed=args.seed, lr=args.lr, lambda_=getattr(args, "lambda_"),
                         patience=args.patience,
                         checkpoint_every=args.checkpoint_every)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    log_path = out_dir / "run_log.jsonl"
    best = {"loss": np.inf, "bytes": None, "epoch": 0}

    def metadata(reports):
        digest = hashlib.sha256(
            json.dumps([r.train_loss for r in reports]).encode()
        ).hexdigest()
        return {
            "arch": args.arch,
            "seed": args.seed,
            "epochs_run": len(reports),
            "loss_digest": digest,
            "class_names": manifest.class_names,
        }

    reports = []
    with open(log_path, "w", encoding="utf-8") as log:
        def sink(report):
            reports.append(report)
            log.write(json.dumps(report.to_dict()) + "\n")
            log.flush()
            line = (f"epoch {report.epoch:4d}  loss {report.train_loss:.6f}  "
                    f"acc {report.train_accuracy:.4f}")
            if report.test_accuracy is not None:
                line += f"  test_acc {report.test_accuracy:.4f}"
            print(line + f"  ({report.wall_time_s:.1f}s)")
            if report.train_loss < best["loss"]:
                best["loss"] = report.train_loss
                best["epoch"] = report.epoch
                best["bytes"] = checkpoint_bytes(model, metadata=metadata(reports))

        model, reports, adam = train(model, train_set, config, sink=sink,
                                     checkpoint_dir=out_dir if config.checkpoint_every else None)

    save_checkpoint(model, out_dir / "model.inuc", adam=adam, metadata=metadata(reports))
    if best["bytes"] is not None:
        (out_dir / "best.inuc").write_bytes(best["bytes"])
    summary = {
        "epochs_run": len(reports),
        "final_train_loss": reports[-1].train_loss,
        "final_train_accuracy": reports[-1].train_accuracy,
        "best_train_loss_epoch": best["epoch"],
        "train_size": len(train_set),
        "test_size": len(test_set),
    }
    if test_set:
        summary["test_accuracy"] = evaluate(model, test_set,
                                            batch_size=config.batch_size).accuracy
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(json.dumps(summary))
    return 0


def cmd_eval(args) -> int:
    loaded = load_checkpoint(args.checkpoint)
    manifest, samples = _load_dataset(args)
    if manifest.num_classes != loaded.model.num_classes:
        raise DataError(
            f"manifest has {manifest.num_classes} classes but the checkpoint "
            f"expects {loaded.model.num_classes}"
        )
    folds = _parse_folds(args.test_folds)
    _, test_set = data.make_splits(samples, folds, seed=0)
    chosen = test_set if folds else samples
    if not chosen:
        raise DataError("no evaluation samples in the requested folds")
    result = evaluate(loaded.model, chosen)
    print(json.dumps({
        "accuracy": result.accuracy,
        "mean_loss": result.mean_loss,
        "num_samples": len(chosen),
        "confusion": result.confusion.tolist(),
    }))
    return 0


def cmd_predict(args) -> int:
    loaded = load_checkpoint(args.checkpoint)
    raw, rate = audio.decode_wav(Path(args.wav).read_bytes())
    wav = audio.resample(raw, rate, audio.TARGET_RATE)
    x = audio.standardize(wav)[None, :]
    probs, _ = loaded.model.forward(x, mode="infer")
    p = as_array(probs)
    names = loaded.metadata.get("class_names") or [
        str(i) for i in range(loaded.model.num_classes)
    ]
    order = np.argsort(-p, kind="stable")[: args.top_k]
    for rank, idx in enumerate(order, start=1):
        print(f"{rank}\t{idx}\t{names[idx]}\t{p[idx]:.6f}")
    return 0


def cmd_count_params(args) -> int:
    config = standard_config(args.arch, num_classes=args.num_classes)
    model = build(config)
    out = {
        "arch": args.arch,
        "trainable": model.count_params(),
        "total": model.count_params(include_non_trainable=True),
    }
    if not args.include_non_trainable:
        out["reported"] = out["trainable"]
    else:
        out["reported"] = out["total"]
    if config.count_note:
        out["note"] = config.count_note
    print(json.dumps(out))
    return 0


def cmd_export_filters(args) -> int:
    loaded = load_checkpoint(args.checkpoint)
    name = args.layer or loaded.model.first_conv1d_weight_name()
    if not name.endswith(".weight"):
        name += ".weight"
    if name not in loaded.model.store:
        raise DataError(f"no parameter named {name!r} in the checkpoint")
    w = as_array(loaded.model.store[name].value)
    if w.ndim < 2:
        raise DataError(f"{name!r} is not a filter bank (shape {w.shape})")
    taps = w.reshape(w.shape[0], -1)
    with open(args.out, "w", encoding="utf-8") as fh:
        for i, row in enumerate(taps):
            fh.write(",".join([str(i)] + [repr(float(v)) for v in row]) + "\n")
    print(f"wrote {taps.shape[0]} filters x {taps.shape[1]} taps to {args.out}")
    return 0


def cmd_export_embeddings(args) -> int:
    loaded = load_checkpoint(args.checkpoint)
    manifest, samples = _load_dataset(args)
    model = loaded.model
    with open(args.out, "w", encoding="utf-8") as fh:
        for start in range(0, len(samples), 16):
            batch = samples[start : start + 16]
            xs = np.stack([as_array(s.waveform) for s in batch])
            feats = model.features_batch(xs)
            for s, f in zip(batch, feats):
                cells = [s.source_id, str(s.label)] + [repr(float(v)) for v in f]
                fh.write("\t".join(cells) + "\n")
    print(f"wrote {len(samples)} embeddings of dim {feats.shape[1]} to {args.out}")
    return 0


def cmd_synth_data(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(args.seed)
    rows = []
    counter = 0
    for c in range(args.classes):
        for i in range(args.per_class):
            length = int(round(args.duration * args.rate))
            if args.vary_duration:
                length = int(round(rng.uniform(0.5, 1.0) * args.duration * args.rate))
            raw = data.synth_raw(c, rng, length, args.rate)
            fold = (counter % 10) + 1
            counter += 1
            fold_dir = out_dir / f"fold{fold}"
            fold_dir.mkdir(exist_ok=True)
            file_name = f"synth_{c:02d}_{i:04d}.wav"
            audio.write_wav(fold_dir / file_name, 0.9 * raw / max(np.abs(raw).max(), 1e-9),
                            args.rate)
            rows.append((file_name, fold, c, data.class_name(c)))
    manifest_path = out_dir / "manifest.csv"
    with open(manifest_path, "w", encoding="utf-8") as fh:
        fh.write("slice_file_name,fold,classID,class\n")
        for file_name, fold, cid, cname in rows:
            fh.write(f"{file_name},{fold},{cid},{cname}\n")
    print(f"wrote {len(rows)} clips across {args.classes} classes to {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nucleusnet",
        description="Train and run raw-waveform sound classifiers.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train an architecture on a WAV corpus")
    p.add_argument("--arch", required=True, choices=ARCH_NAMES)
    p.add_argument("--data-dir", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--test-folds", default="", help="comma-separated fold ids")
    p.add_argument("--epochs", type=int, default=300)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--lambda", dest="lambda_", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--patience", type=int, default=20)
    p.add_argument("--checkpoint-every", type=int, default=0,
                   help="also write a checkpoint every N epochs")
    p.add_argument("--out", default="run_out")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on manifest folds")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data-dir", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--test-folds", default="10")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="classify one WAV file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--wav", required=True)
    p.add_argument("--top-k", type=int, default=5)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("count-params", help="print parameter counts for an architecture")
    p.add_argument("--arch", required=True, choices=ARCH_NAMES)
    p.add_argument("--num-classes", type=int, default=10)
    p.add_argument("--include-non-trainable", action="store_true")
    p.set_defaults(func=cmd_count_params)

    p = sub.add_parser("export-filters", help="dump a conv layer's filters to CSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--layer", default=None,
                   help="parameter name (default: first 1D conv layer)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_filters)

    p = sub.add_parser("export-embeddings",
                       help="dump penultimate-layer embeddings to TSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data-dir", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_embeddings)

    p = sub.add_parser("synth-data", help="generate a synthetic WAV corpus")
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--per-class", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--rate", type=int, default=audio.TARGET_RATE)
    p.add_argument("--duration", type=float, default=4.0)
    p.add_argument("--vary-duration", action="store_true")
    p.set_defaults(func=cmd_synth_data)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    _echo_config(args)
    try:
        return args.func(args)
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (WavError, DataError, CheckpointError, BuildError, ShapeError,
            FileNotFoundError, NotADirectoryError, IsADirectoryError,
            PermissionError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entry() -> None:
    sys.exit(main())

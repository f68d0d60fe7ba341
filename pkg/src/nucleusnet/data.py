"""Dataset management: manifests, fold splits, and a synthetic corpus.

Manifests follow the UrbanSound8k CSV layout (slice_file_name, fold,
classID, class) with a configurable column mapping. The synthetic generator
produces parametric signal classes (tones, chirps, amplitude-modulated
tones, noise) that a network can actually learn, for desk-scale training.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .audio import decode_wav, prepare, resample, TARGET_LEN, TARGET_RATE
from .errors import DataError
from .tensor import Tensor

DEFAULT_COLUMNS = {
    "file_name": "slice_file_name",
    "fold": "fold",
    "class_id": "classID",
    "class_name": "class",
}


@dataclass
class Sample:
    """A preprocessed clip: standardized (1, L) waveform plus its label."""

    waveform: Tensor
    label: int
    source_id: str
    fold: int | None = None


@dataclass
class ManifestRow:
    file_name: str
    fold: int
    class_id: int
    class_name: str


@dataclass
class DatasetManifest:
    rows: list
    class_names: list  # index == class id

    @property
    def num_classes(self) -> int:
        return len(self.class_names)


def load_manifest(path, column_map: dict | None = None) -> DatasetManifest:
    """Parse a manifest CSV; class ids must be dense in 0..K-1."""
    cols = dict(DEFAULT_COLUMNS)
    if column_map:
        cols.update(column_map)
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DataError(f"{path}: empty manifest")
        missing = [c for c in cols.values() if c not in reader.fieldnames]
        if missing:
            raise DataError(f"{path}: manifest is missing columns {missing}")
        for lineno, rec in enumerate(reader, start=2):
            try:
                rows.append(ManifestRow(
                    file_name=rec[cols["file_name"]],
                    fold=int(rec[cols["fold"]]),
                    class_id=int(rec[cols["class_id"]]),
                    class_name=rec[cols["class_name"]],
                ))
            except (TypeError, ValueError) as exc:
                raise DataError(f"{path}:{lineno}: bad manifest row: {exc}") from exc
    if not rows:
        raise DataError(f"{path}: manifest has no rows")
    ids = sorted({r.class_id for r in rows})
    if ids != list(range(len(ids))):
        raise DataError(f"class ids must be dense starting at 0, got {ids}")
    names: dict[int, str] = {}
    for r in rows:
        if names.setdefault(r.class_id, r.class_name) != r.class_name:
            raise DataError(
                f"class id {r.class_id} maps to both "
                f"{names[r.class_id]!r} and {r.class_name!r}"
            )
    by_name: dict[str, int] = {}
    for cid, cname in names.items():
        if by_name.setdefault(cname, cid) != cid:
            raise DataError(f"class name {cname!r} maps to multiple ids")
    return DatasetManifest(rows=rows, class_names=[names[i] for i in range(len(ids))])


def resolve_audio_path(data_dir, row: ManifestRow) -> Path:
    """UrbanSound8k layout (data_dir/foldN/name) with a flat-dir fallback."""
    data_dir = Path(data_dir)
    candidate = data_dir / f"fold{row.fold}" / row.file_name
    if candidate.exists():
        return candidate
    flat = data_dir / row.file_name
    if flat.exists():
        return flat
    raise DataError(f"audio file not found: {candidate} (or {flat})")


def load_samples(manifest: DatasetManifest, data_dir, target_rate: int = TARGET_RATE,
                 target_len: int = TARGET_LEN) -> list:
    """Decode, resample, and prepare every manifest row into a Sample."""
    samples = []
    for row in manifest.rows:
        path = resolve_audio_path(data_dir, row)
        raw, rate = decode_wav(path.read_bytes())
        wav = resample(raw, rate, target_rate)
        samples.append(Sample(
            waveform=prepare(wav, target_len=target_len),
            label=row.class_id,
            source_id=row.file_name,
            fold=row.fold,
        ))
    return samples


def make_splits(items, test_folds, seed: int):
    """Partition by fold into (shuffled train, test); no item is lost or duplicated.

    Items only need a ``fold`` attribute (manifest rows and Samples both
    qualify). Items with fold None always train. The train shuffle is
    deterministic under the seed; test keeps manifest order.
    """
    test_folds = frozenset(test_folds)
    train = [it for it in items if it.fold is None or it.fold not in test_folds]
    test = [it for it in items if it.fold is not None and it.fold in test_folds]
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(train))
    return [train[i] for i in order], test


# ---------------------------------------------------------------------------
# synthetic corpus

_KINDS = ("tone", "chirp", "am", "noise")
_TONE_FREQS = (400.0, 950.0, 1800.0)
_CHIRP_BANDS = ((150.0, 1700.0), (600.0, 3200.0), (100.0, 3900.0))
_AM_CARRIERS = (1300.0, 2400.0, 3300.0)
_NOISE_SMOOTH = (1.0, 0.25, 0.06)  # 1.0 = white; smaller = heavier low-pass


def class_name(class_id: int) -> str:
    kind = _KINDS[class_id % len(_KINDS)]
    return f"{kind}{class_id // len(_KINDS)}"


def synth_raw(class_id: int, rng: np.random.Generator, length: int,
              rate: int = TARGET_RATE) -> np.ndarray:
    """One raw (un-standardized) waveform of the given synthetic class.

    Classes cycle through tone / chirp / AM tone / noise families; repeats of
    a family (class_id // 4) move to a different frequency band. Phase and
    amplitude are jittered per clip, and every non-noise class carries a low
    noise floor.
    """
    kind = _KINDS[class_id % len(_KINDS)]
    tier = (class_id // len(_KINDS)) % 3
    t = np.arange(length) / rate
    duration = length / rate
    amp = 0.5 + 0.5 * rng.random()
    phase = rng.uniform(0.0, 2.0 * np.pi)
    if kind == "tone":
        f = _TONE_FREQS[tier] * (1.0 + 0.02 * rng.standard_normal())
        x = np.sin(2.0 * np.pi * f * t + phase)
    elif kind == "chirp":
        f0, f1 = _CHIRP_BANDS[tier]
        x = np.sin(2.0 * np.pi * (f0 * t + (f1 - f0) * t * t / (2.0 * duration)) + phase)
    elif kind == "am":
        carrier = _AM_CARRIERS[tier] * (1.0 + 0.02 * rng.standard_normal())
        mod = max(8.0, 4.0 / duration)  # keep several envelope cycles per clip
        env = 0.5 * (1.0 + 0.8 * np.sin(2.0 * np.pi * mod * t + rng.uniform(0, 2 * np.pi)))
        x = env * np.sin(2.0 * np.pi * carrier * t + phase)
    else:
        x = rng.standard_normal(length)
        alpha = _NOISE_SMOOTH[tier]
        if alpha < 1.0:
            y, _ = lfilter([alpha], [1.0, -(1.0 - alpha)], x, zi=[(1.0 - alpha) * x[0]])
            x = y * (1.0 / max(np.abs(y).max(), 1e-9))
    if kind != "noise":
        x = x + 0.02 * rng.standard_normal(length)
    return (amp * x).astype(np.float32)


def synth_dataset(num_classes: int, per_class: int, seed: int,
                  length: int = TARGET_LEN, rate: int = TARGET_RATE) -> list:
    """Deterministic list of prepared Samples, ``per_class`` per class.

    Folds are assigned round-robin 1..10 so the standard split machinery
    works on synthetic data too.
    """
    if num_classes < 1 or per_class < 1:
        raise DataError("num_classes and per_class must be >= 1")
    rng = np.random.default_rng(seed)
    samples = []
    counter = 0
    for c in range(num_classes):
        for i in range(per_class):
            raw = synth_raw(c, rng, length, rate)
            samples.append(Sample(
                waveform=prepare(raw, target_len=length),
                label=c,
                source_id=f"synth-{c:02d}-{i:04d}",
                fold=(counter % 10) + 1,
            ))
            counter += 1
    return samples

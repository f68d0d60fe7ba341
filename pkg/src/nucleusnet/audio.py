"""Waveform ingestion: WAV decoding, resampling, and clip preparation.

The decoder handles RIFF/WAVE files with PCM 8/16/24-bit integer or 32-bit
float samples, mono or multi-channel (averaged to mono). Other chunks are
skipped. Preparation follows the training recipe: resample to 8 kHz, pad or
truncate to 4 s, then standardize the clip to zero mean and unit variance.
"""

from __future__ import annotations

import math
import struct

import numpy as np
from scipy.signal import lfilter

from .errors import DataError, WavError
from .tensor import Tensor

TARGET_RATE = 8000
TARGET_LEN = 32000  # 4 s at 8 kHz

_FMT_PCM = 1
_FMT_FLOAT = 3
_FMT_EXTENSIBLE = 0xFFFE


def decode_wav(data: bytes):
    """Decode WAV bytes to (mono float32 samples scaled to [-1, 1], rate)."""
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise WavError("not a RIFF/WAVE file", byte_offset=0)
    pos = 12
    fmt = None
    payload = None
    while pos + 8 <= len(data):
        cid = data[pos : pos + 4]
        (size,) = struct.unpack_from("<I", data, pos + 4)
        body_start = pos + 8
        if body_start + size > len(data):
            raise WavError(f"truncated {cid!r} chunk of {size} bytes", byte_offset=pos)
        body = data[body_start : body_start + size]
        if cid == b"fmt ":
            if size < 16:
                raise WavError(f"fmt chunk too short ({size} bytes)", byte_offset=pos)
            code, channels, rate, _, block_align, bits = struct.unpack_from("<HHIIHH", body)
            if code == _FMT_EXTENSIBLE:
                # resolve the actual code from the SubFormat GUID
                if size < 40:
                    raise WavError("extensible fmt chunk too short", byte_offset=pos)
                (code,) = struct.unpack_from("<H", body, 24)
            fmt = (code, channels, rate, block_align, bits)
        elif cid == b"data":
            payload = (body, pos)
        pos = body_start + size + (size & 1)  # chunks are 2-byte aligned
    if fmt is None:
        raise WavError("missing fmt chunk")
    if payload is None:
        raise WavError("missing data chunk")
    code, channels, rate, block_align, bits = fmt
    if channels < 1 or rate < 1:
        raise WavError(f"invalid fmt: {channels} channels at {rate} Hz")
    body, data_pos = payload

    depths = {(_FMT_PCM, 8), (_FMT_PCM, 16), (_FMT_PCM, 24), (_FMT_FLOAT, 32)}
    if code not in (_FMT_PCM, _FMT_FLOAT):
        raise WavError(f"unsupported encoding (format code {code})")
    if (code, bits) not in depths:
        raise WavError(f"unsupported bit depth {bits} for format code {code}")
    frame_size = channels * (bits // 8)
    if len(body) % frame_size:
        raise WavError(
            f"data chunk is not a whole number of {frame_size}-byte frames",
            byte_offset=data_pos,
        )

    if code == _FMT_PCM and bits == 8:
        x = (np.frombuffer(body, dtype=np.uint8).astype(np.float32) - 128.0) / 128.0
    elif code == _FMT_PCM and bits == 16:
        x = np.frombuffer(body, dtype="<i2").astype(np.float32)
        x /= 32768.0
    elif code == _FMT_PCM and bits == 24:
        b = np.frombuffer(body, dtype=np.uint8).reshape(-1, 3).astype(np.int32)
        v = b[:, 0] | (b[:, 1] << 8) | (b[:, 2] << 16)
        v -= (v & 0x800000) << 1  # sign extension
        x = v.astype(np.float32) / 8388608.0
    else:  # IEEE float 32
        x = np.frombuffer(body, dtype="<f4").astype(np.float32)
    if channels > 1:
        x = x.reshape(-1, channels).mean(axis=1)
    return np.ascontiguousarray(x, dtype=np.float32), int(rate)


def write_wav(path, samples, rate: int) -> None:
    """Write mono 16-bit PCM (test fixtures and synthetic corpora).

    Floats are scaled by 32768 and clipped to the int16 range, so
    decode_wav(write_wav(decode_wav(b))) is lossless.
    """
    x = np.asarray(samples)
    if x.dtype != np.int16:
        x = np.clip(np.round(np.asarray(x, dtype=np.float64) * 32768.0), -32768, 32767)
        x = x.astype(np.int16)
    payload = x.astype("<i2").tobytes()
    header = b"RIFF" + struct.pack("<I", 36 + len(payload)) + b"WAVE"
    header += b"fmt " + struct.pack("<IHHIIHH", 16, _FMT_PCM, 1, rate, rate * 2, 2, 16)
    header += b"data" + struct.pack("<I", len(payload))
    with open(path, "wb") as fh:
        fh.write(header + payload)


def _one_pole_zero_phase(x, alpha):
    # y[n] = alpha*x[n] + (1-alpha)*y[n-1], run forward then backward so the
    # net response has zero phase; state seeded with the edge sample so a
    # constant signal passes through unchanged.
    b, a = [alpha], [1.0, -(1.0 - alpha)]
    y, _ = lfilter(b, a, x, zi=[(1.0 - alpha) * x[0]])
    y, _ = lfilter(b, a, y[::-1], zi=[(1.0 - alpha) * y[-1]])
    return y[::-1]


def resample(x, from_rate: int, to_rate: int = TARGET_RATE) -> np.ndarray:
    """Resample by linear interpolation of the reconstructed signal.

    Downsampling by 2x or more first applies a zero-phase single-pole
    low-pass as cheap anti-aliasing. Output length is round(L * to / from).
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DataError(f"expected a mono sample sequence, got shape {x.shape}")
    if from_rate < 1 or to_rate < 1:
        raise DataError(f"invalid rates {from_rate} -> {to_rate}")
    if from_rate == to_rate:
        return x.astype(np.float32)
    out_len = int(round(x.size * to_rate / from_rate))
    if out_len < 1:
        raise DataError(f"resampling {x.size} samples {from_rate}->{to_rate} Hz leaves nothing")
    if x.size == 1:
        return np.full(out_len, x[0], dtype=np.float32)
    if from_rate >= 2 * to_rate:
        cutoff = 0.4 * to_rate
        alpha = 1.0 - math.exp(-2.0 * math.pi * cutoff / from_rate)
        x = _one_pole_zero_phase(x, alpha)
    t = np.arange(out_len) * (from_rate / to_rate)
    return np.interp(t, np.arange(x.size), x).astype(np.float32)


def standardize(x) -> np.ndarray:
    """Shift/scale to zero mean, unit variance; silent clips become zeros."""
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        raise DataError("empty clip")
    centered = x - x.mean()
    return (centered / max(float(centered.std()), 1e-8)).astype(np.float32)


def prepare(x, target_len: int = TARGET_LEN) -> Tensor:
    """Fix a clip's length, then standardize it; returns a (1, target_len) Tensor.

    Shorter clips are zero-padded at the end and longer ones truncated before
    the statistics are taken, so the vector fed to the network is exactly
    zero-mean/unit-variance over all target_len samples.
    """
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.size == 0:
        raise DataError("empty clip")
    if x.size < target_len:
        x = np.concatenate([x, np.zeros(target_len - x.size)])
    elif x.size > target_len:
        x = x[:target_len]
    return Tensor(standardize(x)[None, :])

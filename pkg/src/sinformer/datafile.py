"""Bit-exact binary dataset container and the generation pipeline.

Layout (little-endian throughout):

    magic      4 bytes  b"RFFD"
    version    u16      currently 1
    n_classes  u16
    rec_len    u32      samples per record (m)
    rec_count  u64
    sample_rate f64
    records    rec_count x (label u16 + m x i16)

A JSON-lines sidecar ``<path>.meta`` records profiles, seeds, impairment
settings and clipping rates; the first line is dataset-level, then one
line per record.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataFormatError
from .waveform import (
    ChannelProfile, EmitterProfile, ImpairmentConfig, WaveformConfig,
    add_awgn, add_narrowband_interference, apply_channel, apply_fingerprint,
    make_multipath, synthesize_clean, unit_channel,
)

MAGIC = b"RFFD"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sHHIQd")
HEADER_SIZE = _HEADER.size  # 28 bytes
INT16_FULL = 32767


@dataclass
class Dataset:
    """In-memory view of a dataset file."""

    labels: np.ndarray          # (N,) uint16
    samples: np.ndarray         # (N, m) int16
    n_classes: int
    sample_rate_hz: float

    @property
    def record_count(self) -> int:
        return int(self.labels.shape[0])

    @property
    def record_len(self) -> int:
        return int(self.samples.shape[1])

    def subset(self, indices: np.ndarray) -> "Dataset":
        return Dataset(self.labels[indices].copy(), self.samples[indices].copy(),
                       self.n_classes, self.sample_rate_hz)

    def per_class_subset(self, per_class: int, seed: int = 0) -> "Dataset":
        """First ``per_class`` records of each label, in stored order."""
        picks = []
        for k in range(self.n_classes):
            idx = np.flatnonzero(self.labels == k)[:per_class]
            picks.append(idx)
        order = np.sort(np.concatenate(picks))
        return self.subset(order)


def write_dataset(path: str | Path, dataset: Dataset) -> None:
    if np.any(dataset.labels >= dataset.n_classes):
        raise ConfigError("record label exceeds n_classes")
    n, m = dataset.samples.shape
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, dataset.n_classes, m, n,
                          dataset.sample_rate_hz)
    body = np.empty((n, m + 1), dtype="<i2")
    body[:, 0] = dataset.labels.astype("<u2").view("<i2")
    body[:, 1:] = dataset.samples.astype("<i2")
    with open(path, "wb") as f:
        f.write(header)
        f.write(body.tobytes())


def read_dataset(path: str | Path) -> Dataset:
    """Parse and validate a dataset file; every field round-trips exactly."""
    raw = Path(path).read_bytes()
    if len(raw) < HEADER_SIZE:
        raise DataFormatError(f"file too short for header ({len(raw)} bytes)", offset=0)
    magic, version, n_classes, m, count, rate = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise DataFormatError(f"bad magic {magic!r}", offset=0)
    if version != FORMAT_VERSION:
        raise DataFormatError(f"unsupported format version {version}", offset=4)
    expected = HEADER_SIZE + count * (2 + 2 * m)
    if len(raw) != expected:
        raise DataFormatError(
            f"file length {len(raw)} does not match header ({expected} expected)",
            offset=min(len(raw), expected))
    body = np.frombuffer(raw, dtype="<i2", offset=HEADER_SIZE).reshape(count, m + 1)
    labels = body[:, 0].view("<u2").astype(np.int64)
    if np.any(labels >= n_classes):
        bad = int(np.argmax(labels >= n_classes))
        raise DataFormatError(f"record {bad} label {labels[bad]} >= n_classes {n_classes}",
                              offset=HEADER_SIZE + bad * (2 + 2 * m))
    return Dataset(labels=labels, samples=np.array(body[:, 1:]),
                   n_classes=n_classes, sample_rate_hz=rate)


def normalize_record(samples: np.ndarray, dtype=np.float64) -> np.ndarray:
    """Zero-mean, unit-RMS float view of integer samples (records on the last axis)."""
    x = samples.astype(np.float64)
    x -= x.mean(axis=-1, keepdims=True)
    rms = np.sqrt((x * x).mean(axis=-1, keepdims=True))
    x /= np.maximum(rms, 1e-9)
    return x.astype(dtype, copy=False)


def quantize(x: np.ndarray, full_scale: float) -> tuple[np.ndarray, float]:
    """Round to int16 against the given full-scale amplitude; returns clip rate."""
    scaled = x / full_scale * INT16_FULL
    clipped = np.clip(np.rint(scaled), -32768, INT16_FULL)
    clip_rate = float(np.mean(np.abs(scaled) > INT16_FULL))
    return clipped.astype(np.int16), clip_rate


def _record_rng(seed: int, index: int) -> np.random.Generator:
    # counter-based stream keyed on (seed, index): output is independent of
    # generation order, so records could be produced by any worker layout
    return np.random.Generator(np.random.Philox(key=np.array([seed, index], dtype=np.uint64)))


def render_record(label: int, profiles: list[EmitterProfile], cfg: WaveformConfig,
                  impairments: ImpairmentConfig, rng: np.random.Generator
                  ) -> tuple[np.ndarray, float, float]:
    """One record through the full pipeline; returns (int16 samples, full_scale, clip_rate).

    Stage order: synthesize -> fingerprint -> channel -> interference ->
    noise -> quantize. Full scale is 4x the RMS of the pre-noise,
    pre-interference signal (12-bit-effective capture headroom), so noisy
    low-SNR generation logs its clipping.
    """
    s = synthesize_clean(cfg, rng)
    x = apply_fingerprint(s, profiles[label], cfg)
    if impairments.multipath_sir_db is not None:
        channel = make_multipath(impairments.multipath_delay_ns,
                                 impairments.multipath_sir_db, cfg, rng)
    else:
        channel = unit_channel()
    x = apply_channel(x, channel)
    full_scale = 4.0 * float(np.sqrt(np.mean(x * x)))
    x = add_narrowband_interference(x, impairments.nb_sir_db, rng,
                                    impairments.nb_subbands, impairments.nb_corrupt)
    x = add_awgn(x, impairments.snr_db, rng)
    q, clip_rate = quantize(x, full_scale)
    return q, full_scale, clip_rate


def generate_dataset(profiles: list[EmitterProfile], per_class: int,
                     cfg: WaveformConfig, impairments: ImpairmentConfig,
                     rng_seed: int, path: str | Path) -> dict:
    """Write a labeled synthetic dataset plus its ``.meta`` sidecar.

    Labels are shuffled with the seed; each record then derives its own
    counter-based random stream from (seed, record_index).
    """
    n_classes = len(profiles)
    if n_classes < 2:
        raise ConfigError("at least 2 emitters are required")
    for i, a in enumerate(profiles):
        a.validate(cfg)
        for b in profiles[i + 1:]:
            if a == b:
                raise ConfigError("emitter profiles must be pairwise distinct")
    if per_class < 1:
        raise ConfigError("per_class must be positive")

    labels = np.repeat(np.arange(n_classes, dtype=np.int64), per_class)
    shuffle_rng = np.random.Generator(
        np.random.Philox(key=np.array([rng_seed, 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)))
    labels = shuffle_rng.permutation(labels)

    m = cfg.samples_per_record
    samples = np.empty((labels.size, m), dtype=np.int16)
    record_meta = []
    clip_sum = 0.0
    for i, label in enumerate(labels):
        q, full_scale, clip_rate = render_record(int(label), profiles, cfg,
                                                 impairments, _record_rng(rng_seed, i))
        samples[i] = q
        clip_sum += clip_rate
        record_meta.append({"kind": "record", "index": i, "label": int(label),
                            "full_scale": full_scale, "clip_rate": clip_rate})

    dataset = Dataset(labels=labels, samples=samples, n_classes=n_classes,
                      sample_rate_hz=cfg.sample_rate_hz)
    try:
        write_dataset(path, dataset)
    except OSError as e:
        raise OSError(f"cannot write dataset to {path}: {e}") from e

    clip_rate = clip_sum / labels.size
    warnings = []
    if clip_rate > 0.01:
        warnings.append(f"clipping rate {clip_rate:.4f} exceeds 1%")
    summary = {
        "kind": "dataset",
        "format_version": FORMAT_VERSION,
        "seed": rng_seed,
        "n_classes": n_classes,
        "per_class": per_class,
        "record_count": int(labels.size),
        "record_len": m,
        "sample_rate_hz": cfg.sample_rate_hz,
        "waveform": asdict(cfg),
        "impairments": _impairments_json(impairments),
        "profiles": [asdict(p) for p in profiles],
        "clip_rate": clip_rate,
        "warnings": warnings,
    }
    meta_path = Path(str(path) + ".meta")
    with open(meta_path, "w") as f:
        f.write(json.dumps(summary) + "\n")
        for rec in record_meta:
            f.write(json.dumps(rec) + "\n")
    return summary


def _impairments_json(imp: ImpairmentConfig) -> dict:
    d = asdict(imp)
    for key, value in d.items():
        if isinstance(value, float) and math.isinf(value):
            d[key] = None
    return d


def read_meta(path: str | Path) -> tuple[dict, list[dict]]:
    lines = Path(str(path) + ".meta").read_text().splitlines()
    head = json.loads(lines[0])
    return head, [json.loads(line) for line in lines[1:]]

"""Binary container format, generation pipeline ordering and normalization."""

import numpy as np
import pytest

from sinformer.datafile import (
    HEADER_SIZE, Dataset, generate_dataset, normalize_record, quantize,
    read_dataset, read_meta, render_record, write_dataset, _record_rng,
)
from sinformer.errors import ConfigError, DataFormatError
from sinformer.waveform import (
    EmitterProfile, ImpairmentConfig, WaveformConfig, apply_fingerprint,
    default_profiles, synthesize_clean,
)

CFG = WaveformConfig(samples_per_record=400)
CLEAN = ImpairmentConfig()


def small_profiles(n=3):
    return default_profiles(n, CFG)


# ---------------------------------------------------------------------------
# container format
# ---------------------------------------------------------------------------

def test_header_is_28_bytes():
    assert HEADER_SIZE == 28


def test_file_size_arithmetic(tmp_path):
    path = tmp_path / "a.rffd"
    generate_dataset(default_profiles(8, CFG), 100, CFG, CLEAN, 0, path)
    n, m = 800, CFG.samples_per_record
    assert path.stat().st_size == HEADER_SIZE + n * (2 + 2 * m)


def test_write_read_round_trip_field_exact(tmp_path):
    rng = np.random.default_rng(0)
    ds = Dataset(labels=rng.integers(0, 5, size=40),
                 samples=rng.integers(-32768, 32767, size=(40, 64)).astype(np.int16),
                 n_classes=5, sample_rate_hz=123456.25)
    path = tmp_path / "b.rffd"
    write_dataset(path, ds)
    back = read_dataset(path)
    np.testing.assert_array_equal(back.labels, ds.labels)
    np.testing.assert_array_equal(back.samples, ds.samples)
    assert back.n_classes == 5
    assert back.sample_rate_hz == 123456.25


def test_truncated_file_reports_offset(tmp_path):
    path = tmp_path / "c.rffd"
    generate_dataset(small_profiles(), 2, CFG, CLEAN, 0, path)
    raw = path.read_bytes()
    path.write_bytes(raw[:-10])
    with pytest.raises(DataFormatError, match="byte offset"):
        read_dataset(path)


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "d.rffd"
    generate_dataset(small_profiles(), 2, CFG, CLEAN, 0, path)
    raw = bytearray(path.read_bytes())
    raw[:4] = b"XXXX"
    path.write_bytes(bytes(raw))
    with pytest.raises(DataFormatError):
        read_dataset(path)


def test_label_out_of_range_rejected(tmp_path):
    ds = Dataset(labels=np.array([0, 7]), samples=np.zeros((2, 8), dtype=np.int16),
                 n_classes=3, sample_rate_hz=1.0)
    with pytest.raises(ConfigError):
        write_dataset(tmp_path / "e.rffd", ds)


# ---------------------------------------------------------------------------
# generation pipeline
# ---------------------------------------------------------------------------

def test_generation_deterministic_byte_identical(tmp_path):
    p1, p2 = tmp_path / "s1.rffd", tmp_path / "s2.rffd"
    generate_dataset(small_profiles(), 5, CFG, ImpairmentConfig(snr_db=15.0), 42, p1)
    generate_dataset(small_profiles(), 5, CFG, ImpairmentConfig(snr_db=15.0), 42, p2)
    assert p1.read_bytes() == p2.read_bytes()
    generate_dataset(small_profiles(), 5, CFG, ImpairmentConfig(snr_db=15.0), 43, p2)
    assert p1.read_bytes() != p2.read_bytes()


def test_generation_requires_two_distinct_emitters(tmp_path):
    with pytest.raises(ConfigError, match="at least 2 emitters"):
        generate_dataset(small_profiles()[:1], 5, CFG, CLEAN, 0, tmp_path / "f.rffd")
    twin = EmitterProfile(cfo_hz=0.0, phase0_rad=0.0, pa_coeffs=(1.0, -0.05, 0.0))
    with pytest.raises(ConfigError, match="distinct"):
        generate_dataset([twin, twin], 5, CFG, CLEAN, 0, tmp_path / "g.rffd")


def test_pipeline_reduces_to_quantized_upconversion():
    # all impairments off, a1=1, cfo=0, theta=0, unit channel: the record is
    # exactly the quantized upconversion of the modulating signal
    profile = EmitterProfile(cfo_hz=0.0, phase0_rad=0.0, pa_coeffs=(1.0, 0.0, 0.0))
    seed, index = 11, 3
    q, full_scale, _ = render_record(0, [profile], CFG, CLEAN, _record_rng(seed, index))
    s = synthesize_clean(CFG, _record_rng(seed, index))
    reference = apply_fingerprint(s, profile, CFG)
    assert full_scale == 4.0 * float(np.sqrt(np.mean(reference ** 2)))
    expected, _ = quantize(reference, full_scale)
    np.testing.assert_array_equal(q, expected)


def test_meta_sidecar_contents(tmp_path):
    path = tmp_path / "h.rffd"
    summary = generate_dataset(small_profiles(), 4, CFG,
                               ImpairmentConfig(snr_db=20.0), 5, path)
    head, records = read_meta(path)
    assert head["record_count"] == 12 == len(records)
    assert head["seed"] == 5
    assert head["impairments"]["snr_db"] == 20.0
    assert len(head["profiles"]) == 3
    assert summary["clip_rate"] == head["clip_rate"]
    labels_meta = [r["label"] for r in records]
    ds = read_dataset(path)
    np.testing.assert_array_equal(ds.labels, labels_meta)


def test_labels_shuffled_and_balanced(tmp_path):
    path = tmp_path / "i.rffd"
    generate_dataset(small_profiles(), 10, CFG, CLEAN, 1, path)
    ds = read_dataset(path)
    counts = np.bincount(ds.labels, minlength=3)
    np.testing.assert_array_equal(counts, [10, 10, 10])
    assert np.any(np.diff(ds.labels[:10]) != 0)  # not grouped by class


# ---------------------------------------------------------------------------
# normalization
# ---------------------------------------------------------------------------

def test_normalize_unit_rms():
    rng = np.random.default_rng(1)
    rec = rng.integers(-20000, 20000, size=2000).astype(np.int16)
    x = normalize_record(rec)
    assert abs(np.sqrt(np.mean(x * x)) - 1.0) < 1e-6
    assert abs(x.mean()) < 1e-9


def test_normalize_constant_record_is_zero():
    rec = np.full(100, 123, dtype=np.int16)
    np.testing.assert_array_equal(normalize_record(rec), 0.0)


def test_normalize_batched_matches_per_record():
    rng = np.random.default_rng(2)
    recs = rng.integers(-5000, 5000, size=(4, 256)).astype(np.int16)
    batched = normalize_record(recs)
    for i in range(4):
        np.testing.assert_array_equal(batched[i], normalize_record(recs[i]))


def test_subset_helpers():
    labels = np.array([0, 1, 0, 1, 0, 1, 2, 2])
    samples = np.arange(8 * 4, dtype=np.int16).reshape(8, 4)
    ds = Dataset(labels, samples, 3, 1.0)
    sub = ds.per_class_subset(1)
    np.testing.assert_array_equal(sub.labels, [0, 1, 2])
    np.testing.assert_array_equal(sub.samples[0], samples[0])
    np.testing.assert_array_equal(sub.samples[2], samples[6])

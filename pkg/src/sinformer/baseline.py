"""Classical spectral nearest-centroid classifier.

A dataset sanity oracle, deliberately independent of the neural model:
each record is reduced to spectral features (the precise frequency of
the doubled-carrier line of the squared record, which exposes the
per-device carrier offset, plus coarse log band powers that expose the
amplifier's spectral signature), features are scaled by their
within-class spread and records are assigned to the nearest class
centroid.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError
from .waveform import WaveformConfig

N_BANDS = 32
LINE_SEARCH_BELOW_HZ = 5_000.0
LINE_SEARCH_ABOVE_HZ = 12_000.0


def spectral_features(records: np.ndarray, cfg: WaveformConfig) -> np.ndarray:
    """Feature matrix (n_records, 1 + N_BANDS) from normalized float records."""
    records = np.atleast_2d(records)
    n, m = records.shape
    bin_hz = cfg.sample_rate_hz / m

    # squared record exposes a sharp line at twice the emitter carrier
    line_spec = np.abs(np.fft.rfft(records * records, axis=1)) ** 2
    center = 2.0 * cfg.carrier_hz
    lo = max(int((center - LINE_SEARCH_BELOW_HZ) / bin_hz), 0)
    hi = min(int((center + LINE_SEARCH_ABOVE_HZ) / bin_hz) + 1, line_spec.shape[1])
    window = line_spec[:, lo:hi]
    peaks = np.argmax(window, axis=1)
    line_hz = np.empty(n)
    for i, p in enumerate(peaks):
        a, b = max(p - 2, 0), min(p + 3, window.shape[1])
        w = window[i, a:b]
        line_hz[i] = (lo + (np.arange(a, b) * w).sum() / w.sum()) * bin_hz

    spec = np.abs(np.fft.rfft(records, axis=1)) ** 2
    usable = (spec.shape[1] // N_BANDS) * N_BANDS
    bands = spec[:, :usable].reshape(n, N_BANDS, -1).sum(axis=2)
    return np.concatenate([line_hz[:, None], np.log(bands + 1e-12)], axis=1)


class SpectralCentroidBaseline:
    """Nearest class centroid over within-class-standardized spectral features."""

    def __init__(self, cfg: WaveformConfig):
        self.cfg = cfg
        self.scale: np.ndarray | None = None
        self.centroids: np.ndarray | None = None

    def fit(self, records: np.ndarray, labels: np.ndarray,
            n_classes: int) -> "SpectralCentroidBaseline":
        feats = spectral_features(records, self.cfg)
        if len(np.unique(labels)) < 2:
            raise ContractError("baseline needs at least two classes in training data")
        means = np.stack([feats[labels == k].mean(axis=0) for k in range(n_classes)])
        within_var = np.mean(
            np.stack([feats[labels == k].var(axis=0) for k in range(n_classes)]), axis=0)
        self.scale = np.sqrt(within_var) + 1e-12
        self.centroids = means / self.scale
        return self

    def predict(self, records: np.ndarray) -> np.ndarray:
        if self.centroids is None:
            raise ContractError("baseline used before fit")
        z = spectral_features(records, self.cfg) / self.scale
        d = ((z[:, None, :] - self.centroids[None, :, :]) ** 2).sum(axis=2)
        return np.argmin(d, axis=1)

    def accuracy(self, records: np.ndarray, labels: np.ndarray) -> float:
        return float(np.mean(self.predict(records) == labels))

    def distance_ratio(self, records: np.ndarray, labels: np.ndarray,
                       max_pairs: int = 20_000) -> float:
        """Mean inter-class over mean intra-class feature distance."""
        z = spectral_features(records, self.cfg) / self.scale
        rng = np.random.default_rng(0)
        n = z.shape[0]
        i = rng.integers(0, n, size=max_pairs)
        j = rng.integers(0, n, size=max_pairs)
        keep = i != j
        i, j = i[keep], j[keep]
        d = np.sqrt(((z[i] - z[j]) ** 2).sum(axis=1))
        same = labels[i] == labels[j]
        if not same.any() or same.all():
            raise ContractError("need both intra- and inter-class pairs")
        return float(d[~same].mean() / d[same].mean())

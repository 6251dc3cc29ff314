"""Synthetic emitter and channel models.

The received record is channel * phi(s(t) cos(w t + theta)) + noise:
a random multicarrier modulating signal is upconverted with a
device-specific carrier offset and initial phase, distorted by a
memoryless odd amplifier polynomial, convolved with a sparse channel
and degraded by additive noise or interference. Every stage is
seedable; identical (config, seed) reproduces identical samples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractError

# Fixed synthesis policy: the multicarrier grid is oversampled 16x so the
# occupied band stays well inside Nyquist, with a 1/8-symbol cyclic prefix.
FFT_OVERSAMPLE = 16
CP_FRACTION = 8


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(key=np.array([seed, 0], dtype=np.uint64)))


@dataclass
class WaveformConfig:
    """Modulating-signal and carrier parameters.

    Defaults are desk-scale: a 64-subcarrier QPSK multicarrier signal at
    a 4 MHz sample rate, chosen so the 150 ns two-path delay is at least
    one sample and carrier offsets of a few hundred Hz produce visible
    phase drift across one 2000-sample record.
    """

    sample_rate_hz: float = 4_000_000.0
    carrier_hz: float = 500_000.0
    n_subcarriers: int = 64
    modulation: str = "qpsk"
    samples_per_record: int = 2000

    def validate(self) -> None:
        if self.samples_per_record <= 0:
            raise ConfigError("samples_per_record must be positive")
        n = self.n_subcarriers
        if n < 2 or (n & (n - 1)) != 0:
            raise ConfigError(f"n_subcarriers must be a power of two, got {n}")
        if self.modulation.lower() != "qpsk":
            raise ConfigError(f"unsupported modulation {self.modulation!r}")
        if not 0 < self.carrier_hz < self.sample_rate_hz / 2:
            raise ConfigError("carrier_hz must lie inside (0, Nyquist)")

    def __post_init__(self):
        self.validate()

    @property
    def fft_size(self) -> int:
        return FFT_OVERSAMPLE * self.n_subcarriers

    @property
    def occupied_bandwidth_hz(self) -> float:
        """One-sided baseband width of the loaded subcarriers."""
        return (self.n_subcarriers + 1) * self.sample_rate_hz / self.fft_size


@dataclass
class EmitterProfile:
    """Per-device fingerprint: carrier imperfections and amplifier polynomial.

    pa_coeffs = (a1, a3, a5) realize the memoryless odd distortion
    a1*x + a3*x**3 + a5*x**5 applied to the upconverted waveform.
    """

    cfo_hz: float
    phase0_rad: float
    pa_coeffs: tuple[float, float, float]
    iq_gain_db: float = 0.0
    iq_phase_rad: float = 0.0

    def validate(self, cfg: WaveformConfig) -> None:
        if self.pa_coeffs[0] <= 0:
            raise ConfigError(f"amplifier linear gain must be positive, got {self.pa_coeffs[0]}")
        if abs(self.cfo_hz) >= cfg.sample_rate_hz / 4:
            raise ConfigError(
                f"|cfo_hz| = {abs(self.cfo_hz)} must stay below sample_rate/4")


@dataclass
class ChannelProfile:
    """Sparse tap response: (delay_samples, complex gain) pairs."""

    taps: list[tuple[int, complex]]
    normalized: bool = False

    def validate(self) -> None:
        if not self.taps:
            raise ConfigError("channel needs at least one tap")
        delays = [d for d, _ in self.taps]
        if any(d < 0 for d in delays):
            raise ConfigError("tap delays must be non-negative")
        if any(b <= a for a, b in zip(delays, delays[1:])):
            raise ConfigError("tap delays must be strictly increasing")

    def __post_init__(self):
        self.validate()


def unit_channel() -> ChannelProfile:
    return ChannelProfile(taps=[(0, 1.0 + 0.0j)])


def synthesize_clean(cfg: WaveformConfig, rng_seed) -> np.ndarray:
    """Random QPSK multicarrier modulating signal, peak-normalized to 1.

    Symbols are placed on the occupied subcarriers of a real inverse
    transform, cyclic-prefixed, tiled and truncated to exactly
    ``samples_per_record`` samples.
    """
    cfg.validate()
    rng = _as_rng(rng_seed)
    n_fft = cfg.fft_size
    cp = n_fft // CP_FRACTION
    sym_len = n_fft + cp
    m = cfg.samples_per_record
    n_syms = -(-m // sym_len)
    chunks = []
    for _ in range(n_syms):
        spec = np.zeros(n_fft // 2 + 1, dtype=complex)
        quad = rng.integers(0, 4, size=cfg.n_subcarriers)
        spec[1:1 + cfg.n_subcarriers] = np.exp(1j * (np.pi / 4 + np.pi / 2 * quad))
        sym = np.fft.irfft(spec, n_fft)
        chunks.append(np.concatenate([sym[-cp:], sym]))
    s = np.concatenate(chunks)[:m]
    peak = np.max(np.abs(s))
    return s / peak


def apply_fingerprint(s: np.ndarray, profile: EmitterProfile,
                      cfg: WaveformConfig) -> np.ndarray:
    """Upconvert with the device carrier and apply the amplifier polynomial.

    IQ imbalance (gain on the in-phase rail, phase leakage into the
    quadrature rail) acts before upconversion; both default to zero.
    """
    profile.validate(cfg)
    m = s.shape[-1]
    t = np.arange(m) / cfg.sample_rate_hz
    w = 2.0 * np.pi * (cfg.carrier_hz + profile.cfo_hz)
    i_gain = 10.0 ** (profile.iq_gain_db / 20.0)
    x = i_gain * s * np.cos(w * t + profile.phase0_rad)
    if profile.iq_phase_rad != 0.0:
        x -= s * math.sin(profile.iq_phase_rad) * np.sin(w * t + profile.phase0_rad)
    a1, a3, a5 = profile.pa_coeffs
    x2 = x * x
    return x * (a1 + x2 * (a3 + x2 * a5))


def _analytic_signal(x: np.ndarray) -> np.ndarray:
    """FFT-domain Hilbert construction of the analytic signal."""
    n = x.shape[-1]
    spec = np.fft.fft(x)
    h = np.zeros(n)
    h[0] = 1.0
    if n % 2 == 0:
        h[n // 2] = 1.0
        h[1:n // 2] = 2.0
    else:
        h[1:(n + 1) // 2] = 2.0
    return np.fft.ifft(spec * h)


def apply_channel(x: np.ndarray, channel: ChannelProfile) -> np.ndarray:
    """Sparse-tap convolution, tail truncated to the record length.

    Complex gains act as magnitude-plus-phase on the analytic signal;
    the real part is the passband output. A single unit tap at delay 0
    is exactly the identity.
    """
    channel.validate()
    m = x.shape[-1]
    if channel.taps[-1][0] >= m:
        raise ConfigError(
            f"tap delay {channel.taps[-1][0]} exceeds record length {m}")
    gains = np.array([g for _, g in channel.taps], dtype=complex)
    if channel.normalized:
        gains = gains / math.sqrt(float(np.sum(np.abs(gains) ** 2)))
    if len(channel.taps) == 1 and channel.taps[0][0] == 0:
        return np.real(gains[0]) * x if gains[0].imag == 0 else np.real(gains[0] * _analytic_signal(x))
    a = _analytic_signal(x)
    out = np.zeros(m, dtype=complex)
    for (delay, _), g in zip(channel.taps, gains):
        if delay == 0:
            out += g * a
        else:
            out[delay:] += g * a[:m - delay]
    return out.real


def add_awgn(x: np.ndarray, snr_db: float | None, rng_seed) -> np.ndarray:
    """White Gaussian noise at the requested SNR; None means clean."""
    if snr_db is None or snr_db == math.inf:
        return x.copy()
    power = float(np.mean(x * x))
    if power == 0.0:
        raise ContractError("add_awgn: zero-power input has undefined SNR")
    rng = _as_rng(rng_seed)
    sigma = math.sqrt(power / 10.0 ** (snr_db / 10.0))
    return x + rng.normal(0.0, sigma, size=x.shape)


def add_narrowband_interference(x: np.ndarray, sir_db: float | None, rng_seed,
                                n_subbands: int = 256, n_corrupt: int = 2) -> np.ndarray:
    """Sinusoidal tones at the centers of randomly chosen sub-bands.

    The positive-frequency band [0, Nyquist) is split into
    ``n_subbands``; ``n_corrupt`` distinct bands are drawn per call
    (fixed within a record, re-drawn across records). Total added power
    is P_x / 10**(sir_db/10), split evenly across the tones.
    """
    if sir_db is None or sir_db == math.inf:
        return x.copy()
    if n_corrupt >= n_subbands:
        raise ConfigError("n_corrupt must be below n_subbands")
    rng = _as_rng(rng_seed)
    m = x.shape[-1]
    power = float(np.mean(x * x))
    total = power / 10.0 ** (sir_db / 10.0)
    amp = math.sqrt(2.0 * total / n_corrupt)
    bands = rng.choice(n_subbands, size=n_corrupt, replace=False)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=n_corrupt)
    # frequencies in cycles/sample; Nyquist is 0.5
    centers = (bands + 0.5) * 0.5 / n_subbands
    n = np.arange(m)
    out = x.copy()
    for f, ph in zip(centers, phases):
        out += amp * np.cos(2.0 * np.pi * f * n + ph)
    return out


def make_multipath(delay_ns: float, sir_db: float, cfg: WaveformConfig,
                   rng_seed) -> ChannelProfile:
    """Two-path channel: unit direct path plus a delayed reflection.

    The reflection magnitude follows |g|^2 = 10**(-sir_db/10); its phase
    is drawn from the seed. Sub-sample delays are rejected.
    """
    delay = round(delay_ns * 1e-9 * cfg.sample_rate_hz)
    if delay < 1:
        raise ConfigError(
            f"delay {delay_ns} ns rounds to 0 samples at {cfg.sample_rate_hz} Hz; "
            "use a higher sample rate")
    rng = _as_rng(rng_seed)
    mag = 10.0 ** (-sir_db / 20.0)
    phase = rng.uniform(0.0, 2.0 * np.pi)
    return ChannelProfile(taps=[(0, 1.0 + 0.0j), (delay, mag * np.exp(1j * phase))])


def downconvert(x: np.ndarray, cfg: WaveformConfig, cfo_hz: float = 0.0,
                phase_rad: float = 0.0, cutoff_hz: float | None = None) -> np.ndarray:
    """Quadrature demodulation with a brick-wall low-pass, for verification.

    Exact (to rounding) when the modulating signal is band-limited on the
    record's circular spectrum and the carrier is an integer number of
    cycles per record.
    """
    m = x.shape[-1]
    fs = cfg.sample_rate_hz
    f0 = cfg.carrier_hz + cfo_hz
    if cutoff_hz is None:
        cutoff_hz = (f0 + cfg.occupied_bandwidth_hz) / 2.0
    t = np.arange(m) / fs
    z = x * np.exp(-1j * (2.0 * np.pi * f0 * t + phase_rad))
    spec = np.fft.fft(z)
    freqs = np.fft.fftfreq(m, d=1.0 / fs)
    spec[np.abs(freqs) > cutoff_hz] = 0.0
    return 2.0 * np.fft.ifft(spec).real


@dataclass
class ImpairmentConfig:
    """Degradations applied at generation time; None disables a stage."""

    snr_db: float | None = None
    nb_sir_db: float | None = None
    nb_subbands: int = 256
    nb_corrupt: int = 2
    multipath_sir_db: float | None = None
    multipath_delay_ns: float = 150.0


def default_profiles(n_emitters: int, cfg: WaveformConfig,
                     cfo_spacing_hz: float = 500.0,
                     a3_range: tuple[float, float] = (-0.05, -0.12),
                     a5_range: tuple[float, float] = (0.0, 0.02)) -> list[EmitterProfile]:
    """The standard emitter set: a CFO ladder with distinct amplifier curves.

    Emitter k sits at k * cfo_spacing_hz with third/fifth-order
    coefficients swept across the given ranges and a golden-angle
    initial phase, so all profiles are pairwise distinct.
    """
    if n_emitters < 2:
        raise ConfigError("at least 2 emitters are required")
    a3 = np.linspace(a3_range[0], a3_range[1], n_emitters)
    a5 = np.linspace(a5_range[0], a5_range[1], n_emitters)
    golden = np.pi * (3.0 - math.sqrt(5.0))
    profiles = [
        EmitterProfile(cfo_hz=k * cfo_spacing_hz,
                       phase0_rad=float((k * golden) % (2.0 * np.pi)),
                       pa_coeffs=(1.0, float(a3[k]), float(a5[k])))
        for k in range(n_emitters)
    ]
    for p in profiles:
        p.validate(cfg)
    return profiles

"""Ground-truth surrogate generators for heart-like and lung-like sounds.

Heart surrogate: a periodic train of exponentially decaying tone bursts
(fast repetition, compact low-frequency energy). Lung surrogate:
band-passed noise with slow sinusoidal amplitude modulation. Both are
seeded and peak-normalized, so every experiment is reproducible without
any recorded data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.signal

from .audio_io import DEFAULT_RATE, Waveform

PEAK_LEVEL = 0.8


@dataclass
class SourceSpec:
    kind: str
    rate_hz: float
    duration_s: float
    seed: int = 0
    sample_rate: int = DEFAULT_RATE
    # impulse_train_tone only
    carrier_hz: float = 90.0
    decay_s: float = 0.04
    # am_noise only
    band_lo_hz: float = 150.0
    band_hi_hz: float = 900.0

    def validate(self) -> None:
        if self.kind not in ("impulse_train_tone", "am_noise"):
            raise ValueError(f"unknown source kind {self.kind!r}")
        if self.rate_hz <= 0:
            raise ValueError("rate_hz must be positive")
        if self.duration_s < 3:
            raise ValueError("duration_s must be at least 3 seconds")
        if self.kind == "impulse_train_tone":
            if self.carrier_hz <= 0 or self.decay_s <= 0:
                raise ValueError("carrier_hz and decay_s must be positive")
        else:
            if not 0 < self.band_lo_hz < self.band_hi_hz < 4000:
                raise ValueError("band must satisfy 0 < lo < hi < 4000 Hz")


def heart_spec(duration_s: float = 30.0, seed: int = 0, rate_hz: float = 1.2) -> SourceSpec:
    return SourceSpec("impulse_train_tone", rate_hz=rate_hz, duration_s=duration_s,
                      seed=seed)


def lung_spec(duration_s: float = 30.0, seed: int = 0, rate_hz: float = 0.25) -> SourceSpec:
    return SourceSpec("am_noise", rate_hz=rate_hz, duration_s=duration_s, seed=seed)


def _impulse_train_tone(spec: SourceSpec) -> np.ndarray:
    fs = spec.sample_rate
    n = int(round(spec.duration_s * fs))
    burst_len = min(int(round(5 * spec.decay_s * fs)), n)
    tau = np.arange(burst_len) / fs
    burst = np.exp(-tau / spec.decay_s) * np.sin(2 * np.pi * spec.carrier_hz * tau)
    out = np.zeros(n)
    period = fs / spec.rate_hz
    k = 0
    while True:
        start = int(round(k * period))
        if start >= n:
            break
        stop = min(start + burst_len, n)
        out[start:stop] += burst[:stop - start]
        k += 1
    return out


def _am_noise(spec: SourceSpec) -> np.ndarray:
    fs = spec.sample_rate
    n = int(round(spec.duration_s * fs))
    rng = np.random.default_rng(spec.seed)
    white = rng.standard_normal(n)
    sos = scipy.signal.butter(4, [spec.band_lo_hz, spec.band_hi_hz],
                              btype="band", fs=fs, output="sos")
    carrier = scipy.signal.sosfiltfilt(sos, white)
    t = np.arange(n) / fs
    envelope = 0.5 * (1.0 + np.sin(2 * np.pi * spec.rate_hz * t))
    return carrier * envelope


def generate(spec: SourceSpec) -> Waveform:
    """Render a surrogate source, peak-normalized to 0.8."""
    spec.validate()
    if spec.kind == "impulse_train_tone":
        x = _impulse_train_tone(spec)
    else:
        x = _am_noise(spec)
    peak = np.max(np.abs(x))
    if peak > 0:
        x = x * (PEAK_LEVEL / peak)
    return Waveform(x, spec.sample_rate)

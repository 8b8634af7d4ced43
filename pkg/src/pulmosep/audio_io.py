"""WAV reading/writing and resampling.

Everything downstream works on 8 kHz mono float signals in [-1, 1], so
``load_audio`` folds channels, resamples, and normalizes in one step.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from math import gcd

import numpy as np
import scipy.io.wavfile
import scipy.signal

DEFAULT_RATE = 8000


@dataclass
class Waveform:
    """Mono time-domain signal plus its sample rate in Hz."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ValueError("waveform samples must be 1-D")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if self.samples.size and not np.all(np.isfinite(self.samples)):
            raise ValueError("waveform contains non-finite samples")

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    def rms(self) -> float:
        return float(np.sqrt(np.mean(np.square(self.samples))))


def _to_float(data: np.ndarray) -> np.ndarray:
    """Scale integer PCM to [-1, 1]; pass float data through."""
    if data.dtype == np.int16:
        return data.astype(np.float64) / 32768.0
    if data.dtype == np.int32:
        # scipy returns 24-bit PCM left-justified in int32
        return data.astype(np.float64) / 2147483648.0
    if data.dtype == np.uint8:
        return (data.astype(np.float64) - 128.0) / 128.0
    if data.dtype in (np.float32, np.float64):
        return data.astype(np.float64)
    raise ValueError(f"unsupported WAV sample encoding: {data.dtype}")


def resample(samples: np.ndarray, src_rate: int, dst_rate: int,
             taps_per_phase: int = 32) -> np.ndarray:
    """Polyphase windowed-sinc rate conversion.

    A Hann-windowed sinc low-pass with ``taps_per_phase`` taps per
    polyphase branch is applied at the upsampled rate, so
    ``len(out) == ceil(len(in) * dst / src)``.
    """
    if src_rate <= 0 or dst_rate <= 0:
        raise ValueError("sample rates must be positive")
    samples = np.asarray(samples, dtype=np.float64)
    if src_rate == dst_rate:
        return samples.copy()
    g = gcd(src_rate, dst_rate)
    up, down = dst_rate // g, src_rate // g
    m = max(up, down)
    half = (taps_per_phase * m) // 2
    kernel = scipy.signal.firwin(2 * half + 1, 1.0 / m, window="hann")
    return scipy.signal.resample_poly(samples, up, down, window=kernel)


def load_audio(path, target_rate: int = DEFAULT_RATE) -> Waveform:
    """Read a PCM WAV file as mono ``target_rate`` samples.

    Multichannel input is averaged across channels. Peak normalization
    is applied only if the result exceeds full scale.
    """
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # scipy warns on unknown chunks
        try:
            rate, data = scipy.io.wavfile.read(path)
        except FileNotFoundError:
            raise
        except (ValueError, EOFError) as exc:
            raise ValueError(f"cannot read WAV file {path!r}: {exc}") from exc
    if data.size == 0:
        raise ValueError(f"zero-length audio in {path!r}")
    x = _to_float(data)
    if x.ndim == 2:
        x = x.mean(axis=1)
    if rate != target_rate:
        x = resample(x, rate, target_rate)
    peak = float(np.max(np.abs(x))) if x.size else 0.0
    if peak > 1.0:
        x = x / peak
    return Waveform(x, target_rate)


def save_audio(waveform: Waveform, path) -> None:
    """Write 16-bit PCM WAV; samples are clipped to [-1, 1) first."""
    if len(waveform) == 0:
        raise ValueError("refusing to write empty waveform")
    scaled = np.round(waveform.samples * 32768.0)
    pcm = np.clip(scaled, -32768, 32767).astype(np.int16)
    scipy.io.wavfile.write(path, waveform.sample_rate, pcm)

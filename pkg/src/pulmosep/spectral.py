"""STFT front-end and band-limited log-power features.

The analysis chain is ``stft -> to_lps``; synthesis goes back through
``from_masked -> istft``. Only the first ``BAND_BINS`` frequency bins
(0 to roughly 1170 Hz at the 8 kHz / 2048-point defaults) carry the
log-power feature; phase and the remaining high bins are kept alongside
so a masked magnitude can be turned back into audio.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio_io import Waveform

DEFAULT_FRAME_LEN = 2048
DEFAULT_HOP = 128
BAND_BINS = 301
LOG_FLOOR = 1e-12


def _hann(frame_len: int) -> np.ndarray:
    # periodic Hann, COLA-compliant for hop | frame_len
    n = np.arange(frame_len)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / frame_len)


@dataclass
class ComplexSpectrogram:
    """One-sided STFT frames, shape (n_frames, frame_len // 2 + 1)."""

    frames: np.ndarray
    frame_len: int
    hop: int
    window: str
    sample_rate: int

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def n_bins(self) -> int:
        return self.frames.shape[1]

    def covered_length(self) -> int:
        """Number of time samples spanned by the frames."""
        return self.frame_len + (self.n_frames - 1) * self.hop

    def bin_hz(self) -> np.ndarray:
        return np.arange(self.n_bins) * self.sample_rate / self.frame_len


@dataclass
class LpsBand:
    """Band-limited log-power features plus what is needed to resynthesize.

    ``lps`` is min-max normalized to [0, 1]; ``norm_lo``/``norm_hi`` undo
    that. ``phase`` and ``high_band`` keep the discarded information.
    """

    lps: np.ndarray
    phase: np.ndarray
    high_band: np.ndarray
    norm_lo: float
    norm_hi: float
    frame_len: int
    hop: int
    window: str
    sample_rate: int

    @property
    def n_frames(self) -> int:
        return self.lps.shape[0]

    @property
    def n_band_bins(self) -> int:
        return self.lps.shape[1]

    @property
    def frame_rate(self) -> float:
        return self.sample_rate / self.hop

    def raw_lps(self, normalized: np.ndarray | None = None) -> np.ndarray:
        """Undo the min-max normalization (defaults to own features)."""
        if normalized is None:
            normalized = self.lps
        return normalized * (self.norm_hi - self.norm_lo) + self.norm_lo

    def band_magnitude(self, normalized: np.ndarray | None = None) -> np.ndarray:
        """Linear magnitude implied by (normalized) log-power features."""
        return np.exp(0.5 * self.raw_lps(normalized))


def stft(waveform: Waveform, frame_len: int = DEFAULT_FRAME_LEN,
         hop: int = DEFAULT_HOP) -> ComplexSpectrogram:
    """Hann-windowed one-sided STFT with no padding.

    Produces ``floor((len - frame_len) / hop) + 1`` frames; trailing
    samples that do not fill a frame are ignored.
    """
    x = waveform.samples
    if len(x) < frame_len:
        raise ValueError(
            f"signal of {len(x)} samples is shorter than one {frame_len}-sample frame")
    n_frames = (len(x) - frame_len) // hop + 1
    win = _hann(frame_len)
    idx = np.arange(frame_len)[None, :] + hop * np.arange(n_frames)[:, None]
    frames = np.fft.rfft(x[idx] * win[None, :], axis=1)
    return ComplexSpectrogram(frames, frame_len, hop, "hann", waveform.sample_rate)


def istft(spec: ComplexSpectrogram) -> Waveform:
    """Weighted overlap-add inverse with window-energy normalization.

    Output has ``spec.covered_length()`` samples; the interior matches the
    analyzed signal to numerical precision, edges are attenuated where the
    window sum has no full support. The normalizer is floored at a tenth
    of its interior value: dividing by a vanishing window sum would blow
    up out-of-window leakage when frames hold a modified (inconsistent)
    spectrum, as masked spectrograms do.
    """
    frame_len, hop = spec.frame_len, spec.hop
    win = _hann(frame_len)
    frames = np.fft.irfft(spec.frames, n=frame_len, axis=1) * win[None, :]
    out_len = spec.covered_length()
    out = np.zeros(out_len)
    wsum = np.zeros(out_len)
    for n in range(spec.n_frames):
        start = n * hop
        out[start:start + frame_len] += frames[n]
        wsum[start:start + frame_len] += win * win
    out /= np.maximum(wsum, 0.1 * wsum.max())
    return Waveform(out, spec.sample_rate)


def to_lps(spec: ComplexSpectrogram, band_bins: int = BAND_BINS) -> LpsBand:
    """Convert the low band to normalized log-power features.

    Natural-log power with an additive floor avoids -inf on silent bins;
    the per-recording min and max are stored for exact denormalization.
    A flat spectrogram normalizes to all zeros instead of dividing by 0.
    """
    if spec.n_bins < band_bins:
        raise ValueError(f"need at least {band_bins} bins, got {spec.n_bins}")
    band = spec.frames[:, :band_bins]
    lps = np.log(np.abs(band) ** 2 + LOG_FLOOR)
    lo, hi = float(lps.min()), float(lps.max())
    if hi <= lo:
        hi = lo + 1.0
    return LpsBand(
        lps=(lps - lo) / (hi - lo),
        phase=np.angle(band),
        high_band=spec.frames[:, band_bins:].copy(),
        norm_lo=lo,
        norm_hi=hi,
        frame_len=spec.frame_len,
        hop=spec.hop,
        window=spec.window,
        sample_rate=spec.sample_rate,
    )


def from_masked(band: LpsBand, masked_magnitude: np.ndarray,
                high_band: str = "zero") -> ComplexSpectrogram:
    """Rebuild a full spectrogram from band magnitudes and stored phase.

    ``high_band`` selects what goes above the feature band: ``"zero"``
    silences it, ``"mixture"`` passes the original bins through.
    """
    masked_magnitude = np.asarray(masked_magnitude, dtype=np.float64)
    if masked_magnitude.shape != band.lps.shape:
        raise ValueError(
            f"mask shape {masked_magnitude.shape} != band shape {band.lps.shape}")
    if np.any(masked_magnitude < 0) or not np.all(np.isfinite(masked_magnitude)):
        raise ValueError("masked magnitude must be finite and nonnegative")
    if high_band not in ("zero", "mixture"):
        raise ValueError(f"unknown high_band policy {high_band!r}")
    n_bins = band.frame_len // 2 + 1
    frames = np.zeros((band.n_frames, n_bins), dtype=np.complex128)
    frames[:, :band.n_band_bins] = masked_magnitude * np.exp(1j * band.phase)
    if high_band == "mixture":
        frames[:, band.n_band_bins:] = band.high_band
    return ComplexSpectrogram(frames, band.frame_len, band.hop, band.window,
                              band.sample_rate)

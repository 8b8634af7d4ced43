"""Controlled-SNR mixing and SDR/SIR/SAR scoring.

The decomposition projects an estimate onto the target reference (gain
only, zero lag), then onto the competing reference after Gram-Schmidt;
whatever remains is artifact. There is no perturbation-noise reference
in this setup, so that term is identically zero. Scalar projections
make every score exactly testable and scale-invariant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio_io import Waveform

SCORE_CAP_DB = 200.0
_COLLINEAR_TOL = 1e-12


@dataclass
class BssDecomposition:
    """estimate == s_target + e_interf + e_artif (e_noise is zero here)."""

    s_target: np.ndarray
    e_interf: np.ndarray
    e_artif: np.ndarray


@dataclass
class BssScores:
    sdr: float
    sir: float
    sar: float


def mix_at_snr(target: Waveform, noise: Waveform, snr_db: float):
    """Scale ``noise`` against ``target`` to hit ``snr_db`` and sum them.

    Longer noise is truncated; shorter noise is an error (looping would
    fabricate periodicity). If the mixture clips, all three returned
    signals are rescaled together so relative levels are preserved.
    Returns (mixture, scaled_target, scaled_noise).
    """
    if target.sample_rate != noise.sample_rate:
        raise ValueError("target and noise sample rates differ")
    if len(noise) < len(target):
        raise ValueError("noise is shorter than target")
    t = target.samples
    n = noise.samples[:len(target)]
    rms_t = np.sqrt(np.mean(t ** 2))
    rms_n = np.sqrt(np.mean(n ** 2))
    if rms_t == 0 or rms_n == 0:
        raise ValueError("cannot mix silent signals")
    gain = (rms_t / rms_n) * 10.0 ** (-snr_db / 20.0)
    n = gain * n
    mix = t + n
    peak = np.max(np.abs(mix))
    if peak > 1.0:
        t, n, mix = t / peak, n / peak, mix / peak
    rate = target.sample_rate
    return Waveform(mix, rate), Waveform(t.copy(), rate), Waveform(n, rate)


def achieved_snr_db(target: Waveform, noise: Waveform) -> float:
    pt = np.sum(target.samples ** 2)
    pn = np.sum(noise.samples ** 2)
    return 10.0 * np.log10(pt / pn)


def bss_decompose(estimate: Waveform, refs, which: int) -> BssDecomposition:
    """Split an estimate into target, interference, and artifact parts."""
    if len(refs) != 2:
        raise ValueError("exactly two references required")
    e = estimate.samples
    s = refs[which].samples
    o = refs[1 - which].samples
    if not (e.shape == s.shape == o.shape):
        raise ValueError("estimate and references must share one length")
    s_energy = float(s @ s)
    if s_energy == 0:
        raise ValueError("zero-energy reference")
    s_target = (float(e @ s) / s_energy) * s
    o_perp = o - (float(o @ s) / s_energy) * s
    op_energy = float(o_perp @ o_perp)
    if op_energy > _COLLINEAR_TOL * float(o @ o):
        resid = e - s_target
        e_interf = (float(resid @ o_perp) / op_energy) * o_perp
    else:
        e_interf = np.zeros_like(e)
    e_artif = e - s_target - e_interf
    return BssDecomposition(s_target=s_target, e_interf=e_interf, e_artif=e_artif)


def _ratio_db(num: float, den: float) -> float:
    if den <= 0.0:
        return SCORE_CAP_DB
    if num <= 0.0:
        return -SCORE_CAP_DB
    return float(np.clip(10.0 * np.log10(num / den), -SCORE_CAP_DB, SCORE_CAP_DB))


def score(decomp: BssDecomposition) -> BssScores:
    """SDR/SIR/SAR in dB, capped at +-200 on degenerate denominators."""
    st = float(decomp.s_target @ decomp.s_target)
    ei = float(decomp.e_interf @ decomp.e_interf)
    distortion = decomp.e_interf + decomp.e_artif
    ea = float(decomp.e_artif @ decomp.e_artif)
    wanted = decomp.s_target + decomp.e_interf
    return BssScores(
        sdr=_ratio_db(st, float(distortion @ distortion)),
        sir=_ratio_db(st, ei),
        sar=_ratio_db(float(wanted @ wanted), ea),
    )


def score_estimate(estimate: Waveform, refs, which: int) -> BssScores:
    return score(bss_decompose(estimate, refs, which))


def evaluate_pair(est_a: Waveform, est_b: Waveform, ref_a: Waveform,
                  ref_b: Waveform):
    """Score two estimates against two references, resolving their order.

    Both pairings are tried; the one with the larger summed SDR wins.
    Returns (scores_for_ref_a, scores_for_ref_b, swapped).
    """
    refs = [ref_a, ref_b]
    direct = (score_estimate(est_a, refs, 0), score_estimate(est_b, refs, 1))
    crossed = (score_estimate(est_b, refs, 0), score_estimate(est_a, refs, 1))
    if direct[0].sdr + direct[1].sdr >= crossed[0].sdr + crossed[1].sdr:
        return direct[0], direct[1], False
    return crossed[0], crossed[1], True

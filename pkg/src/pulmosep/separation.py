"""Blind two-source separation of a monaural mixture.

The main path trains an autoencoder on the mixture's own log-power
frames, reads each latent unit's activation trajectory across frames,
and groups units by the periodicity of those trajectories (their
magnitude DFT): fast-modulating units belong to the heartbeat, slow
ones to respiration. Deactivating one group at a time and decoding
yields the two sources, either directly or through complementary ratio
masks.

Baselines swap parts of that recipe: ``dc-dae`` clusters the raw
trajectories (no modulation transform); ``dc-nmf`` / ``pc-nmf`` replace
the autoencoder with a rank-20 NMF of the magnitude spectrogram and
cluster its activation rows (raw, or modulation-transformed).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio_io import Waveform
from .config import RunConfig
from .nmf import (SHARED, ClusterAssignment, assign_cluster_roles, nmf,
                  rank_clusters_by_modulation, sparse_nmf_cluster)
from .nn import build_dae_c, build_dae_f, train
from .spectral import LpsBand, from_masked, istft, stft, to_lps

TRAIN_DTYPE = np.float32  # pipeline-internal; checkpoints stay float64
EPS_MASK = 1e-12
FACTOR_SEED = 17  # every factorization init uses this fixed seed
MIN_DURATION_S = 3.0
DAE_VARIANT_OF = {"pc-dae-c": "C", "pc-dae-f": "F", "dc-dae": "C"}


@dataclass
class LatentMatrix:
    """Row j = one latent unit's activation across all frames."""

    matrix: np.ndarray
    frame_rate_hz: float
    model_ref: str

    @property
    def n_units(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_frames(self) -> int:
        return self.matrix.shape[1]


@dataclass
class PeriodicCodeMatrix:
    """Per-unit modulation-magnitude spectra with their Hz axis."""

    matrix: np.ndarray
    freqs_hz: np.ndarray


@dataclass
class SeparationResult:
    heart: Waveform
    lung: Waveform
    masks: tuple | None
    assignment: ClusterAssignment
    method: str
    intermediates: dict | None = None


def latent_trajectories(model, band: LpsBand) -> LatentMatrix:
    """Encode every frame and transpose: units become rows."""
    latent = model.encode(band.lps.astype(model.dtype))
    return LatentMatrix(matrix=np.asarray(latent, dtype=np.float64).T,
                        frame_rate_hz=band.frame_rate,
                        model_ref=f"dae-seed{model.seed}")


def mfa(traj: LatentMatrix) -> PeriodicCodeMatrix:
    """Row-wise magnitude DFT of the trajectories, DC bin zeroed.

    Column d corresponds to d * frame_rate / n_frames Hz. The DC bin
    only reflects mean activation level, which says nothing about which
    source drives a unit, so it is removed before clustering.
    """
    n = traj.n_frames
    if n < 8:
        raise ValueError("modulation analysis needs at least 8 frames")
    p = np.abs(np.fft.rfft(traj.matrix, axis=1))
    p[:, 0] = 0.0
    freqs = np.arange(p.shape[1]) * traj.frame_rate_hz / n
    return PeriodicCodeMatrix(matrix=p, freqs_hz=freqs)


def group_by_modulation(pcm: PeriodicCodeMatrix, lam: float = 0.1,
                        seed: int = FACTOR_SEED) -> ClusterAssignment:
    """Cluster modulation spectra into two groups and name their roles."""
    assignment = sparse_nmf_cluster(pcm.matrix, k=2, lam=lam, seed=seed)
    return assign_cluster_roles(pcm.matrix, pcm.freqs_hz, assignment)


def pc_group(traj: LatentMatrix, lam: float = 0.1,
             seed: int = FACTOR_SEED) -> ClusterAssignment:
    """Periodicity-based unit grouping: mfa, cluster, assign roles."""
    return group_by_modulation(mfa(traj), lam=lam, seed=seed)


def dc_group(traj: LatentMatrix, lam: float = 0.1,
             seed: int = FACTOR_SEED) -> ClusterAssignment:
    """Direct clustering of row-normalized trajectories (no modulation
    transform); roles are still named from the modulation spectra since
    nothing else distinguishes heart from lung."""
    norms = np.linalg.norm(traj.matrix, axis=1, keepdims=True)
    normalized = traj.matrix / np.where(norms > 0, norms, 1.0)
    assignment = sparse_nmf_cluster(normalized, k=2, lam=lam, seed=seed)
    pcm = mfa(traj)
    return assign_cluster_roles(pcm.matrix, pcm.freqs_hz, assignment)


def deactivate(traj: LatentMatrix, assignment: ClusterAssignment,
               target: str) -> LatentMatrix:
    """Flatten every unit not serving ``target`` to its own minimum.

    Rows labeled with the target's cluster or SHARED pass through
    bit-identically; every other row becomes a constant trajectory at
    that row's minimum activation.
    """
    labels = assignment.labels
    if labels.shape[0] != traj.n_units:
        raise ValueError("assignment does not cover all latent units")
    known = np.isin(labels, (0, 1, SHARED))
    if not np.all(known):
        raise ValueError(f"unknown labels present: {np.unique(labels[~known])}")
    keep_cluster = assignment.cluster_of(target)
    out = traj.matrix.copy()
    off = (labels != keep_cluster) & (labels != SHARED)
    if np.any(off):
        out[off] = out[off].min(axis=1, keepdims=True)
    return LatentMatrix(matrix=out, frame_rate_hz=traj.frame_rate_hz,
                        model_ref=traj.model_ref)


def decode_lps(model, band: LpsBand, traj: LatentMatrix) -> np.ndarray:
    """Decode latent columns back to denormalized log-power frames."""
    decoded = model.decode(traj.matrix.T.astype(model.dtype))
    return band.raw_lps(np.asarray(decoded, dtype=np.float64))


def reconstruct_direct(model, band: LpsBand, traj_heart: LatentMatrix,
                       traj_lung: LatentMatrix):
    """Decode each deactivated latent matrix into its own LPS estimate."""
    return (decode_lps(model, band, traj_heart),
            decode_lps(model, band, traj_lung))


def ratio_masks(mag_heart: np.ndarray, mag_lung: np.ndarray):
    """Complementary ratio masks; silent bins split 0.5 / 0.5."""
    den = mag_heart + mag_lung + EPS_MASK
    return ((mag_heart + 0.5 * EPS_MASK) / den,
            (mag_lung + 0.5 * EPS_MASK) / den)


def reconstruct_mask(model, band: LpsBand, traj_heart: LatentMatrix,
                     traj_lung: LatentMatrix, traj_mix: LatentMatrix,
                     mask_base: str = "mixture", high_band: str = "zero"):
    """Mask-mode reconstruction: ratio masks from the two decoded sources.

    ``mask_base`` picks what the masks multiply: the original mixture
    band magnitude (default) or the decoded mixture reconstruction.
    Returns (heart Waveform, lung Waveform, (mask_heart, mask_lung)).
    """
    mag_h = np.exp(0.5 * decode_lps(model, band, traj_heart))
    mag_l = np.exp(0.5 * decode_lps(model, band, traj_lung))
    m_h, m_l = ratio_masks(mag_h, mag_l)
    if mask_base == "mixture":
        base = band.band_magnitude()
    elif mask_base == "reconstruction":
        base = np.exp(0.5 * decode_lps(model, band, traj_mix))
    else:
        raise ValueError(f"unknown mask_base {mask_base!r}")
    heart = istft(from_masked(band, m_h * base, high_band))
    lung = istft(from_masked(band, m_l * base, high_band))
    return heart, lung, (m_h, m_l)


def pca_scatter(traj) -> np.ndarray:
    """Project unit trajectories (rows) onto their top-2 principal axes."""
    x = np.asarray(getattr(traj, "matrix", traj), dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("need at least 2 rows for a 2-D projection")
    centered = x - x.mean(axis=0)
    u, s, _ = np.linalg.svd(centered, full_matrices=False)
    coords = np.zeros((x.shape[0], 2))
    k = min(2, s.size)
    coords[:, :k] = u[:, :k] * s[:k]
    return coords


# ---------------------------------------------------------------------------
# NMF-based baselines


def nmf_source_magnitudes(v: np.ndarray, frame_rate: float, cfg: RunConfig,
                          use_mfa: bool, seed: int = FACTOR_SEED,
                          factors=None):
    """Separate a nonnegative (bins, frames) matrix with clustered NMF.

    Factorizes V ~ W H (or reuses ``factors``), clusters the activation
    rows of H (their modulation spectra when ``use_mfa``, else the
    L2-normalized rows), names roles by the periodicity of each group's
    summed activation, and rebuilds each source from its group's
    factors. SHARED rows contribute to both sources. Returns
    (heart_mag, lung_mag, assignment, factors).
    """
    if factors is None:
        factors = nmf(v, rank=cfg.nmf_rank, iters=cfg.nmf_iters, seed=seed)
    h = factors.h
    n = h.shape[1]
    if use_mfa:
        feats = np.abs(np.fft.rfft(h, axis=1))
        feats[:, 0] = 0.0
    else:
        norms = np.linalg.norm(h, axis=1, keepdims=True)
        feats = h / np.where(norms > 0, norms, 1.0)
    assignment = sparse_nmf_cluster(feats, k=2, lam=cfg.lambda_sparsity, seed=seed)
    freqs = np.arange(n // 2 + 1) * frame_rate / n
    group_spectra = []
    for cluster in (0, 1):
        summed = h[assignment.members(cluster)].sum(axis=0)
        group_spectra.append(np.abs(np.fft.rfft(summed)))
    heart, centroids = rank_clusters_by_modulation(group_spectra[0],
                                                   group_spectra[1], freqs)
    assignment = ClusterAssignment(labels=assignment.labels,
                                   heart_cluster=heart, centroid_hz=centroids)
    shared = assignment.members(SHARED)
    recon = {}
    for cluster in (0, 1):
        rows = np.concatenate([assignment.members(cluster), shared])
        recon[cluster] = factors.w[:, rows] @ h[rows]
    return recon[heart], recon[1 - heart], assignment, factors


# ---------------------------------------------------------------------------
# Full pipelines


def _analyze(mixture: Waveform, cfg: RunConfig) -> LpsBand:
    if mixture.duration < MIN_DURATION_S:
        raise ValueError(
            f"mixture must be at least {MIN_DURATION_S:.0f} s for modulation analysis")
    return to_lps(stft(mixture, cfg.frame_len, cfg.hop), cfg.band_hi + 1)


def _train_dae(band: LpsBand, variant: str, cfg: RunConfig):
    builder = build_dae_c if variant == "C" else build_dae_f
    model = builder(input_dim=band.n_band_bins, seed=cfg.seed, dtype=TRAIN_DTYPE)
    return train(model, band.lps, epochs=cfg.epochs, lr=cfg.lr,
                 batch_size=cfg.batch)


def _finalize_direct(band, lps_heart, lps_lung, assignment, method, cfg,
                     intermediates):
    heart = istft(from_masked(band, np.exp(0.5 * lps_heart), cfg.high_band))
    lung = istft(from_masked(band, np.exp(0.5 * lps_lung), cfg.high_band))
    return SeparationResult(heart=heart, lung=lung, masks=None,
                            assignment=assignment, method=method,
                            intermediates=intermediates)


def _dae_results(model, band, cfg, clustering: str, method: str,
                 both_modes: bool, keep: bool) -> dict:
    traj = latent_trajectories(model, band)
    grouper = pc_group if clustering == "pc" else dc_group
    assignment = grouper(traj, lam=cfg.lambda_sparsity, seed=FACTOR_SEED)
    z_heart = deactivate(traj, assignment, "heart")
    z_lung = deactivate(traj, assignment, "lung")

    intermediates = None
    if keep:
        intermediates = {
            "band": band,
            "model": model,
            "trajectories": traj,
            "mod_spectra": mfa(traj),
            "deactivated_heart": z_heart,
            "deactivated_lung": z_lung,
        }

    def one_mode(mode: str) -> SeparationResult:
        if mode == "mask":
            heart, lung, masks = reconstruct_mask(
                model, band, z_heart, z_lung, traj,
                mask_base=cfg.mask_base, high_band=cfg.high_band)
            return SeparationResult(heart=heart, lung=lung, masks=masks,
                                    assignment=assignment, method=method,
                                    intermediates=intermediates)
        lps_h, lps_l = reconstruct_direct(model, band, z_heart, z_lung)
        return _finalize_direct(band, lps_h, lps_l, assignment, method, cfg,
                                intermediates)

    out = {method: one_mode(cfg.mask_mode)}
    if both_modes:
        other = "direct" if cfg.mask_mode == "mask" else "mask"
        out[f"{method}/{other}"] = one_mode(other)
    return out


def _nmf_results(band, cfg, use_mfa: bool, method: str, both_modes: bool,
                 keep: bool, factors_cache: dict) -> dict:
    v = band.band_magnitude().T  # (bins, frames)
    mag_h, mag_l, assignment, factors = nmf_source_magnitudes(
        v, band.frame_rate, cfg, use_mfa=use_mfa,
        factors=factors_cache.get("factors"))
    factors_cache["factors"] = factors
    masks = ratio_masks(mag_h.T, mag_l.T)  # (frames, bins)
    intermediates = None
    if keep:
        traj = LatentMatrix(matrix=factors.h.copy(),
                            frame_rate_hz=band.frame_rate,
                            model_ref=f"nmf-rank{cfg.nmf_rank}")
        intermediates = {
            "band": band,
            "nmf_factors": factors,
            "trajectories": traj,
            "mod_spectra": mfa(traj),
        }

    def one_mode(mode: str) -> SeparationResult:
        if mode == "mask":
            est_h = masks[0] * band.band_magnitude()
            est_l = masks[1] * band.band_magnitude()
            heart = istft(from_masked(band, est_h, cfg.high_band))
            lung = istft(from_masked(band, est_l, cfg.high_band))
            return SeparationResult(heart=heart, lung=lung, masks=masks,
                                    assignment=assignment, method=method,
                                    intermediates=intermediates)
        heart = istft(from_masked(band, mag_h.T, cfg.high_band))
        lung = istft(from_masked(band, mag_l.T, cfg.high_band))
        return SeparationResult(heart=heart, lung=lung, masks=None,
                                assignment=assignment, method=method,
                                intermediates=intermediates)

    out = {method: one_mode(cfg.mask_mode)}
    if both_modes:
        other = "direct" if cfg.mask_mode == "mask" else "mask"
        out[f"{method}/{other}"] = one_mode(other)
    return out


def separate_all(mixture: Waveform, config: RunConfig | None = None,
                 methods=("pc-dae-c",), both_modes: bool = False,
                 keep_intermediates: bool = False) -> dict:
    """Run several methods on one mixture, sharing heavy intermediates.

    Methods that rely on the same trained model (pc-dae-c and dc-dae) or
    the same factorization (pc-nmf and dc-nmf) compute it once; results
    are bit-identical to running each method alone with the same config.
    Returns {method: SeparationResult}, plus "<method>/<other-mode>"
    entries when ``both_modes`` is set.
    """
    cfg = (config or RunConfig()).validate()
    band = _analyze(mixture, cfg)
    results: dict = {}
    models: dict = {}
    for method in methods:
        if method in DAE_VARIANT_OF:
            variant = DAE_VARIANT_OF[method]
            if variant not in models:
                models[variant] = _train_dae(band, variant, cfg)
    factors_cache: dict = {}
    for method in methods:
        if method in DAE_VARIANT_OF:
            clustering = "dc" if method == "dc-dae" else "pc"
            results.update(_dae_results(models[DAE_VARIANT_OF[method]], band,
                                        cfg, clustering, method, both_modes,
                                        keep_intermediates))
        elif method in ("dc-nmf", "pc-nmf"):
            results.update(_nmf_results(band, cfg, use_mfa=(method == "pc-nmf"),
                                        method=method, both_modes=both_modes,
                                        keep=keep_intermediates,
                                        factors_cache=factors_cache))
        else:
            raise ValueError(f"unknown separation method {method!r}")
    return results


def separate_pcdae(mixture: Waveform, variant: str = "C",
                   config: RunConfig | None = None,
                   keep_intermediates: bool = False) -> SeparationResult:
    """Periodicity-grouped autoencoder separation (the default method)."""
    if variant not in ("C", "F"):
        raise ValueError("variant must be 'C' or 'F'")
    method = "pc-dae-c" if variant == "C" else "pc-dae-f"
    return separate_all(mixture, config, methods=(method,),
                        keep_intermediates=keep_intermediates)[method]


def separate_dc_dae(mixture: Waveform, config: RunConfig | None = None,
                    keep_intermediates: bool = False) -> SeparationResult:
    """Deep-clustering baseline: cluster trajectories without the
    modulation transform."""
    return separate_all(mixture, config, methods=("dc-dae",),
                        keep_intermediates=keep_intermediates)["dc-dae"]


def separate_dc_nmf(mixture: Waveform, config: RunConfig | None = None,
                    keep_intermediates: bool = False) -> SeparationResult:
    """NMF baseline clustering raw activation rows."""
    return separate_all(mixture, config, methods=("dc-nmf",),
                        keep_intermediates=keep_intermediates)["dc-nmf"]


def separate_pc_nmf(mixture: Waveform, config: RunConfig | None = None,
                    keep_intermediates: bool = False) -> SeparationResult:
    """NMF baseline clustering activation rows by their periodicity."""
    return separate_all(mixture, config, methods=("pc-nmf",),
                        keep_intermediates=keep_intermediates)["pc-nmf"]


def separate(mixture: Waveform, config: RunConfig | None = None,
             keep_intermediates: bool = False) -> SeparationResult:
    """Dispatch on ``config.method``."""
    cfg = (config or RunConfig()).validate()
    return separate_all(mixture, cfg, methods=(cfg.method,),
                        keep_intermediates=keep_intermediates)[cfg.method]

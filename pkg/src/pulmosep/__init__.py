"""Blind monaural separation of mixed heart and lung sounds.

A numpy/scipy library built around one idea: an autoencoder trained on
a mixture's own spectral frames develops latent units whose activation
trajectories inherit the periodicity of whichever source drives them.
Grouping units by the modulation frequency of those trajectories splits
the latent space into a fast (heartbeat) and a slow (respiration) part,
and decoding each part separates the mixture. NMF and direct-clustering
baselines plus SDR/SIR/SAR scoring make the methods comparable.
"""

from .audio_io import DEFAULT_RATE, Waveform, load_audio, resample, save_audio
from .config import METHODS, RunConfig, build_config
from .evaluation import (BssDecomposition, BssScores, achieved_snr_db,
                         bss_decompose, evaluate_pair, mix_at_snr, score,
                         score_estimate)
from .nmf import (SHARED, ClusterAssignment, NmfFactors, assign_cluster_roles,
                  nmf, sparse_nmf_cluster, spectral_centroid)
from .nn import (DaeModel, LayerSpec, build_dae_c, build_dae_f, gradient_check,
                 load_model, save_model, train)
from .separation import (LatentMatrix, PeriodicCodeMatrix, SeparationResult,
                         dc_group, deactivate, latent_trajectories, mfa,
                         nmf_source_magnitudes, pc_group, pca_scatter,
                         ratio_masks, reconstruct_direct, reconstruct_mask,
                         separate, separate_all, separate_dc_dae,
                         separate_dc_nmf, separate_pc_nmf, separate_pcdae)
from .spectral import (ComplexSpectrogram, LpsBand, from_masked, istft, stft,
                       to_lps)
from .synthetic import SourceSpec, generate, heart_spec, lung_spec

__version__ = "0.1.0"

"""Nonnegative matrix factorization and NMF-based 2-way clustering.

``nmf`` is the plain Lee-Seung multiplicative-update factorization used
as a separation baseline. ``sparse_nmf_cluster`` factorizes the
transposed feature matrix with an L1 penalty on the memberships and
labels each row by its strongest membership; it is the clustering
engine behind every periodicity-grouped method here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

EPS_MU = 1e-12
SHARED = -1


@dataclass
class NmfFactors:
    """Factor pair V ~ W @ H with the per-iteration objective history."""

    w: np.ndarray
    h: np.ndarray
    rank: int
    loss_history: list


@dataclass
class ClusterAssignment:
    """Per-row cluster labels; ``SHARED`` (-1) marks uninformative rows.

    ``heart_cluster`` names the cluster whose modulation content sits at
    higher frequency; it stays None until roles are assigned.
    """

    labels: np.ndarray
    heart_cluster: int | None = None
    centroid_hz: tuple | None = None

    def members(self, cluster: int) -> np.ndarray:
        return np.flatnonzero(self.labels == cluster)

    def cluster_sizes(self) -> tuple:
        return (int(np.sum(self.labels == 0)), int(np.sum(self.labels == 1)),
                int(np.sum(self.labels == SHARED)))

    def cluster_of(self, role: str) -> int:
        if self.heart_cluster is None:
            raise ValueError("cluster roles have not been assigned")
        if role == "heart":
            return self.heart_cluster
        if role == "lung":
            return 1 - self.heart_cluster
        raise ValueError(f"unknown role {role!r}")

    def role_names(self) -> list:
        """Per-row role strings: heart / lung / shared."""
        if self.heart_cluster is None:
            raise ValueError("cluster roles have not been assigned")
        out = []
        for lab in self.labels:
            if lab == SHARED:
                out.append("shared")
            else:
                out.append("heart" if lab == self.heart_cluster else "lung")
        return out


def _check_nonnegative(v: np.ndarray, name: str) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} must be finite")
    if np.any(v < 0):
        raise ValueError(f"{name} must be nonnegative")
    return v


def nmf(v: np.ndarray, rank: int = 20, iters: int = 200, seed: int = 17,
        tol: float = 1e-6) -> NmfFactors:
    """Frobenius-norm NMF by multiplicative updates.

    Random nonnegative init scaled to the data magnitude; stops after
    ``iters`` rounds or when the relative objective improvement falls
    below ``tol``. The objective never increases.
    """
    v = _check_nonnegative(v, "V")
    f, n = v.shape
    if not 1 <= rank <= min(f, n):
        raise ValueError(f"rank {rank} out of range for {f}x{n} matrix")
    rng = np.random.default_rng(seed)
    scale = np.sqrt(max(v.mean(), EPS_MU) / rank)
    w = rng.random((f, rank)) * scale + EPS_MU
    h = rng.random((rank, n)) * scale + EPS_MU
    history = []
    prev = np.inf
    for _ in range(iters):
        h *= (w.T @ v) / (w.T @ w @ h + EPS_MU)
        w *= (v @ h.T) / (w @ (h @ h.T) + EPS_MU)
        loss = float(np.sum((v - w @ h) ** 2))
        history.append(loss)
        if prev - loss < tol * max(1.0, prev):
            break
        prev = loss
    return NmfFactors(w=w, h=h, rank=rank, loss_history=history)


def sparse_nmf_cluster(p: np.ndarray, k: int = 2, lam: float = 0.1,
                       iters: int = 500, seed: int = 17,
                       tol: float = 1e-6) -> ClusterAssignment:
    """Cluster the rows of a nonnegative matrix via sparse NMF.

    Minimizes ``|Q - W H|_F^2 + lam * sum(H)`` over nonnegative factors,
    where Q is the transposed, Frobenius-normalized row matrix, then
    labels row j by the largest entry of membership column h_j (ties go
    to the lower cluster index). Rows with zero variance are labeled
    ``SHARED`` and never enter the factorization. The membership init is
    ``W^T Q``, which makes labels equivariant under row permutation.
    """
    p = _check_nonnegative(p, "P")
    if p.ndim != 2:
        raise ValueError("P must be 2-D")
    informative = p.var(axis=1) > 0
    n_inf = int(informative.sum())
    if k > n_inf:
        raise ValueError(f"cannot form {k} clusters from {n_inf} informative rows")
    q = p[informative].T
    q = q / np.linalg.norm(q)
    rng = np.random.default_rng(seed)
    w = rng.random((q.shape[0], k)) + 0.1
    h = w.T @ q
    prev = np.inf
    for _ in range(iters):
        h *= (w.T @ q) / (w.T @ w @ h + lam + EPS_MU)
        w *= (q @ h.T) / (w @ (h @ h.T) + EPS_MU)
        loss = float(np.sum((q - w @ h) ** 2) + lam * h.sum())
        if prev - loss < tol * max(1.0, prev):
            break
        prev = loss
    member = np.argmax(h, axis=0)
    member = _fill_empty_clusters(member, h, k)
    labels = np.full(p.shape[0], SHARED, dtype=np.int64)
    labels[informative] = member
    return ClusterAssignment(labels=labels)


def _fill_empty_clusters(member: np.ndarray, h: np.ndarray, k: int) -> np.ndarray:
    """Steal the best-ratio row for any cluster argmax left empty."""
    member = member.copy()
    for c in range(k):
        if np.any(member == c):
            continue
        ratio = (h[c] + EPS_MU) / (h.sum(axis=0) - h[c] + EPS_MU)
        counts = np.bincount(member, minlength=k)
        movable = counts[member] > 1
        if not np.any(movable):
            continue
        candidates = np.where(movable, ratio, -np.inf)
        member[int(np.argmax(candidates))] = c
    return member


def spectral_centroid(spectrum: np.ndarray, freqs_hz: np.ndarray) -> float:
    """Energy-weighted mean frequency, ignoring the DC bin."""
    s = np.asarray(spectrum, dtype=np.float64)[1:]
    f = np.asarray(freqs_hz, dtype=np.float64)[1:]
    total = s.sum()
    if total <= 0:
        return 0.0
    return float((s * f).sum() / total)


def _peak_hz(spectrum: np.ndarray, freqs_hz: np.ndarray) -> float:
    s = np.asarray(spectrum, dtype=np.float64)[1:]
    if s.size == 0:
        return 0.0
    return float(np.asarray(freqs_hz)[1:][int(np.argmax(s))])


def rank_clusters_by_modulation(spec0: np.ndarray, spec1: np.ndarray,
                                freqs_hz: np.ndarray):
    """Pick the higher-modulation-frequency cluster (the heart side).

    Compares spectral centroids; falls back to the peak frequency on a
    centroid tie, then to cluster 0.
    """
    c0 = spectral_centroid(spec0, freqs_hz)
    c1 = spectral_centroid(spec1, freqs_hz)
    if c0 != c1:
        heart = 0 if c0 > c1 else 1
    else:
        p0, p1 = _peak_hz(spec0, freqs_hz), _peak_hz(spec1, freqs_hz)
        heart = 0 if p0 >= p1 else 1
    return heart, (c0, c1)


def assign_cluster_roles(spectra: np.ndarray, freqs_hz: np.ndarray,
                         assignment: ClusterAssignment) -> ClusterAssignment:
    """Name heart/lung clusters from per-row modulation spectra.

    Each cluster's mean spectrum is reduced to its spectral centroid;
    the higher-centroid cluster is the heart (faster-beating) source.
    """
    idx0, idx1 = assignment.members(0), assignment.members(1)
    if idx0.size == 0 or idx1.size == 0:
        raise ValueError("role assignment needs two nonempty clusters")
    spectra = np.asarray(spectra, dtype=np.float64)
    heart, centroids = rank_clusters_by_modulation(
        spectra[idx0].mean(axis=0), spectra[idx1].mean(axis=0), freqs_hz)
    return ClusterAssignment(labels=assignment.labels.copy(),
                             heart_cluster=heart, centroid_hz=centroids)

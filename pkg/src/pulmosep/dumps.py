"""CSV and PGM export helpers for inspection artifacts."""

from __future__ import annotations

import numpy as np

from .spectral import ComplexSpectrogram


def save_matrix_csv(path, matrix: np.ndarray, header=None) -> None:
    """Write a 2-D matrix as CSV, one row per line, '.' decimals."""
    matrix = np.atleast_2d(np.asarray(matrix))
    with open(path, "w", encoding="utf-8") as fh:
        if header is not None:
            fh.write(",".join(header) + "\n")
        for row in matrix:
            fh.write(",".join(f"{v:.10g}" for v in row) + "\n")


def save_labels_csv(path, assignment, centroid_lookup=None) -> None:
    """`neuron_index,label,centroid_hz` rows for a cluster assignment."""
    roles = assignment.role_names()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("neuron_index,label,centroid_hz\n")
        for j, role in enumerate(roles):
            if role == "shared":
                centroid = ""
            else:
                centroid = f"{assignment.centroid_hz[assignment.cluster_of(role)]:.6g}"
            fh.write(f"{j},{role},{centroid}\n")


def save_pgm(path, image: np.ndarray) -> None:
    """Binary 8-bit PGM (P5)."""
    image = np.asarray(image)
    if image.dtype != np.uint8:
        raise ValueError("PGM export expects a uint8 image")
    height, width = image.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{width} {height}\n255\n".encode("ascii"))
        fh.write(image.tobytes())


def spectrogram_db_image(spec: ComplexSpectrogram, floor_db: float = 80.0) -> np.ndarray:
    """Magnitude in dB mapped to 0..255, low frequencies at the bottom."""
    mag = np.abs(spec.frames)
    db = 20.0 * np.log10(mag + 1e-12)
    top = db.max()
    scaled = np.clip((db - (top - floor_db)) / floor_db, 0.0, 1.0)
    img = np.round(scaled * 255.0).astype(np.uint8)
    return img.T[::-1]  # rows = frequency (high first), cols = frames


def mask_image(mask: np.ndarray) -> np.ndarray:
    """A [0, 1] mask as an 8-bit image, low frequencies at the bottom."""
    img = np.round(np.clip(mask, 0.0, 1.0) * 255.0).astype(np.uint8)
    return img.T[::-1]

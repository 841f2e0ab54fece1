"""PGM grayscale renders for visual inspection and regression diffs."""

from __future__ import annotations

import numpy as np


def height_to_gray(heights: np.ndarray, reference: float = 0.0, band: float = 2.0) -> np.ndarray:
    """Fixed mapping of heights onto 0..255 over the band centered at reference."""
    lo = reference - band / 2.0
    scaled = (np.asarray(heights, dtype=np.float64) - lo) / band
    return np.clip(np.nan_to_num(scaled, nan=0.0) * 255.0, 0.0, 255.0).astype(np.uint8)


def sigma_to_gray(sigma: np.ndarray, max_sigma: float = 0.5) -> np.ndarray:
    scaled = np.asarray(sigma, dtype=np.float64) / max_sigma
    return np.clip(np.nan_to_num(scaled, nan=1.0) * 255.0, 0.0, 255.0).astype(np.uint8)


def write_pgm(path, gray: np.ndarray):
    """Binary (P5) PGM with 8-bit depth."""
    g = np.ascontiguousarray(gray, dtype=np.uint8)
    if g.ndim != 2:
        raise ValueError(f"PGM image must be 2D, got shape {g.shape}")
    with open(path, "wb") as fh:
        fh.write(f"P5\n{g.shape[1]} {g.shape[0]}\n255\n".encode("ascii"))
        fh.write(g.tobytes())

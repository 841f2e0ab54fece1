"""Reconstruction quality metrics and observation-rate masking.

mMAE and mMGD are computed over cells whose local neighborhood is observed
well enough to make accuracy meaningful (the validity mask); PSNR and SSIM
are computed over all cells to capture noise level and visual similarity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import distance_transform_edt, gaussian_filter

from .exceptions import DataError
from .validation import check_map

PSNR_CAP_DB = 150.0


def build_mask(
    observed: np.ndarray,
    resolution: float,
    window: float = 1.0,
    min_rate: float = 0.5,
) -> np.ndarray:
    """Validity mask: True where the window around a cell is observed enough.

    For each cell, the observation rate over a window x window meter box
    centered on it (clipped at the borders) is compared against min_rate;
    cells below the threshold are masked out (False). Counting is exact
    integer arithmetic, so boundaries match a naive sliding-window count.
    """
    obs = np.asarray(observed).astype(bool)
    if obs.ndim != 2:
        raise DataError(f"observed mask must be 2D, got ndim={obs.ndim}")
    w = max(1, int(round(window / resolution)))
    lo = (w - 1) // 2
    hi = w // 2
    h, wdt = obs.shape
    ii = np.zeros((h + 1, wdt + 1), dtype=np.int64)
    np.cumsum(np.cumsum(obs, axis=0), axis=1, out=ii[1:, 1:])

    r0 = np.clip(np.arange(h) - lo, 0, h)
    r1 = np.clip(np.arange(h) + hi + 1, 0, h)
    c0 = np.clip(np.arange(wdt) - lo, 0, wdt)
    c1 = np.clip(np.arange(wdt) + hi + 1, 0, wdt)
    cnt = ii[r1[:, None], c1[None, :]] - ii[r0[:, None], c1[None, :]] \
        - ii[r1[:, None], c0[None, :]] + ii[r0[:, None], c0[None, :]]
    area = (r1 - r0)[:, None] * (c1 - c0)[None, :]
    # Counts and areas are exact integers and 0.5 is exact in binary, so the
    # 50% boundary matches a naive sliding-window count cell for cell.
    return cnt >= area * float(min_rate)


def _masked_pair(pred, truth, mask):
    p = check_map(pred, "pred")
    t = check_map(truth, "truth", shape=p.shape)
    if mask is None:
        m = np.ones(p.shape, dtype=bool)
    else:
        m = np.asarray(mask).astype(bool)
        if m.shape != p.shape:
            raise DataError(f"mask shape {m.shape} does not match maps {p.shape}")
    return p, t, m


def mmae(pred, truth, mask=None) -> float:
    """Masked mean absolute error, reported in centimeters."""
    p, t, m = _masked_pair(pred, truth, mask)
    if not m.any():
        raise DataError("mask excludes every cell; mMAE is undefined")
    return float(np.abs(p[m] - t[m]).mean() * 100.0)


def mmgd(pred, truth, mask=None) -> float:
    """Masked mean gradient difference: L2 norm of forward-difference gradients.

    Gradients are per-cell forward differences, so the last row and column
    have no gradient and are excluded from the average.
    """
    p, t, m = _masked_pair(pred, truth, mask)
    if p.shape[0] < 2 or p.shape[1] < 2:
        raise DataError("maps must be at least 2x2 for gradient metrics")
    d = p - t
    gx = d[:, 1:] - d[:, :-1]
    gy = d[1:, :] - d[:-1, :]
    norm = np.hypot(gx[:-1, :], gy[:, :-1])
    mi = m[:-1, :-1]
    if not mi.any():
        raise DataError("mask excludes every interior cell; mMGD is undefined")
    return float(norm[mi].mean())


def psnr(pred, truth, peak: float = 2.0) -> float:
    """Peak signal-to-noise ratio in dB over all cells, capped at 150 dB."""
    p = check_map(pred, "pred")
    t = check_map(truth, "truth", shape=p.shape)
    if not peak > 0:
        raise DataError(f"peak must be > 0, got {peak}")
    mse = float(np.mean((p - t) ** 2))
    if mse <= 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * math.log10(peak * peak / mse))


def ssim(
    pred,
    truth,
    peak: float = 2.0,
    sigma: float = 1.5,
    win_size: int = 11,
    k1: float = 0.01,
    k2: float = 0.03,
) -> float:
    """Mean structural similarity with a Gaussian window.

    Local means/variances come from Gaussian filtering (std `sigma`,
    truncated to `win_size`); stabilizers are (k1*peak)^2 and (k2*peak)^2.
    The boundary band of half a window is excluded from the average.
    """
    p = check_map(pred, "pred")
    t = check_map(truth, "truth", shape=p.shape)
    if win_size % 2 == 0 or win_size < 3:
        raise DataError(f"win_size must be odd and >= 3, got {win_size}")
    pad = (win_size - 1) // 2
    if min(p.shape) <= 2 * pad:
        raise DataError(f"maps of shape {p.shape} too small for win_size {win_size}")
    truncate = pad / sigma
    blur = lambda a: gaussian_filter(a, sigma, truncate=truncate, mode="nearest")
    up, ut = blur(p), blur(t)
    vp = blur(p * p) - up * up
    vt = blur(t * t) - ut * ut
    vpt = blur(p * t) - up * ut
    c1 = (k1 * peak) ** 2
    c2 = (k2 * peak) ** 2
    s = ((2 * up * ut + c1) * (2 * vpt + c2)) / ((up * up + ut * ut + c1) * (vp + vt + c2))
    return float(s[pad:-pad, pad:-pad].mean())


def densify_bilinear(sparse: np.ndarray) -> np.ndarray:
    """Fill empty (NaN) cells by linear interpolation along rows and columns.

    Each empty cell takes the average of its row-wise and column-wise linear
    interpolants between the nearest observed cells; one-sided cases clamp
    to the nearest observed value. Cells with no observed cell in either
    their row or column fall back to the nearest observed cell overall.
    """
    a = check_map(sparse, "sparse map")
    obs = np.isfinite(a)
    if not obs.any():
        raise DataError("map has no observed cells to interpolate from")
    if obs.all():
        return a.copy()

    h, w = a.shape
    est = np.zeros((2,) + a.shape)
    ok = np.zeros((2,) + a.shape, dtype=bool)
    cols = np.arange(w)
    for i in range(h):
        m = obs[i]
        if m.any():
            est[0, i] = np.interp(cols, cols[m], a[i, m])
            ok[0, i] = True
    rows = np.arange(h)
    for j in range(w):
        m = obs[:, j]
        if m.any():
            est[1, :, j] = np.interp(rows, rows[m], a[m, j])
            ok[1, :, j] = True

    n_est = ok.sum(axis=0)
    total = np.where(ok[0], est[0], 0.0) + np.where(ok[1], est[1], 0.0)
    out = a.copy()
    fill = ~obs & (n_est > 0)
    out[fill] = total[fill] / n_est[fill]
    rest = ~obs & (n_est == 0)
    if rest.any():
        _, (ry, rx) = distance_transform_edt(~obs, return_indices=True)
        out[rest] = a[ry[rest], rx[rest]]
    return out


@dataclass
class MetricReport:
    """Per-record metric values plus their aggregates."""

    mmae_cm: list = field(default_factory=list)
    mmgd: list = field(default_factory=list)
    psnr_db: list = field(default_factory=list)
    ssim: list = field(default_factory=list)
    skipped: int = 0

    def add(self, mmae_cm: float, mmgd: float, psnr_db: float, ssim: float):
        self.mmae_cm.append(mmae_cm)
        self.mmgd.append(mmgd)
        self.psnr_db.append(psnr_db)
        self.ssim.append(ssim)

    def aggregate(self) -> dict:
        out = {}
        for name in ("mmae_cm", "mmgd", "psnr_db", "ssim"):
            vals = getattr(self, name)
            out[name] = float(np.mean(vals)) if vals else float("nan")
        out["records"] = len(self.mmae_cm)
        out["skipped"] = self.skipped
        return out

    def format_lines(self) -> list[str]:
        agg = self.aggregate()
        return [
            f"records      {agg['records']}",
            f"skipped      {agg['skipped']}",
            f"mMAE [cm]    {agg['mmae_cm']:.4f}",
            f"mMGD         {agg['mmgd']:.4f}",
            f"PSNR [dB]    {agg['psnr_db']:.2f}",
            f"SSIM         {agg['ssim']:.4f}",
        ]

    def write(self, path):
        """Machine-readable key/value report, one `key = value` per line."""
        agg = self.aggregate()
        with open(path, "w", encoding="utf-8") as fh:
            for key in ("records", "skipped", "mmae_cm", "mmgd", "psnr_db", "ssim"):
                fh.write(f"{key} = {agg[key]}\n")

"""Quantitative evaluation of synthesized looping videos.

Four scores against a held-out target video:

  * stderr: MSE between per-pixel temporal standard-deviation maps (0-255
    scale); proxies preserved dynamism.
  * completeness: for each target patch, distance to the closest synthetic
    patch (does every piece of input content appear in the result?).
  * coherence: for each synthetic patch, distance to the closest target
    patch (is everything in the result explained by the input?).
  * loopq: coherence restricted to patches straddling the last-to-first
    frame transition; measures seam quality.

Patch distances are mean squared error on the [0, 1] scale; directional
scores are averaged over several patch configurations and reported x100.
Searches run over the full temporal range and a spatial window around the
source location.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class MetricPatchConfig:
    spatial: int = 7
    temporal_size: int = 3
    temporal_stride: int = 1
    spatial_stride: int = 4

    def __post_init__(self):
        if self.spatial < 1 or self.spatial % 2 == 0:
            raise ValueError("spatial size must be odd")
        if self.temporal_size < 1 or self.temporal_stride < 1:
            raise ValueError("temporal sizes must be positive")
        if self.spatial_stride < 1:
            raise ValueError("spatial stride must be positive")


@dataclass(frozen=True)
class SearchSpec:
    """Candidate window: full temporal range, +-spatial_radius around the
    source pixel. full_frame widens the spatial search to the whole image
    (quadratic cost)."""

    spatial_radius: int = 8
    full_frame: bool = False


DEFAULT_CONFIGS = (MetricPatchConfig(spatial=7), MetricPatchConfig(spatial=11))
DESK_CONFIGS = (MetricPatchConfig(spatial=5, spatial_stride=6),
                MetricPatchConfig(spatial=7, spatial_stride=6))


def stderr_metric(synthetic: np.ndarray, target: np.ndarray) -> float:
    """MSE between per-pixel temporal standard deviation maps (0-255)."""
    if synthetic.shape[1:] != target.shape[1:]:
        raise ValueError("spatial dimensions differ")
    map_a = np.std(synthetic.astype(np.float64) * 255.0, axis=0)
    map_b = np.std(target.astype(np.float64) * 255.0, axis=0)
    diff = map_a - map_b
    return float(np.mean(diff * diff))


def _integral_image(img: np.ndarray) -> np.ndarray:
    out = np.zeros((img.shape[0] + 1, img.shape[1] + 1), dtype=np.float64)
    out[1:, 1:] = np.cumsum(np.cumsum(img, axis=0), axis=1)
    return out


def _box_sums(img: np.ndarray, k: int) -> np.ndarray:
    """Sum over every k x k window; output (H-k+1, W-k+1)."""
    ii = _integral_image(img)
    return (ii[k:, k:] - ii[:-k, k:] - ii[k:, :-k] + ii[:-k, :-k])


def _direction_min_mse(src: np.ndarray, dst: np.ndarray,
                       cfg: MetricPatchConfig, search: SearchSpec,
                       src_tstarts: Sequence[int]) -> float:
    """Mean over src patches of the min MSE to a dst patch in the window.

    src patches sit on the spatial grid given by cfg.spatial_stride at the
    supplied temporal starts; candidates cover all dst temporal starts and
    spatial offsets within the search radius.
    """
    k = cfg.spatial
    s = cfg.temporal_size
    half = k // 2
    t_dst = dst.shape[0]
    height, width = src.shape[1:3]
    if dst.shape[1:3] != (height, width):
        raise ValueError("videos must share spatial dimensions")
    if t_dst < s or src.shape[0] < s:
        raise ValueError("video shorter than the temporal patch")
    dst_starts = range(t_dst - s + 1)
    radius = max(height, width) if search.full_frame else search.spatial_radius

    # src patch top-left grid (same coverage as centers on the stride grid)
    ys = np.arange(0, height - k + 1, cfg.spatial_stride)
    xs = np.arange(0, width - k + 1, cfg.spatial_stride)
    if len(ys) == 0 or len(xs) == 0:
        raise ValueError("frame smaller than the spatial patch")
    best = np.full((len(src_tstarts), len(ys), len(xs)), np.inf)

    src64 = src.astype(np.float64, copy=False)
    dst64 = dst.astype(np.float64, copy=False)
    tstart_index = {t: i for i, t in enumerate(src_tstarts)}
    for dy in range(-radius, radius + 1):
        y_lo = max(0, -dy)
        y_hi = min(height, height - dy)
        if y_hi - y_lo < k:
            continue
        sel_y = (ys >= y_lo) & (ys <= y_hi - k)
        if not np.any(sel_y):
            continue
        for dx in range(-radius, radius + 1):
            x_lo = max(0, -dx)
            x_hi = min(width, width - dx)
            if x_hi - x_lo < k:
                continue
            sel_x = (xs >= x_lo) & (xs <= x_hi - k)
            if not np.any(sel_x):
                continue
            a = src64[:, y_lo:y_hi, x_lo:x_hi]
            b = dst64[:, y_lo + dy:y_hi + dy, x_lo + dx:x_hi + dx]
            iy = ys[sel_y] - y_lo
            ix = xs[sel_x] - x_lo
            # squared frame differences grouped by temporal offset diagonal
            for c in range(-(src.shape[0] - 1), t_dst):
                t1_lo = max(0, -c)
                t1_hi = min(src.shape[0], t_dst - c)
                if t1_hi - t1_lo < s:
                    continue
                pairs = [(t1, t1 + c) for t1 in src_tstarts
                         if t1_lo <= t1 and t1 + s <= t1_hi
                         and 0 <= t1 + c <= t_dst - s]
                if not pairs:
                    continue
                sq = np.empty((t1_hi - t1_lo,) + a.shape[1:3])
                for t1 in range(t1_lo, t1_hi):
                    d = a[t1] - b[t1 + c]
                    sq[t1 - t1_lo] = np.sum(d * d, axis=-1)
                csum = np.concatenate(
                    [np.zeros((1,) + sq.shape[1:]), np.cumsum(sq, axis=0)])
                grid_sel = np.ix_(sel_y.nonzero()[0], sel_x.nonzero()[0])
                for t1, _ in pairs:
                    temporal = csum[t1 + s - t1_lo] - csum[t1 - t1_lo]
                    ssd = _box_sums(temporal, k)
                    vals = ssd[np.ix_(iy, ix)]
                    ti = tstart_index[t1]
                    best[ti][grid_sel] = np.minimum(best[ti][grid_sel], vals)
    if not np.all(np.isfinite(best)):
        raise ValueError("some source patches found no candidate")
    dim = k * k * s * src.shape[-1]
    return float(np.mean(best) / dim)


def bds_direction(src: np.ndarray, dst: np.ndarray,
                  configs: Sequence[MetricPatchConfig] = DEFAULT_CONFIGS,
                  search: SearchSpec = SearchSpec()) -> float:
    """Directional patch similarity, averaged over configs, reported x100."""
    values = []
    for cfg in configs:
        starts = list(range(0, src.shape[0] - cfg.temporal_size + 1,
                            cfg.temporal_stride))
        values.append(_direction_min_mse(src, dst, cfg, search, starts))
    return float(np.mean(values) * 100.0)


def coherence(synthetic, target, configs=DEFAULT_CONFIGS, search=SearchSpec()):
    return bds_direction(synthetic, target, configs, search)


def completeness(synthetic, target, configs=DEFAULT_CONFIGS, search=SearchSpec()):
    return bds_direction(target, synthetic, configs, search)


def loopq(synthetic: np.ndarray, target: np.ndarray,
          configs: Sequence[MetricPatchConfig] = DEFAULT_CONFIGS,
          search: SearchSpec = SearchSpec()) -> float:
    """Coherence over seam-crossing patches only.

    Sources are patches of the looping video whose temporal window contains
    both the last and the first frame (circular indexing); for s == T every
    circular start qualifies.
    """
    t_frames = synthetic.shape[0]
    values = []
    for cfg in configs:
        s = cfg.temporal_size
        if t_frames < s:
            raise ValueError("looping video shorter than the temporal patch")
        padded = np.concatenate([synthetic, synthetic[:s - 1]], axis=0)
        if s == t_frames:
            starts = list(range(0, t_frames))
        else:
            starts = list(range(t_frames - s + 1, t_frames))
        values.append(_direction_min_mse(padded, target, cfg, search, starts))
    return float(np.mean(values) * 100.0)


@dataclass
class MetricReport:
    stderr: float
    completeness: float
    coherence: float
    loopq: float
    breakdown: list[dict] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "stderr": self.stderr,
            "completeness": self.completeness,
            "coherence": self.coherence,
            "loopq": self.loopq,
            "breakdown": self.breakdown,
        }

    def table(self) -> str:
        rows = [("STDerr", self.stderr), ("Com.", self.completeness),
                ("Coh.", self.coherence), ("LoopQ", self.loopq)]
        width = max(len(name) for name, _ in rows)
        return "\n".join(f"{name:<{width}}  {value:10.4f}" for name, value in rows)


def evaluate_pair(synthetic: np.ndarray, target: np.ndarray,
                  configs: Sequence[MetricPatchConfig] = DEFAULT_CONFIGS,
                  search: SearchSpec = SearchSpec()) -> MetricReport:
    """All four metrics of one synthetic/target pair, with a per-config
    breakdown of the directional scores."""
    breakdown = []
    com_vals, coh_vals, loopq_vals = [], [], []
    for cfg in configs:
        com = bds_direction(target, synthetic, [cfg], search)
        coh = bds_direction(synthetic, target, [cfg], search)
        lq = loopq(synthetic, target, [cfg], search)
        com_vals.append(com)
        coh_vals.append(coh)
        loopq_vals.append(lq)
        desc = (f"k={cfg.spatial} s={cfg.temporal_size} "
                f"dt={cfg.temporal_stride} ds={cfg.spatial_stride}")
        breakdown.extend([
            {"metric": "completeness", "config": desc, "value": com},
            {"metric": "coherence", "config": desc, "value": coh},
            {"metric": "loopq", "config": desc, "value": lq},
        ])
    return MetricReport(
        stderr=stderr_metric(synthetic, target),
        completeness=float(np.mean(com_vals)),
        coherence=float(np.mean(coh_vals)),
        loopq=float(np.mean(loopq_vals)),
        breakdown=breakdown,
    )


def psnr(a: np.ndarray, b: np.ndarray, peak: float = 1.0) -> float:
    mse = float(np.mean((np.asarray(a, dtype=np.float64) -
                         np.asarray(b, dtype=np.float64)) ** 2))
    if mse == 0:
        return float("inf")
    return 10.0 * np.log10(peak * peak / mse)

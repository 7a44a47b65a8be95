"""Shape diameter by cone ray casting, for both normal orientations."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .rng import derive_seed, hash_uniform

MEAN = "mean"
ROBUST = "robust-median-filtered"


@dataclass
class SdConfig:
    cone_half_angle: float = 45.0
    n_rays: int = 30
    t_min: Optional[float] = None  # default 1e-5 * bbox diagonal
    aggregation: str = MEAN
    # "45 degrees" read as the full apex angle would halve the half-angle
    apex_angle: bool = False

    def __post_init__(self):
        if not 0 < self.half_angle < 90:
            raise ValueError("cone half angle must be in (0, 90) degrees")
        if self.n_rays < 1:
            raise ValueError("n_rays must be >= 1")
        if self.aggregation not in (MEAN, ROBUST):
            raise ValueError(f"unknown aggregation {self.aggregation!r}")

    @property
    def half_angle(self):
        return self.cone_half_angle / 2 if self.apex_angle else self.cone_half_angle


@dataclass(frozen=True)
class SdResult:
    sd_forward: Optional[float]
    sd_flipped: Optional[float]
    hit_fraction_forward: float
    hit_fraction_flipped: float


class SdResults:
    """Structure-of-arrays SD output; no-hit values are NaN."""

    def __init__(self, sd_forward, sd_flipped, hit_fraction_forward, hit_fraction_flipped):
        self.sd_forward = sd_forward
        self.sd_flipped = sd_flipped
        self.hit_fraction_forward = hit_fraction_forward
        self.hit_fraction_flipped = hit_fraction_flipped

    def __len__(self):
        return len(self.sd_forward)

    def __getitem__(self, i):
        f, b = self.sd_forward[i], self.sd_flipped[i]
        return SdResult(None if np.isnan(f) else float(f), None if np.isnan(b) else float(b),
                        float(self.hit_fraction_forward[i]), float(self.hit_fraction_flipped[i]))

    def min_sd(self):
        """Per-sample minimum over orientations with hits (inf when neither hits)."""
        both = np.stack([self.sd_forward, self.sd_flipped])
        return np.min(np.where(np.isnan(both), np.inf, both), axis=0)


def orthonormal_frame(axis):
    """Two unit vectors completing `axis` (N, 3) to a right-handed frame."""
    n = np.asarray(axis, dtype=np.float64).reshape(-1, 3)
    sign = np.where(n[:, 2] >= 0, 1.0, -1.0)
    a = -1.0 / (sign + n[:, 2])
    b = n[:, 0] * n[:, 1] * a
    t1 = np.stack([1.0 + sign * n[:, 0] ** 2 * a, sign * b, -sign * n[:, 0]], 1)
    t2 = np.stack([b, sign + n[:, 1] ** 2 * a, -n[:, 1]], 1)
    return t1, t2


def _cone(axes, half_angle_deg, n, seeds):
    """Directions for many axes; seeds (N,) address each cone's stream."""
    axes = np.asarray(axes, dtype=np.float64).reshape(-1, 3)
    m = len(axes)
    seeds = np.asarray(seeds, dtype=np.uint64).reshape(m, 1)
    k = np.arange(n, dtype=np.uint64)[None, :]
    u = hash_uniform(seeds, 0, 2 * k)
    v = hash_uniform(seeds, 0, 2 * k + 1)
    cos_a = np.cos(np.radians(half_angle_deg))
    # uniform in solid angle over the cap: cos(theta) uniform in [cos_a, 1]
    cos_t = 1.0 - u * (1.0 - cos_a)
    sin_t = np.sqrt(np.maximum(0.0, 1.0 - cos_t ** 2))
    phi = 2.0 * np.pi * v
    t1, t2 = orthonormal_frame(axes)
    d = (cos_t[..., None] * axes[:, None, :]
         + (sin_t * np.cos(phi))[..., None] * t1[:, None, :]
         + (sin_t * np.sin(phi))[..., None] * t2[:, None, :])
    return d / np.linalg.norm(d, axis=-1, keepdims=True)


def cone_ray_directions(axis, half_angle, n, seed):
    """`n` unit vectors uniformly distributed by solid angle within
    `half_angle` degrees of `axis`."""
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    return _cone(axis[None], half_angle, n, [int(seed) & (2 ** 64 - 1)])[0]


def _aggregate(t, aggregation):
    """Row-wise aggregation of hit distances (inf = miss)."""
    hit = np.isfinite(t)
    n_hit = hit.sum(axis=1)
    tz = np.where(hit, t, 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        sd = tz.sum(axis=1) / n_hit
        if aggregation == ROBUST:
            med = np.full(len(t), np.nan)
            some = n_hit > 0
            med[some] = np.nanmedian(np.where(hit[some], t[some], np.nan), axis=1)
            std = np.sqrt((np.where(hit, (t - sd[:, None]) ** 2, 0.0)).sum(axis=1) / n_hit)
            keep = hit & (np.abs(t - med[:, None]) <= std[:, None])
            n_keep = keep.sum(axis=1)
            sd = np.where(n_keep > 0, np.where(keep, t, 0.0).sum(axis=1) / np.maximum(n_keep, 1), sd)
    sd = np.where(n_hit > 0, sd, np.nan)
    return sd, n_hit / t.shape[1]


def _orientation_seeds(seeds):
    seeds = np.array([int(s) & (2 ** 64 - 1) for s in seeds], dtype=np.uint64)
    return derive_seed(seeds, np.zeros(len(seeds))), derive_seed(seeds, np.ones(len(seeds)))


def _cast(index, points, normals, cfg, seeds, chunk=4096):
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    normals = np.asarray(normals, dtype=np.float64).reshape(-1, 3)
    normals = normals / np.linalg.norm(normals, axis=1, keepdims=True)
    t_min = cfg.t_min if cfg.t_min is not None else 1e-5 * index.diagonal
    t_max = index.diagonal
    fwd_seeds, flp_seeds = _orientation_seeds(seeds)
    out = [np.empty(len(points)) for _ in range(4)]
    for s in range(0, len(points), chunk):
        e = min(s + chunk, len(points))
        for k, (sign, sd_seeds) in enumerate(((1.0, fwd_seeds), (-1.0, flp_seeds))):
            dirs = _cone(sign * normals[s:e], cfg.half_angle, cfg.n_rays, sd_seeds[s:e])
            orig = np.repeat(points[s:e], cfg.n_rays, axis=0)
            t, _ = index.cast_rays(orig, dirs.reshape(-1, 3), t_min, t_max)
            sd, frac = _aggregate(t.reshape(e - s, cfg.n_rays), cfg.aggregation)
            out[k][s:e] = sd
            out[2 + k][s:e] = frac
    return SdResults(out[0], out[1], out[2], out[3])


def shape_diameter_at(index, point, normal, cfg: SdConfig = None, seed=0) -> SdResult:
    cfg = cfg or SdConfig()
    return _cast(index, point, normal, cfg, [seed])[0]


def sample_seeds(seed, n):
    """Per-sample seeds used by shape_diameter_field."""
    return derive_seed(np.full(n, int(seed) & (2 ** 64 - 1), dtype=np.uint64), np.arange(n))


def shape_diameter_field(index, samples, cfg: SdConfig = None, seed=0) -> SdResults:
    """SD at every sample; element i equals
    shape_diameter_at(..., seed=sample_seeds(seed, n)[i])."""
    cfg = cfg or SdConfig()
    return _cast(index, samples.points, samples.normals, cfg, sample_seeds(seed, len(samples)))

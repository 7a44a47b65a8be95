"""Training samples for a per-shape unsigned distance field.

A sample set holds uniform volume points plus near-surface points whose
perturbation scale adapts to the local shape diameter, each labelled with
its exact unsigned distance to the mesh.
"""
from __future__ import annotations

import json
import logging
import struct
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .bvh import MeshIndex, build_index
from .errors import FormatError, TruncatedFileError
from .geometry import Box, Normalization, TriangleMesh, area_weighted_sample
from .rng import derive_seed
from .shape_diameter import SdConfig, shape_diameter_field

log = logging.getLogger(__name__)

SAMPLE_MAGIC = b"NUDS0001"
_HEADER = struct.Struct("<8sQ")
_RECORD = np.dtype([("x", "<f4"), ("y", "<f4"), ("z", "<f4"), ("d", "<f4")])

# sigma source codes recorded per emitted point
SIGMA_SD = 0
SIGMA_SD_FALLBACK = 1
SIGMA_1 = 2
SIGMA_2 = 3


@dataclass
class SamplerConfig:
    """Lengths are in millimetres of the source mesh."""

    n_uniform: int = 10_000
    n_surface: int = 100_000
    lam: float = 500.0
    sd_threshold: float = 10.0
    sigma1: float = 10.0
    sigma2: float = 20.0
    sigma_split: float = 0.5
    n_candidates: int = 20_000
    sd_config: SdConfig = field(default_factory=SdConfig)
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.sd_config, dict):
            self.sd_config = SdConfig(**self.sd_config)
        if self.n_uniform < 0 or self.n_surface < 0 or self.n_candidates < 1:
            raise ValueError("sample counts must be non-negative")
        if self.lam < 1:
            raise ValueError("lambda must be >= 1")
        if self.sigma1 <= 0 or self.sigma2 <= 0:
            raise ValueError("sigmas must be positive")
        if not 0 <= self.sigma_split <= 1:
            raise ValueError("sigma_split must be in [0, 1]")


@dataclass
class SurfaceDraw:
    """Near-surface points with provenance, in the frame of the mesh."""

    points: np.ndarray
    candidate: np.ndarray   # index into the candidate pool
    orientation: np.ndarray  # +1 forward normal, -1 flipped
    sigma: np.ndarray
    sigma_source: np.ndarray
    offset: np.ndarray       # signed displacement along the emitted normal
    small_sd: np.ndarray     # candidate fell below the SD threshold
    candidates: Optional[object] = None
    sd: Optional[object] = None


@dataclass
class SampleSet:
    positions: np.ndarray  # (N, 3) float32, normalised frame
    distances: np.ndarray  # (N,) float32, normalised units
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.positions = np.ascontiguousarray(self.positions, dtype=np.float32).reshape(-1, 3)
        self.distances = np.ascontiguousarray(self.distances, dtype=np.float32).reshape(-1)
        if len(self.positions) != len(self.distances):
            raise ValueError("positions and distances differ in length")

    def __len__(self):
        return len(self.distances)


def generate_uniform_samples(bbox: Box, n, seed):
    rng = np.random.default_rng(seed)
    return rng.uniform(bbox.lo, bbox.hi, size=(int(n), 3))


def generate_surface_samples(mesh: TriangleMesh, index: MeshIndex, cfg: SamplerConfig,
                             domain: Optional[Box] = None, mm_per_unit=1.0) -> SurfaceDraw:
    """Shape-diameter adaptive near-surface points.

    Candidates are drawn by area; each gets a selection weight of `lam` when
    its smaller shape diameter is under the threshold and 1 otherwise.
    Every selected candidate emits one point along its normal and one along
    the flipped normal. Config lengths are millimetres; `mm_per_unit`
    converts them into the mesh frame.
    """
    n_pairs = cfg.n_surface // 2
    if cfg.n_surface % 2:
        warnings.warn(f"n_surface={cfg.n_surface} is odd; emitting {2 * n_pairs} points", stacklevel=2)
    empty = np.zeros(0)
    if n_pairs == 0:
        return SurfaceDraw(np.zeros((0, 3)), empty.astype(int), empty, empty, empty.astype(int),
                           empty, empty.astype(bool))
    scale = 1.0 / mm_per_unit
    cand = area_weighted_sample(mesh, cfg.n_candidates, derive_seed(cfg.seed, 11))
    sd = shape_diameter_field(index, cand, cfg.sd_config, derive_seed(cfg.seed, 12))
    small = sd.min_sd() < cfg.sd_threshold * scale
    weights = np.where(small, cfg.lam, 1.0)
    rng = np.random.default_rng(derive_seed(cfg.seed, 13))
    chosen = rng.choice(len(weights), size=n_pairs, replace=True, p=weights / weights.sum())

    cand_idx = np.repeat(chosen, 2)
    orient = np.tile([1.0, -1.0], n_pairs)
    sd_pair = np.stack([sd.sd_forward[chosen], sd.sd_flipped[chosen]], 1).reshape(-1)
    is_small = small[cand_idx]
    sigma = np.empty(2 * n_pairs)
    source = np.empty(2 * n_pairs, dtype=np.int64)
    has_sd = is_small & np.isfinite(sd_pair)
    sigma[has_sd] = sd_pair[has_sd] / 4.0
    source[has_sd] = SIGMA_SD
    fb = is_small & ~has_sd
    sigma[fb] = cfg.sigma1 * scale
    source[fb] = SIGMA_SD_FALLBACK
    large = ~is_small
    use1 = rng.random(2 * n_pairs) < cfg.sigma_split
    sigma[large & use1] = cfg.sigma1 * scale
    source[large & use1] = SIGMA_1
    sigma[large & ~use1] = cfg.sigma2 * scale
    source[large & ~use1] = SIGMA_2

    base = cand.points[cand_idx]
    normal = cand.normals[cand_idx] * orient[:, None]
    offset = rng.normal(0.0, 1.0, 2 * n_pairs) * sigma
    pts = base + offset[:, None] * normal
    if domain is not None:
        # redraw offsets that leave the domain, then clamp what is left
        for _ in range(10):
            out = ~domain.contains(pts)
            if not np.any(out):
                break
            offset[out] = rng.normal(0.0, 1.0, out.sum()) * sigma[out]
            pts[out] = base[out] + offset[out, None] * normal[out]
        pts = domain.clamp(pts)
    return SurfaceDraw(pts, cand_idx, orient, sigma, source, offset, is_small, cand, sd)


def label_distances(index: MeshIndex, points, metadata=None) -> SampleSet:
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    return SampleSet(points, index.batch_unsigned_distance(points), metadata or {})


def generate_samples(mesh: TriangleMesh, cfg: SamplerConfig,
                     normalization: Optional[Normalization] = None) -> SampleSet:
    """Full training set for one world-frame (mm) mesh.

    Sampling and labelling happen in the normalised frame; mm-valued config
    lengths are converted through the normalisation scale.
    """
    norm = normalization or Normalization.fit(mesh)
    nmesh = mesh.normalized(norm)
    index = build_index(nmesh)
    domain = Box.cube(1.0)
    uni = generate_uniform_samples(domain, cfg.n_uniform, derive_seed(cfg.seed, 10))
    surf = generate_surface_samples(nmesh, index, cfg, domain, mm_per_unit=norm.scale)
    pts = np.concatenate([uni, surf.points]).astype(np.float32).astype(np.float64)
    log.info("sampled %d uniform + %d surface points", len(uni), len(surf.points))
    meta = {
        "config": config_echo(cfg),
        "seed": cfg.seed,
        "source_mesh_hash": mesh.content_hash(),
        "normalization": norm.matrix().reshape(-1).tolist(),
        "n_uniform": int(len(uni)),
        "n_surface": int(len(surf.points)),
    }
    # label the float32-rounded positions so stored pairs agree exactly
    return label_distances(index, pts, meta)


def config_echo(cfg):
    d = asdict(cfg)
    return json.loads(json.dumps(d, default=float))


def write_samples(samples: SampleSet, path, write_meta=True):
    path = Path(path)
    rec = np.empty(len(samples), dtype=_RECORD)
    rec["x"], rec["y"], rec["z"] = samples.positions.T
    rec["d"] = samples.distances
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(SAMPLE_MAGIC, len(samples)))
        fh.write(rec.tobytes())
    if write_meta:
        meta_path(path).write_text(json.dumps(samples.metadata, indent=2, sort_keys=True))


def meta_path(path):
    path = Path(path)
    return path.with_name(path.stem + ".meta.json")


def read_samples(path) -> SampleSet:
    path = Path(path)
    data = path.read_bytes()
    if len(data) < _HEADER.size:
        raise TruncatedFileError("sample file shorter than its header", offset=len(data))
    magic, count = _HEADER.unpack_from(data)
    if magic != SAMPLE_MAGIC:
        raise FormatError(f"bad sample file magic {magic!r}", offset=0)
    need = _HEADER.size + count * _RECORD.itemsize
    if len(data) < need:
        raise TruncatedFileError(f"sample file holds {len(data)} bytes, expected {need}",
                                 offset=len(data))
    rec = np.frombuffer(data, dtype=_RECORD, count=count, offset=_HEADER.size)
    pos = np.stack([rec["x"], rec["y"], rec["z"]], 1)
    meta = {}
    mp = meta_path(path)
    if mp.is_file():
        meta = json.loads(mp.read_text())
    return SampleSet(pos, rec["d"].copy(), meta)

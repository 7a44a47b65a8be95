"""End-to-end run for one mesh: sample, fit, extract, mesh, score."""
from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .bvh import build_index
from .extract import ExtractConfig, extract_dense_cloud
from .fields import DistanceField, voxelize
from .fileio import save_mesh, save_point_cloud
from .geometry import Box, Normalization, PointCloud, TriangleMesh
from .metrics import MetricsConfig, report_from_distances, sample_distances
from .mlp import MlpConfig, TrainConfig, init_mlp, save_weights, train
from .sampler import SamplerConfig, generate_samples, write_samples
from .surface import MeshingConfig, mesh_point_cloud

log = logging.getLogger(__name__)

# each stage seed is the global seed plus a fixed offset
STAGE_OFFSETS = {"sample": 0, "sd": 1, "fit": 2, "extract": 3, "mesh": 4, "metrics": 5}

# completion tolerance in normalised units reported next to the mm metrics
NORMALIZED_COMPLETION_TOL = 0.02


def stage_seed(seed, stage):
    return (int(seed) + STAGE_OFFSETS[stage]) & (2 ** 64 - 1)


@dataclass
class PipelineConfig:
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    mlp: MlpConfig = field(default_factory=MlpConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    extract: ExtractConfig = field(default_factory=ExtractConfig)
    meshing: MeshingConfig = field(default_factory=MeshingConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    seed: int = 0
    units: str = "mm"
    normalization_margin: float = 1.1

    def with_stage_seeds(self):
        """Copy whose stage configs carry seeds derived from the global seed."""
        cfg = from_dict(to_dict(self))
        cfg.sampler.seed = stage_seed(self.seed, "sample")
        cfg.train.seed = stage_seed(self.seed, "fit")
        cfg.extract.seed = stage_seed(self.seed, "extract")
        cfg.metrics.seed = stage_seed(self.seed, "metrics")
        return cfg


_SECTIONS = {"sampler": SamplerConfig, "mlp": MlpConfig, "train": TrainConfig,
             "extract": ExtractConfig, "meshing": MeshingConfig, "metrics": MetricsConfig}


def to_dict(cfg: PipelineConfig):
    return asdict(cfg)


def _build(cls, data, where):
    names = {f.name for f in fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ValueError(f"unknown keys in {where}: {sorted(unknown)}")
    return cls(**data)


def from_dict(data: dict) -> PipelineConfig:
    data = dict(data)
    kw = {}
    for name, cls in _SECTIONS.items():
        section = data.pop(name, {})
        if is_dataclass(section):
            section = asdict(section)
        kw[name] = _build(cls, section, name)
    top = {f.name for f in fields(PipelineConfig)} - set(_SECTIONS)
    unknown = set(data) - top
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    kw.update(data)
    return PipelineConfig(**kw)


def load_config(path) -> PipelineConfig:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ValueError(f"config {path} is not valid JSON: {e}") from None
    if not isinstance(data, dict):
        raise ValueError(f"config {path} must hold a JSON object")
    return from_dict(data)


@dataclass
class FieldMesh:
    """Extraction and meshing output for one field, in millimetres."""

    cloud: PointCloud
    mesh: TriangleMesh
    extract_warning: Optional[str] = None


def field_to_mesh(fld: DistanceField, norm: Normalization, cfg: PipelineConfig,
                  field_id="field") -> FieldMesh:
    """Extract a dense cloud from a field in the normalised frame and mesh it
    in millimetres."""
    dense = extract_dense_cloud(fld, cfg.extract, field_id)
    cloud = PointCloud(norm.to_world(dense.points), attributes={"residual": dense.residuals * norm.scale})
    mesh = mesh_point_cloud(cloud, cfg.meshing)
    return FieldMesh(cloud, mesh, dense.warning)


def score(pred: TriangleMesh, gt: TriangleMesh, norm: Normalization, cfg: MetricsConfig):
    """Metrics report dict in mm plus the normalised-frame counterparts."""
    d_pg, d_gp = sample_distances(pred, gt, cfg)
    rep = report_from_distances(d_pg, d_gp, cfg, pred.content_hash(), gt.content_hash()).to_json_dict()
    rep["scale_mm_per_unit"] = norm.scale
    rep["chamfer_normalized"] = rep["chamfer_mm"] / norm.scale
    rep["accuracy_normalized"] = rep["accuracy_mm"] / norm.scale
    rep["completion_normalized_tol"] = NORMALIZED_COMPLETION_TOL
    rep["completion_normalized"] = float(np.mean(d_gp <= NORMALIZED_COMPLETION_TOL * norm.scale))
    return rep


def grid_baseline(mesh: TriangleMesh, norm: Normalization, dims=64):
    """Exact distances of the normalised mesh on a dims^3 grid over [-1, 1]^3."""
    return voxelize(build_index(mesh.normalized(norm)), dims, Box.cube(1.0))


@dataclass
class PipelineResult:
    report: dict
    mesh: TriangleMesh
    cloud: PointCloud
    field: DistanceField
    normalization: Normalization
    train_report: object = None
    timings: dict = field(default_factory=dict)


def run_pipeline(mesh: TriangleMesh, cfg: PipelineConfig, outdir=None, progress=None) -> PipelineResult:
    """Sample, fit, extract, mesh and score `mesh` (millimetres).

    When `outdir` is given every intermediate is written there; the metrics
    report holds no timings so reruns with the same seed are byte-identical.
    """
    cfg = cfg.with_stage_seeds()
    out = Path(outdir) if outdir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    timings = {}
    t = time.perf_counter()
    norm = Normalization.fit(mesh, cfg.normalization_margin)
    samples = generate_samples(mesh, cfg.sampler, norm)
    timings["sample"] = time.perf_counter() - t

    t = time.perf_counter()
    mlp = init_mlp(cfg.mlp, cfg.train.seed)
    treport = train(mlp, samples, cfg.train, progress)
    timings["fit"] = time.perf_counter() - t

    t = time.perf_counter()
    fm = field_to_mesh(mlp, norm, cfg, "mlp")
    timings["extract_mesh"] = time.perf_counter() - t

    t = time.perf_counter()
    report = score(fm.mesh, mesh, norm, cfg.metrics)
    timings["metrics"] = time.perf_counter() - t
    report["n_training_samples"] = len(samples)
    report["global_seed"] = cfg.seed
    report["pred_triangles"] = fm.mesh.n_triangles

    if out is not None:
        write_samples(samples, out / "samples.nuds")
        save_weights(mlp, out / "weights.nudw")
        (out / "train_report.json").write_text(json.dumps(asdict(treport), indent=2))
        save_point_cloud(fm.cloud, out / "cloud.ply")
        save_mesh(fm.mesh, out / "mesh.ply")
        (out / "config.json").write_text(json.dumps(to_dict(cfg), indent=2, sort_keys=True))
        (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True))
        (out / "timings.json").write_text(json.dumps(timings, indent=2))
    log.info("pipeline done: chamfer %.4f mm (%.5f units)", report["chamfer_mm"], report["chamfer_normalized"])
    return PipelineResult(report, fm.mesh, fm.cloud, mlp, norm, treport, timings)

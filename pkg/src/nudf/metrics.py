"""Mesh-to-mesh scores: symmetric chamfer distance, accuracy at a quantile
and completion at a tolerance. Distances are exact point-to-triangle
distances from area-weighted samples of one surface to the other."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .bvh import build_index
from .errors import EmptyInputError
from .geometry import TriangleMesh, area_weighted_sample
from .rng import derive_seed


@dataclass
class MetricsConfig:
    n_samples: int = 100_000
    accuracy_fraction: float = 0.9
    completion_tol: float = 2.0   # mm
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.accuracy_fraction < 1:
            raise ValueError("accuracy_fraction must be in (0, 1)")
        if self.completion_tol <= 0:
            raise ValueError("completion_tol must be positive")
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")


@dataclass
class MetricsReport:
    chamfer: float
    accuracy: float
    completion: float
    pred_to_gt_mean: float
    gt_to_pred_mean: float
    n_samples: int
    seed: int
    pred_hash: str = ""
    gt_hash: str = ""
    config: dict = field(default_factory=dict)

    def to_json_dict(self):
        return {
            "chamfer_mm": self.chamfer,
            "accuracy_mm": self.accuracy,
            "completion": self.completion,
            "pred_to_gt_mean_mm": self.pred_to_gt_mean,
            "gt_to_pred_mean_mm": self.gt_to_pred_mean,
            "n_samples": self.n_samples,
            "seed": self.seed,
            "pred_hash": self.pred_hash,
            "gt_hash": self.gt_hash,
            "chamfer_definition": "0.5 * (mean pred->gt + mean gt->pred), point-to-surface",
            "config": self.config,
        }

    def to_json(self):
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True)


def _check(mesh, name):
    if mesh.is_empty():
        raise EmptyInputError(f"{name} mesh has no triangles")


def directed_distances(src: TriangleMesh, dst: TriangleMesh, n, seed, dst_index=None):
    """Distances from n area-weighted samples of `src` to the surface of `dst`."""
    _check(src, "source")
    _check(dst, "target")
    index = dst_index or build_index(dst)
    pts = area_weighted_sample(src, n, seed).points
    return index.batch_unsigned_distance(pts)


# each direction draws from its own fixed stream so swapping the
# arguments reuses the same samples
_PRED_STREAM = 1
_GT_STREAM = 2


def _pred_to_gt(pred, gt, cfg, gt_index=None):
    return directed_distances(pred, gt, cfg.n_samples, derive_seed(cfg.seed, _PRED_STREAM), gt_index)


def _gt_to_pred(pred, gt, cfg, pred_index=None):
    return directed_distances(gt, pred, cfg.n_samples, derive_seed(cfg.seed, _GT_STREAM), pred_index)


def chamfer_distance(pred: TriangleMesh, gt: TriangleMesh, cfg: MetricsConfig = None) -> float:
    cfg = cfg or MetricsConfig()
    return 0.5 * float(_pred_to_gt(pred, gt, cfg).mean() + _gt_to_pred(pred, gt, cfg).mean())


def mesh_accuracy(pred: TriangleMesh, gt: TriangleMesh, cfg: MetricsConfig = None) -> float:
    cfg = cfg or MetricsConfig()
    return float(np.quantile(_pred_to_gt(pred, gt, cfg), cfg.accuracy_fraction, method="linear"))


def mesh_completion(pred: TriangleMesh, gt: TriangleMesh, cfg: MetricsConfig = None) -> float:
    cfg = cfg or MetricsConfig()
    return float(np.mean(_gt_to_pred(pred, gt, cfg) <= cfg.completion_tol))


def sample_distances(pred: TriangleMesh, gt: TriangleMesh, cfg: MetricsConfig = None):
    """(pred->gt, gt->pred) distance arrays used by every metric."""
    cfg = cfg or MetricsConfig()
    return _pred_to_gt(pred, gt, cfg), _gt_to_pred(pred, gt, cfg)


def report_from_distances(d_pg, d_gp, cfg: MetricsConfig, pred_hash="", gt_hash="") -> MetricsReport:
    return MetricsReport(
        chamfer=0.5 * float(d_pg.mean() + d_gp.mean()),
        accuracy=float(np.quantile(d_pg, cfg.accuracy_fraction, method="linear")),
        completion=float(np.mean(d_gp <= cfg.completion_tol)),
        pred_to_gt_mean=float(d_pg.mean()),
        gt_to_pred_mean=float(d_gp.mean()),
        n_samples=cfg.n_samples,
        seed=cfg.seed,
        pred_hash=pred_hash,
        gt_hash=gt_hash,
        config=asdict(cfg),
    )


def evaluate(pred: TriangleMesh, gt: TriangleMesh, cfg: MetricsConfig = None) -> MetricsReport:
    """All three metrics from one pair of sample sets."""
    cfg = cfg or MetricsConfig()
    d_pg, d_gp = sample_distances(pred, gt, cfg)
    return report_from_distances(d_pg, d_gp, cfg, pred.content_hash(), gt.content_hash())

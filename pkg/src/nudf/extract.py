"""Dense surface point clouds from a distance field by repeated projection
q = p - d(p) * grad d(p), with re-seeding around accepted points."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from .errors import EmptyFieldError
from .rng import derive_seed

log = logging.getLogger(__name__)

DEGENERATE_GRAD = 1e-8


@dataclass
class ExtractConfig:
    n_initial: int = 100_000
    target_points: int = 100_000
    max_iters: int = 10
    accept_tol: Optional[float] = None     # default 0.002 * domain diagonal
    reseed_sigma: Optional[float] = None   # default 0.02 * domain diagonal
    max_rounds: int = 8
    normalize_gradient: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.accept_tol is not None and self.accept_tol <= 0:
            raise ValueError("accept_tol must be positive")

    def resolved(self, domain):
        diag = domain.diagonal
        return (self.accept_tol if self.accept_tol is not None else 0.002 * diag,
                self.reseed_sigma if self.reseed_sigma is not None else 0.02 * diag)


@dataclass
class DensePointCloud:
    points: np.ndarray
    residuals: np.ndarray
    provenance: dict = field(default_factory=dict)
    warning: Optional[str] = None

    def __len__(self):
        return len(self.points)


@dataclass
class Projection:
    points: np.ndarray      # final iterates (NaN rows where rejected)
    accepted: np.ndarray
    residuals: np.ndarray
    iterations: np.ndarray  # steps taken before acceptance
    degenerate: np.ndarray


def project_once(field, p, normalize_gradient=True):
    """One projection step. Returns (q, degenerate); q = p where the gradient
    norm is below 1e-8."""
    p = np.asarray(p, dtype=np.float64)
    single = p.ndim == 1
    p = p.reshape(-1, 3)
    d, g = field.eval_grad(p)
    gn = np.linalg.norm(g, axis=1)
    degenerate = gn < DEGENERATE_GRAD
    step = g / np.where(degenerate, 1.0, gn)[:, None] if normalize_gradient else g
    q = np.where(degenerate[:, None], p, p - d[:, None] * step)
    if single:
        return q[0], bool(degenerate[0])
    return q, degenerate


def project(field, p, cfg: ExtractConfig) -> Projection:
    """Iterate projection up to max_iters; accept points whose field value
    drops to accept_tol. Seeds hitting a vanishing gradient are dropped."""
    tol, _ = cfg.resolved(field.domain)
    p = np.array(p, dtype=np.float64).reshape(-1, 3)
    n = len(p)
    accepted = np.zeros(n, dtype=bool)
    degenerate = np.zeros(n, dtype=bool)
    iters = np.zeros(n, dtype=np.int64)
    resid = np.full(n, np.inf)
    active = np.arange(n)
    for it in range(cfg.max_iters + 1):
        if len(active) == 0:
            break
        d, g = field.eval_grad(p[active])
        ok = d <= tol
        accepted[active[ok]] = True
        resid[active[ok]] = d[ok]
        iters[active[ok]] = it
        active, d, g = active[~ok], d[~ok], g[~ok]
        if it == cfg.max_iters:
            resid[active] = d
            break
        gn = np.linalg.norm(g, axis=1)
        bad = gn < DEGENERATE_GRAD
        degenerate[active[bad]] = True
        active, d, g, gn = active[~bad], d[~bad], g[~bad], gn[~bad]
        step = g / gn[:, None] if cfg.normalize_gradient else g
        p[active] = p[active] - d[:, None] * step
        iters[active] = it + 1
    p[~accepted] = np.nan
    return Projection(p, accepted, resid, iters, degenerate)


def _dedupe(points, resid, eps=1e-7):
    if len(points) < 2:
        return points, resid
    pairs = cKDTree(points).query_pairs(eps, output_type="ndarray")
    if len(pairs) == 0:
        return points, resid
    drop = np.zeros(len(points), dtype=bool)
    drop[np.max(pairs, axis=1)] = True
    return points[~drop], resid[~drop]


def extract_dense_cloud(field, cfg: ExtractConfig, field_id="field") -> DensePointCloud:
    tol, sigma = cfg.resolved(field.domain)
    dom = field.domain
    rng = np.random.default_rng(derive_seed(cfg.seed, 40))
    seeds = rng.uniform(dom.lo, dom.hi, size=(cfg.n_initial, 3))
    proj = project(field, seeds, cfg)
    pts = proj.points[proj.accepted]
    res = proj.residuals[proj.accepted]
    if len(pts) == 0:
        raise EmptyFieldError("no seed reached the zero level set; the field has no surface in its domain")
    pts, res = _dedupe(pts, res)
    rounds = 1
    while len(pts) < cfg.target_points and rounds < cfg.max_rounds:
        pick = rng.integers(0, len(pts), size=cfg.n_initial)
        seeds = dom.clamp(pts[pick] + rng.normal(0.0, sigma, size=(cfg.n_initial, 3)))
        proj = project(field, seeds, cfg)
        pts = np.concatenate([pts, proj.points[proj.accepted]])
        res = np.concatenate([res, proj.residuals[proj.accepted]])
        pts, res = _dedupe(pts, res)
        rounds += 1
    warning = None
    if len(pts) < cfg.target_points:
        warning = f"only {len(pts)} of {cfg.target_points} target points after {rounds} rounds"
        log.warning(warning)
    prov = {"field": field_id, "rounds": rounds, "accept_tol": tol, "reseed_sigma": sigma,
            "config": asdict(cfg)}
    return DensePointCloud(pts, res, prov, warning)

"""Command line entry point: nudf sample|sd|fit|extract|mesh|metrics|pipeline|fixtures.

Exit codes: 0 success, 2 usage or input error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import fixtures as fx
from .bvh import build_index, set_threads
from .errors import FormatError, NudfError, NumericalError
from .extract import extract_dense_cloud
from .fields import load_grid, parse_analytic
from .fileio import load_mesh, load_point_cloud, save_mesh, save_point_cloud
from .geometry import Normalization, PointCloud, area_weighted_sample, boundary_loops
from .metrics import evaluate
from .mlp import init_mlp, load_weights, save_weights, train
from .pipeline import PipelineConfig, load_config, run_pipeline, stage_seed
from .sampler import generate_samples, read_samples, write_samples
from .shape_diameter import shape_diameter_field
from .surface import mesh_point_cloud, repair

log = logging.getLogger("nudf")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3


# -- config handling

def _config(args) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    cfg.seed = args.seed
    return cfg


def _override(section, args, mapping):
    """Copy non-None flags onto a config section; mapping is flag -> field."""
    for flag, name in mapping.items():
        val = getattr(args, flag, None)
        if val is not None:
            setattr(section, name, val)
    if hasattr(section, "__post_init__"):
        section.__post_init__()


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True))


# -- commands

def cmd_sample(args):
    cfg = _config(args)
    s = cfg.sampler
    _override(s, args, {"n_uniform": "n_uniform", "n_surface": "n_surface", "lam": "lam",
                        "sd_threshold": "sd_threshold", "sigma1": "sigma1", "sigma2": "sigma2"})
    s.seed = stage_seed(cfg.seed, "sample")
    mesh = load_mesh(args.mesh)
    samples = generate_samples(mesh, s, Normalization.fit(mesh, cfg.normalization_margin))
    write_samples(samples, args.out)
    print(f"wrote {len(samples)} samples to {args.out}")


def cmd_sd(args):
    cfg = _config(args)
    mesh = load_mesh(args.mesh)
    index = build_index(mesh)
    surf = area_weighted_sample(mesh, args.n, stage_seed(cfg.seed, "sd"))
    sd = shape_diameter_field(index, surf, cfg.sampler.sd_config, stage_seed(cfg.seed, "sd"))
    cloud = PointCloud(surf.points, surf.normals,
                       {"sd_forward": np.nan_to_num(sd.sd_forward, nan=-1.0),
                        "sd_flipped": np.nan_to_num(sd.sd_flipped, nan=-1.0)})
    save_point_cloud(cloud, args.out)
    print(f"wrote shape diameter at {len(cloud)} points to {args.out} (-1 marks no hit)")


def cmd_fit(args):
    cfg = _config(args)
    _override(cfg.train, args, {"lr": "learning_rate", "epochs": "max_epochs",
                                "batch_size": "batch_size", "patience": "early_stop_patience"})
    cfg.train.seed = stage_seed(cfg.seed, "fit")
    samples = read_samples(args.samples)
    mlp = init_mlp(cfg.mlp, cfg.train.seed)

    def progress(epoch, tr, va):
        if epoch % 10 == 0:
            log.info("epoch %d train %.5f val %.5f", epoch, tr, va)

    rep = train(mlp, samples, cfg.train, progress)
    save_weights(mlp, args.out)
    report_path = args.report or Path(args.out).with_suffix(".train.json")
    _write_json(report_path, asdict(rep))
    print(f"wrote weights to {args.out}; best validation L1 {rep.final_val_l1:.5f} at epoch {rep.best_epoch}")


def _field_from_args(args, cfg):
    sources = [x for x in (args.weights, args.grid, args.analytic) if x]
    if len(sources) != 1:
        raise ValueError("give exactly one of --weights, --grid, --analytic")
    if args.weights:
        return load_weights(args.weights, cfg.mlp.activation), Path(args.weights).stem
    if args.grid:
        return load_grid(args.grid), Path(args.grid).stem
    return parse_analytic(args.analytic), args.analytic


def cmd_extract(args):
    cfg = _config(args)
    e = cfg.extract
    _override(e, args, {"n_initial": "n_initial", "target_points": "target_points",
                        "max_iters": "max_iters", "accept_tol": "accept_tol"})
    e.seed = stage_seed(cfg.seed, "extract")
    fld, fid = _field_from_args(args, cfg)
    dense = extract_dense_cloud(fld, e, fid)
    pts, res = dense.points, dense.residuals
    if args.to_world:
        meta = json.loads(Path(args.to_world).read_text())
        norm = Normalization.from_matrix(meta["normalization"])
        pts, res = norm.to_world(pts), res * norm.scale
    save_point_cloud(PointCloud(pts, attributes={"residual": res}), args.out)
    if dense.warning:
        print(f"warning: {dense.warning}", file=sys.stderr)
    print(f"wrote {len(pts)} points to {args.out}")


def cmd_mesh(args):
    cfg = _config(args)
    m = cfg.meshing
    _override(m, args, {"subsample_target": "subsample_target", "knn": "knn_normals",
                        "support_radius": "support_radius", "hole_max_radius": "hole_max_radius"})
    if args.radii:
        m.bpa_radii = [float(r) for r in args.radii.split(",")]
    cloud = load_point_cloud(args.cloud)
    if len(cloud) == 0:
        raise FormatError(f"{args.cloud} holds no points")
    if args.recon == "external":
        if not args.mesh_in:
            raise ValueError("--recon external needs --mesh-in")
        mesh = repair(load_mesh(args.mesh_in), cloud.points, m)
    else:
        mesh = mesh_point_cloud(cloud, m)
    save_mesh(mesh, args.out, args.format)
    print(f"wrote {mesh.n_triangles} triangles, {len(boundary_loops(mesh.triangles))} boundary loops to {args.out}")


def cmd_metrics(args):
    cfg = _config(args)
    mc = cfg.metrics
    _override(mc, args, {"n_samples": "n_samples", "completion_tol": "completion_tol",
                         "accuracy_fraction": "accuracy_fraction"})
    mc.seed = stage_seed(cfg.seed, "metrics")
    rep = evaluate(load_mesh(args.pred), load_mesh(args.gt), mc)
    text = rep.to_json()
    if args.out:
        Path(args.out).write_text(text)
    print(text)


def cmd_pipeline(args):
    cfg = _config(args)
    _override(cfg.train, args, {"epochs": "max_epochs", "lr": "learning_rate"})
    mesh = load_mesh(args.mesh)

    def progress(epoch, tr, va):
        if epoch % 10 == 0:
            log.info("epoch %d train %.5f val %.5f", epoch, tr, va)

    res = run_pipeline(mesh, cfg, args.outdir, progress)
    r = res.report
    print(f"chamfer {r['chamfer_mm']:.4f} mm ({r['chamfer_normalized']:.5f} units), "
          f"accuracy {r['accuracy_mm']:.4f} mm, completion {r['completion']:.4f}; "
          f"report in {Path(args.outdir) / 'report.json'}")


def cmd_fixtures(args):
    out = Path(args.outdir)
    out.mkdir(parents=True, exist_ok=True)
    index = {}
    for name in sorted(fx.FIXTURES):
        fn, kind = fx.FIXTURES[name]
        mesh = fn()
        path = out / (name + (".obj" if args.format == "obj" else ".ply"))
        save_mesh(mesh, path, args.format)
        index[name] = {"file": path.name, "kind": kind, "vertices": mesh.n_vertices,
                       "triangles": mesh.n_triangles,
                       "boundary_loops": len(boundary_loops(mesh.triangles))}
        print(f"{name:16s} {kind:6s} {mesh.n_triangles:7d} triangles")
    _write_json(out / "fixtures.json", index)


# -- parser

def _env_int(name, default):
    raw = os.environ.get(name)
    if raw is None or raw == "":
        return default
    try:
        return int(raw)
    except ValueError:
        raise SystemExit(f"nudf: {name} must be an integer, got {raw!r}") from None


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="global seed (env NUDF_SEED, default 0)")
    common.add_argument("--threads", type=int, default=None, help="parallelism cap (env NUDF_THREADS)")
    common.add_argument("--config", help="JSON pipeline config; flags override it")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="nudf", description="Neural unsigned distance field pipeline")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sample", parents=[common], help="write a training sample set")
    s.add_argument("mesh")
    s.add_argument("out")
    s.add_argument("--n-uniform", type=int)
    s.add_argument("--n-surface", type=int)
    s.add_argument("--lam", type=float)
    s.add_argument("--sd-threshold", type=float)
    s.add_argument("--sigma1", type=float)
    s.add_argument("--sigma2", type=float)
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("sd", parents=[common], help="shape diameter at surface samples")
    s.add_argument("mesh")
    s.add_argument("out")
    s.add_argument("--n", type=int, default=10_000)
    s.set_defaults(func=cmd_sd)

    s = sub.add_parser("fit", parents=[common], help="fit a neural field to samples")
    s.add_argument("samples")
    s.add_argument("out")
    s.add_argument("--report")
    s.add_argument("--lr", type=float)
    s.add_argument("--epochs", type=int)
    s.add_argument("--batch-size", type=int)
    s.add_argument("--patience", type=int)
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("extract", parents=[common], help="dense point cloud from a field")
    s.add_argument("out")
    s.add_argument("--weights")
    s.add_argument("--grid")
    s.add_argument("--analytic", help="e.g. sphere:0,0,0,1")
    s.add_argument("--to-world", help="sample sidecar (.meta.json) whose normalisation maps the cloud to mm")
    s.add_argument("--n-initial", type=int)
    s.add_argument("--target-points", type=int)
    s.add_argument("--max-iters", type=int)
    s.add_argument("--accept-tol", type=float)
    s.set_defaults(func=cmd_extract)

    s = sub.add_parser("mesh", parents=[common], help="triangle mesh from a point cloud")
    s.add_argument("cloud")
    s.add_argument("out")
    s.add_argument("--recon", choices=["bpa", "external"], default="bpa")
    s.add_argument("--mesh-in", help="mesh from an external reconstructor (with --recon external)")
    s.add_argument("--subsample-target", type=int)
    s.add_argument("--knn", type=int)
    s.add_argument("--radii", help="comma separated ball radii in mm")
    s.add_argument("--support-radius", type=float)
    s.add_argument("--hole-max-radius", type=float)
    s.add_argument("--format", default="ply-binary", choices=["ply-binary", "ply-ascii", "obj"])
    s.set_defaults(func=cmd_mesh)

    s = sub.add_parser("metrics", parents=[common], help="chamfer, accuracy and completion")
    s.add_argument("pred")
    s.add_argument("gt")
    s.add_argument("out", nargs="?")
    s.add_argument("--n-samples", type=int)
    s.add_argument("--completion-tol", type=float)
    s.add_argument("--accuracy-fraction", type=float)
    s.set_defaults(func=cmd_metrics)

    s = sub.add_parser("pipeline", parents=[common], help="sample, fit, extract, mesh and score")
    s.add_argument("mesh")
    s.add_argument("outdir")
    s.add_argument("--epochs", type=int)
    s.add_argument("--lr", type=float)
    s.set_defaults(func=cmd_pipeline)

    s = sub.add_parser("fixtures", parents=[common], help="write the synthetic fixture meshes")
    s.add_argument("outdir")
    s.add_argument("--format", default="ply-binary", choices=["ply-binary", "ply-ascii", "obj"])
    s.set_defaults(func=cmd_fixtures)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.seed is None:
        args.seed = _env_int("NUDF_SEED", 0)
    threads = args.threads if args.threads is not None else _env_int("NUDF_THREADS", 0)
    if threads:
        set_threads(threads)
    try:
        args.func(args)
    except NumericalError as e:
        print(f"nudf {args.command}: numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (NudfError, OSError, ValueError, KeyError) as e:
        print(f"nudf {args.command}: {e}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

import json

import numpy as np
import pytest

from nudf import fixtures as fx
from nudf.extract import ExtractConfig
from nudf.geometry import Normalization
from nudf.metrics import MetricsConfig
from nudf.mlp import TrainConfig
from nudf.pipeline import (STAGE_OFFSETS, PipelineConfig, from_dict, load_config, run_pipeline, score,
                           stage_seed, to_dict)
from nudf.sampler import SamplerConfig


def _small(seed=0):
    return PipelineConfig(sampler=SamplerConfig(n_uniform=2000, n_surface=8000),
                          train=TrainConfig(learning_rate=1e-3, max_epochs=15, batch_size=1024),
                          extract=ExtractConfig(n_initial=20_000, target_points=20_000),
                          metrics=MetricsConfig(n_samples=5000), seed=seed)


def test_stage_seeds_follow_global_seed():
    cfg = PipelineConfig(seed=41).with_stage_seeds()
    assert cfg.sampler.seed == 41 + STAGE_OFFSETS["sample"]
    assert cfg.train.seed == 41 + STAGE_OFFSETS["fit"]
    assert cfg.extract.seed == 41 + STAGE_OFFSETS["extract"]
    assert cfg.metrics.seed == 41 + STAGE_OFFSETS["metrics"]
    assert len(set(STAGE_OFFSETS.values())) == len(STAGE_OFFSETS)
    assert stage_seed(2 ** 64 - 1, "sd") == 0


def test_config_round_trip(tmp_path):
    cfg = _small(3)
    assert from_dict(to_dict(cfg)) == cfg
    p = tmp_path / "c.json"
    p.write_text(json.dumps(to_dict(cfg)))
    assert load_config(p) == cfg


@pytest.mark.parametrize("bad", [{"bogus": 1}, {"train": {"lr": 1}}, {"metrics": {"n_samples": 0}}])
def test_config_rejects_bad_keys(bad):
    with pytest.raises(ValueError):
        from_dict(bad)


def test_config_not_json(tmp_path):
    p = tmp_path / "c.json"
    p.write_text("{nope")
    with pytest.raises(ValueError):
        load_config(p)
    p.write_text("[1, 2]")
    with pytest.raises(ValueError):
        load_config(p)


def test_score_reports_normalized_values(sphere20):
    norm = Normalization.fit(sphere20)
    rep = score(sphere20, sphere20, norm, MetricsConfig(n_samples=2000))
    assert rep["chamfer_mm"] <= 1e-6 and rep["completion_normalized"] == 1.0
    assert rep["scale_mm_per_unit"] == norm.scale
    assert rep["chamfer_normalized"] == rep["chamfer_mm"] / norm.scale


@pytest.fixture(scope="module")
def small_runs(tmp_path_factory):
    mesh = fx.icosphere(20.0, 3)
    a = tmp_path_factory.mktemp("a")
    b = tmp_path_factory.mktemp("b")
    return mesh, run_pipeline(mesh, _small(), a), a, run_pipeline(mesh, _small(), b), b


def test_pipeline_writes_artifacts(small_runs):
    _, res, out, _, _ = small_runs
    for name in ("samples.nuds", "weights.nudw", "train_report.json", "cloud.ply", "mesh.ply",
                 "config.json", "report.json", "timings.json"):
        assert (out / name).exists(), name
    rep = json.loads((out / "report.json").read_text())
    assert rep["n_training_samples"] == 10_000 and rep["global_seed"] == 0
    assert "fit" not in rep and "timings" not in rep
    assert json.loads((out / "config.json").read_text())["train"]["seed"] == stage_seed(0, "fit")


def test_pipeline_deterministic(small_runs):
    _, _, a, _, b = small_runs
    for name in ("samples.nuds", "weights.nudw", "cloud.ply", "mesh.ply", "report.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_pipeline_seed_changes_result(small_runs, tmp_path):
    mesh, res, _, _, _ = small_runs
    other = run_pipeline(mesh, _small(seed=1))
    assert other.report["pred_hash"] != res.report["pred_hash"]


def test_cloud_is_in_millimetres(small_runs):
    _, res, _, _, _ = small_runs
    r = np.linalg.norm(res.cloud.points, axis=1)
    assert np.median(r) == pytest.approx(20.0, rel=0.1)
    assert "residual" in res.cloud.attributes

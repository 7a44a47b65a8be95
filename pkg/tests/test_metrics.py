import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nudf import fixtures as fx
from nudf.errors import EmptyInputError
from nudf.geometry import TriangleMesh
from nudf.metrics import (MetricsConfig, chamfer_distance, evaluate, mesh_accuracy, mesh_completion)

CFG = MetricsConfig(n_samples=20_000, seed=1)


@pytest.fixture(scope="module")
def unit_spheres():
    return {r: fx.icosphere(r, 5) for r in (1.0, 1.1, 1.2)}



def test_self_metrics(sphere20):
    rep = evaluate(sphere20, sphere20, CFG)
    assert rep.chamfer <= 1e-6 and rep.accuracy <= 1e-6 and rep.completion == 1.0


def test_concentric_chamfer(unit_spheres):
    d = chamfer_distance(unit_spheres[1.0], unit_spheres[1.2], CFG)
    # facets of a level-5 icosphere sag by under 1e-3 of the radius
    assert d == pytest.approx(0.2, abs=2e-3)


def test_concentric_accuracy(unit_spheres):
    assert mesh_accuracy(unit_spheres[1.1], unit_spheres[1.0], CFG) == pytest.approx(0.1, abs=2e-3)


def test_symmetry(unit_spheres):
    a, b = unit_spheres[1.0], unit_spheres[1.1]
    # the same per-direction streams are used either way round
    assert chamfer_distance(a, b, CFG) == pytest.approx(chamfer_distance(b, a, CFG), abs=5e-4)


def test_outlier_blob_does_not_move_accuracy(sphere20):
    cube = fx.unit_cube()
    side = np.sqrt(0.05 * sphere20.area() / 6)
    blob = TriangleMesh(cube.vertices * side + 200.0, cube.triangles)
    pred = fx.merge_meshes(sphere20, blob)
    assert 0.04 < blob.area() / pred.area() < 0.06
    assert mesh_accuracy(pred, sphere20, CFG) <= 1e-6


def test_hemisphere_completion(sphere20):
    # upper half of the sphere: completion is the covered cap area plus the
    # band within tol of the rim, (1 + sin(tol / r)) / 2
    upper = sphere20.submesh(sphere20.corners().mean(1)[:, 2] > 0)
    cfg = MetricsConfig(n_samples=50_000, completion_tol=0.5, seed=2)
    expect = 0.5 * (1 + np.sin(0.5 / 20.0))
    assert mesh_completion(upper, sphere20, cfg) == pytest.approx(expect, abs=0.01)


def test_far_completion_zero(sphere20):
    far = TriangleMesh(sphere20.vertices + 1000.0, sphere20.triangles)
    assert mesh_completion(far, sphere20, CFG) == 0.0


def test_empty_mesh_errors(sphere20):
    empty = TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))
    for fn in (chamfer_distance, mesh_accuracy, mesh_completion):
        with pytest.raises(EmptyInputError):
            fn(empty, sphere20, CFG)
        with pytest.raises(EmptyInputError):
            fn(sphere20, empty, CFG)


def _rot(a, b, c):
    ca, sa, cb, sb, cc, sc = np.cos(a), np.sin(a), np.cos(b), np.sin(b), np.cos(c), np.sin(c)
    rz = np.array([[ca, -sa, 0], [sa, ca, 0], [0, 0, 1]])
    ry = np.array([[cb, 0, sb], [0, 1, 0], [-sb, 0, cb]])
    rx = np.array([[1, 0, 0], [0, cc, -sc], [0, sc, cc]])
    return rz @ ry @ rx


@pytest.fixture(scope="module")
def pair():
    return fx.icosphere(1.0, 3), fx.torus(0.8, 0.3, 48, 24)


@settings(max_examples=8, deadline=None)
@given(st.floats(0, 6.28), st.floats(0, 6.28), st.floats(0, 6.28),
       st.lists(st.floats(-5, 5), min_size=3, max_size=3))
def test_rigid_invariance(pair, a, b, c, t):
    R, t = _rot(a, b, c), np.array(t)
    cfg = MetricsConfig(n_samples=2000, completion_tol=0.1, seed=3)
    moved = [TriangleMesh(m.vertices @ R.T + t, m.triangles) for m in pair]
    r0, r1 = evaluate(*pair, cfg), evaluate(*moved, cfg)
    assert abs(r0.chamfer - r1.chamfer) <= 1e-6
    assert abs(r0.accuracy - r1.accuracy) <= 1e-6
    assert abs(r0.completion - r1.completion) <= 1e-6


@settings(max_examples=8, deadline=None)
@given(st.floats(0.1, 10))
def test_scale_equivariance(pair, s):
    cfg = MetricsConfig(n_samples=2000, completion_tol=0.1, seed=3)
    scaled_cfg = MetricsConfig(n_samples=2000, completion_tol=0.1 * s, seed=3)
    r0 = evaluate(*pair, cfg)
    r1 = evaluate(*[TriangleMesh(m.vertices * s, m.triangles) for m in pair], scaled_cfg)
    assert r1.chamfer == pytest.approx(s * r0.chamfer, rel=1e-6)
    assert r1.accuracy == pytest.approx(s * r0.accuracy, rel=1e-6)
    assert r1.completion == pytest.approx(r0.completion, abs=1e-3)


@settings(max_examples=10, deadline=None)
@given(st.floats(0.01, 0.5), st.floats(0.01, 0.5))
def test_completion_monotone_in_tol(pair, t1, t2):
    lo, hi = sorted((t1, t2))
    c_lo = mesh_completion(*pair, MetricsConfig(n_samples=2000, completion_tol=lo))
    c_hi = mesh_completion(*pair, MetricsConfig(n_samples=2000, completion_tol=hi))
    assert c_lo <= c_hi


def test_report_json(sphere20):
    rep = json.loads(evaluate(sphere20, sphere20, CFG).to_json())
    for key in ("chamfer_mm", "accuracy_mm", "completion", "n_samples", "seed", "pred_hash", "gt_hash"):
        assert key in rep
    assert rep["pred_hash"] == rep["gt_hash"] == sphere20.content_hash()


def test_deterministic(pair):
    assert evaluate(*pair, CFG) == evaluate(*pair, CFG)


def test_config_validation():
    for kw in ({"accuracy_fraction": 1.0}, {"accuracy_fraction": 0.0}, {"completion_tol": 0.0}, {"n_samples": 0}):
        with pytest.raises(ValueError):
            MetricsConfig(**kw)

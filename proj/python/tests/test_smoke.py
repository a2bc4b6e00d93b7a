import json
import math

import numpy as np
import pytest

import facereg


def small_spec():
    spec = json.loads(facereg.default_phantom_spec_json())
    spec["volume"] = {"dims": [88, 80, 58], "spacing_mm": 2.0}
    spec["camera"].update(width=320, height=240, fx=307.5, fy=307.5, cx=159.5, cy=119.5)
    return spec


def test_estimate_rigid_recovers_a_known_motion():
    rng = np.random.default_rng(3)
    truth = facereg.RigidTransform.from_axis_angle([0.2, -1.0, 0.4], 2.5, [100.0, -40.0, 7.0])
    src = rng.uniform(-50, 50, size=(10, 3))
    est = facereg.estimate_rigid(src, truth.apply(src))
    assert np.abs(est.matrix() - truth.matrix()).max() < 1e-9
    assert facereg.rotation_error(est, truth) < 1e-9


def test_transform_algebra():
    t = facereg.RigidTransform.from_axis_angle([0, 0, 1], math.pi / 2, [1, 2, 3])
    pts = np.array([[1.0, 0.0, 0.0]])
    assert np.allclose(t.apply(pts), [[1.0, 3.0, 3.0]])
    assert np.allclose((t.inverse() @ t).matrix(), np.eye(4))


def test_icp_is_monotone_and_recovers_offset():
    rng = np.random.default_rng(5)
    tgt = rng.uniform(-50, 50, size=(400, 3))
    offset = facereg.RigidTransform.from_axis_angle([1, 1, 0], 0.05, [2.0, -1.0, 0.5])
    src = offset.inverse().apply(tgt)
    res = facereg.icp(src, tgt)
    rmse = np.array(res.per_iteration_rmse)
    assert np.all(np.diff(rmse) <= 1e-12)
    assert res.rmse < 1e-6
    assert facereg.evaluate_rmse(src, tgt, res.transform) == pytest.approx(res.rmse, abs=1e-9)


def test_nearest_matches_brute_force():
    rng = np.random.default_rng(9)
    pts = rng.uniform(-10, 10, size=(300, 3))
    q = rng.uniform(-12, 12, size=(50, 3))
    idx, dist = facereg.nearest(pts, q)
    d = np.linalg.norm(pts[None, :, :] - q[:, None, :], axis=2)
    assert np.array_equal(idx, d.argmin(axis=1))
    assert np.allclose(dist, d.min(axis=1))


def test_marching_cubes_sphere():
    n = 32
    z, y, x = np.meshgrid(np.arange(n), np.arange(n), np.arange(n), indexing="ij")
    c = 15.5
    vol = np.sqrt((x - c) ** 2 + (y - c) ** 2 + (z - c) ** 2)
    verts, normals, tris = facereg.marching_cubes(vol, 10.0)
    assert tris.shape[1] == 3 and len(verts) == len(normals)
    assert np.abs(np.linalg.norm(verts - c, axis=1) - 10.0).max() <= 0.5


def test_errors_map_to_python_exceptions():
    with pytest.raises(facereg.PipelineError):
        facereg.marching_cubes(np.zeros((4, 4, 4)), 1.0)
    with pytest.raises(facereg.InputError):
        facereg.estimate_rigid(np.zeros((2, 3)), np.zeros((2, 3)))
    with pytest.raises(ValueError):
        facereg.run_comparison(methods="nope")
    with pytest.raises(ValueError):
        facereg.generate_phantom("{not json")


def test_phantom_and_depth_cloud():
    spec = small_spec()
    d = facereg.generate_phantom(json.dumps(spec))
    assert d["volume"].shape == (58, 80, 88)
    k = d["intrinsics"]
    cloud = facereg.depth_to_cloud(d["depth"], k["fx"], k["fy"], k["cx"], k["cy"], k["depth_scale"])
    assert cloud.shape[1] == 3 and len(cloud) == np.count_nonzero(d["depth"])
    assert len(d["camera_landmarks"]) == 21


def test_comparison_report_for_ours():
    report = facereg.run_comparison(small_spec(), methods=["ours"], trials=1)
    (row,) = report["rows"]
    assert row["method"] == "ours"
    assert row["fine_rmse_mm"] <= 1.1
    assert row["t_total_s"] == pytest.approx(row["t_coarse_s"] + row["t_fine_s"])

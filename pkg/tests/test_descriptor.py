import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from oracles import brute_force_field
from pushsub.descriptor import (RoiConfig, bev_project, bin_edge_points, descriptor_pipeline, edge_norms,
                                lidar_norms, proximity_from_edges, proximity_from_grid, proximity_starts,
                                roi_filter, voxelize)
from pushsub.geometry import Pose2, Transform3
from pushsub.sensors import CameraConfig, LidarConfig, SegmentedDepthFrame, depth_render, lidar_scan
from pushsub.world import RobotSpec, WorldState, box, cylinder, object_outline

CFG = RoiConfig()
HB = 0.3
ROBOT = RobotSpec()


def random_cloud(rng, n):
    return oracles.random_cloud(rng, n, CFG, HB)


# ---------------------------------------------------------------- config

def test_reference_roi_grid_size():
    assert (CFG.M, CFG.S) == (16, 12)
    assert CFG.max_norm() == pytest.approx(0.31, abs=1e-12)


def test_roi_config_validation():
    with pytest.raises(ValueError):
        RoiConfig(eps_x_min=0.7)
    with pytest.raises(ValueError):
        RoiConfig(g_x=0.0)
    with pytest.raises(ValueError):
        RoiConfig(g_x=0.03)  # 0.32 is not a whole number of 3 cm cells


def test_proximity_starts_are_first_cell_centres():
    st_ = proximity_starts(CFG, HB)
    np.testing.assert_allclose(st_[:, 0], 0.31)
    np.testing.assert_allclose(st_[:, 1], -0.275 + 0.05 * np.arange(12), atol=1e-12)
    np.testing.assert_allclose(st_[:, 2], HB)


# ---------------------------------------------------------------- roi filter

def test_roi_keeps_interior_point():
    assert len(roi_filter([[0.45, 0.0, 0.0]], CFG)) == 1


def test_roi_boundary_is_strict():
    pts = [[0.30, 0, 0], [0.62, 0, 0], [0.4, -0.3, 0], [0.4, 0.3, 0], [0.4, 0, -0.4], [0.4, 0, 0.5]]
    assert len(roi_filter(pts, CFG)) == 0


def test_roi_matches_per_point_check():
    rng = np.random.default_rng(0)
    pts = rng.uniform([0.0, -0.6, -0.8], [1.0, 0.6, 1.0], size=(1000, 3))
    want = [p for p in pts if 0.3 < p[0] < 0.62 and -0.3 < p[1] < 0.3 and -0.4 < p[2] < 0.5]
    np.testing.assert_array_equal(roi_filter(pts, CFG), np.array(want))


# ---------------------------------------------------------------- BEV

def test_bev_examples():
    np.testing.assert_array_equal(bev_project([[0.4, 0.1, -0.2]], 0.3), [[0.4, 0.1, 0.3]])
    assert bev_project(np.zeros((0, 3)), 0.3).shape == (0, 3)
    p = np.array([[0.4, 0.1, 0.3], [0.5, -0.2, 0.3]])
    np.testing.assert_array_equal(bev_project(p, 0.3), p)


def test_bev_does_not_mutate_input():
    p = np.array([[0.4, 0.1, -0.2]])
    bev_project(p, 0.3)
    assert p[0, 2] == -0.2


# ---------------------------------------------------------------- voxelize

def test_voxelize_hand_traced_cell():
    g = voxelize([[0.40, 0.025, HB]], CFG)
    assert (g.M, g.S) == (16, 12)
    assert g.a_edges[5] == pytest.approx(0.40) and g.b_edges[6] == pytest.approx(0.0, abs=1e-15)
    occupied = [(m, s) for m in range(g.M) for s in range(g.S) if g.cells[m][s]]
    assert occupied == [(5, 6)]


def test_voxelize_rejects_points_outside_grid():
    with pytest.raises(ValueError):
        voxelize([[0.7, 0.0, HB]], CFG)
    with pytest.raises(ValueError):
        voxelize([[0.4, 0.3, HB]], CFG)


@pytest.mark.parametrize("seed", range(100))
def test_voxelize_and_field_match_brute_force(seed):
    rng = np.random.default_rng(seed)
    pts = random_cloud(rng, int(rng.integers(0, 60)))
    # snap a few points onto cell edges to exercise the half-open rule
    k = min(len(pts), 5)
    pts[:k, 0] = CFG.a_edges()[rng.integers(0, CFG.M, k)]
    pts[:k, 1] = CFG.b_edges()[rng.integers(0, CFG.S, k)]
    g = voxelize(pts, CFG)
    cells, norms = brute_force_field(pts, CFG)
    for m in range(CFG.M):
        for s in range(CFG.S):
            np.testing.assert_array_equal(np.array(g.cells[m][s]).reshape(-1, 3), np.array(cells[m][s]).reshape(-1, 3))
    np.testing.assert_array_equal(proximity_from_grid(g, CFG, HB).norms, norms)


# ---------------------------------------------------------------- grid proximity

def test_empty_scene_norms():
    f = proximity_from_grid(voxelize(np.zeros((0, 3)), CFG), CFG, HB)
    assert f.norms.shape == (12,)
    assert np.all(np.abs(f.norms - 0.31) <= 1e-12)


def test_single_point_norm():
    n = proximity_from_grid(voxelize([[0.40, 0.025, HB]], CFG), CFG, HB).norms
    assert n[6] == pytest.approx(0.09, abs=1e-12)
    np.testing.assert_allclose(np.delete(n, 6), 0.31, atol=1e-12)


def test_two_points_same_cell_use_mean():
    n = proximity_from_grid(voxelize([[0.40, 0.025, HB], [0.41, 0.026, HB]], CFG), CFG, HB).norms
    assert n[6] == pytest.approx(0.095, abs=1e-12)


def test_closest_row_wins_over_farther_points():
    n = proximity_from_grid(voxelize([[0.55, 0.025, HB], [0.40, 0.03, HB], [0.405, 0.01, HB]], CFG), CFG, HB).norms
    assert n[6] == pytest.approx(0.0925, abs=1e-12)


def test_field_vectors_consistent_with_norms():
    rng = np.random.default_rng(3)
    f = proximity_from_grid(voxelize(random_cloud(rng, 40), CFG), CFG, HB)
    np.testing.assert_allclose(f.norms, np.linalg.norm(f.ends - f.starts, axis=1), atol=1e-15)
    np.testing.assert_array_equal(f.ends[:, 1:], f.starts[:, 1:])


# ---------------------------------------------------------------- edge path

def test_bin_edges_examples():
    bins = bin_edge_points([[0.4, -0.3, HB], [0.4, 0.049, HB]], CFG)
    assert len(bins) == 12
    assert len(bins[0]) == 1 and len(bins[6]) == 1


def test_bins_match_brute_force():
    rng = np.random.default_rng(1)
    pts = random_cloud(rng, 300)
    bins = bin_edge_points(pts, CFG)
    b = CFG.b_edges()
    for s in range(CFG.S):
        want = np.array([p for p in pts if b[s] <= p[1] < b[s + 1]]).reshape(-1, 3)
        np.testing.assert_array_equal(bins[s], want)


def test_edges_empty_and_min_rule():
    empty = proximity_from_edges(bin_edge_points(np.zeros((0, 3)), CFG), CFG, HB).norms
    np.testing.assert_allclose(empty, 0.31, atol=1e-12)
    n = proximity_from_edges(bin_edge_points([[0.40, 0.02, HB], [0.50, 0.03, HB]], CFG), CFG, HB).norms
    assert n[6] == pytest.approx(0.09, abs=1e-12)


def test_edges_equal_grid_when_each_bin_has_one_point():
    rng = np.random.default_rng(2)
    ys = CFG.b_edges()[:-1] + rng.uniform(0, CFG.g_y, CFG.S)
    keep = rng.random(CFG.S) < 0.7
    pts = np.column_stack([rng.uniform(0.31, 0.61, CFG.S), ys, np.full(CFG.S, HB)])[keep]
    a = proximity_from_edges(bin_edge_points(pts, CFG), CFG, HB).norms
    b = proximity_from_grid(voxelize(pts, CFG), CFG, HB).norms
    np.testing.assert_array_equal(a, b)


# ---------------------------------------------------------------- properties

cloud_strategy = st.integers(0, 2 ** 32 - 1).flatmap(
    lambda seed: st.integers(0, 80).map(lambda n: random_cloud(np.random.default_rng(seed), n)))


@given(cloud_strategy)
def test_norm_bounds(pts):
    for n in (proximity_from_grid(voxelize(pts, CFG), CFG, HB).norms,
              proximity_from_edges(bin_edge_points(pts, CFG), CFG, HB).norms):
        assert n.shape == (12,)
        assert np.all(n >= 0) and np.all(n <= CFG.max_norm() + 1e-12)


def _approach(pts, frac):
    """Shift a cloud toward the robot without crossing the first cell centre."""
    x0 = CFG.eps_x_min + CFG.g_x / 2
    room = float(pts[:, 0].min() - x0) if len(pts) else 0.0
    moved = pts.copy()
    moved[:, 0] -= max(room, 0.0) * frac
    return moved


@given(cloud_strategy, st.floats(0.0, 1.0))
def test_min_rule_monotone_under_approach(pts, frac):
    pts = pts[pts[:, 0] >= CFG.eps_x_min + CFG.g_x / 2]
    moved = _approach(pts, frac)
    before = proximity_from_edges(bin_edge_points(pts, CFG), CFG, HB).norms
    after = proximity_from_edges(bin_edge_points(moved, CFG), CFG, HB).norms
    assert np.all(after <= before)


@given(cloud_strategy, st.floats(0.0, 1.0))
def test_mean_rule_increase_bounded_by_one_cell(pts, frac):
    # the mean of the closest cell can rise when points from the next row slide in
    pts = pts[pts[:, 0] >= CFG.eps_x_min + CFG.g_x / 2]
    moved = _approach(pts, frac)
    before = proximity_from_grid(voxelize(pts, CFG), CFG, HB).norms
    after = proximity_from_grid(voxelize(moved, CFG), CFG, HB).norms
    assert np.all(after < before + CFG.g_x)


def test_flush_face_norms_monotone_under_approach():
    b = box("b", 0.4, 0.4, 20.0)
    lidar = LidarConfig(noise_sigma=0.0)
    prev = None
    for x in np.arange(0.75, 0.52, -0.004):
        s = WorldState(Pose2(0, 0, 0), Pose2(x, 0.0, 0.0))
        n = lidar_norms(lidar_scan(s, lidar, b), lidar.mount, CFG, HB)[2:10]
        assert np.all(n < 0.31)
        if prev is not None:
            assert np.all(n <= prev + 1e-12)
        prev = n


# ---------------------------------------------------------------- full pipeline

def test_pipeline_empty_lidar_and_depth():
    lidar, cam = LidarConfig(), CameraConfig()
    np.testing.assert_allclose(descriptor_pipeline(np.zeros((0, 3)), lidar.mount, CFG, HB, "lidar"), 0.31, atol=1e-12)
    frame = SegmentedDepthFrame(np.ones((120, 160)), np.zeros((120, 160), bool), 150.0, 150.0, 79.5, 59.5)
    np.testing.assert_allclose(descriptor_pipeline(frame, cam.mount, CFG, HB, "depth"), 0.31, atol=1e-12)
    with pytest.raises(ValueError):
        descriptor_pipeline(frame, cam.mount, CFG, HB, "sonar")


def test_fast_lidar_path_equals_reference_pipeline():
    lidar = LidarConfig()
    rng = np.random.default_rng(4)
    objs = [box("b", 0.4, 0.4, 20.0), cylinder("c", 0.25, 25.0)]
    for i in range(40):
        obj = objs[i % 2]
        s = WorldState(Pose2(0, 0, 0), Pose2(rng.uniform(0.5, 0.8), rng.uniform(-0.3, 0.3), rng.uniform(-3, 3)))
        cloud = lidar_scan(s, lidar, obj, rng)
        np.testing.assert_allclose(lidar_norms(cloud, lidar.mount, CFG, HB),
                                   descriptor_pipeline(cloud, lidar.mount, CFG, HB, "lidar"), atol=1e-15)


def test_flush_box_norms_match_face_position():
    b = box("b", 0.4, 0.4, 20.0)
    s = WorldState(Pose2(0, 0, 0), Pose2(ROBOT.front_x + 0.2, 0.0, 0.0))
    lidar = LidarConfig(noise_sigma=0.0)
    n = descriptor_pipeline(lidar_scan(s, lidar, b), lidar.mount, CFG, HB, "lidar")
    np.testing.assert_allclose(n[2:10], ROBOT.front_x - 0.31, atol=1e-12)
    np.testing.assert_allclose(n[[0, 1, 11]], 0.31, atol=1e-12)
    noisy = lidar_scan(s, LidarConfig(), b, np.random.default_rng(0))
    n2 = descriptor_pipeline(noisy, lidar.mount, CFG, HB, "lidar")
    np.testing.assert_allclose(n2[2:10], ROBOT.front_x - 0.31, atol=0.02)


def _run_ends(occ):
    idx = np.flatnonzero(occ)
    return set() if idx.size == 0 else {idx.min(), idx.max()}


@pytest.mark.parametrize("seed", range(30))
def test_cross_modal_consistency(seed):
    rng = np.random.default_rng(seed)
    objs = [box("b", 0.4, 0.4, 20.0), cylinder("c", 0.25, 25.0), box("n", 0.45, 0.45, 15.0, height=0.6)]
    obj = objs[seed % 3]
    th, y = rng.uniform(-math.pi, math.pi), rng.uniform(-0.2, 0.2)
    probe = Pose2(1.0, y, th)
    near = 1.0 - obj.radius if obj.shape == "circle" else object_outline(obj, probe)[:, 0].min()
    # put the closest point of the object between 0.33 and 0.5 m ahead
    pose = Pose2(1.0 + rng.uniform(0.33, 0.5) - near, y, th)
    s = WorldState(Pose2(0, 0, 0), pose)
    lidar, cam = LidarConfig(noise_sigma=0.0), CameraConfig(depth_noise_sigma=0.0)
    a = descriptor_pipeline(lidar_scan(s, lidar, obj), lidar.mount, CFG, HB, "lidar")
    d = descriptor_pipeline(depth_render(s, cam, obj), cam.mount, CFG, HB, "depth")
    oa, od = a < 0.31 - 1e-12, d < 0.31 - 1e-12
    # sliver columns at the lateral extremes depend on beam and pixel sampling
    edge = _run_ends(oa) | _run_ends(od)
    inner = [s_ for s_ in range(CFG.S) if oa[s_] and od[s_] and s_ not in edge]
    assert inner
    assert np.abs(a[inner] - d[inner]).max() <= 2 * CFG.g_x
    assert set(np.flatnonzero(oa ^ od)) <= edge


def test_edge_norms_from_camera_points():
    mount = Transform3.identity()
    n = edge_norms(np.array([[0.40, 0.02, 0.1], [0.45, 0.02, 0.1]]), mount, CFG, HB)
    assert n[6] == pytest.approx(0.09, abs=1e-12)

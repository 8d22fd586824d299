# SPDX-License-Identifier: Apache-2.0
import math
import os
import subprocess
import sys

import numpy as np
import pytest

import sparsefusion as sf


def make_sphere_scene():
    scene = sf.AnalyticScene()
    scene.add_sphere([0.0, 0.0, 1.3], 0.4)
    offset = 0.4 / math.sqrt(3.0)
    for i in range(8):
        scene.add_sphere(
            [
                offset if i & 1 else -offset,
                offset if i & 2 else -offset,
                1.3 + (offset if i & 4 else -offset),
            ],
            0.12,
        )
    return scene


def make_grid(blocks=16, voxels=8):
    cfg = sf.GridConfig()
    cfg.blocks_per_axis = blocks
    cfg.voxels_per_block_axis = voxels
    cfg.box_origin = [-0.75, -0.75, 0.55]
    cfg.box_side = 1.5
    return sf.SparseTsdfGrid(cfg, pool_capacity=2048)


def test_grid_memory_formula_and_voxel_roundtrip():
    grid = make_grid()
    n, m = 16, 8
    assert grid.memory_bytes() == 4 * n**3
    slot = grid.allocate_block([3, 4, 5])
    assert slot == 0
    assert grid.memory_bytes() == 4 * n**3 + 2 * m**3

    voxel = np.array([3, 4, 5]) * m + 2
    assert grid.read_voxel(voxel) is None  # chi
    grid.write_voxel(voxel, 0.5 * grid.delta, aux=1.0)
    tsdf, _ = grid.read_voxel(voxel)
    assert abs(tsdf - 0.5 * grid.delta) <= grid.delta / 126.0


def test_render_depth_and_normals():
    scene = sf.AnalyticScene()
    scene.add_sphere([0.0, 0.0, 2.0], 1.0)
    intr = sf.Intrinsics.simple(64, 48, 55.0)
    frame = sf.render_synthetic_depth(scene, sf.Pose.identity(), intr)
    depth = frame.depth
    assert depth.shape == (48, 64)
    assert abs(depth[24, 32] - 1.0) < 1e-3  # on-axis: distance minus radius
    assert depth[0, 0] == 0.0  # corner ray misses

    normals = sf.compute_normals(frame, sigma0=2.5e-4, spatial_scale=0.01)
    array = normals.array
    assert array.shape == (48, 64, 3)
    center = array[24, 32]
    assert np.linalg.norm(center - np.array([0.0, 0.0, -1.0])) < 0.05


def test_fuse_raycast_and_marching_cubes(tmp_path):
    scene = make_sphere_scene()
    intr = sf.Intrinsics.simple(160, 120, 140.0)
    grid = make_grid()
    params = sf.FusionParams()
    params.mode = sf.FusionMode.Weighted
    poses = sf.orbit_trajectory([0.0, 0.0, 1.3], 1.3, 8, arc=2.0 * math.pi / 3.0)
    for pose in poses:
        frame = sf.render_synthetic_depth(scene, pose, intr)
        stats = sf.fuse_frame(grid, frame, pose, params)
    assert stats.blocks_total > 50
    assert stats.memory_bytes == grid.memory_bytes()

    depth, normals, hits = sf.raycast(grid, poses[0], intr)
    assert hits > 1000
    rendered = sf.render_synthetic_depth(scene, poses[0], intr).depth
    cast = depth.depth
    both = (cast > 0) & (rendered > 0)
    agree = np.abs(cast[both] - rendered[both]) <= grid.voxel_size
    assert agree.mean() > 0.9

    vertices, vnormals, triangles = sf.marching_cubes(grid)
    assert len(vertices) > 2000 and len(triangles) > 2000
    errors = [abs(scene.signed_distance(v)) for v in vertices[::37]]
    assert np.sqrt(np.mean(np.square(errors))) < grid.voxel_size

    path = str(tmp_path / "mesh.ply")
    sf.write_ply(vertices, vnormals, triangles, path)
    rv, rn, rt = sf.read_ply(path)
    assert rv.shape == vertices.shape and rt.shape == triangles.shape


def test_icp_recovers_small_perturbation():
    scene = make_sphere_scene()
    intr = sf.Intrinsics.simple(160, 120, 140.0)
    target_pose = sf.orbit_trajectory([0.0, 0.0, 1.3], 1.3, 8)[1]
    angle = math.radians(2.0)
    perturb = sf.Pose()
    perturb.rotation = np.array(
        [
            [math.cos(angle), 0.0, math.sin(angle)],
            [0.0, 1.0, 0.0],
            [-math.sin(angle), 0.0, math.cos(angle)],
        ]
    )
    perturb.translation = [0.01, -0.005, 0.008]
    source_pose = sf.compose(target_pose, perturb)

    target = sf.render_synthetic_depth(scene, target_pose, intr)
    source = sf.render_synthetic_depth(scene, source_pose, intr)
    target_normals = sf.compute_normals(target, spatial_scale=0.006)

    params = sf.MatchParams.for_voxel_size(1.5 / 256.0)
    result = sf.icp(source, target, target_normals, sf.Pose.identity(), params)
    truth = sf.compose(sf.invert(target_pose), source_pose)
    rot_err = np.arccos(
        np.clip((np.trace(result.delta.rotation.T @ truth.rotation) - 1.0) / 2.0, -1.0, 1.0)
    )
    assert result.matches > 1000
    assert rot_err < math.radians(0.1)
    assert np.linalg.norm(result.delta.translation - truth.translation) < 1e-3


def test_pool_exhaustion_raises():
    cfg = sf.GridConfig()
    cfg.blocks_per_axis = 4
    cfg.voxels_per_block_axis = 4
    cfg.box_side = 1.0
    grid = sf.SparseTsdfGrid(cfg, pool_capacity=1)
    grid.allocate_block([0, 0, 0])
    with pytest.raises(sf.PoolExhausted):
        grid.allocate_block([1, 0, 0])


def write_run_config(tmp_path, tracking="ground_truth"):
    poses = sf.orbit_trajectory([0.0, 0.0, 1.3], 1.3, 5, arc=0.3 * math.pi)
    traj = tmp_path / "traj.csv"
    sf.write_trajectory(poses, str(traj))
    out_dir = tmp_path / "out"
    scene_lines = ["scene.sphere = 0 0 1.3 0.4"]
    offset = 0.4 / math.sqrt(3.0)
    for i in range(8):
        scene_lines.append(
            "scene.sphere = %g %g %g 0.12"
            % (
                offset if i & 1 else -offset,
                offset if i & 2 else -offset,
                1.3 + (offset if i & 4 else -offset),
            )
        )
    config = tmp_path / "run.cfg"
    config.write_text(
        "\n".join(
            [
                "grid.blocks_per_axis = 16",
                "grid.voxels_per_block_axis = 8",
                "grid.box_origin = -0.75 -0.75 0.55",
                "grid.box_side = 1.5",
                "grid.pool_capacity = 2048",
                "camera.width = 160",
                "camera.height = 120",
                "camera.fx = 140",
                "camera.fy = 140",
                "fusion.mode = weighted",
                "input.type = synthetic",
                *scene_lines,
                "input.trajectory = " + str(traj),
                "output.dir = " + str(out_dir),
                "tracking.mode = " + tracking,
                "seed = 7",
                "",
            ]
        )
    )
    return config, out_dir


def test_run_pipeline_binding(tmp_path):
    config, out_dir = write_run_config(tmp_path, tracking="icp")
    metrics = sf.run_pipeline(str(config))
    assert metrics.status == "ok"
    assert metrics.frames == 5
    assert metrics.mesh_vertices > 5000
    assert 0.0 <= metrics.mesh_rms < 1.5 / 128.0  # within a voxel of the scene
    assert (out_dir / "mesh.ply").exists()
    assert (out_dir / "metrics.csv").exists()
    assert (out_dir / "summary.txt").exists()


@pytest.mark.skipif("SPARSEFUSION_CLI" not in os.environ, reason="CLI path not provided")
def test_cli_run_and_exit_codes(tmp_path):
    cli = os.environ["SPARSEFUSION_CLI"]
    config, out_dir = write_run_config(tmp_path)
    proc = subprocess.run([cli, "run", "--config", str(config)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (out_dir / "mesh.ply").exists()

    proc = subprocess.run(
        [cli, "run", "--config", str(tmp_path / "missing.cfg")], capture_output=True
    )
    assert proc.returncode == 1

    proc = subprocess.run(
        [cli, "experiment", "filters", "--config", str(config)], capture_output=True, text=True
    )
    assert proc.returncode == 0
    assert "win_rate_kalman" in proc.stdout

import json

import numpy as np
import pytest

from flowvariants.derotation import EgoMotion, image_flow_to_spherical, pixel_directions
from flowvariants.errors import DegeneratePoint, ParseError
from flowvariants.geometry import sphere_rate_to_pixel
from flowvariants.pipeline import frame_invariants, sparse_invariants
from flowvariants.simulator import (
    TrajectorySample,
    box,
    constant_velocity_trajectory,
    generate_sequence,
    ground_truth,
    load_scene_config,
    motion_field,
    plane,
    point_flow,
    point_set,
    render_frame,
)


def test_motion_field_static_camera():
    _, rdot = motion_field([1.0, 2.0, 5.0], EgoMotion([0, 0, 0], [0, 0, 0]))
    assert np.all(rdot == 0)


def test_motion_field_abeam_hand_computation():
    ego = EgoMotion([0, 0, 2], [0, 0, 0])
    r_hat, rdot = motion_field([0.0, 5.0, 0.0], ego)
    np.testing.assert_allclose(r_hat, [0, 1, 0])
    np.testing.assert_allclose(rdot, [0, 0, -0.4], atol=1e-15)
    alpha_dot = -(np.array([0, 0, 1.0]) @ rdot) / 1.0
    assert alpha_dot == pytest.approx(0.4)
    assert 1.0 / alpha_dot == pytest.approx(5.0 / 2.0)


def test_motion_field_pure_rotation(rng):
    omega = np.array([0, 0.1, 0])
    P = rng.uniform(-5, 5, size=(20, 3)) + [0, 0, 10]
    r_hat, rdot = motion_field(P, EgoMotion([0, 0, 0], omega))
    np.testing.assert_allclose(rdot, -np.cross(omega, r_hat), atol=1e-16)


def test_motion_field_degenerate():
    with pytest.raises(DegeneratePoint):
        motion_field([0.0, 0.0, 0.0], EgoMotion([0, 0, 1], [0, 0, 0]))


def test_trajectory_rotation_is_validated():
    with pytest.raises(ValueError):
        TrajectorySample(0.0, np.diag([1.0, 1.0, -1.0]), [0, 0, 0], [0, 0, 1], [0, 0, 0])


def test_fronto_parallel_plane_has_constant_ttc(small_intrinsics):
    s = TrajectorySample(0.0, np.eye(3), [0, 0, 0], [0, 0, 1], [0, 0, 0])
    fr = render_frame([plane([0, 0, 10], [0, 0, -1])], s, small_intrinsics)
    assert fr.covered.all()
    np.testing.assert_allclose(fr.ttc[fr.gt_valid], 10.0, atol=1e-12)
    np.testing.assert_allclose(fr.depth, 10.0, atol=1e-12)


def test_no_translation_means_no_invariants(small_intrinsics, box_scene):
    s = TrajectorySample(0.0, np.eye(3), [0, 0, 0], [0, 0, 0], [0.1, 0.0, 0.05])
    fr = render_frame(box_scene, s, small_intrinsics)
    assert not fr.gt_valid.any()
    res = frame_invariants(small_intrinsics, fr.flow, fr.ego)
    assert not res.valid.any()
    assert np.all(np.isfinite(res.invariants.tc))


def test_box_projection_changes_between_poses(small_intrinsics):
    scene = [box([0.5, 0.0, 10.0], [2.0, 1.0, 1.0])]
    traj = constant_velocity_trajectory(3, 1.0, velocity=[0.5, 0, 2.5], omega=[0, 0.05, 0])
    frames = generate_sequence(scene, traj, small_intrinsics)
    areas = [f.covered.sum() for f in frames]
    assert areas[0] < areas[1] < areas[2]


def test_ground_truth_relations(small_intrinsics, box_scene, general_trajectory):
    for fr in generate_sequence(box_scene, general_trajectory, small_intrinsics):
        m = fr.gt_valid
        a, ad = fr.alpha[m], fr.alpha_dot[m]
        np.testing.assert_allclose(fr.tc[m], np.sin(a) ** 2 / ad, rtol=1e-10)
        np.testing.assert_allclose(fr.ttc[m], np.sin(2 * a) / (2 * ad), rtol=1e-10, atol=1e-12)
        speed = np.linalg.norm(fr.sample.t)
        np.testing.assert_allclose(np.hypot(fr.tc[m], fr.ttc[m]) * speed, fr.range[m], rtol=1e-10)


def test_single_sample_sequence_equals_render(small_intrinsics, box_scene, general_trajectory):
    seq = generate_sequence(box_scene, general_trajectory[:1], small_intrinsics, frame_dt=0.1)
    one = render_frame(box_scene, general_trajectory[0], small_intrinsics, frame_dt=0.1)
    assert len(seq) == 1
    np.testing.assert_array_equal(seq[0].flow.flow, one.flow.flow)
    np.testing.assert_array_equal(seq[0].tc, one.tc)


def test_ttc_counts_down_by_frame_interval(small_intrinsics):
    dt = 0.1
    scene = [box([1.0, 0.2, 12.0], [2.0, 1.0, 1.0])]
    traj = constant_velocity_trajectory(4, dt, velocity=[0.2, 0, 3.0])
    X = scene[0].vertices()
    ttc = []
    for s in traj:
        u, v, fl = point_flow(small_intrinsics, s, X, dt)
        ttc.append(sparse_invariants(small_intrinsics, u, v, fl, dt, s.ego).invariants.ttc)
    np.testing.assert_allclose(-np.diff(ttc, axis=0), dt, atol=1e-9)


def test_noise_is_seeded(small_intrinsics, box_scene, general_trajectory):
    a = generate_sequence(box_scene, general_trajectory, small_intrinsics, seed=7, noise_sigma=0.01, noise_additive=0.2)
    b = generate_sequence(box_scene, general_trajectory, small_intrinsics, seed=7, noise_sigma=0.01, noise_additive=0.2)
    c = generate_sequence(box_scene, general_trajectory, small_intrinsics, seed=8, noise_sigma=0.01, noise_additive=0.2)
    clean = generate_sequence(box_scene, general_trajectory, small_intrinsics)
    for x, y, z, w in zip(a, b, c, clean):
        np.testing.assert_array_equal(x.flow.flow, y.flow.flow)
        assert not np.array_equal(x.flow.flow, z.flow.flow)
        m = w.covered
        assert not np.array_equal(x.flow.flow[m], w.flow.flow[m])
        # missing pixels stay flagged under noise
        assert not x.flow.valid[~m].any()


def test_two_frame_mode_is_close_to_analytic(small_intrinsics, box_scene, general_trajectory):
    for s in general_trajectory:
        inst = render_frame(box_scene, s, small_intrinsics, frame_dt=0.1)
        two = render_frame(box_scene, s, small_intrinsics, frame_dt=0.1, two_frame=True)
        m = inst.covered
        diff = np.linalg.norm(two.flow.flow[m] - inst.flow.flow[m], axis=-1)
        mag = np.linalg.norm(inst.flow.flow[m], axis=-1)
        # finite-difference flow differs from the instantaneous field only to second order
        assert diff.max() > 0
        assert np.max(diff / mag) < 0.05


def test_flow_round_trips_image_to_sphere(small_intrinsics, box_scene, general_trajectory):
    fr = render_frame(box_scene, general_trajectory[2], small_intrinsics)
    r = pixel_directions(small_intrinsics)
    m = fr.covered.copy()
    m[:2, :] = m[-2:, :] = False
    m[:, :2] = m[:, -2:] = False
    # analytic sphere flow -> image -> sphere
    ud, vd = sphere_rate_to_pixel(small_intrinsics, r, fr.r_hat_dot)
    np.testing.assert_allclose((np.stack([ud, vd], -1) * fr.frame_dt)[m], fr.flow.flow[m], rtol=1e-11, atol=1e-12)
    sph = image_flow_to_spherical(small_intrinsics, fr.flow)
    assert np.max(np.abs(sph.rdot - fr.r_hat_dot)[m]) < 1e-9


def test_point_set_on_cylinder_and_plane(rng):
    ego = EgoMotion([0.0, 0.0, 2.0], [0.0, 0.0, 0.0])
    g = rng.uniform(-np.pi, np.pi, 100)
    s = rng.uniform(1, 50, 100)
    P = np.stack([5 * np.cos(g), 5 * np.sin(g), s], axis=1)
    _, _, tc, ttc = ground_truth(P, ego.t)
    np.testing.assert_allclose(tc, 2.5, atol=1e-12)
    np.testing.assert_allclose(ttc, s / 2.0, atol=1e-12)
    ps = point_set(P)
    assert ps.vertices().shape == (100, 3)


def test_moving_box_ground_truth_matches_pipeline(small_intrinsics):
    scene = [box([1.5, 0.0, 12.0], [1.0, 1.0, 1.0], velocity=[0.0, 0.0, -3.0])]
    s = constant_velocity_trajectory(1, 0.1, velocity=[0, 0, 2], omega=[0, 0.02, 0])[0]
    fr = render_frame(scene, s, small_intrinsics)
    res = frame_invariants(small_intrinsics, fr.flow, fr.ego)
    m = res.valid & fr.gt_valid
    assert m.sum() > 100
    np.testing.assert_allclose(res.invariants.tc[m], fr.tc[m], rtol=1e-9)
    # the mover closes at 5 m/s rather than 2, so its apparent TC is well below d / |t|
    P = fr.range[m] * np.sin(fr.alpha[m])
    assert np.all(res.invariants.tc[m] < P / 2.0)


def test_scene_config_round_trip(tmp_path):
    cfg = {
        "intrinsics": {"fx": 100, "fy": 100, "cx": 40, "cy": 30, "width": 80, "height": 60},
        "frame_dt": 0.1,
        "primitives": [
            {"kind": "box", "center": [1, 0, 10], "size": [2, 1, 1], "rotation": [0, 10, 0]},
            {"kind": "plane", "point": [0, 1.5, 0], "normal": [0, -1, 0]},
            {"kind": "point_set", "points": [[0.5, 0, 9.5], [1, 0.2, 9.5]]},
        ],
        "trajectory": {"n_frames": 3, "velocity": [0, 0, 2], "omega": [0, 0.05, 0]},
    }
    p = tmp_path / "scene.json"
    p.write_text(json.dumps(cfg))
    sc = load_scene_config(p)
    assert len(sc.trajectory) == 3 and len(sc.scene) == 3
    assert sc.scene[0].kind == "box"
    p.write_text(json.dumps({"intrinsics": cfg["intrinsics"], "primitives": [{"kind": "cone"}], "trajectory": {}}))
    with pytest.raises(ParseError):
        load_scene_config(p)

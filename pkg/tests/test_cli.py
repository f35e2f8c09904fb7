import json

import numpy as np
import pytest

from flowvariants import fileio
from flowvariants.cli import main
from flowvariants.derotation import image_flow_to_spherical
from flowvariants.geometry import CameraIntrinsics

INTR = {"fx": 200.0, "fy": 200.0, "cx": 80.0, "cy": 60.0, "width": 160, "height": 120}


def _scene(tmp_path, primitives, trajectory, name="scene.json"):
    p = tmp_path / name
    p.write_text(json.dumps({"intrinsics": INTR, "frame_dt": 0.1, "primitives": primitives, "trajectory": trajectory}))
    return p


BOX = [
    {"kind": "box", "center": [1.0, 0.5, 10.0], "size": [2.0, 1.0, 1.0]},
    {"kind": "plane", "point": [0.0, 1.5, 0.0], "normal": [0.0, -1.0, 0.0]},
]
MOTION = {"n_frames": 3, "dt": 0.1, "velocity": [0.3, 0.0, 2.0], "omega": [0.02, 0.1, -0.05]}


def _simulate(tmp_path, primitives=BOX, trajectory=MOTION, out="sim", extra=()):
    scene = _scene(tmp_path, primitives, trajectory)
    out = tmp_path / out
    assert main(["simulate", "--scene", str(scene), "--out", str(out), *extra]) == 0
    return out


def _inputs(sim, out):
    return [
        "--flow-dir", str(sim / "flow"), "--poses", str(sim / "poses.csv"),
        "--intrinsics", str(sim / "intrinsics.json"), "--out", str(out),
    ]


def _tree(root):
    return {p.relative_to(root): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_simulate_outputs(tmp_path):
    sim = _simulate(tmp_path)
    assert len(list((sim / "flow").glob("*.flo"))) == 3
    assert len(list((sim / "depth").glob("*.pgm"))) == 3
    assert len(list((sim / "gt").glob("*.csv"))) == 3
    assert (sim / "poses.csv").exists() and (sim / "intrinsics.json").exists()
    assert len(fileio.read_poses(sim / "poses.csv")) == 3
    assert fileio.read_flow(sim / "flow" / "000000.flo").flow.shape == (120, 160, 2)


def test_simulate_is_deterministic(tmp_path):
    extra = ["--seed", "5", "--noise-sigma", "0.01", "--noise-additive", "0.2"]
    a = _simulate(tmp_path, out="a", extra=extra)
    b = _simulate(tmp_path, out="b", extra=extra)
    assert _tree(a) == _tree(b)
    c = _simulate(tmp_path, out="c", extra=["--seed", "6", "--noise-sigma", "0.01"])
    assert len(_tree(a)) == 11
    assert (a / "flow" / "000000.flo").read_bytes() != (c / "flow" / "000000.flo").read_bytes()


def test_simulate_missing_scene(tmp_path, capsys):
    missing = tmp_path / "nope.json"
    assert main(["simulate", "--scene", str(missing), "--out", str(tmp_path / "o")]) != 0
    assert str(missing) in capsys.readouterr().err


def test_invariants_match_ground_truth(tmp_path):
    sim = _simulate(tmp_path)
    out = tmp_path / "inv"
    assert main(["invariants", *_inputs(sim, out), "--bands", "0.5,1,2,4"]) == 0
    intr = CameraIntrinsics.from_dict(INTR)
    for k in range(3):
        name = f"{k:06d}"
        for suffix in ("_tc.ppm", "_ttc.ppm", "_lines.ppm"):
            assert fileio.read_ppm(out / f"{name}{suffix}").shape == (120, 160, 3)
        hdr, inv = fileio.read_table(out / f"{name}_invariants.csv")
        _, gt = fileio.read_table(sim / "gt" / f"{name}.csv")
        a = {(int(r[0]), int(r[1])): r for r in inv}
        b = {(int(r[0]), int(r[1])): r for r in gt}
        common = sorted(set(a) & set(b))
        assert len(common) > 0.9 * len(b)
        cli = np.array([a[c] for c in common])
        ref = np.array([b[c] for c in common])
        uu, vv = ref[:, 0].astype(int), ref[:, 1].astype(int)
        alpha, alpha_dot = ref[:, 3], ref[:, 4]
        # float32 storage perturbs the sphere flow by about eps32 * |r_dot|; de-rotation
        # cancels most of |r_dot| near the expansion focus, and the relative error of
        # alpha_dot (hence of TC and TTC) grows by |r_dot| / (sin(alpha) * alpha_dot)
        flow = fileio.read_flow(sim / "flow" / f"{name}.flo", frame_dt=0.1)
        sph = image_flow_to_spherical(intr, flow).rdot[vv, uu]
        cond = np.linalg.norm(sph, axis=-1) / (np.sin(alpha) * alpha_dot)
        rel_bound = np.maximum(1e-6, 4 * 2.0**-24 * cond)
        err = np.abs(cli[:, 2] - ref[:, 5]) / np.abs(ref[:, 5])
        assert np.mean(err <= 1e-6) > 0.97
        assert np.all(err <= rel_bound)
        assert np.all(np.abs(cli[:, 3] - ref[:, 6]) <= rel_bound * np.abs(ref[:, 5]))


def test_invariants_zero_speed_frame(tmp_path, capsys):
    still = {"n_frames": 2, "dt": 0.1, "velocity": [0.0, 0.0, 0.0], "omega": [0.0, 0.1, 0.0]}
    sim = _simulate(tmp_path, trajectory=still)
    out = tmp_path / "inv"
    assert main(["invariants", *_inputs(sim, out)]) == 0
    assert "zero translation" in capsys.readouterr().err
    _, rows = fileio.read_table(out / "000000_invariants.csv")
    assert rows.shape[0] == 0
    tc = fileio.read_ppm(out / "000000_tc.ppm")
    assert np.all(tc == fileio.INVALID_RGB)


def test_invariants_dimension_mismatch(tmp_path, capsys):
    sim = _simulate(tmp_path)
    bad = dict(INTR, width=100)
    (sim / "intrinsics.json").write_text(json.dumps(bad))
    assert main(["invariants", *_inputs(sim, tmp_path / "inv")]) != 0
    err = capsys.readouterr().err
    assert "000000" in err and "failed frames" in err


def test_invariants_missing_inputs(tmp_path):
    sim = _simulate(tmp_path)
    (sim / "flow" / "000001.flo").unlink()
    assert main(["invariants", *_inputs(sim, tmp_path / "inv")]) == 1
    assert (tmp_path / "inv" / "000000_tc.ppm").exists()
    args = _inputs(sim, tmp_path / "x")
    args[3] = str(tmp_path / "none.csv")
    assert main(["invariants", *args]) == 2


def test_segment_empty_scene(tmp_path):
    far = [{"kind": "plane", "point": [0.0, 0.0, 200.0], "normal": [0.0, 0.0, -1.0]}]
    sim = _simulate(tmp_path, primitives=far)
    out = tmp_path / "seg"
    assert main(["segment", *_inputs(sim, out), "--tc-max", "1.5", "--ttc-max", "5"]) == 0
    hdr, rows = fileio.read_table(out / "000000_regions.csv")
    assert hdr == fileio.REGION_HEADER.split(",") and rows.shape[0] == 0
    mask = fileio.read_pgm(out / "000000_mask.pgm")
    assert not np.any(mask == 255)


def test_segment_pole_inside_cylinder(tmp_path):
    pole = [{"kind": "box", "center": [1.0, 0.0, 8.0], "size": [0.5, 3.0, 0.5]}]
    straight = {"n_frames": 2, "dt": 0.1, "velocity": [0.0, 0.0, 2.0]}
    sim = _simulate(tmp_path, primitives=pole, trajectory=straight)
    out = tmp_path / "seg"
    # d_max = 3 m and s_max = 10 m at 2 m/s
    assert main(["segment", *_inputs(sim, out), "--tc-max", "1.5", "--ttc-max", "5"]) == 0
    _, rows = fileio.read_table(out / "000000_regions.csv")
    assert rows.shape[0] == 1
    mask = fileio.read_pgm(out / "000000_mask.pgm")
    free = fileio.read_pgm(out / "000000_free.pgm")
    assert int(rows[0, 5]) == int(np.sum(mask == 255))
    assert not np.any((free == 255) & (mask != 128))


@pytest.mark.parametrize("tc,ttc", [("0", "5"), ("1", "-2")])
def test_segment_bad_thresholds(tmp_path, tc, ttc):
    sim = _simulate(tmp_path)
    assert main(["segment", *_inputs(sim, tmp_path / "seg"), "--tc-max", tc, "--ttc-max", ttc]) != 0


def _prism_sim(tmp_path):
    # features on the interior of a fronto-parallel face, viewed under pure translation:
    # flow is linear in the pixel coordinates there, so bilinear lookups are exact
    face = [[x, y, 9.5] for x in (0.2, 1.0, 1.8) for y in (-0.2, 0.3)] + [[1.0, 0.1, 9.5]]
    prims = [
        {"kind": "box", "center": [1.0, 0.0, 10.0], "size": [2.5, 1.2, 1.0]},
        {"kind": "point_set", "points": face},
    ]
    motion = {"n_frames": 3, "dt": 0.1, "velocity": [0.3, 0.1, 2.0]}
    return _simulate(tmp_path, primitives=prims, trajectory=motion)


def test_constancy_prism_tracks(tmp_path):
    sim = _prism_sim(tmp_path)
    out = tmp_path / "con"
    assert main(["constancy", *_inputs(sim, out), "--tracks", str(sim / "tracks.csv")]) == 0
    for k in range(3):
        assert len(fileio.read_ply(out / f"{k:06d}.ply")) > 50
        hdr, dist = fileio.read_table(out / f"{k:06d}_distances.csv")
        assert len(hdr) == 8 and dist.shape == (7, 8)
    hdr, summary = fileio.read_table(out / "constancy.csv")
    assert hdr[-2:] == ["max_rel_dev", "mean_rel_dev"]
    assert summary.shape == (2, 5)
    assert np.all(summary[:, 3] < 1e-6)
    _, pairs = fileio.read_table(out / "pair_distances.csv")
    assert pairs.shape == (2 * 21, 7)


def test_constancy_single_frame(tmp_path):
    sim = _prism_sim(tmp_path)
    out = tmp_path / "con"
    assert main(["constancy", *_inputs(sim, out), "--tracks", str(sim / "tracks.csv"), "--frames", "1"]) == 0
    assert (out / "000001.ply").exists()
    assert not (out / "constancy.csv").exists()
    assert not (out / "000000.ply").exists()


def test_constancy_missing_tracks(tmp_path, capsys):
    sim = _prism_sim(tmp_path)
    missing = tmp_path / "tracks.csv"
    assert main(["constancy", *_inputs(sim, tmp_path / "con"), "--tracks", str(missing)]) == 2
    assert str(missing) in capsys.readouterr().err

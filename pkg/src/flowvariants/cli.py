"""Command-line front end: ``flowvariants {simulate,invariants,segment,constancy}``."""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import fileio
from .constancy import DEFAULT_STRIDE, FeatureTrack, constancy_error, domain_points_at, pairwise_distances, to_domain_cloud
from .derotation import DEFAULT_EPS_AXIS
from .errors import FlowVariantsError, TooFewPoints
from .geometry import read_intrinsics, write_intrinsics
from .invariants import DEFAULT_EPS_RATE, iso_bands
from .pipeline import frame_invariants, resolve_workers, sample_flow
from .segmentation import DEFAULT_MIN_REGION_SIZE, ThreatCylinder, connected_regions, free_space_mask, threat_mask
from .simulator import generate_sequence, load_scene_config, point_flow

log = logging.getLogger("flowvariants")

DEFAULT_BANDS = "1,2,3,4,5,6,7,8,9,10"


def _bands(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad band list {text!r}") from None


def _positive(text: str) -> float:
    x = float(text)
    if not x > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return x


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="flowvariants", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="render a synthetic scene to flow, poses, depth and ground truth")
    sim.add_argument("--scene", required=True, type=Path)
    sim.add_argument("--out", required=True, type=Path)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--noise-sigma", type=float, default=0.0, help="multiplicative flow noise (fraction)")
    sim.add_argument("--noise-additive", type=float, default=0.0, help="additive flow noise (px)")
    sim.add_argument("--two-frame-flow", action="store_true", help="re-projection difference instead of rate*dt")

    def inputs(sp):
        sp.add_argument("--flow-dir", required=True, type=Path)
        sp.add_argument("--poses", required=True, type=Path)
        sp.add_argument("--intrinsics", required=True, type=Path)
        sp.add_argument("--out", required=True, type=Path)
        sp.add_argument("--eps-axis", type=_positive, default=DEFAULT_EPS_AXIS)
        sp.add_argument("--eps-rate", type=_positive, default=DEFAULT_EPS_RATE)
        sp.add_argument("--frame-dt", type=_positive, default=None, help="override the pose-derived frame interval")
        sp.add_argument("--workers", type=int, default=None)

    inv = sub.add_parser("invariants", help="TC/TTC maps, band lines and per-pixel dumps")
    inputs(inv)
    inv.add_argument("--bands", type=_bands, default=_bands(DEFAULT_BANDS))
    inv.add_argument("--image-dir", type=Path, default=None, help="P6 images to draw band lines over")

    seg = sub.add_parser("segment", help="threat/free-space masks and threat regions")
    inputs(seg)
    seg.add_argument("--tc-max", type=float, required=True)
    seg.add_argument("--ttc-max", type=float, required=True)
    seg.add_argument("--min-region-size", type=int, default=DEFAULT_MIN_REGION_SIZE)

    con = sub.add_parser("constancy", help="domain point clouds and feature distance constancy")
    inputs(con)
    con.add_argument("--tracks", required=True, type=Path)
    con.add_argument("--stride", type=int, default=DEFAULT_STRIDE)
    con.add_argument("--frames", type=str, default=None, help="comma-separated frames (default: all tracked)")
    return p


# -- helpers -------------------------------------------------------------------

def _load_inputs(args):
    for path in (args.poses, args.intrinsics):
        if not path.exists():
            raise FlowVariantsError(f"missing input file: {path}")
    if not args.flow_dir.is_dir():
        raise FlowVariantsError(f"missing flow directory: {args.flow_dir}")
    intr = read_intrinsics(args.intrinsics)
    poses = fileio.read_poses(args.poses)
    if not poses:
        raise FlowVariantsError(f"{args.poses}: no pose records")
    if args.frame_dt is not None:
        dts = [args.frame_dt] * len(poses)
    elif len(poses) == 1:
        raise FlowVariantsError("a single pose record needs --frame-dt")
    else:
        times = [p.time for p in poses]
        dts = [b - a for a, b in zip(times[:-1], times[1:])]
        dts.append(dts[-1])
    return intr, poses, dts


def _run_frames(args, poses, work) -> int:
    n = resolve_workers(args.workers)
    failed: list[int] = []

    def guarded(k):
        rec = poses[k]
        try:
            work(k, rec)
        except (FlowVariantsError, OSError, ValueError) as exc:
            log.error("frame %06d: %s", rec.frame, exc)
            failed.append(rec.frame)

    if n == 1:
        for k in range(len(poses)):
            guarded(k)
    else:
        with ThreadPoolExecutor(max_workers=n) as pool:
            list(pool.map(guarded, range(len(poses))))
    if failed:
        log.error("failed frames: %s", ", ".join(f"{f:06d}" for f in sorted(failed)))
        return 1
    return 0


def _frame_result(args, intr, rec, dt):
    path = args.flow_dir / fileio.frame_name(rec.frame, "flo")
    if not path.exists():
        raise FlowVariantsError(f"missing flow file: {path}")
    flow = fileio.read_flow(path, frame_dt=dt)
    if np.linalg.norm(rec.t) < 1e-12:
        log.warning("frame %06d: zero translation, invariants undefined (all pixels invalid)", rec.frame)
    res = frame_invariants(intr, flow, rec.ego, args.eps_axis, args.eps_rate, workers=1)
    return flow, res


# -- subcommands ---------------------------------------------------------------

def cmd_simulate(args) -> int:
    if not args.scene.exists():
        raise FlowVariantsError(f"missing scene file: {args.scene}")
    cfg = load_scene_config(args.scene)
    frames = generate_sequence(
        cfg.scene,
        cfg.trajectory,
        cfg.intrinsics,
        frame_dt=cfg.frame_dt,
        seed=args.seed,
        two_frame=args.two_frame_flow,
        noise_sigma=args.noise_sigma,
        noise_additive=args.noise_additive,
    )
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    write_intrinsics(out / "intrinsics.json", cfg.intrinsics)
    poses = []
    tracks: dict[int, dict[int, tuple[float, float]]] = {}
    feature_points = [p for p in cfg.scene if p.kind == "point_set"]
    for k, fr in enumerate(frames):
        s = fr.sample
        poses.append(fileio.PoseRecord(k, s.time, tuple(s.t), tuple(s.omega)))
        fileio.write_flow(out / "flow" / fileio.frame_name(k, "flo"), fr.flow)
        fileio.write_pgm(out / "depth" / fileio.frame_name(k, "pgm"), fileio.depth_to_pgm16(fr.depth, fr.covered))
        vv, uu = np.nonzero(fr.gt_valid)
        rows = zip(uu.tolist(), vv.tolist(), fr.depth[vv, uu], fr.alpha[vv, uu], fr.alpha_dot[vv, uu], fr.tc[vv, uu], fr.ttc[vv, uu])
        fileio.atomic_write(
            out / "gt" / fileio.frame_name(k, "csv"),
            fileio.encode_table(["u", "v", "depth", "alpha", "alpha_dot", "tc", "ttc"], rows),
        )
        fid = 0
        for prim in feature_points:
            u, v, _ = point_flow(cfg.intrinsics, s, prim.vertices(), fr.frame_dt)
            z = s.to_camera(prim.vertices())[:, 2]
            for ui, vi, zi in zip(u, v, z):
                if zi > 0 and 0 <= ui < cfg.intrinsics.width - 1 and 0 <= vi < cfg.intrinsics.height - 1:
                    tracks.setdefault(fid, {})[k] = (float(ui), float(vi))
                fid += 1
    fileio.write_poses(out / "poses.csv", poses)
    if tracks:
        fileio.write_tracks(out / "tracks.csv", tracks)
    log.info("wrote %d frames to %s", len(frames), out)
    return 0


def cmd_invariants(args) -> int:
    intr, poses, dts = _load_inputs(args)
    args.out.mkdir(parents=True, exist_ok=True)

    def work(k, rec):
        _, res = _frame_result(args, intr, rec, dts[k])
        inv, sc = res.invariants, res.scaled
        _, tc_lines = iso_bands(inv.tc, args.bands, inv.valid)
        _, ttc_lines = iso_bands(inv.ttc, args.bands, inv.valid)
        name = f"{rec.frame:06d}"
        fileio.write_ppm(args.out / f"{name}_tc.ppm", fileio.render_map(inv.tc, inv.valid, boundary=tc_lines))
        fileio.write_ppm(args.out / f"{name}_ttc.ppm", fileio.render_map(inv.ttc, inv.valid, boundary=ttc_lines))
        image = None
        if args.image_dir is not None:
            img_path = args.image_dir / fileio.frame_name(rec.frame, "ppm")
            if img_path.exists():
                image = fileio.read_ppm(img_path)
        fileio.write_ppm(args.out / f"{name}_lines.ppm", fileio.render_lines(intr.shape, tc_lines, ttc_lines, image))
        vv, uu = np.nonzero(inv.valid)
        rows = zip(
            uu.tolist(), vv.tolist(), inv.tc[vv, uu], inv.ttc[vv, uu], sc.d[vv, uu], sc.s_axial[vv, uu],
            inv.alpha[vv, uu], inv.gamma[vv, uu], inv.alpha_dot[vv, uu], inv.residual[vv, uu],
        )
        header = ["u", "v", "tc", "ttc", "d", "s_axial", "alpha", "gamma", "alpha_dot", "residual"]
        fileio.atomic_write(args.out / f"{name}_invariants.csv", fileio.encode_table(header, rows))

    return _run_frames(args, poses, work)


def cmd_segment(args) -> int:
    if not (args.tc_max > 0 and args.ttc_max > 0):
        raise FlowVariantsError("--tc-max and --ttc-max must be positive")
    cyl = ThreatCylinder(args.tc_max, args.ttc_max)
    intr, poses, dts = _load_inputs(args)
    args.out.mkdir(parents=True, exist_ok=True)

    def work(k, rec):
        _, res = _frame_result(args, intr, rec, dts[k])
        mask = threat_mask(res.invariants, cyl)
        regions = connected_regions(mask, args.min_region_size)
        name = f"{rec.frame:06d}"
        fileio.write_pgm(args.out / f"{name}_mask.pgm", fileio.mask_to_pgm(mask))
        fileio.write_pgm(args.out / f"{name}_free.pgm", free_space_mask(mask).astype(np.uint8) * 255)
        fileio.write_regions(args.out / f"{name}_regions.csv", regions)

    return _run_frames(args, poses, work)


def cmd_constancy(args) -> int:
    if not args.tracks.exists():
        raise FlowVariantsError(f"missing tracks file: {args.tracks}")
    if args.stride < 1:
        raise FlowVariantsError("--stride must be >= 1")
    intr, poses, dts = _load_inputs(args)
    raw = fileio.read_tracks(args.tracks)
    by_frame = {rec.frame: k for k, rec in enumerate(poses)}
    if args.frames:
        wanted = [int(f) for f in args.frames.split(",")]
    else:
        wanted = sorted({f for per in raw.values() for f in per})
    missing = [f for f in wanted if f not in by_frame]
    if missing:
        raise FlowVariantsError(f"frames without pose records: {missing}")
    args.out.mkdir(parents=True, exist_ok=True)

    tracks = {fid: FeatureTrack(fid, dict(per)) for fid, per in raw.items()}
    for f in wanted:
        k = by_frame[f]
        rec = poses[k]
        flow, res = _frame_result(args, intr, rec, dts[k])
        cloud = to_domain_cloud(res.scaled, res.alpha.gamma, res.frame, stride=args.stride, frame_id=f)
        fileio.write_ply(args.out / fileio.frame_name(f, "ply"), cloud)
        ids = [fid for fid, t in sorted(tracks.items()) if f in t.pixels]
        if not ids:
            continue
        uv = np.array([tracks[fid].pixels[f] for fid in ids])
        pts = domain_points_at(
            intr, uv[:, 0], uv[:, 1], sample_flow(flow, uv[:, 0], uv[:, 1]), dts[k], rec.ego,
            frame_index=f, eps_axis=args.eps_axis, eps_rate=args.eps_rate,
        )
        for fid, pt in zip(ids, pts):
            if pt is None:
                log.warning("frame %06d: feature %d falls on a masked pixel", f, fid)
            else:
                tracks[fid].points[f] = pt
        good = [fid for fid in ids if f in tracks[fid].points]
        if len(good) >= 2:
            fileio.write_distance_matrix(
                args.out / f"{f:06d}_distances.csv", good, pairwise_distances([tracks[i].points[f] for i in good])
            )

    if len(wanted) < 2:
        return 0
    summary, pair_rows = [], []
    ref = wanted[0]
    for f in wanted[1:]:
        try:
            err = constancy_error(list(tracks.values()), ref, f)
        except TooFewPoints as exc:
            log.warning("frames %06d vs %06d: %s, skipped", ref, f, exc)
            continue
        summary.append([ref, f, len(err.feature_ids), err.max, err.mean])
        ids = err.feature_ids
        for i in range(len(ids)):
            for j in range(i + 1, len(ids)):
                a, b = err.distances_a[i, j], err.distances_b[i, j]
                rel = abs(a - b) / a if a >= 1e-9 else 0.0
                pair_rows.append([ids[i], ids[j], ref, f, a, b, rel])
        log.info("frames %06d vs %06d: max %.3g mean %.3g", ref, f, err.max, err.mean)
    fileio.atomic_write(
        args.out / "pair_distances.csv",
        fileio.encode_table(["id_i", "id_j", "frame_a", "frame_b", "dist_a", "dist_b", "rel_dev"], pair_rows),
    )
    fileio.atomic_write(
        args.out / "constancy.csv",
        fileio.encode_table(["frame_a", "frame_b", "features", "max_rel_dev", "mean_rel_dev"], summary),
    )
    return 0


class _StderrHandler(logging.StreamHandler):
    """Writes to whatever ``sys.stderr`` is at emit time."""

    @property
    def stream(self):
        return sys.stderr

    @stream.setter
    def stream(self, value):
        pass


COMMANDS = {
    "simulate": cmd_simulate,
    "invariants": cmd_invariants,
    "segment": cmd_segment,
    "constancy": cmd_constancy,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if not any(isinstance(h, _StderrHandler) for h in log.handlers):
        handler = _StderrHandler()
        handler.setFormatter(logging.Formatter("%(name)s: %(levelname)s: %(message)s"))
        log.addHandler(handler)
        log.propagate = False
    log.setLevel(logging.INFO if args.verbose else logging.WARNING)
    try:
        return COMMANDS[args.command](args)
    except (FlowVariantsError, OSError, ValueError) as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())

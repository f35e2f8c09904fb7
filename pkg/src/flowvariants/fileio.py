"""Readers and writers for flow, poses, images, clouds and tables; colour rendering.

Binary flow files use the Middlebury ``.flo`` layout (little-endian). Images
are Netpbm: P5 masks/depth and P6 colour maps. Text tables are CSV with
floats written by ``repr`` so they parse back to the identical double.
Every writer goes through :func:`atomic_write` (temp file + rename).
"""

from __future__ import annotations

import io
import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .constancy import DomainPointCloud
from .derotation import EgoMotion, FlowField
from .errors import BadMagic, NonMonotonicTime, OversizeDims, ParseError, TruncatedPayload
from .segmentation import FREE, INVALID, THREAT, SegmentationMask, ThreatRegion

FLO_MAGIC = b"PIEH"
MAX_PIXELS = 10**8

POSE_HEADER = "frame,time,tx,ty,tz,wx,wy,wz"
POSE_UNITS = "# units: time s, t m/s (camera frame), omega rad/s (camera frame)"
TRACK_HEADER = "frame,id,u,v"
REGION_HEADER = "id,min_u,min_v,max_u,max_v,pixels,mean_tc,mean_ttc"

MASK_LEVELS = {INVALID: 0, FREE: 128, THREAT: 255}


def frame_name(index: int, ext: str) -> str:
    return f"{index:06d}.{ext.lstrip('.')}"


def atomic_write(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(x) -> str:
    return repr(float(x))


# -- flow ----------------------------------------------------------------------

def read_flow(path, frame_dt: float = 1.0) -> FlowField:
    data = Path(path).read_bytes()
    if len(data) < 12:
        raise TruncatedPayload(f"{path}: header needs 12 bytes, file has {len(data)}")
    if data[:4] != FLO_MAGIC:
        raise BadMagic(f"{path}: magic {data[:4]!r} is not {FLO_MAGIC!r}")
    w, h = struct.unpack("<ii", data[4:12])
    if w <= 0 or h <= 0:
        raise ParseError(f"{path}: non-positive dimensions {w}x{h}")
    if w * h > MAX_PIXELS:
        raise OversizeDims(f"{path}: {w}x{h} exceeds {MAX_PIXELS} pixels")
    need = 12 + 8 * w * h
    if len(data) < need:
        raise TruncatedPayload(f"{path}: payload has {len(data) - 12} bytes, expected {need - 12}")
    if len(data) > need:
        raise ParseError(f"{path}: {len(data) - need} trailing bytes after payload")
    flow = np.frombuffer(data, dtype="<f4", count=2 * w * h, offset=12).reshape(h, w, 2)
    return FlowField(flow.astype(np.float32), frame_dt)


def encode_flow(flow) -> bytes:
    arr = flow.flow if isinstance(flow, FlowField) else np.asarray(flow)
    h, w = arr.shape[:2]
    return FLO_MAGIC + struct.pack("<ii", w, h) + np.ascontiguousarray(arr, dtype="<f4").tobytes()


def write_flow(path, flow) -> None:
    atomic_write(path, encode_flow(flow))


# -- poses ---------------------------------------------------------------------

@dataclass(frozen=True)
class PoseRecord:
    frame: int
    time: float
    t: tuple[float, float, float]
    omega: tuple[float, float, float]

    @property
    def ego(self) -> EgoMotion:
        return EgoMotion(self.t, self.omega)


def read_poses(path) -> list[PoseRecord]:
    records: list[PoseRecord] = []
    header_seen = False
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if not header_seen:
                if line.replace(" ", "") != POSE_HEADER:
                    raise ParseError(f"expected header {POSE_HEADER!r}, got {line!r}", line=lineno)
                header_seen = True
                continue
            parts = line.split(",")
            if len(parts) != 8:
                raise ParseError(f"expected 8 fields, got {len(parts)}", line=lineno)
            try:
                frame = int(parts[0])
                vals = [float(p) for p in parts[1:]]
            except ValueError as exc:
                raise ParseError(str(exc), line=lineno) from None
            if not all(np.isfinite(vals)):
                raise ParseError("non-finite value", line=lineno)
            rec = PoseRecord(frame, vals[0], tuple(vals[1:4]), tuple(vals[4:7]))
            if records and not rec.time > records[-1].time:
                raise NonMonotonicTime(f"line {lineno}: time {rec.time!r} does not exceed {records[-1].time!r}")
            records.append(rec)
    if not header_seen:
        raise ParseError(f"{path}: missing header {POSE_HEADER!r}")
    return records


def write_poses(path, records) -> None:
    lines = [POSE_UNITS, POSE_HEADER]
    for r in records:
        lines.append(",".join([str(int(r.frame)), _fmt(r.time)] + [_fmt(x) for x in (*r.t, *r.omega)]))
    atomic_write(path, ("\n".join(lines) + "\n").encode())


# -- Netpbm --------------------------------------------------------------------

def encode_pgm(img) -> bytes:
    img = np.asarray(img)
    if img.ndim != 2:
        raise ValueError("PGM needs a 2-D array")
    if img.dtype == np.uint8:
        maxval, payload = 255, img.tobytes()
    elif img.dtype == np.uint16:
        maxval, payload = 65535, img.astype(">u2").tobytes()
    else:
        raise ValueError(f"PGM supports uint8/uint16, got {img.dtype}")
    h, w = img.shape
    return f"P5\n{w} {h}\n{maxval}\n".encode() + payload


def encode_ppm(rgb) -> bytes:
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3 or rgb.dtype != np.uint8:
        raise ValueError("PPM needs a (H, W, 3) uint8 array")
    h, w = rgb.shape[:2]
    return f"P6\n{w} {h}\n255\n".encode() + rgb.tobytes()


def write_pgm(path, img) -> None:
    atomic_write(path, encode_pgm(img))


def write_ppm(path, rgb) -> None:
    atomic_write(path, encode_ppm(rgb))


def _read_netpbm(path, magic: bytes):
    data = Path(path).read_bytes()
    if data[:2] != magic:
        raise BadMagic(f"{path}: expected {magic!r}")
    fields: list[bytes] = []
    pos = 2
    while len(fields) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos >= len(data):
            raise TruncatedPayload(f"{path}: header ends early")
        if data[pos : pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        fields.append(data[start:pos])
    w, h, maxval = (int(f) for f in fields)
    pos += 1  # single whitespace before raster
    return w, h, maxval, data[pos:]


def read_pgm(path) -> np.ndarray:
    w, h, maxval, raster = _read_netpbm(path, b"P5")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype(np.uint8)
    n = w * h * dtype.itemsize
    if len(raster) < n:
        raise TruncatedPayload(f"{path}: raster has {len(raster)} bytes, expected {n}")
    arr = np.frombuffer(raster[:n], dtype=dtype).reshape(h, w)
    return arr.astype(np.uint16) if maxval > 255 else arr.copy()


def read_ppm(path) -> np.ndarray:
    w, h, maxval, raster = _read_netpbm(path, b"P6")
    n = w * h * 3
    if maxval != 255 or len(raster) < n:
        raise TruncatedPayload(f"{path}: expected {n} bytes of 8-bit RGB")
    return np.frombuffer(raster[:n], dtype=np.uint8).reshape(h, w, 3).copy()


def mask_to_pgm(mask: SegmentationMask) -> np.ndarray:
    out = np.zeros(mask.labels.shape, dtype=np.uint8)
    for label, level in MASK_LEVELS.items():
        out[mask.labels == label] = level
    return out


def pgm_to_labels(img) -> np.ndarray:
    img = np.asarray(img)
    labels = np.full(img.shape, INVALID, dtype=np.uint8)
    for label, level in MASK_LEVELS.items():
        labels[img == level] = label
    return labels


def depth_to_pgm16(depth, valid=None) -> np.ndarray:
    """Depth in meters to millimetre uint16 (0 = no data, saturates at 65.535 m)."""
    depth = np.asarray(depth, dtype=np.float64)
    mm = np.clip(np.rint(depth * 1000.0), 0, 65535)
    if valid is not None:
        mm = np.where(valid, mm, 0)
    return mm.astype(np.uint16)


# -- point clouds --------------------------------------------------------------

_PLY_PROPS = ("x", "y", "z", "d", "s_axial", "gamma", "u", "v")


def encode_ply(cloud: DomainPointCloud) -> bytes:
    out = io.StringIO()
    out.write("ply\nformat ascii 1.0\n")
    out.write(f"comment frame {cloud.frame_id} speed {_fmt(cloud.speed)}\n")
    out.write(f"element vertex {len(cloud)}\n")
    for p in _PLY_PROPS:
        out.write(f"property double {p}\n")
    out.write("end_header\n")
    cols = np.column_stack([cloud.cartesian, cloud.d, cloud.s_axial, cloud.gamma, cloud.u, cloud.v]) if len(cloud) else []
    for row in cols:
        out.write(" ".join(_fmt(x) for x in row) + "\n")
    return out.getvalue().encode()


def write_ply(path, cloud: DomainPointCloud) -> None:
    atomic_write(path, encode_ply(cloud))


def read_ply(path) -> DomainPointCloud:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != "ply":
        raise BadMagic(f"{path}: not a PLY file")
    n = None
    frame_id, speed = 0, 0.0
    props = []
    i = 1
    while i < len(lines) and lines[i] != "end_header":
        tok = lines[i].split()
        if tok[:1] == ["element"] and tok[1] == "vertex":
            n = int(tok[2])
        elif tok[:1] == ["property"]:
            props.append(tok[-1])
        elif tok[:2] == ["comment", "frame"]:
            frame_id, speed = int(tok[2]), float(tok[4])
        elif tok[:1] == ["format"] and tok[1] != "ascii":
            raise ParseError(f"{path}: only ascii PLY is supported")
        i += 1
    if n is None or tuple(props) != _PLY_PROPS:
        raise ParseError(f"{path}: unexpected PLY layout")
    body = lines[i + 1 : i + 1 + n]
    if len(body) < n:
        raise TruncatedPayload(f"{path}: {len(body)} of {n} vertices present")
    if n == 0:
        return DomainPointCloud.empty(frame_id, speed)
    a = np.array([[float(x) for x in ln.split()] for ln in body], dtype=np.float64)
    return DomainPointCloud(
        d=a[:, 3], s_axial=a[:, 4], gamma=a[:, 5], cartesian=a[:, :3].copy(), u=a[:, 6], v=a[:, 7],
        frame_id=frame_id, speed=speed,
    )


# -- CSV tables ----------------------------------------------------------------

def read_tracks(path) -> dict[int, dict[int, tuple[float, float]]]:
    """``frame,id,u,v`` rows as ``{feature_id: {frame: (u, v)}}``."""
    tracks: dict[int, dict[int, tuple[float, float]]] = {}
    header_seen = False
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if not header_seen:
                if line.replace(" ", "") != TRACK_HEADER:
                    raise ParseError(f"expected header {TRACK_HEADER!r}", line=lineno)
                header_seen = True
                continue
            parts = line.split(",")
            if len(parts) != 4:
                raise ParseError(f"expected 4 fields, got {len(parts)}", line=lineno)
            try:
                frame, fid, u, v = int(parts[0]), int(parts[1]), float(parts[2]), float(parts[3])
            except ValueError as exc:
                raise ParseError(str(exc), line=lineno) from None
            tracks.setdefault(fid, {})[frame] = (u, v)
    if not header_seen:
        raise ParseError(f"{path}: missing header {TRACK_HEADER!r}")
    return tracks


def write_tracks(path, tracks) -> None:
    lines = [TRACK_HEADER]
    rows = sorted((frame, fid, uv) for fid, per in tracks.items() for frame, uv in per.items())
    for frame, fid, (u, v) in rows:
        lines.append(f"{frame},{fid},{_fmt(u)},{_fmt(v)}")
    atomic_write(path, ("\n".join(lines) + "\n").encode())


def encode_table(header, rows) -> bytes:
    out = [",".join(header)]
    for row in rows:
        out.append(",".join(str(x) if isinstance(x, (int, np.integer)) else _fmt(x) for x in row))
    return ("\n".join(out) + "\n").encode()


def read_table(path) -> tuple[list[str], np.ndarray]:
    lines = [ln for ln in Path(path).read_text(encoding="utf-8").splitlines() if ln and not ln.startswith("#")]
    if not lines:
        raise ParseError(f"{path}: empty table")
    header = lines[0].split(",")
    if len(lines) == 1:
        return header, np.zeros((0, len(header)))
    return header, np.array([[float(x) for x in ln.split(",")] for ln in lines[1:]], dtype=np.float64)


def write_distance_matrix(path, ids, dist) -> None:
    header = ["id"] + [str(i) for i in ids]
    rows = [[int(i)] + [float(x) for x in row] for i, row in zip(ids, dist)]
    atomic_write(path, encode_table(header, rows))


def write_regions(path, regions: list[ThreatRegion]) -> None:
    rows = [[r.region_id, *r.bbox, r.pixel_count, r.mean_tc, r.mean_ttc] for r in regions]
    atomic_write(path, encode_table(REGION_HEADER.split(","), rows))


# -- rendering -----------------------------------------------------------------

INVALID_RGB = (128, 128, 128)
LINE_RGB = (0, 0, 255)
SECOND_LINE_RGB = (0, 160, 0)


@dataclass(frozen=True)
class RenderSpec:
    """Linear white-to-red ramp; values at or below ``vmin`` are deepest red.

    Without an explicit range the valid pixels' min/max are used.
    """

    vmin: float | None = None
    vmax: float | None = None
    band_edges: tuple[float, ...] | None = None
    overlay: bool = False
    blend: float = 0.0

    def __post_init__(self):
        if self.vmin is not None and self.vmax is not None and not self.vmin < self.vmax:
            raise ValueError("render range needs vmin < vmax")
        if not 0.0 <= self.blend <= 1.0:
            raise ValueError("blend must lie in [0, 1]")


def render_map(field, valid, spec: RenderSpec = RenderSpec(), image=None, boundary=None) -> np.ndarray:
    """Colour-code a scalar field; lower values are redder, masked pixels gray.

    ``boundary`` (or ``spec.band_edges`` with ``spec.overlay``) draws band lines.
    ``image`` is alpha-blended underneath valid pixels with weight ``1 - blend``.
    """
    from .invariants import iso_bands

    field = np.asarray(field, dtype=np.float64)
    valid = np.asarray(valid, dtype=bool) & np.isfinite(field)
    vals = field[valid]
    lo = spec.vmin if spec.vmin is not None else (float(vals.min()) if vals.size else 0.0)
    hi = spec.vmax if spec.vmax is not None else (float(vals.max()) if vals.size else 1.0)
    span = hi - lo
    x = np.where(valid, field, lo)
    t = np.clip((x - lo) / span, 0.0, 1.0) if span > 0 else np.zeros_like(x)
    gb = np.rint(255.0 * t)
    rgb = np.empty(field.shape + (3,), dtype=np.float64)
    rgb[..., 0] = 255.0
    rgb[..., 1] = gb
    rgb[..., 2] = gb
    if image is not None and spec.blend > 0:
        img = np.asarray(image, dtype=np.float64)
        rgb = np.where(valid[..., None], spec.blend * rgb + (1 - spec.blend) * img, rgb)
    rgb[~valid] = INVALID_RGB
    lines = None
    if boundary is not None:
        lines = np.asarray(boundary, dtype=bool)
    elif spec.overlay and spec.band_edges:
        _, lines = iso_bands(field, spec.band_edges, valid)
    if lines is not None:
        rgb[lines] = LINE_RGB
    return np.rint(rgb).astype(np.uint8)


def render_lines(shape, tc_boundary, ttc_boundary, image=None) -> np.ndarray:
    """Both families of band lines on ``image`` (or white): TC blue, TTC green."""
    out = np.full(tuple(shape) + (3,), 255, dtype=np.uint8) if image is None else np.array(image, dtype=np.uint8)
    out[tc_boundary] = LINE_RGB
    out[ttc_boundary] = SECOND_LINE_RGB
    return out


"""Analytic synthetic scenes with exact depth, flow and invariant ground truth.

World-frame primitives (boxes, planes, bare point sets) are observed by a
pinhole camera following a scripted trajectory. Depth comes from closed-form
ray casts; flow comes from the rigid-motion field of each hit point, either
instantaneously (rate times frame interval) or as a two-frame re-projection
difference. Ground-truth TC/TTC are computed from the 3D geometry
(distance from, and along, the translation axis) rather than from angles, so
they stay independent of the estimation path they are used to check.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial.transform import Rotation

from .derotation import DEFAULT_EPS_AXIS, EgoMotion, FlowField, UNKNOWN_FLOW
from .errors import DegeneratePoint, ParseError
from .geometry import CameraIntrinsics, ZERO_TRANSLATION_EPS, as_vector3, pixel_to_direction
from .invariants import DEFAULT_EPS_RATE

MISSING_FLOW_VALUE = 1e10
_HIT_EPS = 1e-9


@dataclass
class ScenePrimitive:
    """A box, a (possibly bounded) plane, or a bare point set, in world coordinates.

    ``size`` is the full box extent along its local axes, the plane extent
    along its local x/y (``inf`` for unbounded), or unused for point sets.
    A plane's normal is its local z axis.
    """

    kind: str
    center: np.ndarray
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    size: np.ndarray = field(default_factory=lambda: np.ones(3))
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    points: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("box", "plane", "point_set"):
            raise ValueError(f"unknown primitive kind {self.kind!r}")
        self.center = as_vector3(self.center)
        self.rotation = np.asarray(self.rotation, dtype=np.float64)
        self.size = np.asarray(self.size, dtype=np.float64)
        self.velocity = as_vector3(self.velocity)
        if self.kind != "point_set" and not np.all(self.size > 0):
            raise ValueError("primitive sizes must be positive")
        if self.kind == "point_set":
            if self.points is None:
                raise ValueError("point_set needs points")
            self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)

    @property
    def moving(self) -> bool:
        return bool(np.any(self.velocity != 0))

    def vertices(self) -> np.ndarray:
        """World positions of box corners (or of the point set)."""
        if self.kind == "point_set":
            local = self.points
        elif self.kind == "box":
            h = self.size / 2
            signs = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)], dtype=float)
            local = signs * h
        else:
            raise ValueError("planes have no vertices")
        return local @ self.rotation.T + self.center


def box(center, size, rotation=None, velocity=None) -> ScenePrimitive:
    return ScenePrimitive(
        "box",
        center,
        np.eye(3) if rotation is None else rotation,
        size,
        np.zeros(3) if velocity is None else velocity,
    )


def plane(point, normal, extent=(np.inf, np.inf), velocity=None) -> ScenePrimitive:
    n = np.asarray(normal, dtype=np.float64)
    n = n / np.linalg.norm(n)
    # any right-handed basis whose z axis is the normal
    helper = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    x = np.cross(helper, n)
    x /= np.linalg.norm(x)
    y = np.cross(n, x)
    R = np.stack([x, y, n], axis=1)
    return ScenePrimitive("plane", point, R, np.asarray(extent, dtype=np.float64), np.zeros(3) if velocity is None else velocity)


def point_set(points, velocity=None) -> ScenePrimitive:
    return ScenePrimitive("point_set", np.zeros(3), np.eye(3), np.ones(3), np.zeros(3) if velocity is None else velocity, points)


@dataclass
class TrajectorySample:
    """Camera pose (camera-to-world rotation and position) plus camera-frame velocities."""

    time: float
    rotation: np.ndarray
    position: np.ndarray
    t: np.ndarray
    omega: np.ndarray

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=np.float64)
        self.position = as_vector3(self.position)
        self.t = as_vector3(self.t)
        self.omega = as_vector3(self.omega)
        R = self.rotation
        if not (np.allclose(R.T @ R, np.eye(3), atol=1e-9) and abs(np.linalg.det(R) - 1) < 1e-9):
            raise ValueError("camera rotation must be a proper rotation matrix")

    @property
    def ego(self) -> EgoMotion:
        return EgoMotion(self.t, self.omega)

    def to_camera(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.position) @ self.rotation

    def advanced(self, dt: float) -> "TrajectorySample":
        """Pose after ``dt`` seconds holding the current velocities constant."""
        R = self.rotation @ Rotation.from_rotvec(self.omega * dt).as_matrix()
        c = self.position + self.rotation @ self.t * dt
        return TrajectorySample(self.time + dt, R, c, R.T @ (self.rotation @ self.t), self.omega)


def constant_velocity_trajectory(
    n_samples: int,
    dt: float,
    position=(0.0, 0.0, 0.0),
    rotation=None,
    velocity=(0.0, 0.0, 1.0),
    omega=(0.0, 0.0, 0.0),
    t0: float = 0.0,
) -> list[TrajectorySample]:
    """Constant world-frame velocity with a constant body-frame angular rate."""
    R0 = np.eye(3) if rotation is None else np.asarray(rotation, dtype=np.float64)
    c0 = as_vector3(position)
    v = as_vector3(velocity)
    w = as_vector3(omega)
    out = []
    for k in range(n_samples):
        tk = k * dt
        R = R0 @ Rotation.from_rotvec(w * tk).as_matrix()
        out.append(TrajectorySample(t0 + tk, R, c0 + v * tk, R.T @ v, w))
    return out


@dataclass
class SimPoint:
    """Camera-frame observation of world points (array-valued)."""

    world: np.ndarray
    P: np.ndarray
    r: np.ndarray
    r_hat: np.ndarray
    r_hat_dot: np.ndarray


def motion_field(P, ego: EgoMotion, point_velocity=None) -> tuple[np.ndarray, np.ndarray]:
    """Viewing direction and its rate for camera-frame points ``P``.

    ``P_dot = v_point - t - omega x P`` projected onto the tangent plane and
    divided by range.
    """
    P = np.asarray(P, dtype=np.float64)
    r = np.linalg.norm(P, axis=-1, keepdims=True)
    if np.any(r < 1e-9):
        raise DegeneratePoint("point coincides with the camera centre")
    v = np.zeros(3) if point_velocity is None else np.asarray(point_velocity, dtype=np.float64)
    Pdot = v - ego.t - np.cross(ego.omega, P)
    r_hat = P / r
    radial = np.sum(Pdot * r_hat, axis=-1, keepdims=True)
    return r_hat, (Pdot - radial * r_hat) / r


def observe_points(sample: TrajectorySample, X, velocity_world=None) -> SimPoint:
    X = np.asarray(X, dtype=np.float64)
    P = sample.to_camera(X)
    v_cam = None if velocity_world is None else np.asarray(velocity_world, dtype=np.float64) @ sample.rotation
    r_hat, rdot = motion_field(P, sample.ego, v_cam)
    return SimPoint(world=X, P=P, r=np.linalg.norm(P, axis=-1), r_hat=r_hat, r_hat_dot=rdot)


def project(intrinsics: CameraIntrinsics, P) -> tuple[np.ndarray, np.ndarray]:
    P = np.asarray(P, dtype=np.float64)
    return (
        intrinsics.fx * P[..., 0] / P[..., 2] + intrinsics.cx,
        intrinsics.fy * P[..., 1] / P[..., 2] + intrinsics.cy,
    )


def image_velocity(intrinsics: CameraIntrinsics, P, P_dot) -> tuple[np.ndarray, np.ndarray]:
    """Time derivative of the pinhole projection of ``P`` (quotient rule, px/s)."""
    X, Y, Z = P[..., 0], P[..., 1], P[..., 2]
    Xd, Yd, Zd = P_dot[..., 0], P_dot[..., 1], P_dot[..., 2]
    return (
        intrinsics.fx * (Xd * Z - X * Zd) / Z**2,
        intrinsics.fy * (Yd * Z - Y * Zd) / Z**2,
    )


def point_rates(sample: TrajectorySample, P, velocity_cam) -> np.ndarray:
    return velocity_cam - sample.t - np.cross(sample.omega, P)


def ground_truth(P, t, P_dot_translation=None):
    """Closed-form alpha, alpha_dot, TC and TTC of camera-frame points.

    For stationary points these follow from ``d`` (distance from the
    translation axis) and ``s`` (distance along it): ``TC = d/|t|``,
    ``TTC = s/|t|``, ``alpha_dot = |t| d / r^2``. For moving points pass the
    translational part of ``P_dot``; alpha_dot is then the rate its tangential
    component induces and TC/TTC follow from their defining quotients.
    """
    P = np.asarray(P, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    speed = float(np.linalg.norm(t))
    t_hat = t / speed
    s = P @ t_hat
    d = np.linalg.norm(P - s[..., None] * t_hat, axis=-1)
    r2 = np.sum(P * P, axis=-1)
    alpha = np.arctan2(d, s)
    if P_dot_translation is None:
        return alpha, speed * d / r2, d / speed, s / speed
    # alpha = atan2(d, s)  =>  alpha_dot = (s d_dot - d s_dot) / r^2
    Pd = np.asarray(P_dot_translation, dtype=np.float64)
    s_dot = Pd @ t_hat
    radial = P - s[..., None] * t_hat
    with np.errstate(invalid="ignore", divide="ignore"):
        d_dot = np.where(d > 0, np.sum(radial * Pd, axis=-1) / np.where(d > 0, d, 1.0), 0.0)
    alpha_dot = (s * d_dot - d * s_dot) / r2
    with np.errstate(invalid="ignore", divide="ignore"):
        tc = np.sin(alpha) ** 2 / alpha_dot
        ttc = np.sin(2 * alpha) / (2 * alpha_dot)
    return alpha, alpha_dot, tc, ttc


def _ray_box(prim: ScenePrimitive, origin, dirs) -> np.ndarray:
    o = prim.rotation.T @ (origin - prim.center)
    dl = dirs @ prim.rotation
    h = prim.size / 2
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dl
        t1 = (-h - o) * inv
        t2 = (h - o) * inv
    tmin = np.where(np.isnan(t1), -np.inf, np.minimum(t1, t2))
    tmax = np.where(np.isnan(t1), np.inf, np.maximum(t1, t2))
    near = tmin.max(axis=-1)
    far = tmax.min(axis=-1)
    hit = (near <= far) & (near > _HIT_EPS)
    return np.where(hit, near, np.inf)


def _ray_plane(prim: ScenePrimitive, origin, dirs) -> np.ndarray:
    n = prim.rotation[:, 2]
    denom = dirs @ n
    with np.errstate(divide="ignore", invalid="ignore"):
        lam = ((prim.center - origin) @ n) / denom
    ok = (np.abs(denom) > 1e-12) & (lam > _HIT_EPS)
    lam = np.where(ok, lam, np.inf)
    if np.all(np.isinf(prim.size)):
        return lam
    hit_local = (origin + np.where(ok, lam, 0.0)[..., None] * dirs - prim.center) @ prim.rotation
    inside = (np.abs(hit_local[..., 0]) <= prim.size[0] / 2) & (np.abs(hit_local[..., 1]) <= prim.size[1] / 2)
    return np.where(inside, lam, np.inf)


@dataclass
class SyntheticFrame:
    """One rendered frame and its ground truth; uncovered pixels hold zeros."""

    sample: TrajectorySample
    intrinsics: CameraIntrinsics
    frame_dt: float
    depth: np.ndarray  # z in camera frame, m
    range: np.ndarray
    primitive_id: np.ndarray  # -1 where nothing was hit
    covered: np.ndarray
    flow: FlowField
    r_hat_dot: np.ndarray  # exact spherical flow
    r_hat_dot_translation: np.ndarray  # same with the rotational part removed
    alpha: np.ndarray
    alpha_dot: np.ndarray
    tc: np.ndarray
    ttc: np.ndarray
    gt_valid: np.ndarray

    @property
    def ego(self) -> EgoMotion:
        return self.sample.ego


def render_frame(
    scene: list[ScenePrimitive],
    sample: TrajectorySample,
    intrinsics: CameraIntrinsics,
    frame_dt: float = 0.1,
    two_frame: bool = False,
    noise_sigma: float = 0.0,
    noise_additive: float = 0.0,
    rng: np.random.Generator | None = None,
    eps_axis: float = DEFAULT_EPS_AXIS,
    eps_rate: float = DEFAULT_EPS_RATE,
) -> SyntheticFrame:
    """Ray-cast ``scene`` from ``sample`` and package flow plus ground truth.

    ``noise_sigma`` scales each pixel's flow vector by ``1 + N(0, sigma)``;
    ``noise_additive`` adds isotropic ``N(0, sigma)`` px to each component.
    """
    surfaces = [(i, p) for i, p in enumerate(scene) if p.kind != "point_set"]
    u, v = intrinsics.pixel_grid()
    r_hat = pixel_to_direction(intrinsics, u, v)
    dirs_world = r_hat @ sample.rotation.T
    shape = intrinsics.shape

    best = np.full(shape, np.inf)
    pid = np.full(shape, -1, dtype=np.int32)
    for i, prim in surfaces:
        lam = _ray_box(prim, sample.position, dirs_world) if prim.kind == "box" else _ray_plane(prim, sample.position, dirs_world)
        closer = lam < best
        best = np.where(closer, lam, best)
        pid[closer] = i
    covered = np.isfinite(best)
    rng_ = np.where(covered, best, 0.0)
    P = rng_[..., None] * r_hat

    v_cam = np.zeros(shape + (3,))
    for i, prim in surfaces:
        if prim.moving:
            v_cam[pid == i] = prim.velocity @ sample.rotation
    P_dot = point_rates(sample, P, v_cam)
    safe_P = np.where(covered[..., None], P, r_hat)
    radial = np.sum(P_dot * r_hat, axis=-1, keepdims=True)
    rdot = np.where(covered[..., None], (P_dot - radial * r_hat) / np.where(covered, rng_, 1.0)[..., None], 0.0)
    rdot_trans = np.where(covered[..., None], rdot - np.cross(sample.omega, r_hat), 0.0)

    if two_frame:
        nxt = sample.advanced(frame_dt)
        X = P @ sample.rotation.T + sample.position
        X_next = X + (v_cam @ sample.rotation.T) * frame_dt
        P_next = nxt.to_camera(X_next)
        u1, v1 = project(intrinsics, np.where(covered[..., None], P_next, safe_P))
        u0, v0 = project(intrinsics, safe_P)
        flow = np.stack([u1 - u0, v1 - v0], axis=-1)
    else:
        ud, vd = image_velocity(intrinsics, safe_P, P_dot)
        flow = np.stack([ud, vd], axis=-1) * frame_dt

    if noise_sigma > 0 or noise_additive > 0:
        if rng is None:
            rng = np.random.default_rng(0)
        flow = add_flow_noise(flow, rng, noise_sigma, noise_additive)
    flow = np.where(covered[..., None], flow, MISSING_FLOW_VALUE)

    speed = float(np.linalg.norm(sample.t))
    zeros = np.zeros(shape)
    if speed < ZERO_TRANSLATION_EPS:
        alpha, alpha_dot, tc, ttc = zeros, zeros, zeros, zeros
        gt_valid = np.zeros(shape, dtype=bool)
    else:
        moving = np.any(v_cam != 0, axis=-1)
        alpha, alpha_dot, tc, ttc = ground_truth(safe_P, sample.t)
        if np.any(moving):
            _, ad_m, tc_m, ttc_m = ground_truth(safe_P, sample.t, v_cam - sample.t)
            alpha_dot = np.where(moving, ad_m, alpha_dot)
            tc = np.where(moving, tc_m, tc)
            ttc = np.where(moving, ttc_m, ttc)
        gt_valid = covered & (np.sin(alpha) >= eps_axis) & (np.abs(alpha_dot) >= eps_rate)
        alpha = np.where(covered, alpha, 0.0)
        alpha_dot = np.where(gt_valid, alpha_dot, 0.0)
        tc = np.where(gt_valid, tc, 0.0)
        ttc = np.where(gt_valid, ttc, 0.0)

    return SyntheticFrame(
        sample=sample,
        intrinsics=intrinsics,
        frame_dt=frame_dt,
        depth=np.where(covered, P[..., 2], 0.0),
        range=rng_,
        primitive_id=pid,
        covered=covered,
        flow=FlowField(flow, frame_dt),
        r_hat_dot=rdot,
        r_hat_dot_translation=rdot_trans,
        alpha=alpha,
        alpha_dot=alpha_dot,
        tc=tc,
        ttc=ttc,
        gt_valid=gt_valid,
    )


def add_flow_noise(flow, rng: np.random.Generator, sigma_mult: float = 0.0, sigma_add: float = 0.0) -> np.ndarray:
    """Multiplicative magnitude noise plus isotropic additive noise on ``(..., 2)`` flow."""
    flow = np.asarray(flow, dtype=np.float64)
    scale = 1.0 + sigma_mult * rng.standard_normal(flow.shape[:-1])
    return flow * scale[..., None] + sigma_add * rng.standard_normal(flow.shape)


def point_flow(intrinsics: CameraIntrinsics, sample: TrajectorySample, X, frame_dt: float, velocity_world=None):
    """Sub-pixel location and instantaneous flow (px/frame) of world points."""
    X = np.asarray(X, dtype=np.float64)
    P = sample.to_camera(X)
    v_cam = np.zeros_like(P) if velocity_world is None else np.broadcast_to(np.asarray(velocity_world) @ sample.rotation, P.shape)
    u, v = project(intrinsics, P)
    ud, vd = image_velocity(intrinsics, P, point_rates(sample, P, v_cam))
    return u, v, np.stack([ud, vd], axis=-1) * frame_dt


def generate_sequence(
    scene: list[ScenePrimitive],
    trajectory: list[TrajectorySample],
    intrinsics: CameraIntrinsics,
    frame_dt: float | None = None,
    seed: int = 0,
    **render_kw,
) -> list[SyntheticFrame]:
    """Render every sample; noise (if requested) is drawn from one seeded stream.

    ``frame_dt`` defaults to the spacing of the sample times (0.1 s for a
    single sample).
    """
    if not trajectory:
        raise ValueError("trajectory needs at least one sample")
    if frame_dt is None:
        frame_dt = trajectory[1].time - trajectory[0].time if len(trajectory) > 1 else 0.1
    rng = np.random.default_rng(seed)
    return [render_frame(scene, s, intrinsics, frame_dt=frame_dt, rng=rng, **render_kw) for s in trajectory]


# -- text configuration --------------------------------------------------------

@dataclass
class SceneConfig:
    intrinsics: CameraIntrinsics
    scene: list[ScenePrimitive]
    trajectory: list[TrajectorySample]
    frame_dt: float
    tracks: list[np.ndarray] = field(default_factory=list)


def _rotation_from(spec) -> np.ndarray:
    if spec is None:
        return np.eye(3)
    arr = np.asarray(spec, dtype=np.float64)
    if arr.shape == (3, 3):
        return arr
    if arr.shape == (3,):
        return Rotation.from_euler("xyz", arr, degrees=True).as_matrix()
    raise ParseError(f"rotation must be 3 Euler angles (deg) or a 3x3 matrix, got shape {arr.shape}")


def _primitive_from(d: dict) -> ScenePrimitive:
    kind = d.get("kind")
    vel = d.get("velocity", [0, 0, 0])
    if kind == "box":
        return box(d["center"], d["size"], _rotation_from(d.get("rotation")), vel)
    if kind == "plane":
        ext = d.get("extent")
        ext = (np.inf, np.inf) if ext is None else ext
        return plane(d["point"], d["normal"], ext, vel)
    if kind == "point_set":
        return point_set(d["points"], vel)
    raise ParseError(f"unknown primitive kind {kind!r}")


def parse_scene_config(data: dict) -> SceneConfig:
    """Build a scene from plain key/value data (see ``demos/`` for a sample)."""
    try:
        intr = CameraIntrinsics.from_dict(data["intrinsics"])
        scene = [_primitive_from(p) for p in data["primitives"]]
        traj = data["trajectory"]
        frame_dt = float(data.get("frame_dt", 0.1))
        if "samples" in traj:
            samples = [
                TrajectorySample(
                    float(s["time"]),
                    _rotation_from(s.get("rotation")),
                    s["position"],
                    s["t"],
                    s.get("omega", [0, 0, 0]),
                )
                for s in traj["samples"]
            ]
        else:
            samples = constant_velocity_trajectory(
                int(traj["n_frames"]),
                float(traj.get("dt", frame_dt)),
                position=traj.get("position", [0, 0, 0]),
                rotation=_rotation_from(traj.get("rotation")),
                velocity=traj.get("velocity", [0, 0, 1]),
                omega=traj.get("omega", [0, 0, 0]),
            )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"bad scene config: {exc}") from None
    return SceneConfig(intr, scene, samples, frame_dt)


def load_scene_config(path) -> SceneConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc.msg}", line=exc.lineno) from None
    return parse_scene_config(data)

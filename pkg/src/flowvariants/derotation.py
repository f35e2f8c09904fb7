"""Image flow -> viewing-sphere flow, rotation removal, and the alpha-rate field."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DimensionMismatch
from .geometry import (
    CameraIntrinsics,
    TranslationFrame,
    azimuth,
    as_vector3,
    pixel_rate_to_sphere,
    pixel_to_direction,
)

DEFAULT_EPS_AXIS = np.deg2rad(0.5)
# Middlebury convention: components at or beyond this magnitude mean "unknown"
UNKNOWN_FLOW = 1e9


@dataclass
class FlowField:
    """Per-pixel image flow ``(du, dv)`` in px/frame, shape ``(height, width, 2)``."""

    flow: np.ndarray
    frame_dt: float

    def __post_init__(self):
        if self.flow.ndim != 3 or self.flow.shape[2] != 2:
            raise ValueError(f"flow must have shape (H, W, 2), got {self.flow.shape}")
        if not self.frame_dt > 0:
            raise ValueError("frame_dt must be positive")

    @property
    def height(self) -> int:
        return self.flow.shape[0]

    @property
    def width(self) -> int:
        return self.flow.shape[1]

    @property
    def valid(self) -> np.ndarray:
        f = self.flow
        return np.all(np.isfinite(f) & (np.abs(f) < UNKNOWN_FLOW), axis=-1)


@dataclass(frozen=True)
class EgoMotion:
    """Camera-frame translation velocity ``t`` (m/s) and angular rate ``omega`` (rad/s)."""

    t: np.ndarray
    omega: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "t", as_vector3(self.t))
        object.__setattr__(self, "omega", as_vector3(self.omega))

    @property
    def speed(self) -> float:
        return float(np.linalg.norm(self.t))


@dataclass
class SphericalFlow:
    """Tangent velocity of the viewing direction, ``(..., 3)`` in rad/s."""

    rdot: np.ndarray
    valid: np.ndarray


@dataclass
class AlphaField:
    alpha: np.ndarray
    gamma: np.ndarray
    alpha_dot: np.ndarray
    residual: np.ndarray
    valid: np.ndarray


@lru_cache(maxsize=8)
def _cached_directions(intrinsics: CameraIntrinsics) -> np.ndarray:
    u, v = intrinsics.pixel_grid()
    r = pixel_to_direction(intrinsics, u, v)
    r.setflags(write=False)
    return r


def pixel_directions(intrinsics: CameraIntrinsics) -> np.ndarray:
    """Viewing directions of every pixel centre, shape ``(height, width, 3)`` (read-only)."""
    return _cached_directions(intrinsics)


def image_flow_to_spherical(
    intrinsics: CameraIntrinsics, flow: FlowField, directions: np.ndarray | None = None
) -> SphericalFlow:
    if (flow.height, flow.width) != intrinsics.shape:
        raise DimensionMismatch(
            f"flow is {flow.width}x{flow.height}, intrinsics say {intrinsics.width}x{intrinsics.height}"
        )
    if directions is None:
        directions = pixel_directions(intrinsics)
    valid = flow.valid
    f = np.where(valid[..., None], flow.flow, 0.0).astype(np.float64, copy=False)
    rdot = pixel_rate_to_sphere(
        intrinsics, directions, f[..., 0] / flow.frame_dt, f[..., 1] / flow.frame_dt
    )
    return SphericalFlow(rdot=rdot, valid=valid)


def rotational_component(omega, r_hat) -> np.ndarray:
    """Spherical motion field a camera rotation induces on a stationary point: ``-omega x r``."""
    return -np.cross(np.asarray(omega, dtype=np.float64), np.asarray(r_hat, dtype=np.float64))


def derotate(spherical: SphericalFlow, omega, directions) -> SphericalFlow:
    directions = np.asarray(directions, dtype=np.float64)
    if directions.shape != spherical.rdot.shape:
        raise DimensionMismatch(
            f"directions {directions.shape} do not match spherical flow {spherical.rdot.shape}"
        )
    rdot = spherical.rdot - rotational_component(omega, directions)
    rdot[~spherical.valid] = 0.0
    return SphericalFlow(rdot=rdot, valid=spherical.valid)


def alpha_rate(
    frame: TranslationFrame,
    directions,
    derotated: SphericalFlow,
    eps_axis: float = DEFAULT_EPS_AXIS,
) -> AlphaField:
    """Per-pixel alpha, its time derivative, and the off-alpha-plane residual.

    ``alpha_dot = -(t_hat . rdot) / sin(alpha)``. The residual is the norm of
    whatever part of the de-rotated flow does not point along the in-plane
    direction of increasing alpha; it vanishes for exact stationary-world flow.
    Pixels within ``eps_axis`` of the translation axis, or with missing flow,
    are masked and carry zeros.
    """
    r = np.asarray(directions, dtype=np.float64)
    if r.shape != derotated.rdot.shape:
        raise DimensionMismatch(f"directions {r.shape} do not match flow {derotated.rdot.shape}")
    t_hat = frame.t_hat
    c = r @ t_hat
    radial = r - c[..., None] * t_hat
    s = np.linalg.norm(radial, axis=-1)
    alpha = np.arctan2(s, c)
    gamma = azimuth(frame, radial, s)

    valid = derotated.valid & (s >= eps_axis)
    safe_s = np.where(valid, s, 1.0)
    rdot = derotated.rdot
    alpha_dot = np.where(valid, -(rdot @ t_hat) / safe_s, 0.0)

    # unit tangent of increasing alpha: cos(a) * radial_unit - sin(a) * t_hat
    a_hat = (c / safe_s)[..., None] * radial - s[..., None] * t_hat
    resid_vec = rdot - alpha_dot[..., None] * a_hat
    residual = np.where(valid, np.linalg.norm(resid_vec, axis=-1), 0.0)
    return AlphaField(alpha=alpha, gamma=gamma, alpha_dot=alpha_dot, residual=residual, valid=valid)

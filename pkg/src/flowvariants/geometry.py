"""Pinhole camera model and the coordinate frame attached to the translation vector.

Conventions
-----------
Camera frame: x right, y down, z forward along the optical axis.
Pixels: u grows to the right, v grows downwards.

All functions are vectorised: wherever a single 3-vector is accepted, an
array of shape ``(..., 3)`` works as well and results broadcast accordingly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ParseError, ZeroTranslation

UP_AXIS = np.array([0.0, -1.0, 0.0])
FALLBACK_AXIS = np.array([1.0, 0.0, 0.0])
ZERO_TRANSLATION_EPS = 1e-12


def as_vector3(x) -> np.ndarray:
    """Return ``x`` as a finite float64 3-vector (or stack of them)."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.shape[-1:] != (3,):
        raise ValueError(f"expected trailing dimension 3, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("vector components must be finite")
    return arr


def normalize(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (self.width > 0 and self.height > 0):
            raise ValueError("image size must be positive")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def pixel_grid(self) -> tuple[np.ndarray, np.ndarray]:
        """Integer pixel coordinates ``(u, v)``, each of shape ``(height, width)``."""
        v, u = np.mgrid[0 : self.height, 0 : self.width]
        return u.astype(np.float64), v.astype(np.float64)

    def to_dict(self) -> dict:
        return {
            "fx": self.fx,
            "fy": self.fy,
            "cx": self.cx,
            "cy": self.cy,
            "width": self.width,
            "height": self.height,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CameraIntrinsics":
        try:
            return cls(
                fx=float(d["fx"]),
                fy=float(d["fy"]),
                cx=float(d["cx"]),
                cy=float(d["cy"]),
                width=int(d["width"]),
                height=int(d["height"]),
            )
        except KeyError as exc:
            raise ParseError(f"missing intrinsics key {exc.args[0]!r}") from None


def read_intrinsics(path) -> CameraIntrinsics:
    """Read ``{fx, fy, cx, cy, width, height}`` from a JSON file."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(str(exc.msg), line=exc.lineno) from None
    return CameraIntrinsics.from_dict(data)


def write_intrinsics(path, intrinsics: CameraIntrinsics) -> None:
    Path(path).write_text(json.dumps(intrinsics.to_dict(), indent=2) + "\n", encoding="utf-8")


def pixel_to_direction(intrinsics: CameraIntrinsics, u, v) -> np.ndarray:
    """Unit viewing direction of pixel ``(u, v)``; the principal point maps to +z."""
    x = (np.asarray(u, dtype=np.float64) - intrinsics.cx) / intrinsics.fx
    y = (np.asarray(v, dtype=np.float64) - intrinsics.cy) / intrinsics.fy
    x, y = np.broadcast_arrays(x, y)
    q = np.stack([x, y, np.ones_like(x)], axis=-1)
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def direction_to_pixel(intrinsics: CameraIntrinsics, r_hat) -> tuple[np.ndarray, np.ndarray]:
    """Project directions (z > 0) back to pixel coordinates."""
    r = np.asarray(r_hat, dtype=np.float64)
    z = r[..., 2]
    u = intrinsics.fx * r[..., 0] / z + intrinsics.cx
    v = intrinsics.fy * r[..., 1] / z + intrinsics.cy
    return u, v


def pixel_rate_to_sphere(intrinsics: CameraIntrinsics, r_hat, u_dot, v_dot) -> np.ndarray:
    """Push a pixel-plane velocity through the Jacobian of :func:`pixel_to_direction`.

    With ``q = ((u-cx)/fx, (v-cy)/fy, 1)`` and ``r = q/|q|`` the derivative is
    ``(I - r r^T) q_dot / |q|``; since ``r_z = 1/|q|`` the scale is just ``r_z``.
    """
    r = np.asarray(r_hat, dtype=np.float64)
    qdx = np.asarray(u_dot, dtype=np.float64) / intrinsics.fx
    qdy = np.asarray(v_dot, dtype=np.float64) / intrinsics.fy
    rz = r[..., 2]
    proj = r[..., 0] * qdx + r[..., 1] * qdy
    out = np.empty(np.broadcast_shapes(r.shape, qdx.shape + (3,)), dtype=np.float64)
    out[..., 0] = rz * (qdx - r[..., 0] * proj)
    out[..., 1] = rz * (qdy - r[..., 1] * proj)
    out[..., 2] = rz * (-rz * proj)
    return out


def sphere_rate_to_pixel(intrinsics: CameraIntrinsics, r_hat, r_dot) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of :func:`pixel_rate_to_sphere` for tangent vectors."""
    r = np.asarray(r_hat, dtype=np.float64)
    rd = np.asarray(r_dot, dtype=np.float64)
    rz = r[..., 2]
    # d/dt (r_xy / r_z)
    qdx = (rd[..., 0] * rz - r[..., 0] * rd[..., 2]) / rz**2
    qdy = (rd[..., 1] * rz - r[..., 1] * rd[..., 2]) / rz**2
    return intrinsics.fx * qdx, intrinsics.fy * qdy


@dataclass(frozen=True)
class TranslationFrame:
    """Orthonormal basis ``(e1, e2, t_hat)`` anchored on the direction of travel.

    ``e1`` is the azimuth reference (gamma = 0); ``e1 x e2 = t_hat``.
    """

    t_hat: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    speed: float

    def embed(self, s_axial, d, gamma) -> np.ndarray:
        """Cartesian point ``s*t_hat + d*(cos(gamma) e1 + sin(gamma) e2)``."""
        s_axial = np.asarray(s_axial, dtype=np.float64)[..., None]
        d = np.asarray(d, dtype=np.float64)[..., None]
        gamma = np.asarray(gamma, dtype=np.float64)[..., None]
        return s_axial * self.t_hat + d * (np.cos(gamma) * self.e1 + np.sin(gamma) * self.e2)

    def rotated(self, R) -> "TranslationFrame":
        R = np.asarray(R, dtype=np.float64)
        return TranslationFrame(R @ self.t_hat, R @ self.e1, R @ self.e2, self.speed)


def build_translation_frame(t) -> TranslationFrame:
    t = as_vector3(t)
    speed = float(np.linalg.norm(t))
    if speed < ZERO_TRANSLATION_EPS:
        raise ZeroTranslation(f"translation magnitude {speed:g} is below {ZERO_TRANSLATION_EPS:g}")
    t_hat = t / speed
    a = UP_AXIS if abs(float(t_hat @ UP_AXIS)) <= 0.999 else FALLBACK_AXIS
    e1 = normalize(a - (a @ t_hat) * t_hat)
    e2 = np.cross(t_hat, e1)
    return TranslationFrame(t_hat=t_hat, e1=e1, e2=e2, speed=speed)


@dataclass(frozen=True)
class AlphaGamma:
    alpha: np.ndarray
    gamma: np.ndarray


def alpha_gamma(frame: TranslationFrame, r_hat) -> AlphaGamma:
    """Polar angle from ``t_hat`` and azimuth about it (from ``e1``) of each direction.

    ``alpha`` is evaluated as ``atan2(|r - (r.t)t|, r.t)``, which equals
    ``arccos(r.t)`` but stays accurate near the axis.
    """
    r = np.asarray(r_hat, dtype=np.float64)
    c = r @ frame.t_hat
    radial = r - c[..., None] * frame.t_hat
    s = np.linalg.norm(radial, axis=-1)
    alpha = np.arctan2(s, c)
    gamma = azimuth(frame, radial, s)
    return AlphaGamma(alpha=alpha, gamma=gamma)


def azimuth(frame: TranslationFrame, radial, sin_alpha):
    gamma = np.arctan2(radial @ frame.e2, radial @ frame.e1)
    gamma = np.where(sin_alpha < 1e-9, 0.0, gamma)
    # fold atan2's -pi onto the half-open interval (-pi, pi]
    return np.where(gamma <= -np.pi, np.pi, gamma)

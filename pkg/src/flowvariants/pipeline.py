"""End-to-end flow -> invariants for dense frames and for sparse pixel samples."""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .derotation import (
    DEFAULT_EPS_AXIS,
    AlphaField,
    EgoMotion,
    FlowField,
    SphericalFlow,
    alpha_rate,
    derotate,
    image_flow_to_spherical,
    pixel_directions,
)
from .errors import DimensionMismatch
from .geometry import (
    ZERO_TRANSLATION_EPS,
    CameraIntrinsics,
    TranslationFrame,
    build_translation_frame,
    pixel_rate_to_sphere,
    pixel_to_direction,
)
from .invariants import DEFAULT_EPS_RATE, InvariantField, ScaledInvariants, compute_invariants, scale_by_speed

log = logging.getLogger(__name__)

THREADS_ENV = "FLOWVARIANTS_THREADS"


def resolve_workers(workers: int | None = None) -> int:
    """Worker count, capped by ``$FLOWVARIANTS_THREADS`` when set."""
    n = workers if workers is not None else (os.cpu_count() or 1)
    cap = os.environ.get(THREADS_ENV)
    if cap:
        try:
            n = min(n, int(cap))
        except ValueError:
            log.warning("ignoring non-integer %s=%r", THREADS_ENV, cap)
    return max(1, n)


@dataclass
class FrameInvariants:
    alpha: AlphaField
    invariants: InvariantField
    scaled: ScaledInvariants
    frame: TranslationFrame | None

    @property
    def valid(self) -> np.ndarray:
        return self.invariants.valid


def _empty_result(shape) -> FrameInvariants:
    z = np.zeros(shape)
    invalid = np.zeros(shape, dtype=bool)
    af = AlphaField(alpha=z, gamma=z, alpha_dot=z, residual=z, valid=invalid)
    inv = compute_invariants(af)
    scaled = ScaledInvariants(d=z, s_axial=z, valid=invalid, speed=0.0)
    return FrameInvariants(alpha=af, invariants=inv, scaled=scaled, frame=None)


def _block(frame, directions, spherical, omega, eps_axis, eps_rate):
    derot = derotate(spherical, omega, directions)
    af = alpha_rate(frame, directions, derot, eps_axis)
    return af, compute_invariants(af, eps_rate)


def frame_invariants(
    intrinsics: CameraIntrinsics,
    flow: FlowField,
    ego: EgoMotion,
    eps_axis: float = DEFAULT_EPS_AXIS,
    eps_rate: float = DEFAULT_EPS_RATE,
    workers: int | None = 1,
) -> FrameInvariants:
    """Run flow -> sphere -> de-rotation -> alpha rate -> TC/TTC for one frame.

    A zero-speed frame yields all-invalid fields rather than an error. With
    ``workers > 1`` the image is split into row bands processed concurrently;
    every step is a per-pixel map so the result is identical to ``workers=1``.
    """
    if (flow.height, flow.width) != intrinsics.shape:
        raise DimensionMismatch(
            f"flow is {flow.width}x{flow.height}, intrinsics say {intrinsics.width}x{intrinsics.height}"
        )
    if ego.speed < ZERO_TRANSLATION_EPS:
        return _empty_result(intrinsics.shape)
    frame = build_translation_frame(ego.t)
    directions = pixel_directions(intrinsics)
    n = resolve_workers(workers)

    if n == 1:
        sph = image_flow_to_spherical(intrinsics, flow, directions)
        af, inv = _block(frame, directions, sph, ego.omega, eps_axis, eps_rate)
    else:
        bounds = np.linspace(0, flow.height, n + 1).astype(int)
        slices = [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]

        def work(sl):
            sub = FlowField(flow.flow[sl], flow.frame_dt)
            valid = sub.valid
            f = np.where(valid[..., None], sub.flow, 0.0).astype(np.float64, copy=False)
            d = directions[sl]
            rdot = pixel_rate_to_sphere(intrinsics, d, f[..., 0] / flow.frame_dt, f[..., 1] / flow.frame_dt)
            return _block(frame, d, SphericalFlow(rdot, valid), ego.omega, eps_axis, eps_rate)

        with ThreadPoolExecutor(max_workers=n) as pool:
            parts = list(pool.map(work, slices))
        af = AlphaField(
            **{k: np.concatenate([getattr(p[0], k) for p in parts]) for k in AlphaField.__dataclass_fields__}
        )
        inv = InvariantField(
            **{k: np.concatenate([getattr(p[1], k) for p in parts]) for k in InvariantField.__dataclass_fields__}
        )
    return FrameInvariants(alpha=af, invariants=inv, scaled=scale_by_speed(inv, frame.speed), frame=frame)


def sample_flow(flow: FlowField, u, v) -> np.ndarray:
    """Bilinear flow lookup at sub-pixel locations; NaN where any tap is missing."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    h, w = flow.height, flow.width
    u0 = np.clip(np.floor(u).astype(int), 0, max(w - 2, 0))
    v0 = np.clip(np.floor(v).astype(int), 0, max(h - 2, 0))
    u1 = np.minimum(u0 + 1, w - 1)
    v1 = np.minimum(v0 + 1, h - 1)
    fu = np.clip(u - u0, 0.0, 1.0)[..., None]
    fv = np.clip(v - v0, 0.0, 1.0)[..., None]
    f = np.where(flow.valid[..., None], flow.flow.astype(np.float64), np.nan)
    out = (
        f[v0, u0] * (1 - fu) * (1 - fv)
        + f[v0, u1] * fu * (1 - fv)
        + f[v1, u0] * (1 - fu) * fv
        + f[v1, u1] * fu * fv
    )
    return out


def sparse_invariants(
    intrinsics: CameraIntrinsics,
    u,
    v,
    flow_uv,
    frame_dt: float,
    ego: EgoMotion,
    eps_axis: float = DEFAULT_EPS_AXIS,
    eps_rate: float = DEFAULT_EPS_RATE,
) -> FrameInvariants:
    """Same pipeline as :func:`frame_invariants` at arbitrary (sub-)pixel samples.

    ``flow_uv`` has shape ``(N, 2)`` in px/frame; NaN rows are treated as missing.
    """
    u = np.atleast_1d(np.asarray(u, dtype=np.float64))
    v = np.atleast_1d(np.asarray(v, dtype=np.float64))
    flow_uv = np.asarray(flow_uv, dtype=np.float64).reshape(u.shape + (2,))
    if ego.speed < ZERO_TRANSLATION_EPS:
        return _empty_result(u.shape)
    frame = build_translation_frame(ego.t)
    r = pixel_to_direction(intrinsics, u, v)
    valid = np.all(np.isfinite(flow_uv), axis=-1)
    f = np.where(valid[..., None], flow_uv, 0.0)
    rdot = pixel_rate_to_sphere(intrinsics, r, f[..., 0] / frame_dt, f[..., 1] / frame_dt)
    af, inv = _block(frame, r, SphericalFlow(rdot, valid), ego.omega, eps_axis, eps_rate)
    return FrameInvariants(alpha=af, invariants=inv, scaled=scale_by_speed(inv, frame.speed), frame=frame)

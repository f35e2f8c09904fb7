"""Point clouds in the (d, s, gamma) invariant domain and shape-constancy metrics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .derotation import EgoMotion
from .errors import DimensionMismatch, TooFewPoints
from .geometry import AlphaGamma, CameraIntrinsics, TranslationFrame
from .invariants import ScaledInvariants
from .pipeline import sparse_invariants

DEFAULT_STRIDE = 4


@dataclass(frozen=True)
class DomainPoint:
    d: float
    s_axial: float
    gamma: float
    cartesian: np.ndarray
    u: float | None = None
    v: float | None = None
    frame_index: int | None = None


@dataclass
class DomainPointCloud:
    """Column-oriented cloud; ``cloud[i]`` gives the i-th :class:`DomainPoint`."""

    d: np.ndarray
    s_axial: np.ndarray
    gamma: np.ndarray
    cartesian: np.ndarray
    u: np.ndarray
    v: np.ndarray
    frame_id: int = 0
    speed: float = 0.0

    def __len__(self) -> int:
        return len(self.d)

    def __getitem__(self, i) -> DomainPoint:
        return DomainPoint(
            d=float(self.d[i]),
            s_axial=float(self.s_axial[i]),
            gamma=float(self.gamma[i]),
            cartesian=self.cartesian[i].copy(),
            u=float(self.u[i]),
            v=float(self.v[i]),
            frame_index=self.frame_id,
        )

    @classmethod
    def empty(cls, frame_id=0, speed=0.0) -> "DomainPointCloud":
        z = np.zeros(0)
        return cls(z, z, z, np.zeros((0, 3)), z, z, frame_id, speed)


def to_domain_cloud(
    scaled: ScaledInvariants,
    gammas,
    frame: TranslationFrame | None,
    stride: int = DEFAULT_STRIDE,
    frame_id: int = 0,
) -> DomainPointCloud:
    """One point per valid pixel on a ``stride`` grid.

    ``gammas`` is an :class:`AlphaGamma` or a plain per-pixel gamma array.
    """
    gamma = gammas.gamma if isinstance(gammas, AlphaGamma) else np.asarray(gammas)
    if gamma.shape != scaled.d.shape:
        raise DimensionMismatch(f"gamma field {gamma.shape} vs invariants {scaled.d.shape}")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if frame is None:
        return DomainPointCloud.empty(frame_id, scaled.speed)
    sub = (slice(None, None, stride), slice(None, None, stride))
    vv, uu = np.nonzero(scaled.valid[sub])
    vv = vv * stride
    uu = uu * stride
    d = scaled.d[vv, uu]
    s = scaled.s_axial[vv, uu]
    g = gamma[vv, uu]
    return DomainPointCloud(
        d=d,
        s_axial=s,
        gamma=g,
        cartesian=frame.embed(s, d, g).reshape(-1, 3),
        u=uu.astype(np.float64),
        v=vv.astype(np.float64),
        frame_id=frame_id,
        speed=scaled.speed,
    )


def domain_points_at(
    intrinsics: CameraIntrinsics,
    u,
    v,
    flow_uv,
    frame_dt: float,
    ego: EgoMotion,
    frame_index: int | None = None,
    **eps,
) -> list[DomainPoint | None]:
    """Domain points at sub-pixel feature locations; ``None`` where the pixel is masked."""
    res = sparse_invariants(intrinsics, u, v, flow_uv, frame_dt, ego, **eps)
    u = np.atleast_1d(u)
    v = np.atleast_1d(v)
    out: list[DomainPoint | None] = []
    for i in range(len(u)):
        if not res.valid[i]:
            out.append(None)
            continue
        d = float(res.scaled.d[i])
        s = float(res.scaled.s_axial[i])
        g = float(res.alpha.gamma[i])
        out.append(DomainPoint(d, s, g, res.frame.embed(s, d, g), float(u[i]), float(v[i]), frame_index))
    return out


def _cartesian(points) -> np.ndarray:
    if isinstance(points, np.ndarray):
        return np.asarray(points, dtype=np.float64).reshape(-1, 3)
    return np.array([p.cartesian for p in points], dtype=np.float64).reshape(-1, 3)


def pairwise_distances(points) -> np.ndarray:
    """Symmetric matrix of Euclidean distances between Cartesian embeddings."""
    xyz = _cartesian(points)
    if len(xyz) < 2:
        raise TooFewPoints(f"need at least 2 points, got {len(xyz)}")
    diff = xyz[:, None, :] - xyz[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=-1))
    np.fill_diagonal(dist, 0.0)
    return dist


@dataclass
class FeatureTrack:
    feature_id: int
    pixels: dict[int, tuple[float, float]] = field(default_factory=dict)
    points: dict[int, DomainPoint] = field(default_factory=dict)

    def frames(self) -> list[int]:
        return sorted(self.points)


@dataclass
class ConstancyError:
    max: float
    mean: float
    distances_a: np.ndarray
    distances_b: np.ndarray
    feature_ids: list[int]


def constancy_error(tracks, frame_a: int, frame_b: int) -> ConstancyError:
    """Max and mean of ``|D_a - D_b| / D_a`` over feature pairs seen in both frames.

    Pairs whose frame-a distance is below 1e-9 m are skipped.
    """
    shared = [t for t in tracks if frame_a in t.points and frame_b in t.points]
    if len(shared) < 2:
        raise TooFewPoints(f"{len(shared)} tracks shared by frames {frame_a} and {frame_b}")
    da = pairwise_distances([t.points[frame_a] for t in shared])
    db = pairwise_distances([t.points[frame_b] for t in shared])
    iu = np.triu_indices(len(shared), k=1)
    a, b = da[iu], db[iu]
    keep = a >= 1e-9
    if not np.any(keep):
        raise TooFewPoints("all frame-a pair distances are degenerate")
    rel = np.abs(a[keep] - b[keep]) / a[keep]
    return ConstancyError(
        max=float(rel.max()),
        mean=float(rel.mean()),
        distances_a=da,
        distances_b=db,
        feature_ids=[t.feature_id for t in shared],
    )

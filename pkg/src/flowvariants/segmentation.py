"""Threat cylinder labelling, free space, and connected threat regions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .invariants import InvariantField

INVALID = 0
FREE = 1
THREAT = 2

DEFAULT_MIN_REGION_SIZE = 25

_FOUR_CONNECTED = ndimage.generate_binary_structure(2, 1)


@dataclass(frozen=True)
class ThreatCylinder:
    """Cylinder of radius ``tc_max`` capped at ``ttc_max`` ahead of the camera.

    In ``"time"`` mode the limits are seconds. In ``"distance"`` mode they are
    meters (a radius ``d_max`` and depth ``s_max``) and need the speed to be
    converted, see :meth:`time_limits`.
    """

    tc_max: float
    ttc_max: float
    mode: str = "time"

    def __post_init__(self):
        if self.mode not in ("time", "distance"):
            raise ValueError(f"unknown cylinder mode {self.mode!r}")
        if not (self.tc_max > 0 and self.ttc_max > 0):
            raise ValueError("cylinder thresholds must be positive")

    @classmethod
    def from_distances(cls, d_max: float, s_max: float) -> "ThreatCylinder":
        return cls(d_max, s_max, mode="distance")

    def time_limits(self, speed: float | None = None) -> tuple[float, float]:
        if self.mode == "time":
            return self.tc_max, self.ttc_max
        if speed is None or speed <= 0:
            raise ValueError("distance-mode cylinder needs a positive speed")
        return self.tc_max / speed, self.ttc_max / speed


@dataclass
class SegmentationMask:
    labels: np.ndarray
    tc: np.ndarray
    ttc: np.ndarray
    residual: np.ndarray

    @property
    def threat(self) -> np.ndarray:
        return self.labels == THREAT


@dataclass
class ThreatRegion:
    region_id: int
    pixels: np.ndarray  # (N, 2) as (v, u)
    bbox: tuple[int, int, int, int]  # min_u, min_v, max_u, max_v
    pixel_count: int
    mean_tc: float
    mean_ttc: float
    mean_residual: float


def threat_mask(inv: InvariantField, cyl: ThreatCylinder, speed: float | None = None) -> SegmentationMask:
    tc_max, ttc_max = cyl.time_limits(speed)
    inside = (inv.tc > 0) & (inv.tc <= tc_max) & (inv.ttc > 0) & (inv.ttc <= ttc_max)
    labels = np.full(inv.tc.shape, FREE, dtype=np.uint8)
    labels[inside & inv.valid] = THREAT
    labels[~inv.valid] = INVALID
    return SegmentationMask(labels=labels, tc=inv.tc, ttc=inv.ttc, residual=inv.residual)


def free_space_mask(mask: SegmentationMask) -> np.ndarray:
    return mask.labels == FREE


def connected_regions(mask: SegmentationMask, min_region_size: int = DEFAULT_MIN_REGION_SIZE) -> list[ThreatRegion]:
    """4-connected threat components of at least ``min_region_size`` pixels, largest first."""
    lab, n = ndimage.label(mask.threat, structure=_FOUR_CONNECTED)
    if n == 0:
        return []
    counts = np.bincount(lab.ravel(), minlength=n + 1)
    slices = ndimage.find_objects(lab)
    found = []
    for k in range(1, n + 1):
        if counts[k] < min_region_size:
            continue
        sl = slices[k - 1]
        sel = lab[sl] == k
        vv, uu = np.nonzero(sel)
        vv = vv + sl[0].start
        uu = uu + sl[1].start
        found.append(
            (
                int(counts[k]),
                vv,
                uu,
                float(mask.tc[vv, uu].mean()),
                float(mask.ttc[vv, uu].mean()),
                float(mask.residual[vv, uu].mean()),
            )
        )
    # stable tie-break on top-left pixel keeps ids reproducible
    found.sort(key=lambda f: (-f[0], int(f[1][0]), int(f[2][0])))
    regions = []
    for i, (count, vv, uu, mtc, mttc, mres) in enumerate(found, start=1):
        regions.append(
            ThreatRegion(
                region_id=i,
                pixels=np.stack([vv, uu], axis=1),
                bbox=(int(uu.min()), int(vv.min()), int(uu.max()), int(vv.max())),
                pixel_count=count,
                mean_tc=mtc,
                mean_ttc=mttc,
                mean_residual=mres,
            )
        )
    return regions

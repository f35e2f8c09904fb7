"""Time-Clearance / Time-to-Contact fields and their speed-scaled lengths."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .derotation import AlphaField
from .errors import BadBandEdges, ZeroTranslation
from .geometry import ZERO_TRANSLATION_EPS

DEFAULT_EPS_RATE = 1e-6
INVALID_BAND = -1


@dataclass
class InvariantField:
    """Per-pixel TC and TTC in seconds; masked pixels hold 0.

    ``alpha``, ``gamma`` and ``residual`` are carried over from the
    :class:`AlphaField` the invariants were computed from.
    """

    tc: np.ndarray
    ttc: np.ndarray
    valid: np.ndarray
    alpha: np.ndarray
    gamma: np.ndarray
    alpha_dot: np.ndarray
    residual: np.ndarray


@dataclass
class ScaledInvariants:
    """Distance from the translation axis ``d`` and along it ``s_axial`` (meters)."""

    d: np.ndarray
    s_axial: np.ndarray
    valid: np.ndarray
    speed: float


def compute_invariants(alpha_field: AlphaField, eps_rate: float = DEFAULT_EPS_RATE) -> InvariantField:
    """TC = sin^2(alpha)/alpha_dot and TTC = sin(2 alpha)/(2 alpha_dot)."""
    a = alpha_field.alpha
    rate = alpha_field.alpha_dot
    valid = alpha_field.valid & (np.abs(rate) >= eps_rate)
    safe_rate = np.where(valid, rate, 1.0)
    tc = np.where(valid, np.sin(a) ** 2 / safe_rate, 0.0)
    ttc = np.where(valid, np.sin(2.0 * a) / (2.0 * safe_rate), 0.0)
    return InvariantField(
        tc=tc,
        ttc=ttc,
        valid=valid,
        alpha=alpha_field.alpha,
        gamma=alpha_field.gamma,
        alpha_dot=alpha_field.alpha_dot,
        residual=alpha_field.residual,
    )


def scale_by_speed(inv: InvariantField, speed: float) -> ScaledInvariants:
    if not speed >= ZERO_TRANSLATION_EPS:
        raise ZeroTranslation(f"speed {speed:g} too small to scale invariants")
    d = np.where(inv.valid, speed * inv.tc, 0.0)
    s = np.where(inv.valid, speed * inv.ttc, 0.0)
    return ScaledInvariants(d=d, s_axial=s, valid=inv.valid.copy(), speed=float(speed))


def iso_bands(field, band_edges, valid=None) -> tuple[np.ndarray, np.ndarray]:
    """Quantise ``field`` into bands and mark the lines between them.

    Returns ``(bands, boundary)``. ``bands`` counts the edges strictly below
    each value (``INVALID_BAND`` for masked pixels). A pixel is on the
    boundary when its right or lower neighbour is valid and lies in a
    different band, so a step between two regions yields a one-pixel line.
    """
    edges = np.asarray(band_edges, dtype=np.float64).ravel()
    if edges.size < 1 or not np.all(np.isfinite(edges)) or np.any(np.diff(edges) <= 0):
        raise BadBandEdges(f"band edges must be finite and strictly ascending, got {edges.tolist()}")
    field = np.asarray(field, dtype=np.float64)
    if valid is None:
        valid = np.isfinite(field)
    bands = np.searchsorted(edges, np.where(valid, field, 0.0), side="left").astype(np.int32)
    bands[~valid] = INVALID_BAND

    boundary = np.zeros(field.shape, dtype=bool)
    right = valid[:, :-1] & valid[:, 1:] & (bands[:, :-1] != bands[:, 1:])
    down = valid[:-1, :] & valid[1:, :] & (bands[:-1, :] != bands[1:, :])
    boundary[:, :-1] |= right
    boundary[:-1, :] |= down
    return bands, boundary

"""Optical-flow invariants: Time-Clearance, Time-to-Contact and the constancy domain."""

from .constancy import (
    DomainPoint,
    DomainPointCloud,
    FeatureTrack,
    constancy_error,
    domain_points_at,
    pairwise_distances,
    to_domain_cloud,
)
from .derotation import (
    AlphaField,
    EgoMotion,
    FlowField,
    SphericalFlow,
    alpha_rate,
    derotate,
    image_flow_to_spherical,
    pixel_directions,
    rotational_component,
)
from .errors import *  # noqa: F401,F403
from .geometry import (
    AlphaGamma,
    CameraIntrinsics,
    TranslationFrame,
    alpha_gamma,
    build_translation_frame,
    pixel_to_direction,
    read_intrinsics,
)
from .invariants import InvariantField, ScaledInvariants, compute_invariants, iso_bands, scale_by_speed
from .pipeline import FrameInvariants, frame_invariants, sparse_invariants
from .segmentation import (
    SegmentationMask,
    ThreatCylinder,
    ThreatRegion,
    connected_regions,
    free_space_mask,
    threat_mask,
)

__version__ = "0.1.0"

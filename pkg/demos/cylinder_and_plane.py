"""
Points sharing a clearance or a contact time
============================================

Every point on a cylinder around the direction of travel has the same TC,
and every point on a plane perpendicular to it has the same TTC, no matter
how the camera is rotating.
"""

import numpy as np

from flowvariants.derotation import EgoMotion, SphericalFlow, alpha_rate, derotate
from flowvariants.geometry import build_translation_frame
from flowvariants.invariants import compute_invariants
from flowvariants.simulator import motion_field

rng = np.random.default_rng(0)
ego = EgoMotion(t=[0.4, -0.2, 1.9], omega=[0.05, -0.08, 0.03])
frame = build_translation_frame(ego.t)
print("speed:", frame.speed)


def invariants_of(P):
    r_hat, rdot = motion_field(P, ego)
    flow = derotate(SphericalFlow(rdot, np.ones(len(P), bool)), ego.omega, r_hat)
    return compute_invariants(alpha_rate(frame, r_hat, flow))


n = 1000
gamma = rng.uniform(-np.pi, np.pi, n)

# %%
# Cylinder of radius 5 m
cyl = frame.embed(rng.uniform(1, 50, n), np.full(n, 5.0), gamma)
tc = invariants_of(cyl).tc
print("TC on cylinder: mean", tc.mean(), "spread", np.ptp(tc), "expected", 5.0 / frame.speed)

# %%
# Plane 10 m ahead
pl = frame.embed(np.full(n, 10.0), rng.uniform(0.5, 30, n), gamma)
ttc = invariants_of(pl).ttc
print("TTC on plane: mean", ttc.mean(), "spread", np.ptp(ttc), "TTC*speed", ttc.mean() * frame.speed)

"""
A box keeps its shape in the invariant domain
=============================================

The eight corners of a box are tracked over a few frames. Mapping each
corner to (d, s, gamma) and embedding that back in 3-D gives a cloud whose
pairwise distances do not change while its image footprint does. With
noisy flow the distances wobble by a few percent.
"""

import numpy as np

from flowvariants.constancy import FeatureTrack, constancy_error, domain_points_at
from flowvariants.geometry import CameraIntrinsics
from flowvariants.simulator import add_flow_noise, box, constant_velocity_trajectory, point_flow

intr = CameraIntrinsics(fx=721.5, fy=721.5, cx=609.6, cy=172.9, width=1242, height=375)
corners = box([2.5, 0.5, 10.0], [2.0, 1.0, 1.0]).vertices()
traj = constant_velocity_trajectory(3, 0.1, velocity=[0.3, 0.0, 10.0], omega=[0.0, 0.03, 0.0])


def track(noise_rng=None):
    tracks = [FeatureTrack(i) for i in range(len(corners))]
    for k, s in enumerate(traj):
        u, v, fl = point_flow(intr, s, corners, 0.1)
        if noise_rng is not None:
            fl = add_flow_noise(fl, noise_rng, 0.01, 0.2)
        for t, p in zip(tracks, domain_points_at(intr, u, v, fl, 0.1, s.ego, frame_index=k)):
            t.points[k] = p
        if noise_rng is None and k in (0, len(traj) - 1):
            print(f"frame {k} footprint: u {u.min():.1f}..{u.max():.1f}, v {v.min():.1f}..{v.max():.1f}")
    return tracks


# %%
# Exact flow
tracks = track()
for f in (1, 2):
    err = constancy_error(tracks, 0, f)
    print(f"frames 0 vs {f}: max relative change {err.max:.2e}")

# %%
# 1% multiplicative and 0.2 px additive noise, 20 seeds
means = []
for seed in range(20):
    tracks = track(np.random.default_rng(seed))
    means.append(np.mean([constancy_error(tracks, 0, f).mean for f in (1, 2)]))
print("noisy mean relative change: %.3f (min %.3f, max %.3f)" % (np.mean(means), np.min(means), np.max(means)))

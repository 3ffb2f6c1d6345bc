# %% [markdown]
# # Drift: direct edges vs chained rotations
#
# Every keyframe in this sequence keeps seeing at least two directions
# that the first keyframe saw. An E-Graph edge to keyframe 0 is therefore one
# measurement, whatever the sequence length. Chaining frame-to-frame rotations
# instead accumulates noise like a random walk.

# %%
import numpy as np

from extgraph.experiments import drift_study, rotation_error_budget

d = drift_study(trials=30, keyframes=30, sigma_deg=0.2, seed=0)
for n in (5, 10, 20, 30):
    print(f"N={n:2d}  direct {np.degrees(d.median_direct(n)):.3f} deg"
          f"   chained {np.degrees(d.median_chained(n)):.3f} deg")
print("first-order budget for one edge:", rotation_error_budget(0.2))

# %% [markdown]
# ## Trajectory metrics
#
# Track a noisy Manhattan sequence and score it against ground truth with
# ATE (position RMSE after rigid alignment), ARE (mean rotation angle) and RPE.

# %%
from extgraph import sim
from extgraph.evaluation import Trajectory, evaluate
from extgraph.tracking import track_sequence

p = sim.preset("manhattan", 60)
scene = sim.generate_scene(p.scene, seed=1)
traj = sim.generate_trajectory(p.trajectory)
noise = sim.NoiseSpec(direction_deg=0.2, plane_distance_m=0.005)
frames = sim.run_sequence(scene, traj, p.camera, noise, seed=1)
results, _ = track_sequence(frames, origin=traj[0])

est = Trajectory.from_poses([r.timestamp for r in results], [r.pose for r in results])
gt = Trajectory.from_poses([f.timestamp for f in frames], [f.gt_pose for f in frames])
print(evaluate(est, gt, deltas=(1, 10)).summary())

# %% [markdown]
# # E-Graph vs covisibility in a corridor
#
# A camera walks down a corridor, turns around and walks back. The frames
# before and after the turn share no point features, yet they see the same
# walls and the same corridor axis. Direction landmarks connect them.

# %%
from extgraph import sim
from extgraph.graph import build_covisibility_graph, graph_stats, shared_point_count
from extgraph.tracking import track_sequence

p = sim.preset("corridor")
scene = sim.generate_scene(p.scene, seed=0)
traj = sim.generate_trajectory(p.trajectory)
frames = sim.run_sequence(scene, traj, p.camera, sim.NoiseSpec(), seed=0)
results, graph = track_sequence(frames, origin=traj[0])

stats = graph_stats(graph)
cov = build_covisibility_graph(graph.keyframes.values())
print("keyframes:", stats.keyframes, "E-Graph edges:", stats.edge_count)
print("max span  E-Graph:", stats.max_span, " covisibility:", max(b - a for a, b, _ in cov))

# %%
zero = [e for e in graph.edges.values() if shared_point_count(graph, e.a, e.b) == 0]
e = max(zero, key=lambda e: e.span)
print(f"edge {e.a}-{e.b} shares no points but {len(e.shared)} direction landmarks")

# %% [markdown]
# During the turn the direction support drops. Those frames fall back to
# point-based rotation, and `FrameResult.rotation_source` records which path was used.

# %%
from collections import Counter

print(Counter(r.rotation_source for r in results))

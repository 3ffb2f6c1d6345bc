# %% [markdown]
# # Rotation from shared directions
#
# Two frames that see the same pair of non-parallel 3D directions (vanishing
# directions of line bundles, or plane normals) are enough to fix their
# relative rotation. Translation plays no part, since directions are unaffected by it.

# %%
import numpy as np
from scipy.spatial.transform import Rotation

from extgraph.geom import angular_distance, complete_basis, rotation_from_bases
from extgraph.pose import rotation_from_matches

r_true = Rotation.from_euler("zyx", [35, -10, 5], degrees=True).as_matrix()
wall_normal = np.array([1.0, 0.0, 0.0])
vertical = np.array([0.0, 0.0, 1.0])

# frame k sees the directions as-is, frame j sees them rotated
pairs = [(r_true @ wall_normal, wall_normal), (r_true @ vertical, vertical)]
r_est = rotation_from_matches(pairs)
print("error (rad):", angular_distance(r_est, r_true))

# %% [markdown]
# Under the hood each side builds an orthonormal basis from its two
# directions, with the cross product as the third axis. The rotation is
# `E_j E_k^T`.

# %%
bj = complete_basis(*(p[0] for p in pairs))
bk = complete_basis(*(p[1] for p in pairs))
print(np.allclose(rotation_from_bases(bj, bk), r_est))

# %% [markdown]
# Directions carry no sign: a vanishing direction seen "backwards" is the same
# landmark. Graph association canonicalizes signs before solving, so a flipped
# observation does not change the estimate (see demo 02).

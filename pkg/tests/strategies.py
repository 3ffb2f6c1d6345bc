import numpy as np
from hypothesis import strategies as st

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)
vec3 = st.tuples(finite, finite, finite).map(np.array)
unit3 = vec3.filter(lambda v: np.linalg.norm(v) > 1e-3).map(lambda v: v / np.linalg.norm(v))
seeds = st.integers(0, 2**32 - 1)


def rotation_from_seed(seed):
    from scipy.spatial.transform import Rotation

    return Rotation.random(random_state=int(seed)).as_matrix()


rotations = seeds.map(rotation_from_seed)

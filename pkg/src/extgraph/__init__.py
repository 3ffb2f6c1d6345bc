"""Rotation estimation from shared structural directions.

Keyframes that observe the same vanishing directions or plane normals are
linked by rotation edges, whether or not they share any point features.
"""
from .evaluation import (
    Trajectory,
    align_se3,
    are_mean,
    are_rmse,
    associate,
    ate_rmse,
    evaluate,
    read_tum,
    rpe,
    write_tum,
)
from .geom import (
    DegenerateGeometryError,
    NearParallelError,
    NonOrthogonalError,
    OrthonormalBasis,
    Pose,
    RankDeficiencyError,
    angular_distance,
    complete_basis,
    gram_schmidt,
    rotation_from_bases,
    rotation_orthogonal_case,
)
from .graph import (
    EGraph,
    FrameStats,
    build_covisibility_graph,
    export_graph,
    graph_stats,
    init_graph,
    insert_keyframe,
    relative_rotation,
    should_insert_keyframe,
)
from .landmarks import DirectionLandmark, DirectionObservation, cluster_directions, fuse, match_direction
from .observations import FrameObservation, PlaneObservation
from .pose import (
    procrustes_rotation,
    refine_translation,
    rotation_from_matches,
    translation_direction_from_bearings,
    translation_from_points,
)
from .tracking import Tracker, TrackerConfig, track_sequence

__version__ = "0.1.0"

"""Direct two-frame pose estimation for a calibrated monocular camera."""

from .camera import (
    CameraIntrinsics,
    PixelPoint,
    Ray,
    lift,
    lift_pixels,
    load_calibration,
    observable_motion,
    parse_calibration,
    project,
    project_points,
    z_infinity,
)
from .errors import *  # noqa: F401,F403
from .pipeline import FULL, ROTATION_ONLY, PipelineConfig, PoseEstimate, estimate_pose
from .rotation import (
    DirectionPair,
    RansacConfig,
    RotationResult,
    estimate_rotation_ransac,
    procrustes,
    rotation_from_euler,
    rotation_residual,
    rotation_to_euler,
)
from .simulation import SceneSpec, SimulationReport, generate_scene, run_monte_carlo
from .tracks import (
    FeatureCorrespondence,
    TrackSet,
    load_tracks,
    pair_correspondences,
    parse_tracks,
    serialize_tracks,
)
from .translation import (
    EpipoleEstimate,
    FlowSegment,
    compensate_rotation,
    estimate_epipole,
    intersect_pair,
    sign_of_motion,
)

__version__ = "0.1.0"

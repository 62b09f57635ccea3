"""panolab: panoramic projection geometry, video metrics, and a LoRA rank lab."""

__version__ = "0.1.0"

from .errors import (
    FormatError,
    GeometryDomainError,
    InvalidInputError,
    PanolabError,
    ParseError,
    ReluKinkWarning,
    UndefinedSimilarityError,
)
from .geometry import (
    CameraIntrinsics,
    CameraPose,
    EquirectFrame,
    ImageBuffer,
    Projection8DoF,
    SceneModel,
    apply_pose,
    bilinear_sample,
    direction_to_equirect,
    equirect_to_direction,
    pixel_to_ray,
    ray_to_scene_point,
    solid_angle_fraction,
    warp_equirect_to_perspective,
    warp_perspective_to_equirect,
    yaw_shift,
)
from .lora_lab import (
    CoverageReport,
    LinearNetwork,
    LoraModule,
    RankBoundSummary,
    RankReport,
    TargetFamily,
    delta_output_matrix,
    dof_coverage_experiment,
    first_order_delta,
    lora_forward,
    network_jacobian,
    numerical_rank,
    projection_target_family,
    run_coverage_experiment,
    run_rank_experiment,
    verify_rank_bound,
)
from .metrics import (
    FarnebackParams,
    FlowField,
    MotionReport,
    PoseLog,
    SeamReport,
    cardinal_motion,
    farneback_flow,
    motion_magnitude,
    pose_statistics,
    psnr,
    seam_consistency,
    seam_sequence,
)

__all__ = [name for name in dir() if not name.startswith("_")]

"""Cross-view localization on a synthetic multi-season world.

A ground vehicle renders short forward-view clips of a procedurally generated
terrain; a lightweight embedding model aligns those clips with heading-up
aerial patches of the same terrain; a particle filter with an
entropy-adaptive measurement temperature turns the match scores into a pose
estimate that survives season changes between the map and the camera.
"""

from .aggregation import (
    AggregationConfig,
    AggregationResult,
    QualityMlpParams,
    aggregate_clip,
    init_quality_mlp,
    mlp_backward,
    mlp_forward,
    raw_cosine,
    softmax_weights,
    weight_entropy,
)
from .config import (
    EvalConfig,
    LocalizeConfig,
    RunConfig,
    TrajectoryConfig,
    WorldConfig,
    config_from_dict,
    config_to_dict,
    load_config,
)
from .core import (
    Pose,
    StampedPose,
    Trajectory,
    ang_diff,
    load_trajectory_csv,
    save_trajectory_csv,
    weighted_circular_mean,
    wrap_angle,
)
from .encoder import (
    EncoderConfig,
    EncoderParams,
    encode,
    encode_batch,
    init_encoder,
    similarity_score,
    standardize_pixels,
)
from .errors import (
    ConfigError,
    DomainError,
    OutOfBoundsError,
    ShapeError,
    TrainingError,
)
from .evaluate import (
    LikelihoodMap,
    MetricsReport,
    associate,
    ate,
    compute_metrics,
    likelihood_map,
    sdr,
    success_rate,
)
from .frame_sampler import SamplerConfig, select_clip_frames
from .io import load_checkpoint, save_checkpoint
from .mcl import (
    BeliefState,
    Control,
    FilterConfig,
    MotionNoiseConfig,
    Particle,
    adaptive_lambda,
    estimate_pose,
    init_particles,
    kde_bandwidth,
    kde_density_grid,
    kde_spatial_entropy,
    measurement_update,
    predict,
    resample,
    step,
    systematic_resample_indices,
)
from .mining import (
    MiningConfig,
    Triplet,
    TripletMiner,
    build_triplet_batch,
    select_hard_negatives,
    select_hard_positive,
)
from .pipeline import (
    LocalizationResult,
    derive_controls,
    make_clip_matcher,
    run_localization,
)
from .training import (
    Adam,
    ReduceLROnPlateau,
    TrainingConfig,
    clip_gradients,
    combine_stage2_loss,
    prepare_stage2_batch,
    stage1_loss_and_grads,
    stage2_loss_and_grads,
    total_loss,
    train_model,
    train_stage1,
    train_stage2,
    triplet_loss,
)
from .world import (
    AugmentationParams,
    GroundClip,
    ImagePatch,
    RenderConfig,
    WorldModel,
    apply_augmentation,
    build_world,
    generate_trajectory,
    render_aerial_patch,
    render_aerial_patches,
    render_ground_clip,
    sample_augmentation_params,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # core geometry
    "Pose",
    "StampedPose",
    "Trajectory",
    "wrap_angle",
    "ang_diff",
    "weighted_circular_mean",
    "save_trajectory_csv",
    "load_trajectory_csv",
    # world
    "WorldModel",
    "build_world",
    "RenderConfig",
    "ImagePatch",
    "GroundClip",
    "AugmentationParams",
    "apply_augmentation",
    "sample_augmentation_params",
    "render_aerial_patch",
    "render_aerial_patches",
    "render_ground_clip",
    "generate_trajectory",
    # encoder
    "EncoderConfig",
    "EncoderParams",
    "init_encoder",
    "encode",
    "encode_batch",
    "similarity_score",
    "standardize_pixels",
    # clip assembly & aggregation
    "SamplerConfig",
    "select_clip_frames",
    "AggregationConfig",
    "AggregationResult",
    "QualityMlpParams",
    "init_quality_mlp",
    "mlp_forward",
    "mlp_backward",
    "raw_cosine",
    "softmax_weights",
    "aggregate_clip",
    "weight_entropy",
    # mining & training
    "MiningConfig",
    "Triplet",
    "TripletMiner",
    "build_triplet_batch",
    "select_hard_positive",
    "select_hard_negatives",
    "TrainingConfig",
    "triplet_loss",
    "combine_stage2_loss",
    "total_loss",
    "stage1_loss_and_grads",
    "stage2_loss_and_grads",
    "prepare_stage2_batch",
    "Adam",
    "ReduceLROnPlateau",
    "clip_gradients",
    "train_stage1",
    "train_stage2",
    "train_model",
    # filtering
    "FilterConfig",
    "MotionNoiseConfig",
    "Control",
    "Particle",
    "BeliefState",
    "init_particles",
    "predict",
    "measurement_update",
    "systematic_resample_indices",
    "resample",
    "estimate_pose",
    "step",
    "kde_bandwidth",
    "kde_density_grid",
    "kde_spatial_entropy",
    "adaptive_lambda",
    # evaluation
    "MetricsReport",
    "LikelihoodMap",
    "associate",
    "ate",
    "sdr",
    "success_rate",
    "compute_metrics",
    "likelihood_map",
    # orchestration
    "RunConfig",
    "WorldConfig",
    "TrajectoryConfig",
    "LocalizeConfig",
    "EvalConfig",
    "load_config",
    "config_from_dict",
    "config_to_dict",
    "LocalizationResult",
    "derive_controls",
    "run_localization",
    "make_clip_matcher",
    "save_checkpoint",
    "load_checkpoint",
    # errors
    "ConfigError",
    "ShapeError",
    "DomainError",
    "OutOfBoundsError",
    "TrainingError",
]

//! Plane-sweep multi-view stereo with three families of depth losses.
//!
//! The crate builds variance cost volumes from calibrated views, turns them
//! into per-pixel depth distributions, and supervises those distributions
//! with soft-argmin regression, cross entropy, or the offset-augmented
//! adaptive Wasserstein loss. A per-pixel Adam fit stands in for a trained
//! network so the losses can be compared end to end: depth readout,
//! photometric and geometric filtering, fusion, and point-cloud metrics.
//!
//! Conventions used throughout:
//! * pixel centers sit at integer coordinates, origin at the top-left;
//! * volumes are stored row-major as `(y, x, hypothesis)`;
//! * cameras map world points with `x_cam = R x_world + t`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod evalmetrics;
pub mod geometry;
pub mod gradcheck;
pub mod inference;
pub mod io;
pub mod losses;
pub mod optimizer;
pub mod pipeline;
pub mod postproc;
pub mod scenegen;
pub mod volume;

pub use error::{Error, Result};
pub use evalmetrics::{evaluate_point_clouds, CloudMetrics};
pub use geometry::{
    backproject_pixel, plane_homography, project_point, sample_depth_hypotheses, warp_image, CameraModel,
    DepthHypothesisSet, SamplingMode,
};
pub use inference::{confidence_map, depth_expectation, depth_mode_offset, ConfidenceMap, DepthMap};
pub use losses::{
    loss_adaptive_wasserstein, loss_classification, loss_offset_regression, loss_regression, loss_wasserstein,
    one_hot_occupancy, wasserstein_pixel, LossConfig, LossValueAndGradient, OccupancyVolume,
};
pub use optimizer::{fit_volume, FitConfig, FitState, LossKind};
pub use postproc::{fuse_point_cloud, geometric_filter, photometric_filter, PointCloud};
pub use scenegen::{generate_scene, Scene, SceneKind, SceneSpec};
pub use volume::{
    build_cost_volume, extract_features, softmax_depth, variance_cost, FeatureVolume, ImageGrid, OffsetVolume,
    ProbabilityVolume, ScoreVolume, Volume3,
};

//! Registration metrics and forward-only loss evaluators.

mod losses;
mod metrics;

pub use losses::{
    confidence_loss, dense_loss, info_nce, keypoint_losses, matching_loss, position_loss, total_loss, UnmatchedSign,
    InfoNceSample, KeypointLoss, KeypointLossInput, LossWeights, MatchingLoss, MatchingLossInput, LOG_FLOOR,
};
pub use metrics::{
    feature_matching_recall, inlier_ratio, pose_error, registration_recall, rre, rte, transform_rmse,
    MetricThresholds, PoseError, RecallCriterion,
};

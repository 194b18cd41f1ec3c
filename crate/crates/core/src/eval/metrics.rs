use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{check_rotation, rotation_angle, CorrespondenceSet, PointCloud, RigidTransform};
use crate::scalar::Scalar;

/// How a registered pair is judged successful.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecallCriterion {
    /// `RRE ≤ rre_max` and `RTE ≤ rte_max`.
    #[default]
    Pose,
    /// RMSE of the source cloud under estimated vs true pose `≤ rr_rmse_max`.
    Rmse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricThresholds {
    pub inlier_radius: f64,
    pub fmr_min_ir: f64,
    pub rr_rmse_max: f64,
    /// Degrees.
    pub rre_max: f64,
    pub rte_max: f64,
    pub rr_criterion: RecallCriterion,
}

impl Default for MetricThresholds {
    fn default() -> Self {
        Self {
            inlier_radius: 0.1,
            fmr_min_ir: 0.05,
            rr_rmse_max: 0.2,
            rre_max: 15.0,
            rte_max: 0.3,
            rr_criterion: RecallCriterion::Pose,
        }
    }
}

impl MetricThresholds {
    pub fn validate(&self) -> Result<()> {
        let all = [self.inlier_radius, self.fmr_min_ir, self.rr_rmse_max, self.rre_max, self.rte_max];
        if all.iter().all(|v| *v > 0.0 && v.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidParameter("metric thresholds must be positive".into()))
        }
    }
}

/// Rotation error in degrees: `acos((tr(R_gtᵀ·R_est) − 1)/2)`, via [`rotation_angle`].
pub fn rre<T: Scalar>(r_est: &Matrix3<T>, r_gt: &Matrix3<T>) -> Result<T> {
    check_rotation(r_est)?;
    check_rotation(r_gt)?;
    Ok(rotation_angle(&(r_gt.transpose() * r_est)) * T::lit(180.0 / std::f64::consts::PI))
}

pub fn rte<T: Scalar>(t_est: &Vector3<T>, t_gt: &Vector3<T>) -> T {
    (t_est - t_gt).norm()
}

/// Fraction of pairs with `‖T_gt(p) − q‖ < radius`.
pub fn inlier_ratio<T: Scalar>(
    corrs: &CorrespondenceSet<T>,
    src: &PointCloud<T>,
    tar: &PointCloud<T>,
    t_gt: &RigidTransform<T>,
    radius: T,
) -> Result<T> {
    if corrs.is_empty() {
        return Err(Error::EmptyInput("correspondences"));
    }
    corrs.validate(src.len(), tar.len())?;
    let hits = corrs
        .endpoints(src, tar)
        .filter(|(p, q)| (t_gt.apply_point(p) - *q).norm() < radius)
        .count();
    Ok(T::lit(hits as f64) / T::lit(corrs.len() as f64))
}

/// Fraction of inlier ratios strictly above `min_ir`.
pub fn feature_matching_recall<T: Scalar>(irs: &[T], min_ir: T) -> Result<T> {
    if irs.is_empty() {
        return Err(Error::EmptyInput("inlier ratios"));
    }
    let hits = irs.iter().filter(|&&ir| ir > min_ir).count();
    Ok(T::lit(hits as f64) / T::lit(irs.len() as f64))
}

/// Root mean squared distance between `est(p)` and `gt(p)` over the cloud.
pub fn transform_rmse<T: Scalar>(cloud: &PointCloud<T>, est: &RigidTransform<T>, gt: &RigidTransform<T>) -> Result<T> {
    if cloud.is_empty() {
        return Err(Error::EmptyInput("cloud"));
    }
    let sum = cloud
        .points()
        .iter()
        .fold(T::zero(), |a, p| a + (est.apply_point(p) - gt.apply_point(p)).norm_squared());
    Ok((sum / T::lit(cloud.len() as f64)).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseError<T> {
    /// Degrees.
    pub rre: T,
    pub rte: T,
    pub rmse: Option<T>,
}

/// RRE/RTE of `est` against `gt`, plus RMSE over `cloud` when given.
pub fn pose_error<T: Scalar>(
    est: &RigidTransform<T>,
    gt: &RigidTransform<T>,
    cloud: Option<&PointCloud<T>>,
) -> Result<PoseError<T>> {
    Ok(PoseError {
        rre: rre(est.rotation(), gt.rotation())?,
        rte: rte(est.translation(), gt.translation()),
        rmse: cloud.map(|c| transform_rmse(c, est, gt)).transpose()?,
    })
}

/// Fraction of results meeting the configured criterion. Results lacking an
/// RMSE never pass the RMSE criterion.
pub fn registration_recall<T: Scalar>(results: &[PoseError<T>], thresholds: &MetricThresholds) -> Result<T> {
    if results.is_empty() {
        return Err(Error::EmptyInput("registration results"));
    }
    let pass = |e: &PoseError<T>| match thresholds.rr_criterion {
        RecallCriterion::Pose => e.rre <= T::lit(thresholds.rre_max) && e.rte <= T::lit(thresholds.rte_max),
        RecallCriterion::Rmse => e.rmse.is_some_and(|r| r <= T::lit(thresholds.rr_rmse_max)),
    };
    let hits = results.iter().filter(|e| pass(e)).count();
    Ok(T::lit(hits as f64) / T::lit(results.len() as f64))
}

//! Deterministic rigid point-cloud registration.
//!
//! The pipeline builds a three-level kernel-point feature pyramid ([`hpa`]),
//! refines the mid-resolution features with geometry-biased cross and self
//! attention ([`hcla`]), matches superpoints and filters them by geometric
//! consistency ([`matcher`]), and solves the pose by alternating robust
//! reweighting with a weighted SVD ([`igar`]). [`eval`] holds the metrics and
//! forward-only loss evaluators.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! at the crate root fix `f64`, which is what the tests and the CLI use.

pub mod error;
pub mod eval;
pub mod geometry;
pub mod hcla;
pub mod hpa;
pub mod igar;
pub mod matcher;
pub mod rng;
pub mod scalar;

pub use error::{Error, Result};
pub use geometry::{nearest_rotation, rotation_angle, CorrespondenceSet, PointCloud, RigidTransform};
pub use rng::SeededStream;
pub use scalar::Scalar;

pub type Cloud = PointCloud<f64>;
pub type Transform = RigidTransform<f64>;
pub type Correspondences = CorrespondenceSet<f64>;
pub type Pyramid = hpa::FeaturePyramid<f64>;

pub type Cloud32 = PointCloud<f32>;
pub type Transform32 = RigidTransform<f32>;
pub type Correspondences32 = CorrespondenceSet<f32>;

//! Seeded synthetic scenes with known pose, overlap, noise and outliers.
//!
//! Generation order on one [`SeededStream`] (so any port reproduces the same
//! scene): source points, then the pose (axis, angle, translation direction,
//! translation length), then the overlap direction, then per-target-point
//! noise (three normals each, x/y/z) for inliers, then outlier positions.

use igasa_core::{Cloud, Correspondences, SeededStream, Transform};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Shape {
    /// Uniform in `[-0.5, 0.5]³`.
    #[default]
    UniformCube,
    /// Uniform on the sphere of radius 0.5.
    SphereShell,
    /// Three mutually orthogonal unit squares meeting at a corner.
    MultiPlane,
    /// Floor and three walls of a unit room plus two boxes standing on the floor.
    RoomBoxes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub point_count: usize,
    pub shape: Shape,
    pub noise_std: f64,
    pub outlier_fraction: f64,
    pub overlap_fraction: f64,
    /// Degrees.
    pub pose_rotation_max: f64,
    pub pose_translation_max: f64,
    pub seed: u64,
    /// Outliers are redrawn until they sit at least this far from where their
    /// source point truly lands.
    pub outlier_min_residual: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            point_count: 1000,
            shape: Shape::UniformCube,
            noise_std: 0.0,
            outlier_fraction: 0.0,
            overlap_fraction: 1.0,
            pose_rotation_max: 10.0,
            pose_translation_max: 0.1,
            seed: 0,
            outlier_min_residual: 0.0,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(BenchError::Config(m.to_string()));
        if self.point_count < 10 {
            return bad("point_count must be at least 10");
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return bad("noise_std must be non-negative");
        }
        if !(0.0..1.0).contains(&self.outlier_fraction) {
            return bad("outlier_fraction must lie in [0, 1)");
        }
        if !(self.overlap_fraction > 0.0 && self.overlap_fraction <= 1.0) {
            return bad("overlap_fraction must lie in (0, 1]");
        }
        if !(self.pose_rotation_max >= 0.0 && self.pose_rotation_max <= 180.0) {
            return bad("pose_rotation_max must lie in [0, 180] degrees");
        }
        if !(self.pose_translation_max >= 0.0 && self.pose_translation_max.is_finite()) {
            return bad("pose_translation_max must be non-negative");
        }
        if !(self.outlier_min_residual >= 0.0 && self.outlier_min_residual.is_finite()) {
            return bad("outlier_min_residual must be non-negative");
        }
        Ok(())
    }
}

/// Index bookkeeping that ships with every scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneManifest {
    /// Source indices inside the overlap, ascending.
    pub overlap: Vec<usize>,
    /// `(source, target)` pairs related by the pose (plus noise).
    pub inlier_pairs: Vec<(usize, usize)>,
    /// `(source, target)` pairs whose target was replaced by an outlier.
    pub outlier_pairs: Vec<(usize, usize)>,
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub src: Cloud,
    pub tar: Cloud,
    pub gt: Transform,
    /// True inlier correspondences.
    pub gt_corrs: Correspondences,
    pub manifest: SceneManifest,
}

impl Scene {
    /// Ground-truth inlier pairs followed by the outlier pairs.
    pub fn mixed_corrs(&self) -> Correspondences {
        let mut pairs = self.manifest.inlier_pairs.clone();
        pairs.extend(&self.manifest.outlier_pairs);
        Correspondences::new(pairs).expect("scene pairs are distinct")
    }
}

fn face_point(rng: &mut SeededStream, lo: Vector3<f64>, hi: Vector3<f64>, axis: usize, at: f64) -> Vector3<f64> {
    let mut p = Vector3::zeros();
    for i in 0..3 {
        p[i] = if i == axis { at } else { rng.uniform_range(lo[i], hi[i]) };
    }
    p
}

fn sample_shape(shape: Shape, n: usize, rng: &mut SeededStream) -> Vec<Vector3<f64>> {
    let half = Vector3::repeat(0.5);
    (0..n)
        .map(|_| match shape {
            Shape::UniformCube => Vector3::new(rng.uniform(), rng.uniform(), rng.uniform()) - half,
            Shape::SphereShell => rng.unit_vector() * 0.5,
            Shape::MultiPlane => {
                let axis = rng.index(3);
                face_point(rng, -half, half, axis, -0.5)
            }
            Shape::RoomBoxes => {
                // Floor z = -0.5, walls x = -0.5, y = -0.5, x = 0.5; two boxes on the floor.
                let boxes = [
                    (Vector3::new(-0.3, -0.3, -0.5), Vector3::new(0.0, 0.1, -0.2)),
                    (Vector3::new(0.1, 0.0, -0.5), Vector3::new(0.35, 0.3, 0.0)),
                ];
                match rng.index(6) {
                    0 => face_point(rng, -half, half, 2, -0.5),
                    1 => face_point(rng, -half, half, 0, -0.5),
                    2 => face_point(rng, -half, half, 1, -0.5),
                    3 => face_point(rng, -half, half, 0, 0.5),
                    k => {
                        let (lo, hi) = boxes[k - 4];
                        let axis = rng.index(3);
                        let at = if rng.uniform() < 0.5 { lo[axis] } else { hi[axis] };
                        face_point(rng, lo, hi, axis, at)
                    }
                }
            }
        })
        .collect()
}

fn sample_pose(config: &SceneConfig, rng: &mut SeededStream) -> Transform {
    let axis = rng.unit_vector();
    let angle = rng.uniform() * config.pose_rotation_max.to_radians();
    let dir = rng.unit_vector();
    let t = dir * (rng.uniform() * config.pose_translation_max);
    Transform::from_axis_angle(axis, angle, t).expect("unit axis")
}

const MAX_OUTLIER_DRAWS: usize = 10_000;

/// Builds the scene described by `config`; bitwise reproducible per seed.
///
/// The overlap is the `round(overlap_fraction·n)` source points with the
/// lowest projection on a random direction. Of those, the last
/// `round(outlier_fraction·m)` (in index order) are replaced in the target by
/// points uniform in the bounding box of the transformed overlap. Target point
/// `i` corresponds to the `i`-th overlap index.
pub fn generate_scene(config: &SceneConfig) -> Result<Scene> {
    config.validate()?;
    let mut rng = SeededStream::new(config.seed);
    let n = config.point_count;
    let src_pts = sample_shape(config.shape, n, &mut rng);
    let gt = sample_pose(config, &mut rng);

    let dir = rng.unit_vector();
    let m = ((config.overlap_fraction * n as f64).round() as usize).clamp(1, n);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        src_pts[a]
            .dot(&dir)
            .partial_cmp(&src_pts[b].dot(&dir))
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut overlap = order[..m].to_vec();
    overlap.sort_unstable();

    let n_out = (config.outlier_fraction * m as f64).round() as usize;
    let n_in = m - n_out;
    let mut tar_pts = Vec::with_capacity(m);
    let mut inlier_pairs = Vec::with_capacity(n_in);
    for (t, &s) in overlap[..n_in].iter().enumerate() {
        let noise = Vector3::new(rng.normal(), rng.normal(), rng.normal()) * config.noise_std;
        tar_pts.push(gt.apply_point(&src_pts[s]) + noise);
        inlier_pairs.push((s, t));
    }

    let moved: Vec<_> = overlap.iter().map(|&s| gt.apply_point(&src_pts[s])).collect();
    let (lo, hi) = moved.iter().fold(
        (Vector3::repeat(f64::INFINITY), Vector3::repeat(f64::NEG_INFINITY)),
        |(lo, hi), p| (lo.inf(p), hi.sup(p)),
    );
    let mut outlier_pairs = Vec::with_capacity(n_out);
    for (k, &s) in overlap[n_in..].iter().enumerate() {
        let truth = moved[n_in + k];
        let mut q = Vector3::zeros();
        for _ in 0..MAX_OUTLIER_DRAWS {
            q = Vector3::new(
                rng.uniform_range(lo.x, hi.x),
                rng.uniform_range(lo.y, hi.y),
                rng.uniform_range(lo.z, hi.z),
            );
            if (q - truth).norm() >= config.outlier_min_residual {
                break;
            }
        }
        outlier_pairs.push((s, tar_pts.len()));
        tar_pts.push(q);
    }

    let gt_corrs = Correspondences::new(inlier_pairs.clone())?;
    Ok(Scene {
        src: Cloud::new(src_pts)?,
        tar: Cloud::new(tar_pts)?,
        gt,
        gt_corrs,
        manifest: SceneManifest {
            overlap,
            inlier_pairs,
            outlier_pairs,
        },
    })
}

//! Point clouds, rigid transforms and correspondence sets.

use std::collections::HashSet;

use nalgebra::{DMatrix, Matrix3, Rotation3, Unit, Vector3};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A set of 3D positions with optional per-point feature rows.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud<T: Scalar> {
    points: Vec<Vector3<T>>,
    features: Option<DMatrix<T>>,
}

impl<T: Scalar> PointCloud<T> {
    pub fn new(points: Vec<Vector3<T>>) -> Result<Self> {
        if let Some(i) = points.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self {
            points,
            features: None,
        })
    }

    pub fn with_features(points: Vec<Vector3<T>>, features: DMatrix<T>) -> Result<Self> {
        let mut cloud = Self::new(points)?;
        cloud.set_features(features)?;
        Ok(cloud)
    }

    pub fn from_arrays(points: &[[T; 3]]) -> Result<Self> {
        Self::new(points.iter().map(|p| Vector3::new(p[0], p[1], p[2])).collect())
    }

    pub fn set_features(&mut self, features: DMatrix<T>) -> Result<()> {
        if features.nrows() != self.points.len() {
            return Err(Error::DimensionMismatch {
                what: "feature rows vs point count",
                expected: self.points.len(),
                got: features.nrows(),
            });
        }
        self.features = Some(features);
        Ok(())
    }

    pub fn points(&self) -> &[Vector3<T>] {
        &self.points
    }

    pub fn features(&self) -> Option<&DMatrix<T>> {
        self.features.as_ref()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &Vector3<T> {
        &self.points[i]
    }

    /// Axis-aligned bounds `(min, max)`, or `None` for an empty cloud.
    pub fn bounds(&self) -> Option<(Vector3<T>, Vector3<T>)> {
        let first = *self.points.first()?;
        Some(self.points.iter().fold((first, first), |(lo, hi), p| {
            (lo.inf(p), hi.sup(p))
        }))
    }

    pub fn into_parts(self) -> (Vec<Vector3<T>>, Option<DMatrix<T>>) {
        (self.points, self.features)
    }
}

/// A proper rigid motion `p ↦ R·p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform<T: Scalar> {
    rotation: Matrix3<T>,
    translation: Vector3<T>,
}

impl<T: Scalar> RigidTransform<T> {
    /// Validates that `rotation` is orthogonal with determinant +1.
    pub fn new(rotation: Matrix3<T>, translation: Vector3<T>) -> Result<Self> {
        check_rotation(&rotation)?;
        if !translation.iter().all(|c| c.is_finite()) {
            return Err(Error::NonFinite(0));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub(crate) fn from_parts_unchecked(rotation: Matrix3<T>, translation: Vector3<T>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::from_parts_unchecked(Matrix3::identity(), Vector3::zeros())
    }

    pub fn from_translation(translation: Vector3<T>) -> Self {
        Self::from_parts_unchecked(Matrix3::identity(), translation)
    }

    /// Rotation of `angle` radians about `axis` (need not be normalized), followed by `translation`.
    pub fn from_axis_angle(axis: Vector3<T>, angle: T, translation: Vector3<T>) -> Result<Self> {
        if axis.norm() <= T::zero() {
            return Err(Error::InvalidParameter("rotation axis has zero length".into()));
        }
        let rot = Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle);
        Ok(Self::from_parts_unchecked(*rot.matrix(), translation))
    }

    /// Rotation from a rotation vector (axis scaled by angle in radians).
    pub fn from_rotation_vector(rotvec: Vector3<T>, translation: Vector3<T>) -> Self {
        let rot = Rotation3::new(rotvec);
        Self::from_parts_unchecked(*rot.matrix(), translation)
    }

    pub fn rotation(&self) -> &Matrix3<T> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<T> {
        &self.translation
    }

    pub fn apply_point(&self, p: &Vector3<T>) -> Vector3<T> {
        self.rotation * p + self.translation
    }

    /// Transforms every point; features are carried over unchanged.
    pub fn apply(&self, cloud: &PointCloud<T>) -> PointCloud<T> {
        PointCloud {
            points: cloud.points.iter().map(|p| self.apply_point(p)).collect(),
            features: cloud.features.clone(),
        }
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &Self) -> Self {
        let rotation = self.rotation * other.rotation;
        let translation = self.rotation * other.translation + self.translation;
        let out = Self::from_parts_unchecked(rotation, translation);
        if out.orthogonality_residual() > T::ortho_tol() {
            out.reorthonormalized()
        } else {
            out
        }
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self::from_parts_unchecked(rt, -(rt * self.translation))
    }

    /// `‖RᵀR − I‖_F`.
    pub fn orthogonality_residual(&self) -> T {
        (self.rotation.transpose() * self.rotation - Matrix3::identity()).norm()
    }

    /// Projects the rotation back onto SO(3) via the polar decomposition.
    pub fn reorthonormalized(&self) -> Self {
        Self::from_parts_unchecked(nearest_rotation(&self.rotation), self.translation)
    }

    /// Rotation angle in radians, in `[0, π]`.
    pub fn angle(&self) -> T {
        rotation_angle(&self.rotation)
    }
}

impl<T: Scalar> Default for RigidTransform<T> {
    fn default() -> Self {
        Self::identity()
    }
}

pub(crate) fn check_rotation<T: Scalar>(r: &Matrix3<T>) -> Result<()> {
    let residual = (r.transpose() * r - Matrix3::identity()).norm();
    let det = r.determinant();
    let ok = residual.is_finite()
        && residual <= T::ortho_tol()
        && (det - T::one()).abs() <= T::ortho_tol();
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidRotation {
            residual: residual.to_f64_lossy(),
            det: det.to_f64_lossy(),
        })
    }
}

/// Closest proper rotation to `m` in the Frobenius sense.
pub fn nearest_rotation<T: Scalar>(m: &Matrix3<T>) -> Matrix3<T> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let d = (u * v_t).determinant().signum();
    let fix = Matrix3::from_diagonal(&Vector3::new(T::one(), T::one(), d));
    u * fix * v_t
}

/// Angle of a rotation matrix, `acos((tr R − 1)/2)`.
///
/// Evaluated as `atan2(‖vee(R − Rᵀ)‖/2, (tr R − 1)/2)`, which is the same angle
/// for a rotation but does not lose half the digits near zero the way `acos` does.
pub fn rotation_angle<T: Scalar>(r: &Matrix3<T>) -> T {
    let two = T::lit(2.0);
    let c = ((r.trace() - T::one()) / two).clamp(-T::one(), T::one());
    let axis = Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]);
    (axis.norm() / two).atan2(c)
}

/// Paired source/target indices with optional scores and weights.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrespondenceSet<T: Scalar> {
    pairs: Vec<(usize, usize)>,
    scores: Option<Vec<T>>,
    weights: Option<Vec<T>>,
}

impl<T: Scalar> CorrespondenceSet<T> {
    pub fn new(pairs: Vec<(usize, usize)>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(pairs.len());
        for &(s, t) in &pairs {
            if !seen.insert((s, t)) {
                return Err(Error::DuplicatePair(s, t));
            }
        }
        Ok(Self {
            pairs,
            scores: None,
            weights: None,
        })
    }

    pub fn empty() -> Self {
        Self {
            pairs: Vec::new(),
            scores: None,
            weights: None,
        }
    }

    pub fn with_scores(mut self, scores: Vec<T>) -> Result<Self> {
        self.check_len("scores", scores.len())?;
        self.scores = Some(scores);
        Ok(self)
    }

    pub fn with_weights(mut self, weights: Vec<T>) -> Result<Self> {
        self.check_len("weights", weights.len())?;
        if let Some(w) = weights.iter().find(|w| !(**w >= T::zero() && **w <= T::one())) {
            return Err(Error::InvalidWeight(w.to_f64_lossy()));
        }
        self.weights = Some(weights);
        Ok(self)
    }

    fn check_len(&self, what: &'static str, got: usize) -> Result<()> {
        if got != self.pairs.len() {
            return Err(Error::DimensionMismatch {
                what,
                expected: self.pairs.len(),
                got,
            });
        }
        Ok(())
    }

    /// Checks that every index is addressable in clouds of the given sizes.
    pub fn validate(&self, src_len: usize, tar_len: usize) -> Result<()> {
        for &(s, t) in &self.pairs {
            if s >= src_len {
                return Err(Error::IndexOutOfBounds { index: s, len: src_len });
            }
            if t >= tar_len {
                return Err(Error::IndexOutOfBounds { index: t, len: tar_len });
            }
        }
        Ok(())
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn scores(&self) -> Option<&[T]> {
        self.scores.as_deref()
    }

    pub fn weights(&self) -> Option<&[T]> {
        self.weights.as_deref()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Keeps the pairs at `indices`, in that order, carrying scores and weights along.
    pub fn select(&self, indices: &[usize]) -> Self {
        let pick = |v: &Vec<T>| indices.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Self {
            pairs: indices.iter().map(|&i| self.pairs[i]).collect(),
            scores: self.scores.as_ref().map(pick),
            weights: self.weights.as_ref().map(pick),
        }
    }

    /// `(source, target)` positions for every pair. Indices must already be validated.
    pub fn endpoints<'a>(
        &'a self,
        src: &'a PointCloud<T>,
        tar: &'a PointCloud<T>,
    ) -> impl Iterator<Item = (&'a Vector3<T>, &'a Vector3<T>)> + 'a {
        self.pairs.iter().map(move |&(s, t)| (src.point(s), tar.point(t)))
    }
}

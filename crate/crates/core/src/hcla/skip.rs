use nalgebra::DMatrix;

use super::fusion::{gated_fusion, GatedFusionParams, Linear};
use crate::error::{Error, Result};
use crate::hpa::FeaturePyramid;
use crate::rng::SeededStream;
use crate::scalar::Scalar;

/// Skip features aligned to the minor points, and the skip attention bias over them.
#[derive(Debug, Clone, PartialEq)]
pub struct SkipBundle<T: Scalar> {
    features: DMatrix<T>,
    bias: DMatrix<T>,
}

impl<T: Scalar> SkipBundle<T> {
    /// Bias is the cosine similarity between feature rows.
    pub fn new(features: DMatrix<T>) -> Self {
        let bias = cosine_similarity_matrix(&features);
        Self { features, bias }
    }

    pub fn from_parts(features: DMatrix<T>, bias: DMatrix<T>) -> Result<Self> {
        let n = features.nrows();
        if bias.shape() != (n, n) {
            return Err(Error::DimensionMismatch {
                what: "skip bias side vs skip feature rows",
                expected: n,
                got: bias.nrows().max(bias.ncols()),
            });
        }
        if !bias.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidParameter("skip bias has non-finite entries".into()));
        }
        Ok(Self { features, bias })
    }

    /// Fuses minor-level features with ordinary-level features pooled onto the minor points.
    pub fn from_pyramid(pyramid: &FeaturePyramid<T>, params: &SkipParams<T>) -> Result<Self> {
        let minor = &pyramid.minor().features;
        let lifted = params.lift.forward(&pyramid.ordinary_pooled_to_minor())?;
        let fused = gated_fusion(minor, &lifted, &params.fusion)?;
        Ok(Self::new(fused))
    }

    pub fn features(&self) -> &DMatrix<T> {
        &self.features
    }

    pub fn bias(&self) -> &DMatrix<T> {
        &self.bias
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.nrows() == 0
    }

    /// Reorders rows (and bias rows/columns) so that new row `i` is old row `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = perm.len();
        let features = DMatrix::from_fn(n, self.features.ncols(), |i, c| self.features[(perm[i], c)]);
        let bias = DMatrix::from_fn(n, n, |i, j| self.bias[(perm[i], perm[j])]);
        Self { features, bias }
    }
}

/// Parameters that turn pyramid levels into a [`SkipBundle`].
#[derive(Debug, Clone, PartialEq)]
pub struct SkipParams<T: Scalar> {
    /// Lifts pooled ordinary features to the minor width.
    pub lift: Linear<T>,
    pub fusion: GatedFusionParams<T>,
}

impl<T: Scalar> SkipParams<T> {
    pub fn seeded(ordinary_dim: usize, minor_dim: usize, seed: u64) -> Self {
        let mut rng = SeededStream::new(seed);
        Self {
            lift: Linear::seeded(ordinary_dim, minor_dim, false, rng.next_u64()),
            fusion: GatedFusionParams::seeded(minor_dim, rng.next_u64()),
        }
    }
}

/// Pairwise cosine similarity of rows; rows with zero norm give 0.
pub fn cosine_similarity_matrix<T: Scalar>(features: &DMatrix<T>) -> DMatrix<T> {
    let n = features.nrows();
    let norms: Vec<T> = features.row_iter().map(|r| r.norm()).collect();
    let gram = features * features.transpose();
    DMatrix::from_fn(n, n, |i, j| {
        let d = norms[i] * norms[j];
        if d > T::zero() {
            (gram[(i, j)] / d).clamp(-T::one(), T::one())
        } else {
            T::zero()
        }
    })
}

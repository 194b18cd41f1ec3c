//! Superpoint matching: feature nearest neighbours, consistency scores, top-k.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CorrespondenceSet, PointCloud, RigidTransform};
use crate::igar::weighted_svd_solve;
use crate::scalar::Scalar;

/// How the hypothesis used for scoring is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitMode {
    #[default]
    Identity,
    /// One uniform-weight Procrustes solve over the raw matches.
    UnweightedSvd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchConfig {
    /// Pairs kept after scoring; [`default_k`] when unset.
    pub k: Option<usize>,
    pub sigma_score: f64,
    pub tinit: InitMode,
    /// Keep only pairs that are also nearest neighbours target→source.
    pub mutual: bool,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self::for_voxel(0.025)
    }
}

impl MatchConfig {
    /// `σ_s = 2·dl₀`.
    pub fn for_voxel(base_voxel: f64) -> Self {
        Self {
            k: None,
            sigma_score: 2.0 * base_voxel,
            tinit: InitMode::Identity,
            mutual: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == Some(0) {
            return Err(Error::InvalidParameter("k must be at least 1".into()));
        }
        if !(self.sigma_score > 0.0 && self.sigma_score.is_finite()) {
            return Err(Error::InvalidParameter("sigma_score must be positive".into()));
        }
        Ok(())
    }

    pub fn k_for(&self, n: usize) -> usize {
        self.k.unwrap_or_else(|| default_k(n))
    }
}

/// `max(⌈n/4⌉, 32)`.
pub fn default_k(n: usize) -> usize {
    n.div_ceil(4).max(32)
}

fn check_features<T: Scalar>(f_src: &DMatrix<T>, f_tar: &DMatrix<T>) -> Result<()> {
    if f_src.nrows() == 0 {
        return Err(Error::EmptyInput("source features"));
    }
    if f_tar.nrows() == 0 {
        return Err(Error::EmptyInput("target features"));
    }
    if f_src.ncols() != f_tar.ncols() {
        return Err(Error::DimensionMismatch {
            what: "feature width",
            expected: f_src.ncols(),
            got: f_tar.ncols(),
        });
    }
    Ok(())
}

fn nearest_rows<T: Scalar>(queries: &DMatrix<T>, pool: &DMatrix<T>) -> Vec<usize> {
    let d = queries.ncols();
    (0..queries.nrows())
        .into_par_iter()
        .map(|j| {
            let mut best = 0;
            let mut best_d = T::max_value().unwrap();
            for k in 0..pool.nrows() {
                let mut acc = T::zero();
                for c in 0..d {
                    let diff = queries[(j, c)] - pool[(k, c)];
                    acc += diff * diff;
                }
                if acc < best_d {
                    best_d = acc;
                    best = k;
                }
            }
            best
        })
        .collect()
}

/// One pair per source row, matched to its nearest target row (lowest index on ties).
pub fn nn_match<T: Scalar>(f_src: &DMatrix<T>, f_tar: &DMatrix<T>) -> Result<CorrespondenceSet<T>> {
    check_features(f_src, f_tar)?;
    let nn = nearest_rows(f_src, f_tar);
    CorrespondenceSet::new(nn.into_iter().enumerate().collect())
}

/// [`nn_match`] restricted to pairs that are nearest neighbours in both directions.
pub fn mutual_nn_match<T: Scalar>(f_src: &DMatrix<T>, f_tar: &DMatrix<T>) -> Result<CorrespondenceSet<T>> {
    check_features(f_src, f_tar)?;
    let fwd = nearest_rows(f_src, f_tar);
    let bwd = nearest_rows(f_tar, f_src);
    CorrespondenceSet::new(
        fwd.into_iter()
            .enumerate()
            .filter(|&(j, k)| bwd[k] == j)
            .collect(),
    )
}

/// `exp(−‖R·p + t − q‖²/σ²)` for every pair.
pub fn consistency_scores<T: Scalar>(
    corrs: &CorrespondenceSet<T>,
    src: &PointCloud<T>,
    tar: &PointCloud<T>,
    t_init: &RigidTransform<T>,
    sigma: T,
) -> Result<Vec<T>> {
    corrs.validate(src.len(), tar.len())?;
    let inv = T::one() / (sigma * sigma);
    Ok(corrs
        .endpoints(src, tar)
        .map(|(p, q)| (-(t_init.apply_point(p) - q).norm_squared() * inv).exp())
        .collect())
}

/// Scoring hypothesis for `mode`. A degenerate SVD bootstrap falls back to the identity.
pub fn initial_transform<T: Scalar>(
    mode: InitMode,
    corrs: &CorrespondenceSet<T>,
    src: &PointCloud<T>,
    tar: &PointCloud<T>,
) -> Result<RigidTransform<T>> {
    match mode {
        InitMode::Identity => Ok(RigidTransform::identity()),
        InitMode::UnweightedSvd => {
            let ones = vec![T::one(); corrs.len()];
            match weighted_svd_solve(corrs, src, tar, &ones) {
                Ok(t) => Ok(t),
                Err(Error::DegenerateWeights { .. } | Error::DegenerateGeometry) => Ok(RigidTransform::identity()),
                Err(e) => Err(e),
            }
        }
    }
}

/// The `min(k, n)` highest-scoring pairs, descending, ties kept in input order.
/// The result carries the scores.
pub fn topk_filter<T: Scalar>(corrs: &CorrespondenceSet<T>, scores: &[T], k: usize) -> Result<CorrespondenceSet<T>> {
    if scores.len() != corrs.len() {
        return Err(Error::DimensionMismatch {
            what: "scores vs pairs",
            expected: corrs.len(),
            got: scores.len(),
        });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(std::cmp::Ordering::Equal));
    order.truncate(k);
    let kept: Vec<T> = order.iter().map(|&i| scores[i]).collect();
    corrs.select(&order).with_scores(kept)
}

//! Iterative pose refinement: consistency weights alternated with a weighted SVD solve.
//!
//! Iteration 1 weights each pair by its raw gap `exp(−‖p − q‖²/σ²)`. Later
//! iterations weight by the residual under the previous pose and drop any pair
//! whose residual reaches `τ`. Each iteration solves the weighted Procrustes
//! problem in closed form.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CorrespondenceSet, PointCloud, RigidTransform};
use crate::scalar::Scalar;

pub const DEFAULT_MIN_EFFECTIVE_WEIGHT: f64 = 1e-8;

/// Which gap seeds the first-iteration weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialGap {
    /// `‖p_src − p_tar‖`, no transform applied.
    #[default]
    Raw,
    /// `‖T_init(p_src) − p_tar‖`.
    Transformed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineConfig {
    pub iterations: usize,
    pub sigma: f64,
    /// Residual gate; `3·sigma` when unset.
    pub tau: Option<f64>,
    pub min_effective_weight: f64,
    pub initial_gap: InitialGap,
    /// Stop once successive poses differ by less than this.
    pub early_exit: Option<f64>,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            iterations: 5,
            sigma: 0.05,
            tau: None,
            min_effective_weight: DEFAULT_MIN_EFFECTIVE_WEIGHT,
            initial_gap: InitialGap::Raw,
            early_exit: None,
        }
    }
}

impl RefineConfig {
    pub fn new(iterations: usize, sigma: f64, tau: f64) -> Self {
        Self {
            iterations,
            sigma,
            tau: Some(tau),
            ..Self::default()
        }
    }

    pub fn tau(&self) -> f64 {
        self.tau.unwrap_or(3.0 * self.sigma)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if self.iterations == 0 {
            return bad("iterations must be at least 1");
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return bad("sigma must be positive");
        }
        if !(self.tau() > 0.0 && self.tau().is_finite()) {
            return bad("tau must be positive");
        }
        if !(self.min_effective_weight > 0.0) {
            return bad("min_effective_weight must be positive");
        }
        if let Some(e) = self.early_exit {
            if !(e > 0.0) {
                return bad("early_exit must be positive");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord<T: Scalar> {
    pub transform: RigidTransform<T>,
    /// Weighted objective of `transform` under the weights that produced it.
    pub objective: T,
    pub effective_weight_sum: T,
    /// Pairs whose residual under `transform` is below `τ`.
    pub inlier_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Degeneracy {
    Weights,
    Geometry,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefineTrace<T: Scalar> {
    pub records: Vec<IterationRecord<T>>,
    /// Set when an iteration could not be solved; the returned pose is the last valid one.
    pub degenerate: Option<Degeneracy>,
    /// Weights fed to the last solve that was attempted.
    pub final_weights: Vec<T>,
}

fn check_pairs<T: Scalar>(corrs: &CorrespondenceSet<T>, src: &PointCloud<T>, tar: &PointCloud<T>) -> Result<()> {
    corrs.validate(src.len(), tar.len())
}

/// Gap weights `exp(−‖p_src − p_tar‖²/σ²)`.
pub fn initial_weights<T: Scalar>(
    corrs: &CorrespondenceSet<T>,
    src: &PointCloud<T>,
    tar: &PointCloud<T>,
    sigma: T,
) -> Result<Vec<T>> {
    check_pairs(corrs, src, tar)?;
    let inv = T::one() / (sigma * sigma);
    Ok(corrs
        .endpoints(src, tar)
        .map(|(p, q)| (-(p - q).norm_squared() * inv).exp())
        .collect())
}

/// `‖q − (R·p + t)‖` per pair.
pub fn residuals<T: Scalar>(
    corrs: &CorrespondenceSet<T>,
    src: &PointCloud<T>,
    tar: &PointCloud<T>,
    transform: &RigidTransform<T>,
) -> Result<Vec<T>> {
    check_pairs(corrs, src, tar)?;
    Ok(corrs
        .endpoints(src, tar)
        .map(|(p, q)| (q - transform.apply_point(p)).norm())
        .collect())
}

/// Gated residual weights `exp(−r²/σ²)·𝟙[r < τ]`.
pub fn reweight<T: Scalar>(
    corrs: &CorrespondenceSet<T>,
    src: &PointCloud<T>,
    tar: &PointCloud<T>,
    transform: &RigidTransform<T>,
    sigma: T,
    tau: T,
) -> Result<Vec<T>> {
    let inv = T::one() / (sigma * sigma);
    Ok(residuals(corrs, src, tar, transform)?
        .into_iter()
        .map(|r| if r < tau { (-r * r * inv).exp() } else { T::zero() })
        .collect())
}

/// `E = Σ w‖R·p + t − q‖²`.
pub fn objective<T: Scalar>(
    corrs: &CorrespondenceSet<T>,
    src: &PointCloud<T>,
    tar: &PointCloud<T>,
    weights: &[T],
    transform: &RigidTransform<T>,
) -> Result<T> {
    check_pairs(corrs, src, tar)?;
    check_weight_len(weights.len(), corrs.len())?;
    Ok(corrs
        .endpoints(src, tar)
        .zip(weights)
        .fold(T::zero(), |acc, ((p, q), &w)| acc + w * (transform.apply_point(p) - q).norm_squared()))
}

fn check_weight_len(got: usize, expected: usize) -> Result<()> {
    if got != expected {
        return Err(Error::DimensionMismatch {
            what: "weights vs pairs",
            expected,
            got,
        });
    }
    Ok(())
}

/// Weighted Procrustes on paired point lists.
///
/// Fails with [`Error::DegenerateWeights`] when `Σw ≤ min_effective_weight` or
/// fewer than three weights are nonzero, and with [`Error::DegenerateGeometry`]
/// when the weighted cross-covariance has two vanishing singular values.
pub fn solve_points<T: Scalar>(
    src: &[Vector3<T>],
    tar: &[Vector3<T>],
    weights: &[T],
    min_effective_weight: T,
) -> Result<RigidTransform<T>> {
    check_weight_len(src.len(), tar.len())?;
    check_weight_len(weights.len(), src.len())?;
    if let Some(&w) = weights.iter().find(|w| !(**w >= T::zero() && w.is_finite())) {
        return Err(Error::InvalidWeight(w.to_f64_lossy()));
    }
    let sum = weights.iter().fold(T::zero(), |a, &w| a + w);
    let nonzero = weights.iter().filter(|&&w| w > T::zero()).count();
    if sum <= min_effective_weight || nonzero < 3 {
        return Err(Error::DegenerateWeights {
            sum: sum.to_f64_lossy(),
            threshold: min_effective_weight.to_f64_lossy(),
        });
    }

    let mut cs = Vector3::zeros();
    let mut ct = Vector3::zeros();
    for ((p, q), &w) in src.iter().zip(tar).zip(weights) {
        cs += p * w;
        ct += q * w;
    }
    cs /= sum;
    ct /= sum;

    let mut c = Matrix3::zeros();
    for ((p, q), &w) in src.iter().zip(tar).zip(weights) {
        c += (p - cs) * (q - ct).transpose() * w;
    }

    let svd = c.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let s = svd.singular_values;
    let s_max = s.max();
    let tiny = s.iter().filter(|&&x| x <= T::rank_tol() * s_max).count();
    if !(s_max > T::zero()) || tiny >= 2 {
        return Err(Error::DegenerateGeometry);
    }
    let v = v_t.transpose();
    let det = (v * u.transpose()).determinant();
    let mut d = Matrix3::identity();
    d[(s.imin(), s.imin())] = if det < T::zero() { -T::one() } else { T::one() };
    let r = v * d * u.transpose();
    let t = ct - r * cs;
    Ok(RigidTransform::from_parts_unchecked(r, t))
}

/// Weighted Procrustes over `corrs` with the default degeneracy threshold.
pub fn weighted_svd_solve<T: Scalar>(
    corrs: &CorrespondenceSet<T>,
    src: &PointCloud<T>,
    tar: &PointCloud<T>,
    weights: &[T],
) -> Result<RigidTransform<T>> {
    weighted_svd_solve_with(corrs, src, tar, weights, T::lit(DEFAULT_MIN_EFFECTIVE_WEIGHT))
}

pub fn weighted_svd_solve_with<T: Scalar>(
    corrs: &CorrespondenceSet<T>,
    src: &PointCloud<T>,
    tar: &PointCloud<T>,
    weights: &[T],
    min_effective_weight: T,
) -> Result<RigidTransform<T>> {
    check_pairs(corrs, src, tar)?;
    check_weight_len(weights.len(), corrs.len())?;
    let (ps, qs): (Vec<_>, Vec<_>) = corrs.endpoints(src, tar).map(|(p, q)| (*p, *q)).unzip();
    solve_points(&ps, &qs, weights, min_effective_weight)
}

fn pose_delta<T: Scalar>(a: &RigidTransform<T>, b: &RigidTransform<T>) -> T {
    (a.rotation() - b.rotation()).norm() + (a.translation() - b.translation()).norm()
}

/// [`refine_from`] starting at the identity.
pub fn refine<T: Scalar>(
    corrs: &CorrespondenceSet<T>,
    src: &PointCloud<T>,
    tar: &PointCloud<T>,
    config: &RefineConfig,
) -> Result<(RigidTransform<T>, RefineTrace<T>)> {
    refine_from(corrs, src, tar, config, &RigidTransform::identity())
}

/// Runs up to `config.iterations` weight/solve rounds.
///
/// `initial` is returned when the very first solve is degenerate, and seeds the
/// first weights when `initial_gap` is [`InitialGap::Transformed`].
pub fn refine_from<T: Scalar>(
    corrs: &CorrespondenceSet<T>,
    src: &PointCloud<T>,
    tar: &PointCloud<T>,
    config: &RefineConfig,
    initial: &RigidTransform<T>,
) -> Result<(RigidTransform<T>, RefineTrace<T>)> {
    config.validate()?;
    if corrs.len() < 3 {
        return Err(Error::InsufficientCorrespondences(corrs.len()));
    }
    check_pairs(corrs, src, tar)?;
    let sigma = T::lit(config.sigma);
    let tau = T::lit(config.tau());
    let min_eff = T::lit(config.min_effective_weight);

    let mut current = *initial;
    let mut trace = RefineTrace {
        records: Vec::with_capacity(config.iterations),
        degenerate: None,
        final_weights: Vec::new(),
    };
    for it in 0..config.iterations {
        let weights = if it == 0 {
            match config.initial_gap {
                InitialGap::Raw => initial_weights(corrs, src, tar, sigma)?,
                InitialGap::Transformed => {
                    let inv = T::one() / (sigma * sigma);
                    residuals(corrs, src, tar, initial)?
                        .into_iter()
                        .map(|r| (-r * r * inv).exp())
                        .collect()
                }
            }
        } else {
            reweight(corrs, src, tar, &current, sigma, tau)?
        };
        let solved = weighted_svd_solve_with(corrs, src, tar, &weights, min_eff);
        trace.final_weights = weights;
        let next = match solved {
            Ok(t) => t,
            Err(Error::DegenerateWeights { .. }) => {
                trace.degenerate = Some(Degeneracy::Weights);
                break;
            }
            Err(Error::DegenerateGeometry) => {
                trace.degenerate = Some(Degeneracy::Geometry);
                break;
            }
            Err(e) => return Err(e),
        };
        let weights = &trace.final_weights;
        let res = residuals(corrs, src, tar, &next)?;
        let record = IterationRecord {
            objective: objective(corrs, src, tar, weights, &next)?,
            effective_weight_sum: weights.iter().fold(T::zero(), |a, &w| a + w),
            inlier_count: res.iter().filter(|&&r| r < tau).count(),
            transform: next,
        };
        trace.records.push(record);
        let delta = pose_delta(&current, &next);
        current = next;
        if it > 0 {
            if let Some(eps) = config.early_exit {
                if delta < T::lit(eps) {
                    break;
                }
            }
        }
    }
    Ok((current, trace))
}

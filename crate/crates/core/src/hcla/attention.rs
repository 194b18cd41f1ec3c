use nalgebra::{DMatrix, Vector3};

use super::params::{AttentionParams, HeadProjections};
use super::skip::SkipBundle;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// `S_ij = (Q_i · K_j) / √d_a`.
pub fn scaled_dot_scores<T: Scalar>(q: &DMatrix<T>, k: &DMatrix<T>, d_a: usize) -> Result<DMatrix<T>> {
    for (what, m) in [("query columns", q), ("key columns", k)] {
        if m.ncols() != d_a {
            return Err(Error::DimensionMismatch {
                what,
                expected: d_a,
                got: m.ncols(),
            });
        }
    }
    let scale = T::one() / T::lit(d_a as f64).sqrt();
    Ok(q * k.transpose() * scale)
}

/// `R_ij = −‖a_i − b_j‖² / σ²`.
pub fn geometric_compensation<T: Scalar>(a: &[Vector3<T>], b: &[Vector3<T>], sigma: T) -> DMatrix<T> {
    let inv = T::one() / (sigma * sigma);
    DMatrix::from_fn(a.len(), b.len(), |i, j| -(a[i] - b[j]).norm_squared() * inv)
}

/// Row-wise softmax with per-row max subtraction.
pub fn softmax_rows<T: Scalar>(scores: &mut DMatrix<T>) {
    let cols = scores.ncols();
    for i in 0..scores.nrows() {
        let mut max = scores[(i, 0)];
        for j in 1..cols {
            max = max.max(scores[(i, j)]);
        }
        let mut sum = T::zero();
        for j in 0..cols {
            let e = (scores[(i, j)] - max).exp();
            scores[(i, j)] = e;
            sum += e;
        }
        for j in 0..cols {
            scores[(i, j)] /= sum;
        }
    }
}

/// Multi-head attention of `queries` over `context` with an additive score bias.
/// Returns the merged output and each head's attention matrix.
fn multi_head<T: Scalar>(
    queries: &DMatrix<T>,
    context: &DMatrix<T>,
    bias: &DMatrix<T>,
    heads: &HeadProjections<T>,
    head_dim: usize,
) -> Result<(DMatrix<T>, Vec<DMatrix<T>>)> {
    let n = queries.nrows();
    let mut concat = DMatrix::zeros(n, heads.head_count() * head_dim);
    let mut attention = Vec::with_capacity(heads.head_count());
    for h in 0..heads.head_count() {
        let q = queries * &heads.query[h];
        let k = context * &heads.key[h];
        let v = context * &heads.value[h];
        let mut a = scaled_dot_scores(&q, &k, head_dim)? + bias;
        softmax_rows(&mut a);
        concat
            .columns_mut(h * head_dim, head_dim)
            .copy_from(&(&a * v));
        attention.push(a);
    }
    Ok((concat * &heads.merge, attention))
}

fn check_rows<T: Scalar>(what: &'static str, m: &DMatrix<T>, expected: usize) -> Result<()> {
    if m.nrows() != expected {
        return Err(Error::DimensionMismatch {
            what,
            expected,
            got: m.nrows(),
        });
    }
    Ok(())
}

fn check_cols<T: Scalar>(what: &'static str, m: &DMatrix<T>, expected: usize) -> Result<()> {
    if m.ncols() != expected {
        return Err(Error::DimensionMismatch {
            what,
            expected,
            got: m.ncols(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct SgiraOutput<T: Scalar> {
    /// Attention-aggregated primary values, merged across heads (`F⁺`).
    pub attended: DMatrix<T>,
    /// `F⁺ + γ·Proj(F_skip)`.
    pub fused: DMatrix<T>,
    /// One `minor × primary` attention matrix per head.
    pub attention: Vec<DMatrix<T>>,
}

/// Cross-resolution attention: minor points attend over primary points.
///
/// Scores are `S + R` with `R_ij = −‖M_i − P_j‖²/σ_c²`, normalized over the
/// primary index. The skip residual is the projected skip features.
pub fn sgira_forward<T: Scalar>(
    f_minor: &DMatrix<T>,
    minor_coords: &[Vector3<T>],
    f_primary: &DMatrix<T>,
    primary_coords: &[Vector3<T>],
    skip: &SkipBundle<T>,
    params: &AttentionParams<T>,
) -> Result<SgiraOutput<T>> {
    let c = &params.config;
    if primary_coords.is_empty() || f_primary.nrows() == 0 {
        return Err(Error::EmptyAttentionContext);
    }
    check_rows("minor feature rows vs coords", f_minor, minor_coords.len())?;
    check_rows("primary feature rows vs coords", f_primary, primary_coords.len())?;
    check_rows("skip feature rows vs minor points", skip.features(), minor_coords.len())?;
    check_cols("minor feature width", f_minor, c.model_dim)?;
    check_cols("primary feature width", f_primary, c.primary_dim)?;
    check_cols("skip feature width", skip.features(), c.skip_dim)?;

    let context = f_primary * &params.primary_proj;
    let bias = geometric_compensation(minor_coords, primary_coords, T::lit(c.sigma_comp));
    let (attended, attention) = multi_head(f_minor, &context, &bias, &params.cross, c.head_dim)?;
    let residual = skip.features() * &params.skip_proj;
    let fused = &attended + residual * T::lit(c.gamma);
    Ok(SgiraOutput {
        attended,
        fused,
        attention,
    })
}

#[derive(Debug, Clone)]
pub struct SaigaOutput<T: Scalar> {
    /// `F⁺_i + Σ_j A_ij V_j`, merged across heads.
    pub features: DMatrix<T>,
    /// One `minor × minor` attention matrix per head.
    pub attention: Vec<DMatrix<T>>,
}

/// Self-attention over the minor points with distance penalty `−α‖M_i − M_j‖²`
/// and skip bias `θ·A_skip`, added residually onto the input.
pub fn saiga_forward<T: Scalar>(
    f_plus: &DMatrix<T>,
    minor_coords: &[Vector3<T>],
    skip: &SkipBundle<T>,
    params: &AttentionParams<T>,
) -> Result<SaigaOutput<T>> {
    let c = &params.config;
    let n = minor_coords.len();
    check_rows("feature rows vs coords", f_plus, n)?;
    check_cols("feature width", f_plus, c.model_dim)?;
    if skip.bias().shape() != (n, n) {
        return Err(Error::DimensionMismatch {
            what: "skip bias side vs minor points",
            expected: n,
            got: skip.bias().nrows(),
        });
    }
    if n == 0 {
        return Err(Error::EmptyAttentionContext);
    }

    let alpha = T::lit(c.alpha);
    let theta = T::lit(c.theta);
    let bias = DMatrix::from_fn(n, n, |i, j| {
        -alpha * (minor_coords[i] - minor_coords[j]).norm_squared() + theta * skip.bias()[(i, j)]
    });
    let (update, attention) = multi_head(f_plus, f_plus, &bias, &params.intrinsic, c.head_dim)?;
    Ok(SaigaOutput {
        features: f_plus + update,
        attention,
    })
}

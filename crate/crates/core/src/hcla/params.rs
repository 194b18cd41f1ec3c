use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeededStream;
use crate::scalar::Scalar;

/// Hyperparameters of both attention stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttentionConfig {
    pub head_count: usize,
    pub head_dim: usize,
    /// Width of the minor-level features the attention operates on.
    pub model_dim: usize,
    pub primary_dim: usize,
    pub skip_dim: usize,
    /// Distance gain of the self-attention penalty `−α‖Mᵢ − Mⱼ‖²`.
    pub alpha: f64,
    /// Gain on the skip attention bias.
    pub theta: f64,
    /// Scale of the skip residual added after cross attention.
    pub gamma: f64,
    /// Length scale of the cross-attention compensation `−‖Pᵢ − Mⱼ‖²/σ²`.
    pub sigma_comp: f64,
}

impl Default for AttentionConfig {
    fn default() -> Self {
        Self::for_voxel(0.025)
    }
}

impl AttentionConfig {
    /// Defaults tied to the base voxel: `σ_c = 4·dl₀` (primary pitch), `α = 1/(2·dl₀)²`.
    pub fn for_voxel(base_voxel: f64) -> Self {
        Self {
            head_count: 4,
            head_dim: 64,
            model_dim: 128,
            primary_dim: 256,
            skip_dim: 128,
            alpha: 1.0 / (2.0 * base_voxel).powi(2),
            theta: 1.0,
            gamma: 1.0,
            sigma_comp: 4.0 * base_voxel,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if self.head_count == 0 || self.head_dim == 0 {
            return bad("head_count and head_dim must be at least 1");
        }
        if self.model_dim == 0 || self.primary_dim == 0 || self.skip_dim == 0 {
            return bad("feature dimensions must be positive");
        }
        if !(self.sigma_comp > 0.0) {
            return bad("sigma_comp must be positive");
        }
        if !(self.alpha >= 0.0) {
            return bad("alpha must be non-negative");
        }
        if !self.theta.is_finite() || !self.gamma.is_finite() {
            return bad("theta and gamma must be finite");
        }
        Ok(())
    }
}

/// Per-head query/key/value maps plus the head-merge map.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadProjections<T: Scalar> {
    pub query: Vec<DMatrix<T>>,
    pub key: Vec<DMatrix<T>>,
    pub value: Vec<DMatrix<T>>,
    /// `(heads·d_a) × d_out`.
    pub merge: DMatrix<T>,
}

pub(crate) fn uniform_matrix<T: Scalar>(rows: usize, cols: usize, rng: &mut SeededStream) -> DMatrix<T> {
    let s = 1.0 / (rows.max(1) as f64).sqrt();
    DMatrix::from_fn(rows, cols, |_, _| T::lit(rng.uniform_range(-s, s)))
}

impl<T: Scalar> HeadProjections<T> {
    pub fn seeded(
        heads: usize,
        query_dim: usize,
        context_dim: usize,
        head_dim: usize,
        out_dim: usize,
        seed: u64,
    ) -> Self {
        let mut rng = SeededStream::new(seed);
        let mut per_head = |d_in: usize| -> Vec<DMatrix<T>> {
            (0..heads).map(|_| uniform_matrix(d_in, head_dim, &mut rng)).collect()
        };
        let query = per_head(query_dim);
        let key = per_head(context_dim);
        let value = per_head(context_dim);
        let merge = uniform_matrix(heads * head_dim, out_dim, &mut rng);
        Self {
            query,
            key,
            value,
            merge,
        }
    }

    pub fn head_count(&self) -> usize {
        self.query.len()
    }
}

/// Seeded, immutable parameters for the cross and self attention stages.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams<T: Scalar> {
    pub config: AttentionConfig,
    /// Projects primary features to `model_dim` before keys and values are formed.
    pub primary_proj: DMatrix<T>,
    /// Skip residual map `skip_dim → model_dim`.
    pub skip_proj: DMatrix<T>,
    pub cross: HeadProjections<T>,
    pub intrinsic: HeadProjections<T>,
}

impl<T: Scalar> AttentionParams<T> {
    pub fn seeded(config: &AttentionConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let c = config;
        let mut rng = SeededStream::new(seed);
        let primary_proj = uniform_matrix(c.primary_dim, c.model_dim, &mut rng);
        let skip_proj = uniform_matrix(c.skip_dim, c.model_dim, &mut rng);
        let cross = HeadProjections::seeded(
            c.head_count,
            c.model_dim,
            c.model_dim,
            c.head_dim,
            c.model_dim,
            rng.next_u64(),
        );
        let intrinsic = HeadProjections::seeded(
            c.head_count,
            c.model_dim,
            c.model_dim,
            c.head_dim,
            c.model_dim,
            rng.next_u64(),
        );
        Ok(Self {
            config: config.clone(),
            primary_proj,
            skip_proj,
            cross,
            intrinsic,
        })
    }
}

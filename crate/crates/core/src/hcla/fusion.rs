use nalgebra::{DMatrix, RowDVector};

use crate::error::{Error, Result};
use crate::rng::SeededStream;
use crate::scalar::Scalar;

/// Row-vector affine map `x ↦ x·W + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T: Scalar> {
    pub weight: DMatrix<T>,
    pub bias: Option<RowDVector<T>>,
}

impl<T: Scalar> Linear<T> {
    /// Uniform weights (and bias, when requested) in `±1/√d_in`.
    pub fn seeded(d_in: usize, d_out: usize, with_bias: bool, seed: u64) -> Self {
        let mut rng = SeededStream::new(seed);
        let s = 1.0 / (d_in.max(1) as f64).sqrt();
        let weight = DMatrix::from_fn(d_in, d_out, |_, _| T::lit(rng.uniform_range(-s, s)));
        let bias = with_bias.then(|| RowDVector::from_fn(d_out, |_, _| T::lit(rng.uniform_range(-s, s))));
        Self { weight, bias }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn forward(&self, x: &DMatrix<T>) -> Result<DMatrix<T>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                what: "linear map input dim",
                expected: self.input_dim(),
                got: x.ncols(),
            });
        }
        let mut y = x * &self.weight;
        if let Some(b) = &self.bias {
            for mut row in y.row_iter_mut() {
                row += b;
            }
        }
        Ok(y)
    }
}

/// Parameters of the two-branch gated fusion.
#[derive(Debug, Clone, PartialEq)]
pub struct GatedFusionParams<T: Scalar> {
    pub branch_p: Linear<T>,
    pub branch_q: Linear<T>,
    pub residual: Linear<T>,
}

impl<T: Scalar> GatedFusionParams<T> {
    pub fn seeded(dim: usize, seed: u64) -> Self {
        let mut rng = SeededStream::new(seed);
        Self {
            branch_p: Linear::seeded(dim, dim, true, rng.next_u64()),
            branch_q: Linear::seeded(dim, dim, true, rng.next_u64()),
            residual: Linear::seeded(dim, dim, true, rng.next_u64()),
        }
    }

    /// Both branches share one set of weights.
    pub fn shared(dim: usize, seed: u64) -> Self {
        let mut p = Self::seeded(dim, seed);
        p.branch_q = p.branch_p.clone();
        p
    }

    pub fn dim(&self) -> usize {
        self.branch_p.input_dim()
    }
}

const NORM_EPS: f64 = 1e-5;

/// Per-column standardization: `(x − mean) / √(var + 1e-5)` with population variance.
pub(crate) fn standardize_columns<T: Scalar>(x: &DMatrix<T>) -> DMatrix<T> {
    let n = T::lit(x.nrows().max(1) as f64);
    let eps = T::lit(NORM_EPS);
    let mut out = x.clone();
    for mut col in out.column_iter_mut() {
        let mean = col.iter().fold(T::zero(), |a, &v| a + v) / n;
        let var = col.iter().fold(T::zero(), |a, &v| a + (v - mean) * (v - mean)) / n;
        let denom = (var + eps).sqrt();
        for v in col.iter_mut() {
            *v = (*v - mean) / denom;
        }
    }
    out
}

fn logistic<T: Scalar>(z: T) -> T {
    T::one() / (T::one() + (-z).exp())
}

/// Gated fusion of two same-shaped feature matrices.
///
/// Both inputs are standardized per column and sent through their own branch;
/// the gate `g = logistic(b_p + b_q)` mixes them as `F_t = g⊙b_p + (1−g)⊙b_q`,
/// and the output is `F_t + residual(F_t)`.
pub fn gated_fusion<T: Scalar>(
    f_p: &DMatrix<T>,
    f_q: &DMatrix<T>,
    params: &GatedFusionParams<T>,
) -> Result<DMatrix<T>> {
    if f_p.shape() != f_q.shape() {
        return Err(Error::DimensionMismatch {
            what: "gated fusion input shapes",
            expected: f_p.nrows() * f_p.ncols(),
            got: f_q.nrows() * f_q.ncols(),
        });
    }
    let bp = params.branch_p.forward(&standardize_columns(f_p))?;
    let bq = params.branch_q.forward(&standardize_columns(f_q))?;
    let fused = bp.zip_map(&bq, |p, q| {
        let g = logistic(p + q);
        g * p + (T::one() - g) * q
    });
    let correction = params.residual.forward(&fused)?;
    Ok(fused + correction)
}

use nalgebra::{DMatrix, Vector3};
use rayon::prelude::*;

use super::neighbors::radius_neighbors_slice;
use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::rng::SeededStream;
use crate::scalar::Scalar;

/// Fraction of the kernel radius at which the non-central kernel points sit.
const SHELL_FRACTION: f64 = 0.66;

/// Kernel points inside a ball of radius `radius`, with linear influence distance `influence`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelDisposition<T: Scalar> {
    points: Vec<Vector3<T>>,
    influence: T,
    radius: T,
}

impl<T: Scalar> KernelDisposition<T> {
    pub fn new(points: Vec<Vector3<T>>, influence: T, radius: T) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyInput("kernel points"));
        }
        if !(influence > T::zero()) || !(radius > T::zero()) {
            return Err(Error::InvalidParameter(
                "kernel influence and radius must be positive".into(),
            ));
        }
        let slack = radius * T::lit(1e-12);
        if points.iter().any(|p| p.norm() > radius + slack) {
            return Err(Error::InvalidParameter(format!(
                "kernel point outside the sphere of radius {radius}"
            )));
        }
        Ok(Self {
            points,
            influence,
            radius,
        })
    }

    /// One point at the origin plus `count - 1` points on a Fibonacci lattice over the
    /// sphere of radius `0.66·radius`. The seed only rotates the lattice about z.
    pub fn fibonacci(count: usize, radius: T, influence: T, seed: u64) -> Result<Self> {
        if count == 0 {
            return Err(Error::EmptyInput("kernel points"));
        }
        let shell = radius.to_f64_lossy() * SHELL_FRACTION;
        let offset = SeededStream::new(seed).uniform() * std::f64::consts::TAU;
        let golden_angle = std::f64::consts::PI * (3.0 - 5f64.sqrt());
        let m = count - 1;
        let mut points = Vec::with_capacity(count);
        points.push(Vector3::zeros());
        for i in 0..m {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / m as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = offset + golden_angle * i as f64;
            points.push(Vector3::new(
                T::lit(shell * r * phi.cos()),
                T::lit(shell * r * phi.sin()),
                T::lit(shell * z),
            ));
        }
        Self::new(points, influence, radius)
    }

    pub fn points(&self) -> &[Vector3<T>] {
        &self.points
    }

    pub fn influence(&self) -> T {
        self.influence
    }

    pub fn radius(&self) -> T {
        self.radius
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// `max(0, 1 − ‖offset − x̃_k‖ / σ)` for every kernel point `x̃_k`.
pub fn kernel_correlation<T: Scalar>(offset: &Vector3<T>, kernel: &KernelDisposition<T>) -> Vec<T> {
    kernel
        .points
        .iter()
        .map(|k| (T::one() - (offset - k).norm() / kernel.influence).max(T::zero()))
        .collect()
}

/// One `d_in × d_out` linear map per kernel point.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelWeights<T: Scalar> {
    maps: Vec<DMatrix<T>>,
}

impl<T: Scalar> KernelWeights<T> {
    pub fn new(maps: Vec<DMatrix<T>>) -> Result<Self> {
        let first = maps.first().ok_or(Error::EmptyInput("kernel weight maps"))?;
        let shape = first.shape();
        if let Some(bad) = maps.iter().find(|m| m.shape() != shape) {
            return Err(Error::DimensionMismatch {
                what: "kernel map shapes",
                expected: shape.0 * shape.1,
                got: bad.nrows() * bad.ncols(),
            });
        }
        Ok(Self { maps })
    }

    /// Uniform entries in `±1/√(K·d_in)`.
    pub fn seeded(kernel_count: usize, d_in: usize, d_out: usize, seed: u64) -> Self {
        let mut rng = SeededStream::new(seed);
        let scale = 1.0 / ((kernel_count * d_in) as f64).sqrt();
        let maps = (0..kernel_count)
            .map(|_| DMatrix::from_fn(d_in, d_out, |_, _| T::lit(rng.uniform_range(-scale, scale))))
            .collect();
        Self { maps }
    }

    pub fn maps(&self) -> &[DMatrix<T>] {
        &self.maps
    }

    pub fn input_dim(&self) -> usize {
        self.maps[0].nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.maps[0].ncols()
    }
}

/// Kernel-point convolution of `support_features` onto the query positions.
///
/// `f(q) = Σ_{p ∈ N(q)} Σ_k h_k(p − q) · f(p)·W_k`, where `N(q)` is the radius
/// neighborhood and `h_k` the kernel correlation. Queries without neighbors
/// get a zero row.
pub fn kpconv_aggregate<T: Scalar>(
    queries: &PointCloud<T>,
    support: &PointCloud<T>,
    support_features: &DMatrix<T>,
    kernel: &KernelDisposition<T>,
    weights: &KernelWeights<T>,
    radius: T,
) -> Result<DMatrix<T>> {
    if support_features.nrows() != support.len() {
        return Err(Error::DimensionMismatch {
            what: "support feature rows",
            expected: support.len(),
            got: support_features.nrows(),
        });
    }
    if weights.maps.len() != kernel.len() {
        return Err(Error::DimensionMismatch {
            what: "kernel maps vs kernel points",
            expected: kernel.len(),
            got: weights.maps.len(),
        });
    }
    if weights.input_dim() != support_features.ncols() {
        return Err(Error::DimensionMismatch {
            what: "kernel map input dim",
            expected: support_features.ncols(),
            got: weights.input_dim(),
        });
    }
    if !(radius > T::zero()) {
        return Err(Error::InvalidParameter("neighborhood radius must be positive".into()));
    }

    let d_in = support_features.ncols();
    let d_out = weights.output_dim();
    let neighborhoods = radius_neighbors_slice(queries.points(), support.points(), radius);

    let rows: Vec<Vec<T>> = queries
        .points()
        .par_iter()
        .zip(neighborhoods.par_iter())
        .map(|(q, nbrs)| {
            // Correlation-weighted input features, one row per kernel point.
            let mut gathered = DMatrix::<T>::zeros(kernel.len(), d_in);
            let mut touched = vec![false; kernel.len()];
            for &j in nbrs {
                let offset = support.point(j) - q;
                for (k, h) in kernel_correlation(&offset, kernel).into_iter().enumerate() {
                    if h > T::zero() {
                        let mut row = gathered.row_mut(k);
                        row += support_features.row(j) * h;
                        touched[k] = true;
                    }
                }
            }
            let mut out = nalgebra::RowDVector::<T>::zeros(d_out);
            for (k, map) in weights.maps.iter().enumerate() {
                if touched[k] {
                    out += gathered.row(k) * map;
                }
            }
            out.iter().copied().collect()
        })
        .collect();

    Ok(DMatrix::from_row_iterator(
        queries.len(),
        d_out,
        rows.into_iter().flatten(),
    ))
}

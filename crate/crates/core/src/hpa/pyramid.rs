use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::kpconv::{kpconv_aggregate, KernelDisposition, KernelWeights};
use super::subsample::grid_subsample;
use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::rng::SeededStream;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LevelName {
    Ordinary,
    Minor,
    Primary,
}

impl LevelName {
    pub const ALL: [LevelName; 3] = [LevelName::Ordinary, LevelName::Minor, LevelName::Primary];

    pub fn as_str(self) -> &'static str {
        match self {
            LevelName::Ordinary => "ordinary",
            LevelName::Minor => "minor",
            LevelName::Primary => "primary",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PyramidConfig {
    /// Base voxel size `dl₀`.
    pub base_voxel: f64,
    pub level_dims: [usize; 3],
    pub level_voxel_multipliers: [f64; 3],
    /// Neighborhood (kernel) radius per level, in units of `dl₀`.
    pub level_radius_multipliers: [f64; 3],
    pub kernel_count: usize,
    /// Influence distance as a multiple of the level's point pitch (`radius / 2.5`).
    pub influence_factor: f64,
}

impl Default for PyramidConfig {
    fn default() -> Self {
        Self {
            base_voxel: 0.025,
            level_dims: [64, 128, 256],
            level_voxel_multipliers: [1.0, 2.0, 4.0],
            level_radius_multipliers: [2.5, 5.0, 10.0],
            kernel_count: 15,
            influence_factor: 1.2,
        }
    }
}

impl PyramidConfig {
    pub fn with_base_voxel(base_voxel: f64) -> Self {
        Self {
            base_voxel,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParameter(msg.to_string()));
        if !(self.base_voxel > 0.0) || !self.base_voxel.is_finite() {
            return bad("base_voxel must be positive");
        }
        if self.level_dims[0] == 0 || !self.level_dims.windows(2).all(|w| w[0] < w[1]) {
            return bad("level_dims must be positive and strictly increasing");
        }
        let increasing = |m: &[f64; 3]| m[0] > 0.0 && m.windows(2).all(|w| w[0] < w[1]);
        if !increasing(&self.level_voxel_multipliers) {
            return bad("level_voxel_multipliers must be positive and strictly increasing");
        }
        if !increasing(&self.level_radius_multipliers) {
            return bad("level_radius_multipliers must be positive and strictly increasing");
        }
        if self.kernel_count == 0 {
            return bad("kernel_count must be at least 1");
        }
        if !(self.influence_factor > 0.0) {
            return bad("influence_factor must be positive");
        }
        Ok(())
    }

    pub fn voxel(&self, level: usize) -> f64 {
        self.base_voxel * self.level_voxel_multipliers[level]
    }

    pub fn radius(&self, level: usize) -> f64 {
        self.base_voxel * self.level_radius_multipliers[level]
    }

    pub fn influence(&self, level: usize) -> f64 {
        self.radius(level) / 2.5 * self.influence_factor
    }

    /// Input channel count of each level's convolution (1 for the constant input).
    pub fn input_dims(&self) -> [usize; 3] {
        [1, self.level_dims[0], self.level_dims[1]]
    }
}

/// Fixed kernels and seeded linear maps for all three levels.
#[derive(Debug, Clone)]
pub struct PyramidParams<T: Scalar> {
    pub kernels: [KernelDisposition<T>; 3],
    pub weights: [KernelWeights<T>; 3],
}

impl<T: Scalar> PyramidParams<T> {
    pub fn seeded(config: &PyramidConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut salts = SeededStream::new(seed);
        let dims_in = config.input_dims();
        let mut kernels = Vec::with_capacity(3);
        let mut weights = Vec::with_capacity(3);
        for level in 0..3 {
            kernels.push(KernelDisposition::fibonacci(
                config.kernel_count,
                T::lit(config.radius(level)),
                T::lit(config.influence(level)),
                salts.next_u64(),
            )?);
            weights.push(KernelWeights::seeded(
                config.kernel_count,
                dims_in[level],
                config.level_dims[level],
                salts.next_u64(),
            ));
        }
        Ok(Self {
            kernels: kernels.try_into().expect("three levels"),
            weights: weights.try_into().expect("three levels"),
        })
    }
}

#[derive(Debug, Clone)]
pub struct PyramidLevel<T: Scalar> {
    pub name: LevelName,
    pub cloud: PointCloud<T>,
    pub features: DMatrix<T>,
    /// Index of the containing point one level coarser; `None` at the primary level.
    pub parent_indices: Option<Vec<usize>>,
}

#[derive(Debug, Clone)]
pub struct FeaturePyramid<T: Scalar> {
    pub levels: [PyramidLevel<T>; 3],
}

impl<T: Scalar> FeaturePyramid<T> {
    pub fn level(&self, name: LevelName) -> &PyramidLevel<T> {
        &self.levels[name as usize]
    }

    pub fn ordinary(&self) -> &PyramidLevel<T> {
        &self.levels[0]
    }

    pub fn minor(&self) -> &PyramidLevel<T> {
        &self.levels[1]
    }

    pub fn primary(&self) -> &PyramidLevel<T> {
        &self.levels[2]
    }

    /// Mean of the ordinary-level features over the members of each minor point.
    pub fn ordinary_pooled_to_minor(&self) -> DMatrix<T> {
        let ord = self.ordinary();
        let parents = ord.parent_indices.as_ref().expect("ordinary level has parents");
        let n_minor = self.minor().cloud.len();
        let mut pooled = DMatrix::zeros(n_minor, ord.features.ncols());
        let mut counts = vec![0usize; n_minor];
        for (row, &parent) in parents.iter().enumerate() {
            let mut dst = pooled.row_mut(parent);
            dst += ord.features.row(row);
            counts[parent] += 1;
        }
        for (i, &c) in counts.iter().enumerate() {
            if c > 0 {
                pooled.row_mut(i).unscale_mut(T::lit(c as f64));
            }
        }
        pooled
    }
}

/// Subsamples the cloud at the three voxel sizes and convolves features upward.
pub fn build_pyramid<T: Scalar>(
    cloud: &PointCloud<T>,
    config: &PyramidConfig,
    params: &PyramidParams<T>,
) -> Result<FeaturePyramid<T>> {
    config.validate()?;
    if cloud.is_empty() {
        return Err(Error::DegeneratePyramid(LevelName::Ordinary.as_str()));
    }
    let positions = PointCloud::new(cloud.points().to_vec())?;
    let (ordinary, _) = grid_subsample(&positions, T::lit(config.voxel(0)))?;
    let (minor, ord_to_minor) = grid_subsample(&ordinary, T::lit(config.voxel(1)))?;
    let (primary, minor_to_primary) = grid_subsample(&minor, T::lit(config.voxel(2)))?;
    for (name, level) in LevelName::ALL.iter().zip([&ordinary, &minor, &primary]) {
        if level.is_empty() {
            return Err(Error::DegeneratePyramid(name.as_str()));
        }
    }

    let ones = DMatrix::from_element(ordinary.len(), 1, T::one());
    let conv = |level: usize, q: &PointCloud<T>, s: &PointCloud<T>, f: &DMatrix<T>| {
        kpconv_aggregate(
            q,
            s,
            f,
            &params.kernels[level],
            &params.weights[level],
            T::lit(config.radius(level)),
        )
    };
    let f_ord = conv(0, &ordinary, &ordinary, &ones)?;
    let f_minor = conv(1, &minor, &ordinary, &f_ord)?;
    let f_primary = conv(2, &primary, &minor, &f_minor)?;

    Ok(FeaturePyramid {
        levels: [
            PyramidLevel {
                name: LevelName::Ordinary,
                cloud: ordinary,
                features: f_ord,
                parent_indices: Some(ord_to_minor),
            },
            PyramidLevel {
                name: LevelName::Minor,
                cloud: minor,
                features: f_minor,
                parent_indices: Some(minor_to_primary),
            },
            PyramidLevel {
                name: LevelName::Primary,
                cloud: primary,
                features: f_primary,
                parent_indices: None,
            },
        ],
    })
}

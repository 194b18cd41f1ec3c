//! Multi-resolution feature pyramid built from grid subsampling and kernel-point convolutions.
//!
//! Three levels are produced from one input cloud:
//!
//! | level    | voxel    | neighborhood radius | channels |
//! |----------|----------|---------------------|----------|
//! | ordinary | `dl₀`    | `2.5·dl₀`           | 64       |
//! | minor    | `2·dl₀`  | `5.0·dl₀`           | 128      |
//! | primary  | `4·dl₀`  | `10.0·dl₀`          | 256      |
//!
//! Each level convolves the previous level's features (the ordinary level starts
//! from a constant one-channel input) onto its own subsampled points.

mod kpconv;
mod neighbors;
mod pyramid;
mod subsample;

pub use kpconv::{kernel_correlation, kpconv_aggregate, KernelDisposition, KernelWeights};
pub use neighbors::{radius_neighbors, NeighborIndex};
pub use pyramid::{
    build_pyramid, FeaturePyramid, LevelName, PyramidConfig, PyramidLevel, PyramidParams,
};
pub use subsample::grid_subsample;

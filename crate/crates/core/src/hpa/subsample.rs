use std::collections::HashMap;

use nalgebra::{DMatrix, Vector3};

use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::scalar::Scalar;

pub(crate) fn voxel_key<T: Scalar>(p: &Vector3<T>, voxel: T) -> [i64; 3] {
    let cell = |c: T| (c / voxel).floor().to_f64_lossy() as i64;
    [cell(p.x), cell(p.y), cell(p.z)]
}

/// Collapses every occupied voxel to the centroid of its members.
///
/// Output points are ordered by the first input point that falls into each voxel.
/// Features, when present, are averaged the same way. The returned assignment maps
/// every input index to its output index.
pub fn grid_subsample<T: Scalar>(
    cloud: &PointCloud<T>,
    voxel: T,
) -> Result<(PointCloud<T>, Vec<usize>)> {
    if !(voxel > T::zero()) {
        return Err(Error::InvalidParameter(format!("voxel size {voxel} must be positive")));
    }
    if cloud.is_empty() {
        return Err(Error::EmptyInput("grid_subsample cloud"));
    }

    let mut slots: HashMap<[i64; 3], usize> = HashMap::new();
    let mut sums: Vec<Vector3<T>> = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    let mut assignment = Vec::with_capacity(cloud.len());
    for p in cloud.points() {
        let next = sums.len();
        let slot = *slots.entry(voxel_key(p, voxel)).or_insert(next);
        if slot == next {
            sums.push(Vector3::zeros());
            counts.push(0);
        }
        sums[slot] += p;
        counts[slot] += 1;
        assignment.push(slot);
    }

    let points = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| s / T::lit(c as f64))
        .collect();

    let out = match cloud.features() {
        None => PointCloud::new(points)?,
        Some(f) => {
            let mut pooled = DMatrix::zeros(sums.len(), f.ncols());
            for (row, &slot) in assignment.iter().enumerate() {
                let mut dst = pooled.row_mut(slot);
                dst += f.row(row);
            }
            for (slot, &c) in counts.iter().enumerate() {
                pooled.row_mut(slot).unscale_mut(T::lit(c as f64));
            }
            PointCloud::with_features(points, pooled)?
        }
    };
    Ok((out, assignment))
}

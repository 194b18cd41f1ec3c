use std::collections::HashMap;

use nalgebra::Vector3;
use rayon::prelude::*;

use super::subsample::voxel_key;
use crate::geometry::PointCloud;
use crate::scalar::Scalar;

/// Uniform hash grid over a support set, with cell size equal to the query radius.
///
/// Read-only after construction, so it can be shared across query threads.
#[derive(Debug, Clone)]
pub struct NeighborIndex<'a, T: Scalar> {
    support: &'a [Vector3<T>],
    radius: T,
    cells: HashMap<[i64; 3], Vec<usize>>,
}

impl<'a, T: Scalar> NeighborIndex<'a, T> {
    pub fn build(support: &'a [Vector3<T>], radius: T) -> Self {
        assert!(radius > T::zero(), "neighbor radius must be positive");
        let mut cells: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
        for (i, p) in support.iter().enumerate() {
            cells.entry(voxel_key(p, radius)).or_default().push(i);
        }
        Self {
            support,
            radius,
            cells,
        }
    }

    /// Support indices within `radius` of `q`, nearest first, ties by index.
    pub fn query(&self, q: &Vector3<T>) -> Vec<usize> {
        let r2 = self.radius * self.radius;
        let c = voxel_key(q, self.radius);
        let mut hits: Vec<(T, usize)> = Vec::new();
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    let Some(bucket) = self.cells.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) else {
                        continue;
                    };
                    for &j in bucket {
                        let d2 = (self.support[j] - q).norm_squared();
                        if d2 <= r2 {
                            hits.push((d2, j));
                        }
                    }
                }
            }
        }
        hits.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        hits.into_iter().map(|(_, j)| j).collect()
    }
}

/// For each query point, every support index within `radius` (inclusive), nearest first.
pub fn radius_neighbors<T: Scalar>(
    queries: &PointCloud<T>,
    support: &PointCloud<T>,
    radius: T,
) -> Vec<Vec<usize>> {
    radius_neighbors_slice(queries.points(), support.points(), radius)
}

pub(crate) fn radius_neighbors_slice<T: Scalar>(
    queries: &[Vector3<T>],
    support: &[Vector3<T>],
    radius: T,
) -> Vec<Vec<usize>> {
    let index = NeighborIndex::build(support, radius);
    queries.par_iter().map(|q| index.query(q)).collect()
}

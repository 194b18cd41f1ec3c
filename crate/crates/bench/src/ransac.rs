//! Three-point RANSAC over correspondences, used as the comparison baseline.

use igasa_core::igar::solve_points;
use igasa_core::{Cloud, Correspondences, Error as CoreError, SeededStream, Transform};
use nalgebra::Vector3;

use crate::error::{BenchError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RansacOutcome {
    pub transform: Transform,
    /// Size of the consensus set used for the final refit.
    pub inliers: usize,
    pub iterations: usize,
}

fn consensus(t: &Transform, src: &[Vector3<f64>], tar: &[Vector3<f64>], radius: f64) -> Vec<usize> {
    (0..src.len())
        .filter(|&i| (t.apply_point(&src[i]) - tar[i]).norm() < radius)
        .collect()
}

/// Draws `iterations` minimal samples, keeps the hypothesis with the largest
/// consensus (`residual < inlier_radius`, earliest wins ties) and refits it on
/// that consensus with uniform weights.
pub fn ransac_baseline(
    corrs: &Correspondences,
    src: &Cloud,
    tar: &Cloud,
    iterations: usize,
    inlier_radius: f64,
    seed: u64,
) -> Result<RansacOutcome> {
    if corrs.len() < 3 {
        return Err(CoreError::InsufficientCorrespondences(corrs.len()).into());
    }
    corrs.validate(src.len(), tar.len())?;
    let (ps, qs): (Vec<_>, Vec<_>) = corrs.endpoints(src, tar).map(|(p, q)| (*p, *q)).unzip();
    let n = ps.len();
    let mut rng = SeededStream::new(seed);
    let mut best: Option<Vec<usize>> = None;
    for _ in 0..iterations {
        let a = rng.index(n);
        let mut b = rng.index(n - 1);
        if b >= a {
            b += 1;
        }
        let (lo, hi) = (a.min(b), a.max(b));
        let mut c = rng.index(n - 2);
        if c >= lo {
            c += 1;
        }
        if c >= hi {
            c += 1;
        }
        let sample = [a, b, c];
        let sp: Vec<_> = sample.iter().map(|&i| ps[i]).collect();
        let sq: Vec<_> = sample.iter().map(|&i| qs[i]).collect();
        let Ok(model) = solve_points(&sp, &sq, &[1.0; 3], 1e-8) else {
            continue;
        };
        let inl = consensus(&model, &ps, &qs, inlier_radius);
        if best.as_ref().is_none_or(|b| inl.len() > b.len()) {
            best = Some(inl);
        }
    }
    let set = best.filter(|b| b.len() >= 3).ok_or(BenchError::NoConsensus)?;
    let sp: Vec<_> = set.iter().map(|&i| ps[i]).collect();
    let sq: Vec<_> = set.iter().map(|&i| qs[i]).collect();
    let transform = solve_points(&sp, &sq, &vec![1.0; set.len()], 1e-8).map_err(|e| match e {
        CoreError::DegenerateGeometry | CoreError::DegenerateWeights { .. } => BenchError::NoConsensus,
        other => other.into(),
    })?;
    Ok(RansacOutcome {
        transform,
        inliers: set.len(),
        iterations,
    })
}

//! End-to-end registration of one cloud pair.
//!
//! Feature mode: both clouds go through the same seeded pyramid, skip fusion,
//! cross attention and self attention; minor-level points are matched by
//! nearest neighbour in feature space, scored for geometric consistency, cut
//! to the top k, and handed to the iterative refinement. Oracle mode replaces
//! the learned stages with ground-truth pairs on the full-resolution clouds.

use igasa_core::eval::{inlier_ratio, pose_error, registration_recall, PoseError};
use igasa_core::hcla::{saiga_forward, sgira_forward, AttentionParams, SkipBundle, SkipParams};
use igasa_core::hpa::{build_pyramid, FeaturePyramid, PyramidParams};
use igasa_core::igar::{refine_from, Degeneracy, InitialGap, RefineTrace};
use igasa_core::matcher::{consistency_scores, initial_transform, mutual_nn_match, nn_match, topk_filter};
use igasa_core::{Cloud, Correspondences, SeededStream, Transform};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{CorrsMode, PipelineConfig};
use crate::error::{BenchError, Result};

/// Everything the pipeline computed for one pair.
#[derive(Debug, Clone)]
pub struct Registration {
    pub transform: Transform,
    pub trace: RefineTrace<f64>,
    /// Clouds the correspondences index into (minor level or raw input).
    pub src_points: Cloud,
    pub tar_points: Cloud,
    /// Pairs before consistency filtering.
    pub matched: Correspondences,
    pub kept: Correspondences,
}

/// Seeded, shared weights for both branches.
#[derive(Debug, Clone)]
pub struct NetworkParams {
    pub pyramid: PyramidParams<f64>,
    pub skip: SkipParams<f64>,
    pub attention: AttentionParams<f64>,
}

impl NetworkParams {
    pub fn seeded(config: &PipelineConfig) -> Result<Self> {
        let mut rng = SeededStream::derive(config.pipeline.seed, 0x6e6574);
        let pyramid = PyramidParams::seeded(&config.pyramid, rng.next_u64())?;
        let dims = config.pyramid.level_dims;
        let skip = SkipParams::seeded(dims[0], dims[1], rng.next_u64());
        let attention = AttentionParams::seeded(&config.attention, rng.next_u64())?;
        Ok(Self { pyramid, skip, attention })
    }
}

/// Attention-refined minor-level features of one cloud, with the pyramid.
pub fn encode(cloud: &Cloud, config: &PipelineConfig, params: &NetworkParams) -> Result<(FeaturePyramid<f64>, DMatrix<f64>)> {
    let pyramid = build_pyramid(cloud, &config.pyramid, &params.pyramid)?;
    let skip = SkipBundle::from_pyramid(&pyramid, &params.skip)?;
    let minor = pyramid.minor();
    let primary = pyramid.primary();
    let cross = sgira_forward(
        &minor.features,
        minor.cloud.points(),
        &primary.features,
        primary.cloud.points(),
        &skip,
        &params.attention,
    )?;
    let out = saiga_forward(&cross.fused, minor.cloud.points(), &skip, &params.attention)?;
    Ok((pyramid, out.features))
}

/// For every target point, the nearest source point under `gt` (lowest index on ties).
pub fn oracle_pairs(src: &Cloud, tar: &Cloud, gt: &Transform) -> Result<Correspondences> {
    let moved = gt.apply(src);
    let pairs: Vec<(usize, usize)> = tar
        .points()
        .par_iter()
        .enumerate()
        .map(|(t, q)| {
            let mut best = (f64::INFINITY, 0);
            for (s, p) in moved.points().iter().enumerate() {
                let d = (p - q).norm_squared();
                if d < best.0 {
                    best = (d, s);
                }
            }
            (best.1, t)
        })
        .collect();
    Ok(Correspondences::new(pairs)?)
}

fn filter_and_refine(
    corrs: &Correspondences,
    src: &Cloud,
    tar: &Cloud,
    config: &PipelineConfig,
) -> Result<(Transform, RefineTrace<f64>, Correspondences)> {
    let t_init = initial_transform(config.matcher.tinit, corrs, src, tar)?;
    let scores = consistency_scores(corrs, src, tar, &t_init, config.matcher.sigma_score)?;
    let kept = topk_filter(corrs, &scores, config.matcher.k_for(corrs.len()))?;
    let start = match config.refine.initial_gap {
        InitialGap::Raw => Transform::identity(),
        InitialGap::Transformed => t_init,
    };
    let (transform, trace) = refine_from(&kept, src, tar, &config.refine, &start)?;
    Ok((transform, trace, kept))
}

/// Runs the configured pipeline; errors propagate.
pub fn run_pipeline(src: &Cloud, tar: &Cloud, config: &PipelineConfig, gt: Option<&Transform>) -> Result<Registration> {
    config.validate()?;
    for (what, c) in [("source", src), ("target", tar)] {
        if c.len() < 10 {
            return Err(BenchError::Config(format!("{what} cloud has {} points; at least 10 are required", c.len())));
        }
    }
    let (src_points, tar_points, corrs) = match config.pipeline.corrs {
        CorrsMode::Oracle => {
            let gt = gt.ok_or_else(|| BenchError::Config("oracle correspondences need a ground-truth pose".into()))?;
            (src.clone(), tar.clone(), oracle_pairs(src, tar, gt)?)
        }
        CorrsMode::Features => {
            let params = NetworkParams::seeded(config)?;
            let (ps, fs) = encode(src, config, &params)?;
            let (pt, ft) = encode(tar, config, &params)?;
            let corrs = if config.matcher.mutual {
                mutual_nn_match(&fs, &ft)?
            } else {
                nn_match(&fs, &ft)?
            };
            (ps.minor().cloud.clone(), pt.minor().cloud.clone(), corrs)
        }
    };
    let (transform, trace, kept) = filter_and_refine(&corrs, &src_points, &tar_points, config)?;
    Ok(Registration {
        transform,
        trace,
        src_points,
        tar_points,
        matched: corrs,
        kept,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoseJson {
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
}

impl From<&Transform> for PoseJson {
    fn from(t: &Transform) -> Self {
        let r = t.rotation();
        let v = t.translation();
        Self {
            rotation: [0, 1, 2].map(|i| [r[(i, 0)], r[(i, 1)], r[(i, 2)]]),
            translation: [v.x, v.y, v.z],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationJson {
    pub iteration: usize,
    pub objective: f64,
    pub effective_weight_sum: f64,
    pub inlier_count: usize,
    pub pose: PoseJson,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrespondenceStats {
    pub mode: CorrsMode,
    pub src_points: usize,
    pub tar_points: usize,
    pub matched: usize,
    pub kept: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsJson {
    pub rre_deg: f64,
    pub rte: f64,
    pub rmse: f64,
    pub inlier_ratio: f64,
    pub registered: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegistrationReport {
    pub status: Status,
    pub failure: Option<String>,
    pub transform: Option<PoseJson>,
    pub degenerate: Option<Degeneracy>,
    pub iterations: Vec<IterationJson>,
    pub correspondences: Option<CorrespondenceStats>,
    pub metrics: Option<MetricsJson>,
}

impl RegistrationReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    fn failed(reason: String) -> Self {
        Self {
            status: Status::Failed,
            failure: Some(reason),
            transform: None,
            degenerate: None,
            iterations: Vec::new(),
            correspondences: None,
            metrics: None,
        }
    }
}

fn metrics(reg: &Registration, src: &Cloud, gt: &Transform, config: &PipelineConfig) -> Result<MetricsJson> {
    let err: PoseError<f64> = pose_error(&reg.transform, gt, Some(src))?;
    let ir = if reg.kept.is_empty() {
        0.0
    } else {
        inlier_ratio(&reg.kept, &reg.src_points, &reg.tar_points, gt, config.thresholds.inlier_radius)?
    };
    Ok(MetricsJson {
        rre_deg: err.rre,
        rte: err.rte,
        rmse: err.rmse.unwrap_or(f64::NAN),
        inlier_ratio: ir,
        registered: registration_recall(&[err], &config.thresholds)? == 1.0,
    })
}

/// Runs the pipeline and folds any failure into the report.
pub fn register_pair(src: &Cloud, tar: &Cloud, config: &PipelineConfig, gt: Option<&Transform>) -> RegistrationReport {
    let reg = match run_pipeline(src, tar, config, gt) {
        Ok(r) => r,
        Err(e) => return RegistrationReport::failed(e.to_string()),
    };
    let metrics = match gt.map(|g| metrics(&reg, src, g, config)).transpose() {
        Ok(m) => m,
        Err(e) => return RegistrationReport::failed(e.to_string()),
    };
    RegistrationReport {
        status: Status::Ok,
        failure: None,
        transform: Some((&reg.transform).into()),
        degenerate: reg.trace.degenerate,
        iterations: reg
            .trace
            .records
            .iter()
            .enumerate()
            .map(|(i, r)| IterationJson {
                iteration: i + 1,
                objective: r.objective,
                effective_weight_sum: r.effective_weight_sum,
                inlier_count: r.inlier_count,
                pose: (&r.transform).into(),
            })
            .collect(),
        correspondences: Some(CorrespondenceStats {
            mode: config.pipeline.corrs,
            src_points: reg.src_points.len(),
            tar_points: reg.tar_points.len(),
            matched: reg.matched.len(),
            kept: reg.kept.len(),
        }),
        metrics,
    }
}

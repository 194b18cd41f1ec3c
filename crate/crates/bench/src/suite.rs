//! Seeded benchmark suites.
//!
//! A suite file is a pipeline config (see [`crate::config`]) plus a `[suite]`
//! section and one `[[scene]]` table per scene:
//!
//! ```toml
//! [suite]
//! name = "outliers"
//! seeds = 20                    # 0..20, or an explicit list such as [3, 5, 8]
//! methods = ["igar", "ransac"]
//! corrs = "oracle-mixed"        # or "features"
//! ransac_iterations = 2000
//! ransac_radius = 0.15          # defaults to the refinement cutoff
//!
//! [[scene]]
//! name = "cube-30"
//! outlier_fraction = 0.3
//! ```
//!
//! Scene keys are those of [`SceneConfig`]; the job seed replaces `seed`.
//! Every job is independent, so results do not depend on thread count.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use igasa_core::eval::{feature_matching_recall, inlier_ratio, pose_error, registration_recall, PoseError};
use igasa_core::igar::refine;
use igasa_core::{Correspondences, SeededStream};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{overlay, PipelineConfig};
use crate::error::{BenchError, Result};
use crate::fmt::{round9, sig9};
use crate::io::{ensure_dir, write_file};
use crate::pipeline::run_pipeline;
use crate::ransac::ransac_baseline;
use crate::scene::{generate_scene, Scene, SceneConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Igar,
    Ransac,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Igar => "igar",
            Method::Ransac => "ransac",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SuiteCorrs {
    /// Scene ground-truth pairs plus the injected outlier pairs; no feature stages.
    #[default]
    OracleMixed,
    /// The full feature pipeline; RANSAC runs on the unfiltered feature matches.
    Features,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Seeds {
    Count(u64),
    List(Vec<u64>),
}

impl Seeds {
    pub fn values(&self) -> Vec<u64> {
        match self {
            Seeds::Count(n) => (0..*n).collect(),
            Seeds::List(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteSection {
    pub name: String,
    pub seeds: Seeds,
    pub methods: Vec<Method>,
    pub corrs: SuiteCorrs,
    pub ransac_iterations: usize,
    pub ransac_radius: Option<f64>,
}

impl Default for SuiteSection {
    fn default() -> Self {
        Self {
            name: "suite".into(),
            seeds: Seeds::Count(10),
            methods: vec![Method::Igar, Method::Ransac],
            corrs: SuiteCorrs::OracleMixed,
            ransac_iterations: 2000,
            ransac_radius: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedScene {
    pub name: String,
    pub config: SceneConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Suite {
    pub suite: SuiteSection,
    pub pipeline: PipelineConfig,
    pub scenes: Vec<NamedScene>,
}

fn valid_name(name: &str) -> bool {
    !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
}

impl Suite {
    pub fn from_toml(text: &str) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e| BenchError::Config(format!("{e}")))?;
        let suite_tab = match table.remove("suite") {
            Some(toml::Value::Table(t)) => t,
            Some(_) => return Err(BenchError::Config("[suite] must be a table".into())),
            None => toml::Table::new(),
        };
        let suite: SuiteSection = overlay(&SuiteSection::default(), &suite_tab)?;
        let scene_vals = match table.remove("scene") {
            Some(toml::Value::Array(a)) => a,
            Some(_) => return Err(BenchError::Config("scenes are declared as [[scene]] tables".into())),
            None => Vec::new(),
        };
        let mut scenes = Vec::with_capacity(scene_vals.len());
        for (i, v) in scene_vals.into_iter().enumerate() {
            let toml::Value::Table(mut t) = v else {
                return Err(BenchError::Config(format!("scene {i} is not a table")));
            };
            let name = match t.remove("name") {
                Some(toml::Value::String(s)) => s,
                None => format!("scene{i}"),
                Some(_) => return Err(BenchError::Config(format!("scene {i}: name must be a string"))),
            };
            let config: SceneConfig =
                overlay(&SceneConfig::default(), &t).map_err(|e| BenchError::Config(format!("scene {name}: {e}")))?;
            config.validate()?;
            scenes.push(NamedScene { name, config });
        }
        let rest = toml::to_string(&table).map_err(|e| BenchError::Config(format!("{e}")))?;
        let pipeline = PipelineConfig::from_toml(&rest)?;
        let s = Self { suite, pipeline, scenes };
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(BenchError::Config(m));
        if !valid_name(&self.suite.name) {
            return bad(format!("suite name {:?} may only use letters, digits, '-', '_' and '.'", self.suite.name));
        }
        if self.scenes.is_empty() {
            return bad("a suite needs at least one [[scene]]".into());
        }
        for s in &self.scenes {
            if !valid_name(&s.name) {
                return bad(format!("scene name {:?} may only use letters, digits, '-', '_' and '.'", s.name));
            }
        }
        if self.suite.seeds.values().is_empty() {
            return bad("a suite needs at least one seed".into());
        }
        if self.suite.methods.is_empty() {
            return bad("a suite needs at least one method".into());
        }
        if self.suite.ransac_iterations == 0 {
            return bad("ransac_iterations must be positive".into());
        }
        if let Some(r) = self.suite.ransac_radius {
            if !(r > 0.0 && r.is_finite()) {
                return bad("ransac_radius must be positive".into());
            }
        }
        Ok(())
    }

    pub fn ransac_radius(&self) -> f64 {
        self.suite.ransac_radius.unwrap_or_else(|| self.pipeline.refine.tau())
    }
}

/// Outcome of one (scene, seed, method) job.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub scene: String,
    pub seed: u64,
    pub method: Method,
    /// Rounded to nine significant digits, as written.
    pub rre: Option<f64>,
    pub rte: Option<f64>,
    pub inlier_ratio: Option<f64>,
    pub iterations: usize,
    pub pass: bool,
    pub failure: Option<String>,
    pub wall_time: f64,
}

struct Solved {
    transform: igasa_core::Transform,
    corrs: Correspondences,
    src: igasa_core::Cloud,
    tar: igasa_core::Cloud,
    iterations: usize,
}

fn solve(suite: &Suite, scene: &Scene, seed: u64, method: Method) -> Result<Solved> {
    let (corrs, src, tar) = match suite.suite.corrs {
        SuiteCorrs::OracleMixed => (scene.mixed_corrs(), scene.src.clone(), scene.tar.clone()),
        SuiteCorrs::Features => {
            let reg = run_pipeline(&scene.src, &scene.tar, &suite.pipeline, Some(&scene.gt))?;
            if method == Method::Igar {
                let iterations = reg.trace.records.len();
                return Ok(Solved {
                    transform: reg.transform,
                    corrs: reg.kept,
                    src: reg.src_points,
                    tar: reg.tar_points,
                    iterations,
                });
            }
            (reg.matched, reg.src_points, reg.tar_points)
        }
    };
    match method {
        Method::Igar => {
            let (transform, trace) = refine(&corrs, &src, &tar, &suite.pipeline.refine)?;
            let iterations = trace.records.len();
            Ok(Solved { transform, corrs, src, tar, iterations })
        }
        Method::Ransac => {
            let rseed = SeededStream::derive(seed, 0x72616e736163).next_u64();
            let out = ransac_baseline(&corrs, &src, &tar, suite.suite.ransac_iterations, suite.ransac_radius(), rseed)?;
            Ok(Solved {
                transform: out.transform,
                corrs,
                src,
                tar,
                iterations: out.iterations,
            })
        }
    }
}

fn run_job(suite: &Suite, scene: &NamedScene, seed: u64, method: Method) -> Row {
    let start = Instant::now();
    let mut row = Row {
        scene: scene.name.clone(),
        seed,
        method,
        rre: None,
        rte: None,
        inlier_ratio: None,
        iterations: 0,
        pass: false,
        failure: None,
        wall_time: 0.0,
    };
    let outcome = (|| -> Result<(PoseError<f64>, f64, usize)> {
        let cfg = SceneConfig { seed, ..scene.config.clone() };
        let generated = generate_scene(&cfg)?;
        let solved = solve(suite, &generated, seed, method)?;
        let err = pose_error(&solved.transform, &generated.gt, Some(&generated.src))?;
        let ir = inlier_ratio(
            &solved.corrs,
            &solved.src,
            &solved.tar,
            &generated.gt,
            suite.pipeline.thresholds.inlier_radius,
        )?;
        Ok((err, ir, solved.iterations))
    })();
    match outcome {
        Ok((err, ir, iterations)) => {
            row.pass = registration_recall(&[err], &suite.pipeline.thresholds).map(|r| r == 1.0).unwrap_or(false);
            row.rre = Some(round9(err.rre));
            row.rte = Some(round9(err.rte));
            row.inlier_ratio = Some(round9(ir));
            row.iterations = iterations;
        }
        Err(e) => row.failure = Some(e.to_string()),
    }
    row.wall_time = start.elapsed().as_secs_f64();
    row
}

/// Runs every job (scene-major, then seed, then method) and returns rows in that order.
pub fn run_suite(suite: &Suite) -> Vec<Row> {
    let seeds = suite.suite.seeds.values();
    let jobs: Vec<(&NamedScene, u64, Method)> = suite
        .scenes
        .iter()
        .flat_map(|sc| seeds.iter().flat_map(move |&s| suite.suite.methods.iter().map(move |&m| (sc, s, m))))
        .collect();
    jobs.par_iter().map(|&(sc, s, m)| run_job(suite, sc, s, m)).collect()
}

/// Aggregate over the rows of one (scene, method).
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub scene: String,
    pub method: Method,
    pub count: usize,
    pub failures: usize,
    pub registration_recall: f64,
    pub feature_matching_recall: f64,
    pub mean_rre: f64,
    pub median_rre: f64,
    pub mean_rte: f64,
    pub median_rte: f64,
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Per (scene, method) aggregates, in first-appearance order. Failed jobs
/// count against recall and are left out of the error statistics.
pub fn summarize(rows: &[Row], fmr_min_ir: f64) -> Vec<SummaryRow> {
    let mut keys: Vec<(String, Method)> = Vec::new();
    for r in rows {
        if !keys.iter().any(|(s, m)| *s == r.scene && *m == r.method) {
            keys.push((r.scene.clone(), r.method));
        }
    }
    keys.into_iter()
        .map(|(scene, method)| {
            let group: Vec<&Row> = rows.iter().filter(|r| r.scene == scene && r.method == method).collect();
            let rre: Vec<f64> = group.iter().filter_map(|r| r.rre).collect();
            let rte: Vec<f64> = group.iter().filter_map(|r| r.rte).collect();
            let irs: Vec<f64> = group.iter().map(|r| r.inlier_ratio.unwrap_or(0.0)).collect();
            SummaryRow {
                count: group.len(),
                failures: group.iter().filter(|r| r.failure.is_some()).count(),
                registration_recall: group.iter().filter(|r| r.pass).count() as f64 / group.len() as f64,
                feature_matching_recall: feature_matching_recall(&irs, fmr_min_ir).unwrap_or(f64::NAN),
                mean_rre: mean(&rre),
                median_rre: median(&rre),
                mean_rte: mean(&rte),
                median_rte: median(&rte),
                scene,
                method,
            }
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(sig9).unwrap_or_default()
}

pub fn rows_csv(rows: &[Row], timing: bool) -> String {
    let mut out = String::from("scene,seed,method,rre_deg,rte,inlier_ratio,iterations,pass,failure");
    if timing {
        out.push_str(",wall_time_s");
    }
    out.push('\n');
    for r in rows {
        let failure = r.failure.as_deref().unwrap_or("").replace(['"', '\n'], " ").replace(',', ";");
        let _ = write!(
            out,
            "{},{},{},{},{},{},{},{},\"{}\"",
            r.scene,
            r.seed,
            r.method.as_str(),
            opt(r.rre),
            opt(r.rte),
            opt(r.inlier_ratio),
            r.iterations,
            r.pass,
            failure
        );
        if timing {
            let _ = write!(out, ",{}", sig9(r.wall_time));
        }
        out.push('\n');
    }
    out
}

pub fn summary_csv(summary: &[SummaryRow]) -> String {
    let mut out = String::from(
        "scene,method,count,failures,registration_recall,feature_matching_recall,mean_rre_deg,median_rre_deg,mean_rte,median_rte\n",
    );
    for s in summary {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            s.scene,
            s.method.as_str(),
            s.count,
            s.failures,
            sig9(s.registration_recall),
            sig9(s.feature_matching_recall),
            sig9(s.mean_rre),
            sig9(s.median_rre),
            sig9(s.mean_rte),
            sig9(s.median_rte)
        );
    }
    out
}

pub fn summary_table(name: &str, summary: &[SummaryRow]) -> String {
    let mut out = format!("suite {name}\n");
    let _ = writeln!(
        out,
        "{:<20} {:<8} {:>5} {:>5} {:>8} {:>8} {:>12} {:>12} {:>12} {:>12}",
        "scene", "method", "n", "fail", "RR", "FMR", "mean RRE", "med RRE", "mean RTE", "med RTE"
    );
    for s in summary {
        let _ = writeln!(
            out,
            "{:<20} {:<8} {:>5} {:>5} {:>8} {:>8} {:>12} {:>12} {:>12} {:>12}",
            s.scene,
            s.method.as_str(),
            s.count,
            s.failures,
            sig9(s.registration_recall),
            sig9(s.feature_matching_recall),
            sig9(s.mean_rre),
            sig9(s.median_rre),
            sig9(s.mean_rte),
            sig9(s.median_rte)
        );
    }
    out
}

/// Runs the suite and writes `rows.csv`, `summary.csv` and `table.txt` into `out`.
/// Returns the table text.
pub fn run_to_dir(suite: &Suite, out: &Path, timing: bool) -> Result<String> {
    ensure_dir(out)?;
    let rows = run_suite(suite);
    let summary = summarize(&rows, suite.pipeline.thresholds.fmr_min_ir);
    let table = summary_table(&suite.suite.name, &summary);
    write_file(&out.join("rows.csv"), &rows_csv(&rows, timing))?;
    write_file(&out.join("summary.csv"), &summary_csv(&summary))?;
    write_file(&out.join("table.txt"), &table)?;
    Ok(table)
}

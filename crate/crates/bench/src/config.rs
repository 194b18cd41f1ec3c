//! Configuration files.
//!
//! Files are TOML: `key = value` lines grouped under `[section]` headers, with
//! `#` comments. Every key is optional; omitted keys keep their defaults. A
//! pipeline file looks like
//!
//! ```toml
//! [pipeline]
//! base_voxel = 0.025   # rescales every length default below
//! seed = 7             # seeds the untrained network weights
//! corrs = "features"   # or "oracle" (needs a ground-truth pose)
//!
//! [refine]
//! iterations = 5
//! sigma = 0.05
//! ```
//!
//! Sections: `pipeline`, `pyramid`, `attention`, `matcher`, `refine`, `thresholds`.

use std::path::Path;

use igasa_core::eval::MetricThresholds;
use igasa_core::hcla::AttentionConfig;
use igasa_core::hpa::PyramidConfig;
use igasa_core::igar::RefineConfig;
use igasa_core::matcher::MatchConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};

/// Source of the correspondences handed to the matcher stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorrsMode {
    /// Nearest neighbours in attention-refined feature space.
    #[default]
    Features,
    /// Each target point paired with its nearest source point under the ground-truth pose.
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    pub base_voxel: f64,
    pub seed: u64,
    pub corrs: CorrsMode,
}

impl Default for PipelineSection {
    fn default() -> Self {
        Self {
            base_voxel: 0.025,
            seed: 0,
            corrs: CorrsMode::Features,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub pipeline: PipelineSection,
    pub pyramid: PyramidConfig,
    pub attention: AttentionConfig,
    pub matcher: MatchConfig,
    pub refine: RefineConfig,
    pub thresholds: MetricThresholds,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self::for_voxel(0.025)
    }
}

impl PipelineConfig {
    /// Defaults with every length tied to the base voxel `dl₀`:
    /// `σ_s = σ_r = 2·dl₀`, `τ = 6·dl₀`.
    pub fn for_voxel(base_voxel: f64) -> Self {
        Self {
            pipeline: PipelineSection {
                base_voxel,
                ..PipelineSection::default()
            },
            pyramid: PyramidConfig::with_base_voxel(base_voxel),
            attention: AttentionConfig::for_voxel(base_voxel),
            matcher: MatchConfig::for_voxel(base_voxel),
            refine: RefineConfig::new(5, 2.0 * base_voxel, 6.0 * base_voxel),
            thresholds: MetricThresholds::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.pyramid.validate()?;
        self.attention.validate()?;
        self.matcher.validate()?;
        self.refine.validate()?;
        self.thresholds.validate()?;
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e| BenchError::Config(format!("{e}")))?;
        let base_voxel = table
            .get("pipeline")
            .and_then(|p| p.get("base_voxel"))
            .map(|v| v.as_float().or_else(|| v.as_integer().map(|i| i as f64)))
            .map(|v| v.ok_or_else(|| BenchError::Config("pipeline.base_voxel must be a number".into())))
            .transpose()?
            .unwrap_or(0.025);
        let cfg: Self = overlay(&Self::for_voxel(base_voxel), &table)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))
    }
}

/// Deserializes `table` on top of the serialized `base`, key by key, recursing into sub-tables.
pub fn overlay<T: Serialize + DeserializeOwned>(base: &T, table: &toml::Table) -> Result<T> {
    let mut merged = toml::Table::try_from(base).map_err(|e| BenchError::Config(format!("{e}")))?;
    merge(&mut merged, table);
    toml::Value::Table(merged)
        .try_into()
        .map_err(|e: toml::de::Error| BenchError::Config(e.message().to_string()))
}

fn merge(into: &mut toml::Table, from: &toml::Table) {
    for (k, v) in from {
        match (into.get_mut(k), v) {
            (Some(toml::Value::Table(dst)), toml::Value::Table(src)) => merge(dst, src),
            _ => {
                into.insert(k.clone(), v.clone());
            }
        }
    }
}

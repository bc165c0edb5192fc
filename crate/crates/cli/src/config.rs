//! TOML run configuration. Every field is optional; command-line flags win
//! over the file and the file wins over built-in defaults.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Seed for forests, k-means and the synthetic generator.
    pub seed: Option<u64>,
    pub data: DataConfig,
    pub pipeline: PipelineConfig,
    pub forest: ForestConfig,
    pub window: WindowConfig,
    pub evaluation: EvaluationConfig,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub cases: Option<PathBuf>,
    pub features: Vec<PathBuf>,
    pub schema: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub incidence_window: Option<u32>,
    pub smooth_window: Option<usize>,
    pub min_count: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    pub trees: Option<usize>,
    pub min_node: Option<usize>,
    pub mtry: Option<usize>,
    pub subsample: Option<f64>,
    pub honesty: Option<bool>,
    pub honesty_fraction: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowConfig {
    /// `"2..14"` or `"2,5,7"`.
    pub grid: Option<String>,
    pub k: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub methods: Option<Vec<String>>,
    pub from: Option<String>,
    pub to: Option<String>,
    pub horizon: Option<u32>,
    pub scale: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Base directory for relative output paths.
    pub dir: Option<PathBuf>,
}

impl RunConfig {
    /// Parses `path`, resolves data paths against its directory and checks
    /// that they exist.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: RunConfig = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        cfg.data.cases.iter_mut().for_each(resolve);
        cfg.data.features.iter_mut().for_each(resolve);
        cfg.data.schema.iter_mut().for_each(resolve);
        cfg.output.dir.iter_mut().for_each(resolve);
        let inputs = cfg.data.cases.iter().chain(&cfg.data.features).chain(&cfg.data.schema);
        for p in inputs {
            if !p.exists() {
                bail!("{}: referenced in {} but missing", p.display(), path.display());
            }
        }
        Ok(cfg)
    }

    /// `out` under `output.dir` when relative.
    pub fn output_path(&self, out: &Path) -> PathBuf {
        match &self.output.dir {
            Some(dir) if out.is_relative() => dir.join(out),
            _ => out.to_path_buf(),
        }
    }
}

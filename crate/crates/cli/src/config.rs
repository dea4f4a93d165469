//! Optional JSON run configuration; command-line flags take precedence.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rds_bench::eval::ReportFormat;
use rds_bench::{EvalMode, LossWeights};
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub manifest: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
    pub mode: Option<EvalMode>,
    pub jobs: Option<usize>,
    pub emit: Option<ReportFormat>,
    pub templates: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub loss_weights: Option<LossWeights>,
}

impl FileConfig {
    /// Reads a config file; relative paths in it are taken from its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: FileConfig = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut cfg.manifest,
            &mut cfg.predictions,
            &mut cfg.templates,
            &mut cfg.out,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn load_opt(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }
}

/// Everything `evaluate` needs, after merging flags over the config file.
/// Scoring is deterministic, so the seed plays no part here.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub manifest_path: PathBuf,
    pub predictions_path: PathBuf,
    pub mode: EvalMode,
    pub parallelism: usize,
    pub output: ReportFormat,
    pub template_path: Option<PathBuf>,
    pub loss_weights: LossWeights,
    pub out: Option<PathBuf>,
}

pub struct Overrides {
    pub manifest: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
    pub mode: Option<EvalMode>,
    pub jobs: Option<usize>,
    pub emit: Option<ReportFormat>,
    pub templates: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn merge(file: FileConfig, flags: Overrides) -> Result<Self> {
        let Some(manifest_path) = flags.manifest.or(file.manifest) else {
            bail!("no manifest given (--manifest or `manifest` in the config)");
        };
        let Some(predictions_path) = flags.predictions.or(file.predictions) else {
            bail!("no predictions given (--pred or `predictions` in the config)");
        };
        let parallelism = flags.jobs.or(file.jobs).unwrap_or(1);
        if parallelism == 0 {
            bail!("--jobs must be at least 1");
        }
        let loss_weights = file.loss_weights.unwrap_or_default();
        loss_weights
            .validate()
            .context("invalid loss_weights in config")?;
        Ok(RunConfig {
            manifest_path,
            predictions_path,
            mode: flags.mode.or(file.mode).unwrap_or(EvalMode::Full),
            parallelism,
            output: flags.emit.or(file.emit).unwrap_or(ReportFormat::Json),
            template_path: flags.templates.or(file.templates),
            loss_weights,
            out: flags.out.or(file.out),
        })
    }

    /// Fails early on unreadable inputs so no partial report is written.
    pub fn check_paths(&self) -> Result<()> {
        for (what, p) in [
            ("manifest", &self.manifest_path),
            ("predictions", &self.predictions_path),
        ] {
            if !p.is_file() {
                bail!("{what} file {} does not exist", p.display());
            }
        }
        if let Some(t) = &self.template_path {
            if !t.is_dir() {
                bail!("template directory {} does not exist", t.display());
            }
        }
        Ok(())
    }
}

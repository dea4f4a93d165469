//! `rds-bench`: assemble, validate, mock-predict, evaluate and report.
//!
//! Exit codes: 0 success, 1 completed with warnings, 2 invalid input.

mod assemble;
mod config;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use rds_bench::dataset::validate_manifest;
use rds_bench::eval::{
    evaluate_records, evaluate_vqa, read_predictions, render_report, EvalReport, FsMasks,
    ReportFormat,
};
use rds_bench::predictors::synth::{generate, SynthConfig};
use rds_bench::predictors::{predict_manifest, write_jsonl};
use rds_bench::{EvalMode, LoadedManifest, Modality, PredictorPolicy, Templates};

use config::{FileConfig, Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "rds-bench", version, about = "Gated VQA-segmentation benchmark harness")]
struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random choice (synonym sampling, splits, noisy predictors).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Template directory holding default.json (else $RDS_BENCH_TEMPLATES, else built-in).
    #[arg(long, global = true)]
    templates: Option<PathBuf>,
    /// Worker threads for evaluation.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render source records into VQA-Seg and Ref-Seg manifests with a volume-aware split.
    Assemble {
        #[arg(long)]
        sources: PathBuf,
        /// Output directory for the manifests and stats.txt.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.2)]
        test_fraction: f64,
    },
    /// Check files, mask dimensions and ids of a manifest.
    Validate {
        #[arg(long)]
        manifest: PathBuf,
        /// Treat any finding as fatal (exit 2).
        #[arg(long)]
        strict: bool,
    },
    /// Write predictions from a reference policy.
    MockPredict {
        #[arg(long)]
        manifest: PathBuf,
        /// oracle, always-negative, always-positive[:LABEL], constant-mask:empty|full, noisy-oracle:P
        #[arg(long, default_value = "oracle")]
        policy: String,
        /// Output JSONL; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a VQA-Seg prediction file.
    Evaluate {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        pred: Option<PathBuf>,
        /// full, detect-only, diagnose-only or diagnose-seg.
        #[arg(long)]
        mode: Option<EvalMode>,
        /// json, text or csv.
        #[arg(long)]
        emit: Option<ReportFormat>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score answers to a plain VQA manifest.
    EvaluateVqa {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long, default_value = "text")]
        emit: ReportFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-render a stored JSON report.
    Report {
        #[arg(long)]
        report: PathBuf,
        #[arg(long, default_value = "text")]
        emit: ReportFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic VQA-Seg dataset (images, masks, manifest.json).
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 40)]
        samples: usize,
        #[arg(long, default_value_t = 64)]
        width: u32,
        #[arg(long, default_value_t = 64)]
        height: u32,
        #[arg(long, default_value_t = 0.5)]
        positive_fraction: f64,
        /// Comma-separated subset of XRAY, CT, MRI.
        #[arg(long, value_delimiter = ',', default_value = "XRAY,CT", value_parser = parse_modality)]
        modalities: Vec<Modality>,
        #[arg(long, default_value_t = 4)]
        slices_per_volume: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Ok,
    Warnings,
}

fn parse_modality(s: &str) -> Result<Modality, String> {
    serde_json::from_value(serde_json::Value::String(s.to_uppercase()))
        .map_err(|_| format!("unknown modality `{s}` (XRAY, CT, MRI)"))
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn templates(cli_dir: Option<&Path>, file: &FileConfig) -> Result<Templates> {
    Ok(Templates::resolve(cli_dir.or(file.templates.as_deref()))?)
}

fn run(cli: Cli) -> Result<Status> {
    let file = FileConfig::load_opt(cli.config.as_deref())?;
    let seed = cli.seed.or(file.seed).unwrap_or(0);
    match cli.command {
        Command::Assemble {
            sources,
            out,
            test_fraction,
        } => {
            let t = templates(cli.templates.as_deref(), &file)?;
            assemble::run(&sources, &out, test_fraction, seed, &t)
        }
        Command::Validate { manifest, strict } => {
            let report = validate_manifest(&manifest, strict)?;
            emit(&report.to_text(), None)?;
            if report.is_fatal() {
                bail!("{} validation findings in strict mode", report.findings.len());
            }
            Ok(if report.is_clean() {
                Status::Ok
            } else {
                Status::Warnings
            })
        }
        Command::MockPredict {
            manifest,
            policy,
            out,
        } => {
            let t = templates(cli.templates.as_deref(), &file)?;
            let policy = PredictorPolicy::parse(&policy, seed).map_err(anyhow::Error::msg)?;
            let loaded = LoadedManifest::load(&manifest)?;
            let records = predict_manifest(&loaded, &policy, &t)?;
            match out {
                Some(p) => {
                    let f = std::fs::File::create(&p)
                        .with_context(|| format!("creating {}", p.display()))?;
                    write_jsonl(&records, std::io::BufWriter::new(f))?;
                }
                None => write_jsonl(&records, std::io::stdout().lock())?,
            }
            Ok(Status::Ok)
        }
        Command::Evaluate {
            manifest,
            pred,
            mode,
            emit: format,
            out,
        } => {
            let cfg = RunConfig::merge(
                file,
                Overrides {
                    manifest,
                    predictions: pred,
                    mode,
                    jobs: cli.jobs,
                    emit: format,
                    templates: cli.templates,
                    out,
                },
            )?;
            evaluate(&cfg)
        }
        Command::EvaluateVqa {
            manifest,
            pred,
            emit: format,
            out,
        } => {
            let loaded = LoadedManifest::load(&manifest)?;
            let pairs = loaded.manifest.vqa_pairs()?;
            let predictions = read_predictions(&pred)?;
            let report = evaluate_vqa(pairs, &predictions);
            let text = match format {
                ReportFormat::Json => serde_json::to_string_pretty(&report)? + "\n",
                ReportFormat::Text => report.to_text(),
                ReportFormat::Csv => report.to_csv(),
            };
            emit(&text, out.as_deref())?;
            let known: std::collections::HashSet<&str> =
                pairs.iter().map(|p| p.id.as_str()).collect();
            let unknown = predictions
                .records
                .keys()
                .filter(|k| !known.contains(k.as_str()))
                .count();
            for w in predictions.malformed.iter().chain(&predictions.duplicates) {
                eprintln!("warning: {w}");
            }
            let warned =
                !predictions.malformed.is_empty() || !predictions.duplicates.is_empty() || unknown > 0;
            Ok(if warned { Status::Warnings } else { Status::Ok })
        }
        Command::Report {
            report,
            emit: format,
            out,
        } => {
            let text = std::fs::read_to_string(&report)
                .with_context(|| format!("reading {}", report.display()))?;
            let parsed: EvalReport = serde_json::from_str(&text)
                .with_context(|| format!("{} is not an evaluation report", report.display()))?;
            emit(&render_report(&parsed, format), out.as_deref())?;
            Ok(Status::Ok)
        }
        Command::Synth {
            out,
            samples,
            width,
            height,
            positive_fraction,
            modalities,
            slices_per_volume,
        } => {
            let ds = generate(&SynthConfig {
                n_samples: samples,
                width,
                height,
                seed,
                positive_fraction,
                modalities,
                slices_per_volume,
            })?;
            let path = ds.write(&out)?;
            eprintln!("wrote {} samples to {}", ds.records.len(), path.display());
            Ok(Status::Ok)
        }
    }
}

fn evaluate(cfg: &RunConfig) -> Result<Status> {
    cfg.check_paths()?;
    let t = Templates::resolve(cfg.template_path.as_deref())?;
    let loaded = LoadedManifest::load(&cfg.manifest_path)?;
    loaded.manifest.check_unique_ids()?;
    let samples = loaded.manifest.vqaseg_samples(&t)?;
    let predictions = read_predictions(&cfg.predictions_path)?;
    let outcome = evaluate_records(
        &samples,
        &predictions,
        cfg.mode,
        cfg.parallelism,
        &FsMasks::new(&loaded.base_dir),
        &loaded.sha256,
        cfg.loss_weights,
    )?;
    let meta = &outcome.report.metadata;
    emit(&render_report(&outcome.report, cfg.output), cfg.out.as_deref())?;
    for w in &meta.warnings {
        eprintln!("warning: {w}");
    }
    Ok(if meta.has_prediction_warnings() {
        Status::Warnings
    } else {
        Status::Ok
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Warnings) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

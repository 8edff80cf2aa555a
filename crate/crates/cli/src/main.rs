use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use qnn_importance::orchestrator::{self, ExperimentManifest};
use qnn_importance::par;

#[derive(Parser, Debug)]
#[command(name = "qnn-importance", version, about = "Hyperparameter importance for variational quantum classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample configurations and cross-validate them on every dataset.
    SampleRuns(Common),
    /// Surrogate quality gate, fANOVA importance and verification searches.
    Analyze(Common),
    /// Verification searches on surrogates saved by `analyze`.
    Verify(Common),
    /// Write summary.md from existing outputs.
    Report(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// Dataset manifest (JSON).
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Configurations sampled per dataset.
    #[arg(long)]
    configs: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Cross-validation folds per run.
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// 200 configurations, 30 epochs, 5 folds, datasets of at most 6 qubits.
    #[arg(long)]
    desk_scale: bool,
    /// Trees per surrogate forest.
    #[arg(long)]
    trees: Option<usize>,
    /// Iterations per verification search.
    #[arg(long)]
    iterations: Option<usize>,
    /// Repeats per (hyperparameter, fixed value) search.
    #[arg(long)]
    repeats: Option<usize>,
}

impl Common {
    fn experiment(&self) -> ExperimentManifest {
        let manifest = self.manifest.clone().unwrap_or_default();
        let mut exp = ExperimentManifest::new(manifest, &self.out);
        if self.desk_scale {
            exp = exp.desk_scale();
        }
        exp.seed = self.seed;
        exp.jobs = self.jobs;
        if let Some(v) = self.configs {
            exp.configs = v;
        }
        if let Some(v) = self.epochs {
            exp.epochs = v;
        }
        if let Some(v) = self.folds {
            exp.folds = v;
        }
        if let Some(v) = self.trees {
            exp.forest.n_trees = v;
        }
        if let Some(v) = self.iterations {
            exp.search.iterations = v;
        }
        if let Some(v) = self.repeats {
            exp.search.repeats = v;
        }
        exp
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::SampleRuns(c) => {
            let exp = c.experiment();
            if c.manifest.is_none() {
                anyhow::bail!("sample-runs needs --manifest");
            }
            par::set_threads(exp.worker_count());
            let report = orchestrator::cmd_sample_runs(&exp).context("sample-runs failed")?;
            for d in &report.datasets {
                log::info!(
                    "{}: {} new runs ({} failed), {} already present",
                    d.dataset,
                    d.completed,
                    d.failed,
                    d.already_done
                );
            }
            for (name, reason) in &report.skipped {
                log::warn!("{name} skipped: {reason}");
            }
        }
        Command::Analyze(c) => {
            let exp = c.experiment();
            par::set_threads(exp.worker_count());
            let outcome = orchestrator::cmd_analyze(&exp).context("analyze failed")?;
            for q in &outcome.quality {
                log::info!(
                    "{}: {}",
                    q.dataset,
                    if q.passed { "kept" } else { q.reason.as_deref().unwrap_or("excluded") }
                );
            }
            let v = orchestrator::cmd_verify(&exp).context("verification failed")?;
            log::info!("verified {} dataset(s)", v.datasets.len());
        }
        Command::Verify(c) => {
            let exp = c.experiment();
            par::set_threads(exp.worker_count());
            let v = orchestrator::cmd_verify(&exp).context("verification failed")?;
            log::info!("verified {} dataset(s)", v.datasets.len());
        }
        Command::Report(c) => {
            orchestrator::cmd_report(&c.out).context("report failed")?;
            log::info!("wrote {}", c.out.join(orchestrator::SUMMARY_FILE).display());
        }
    }
    Ok(())
}

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{error, info};

use said_core::harness::{
    data_checksums, prepare, Experiment, ExperimentConfig, ExperimentReport, PREPARED_DIR,
};
use said_core::model::{gradcheck, GradCheckConfig};
use said_core::reweight::write_weight_audit;
use said_core::Error;

#[derive(Parser)]
#[command(name = "said", version, about = "Semantics-aware sample reweighting benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML experiment config. Defaults apply when omitted.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set train.max_epochs=5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig, Error> {
        match &self.config {
            Some(p) => ExperimentConfig::load(p, &self.overrides),
            None => ExperimentConfig::from_toml("", &self.overrides),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Split, sample negatives, build profiles and write the texts manifest.
    Prepare(ConfigArgs),
    /// Run the noise x alpha x seed grid and write report.json.
    Run(ConfigArgs),
    /// Turn a report into CSV tables.
    Report {
        report: PathBuf,
        /// Output directory (defaults to the report's directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare analytic gradients with central differences.
    Gradcheck {
        #[arg(long, default_value_t = 100)]
        points: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
    /// Dump per-positive similarity and weight for one noise level and seed.
    WeightsAudit {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Defaults to the configured headline alpha.
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
}

enum Failure {
    /// Some grid cells or checks failed.
    Cells(String),
    /// Config or data problem.
    Setup(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Setup(e)
    }
}

fn prepared_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.output.dir.join(PREPARED_DIR)
}

fn cmd_prepare(args: &ConfigArgs) -> Result<(), Failure> {
    let cfg = args.load()?;
    let prepared = prepare(&cfg)?;
    let dir = prepared_dir(&cfg);
    let summary = prepared.write(&dir)?;
    println!(
        "users {} items {} positives {} | train {} validation {} test {} | manifest rows {}",
        summary.stats.users,
        summary.stats.items,
        summary.stats.positives,
        summary.train,
        summary.validation,
        summary.test,
        summary.manifest_rows
    );
    println!("wrote {}", dir.display());
    Ok(())
}

fn load_experiment(cfg: ExperimentConfig) -> Result<Experiment, Error> {
    let prepared = prepare(&cfg)?;
    let dir = prepared_dir(&cfg);
    if dir.join(said_core::harness::PREPARE_SUMMARY).exists() {
        prepared.check_against(&dir)?;
    } else {
        info!("no prepared artifacts at {}, writing them", dir.display());
        prepared.write(&dir)?;
    }
    Experiment::new(cfg, prepared)
}

fn cmd_run(args: &ConfigArgs) -> Result<(), Failure> {
    let cfg = args.load()?;
    let out = cfg.output.dir.clone();
    let exp = load_experiment(cfg)?;
    let sums = data_checksums(&exp.cfg, &exp.prepared)?;
    let report = exp.run(sums);
    let path = out.join("report.json");
    report.save(&path)?;
    report.write_tables(&out)?;
    println!("{}", report.method_comparison_csv().trim_end());
    println!("wrote {}", path.display());
    match report.failures() {
        0 => Ok(()),
        n => Err(Failure::Cells(format!("{n} of {} cells failed", report.cells.len()))),
    }
}

fn cmd_report(report: &Path, out: Option<&Path>) -> Result<(), Failure> {
    let r = ExperimentReport::load(report)?;
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| {
        report.parent().map(Path::to_path_buf).unwrap_or_default()
    });
    for p in r.write_tables(&dir)? {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn cmd_gradcheck(points: usize, seed: u64, tolerance: f64) -> Result<(), Failure> {
    let report = gradcheck(&GradCheckConfig {
        points,
        seed,
        ..Default::default()
    })?;
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    if report.max_rel_error < tolerance {
        Ok(())
    } else {
        Err(Failure::Cells(format!(
            "max relative error {:.3e} in {} exceeds {tolerance:e}",
            report.max_rel_error, report.worst_block
        )))
    }
}

fn cmd_audit(args: &ConfigArgs, noise: f64, seed: u64, alpha: Option<f64>, out: &Path) -> Result<(), Failure> {
    let cfg = args.load()?;
    let alpha = alpha.unwrap_or(cfg.weights.alpha);
    let exp = Experiment::new(cfg.clone(), prepare(&cfg)?)?;
    let cond = exp.condition(noise, seed)?;
    let weighted = exp.weights(&cond, alpha)?;
    write_weight_audit(out, &weighted, &cond.sims)?;
    let mut by_origin: BTreeMap<&str, (usize, f64)> = BTreeMap::new();
    for w in weighted.iter().filter(|w| w.interaction.is_positive()) {
        let e = by_origin.entry(w.interaction.origin.as_str()).or_default();
        e.0 += 1;
        e.1 += w.weight;
    }
    println!("mu {:.6}", cond.mu);
    for (origin, (n, total)) in by_origin {
        println!("{origin}: {n} positives, mean weight {:.4}", total / n as f64);
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Prepare(a) => cmd_prepare(a),
        Command::Run(a) => cmd_run(a),
        Command::Report { report, out } => cmd_report(report, out.as_deref()),
        Command::Gradcheck {
            points,
            seed,
            tolerance,
        } => cmd_gradcheck(*points, *seed, *tolerance),
        Command::WeightsAudit {
            config,
            noise,
            seed,
            alpha,
            out,
        } => cmd_audit(config, *noise, *seed, *alpha, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Cells(msg)) => {
            error!("{msg}");
            ExitCode::from(1)
        }
        Err(Failure::Setup(e)) => {
            error!("{e}");
            ExitCode::from(2)
        }
    }
}

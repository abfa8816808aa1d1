use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Parser, Subcommand, ValueEnum};
use robin_bayes_cli::commands;
use robin_bayes_cli::config::RunConfig;
use robin_bayes_cli::verify::{self, Check};

#[derive(Parser)]
#[command(name = "robin-bayes", version, about = "Bayesian recovery of a Robin coefficient from surface data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to the config's `output_dir`, then `out`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    Simulate(Common),
    /// Run the sampler on a dataset.
    Sample {
        #[command(flatten)]
        common: Common,
        /// Dataset file; defaults to `dataset.json` in the output directory.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Summarize a chain, or tabulate several analyzed runs with `--compare`.
    Analyze {
        #[arg(long, required_unless_present = "compare")]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Directory holding `chain.csv` and `manifest.json`; defaults to
        /// the output directory.
        #[arg(long)]
        chain_dir: Option<PathBuf>,
        /// Run directories with a `summary.json` each.
        #[arg(long, num_args = 1..)]
        compare: Vec<PathBuf>,
    },
    /// Run the built-in verification suites.
    Verify {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Suite::All)]
        suite: Suite,
        /// Relative perturbation of the element stiffness matrices, used to
        /// check that the FEM suite detects a broken operator.
        #[arg(long, hide = true, default_value_t = 0.0)]
        stiffness_fault: f64,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Suite {
    Fem,
    Prior,
    Mcmc,
    All,
}

fn output_dir(config_path: &Path, config: &RunConfig, out: Option<PathBuf>) -> PathBuf {
    if let Some(o) = out {
        return o;
    }
    match &config.output_dir {
        Some(d) if d.is_absolute() => d.clone(),
        Some(d) => config_path.parent().unwrap_or(Path::new(".")).join(d),
        None => PathBuf::from("out"),
    }
}

fn run_verify(suite: Suite, fault: f64) -> Result<bool> {
    let mut checks: Vec<Check> = Vec::new();
    if matches!(suite, Suite::Fem | Suite::All) {
        checks.extend(verify::fem_suite(fault)?);
    }
    if matches!(suite, Suite::Prior | Suite::All) {
        checks.extend(verify::prior_suite());
    }
    if matches!(suite, Suite::Mcmc | Suite::All) {
        checks.extend(verify::mcmc_suite()?);
    }
    for c in &checks {
        println!("{c}");
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    println!("{} checks, {} failed", checks.len(), failed);
    if let Some(first) = checks.iter().find(|c| !c.passed) {
        eprintln!("first failure: {}: {}", first.name, first.detail);
    }
    Ok(failed == 0)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Simulate(c) => {
            let cfg = RunConfig::load(&c.config)?;
            commands::simulate(&cfg, &output_dir(&c.config, &cfg, c.out))?;
        }
        Command::Sample { common, dataset } => {
            let cfg = RunConfig::load(&common.config)?;
            let out = output_dir(&common.config, &cfg, common.out);
            commands::sample(&cfg, &out, dataset.as_deref())?;
        }
        Command::Analyze {
            config,
            out,
            chain_dir,
            compare,
        } => {
            if !compare.is_empty() {
                let out = out.unwrap_or_else(|| PathBuf::from("out"));
                for (family, n, l2, linf) in commands::compare(&compare, &out)? {
                    println!("{} N = {n}: median theta L2 {l2:.4}, Linf {linf:.4}", family.as_str());
                }
                return Ok(true);
            }
            let Some(path) = config else {
                bail!("--config is required");
            };
            let cfg = RunConfig::load(&path)?;
            let out = output_dir(&path, &cfg, out);
            commands::analyze(&cfg, &out, chain_dir.as_deref())?;
        }
        Command::Verify {
            config,
            out: _,
            suite,
            stiffness_fault,
        } => {
            if let Some(path) = config {
                RunConfig::load(&path)?;
            }
            return run_verify(suite, stiffness_fault);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

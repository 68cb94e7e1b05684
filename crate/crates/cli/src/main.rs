use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use essfm_cli::runner::summarize;
use essfm_cli::spec::default_spec_from_env;
use essfm_cli::{load_spec, run_experiment, ExperimentResult, ExperimentSpec, Scenario};
use essfm_core::train::coefficients_to_text;

#[derive(Parser)]
#[command(
    name = "essfm",
    version,
    about = "Single-step digital backpropagation experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment spec (key = value lines); defaults apply without one.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// CSV destination; falls back to the experiment's output_path, then stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Base seed: blocks use seed, seed+1, ...
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum CostTable {
    Fig1,
    Fig2,
    Inset,
}

#[derive(Subcommand)]
enum Command {
    /// Operation counts: block-length sweep, link-length sweep or the
    /// relative-complexity table.
    Cost {
        table: Option<CostTable>,
        #[command(flatten)]
        common: Common,
    },
    /// BER against launch power for every spec variant.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
    /// Fit ESSFM coefficients on simulated blocks.
    Train {
        #[command(flatten)]
        common: Common,
        /// Also write the first fitted coefficient set in text form.
        #[arg(long)]
        coeffs_out: Option<PathBuf>,
    },
    /// Run whatever scenario the experiment file names.
    Run {
        #[command(flatten)]
        common: Common,
    },
}

fn load(common: &Common) -> Result<ExperimentSpec> {
    let spec = match &common.spec {
        Some(path) => load_spec(path)?,
        None => default_spec_from_env()?,
    };
    Ok(match common.seed {
        Some(seed) => spec.with_base_seed(seed),
        None => spec,
    })
}

fn emit(common: &Common, spec: &ExperimentSpec, csv: &str) -> Result<()> {
    match common.out.as_ref().or(spec.output_path.as_ref()) {
        Some(path) => std::fs::write(path, csv).with_context(|| format!("writing {}", path.display())),
        None => {
            std::io::stdout().write_all(csv.as_bytes())?;
            Ok(())
        }
    }
}

fn report(result: &ExperimentResult) {
    if let ExperimentResult::Ber(rows) = result {
        for s in summarize(rows) {
            eprintln!(
                "{:>9} {:>6} dBm  median BER {:.2e}  ({} blocks, {} failed)",
                s.variant.label(),
                s.power_dbm,
                s.median_ber,
                s.blocks,
                s.failed
            );
        }
    }
}

fn main() -> Result<ExitCode> {
    let cli = Cli::parse();
    let (common, coeffs_out) = match &cli.command {
        Command::Cost { common, .. } | Command::Sweep { common } | Command::Run { common } => (common, None),
        Command::Train { common, coeffs_out } => (common, coeffs_out.as_ref()),
    };
    let mut spec = load(common)?;
    spec.scenario = match &cli.command {
        Command::Cost {
            table: Some(CostTable::Fig1),
            ..
        } => Scenario::CostFig1,
        Command::Cost {
            table: Some(CostTable::Fig2),
            ..
        } => Scenario::CostFig2,
        Command::Cost {
            table: Some(CostTable::Inset),
            ..
        } => Scenario::InsetTable,
        // A cost scenario named in the experiment file is kept.
        Command::Cost { table: None, .. } if spec.scenario.is_cost() => spec.scenario,
        Command::Cost { table: None, .. } => Scenario::InsetTable,
        Command::Sweep { .. } => Scenario::BerSweep,
        Command::Train { .. } => Scenario::TrainCoeffs,
        Command::Run { .. } => spec.scenario,
    };
    spec.validate()?;
    let result = run_experiment(&spec, common.jobs)?;
    emit(common, &spec, &result.to_csv())?;
    report(&result);

    if let (Some(path), ExperimentResult::Train(rows)) = (coeffs_out, &result) {
        let Some(first) = rows.iter().find_map(|r| r.outcome.as_ref().ok()) else {
            bail!("no coefficient set was fitted");
        };
        std::fs::write(path, coefficients_to_text(&first.coeffs))
            .with_context(|| format!("writing {}", path.display()))?;
    }

    let failures = result.failures();
    if failures.is_empty() {
        return Ok(ExitCode::SUCCESS);
    }
    eprintln!("{} row(s) failed:", failures.len());
    for f in &failures {
        eprintln!("  {f}");
    }
    Ok(ExitCode::FAILURE)
}

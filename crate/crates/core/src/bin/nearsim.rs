use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use nearsim::harness::compare::compare_reference;
use nearsim::harness::config::SimConfig;
use nearsim::harness::experiment::{capture_trace, run_experiment, ExperimentKind, ExperimentSpec};
use nearsim::harness::output::{emit_csv_with_meta, emit_plot_script};
use nearsim::harness::trace::write_trace;
use nearsim::Error;

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Command {
    Verify,
    Optimize,
    Scale,
    Sweep,
    Replay,
}

impl From<Command> for ExperimentKind {
    fn from(c: Command) -> Self {
        match c {
            Command::Verify => ExperimentKind::Verify,
            Command::Optimize => ExperimentKind::Optimize,
            Command::Scale => ExperimentKind::Scale,
            Command::Sweep => ExperimentKind::Sweep,
            Command::Replay => ExperimentKind::Replay,
        }
    }
}

/// Run a lookup-accelerator experiment and write its results as CSV.
#[derive(Debug, Parser)]
#[command(name = "nearsim", version)]
struct Cli {
    command: Command,
    #[arg(long)]
    config: PathBuf,
    /// Override a config key, e.g. `--set hmc.bank_busy_ns=30`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    csv: PathBuf,
    #[arg(long)]
    plot: Option<PathBuf>,
    #[arg(long, requires = "tolerance")]
    reference: Option<PathBuf>,
    /// Allowed relative error in percent.
    #[arg(long, requires = "reference")]
    tolerance: Option<f64>,
    /// Also write the memory trace of the first point.
    #[arg(long)]
    trace_out: Option<PathBuf>,
}

fn run(cli: &Cli) -> Result<bool, Error> {
    let (_, raw) = SimConfig::load(&cli.config, &cli.set)?;
    let spec = ExperimentSpec::new(cli.command.into(), raw, cli.seed)?;
    let rows = run_experiment(&spec)?;
    let mut meta = vec![format!("nearsim {} --seed {}", spec.kind, spec.seed)];
    meta.extend(spec.raw.echo());
    emit_csv_with_meta(&rows, &meta, &cli.csv)?;
    for r in &rows {
        println!("{:<40} {:>10.3} M lookups/s  {:>10.3} M full", r.key(), r.mlookups_per_s, r.full_mlookups_per_s);
    }
    if let Some(p) = &cli.plot {
        emit_plot_script(&rows, p)?;
    }
    if let Some(p) = &cli.trace_out {
        write_trace(&capture_trace(&spec)?, p)?;
    }
    match (&cli.reference, cli.tolerance) {
        (Some(r), Some(tol)) => {
            let report = compare_reference(&rows, r, tol)?;
            print!("{}", report.render());
            Ok(report.passed())
        }
        _ => Ok(true),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use suscept_core::checks::validate;
use suscept_core::scan::{parse_emit_list, parse_mu_list, run_scan, ConfigOverrides, Emit, ScanConfig};
use suscept_core::Error;

#[derive(Parser)]
#[command(name = "suscept", version, about = "Structural susceptibility scans of the van der Pol oscillator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a μ scan and write CSV and JSON outputs.
    Scan(ScanArgs),
    /// Check the analytic pipeline against finite differences and a brute-force cost at μ = 1.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct Overrides {
    /// Comma-separated μ values (strictly increasing).
    #[arg(long)]
    mu: Option<String>,
    /// Maximum total polynomial degree N of the perturbation.
    #[arg(long)]
    order: Option<u32>,
    #[arg(long)]
    rtol: Option<f64>,
    #[arg(long)]
    atol: Option<f64>,
}

#[derive(Args)]
struct ScanArgs {
    /// Key-value configuration file; flags override its entries.
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: number of processors).
    #[arg(long)]
    jobs: Option<usize>,
    /// Comma-separated outputs: eigenvalues, eigenvectors, predictions, cycles, summary, oracle-checks.
    #[arg(long)]
    emit: Option<String>,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
}

fn overrides(o: &Overrides) -> suscept_core::Result<ConfigOverrides> {
    Ok(ConfigOverrides {
        mu_values: o.mu.as_deref().map(parse_mu_list).transpose()?,
        order: o.order,
        rtol: o.rtol,
        atol: o.atol,
        ..ConfigOverrides::default()
    })
}

fn scan(args: &ScanArgs) -> suscept_core::Result<ExitCode> {
    let emit: Option<BTreeSet<Emit>> = args.emit.as_deref().map(parse_emit_list).transpose()?;
    let cfg = ScanConfig::from_file(&args.config)?.apply(ConfigOverrides {
        output_dir: args.out.clone(),
        jobs: args.jobs,
        emit,
        ..overrides(&args.overrides)?
    });
    let report = run_scan(&cfg)?;
    for r in &report.records {
        match r.summary() {
            Some(s) => println!("mu {:>10.4}  period {:.9}  spread {:.3e}", r.mu, s.period, s.spread),
            None => println!("mu {:>10.4}  FAILED: {}", r.mu, failure_reason(r)),
        }
    }
    let checks_ok = report.oracle_checks.as_ref().is_none_or(|c| c.iter().all(|c| c.passed));
    println!("wrote {}", cfg.output_dir.display());
    Ok(if report.all_succeeded() && checks_ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn failure_reason(r: &suscept_core::scan::MuRecord) -> String {
    match &r.outcome {
        suscept_core::scan::PointOutcome::Failed { reason } => reason.clone(),
        suscept_core::scan::PointOutcome::Ok(_) => String::new(),
    }
}

fn run_validate(args: &ValidateArgs) -> suscept_core::Result<ExitCode> {
    let cfg = match &args.config {
        Some(p) => ScanConfig::from_file(p)?,
        None => ScanConfig::default(),
    };
    let checks = validate(&cfg)?;
    for c in &checks {
        println!("{c}");
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    println!("{} of {} checks passed", checks.len() - failed, checks.len());
    Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Scan(a) => scan(a),
        Command::Validate(a) => run_validate(a),
    };
    match result {
        Ok(code) => code,
        Err(e @ Error::InvalidConfig { .. }) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

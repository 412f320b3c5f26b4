use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use codflow::harness::{self, ExperimentConfig, Kind, Report};
use codflow::Error;

#[derive(Parser)]
#[command(
    name = "codflow",
    version,
    about = "Fooling functions, quadrature gaps and mean-field training diagnostics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a fooling function and verify vanishing, integral, C^r norm and plateaus.
    Fool(RunArgs),
    /// Certify quadrature gaps over a sweep of rule sizes.
    Quad(RunArgs),
    /// Verify a super-exponential sequence in exact arithmetic.
    Seq(RunArgs),
    /// Build an adversarial partial sum and check its gap.
    Adv(RunArgs),
    /// Train a mean-field network on the adversarial target.
    Train(RunArgs),
    /// Tabulate floor exponents and refit a stored trajectory.
    Rates(RunArgs),
    /// Re-render plots of a finished run and print its report.
    Report(ReportArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML config; every field is optional.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    verbose: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// Output directory of a previous run.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    verbose: bool,
}

fn load(kind: Kind, args: &RunArgs) -> codflow::Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    cfg.kind = kind;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(o) = &args.out {
        cfg.out = o.clone();
    }
    Ok(cfg)
}

fn print(report: &Report, verbose: bool) {
    print!("{}", report.summary());
    if verbose {
        for c in &report.checks {
            eprintln!("{}: {}", c.name, c.details);
        }
        eprintln!("artifacts: {}", report.artifacts.join(", "));
        eprintln!("elapsed: {:.2}s", report.elapsed_seconds);
    }
}

fn exit_for(err: &Error) -> ExitCode {
    eprintln!("error: {err}");
    match err {
        Error::Config(_) => ExitCode::from(2),
        _ => ExitCode::from(1),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match cli.command {
        Command::Fool(a) => (Kind::Fooling, a),
        Command::Quad(a) => (Kind::Quadrature, a),
        Command::Seq(a) => (Kind::Sequence, a),
        Command::Adv(a) => (Kind::Adversary, a),
        Command::Train(a) => (Kind::Train, a),
        Command::Rates(a) => (Kind::Rates, a),
        Command::Report(a) => {
            return match harness::rerender(&a.out) {
                Ok(report) => {
                    print(&report, a.verbose);
                    if report.pass {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(1)
                    }
                }
                Err(e) => exit_for(&e),
            };
        }
    };
    let cfg = match load(kind, &args) {
        Ok(c) => c,
        Err(e) => return exit_for(&e),
    };
    if args.verbose {
        eprintln!("running {kind:?} into {}", cfg.out.display());
    }
    match harness::run(&cfg) {
        Ok(report) => {
            print(&report, args.verbose);
            if report.pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => exit_for(&e),
    }
}

//! Command-line runner: batch experiments, the operation-count probe and the
//! gradient check. Failures print one `error: <kind>: <message>` line on
//! stderr and exit with status 1.

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ucn_precode::harness::{
    complexity_probe, gradient_check, load_config, run_experiment, SolverKind, GRADCHECK_EPS,
    GRADCHECK_TOL,
};

#[derive(Parser)]
#[command(
    name = "ucn-precode",
    version,
    about = "UCN massive MIMO precoder experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run solvers over every (power, seed) pair of a scenario and write CSVs.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated subset of symplectic,wmmse,rzf,gd,nagd.
        #[arg(long, default_value = "symplectic,wmmse,rzf,gd,nagd")]
        solvers: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Count multiply-adds per gradient over the probe grid and print CSV.
    ProbeComplexity {
        #[arg(long)]
        config: PathBuf,
    },
    /// Compare the analytic gradient with central differences.
    Gradcheck {
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = GRADCHECK_EPS)]
        eps: f64,
        #[arg(long, default_value_t = GRADCHECK_TOL)]
        tol: f64,
    },
}

enum CliError {
    Core(ucn_precode::Error),
    Check(String),
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.kind(),
            CliError::Check(_) => "check_failed",
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Check(m) => f.write_str(m),
        }
    }
}

impl From<ucn_precode::Error> for CliError {
    fn from(e: ucn_precode::Error) -> Self {
        CliError::Core(e)
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run {
            config,
            solvers,
            out,
        } => {
            let cfg = load_config(&config)?;
            let kinds = SolverKind::parse_list(&solvers)?;
            let summary = run_experiment(&cfg, &kinds, &out)?;
            let failed = summary.rows.iter().filter(|r| r.error.is_some()).count();
            println!(
                "{} runs written to {} ({failed} failed)",
                summary.rows.len(),
                out.display()
            );
            for &kind in &kinds {
                for &power in &cfg.tx_power_dbm {
                    let wsr = summary.final_wsr(kind, power);
                    if let Some(m) = median(wsr) {
                        println!(
                            "{:<10} {power:>6.1} dBm  median final WSR {m:.3} bits",
                            kind.name()
                        );
                    }
                }
            }
            if failed > 0 {
                return Err(CliError::Check(format!(
                    "{failed} runs failed, see summary.csv"
                )));
            }
        }
        Command::ProbeComplexity { config } => {
            let cfg = load_config(&config)?;
            let report = complexity_probe(&cfg)?;
            print!("{}", report.to_csv());
            eprintln!(
                "measured/predicted in [{:.3}, {:.3}]; max factor {:.3}; M_t linearity error {:.3e}",
                report.min_ratio(),
                report.max_ratio(),
                report.max_factor(),
                report.antenna_linearity_error()
            );
        }
        Command::Gradcheck { trials, eps, tol } => {
            let report = gradient_check(trials, eps)?;
            for (seed, e) in report.errors.iter().enumerate() {
                println!("seed {seed:>3}  relative error {e:.3e}");
            }
            let worst = report.max_error();
            println!("max relative error {worst:.3e} (tolerance {tol:.1e})");
            if worst.is_nan() || worst >= tol {
                return Err(CliError::Check(format!(
                    "max relative error {worst:.3e} >= {tol:.1e}"
                )));
            }
        }
    }
    Ok(())
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {e}", e.kind());
            ExitCode::FAILURE
        }
    }
}

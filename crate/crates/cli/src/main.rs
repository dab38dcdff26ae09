//! `riskshare` command-line front end.
//!
//! Every command prints a JSON report tagged `"version": 1` on stdout and a
//! short summary on stderr. Exit status 0 is an affirmative verdict, 1 a
//! negative one, 2 an input or runtime error.

mod commands;
mod input;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use riskshare::convex_order::DEFAULT_TOL;
use riskshare::improve::DEFAULT_STAT_TOL;

use input::{nonnegative, positive};

#[derive(Parser, Debug)]
#[command(name = "riskshare", version, about = "Concave-order dominance, comonotonicity and efficient risk sharing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Decide whether MU dominates NU in the concave order (NU is a
    /// mean-preserving spread of MU).
    CheckDominance {
        mu: PathBuf,
        nu: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TOL, value_parser = nonnegative("tol"), allow_hyphen_values = true)]
        tol: f64,
    },
    /// Pairwise comonotonicity of a univariate allocation.
    ComonotoneCheck {
        #[command(flatten)]
        source: Source,
        #[arg(long, default_value_t = DEFAULT_TOL, value_parser = nonnegative("tol"), allow_hyphen_values = true)]
        tol: f64,
    },
    /// Maximal correlation between two laws.
    Maxcorr { x: PathBuf, mu: PathBuf },
    /// Additivity gap of the maximal correlation across the agents.
    ComonotoneGap {
        #[command(flatten)]
        source: Source,
        /// Reference law; defaults to the uniform 5^d lattice in the ball.
        #[arg(long)]
        mu: Option<PathBuf>,
        /// Ball radius for the default reference law [default: 1.25 × largest share norm].
        #[arg(long, value_parser = positive("radius"), allow_hyphen_values = true)]
        radius: Option<f64>,
        #[arg(long, default_value_t = DEFAULT_TOL, value_parser = nonnegative("tol"), allow_hyphen_values = true)]
        tol: f64,
    },
    /// Optimal split of every aggregate atom under a cost profile.
    Share {
        #[arg(long)]
        psi: PathBuf,
        #[arg(long)]
        m0: PathBuf,
        #[arg(long, value_parser = positive("radius"), allow_hyphen_values = true)]
        radius: f64,
    },
    /// Improve an allocation to a dominating one on a split grid.
    Improve {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        grid: GridArgs,
        /// Write per-agent marginal quantile tables (input and improved) as CSV.
        #[arg(long, conflicts_with = "batch")]
        emit_csv: Option<PathBuf>,
        /// Write the improvement linear program as CSV (rows `a | b`, then costs).
        #[arg(long, conflicts_with = "batch")]
        dump_lp: Option<PathBuf>,
    },
    /// Efficiency statistic only.
    Stat {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        grid: GridArgs,
        /// Also evaluate at the step halved 1..K times.
        #[arg(long, value_name = "K", default_value_t = 0)]
        sweep: u32,
        /// Write the statistic against the grid step as CSV.
        #[arg(long, conflicts_with = "batch")]
        emit_csv: Option<PathBuf>,
        #[arg(long, conflicts_with = "batch")]
        dump_lp: Option<PathBuf>,
    },
    /// Descend the dual functional J and compare it with the statistic.
    Qdescent {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, default_value_t = 500)]
        max_iters: usize,
        /// Stop once J falls to this level.
        #[arg(long, default_value_t = 1e-9, value_parser = nonnegative("j-tol"), allow_hyphen_values = true)]
        j_tol: f64,
        /// Write the accepted values of J as CSV.
        #[arg(long, conflicts_with = "batch")]
        emit_csv: Option<PathBuf>,
    },
    /// Diagnostics of the unbounded and non-convex sharing-rule families.
    Counterexample {
        #[arg(long, default_value_t = 100)]
        n: u64,
        #[arg(long, default_value_t = 0.01, value_parser = positive("eps"), allow_hyphen_values = true)]
        eps: f64,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
}

#[derive(Args, Debug, Clone)]
struct Source {
    /// Allocation (joint law) JSON file.
    #[arg(required_unless_present = "batch")]
    alloc: Option<PathBuf>,
    /// Process every .json file of a directory; reports are listed by file name.
    #[arg(long, conflicts_with = "alloc")]
    batch: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct GridArgs {
    /// Floor strengths ε_i, comma separated [default: 1 for every agent].
    #[arg(long, value_delimiter = ',', value_parser = positive("eps"), allow_hyphen_values = true)]
    eps: Option<Vec<f64>>,
    /// Lattice step h [default: largest aggregate spread / 8, or R/4].
    #[arg(long, value_parser = positive("grid-step"), allow_hyphen_values = true)]
    grid_step: Option<f64>,
    /// Ball radius R [default: 1.25 × largest share norm, or 1].
    #[arg(long, value_parser = positive("radius"), allow_hyphen_values = true)]
    radius: Option<f64>,
    /// The allocation counts as comonotone when the statistic is at most this.
    #[arg(long, default_value_t = DEFAULT_STAT_TOL, value_parser = nonnegative("tol"), allow_hyphen_values = true)]
    tol: f64,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Csv,
    Json,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let _ = e.print();
            let message = e.render().to_string();
            let first = message.lines().next().unwrap_or("usage error").trim_start_matches("error: ");
            emit(&format!("{}\n", output::error_report(first)));
            return ExitCode::from(2);
        }
    };
    match commands::run(cli.command) {
        Ok(commands::Printed::Report(outcome)) => {
            emit(&(serde_json::to_string_pretty(&outcome.report).expect("reports serialize") + "\n"));
            eprintln!("{}", outcome.summary);
            ExitCode::from(outcome.exit_code())
        }
        Ok(commands::Printed::Text { text, summary, code }) => {
            emit(&text);
            eprintln!("{summary}");
            ExitCode::from(code)
        }
        Err(e) => {
            let message = format!("{e:#}");
            eprintln!("error: {message}");
            emit(&format!("{}\n", output::error_report(&message)));
            ExitCode::from(2)
        }
    }
}

/// Writes to stdout, ignoring a closed pipe so `riskshare ... | head` does not panic.
fn emit(text: &str) {
    use std::io::Write;
    let _ = std::io::stdout().write_all(text.as_bytes());
}

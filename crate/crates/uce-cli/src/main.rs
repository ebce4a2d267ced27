use std::path::PathBuf;
use std::process;

use clap::{Parser, Subcommand};
use uce_cli::{commands, logging};

/// Closed-form concept editing for linear projection layers.
///
/// Exit codes: 0 success, 2 invalid input, 3 singular solve,
/// 4 non-convergence (outputs still written), 5 verification mismatch,
/// 1 output write failure.
#[derive(Parser)]
#[command(name = "uce", version)]
struct Cli {
    /// Emit one JSON object per log line on stderr.
    #[arg(long, global = true)]
    json_logs: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Apply an erase or moderate spec; write edited matrices and a report.
    Edit {
        /// Edit spec JSON file.
        #[arg(long)]
        spec: PathBuf,
        /// Concept embedding catalog JSON file.
        #[arg(long)]
        catalog: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the attribute ratio-balancing loop on a debias spec.
    Debias {
        /// Edit spec JSON file (mode must be "debias").
        #[arg(long)]
        spec: PathBuf,
        /// Concept embedding catalog JSON file.
        #[arg(long)]
        catalog: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Oracle seed; overrides the spec's value.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Recompute a report from its matrices and diff it against the stored
    /// copy.
    Verify {
        /// report.json written by edit or debias.
        #[arg(long)]
        report: PathBuf,
        /// The spec the report was produced from.
        #[arg(long)]
        spec: PathBuf,
        /// The catalog the report was produced from.
        #[arg(long)]
        catalog: PathBuf,
    },
    /// Print a matrix file's dims, dtype, and entry statistics.
    Inspect {
        /// Matrix file.
        path: PathBuf,
        /// Also write the entries to a CSV file.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

fn main() {
    let cli = Cli::parse();
    logging::init(cli.json_logs);
    let result = match &cli.command {
        Command::Edit { spec, catalog, out } => commands::cmd_edit(spec, catalog, out),
        Command::Debias {
            spec,
            catalog,
            out,
            seed,
        } => commands::cmd_debias(spec, catalog, out, *seed),
        Command::Verify {
            report,
            spec,
            catalog,
        } => commands::cmd_verify(report, spec, catalog),
        Command::Inspect { path, csv } => commands::cmd_inspect(path, csv.as_deref()),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        process::exit(e.exit_code());
    }
}

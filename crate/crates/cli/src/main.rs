use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;

/// Saturated cut-set analysis for meshed power networks.
#[derive(Debug, Parser)]
#[command(name = "gridcuts", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct CaseArgs {
    /// Case file (native `.case` or MATPOWER `.m`), or a bundled case name.
    case: String,
    /// Override the format guessed from the file extension.
    #[arg(long, value_parser = ["native", "matpower"])]
    format: Option<String>,
}

#[derive(Debug, Args)]
struct OrderingArgs {
    /// Seed for source and sink selection while building the flow.
    #[arg(long, env = "GRIDCUTS_SEED", conflicts_with = "deterministic")]
    seed: Option<u64>,
    /// Always pick the lowest-numbered source and sink.
    #[arg(long)]
    deterministic: bool,
}

#[derive(Debug, Args)]
struct OutArgs {
    /// Also write the output to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a case for structural and balance problems.
    Validate {
        #[command(flatten)]
        case: CaseArgs,
    },
    /// Build a base flow and print branch flows.
    Flow {
        #[command(flatten)]
        case: CaseArgs,
        #[command(flatten)]
        ordering: OrderingArgs,
        /// Comma-separated branch ids; prints the transfer across this cut.
        #[arg(long, value_delimiter = ',')]
        cut: Vec<String>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Run the feasibility test on one branch or all loaded branches.
    Ft {
        #[command(flatten)]
        case: CaseArgs,
        #[command(flatten)]
        ordering: OrderingArgs,
        /// Test this branch only.
        #[arg(long, conflicts_with = "all")]
        branch: Option<String>,
        /// Test every loaded branch (the default).
        #[arg(long)]
        all: bool,
        /// Use these branch flows instead of building one (CSV file or
        /// bundled flows name).
        #[arg(long)]
        flows: Option<String>,
        /// Cross-check against cut enumeration and a DC contingency solve.
        #[arg(long)]
        oracle: bool,
        /// Exit with status 1 when any special asset is found.
        #[arg(long)]
        fail_on_special: bool,
        /// Output format.
        #[arg(long, default_value = "table", value_parser = ["table", "json"])]
        report: String,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Replay a scenario file and report new special assets per event.
    Scenario {
        /// Scenario TOML file, or a bundled scenario name.
        scenario: String,
        /// Re-test every branch after each outage instead of the shortlist.
        #[arg(long)]
        no_shortlist: bool,
        /// Output format.
        #[arg(long, default_value = "table", value_parser = ["json", "csv", "table"])]
        report: String,
        /// Include wall-clock timings (output is then not reproducible).
        #[arg(long)]
        timings: bool,
        /// Flow-building seed; overrides the seed in the scenario file.
        #[arg(long, env = "GRIDCUTS_SEED")]
        seed: Option<u64>,
        /// Exit with status 1 when any event adds a special asset.
        #[arg(long)]
        fail_on_special: bool,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Serve the HTTP API with one session preloaded for the case.
    Serve {
        #[command(flatten)]
        case: CaseArgs,
        /// Port to listen on.
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Address to bind.
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[command(flatten)]
        ordering: OrderingArgs,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

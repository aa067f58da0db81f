//! `fluidtcp`: analytic window tables, simulator validation, growing-tree
//! statistics and capacity-strategy comparisons.
//!
//! Exit codes: 0 success, 1 numerical failure, 2 configuration error,
//! 3 a validation or `--check` tolerance failed.

mod netsim;
mod output;
mod tcp;
mod tree;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{CommandFactory, Parser, Subcommand};
use serde_json::json;

use output::{row, Format, Meta, Sink, Table};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    /// Missing required parameter; reported with the subcommand's usage line.
    Usage { subcommand: &'static str, message: String },
    Validation(String),
    Runtime(String),
}

impl From<fluidtcp::Error> for CliError {
    fn from(e: fluidtcp::Error) -> Self {
        use fluidtcp::Error as E;
        match e {
            E::Domain(_) | E::InvalidParameter(_) | E::Config(_) | E::InsufficientSample(_) | E::Size(_) => CliError::Config(e.to_string()),
            E::Divergence(_) | E::NonConvergence { .. } | E::Stagnation(_) => CliError::Runtime(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "fluidtcp", version, about = "Fluid TCP window laws, AIMD networks and growing trees")]
struct Cli {
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    #[arg(long, global = true, value_enum, default_value = "csv")]
    format: Format,

    /// Parameter file: JSON, or an earlier output file whose header is reused.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads for independent realizations (0 = all cores). Results do not depend on it.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Stationary window pdf/ccdf table and moments.
    TcpDist(tcp::TcpDistFlags),
    /// Simulate the window process and test it against the analytic law.
    Validate(tcp::ValidateFlags),
    /// Grow random trees and compare edge statistics with the analytic laws.
    Tree(tree::TreeFlags),
    /// Compare link-capacity strategies on an AIMD network.
    Netsim(netsim::NetsimFlags),
    /// Check special functions against reference values.
    SpecfunSelftest,
}

pub struct Ctx {
    pub out: PathBuf,
    pub format: Format,
    pub config: Option<PathBuf>,
}

impl Ctx {
    pub fn sink(&self, meta: Meta) -> Result<Sink, CliError> {
        Sink::new(&self.out, self.format, meta)
    }
}

fn specfun_selftest(ctx: &Ctx) -> Result<(), CliError> {
    let cases = fluidtcp::specfun::selftest();
    let mut sink = ctx.sink(Meta::new("specfun-selftest", None, &json!({})))?;
    let mut t = Table::new("specfun_selftest", &["name", "value", "reference", "tolerance", "pass"]);
    for c in &cases {
        t.push(row![c.name, c.value, c.reference, c.tolerance, c.pass]);
    }
    sink.table(&t)?;
    let failed: Vec<&str> = cases.iter().filter(|c| !c.pass).map(|c| c.name).collect();
    println!("specfun-selftest: {} of {} cases passed", cases.len() - failed.len(), cases.len());
    report_written(&sink);
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Validation(format!("failed cases: {}", failed.join(", "))))
    }
}

pub fn report_written(sink: &Sink) {
    for p in sink.written() {
        println!("wrote {}", p.display());
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let ctx = Ctx { out: cli.out, format: cli.format, config: cli.config };
    match cli.command {
        Command::TcpDist(f) => tcp::tcp_dist(&ctx, &f),
        Command::Validate(f) => tcp::validate(&ctx, &f),
        Command::Tree(f) => tree::tree(&ctx, &f),
        Command::Netsim(f) => netsim::netsim(&ctx, &f),
        Command::SpecfunSelftest => specfun_selftest(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker threads: {e}");
            return ExitCode::from(2);
        }
    };
    match pool.install(|| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage { subcommand, message }) => {
            let mut cmd = Cli::command();
            cmd.build();
            let usage = cmd.find_subcommand_mut(subcommand).map(|c| c.render_usage().to_string()).unwrap_or_default();
            eprintln!("error: {message}\n\n{usage}\n\nFor more information, try '--help'.");
            ExitCode::from(2)
        }
        Err(CliError::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Validation(m)) => {
            eprintln!("validation failed: {m}");
            ExitCode::from(3)
        }
        Err(CliError::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}

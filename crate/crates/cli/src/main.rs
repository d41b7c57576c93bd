use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use oseen_cli::{execute, parse_config, EXIT_CONFIG};

#[derive(Parser)]
#[command(
    name = "oseen",
    about = "Scott-Vogelius Oseen solver: convergence studies and sweeps"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a benchmark over a level range, or sweep mu / delta0.
    Solve(SolveArgs),
}

#[derive(clap::Args)]
struct SolveArgs {
    /// `key = value` config file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    example: Option<String>,
    /// Comma-separated list of sv, supg, lsvs.
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    sigma: Option<String>,
    #[arg(long)]
    mu: Option<String>,
    #[arg(long)]
    delta0: Option<String>,
    /// `a..b`, or a single level.
    #[arg(long)]
    levels: Option<String>,
    #[arg(long)]
    mesh_file: Option<String>,
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    jitter: Option<String>,
    #[arg(long)]
    out: Option<String>,
    /// Vary mu or delta0 at the finest level.
    #[arg(long)]
    sweep: Option<String>,
    /// Allow level 5.
    #[arg(long)]
    big: bool,
    /// Write wall_ms as 0 for byte-reproducible output.
    #[arg(long)]
    no_timing: bool,
    /// Verify divergence, residuals and exactness; exit 4 on failure.
    #[arg(long)]
    check: bool,
}

impl SolveArgs {
    fn flags(&self) -> Vec<(String, String)> {
        let options = [
            ("example", &self.example),
            ("method", &self.method),
            ("sigma", &self.sigma),
            ("mu", &self.mu),
            ("delta0", &self.delta0),
            ("levels", &self.levels),
            ("mesh_file", &self.mesh_file),
            ("n", &self.n),
            ("jitter", &self.jitter),
            ("out", &self.out),
            ("sweep", &self.sweep),
        ];
        let mut flags: Vec<(String, String)> = options
            .into_iter()
            .filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone())))
            .collect();
        if self.big {
            flags.push(("big".into(), "true".into()));
        }
        if self.no_timing {
            flags.push(("timing".into(), "false".into()));
        }
        flags
    }
}

fn main() -> ExitCode {
    let Command::Solve(args) = Cli::parse().command;
    let text = match &args.config {
        Some(path) => match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) => {
                eprintln!("error: {}: {e}", path.display());
                return ExitCode::from(EXIT_CONFIG as u8);
            }
        },
        None => String::new(),
    };
    let config = match parse_config(&text, &args.flags()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    };
    ExitCode::from(execute(&config, args.check) as u8)
}

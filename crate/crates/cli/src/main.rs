use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use cslab::{exit, parse_config_str, run_command, CommandKind};

/// Carrying simplices of three-species competitive maps.
#[derive(Parser, Debug)]
#[command(name = "cslab", version)]
struct Cli {
    command: CommandKind,
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output.dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Grid level (overrides `grid.level`).
    #[arg(long)]
    level: Option<usize>,
    /// RNG seed (overrides `seed`).
    #[arg(long)]
    seed: Option<u64>,
}

fn code(c: i32) -> ExitCode {
    ExitCode::from(c as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let text = match std::fs::read(&cli.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("cslab: cannot read {}: {e}", cli.config.display());
            return code(exit::CONFIG);
        }
    };
    let parsed = std::str::from_utf8(&text)
        .map_err(|e| format!("config is not UTF-8: {e}"))
        .and_then(|t| parse_config_str(t).map_err(|e| e.to_string()));
    let mut cfg = match parsed {
        Ok(c) => c,
        Err(e) => {
            eprintln!("cslab: {}: {e}", cli.config.display());
            return code(exit::CONFIG);
        }
    };
    if let Some(dir) = cli.out {
        cfg.output.dir = dir;
    }
    if let Some(l) = cli.level {
        cfg.grid.level = l;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Err(e) = cfg.validate() {
        eprintln!("cslab: {e}");
        return code(exit::CONFIG);
    }
    if cli.command != CommandKind::Sweep {
        if let Ok(n) = cslab::sweep::worker_count(&Default::default()) {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    match run_command(cli.command, &cfg, &text) {
        Ok(outcome) => {
            if let Some(e) = &outcome.error {
                eprintln!("cslab {}: {e}", cli.command.name());
            }
            println!("{}", cfg.output.dir.join("manifest.json").display());
            code(outcome.exit_code)
        }
        Err(e) => {
            eprintln!("cslab: {e}");
            code(e.exit_code())
        }
    }
}

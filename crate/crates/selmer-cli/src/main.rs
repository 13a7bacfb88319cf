//! `selmer`: command-line front end of `selmer-models`.
//!
//! Exit codes: 0 success, 2 invalid input, 3 budget exceeded or a failed check.

mod commands;
mod config;

use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use serde_json::json;

use commands::{Failure, Output};
use config::{Cli, Command, RunConfig};

const ARTIFACT: &str = "selmer";

fn resolve(cli: &Cli) -> Result<RunConfig, String> {
    let Some(path) = &cli.config else {
        return Ok(cli.flags.clone());
    };
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let file = config::parse_config_text(&text)?;
    let (threads, out) = config::exec_settings(&file)?;
    let mut cfg = cli.flags.merged_with(file)?;
    cfg.threads = cfg.threads.or(threads);
    cfg.out = cfg.out.or(out);
    Ok(cfg)
}

fn run(command: Command, cfg: &RunConfig) -> Result<Output, Failure> {
    match command {
        Command::KernelDist => commands::kernel_dist(cfg),
        Command::RsExact => commands::rs_exact(cfg),
        Command::Moments => commands::moments(cfg),
        Command::OrbitCount => commands::orbit_count(cfg),
        Command::CosetPgf => commands::coset_pgf(cfg),
        Command::BklprSample => commands::bklpr_sample(cfg),
        Command::MarkovVerify => commands::markov_verify(cfg),
        Command::Compare => commands::compare(cfg),
    }
}

fn render(command: Command, cfg: &RunConfig, out: &Output, csv: bool) -> String {
    let config = serde_json::to_value(cfg).expect("config serializes");
    if csv {
        format!(
            "# artifact={ARTIFACT} version={} command={}\n# config={}\n{}",
            env!("CARGO_PKG_VERSION"),
            command.name(),
            config,
            out.csv
        )
    } else {
        let doc = json!({
            "artifact": ARTIFACT,
            "version": env!("CARGO_PKG_VERSION"),
            "command": command.name(),
            "config": config,
            "result": out.json,
        });
        let mut s = serde_json::to_string_pretty(&doc).expect("json");
        s.push('\n');
        s
    }
}

fn emit(text: &str, cfg: &RunConfig) -> Result<(), String> {
    match &cfg.out {
        Some(path) => std::fs::write(path, text).map_err(|e| format!("cannot write {}: {e}", path.display())),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(|e| e.to_string()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut cfg = match resolve(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if cfg.threads.is_none() {
        cfg.threads = std::env::var("SELMER_THREADS").ok().and_then(|v| v.parse().ok());
    }
    let csv = match cfg.format.as_deref().unwrap_or("json") {
        "json" => false,
        "csv" => true,
        other => {
            eprintln!("error: unknown format {other}");
            return ExitCode::from(2);
        }
    };
    let (output, code) = match run(cli.command, &cfg) {
        Ok(out) => (Some(out), 0),
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            (None, 2)
        }
        Err(Failure::Check(msg, out)) => {
            eprintln!("check failed: {msg}");
            (out, 3)
        }
    };
    if let Some(out) = output {
        if let Err(e) = emit(&render(cli.command, &cfg, &out, csv), &cfg) {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    ExitCode::from(code)
}

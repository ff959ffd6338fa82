mod args;
mod commands;

use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use eri_core::executor::ReductionMode;

use args::{Cli, Command};
use commands::{Report, RunConfig};

/// Bad input detected after argument parsing; exits like a clap error.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn is_usage(err: &anyhow::Error) -> bool {
    err.chain().any(|e| {
        e.is::<UsageError>() || matches!(e.downcast_ref::<eri_core::Error>(), Some(eri_core::Error::InvalidArgument(_)))
    })
}

fn emit(cli: &Cli, report: &Report) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(&report.json)?;
    match cli.output.as_deref() {
        Some(p) if p.as_os_str() == "-" => {
            eprint!("{}", report.summary);
            println!("{text}");
        }
        Some(p) => {
            print!("{}", report.summary);
            std::fs::write(p, text + "\n").map_err(|e| anyhow::anyhow!("writing {}: {e}", p.display()))?;
        }
        None => print!("{}", report.summary),
    }
    std::io::stdout().flush()?;
    Ok(())
}

fn run(cli: &Cli) -> anyhow::Result<Report> {
    let threads = match cli.threads {
        Some(n) => n as usize,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let ctx = RunConfig {
        threads,
        mode: if cli.deterministic {
            ReductionMode::Deterministic
        } else {
            ReductionMode::Concurrent
        },
        seed: cli.seed,
    };
    match &cli.command {
        Command::Compile(a) => commands::compile_cmd(a),
        Command::Scf(a) => commands::scf_cmd(a, &ctx),
        Command::Tune(a) => commands::tune_cmd(a, &ctx),
        Command::Validate(a) => commands::validate_cmd(a, &ctx),
        Command::Bench(a) => commands::bench_cmd(a, &ctx),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = run(&cli).and_then(|r| emit(&cli, &r).map(|_| r.passed));
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if is_usage(&e) { 2 } else { 1 })
        }
    }
}

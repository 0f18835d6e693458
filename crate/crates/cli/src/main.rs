//! `redsched`: block designs, load indicators and queueing simulation for
//! redundancy scheduling.

mod cli;
mod commands;
mod config;
mod manifest;

use clap::error::ErrorKind;
use clap::Parser;
use cli::{Cli, Command, ReplayArgs};
use commands::{execute, Failure, Output};
use manifest::{manifest_path, now_ms, replayable_args, RunManifest};
use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::ExitCode;

const USAGE_EXIT: u8 = 64;

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let argv = match config::expand(argv) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(USAGE_EXIT);
        }
    };
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(USAGE_EXIT),
            };
        }
    };
    let result = match &cli.command {
        Command::Replay(r) => replay(r),
        cmd => run(cmd, &argv),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.exit_code())
        }
    }
}

/// Executes `cmd`, writing to `--out` (plus manifest) or stdout.
fn run(cmd: &Command, argv: &[String]) -> Result<u8, Failure> {
    let started = now_ms();
    let out = execute(cmd)?;
    match cmd.out() {
        Some(path) => write_with_manifest(cmd, argv, &out, path, started)?,
        None => print(&out.text)?,
    }
    Ok(out.status)
}

fn print(text: &str) -> Result<(), Failure> {
    let mut stdout = std::io::stdout().lock();
    stdout
        .write_all(text.as_bytes())
        .and_then(|_| stdout.flush())
        .map_err(|e| Failure::Io(format!("stdout: {e}")))
}

fn write_with_manifest(cmd: &Command, argv: &[String], out: &Output, path: &Path, started: u64) -> Result<(), Failure> {
    let io = |p: &Path, e: std::io::Error| Failure::Io(format!("cannot write {}: {e}", p.display()));
    fs::write(path, &out.text).map_err(|e| io(path, e))?;
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: cmd.name().into(),
        args: replayable_args(argv),
        params: serde_json::to_value(cmd).expect("arguments serialize"),
        seed: out.seed,
        started_unix_ms: started,
        finished_unix_ms: now_ms(),
        output: path.to_path_buf(),
        output_bytes: out.text.len(),
    };
    let mpath = manifest_path(path);
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    fs::write(&mpath, json).map_err(|e| io(&mpath, e))
}

fn replay(args: &ReplayArgs) -> Result<u8, Failure> {
    let text = fs::read_to_string(&args.manifest)
        .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", args.manifest.display())))?;
    let manifest: RunManifest = serde_json::from_str(&text)
        .map_err(|e| Failure::Usage(format!("{}: not a manifest: {e}", args.manifest.display())))?;
    let cli = Cli::try_parse_from(&manifest.args)
        .map_err(|e| Failure::Usage(format!("manifest arguments no longer parse: {e}")))?;
    if matches!(cli.command, Command::Replay(_)) {
        return Err(Failure::Usage("manifest records a replay".into()));
    }
    if args.check {
        let out = execute(&cli.command)?;
        let recorded = fs::read(&manifest.output)
            .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", manifest.output.display())))?;
        return if recorded == out.text.as_bytes() {
            println!("replay matches {}", manifest.output.display());
            Ok(0)
        } else {
            Err(Failure::Verification(format!("replay differs from {}", manifest.output.display())))
        };
    }
    let mut argv = manifest.args.clone();
    if let Some(out) = &args.out {
        argv.push("--out".into());
        argv.push(out.display().to_string());
    }
    let cli = Cli::try_parse_from(&argv).map_err(|e| Failure::Usage(e.to_string()))?;
    run(&cli.command, &argv)
}

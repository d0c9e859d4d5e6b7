//! Command-line entry point for Bi-Link.
//!
//! Exit codes: 0 on success, 2 for configuration or argument mistakes
//! (one diagnostic line on stderr), 1 for failures at runtime (the
//! diagnostic dump path is named on stderr). Log verbosity comes from the
//! `BILINK_LOG` environment variable.

mod args;
mod el_cmd;
mod kg_cmd;
mod report;
mod synth_cmd;

use std::fs;
use std::path::Path;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use serde::Serialize;

use args::{Cli, Command};
use bilink_core::BiLinkError;
use report::ConfigError;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("BILINK_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => return on_parse_error(&e),
    };
    match dispatch(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => on_run_error(&e, &cli.command),
    }
}

fn dispatch(command: &Command) -> anyhow::Result<()> {
    match command {
        Command::Synth(a) => synth_cmd::run(a),
        Command::PosPretrain(a) => kg_cmd::run_pos_pretrain(a),
        Command::Train(a) => kg_cmd::run_train(a),
        Command::Eval(a) => kg_cmd::run_eval(a),
        Command::ElBuild(a) => el_cmd::run_el_build(a),
        Command::ElTrain(a) => el_cmd::run_el_train(a),
        Command::ElEval(a) => el_cmd::run_el_eval(a),
    }
}

/// Help and version print normally; everything else becomes one stderr
/// line built from the error's leading paragraph.
fn on_parse_error(e: &clap::Error) -> ExitCode {
    match e.kind() {
        ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
            print!("{e}");
            ExitCode::SUCCESS
        }
        _ => {
            let rendered = e.render().to_string();
            let line: Vec<&str> = rendered
                .lines()
                .take_while(|l| !l.trim().is_empty())
                .map(str::trim)
                .collect();
            eprintln!("{}", line.join(" "));
            ExitCode::from(2)
        }
    }
}

/// Configuration mistakes exit 2 with one line; runtime failures exit 1
/// after dumping diagnostics next to the command's other outputs.
fn on_run_error(e: &anyhow::Error, command: &Command) -> ExitCode {
    if is_config_class(e) {
        eprintln!("error: {e:#}");
        return ExitCode::from(2);
    }
    match write_diagnostic(e, command) {
        Ok(path) => eprintln!("error: {e:#} (diagnostics at {})", path.display()),
        Err(_) => eprintln!("error: {e:#}"),
    }
    ExitCode::from(1)
}

fn is_config_class(e: &anyhow::Error) -> bool {
    e.chain().any(|cause| {
        if cause.downcast_ref::<ConfigError>().is_some() {
            return true;
        }
        matches!(
            cause.downcast_ref::<BiLinkError>(),
            Some(BiLinkError::Config(_) | BiLinkError::Parse { .. } | BiLinkError::Json(_))
        )
    })
}

#[derive(Serialize)]
struct Diagnostic<'a> {
    subcommand: &'a str,
    error: String,
    chain: Vec<String>,
}

fn write_diagnostic(e: &anyhow::Error, command: &Command) -> std::io::Result<std::path::PathBuf> {
    let out: &Path = command.out_dir();
    fs::create_dir_all(out)?;
    let dump = Diagnostic {
        subcommand: command.name(),
        error: format!("{e:#}"),
        chain: e.chain().map(|c| c.to_string()).collect(),
    };
    let path = out.join("diagnostic.json");
    let mut bytes = serde_json::to_vec_pretty(&dump)?;
    bytes.push(b'\n');
    fs::write(&path, bytes)?;
    Ok(path)
}

mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;
use sketch3d_core::{Error, Result};

use args::{load_config, Cli, Command};

/// Exit status for a failed run: 1 usage, 2 I/O and data, 3 numerical abort.
fn exit_status(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 1,
        Error::Numerical { .. } => 3,
        _ => 2,
    }
}

fn run(cli: Cli) -> Result<()> {
    let file = cli.config.as_deref().map(load_config).transpose()?;
    let tune = |t: args::Tuning| match &file {
        Some(f) => t.overlay(f.clone()),
        None => t,
    };
    match cli.command {
        Command::Init { data, out, tuning } => commands::init(&data, &out, &tune(tuning)),
        Command::Optimize {
            data,
            init_file,
            out,
            log,
            tuning,
        } => commands::optimize_cmd(&data, &init_file, &out, log.as_deref(), &tune(tuning)),
        Command::Render {
            strokes,
            out,
            view,
            turntable,
            tuning,
        } => commands::render(&strokes, &out, &view, turntable, &tune(tuning)),
        Command::ExportSvg {
            strokes,
            out,
            view,
            tuning,
        } => commands::export(&strokes, &out, &view, &tune(tuning)),
        Command::Eval { strokes, data, tuning } => {
            print!("{}", commands::eval(&strokes, &data, &tune(tuning))?);
            Ok(())
        }
        Command::Synth { out, views, tuning } => commands::synth(&out, views, &tune(tuning)),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_status(&e))
        }
    }
}

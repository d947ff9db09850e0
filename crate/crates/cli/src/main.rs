#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod args;
mod commands;
mod output;
mod selftest;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Format};
use output::{CliResult, Failure, Report};

fn emit(cli: &Cli, report: &Report) -> CliResult<()> {
    let mut out: Box<dyn Write> = match &cli.output {
        Some(path) => Box::new(BufWriter::new(File::create(path)?)),
        None => Box::new(io::stdout().lock()),
    };
    match cli.format {
        Format::Json => report.write_json(&mut out)?,
        Format::Csv => report.write_csv(&mut out)?,
    }
    out.flush()?;
    Ok(())
}

fn fail(command: &str, failure: &Failure) -> ExitCode {
    eprintln!("{}", failure.to_json(command));
    ExitCode::from(failure.exit_code() as u8)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("", &Failure::invalid(e.render().to_string().trim_end())),
    };
    let name = cli.command.name();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
            return fail(name, &Failure::invalid(format!("cannot set thread count: {e}")));
        }
    }

    if cli.selftest {
        return match selftest::run(&cli.command).and_then(|(report, pass)| emit(&cli, &report).map(|_| pass)) {
            Ok(true) => ExitCode::SUCCESS,
            Ok(false) => fail(name, &Failure::numerical("selftest failed")),
            Err(f) => fail(name, &f),
        };
    }
    match commands::run(&cli.command).and_then(|report| emit(&cli, &report)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => fail(name, &f),
    }
}

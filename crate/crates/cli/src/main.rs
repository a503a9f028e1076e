use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use tiltsens_cli::args::Cli;
use tiltsens_cli::error::CliError;
use tiltsens_cli::{commands, emit, output_format};

fn fail(e: &CliError) -> ExitCode {
    let record = serde_json::to_string(&e.record()).unwrap_or_else(|_| e.to_string());
    eprintln!("{record}");
    ExitCode::from(e.exit_code())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let message = e.render().to_string();
            return fail(&CliError::Usage(message.trim_end().to_owned()));
        }
    };

    if let Some(n) = cli.global.threads {
        if n == 0 {
            return fail(&CliError::Usage("--threads must be at least 1".into()));
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            return fail(&CliError::Config(format!("thread pool: {e}")));
        }
    }

    let outcome = match commands::run(&cli) {
        Ok(o) => o,
        Err(e) => return fail(&e),
    };
    let output = cli.global.output.as_deref();
    if let Err(e) = emit(&outcome, output_format(cli.global.format, output), output) {
        return fail(&e);
    }
    match &outcome.failure {
        Some(e) => fail(e),
        None => ExitCode::SUCCESS,
    }
}

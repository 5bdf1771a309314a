mod args;
mod commands;
mod inputs;

use std::io::Write;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Parser;
use segguard::ErrorKind;

use args::{merge, read_config, Cli, Command};
use commands::Output;

const EXIT_IO: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<segguard::Error>() {
            return match e.kind() {
                ErrorKind::Io => EXIT_IO,
                ErrorKind::Validation => EXIT_VALIDATION,
                ErrorKind::Numerical => EXIT_NUMERICAL,
            };
        }
        if cause.is::<std::io::Error>() {
            return EXIT_IO;
        }
    }
    EXIT_VALIDATION
}

fn init_threads() -> Result<()> {
    let Ok(raw) = std::env::var("SEGGUARD_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .with_context(|| format!("SEGGUARD_THREADS must be a non-negative integer, got {raw:?}"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    log::debug!("thread pool size {}", rayon::current_num_threads());
    Ok(())
}

fn run(cli: Cli) -> Result<Output> {
    init_threads()?;
    let config = cli.config.as_deref().map(read_config).transpose()?;
    let config = config.as_ref();
    match cli.command {
        Command::SignatureBuild(a) => commands::signature_build(&merge(&a, config)?),
        Command::OodScore(a) => commands::ood_score(&merge(&a, config)?),
        Command::OodEval(a) => commands::ood_eval(&merge(&a, config)?),
        Command::Uncertainty(a) => commands::uncertainty(&merge(&a, config)?),
        Command::Calib(a) => commands::calib(&merge(&a, config)?),
        Command::Segmetrics(a) => commands::segmetrics(&merge(&a, config)?),
        Command::SamplePlan(a) => commands::sample_plan(&merge(&a, config)?),
        Command::TilePlan(a) => commands::tile_plan(&merge(&a, config)?),
        Command::Synth(a) => commands::synth(&merge(&a, config)?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = run(cli).and_then(|out| {
        let mut stdout = std::io::stdout().lock();
        match out {
            Output::Json(v) => writeln!(stdout, "{}", serde_json::to_string_pretty(&v)?)?,
            Output::Text(t) => write!(stdout, "{t}")?,
        }
        Ok(())
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

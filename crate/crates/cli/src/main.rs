use std::process::ExitCode;

use clap::Parser;

use r2p_cli::{emit_reports, run_experiment, Args, CliError, ExperimentConfig};

fn run() -> Result<(), CliError> {
    let args = Args::try_parse().map_err(|e| {
        if matches!(
            e.kind(),
            clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
        ) {
            e.exit();
        }
        CliError::Config(e.to_string())
    })?;
    let cfg = ExperimentConfig::from_args(args)?;
    let report = run_experiment(&cfg)?;
    emit_reports(&report, &cfg.out, cfg.format, cfg.dump_trees)?;
    for (method, metrics) in &report.aggregate {
        let show = |name: &str| {
            let a = &metrics[name];
            format!("{name} {:.4} ± {:.4}", a.mean, a.stderr)
        };
        println!(
            "{:<5} {}  {}  {}  {}",
            method.name(),
            show("n_subgroups"),
            show("v_in_normalized"),
            show("ci_width"),
            show("coverage")
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

//! Command-line driver: `gen-data`, `train-ref`, `train`, `lemma1` and `metrics`.
//!
//! Every subcommand accepts `--config FILE` (flat `key = value` lines, `#`
//! comments) and one `--kebab-case` flag per configuration key. Flags win
//! over the file, the file wins over built-in defaults.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data or file
//! error, 3 numerical failure.

pub mod commands;
pub mod config;
pub mod report;

use std::ffi::OsString;
use std::path::Path;
use std::time::Instant;

use clap::parser::ValueSource;
use clap::{Arg, ArgMatches, Command};
use eagc::{io, Error};

use crate::commands::{Failed, Outcome};
use crate::config::{parse_config_file, registry, RunConfig};
use crate::report::Report;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Argument(_) | Error::Symmetry { .. } | Error::Stability { .. } => EXIT_USAGE,
        Error::Data(_) | Error::Parse { .. } | Error::Io(_) => EXIT_DATA,
        Error::Numerical(_) | Error::Degenerate(_) => EXIT_NUMERICAL,
    }
}

const SUBCOMMANDS: &[(&str, &str)] = &[
    ("gen-data", "generate the synthetic Gaussian-blob benchmark"),
    ("train-ref", "train the supervised reference model on the labeled split"),
    ("train", "joint GCD training with optional gradient coordination"),
    ("lemma1", "compare deviation covariances with and without the proximal anchor"),
    ("metrics", "entanglement diagnostics from a trace or from matrix dumps"),
];

pub fn command() -> Command {
    let keys = registry();
    let mut cmd = Command::new("eagc")
        .about("Energy-aware gradient coordination for generalized category discovery")
        .subcommand_required(true)
        .arg_required_else_help(true);
    for (name, about) in SUBCOMMANDS {
        let mut sub = Command::new(*name)
            .about(*about)
            .arg(Arg::new("config").long("config").value_name("FILE").help("flat key = value configuration file"));
        for k in &keys {
            let help =
                if k.default.is_empty() { k.help.to_string() } else { format!("{} [default: {}]", k.help, k.default) };
            sub = sub.arg(Arg::new(k.name).long(k.flag()).value_name("VALUE").help(help));
        }
        cmd = cmd.subcommand(sub);
    }
    cmd
}

fn resolve(matches: &ArgMatches) -> eagc::Result<RunConfig> {
    let file = match matches.get_one::<String>("config") {
        Some(path) => parse_config_file(&io::read_to_string(Path::new(path)).map_err(|e| match e {
            Error::Io(msg) => Error::Argument(format!("cannot read config file: {msg}")),
            other => other,
        })?)?,
        None => Vec::new(),
    };
    let flags: Vec<(String, String)> = registry()
        .iter()
        .filter(|k| matches.value_source(k.name) == Some(ValueSource::CommandLine))
        .filter_map(|k| matches.get_one::<String>(k.name).map(|v| (k.name.to_string(), v.clone())))
        .collect();
    RunConfig::resolve(&file, &flags)
}

fn emit(cfg: &RunConfig, name: &str, outcome: &Outcome, started: Instant) -> eagc::Result<()> {
    let report = Report {
        command: name.to_string(),
        seed: cfg.seed().unwrap_or(0),
        config: cfg.echo(outcome.keys),
        result: outcome.body.clone(),
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    };
    let json = report.to_json();
    if let Some(file) = outcome.report_file {
        io::write_string(&cfg.out_dir().join(file), &json)?;
    }
    print!("{json}");
    Ok(())
}

/// Runs the CLI on `args` (program name first) and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let Some((name, sub)) = matches.subcommand() else {
        return EXIT_USAGE;
    };
    let started = Instant::now();
    let cfg = match resolve(sub) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let result: Result<Outcome, Failed> = match name {
        "gen-data" => commands::gen_data(&cfg).map_err(Failed::from),
        "train-ref" => commands::train_ref(&cfg).map_err(Failed::from),
        "train" => commands::train(&cfg),
        "lemma1" => commands::lemma1(&cfg).map_err(Failed::from),
        "metrics" => commands::metrics(&cfg).map_err(Failed::from),
        _ => unreachable!("clap rejects unknown subcommands"),
    };
    match result {
        Ok(outcome) => match emit(&cfg, name, &outcome, started) {
            Ok(()) => EXIT_OK,
            Err(e) => {
                eprintln!("error: {e}");
                exit_code(&e)
            }
        },
        Err(Failed { error, partial }) => {
            if let Some(outcome) = partial {
                if let Err(e) = emit(&cfg, name, &outcome, started) {
                    eprintln!("error: could not write partial report: {e}");
                }
            }
            eprintln!("error: {error}");
            exit_code(&error)
        }
    }
}

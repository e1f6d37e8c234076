use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Arg, ArgMatches, Command};
use sxai_cli::{
    cmd_eval, cmd_explain, cmd_extract, cmd_synth, cmd_train, exit_code, RunConfig, EXIT_CONFIG,
    KEYS,
};
use sxai_core::Result;

const SUBCOMMANDS: &[(&str, &str)] = &[
    (
        "synth",
        "Synthesize the experiment's classes as WAVs plus a train/test manifest",
    ),
    (
        "extract",
        "Cut aligned phone segments out of recordings into clips plus a manifest",
    ),
    ("train", "Train the network on the manifest's train split"),
    (
        "eval",
        "Score a checkpoint: confusion matrix, per-class scores, asymmetry",
    ),
    (
        "explain",
        "Render class activation map overlays and frequency profiles",
    ),
];

fn cli() -> Command {
    let subcommands = SUBCOMMANDS.iter().map(|&(name, about)| {
        let mut cmd = Command::new(name)
            .about(about)
            .after_help(
                "Every option is also a config-file key (`key = value`). \
                 Flags override the file; unknown keys are errors.",
            )
            .arg(
                Arg::new("config")
                    .long("config")
                    .value_name("FILE")
                    .value_parser(clap::value_parser!(PathBuf))
                    .help("flat `key = value` config file"),
            );
        for k in KEYS {
            cmd = cmd.arg(
                Arg::new(k.name)
                    .long(k.name)
                    .value_name("VALUE")
                    .help(format!("{} [default: {}]", k.doc, k.default)),
            );
        }
        cmd
    });
    Command::new("sxai")
        .about("Spectrogram classification with class activation maps")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommands(subcommands)
}

fn load(m: &ArgMatches) -> Result<RunConfig> {
    let overrides: Vec<(String, String)> = KEYS
        .iter()
        .filter_map(|k| {
            m.get_one::<String>(k.name)
                .map(|v| (k.name.to_string(), v.clone()))
        })
        .collect();
    RunConfig::load(
        m.get_one::<PathBuf>("config").map(PathBuf::as_path),
        &overrides,
    )
}

fn run(name: &str, m: &ArgMatches) -> Result<String> {
    let cfg = load(m)?;
    match name {
        "synth" => Ok(cmd_synth(&cfg)?.report()),
        "extract" => Ok(cmd_extract(&cfg)?.report()),
        "train" => {
            let total = cfg.train.epochs;
            let summary = cmd_train(&cfg, |s| {
                eprintln!(
                    "epoch {}/{total}: loss {:.6}, train accuracy {:.4}",
                    s.epoch, s.loss, s.accuracy
                )
            })?;
            Ok(summary.report())
        }
        "eval" => Ok(cmd_eval(&cfg)?.report_text()),
        "explain" => Ok(cmd_explain(&cfg)?.report()),
        _ => unreachable!("clap only yields known subcommands"),
    }
}

fn main() -> ExitCode {
    let matches = match cli().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG as u8 } else { 0 });
        }
    };
    let (name, sub) = matches.subcommand().expect("subcommand required");
    match run(name, sub) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}

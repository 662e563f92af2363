use std::path::PathBuf;
use std::process::ExitCode;

use amiguard_cli::commands::{self, Target};
use amiguard_cli::{AttackerVariant, CliError, ExperimentConfig, SuiteKind};
use amiguard_core::defense::DecisionRule;
use amiguard_core::Rate;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "amiguard", version, about = "Presence-privacy experiments for change-and-transmit smart metering")]
struct Cli {
    #[command(flatten)]
    opts: Opts,
    #[command(subcommand)]
    cmd: Cmd,
}

/// Overrides applied on top of the defaults or `--config`.
#[derive(Args)]
struct Opts {
    /// JSON file with an ExperimentConfig.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for all inputs and outputs.
    #[arg(long, global = true, env = "AMIGUARD_WORKDIR")]
    workdir: Option<PathBuf>,
    /// per5min or per30min.
    #[arg(long, global = true)]
    rate: Option<Rate>,
    #[arg(long, global = true)]
    threshold: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Spoofing defense on absent days.
    #[arg(long, global = true, value_name = "BOOL")]
    defense: Option<bool>,
    #[arg(long, global = true, value_enum)]
    attacker: Option<AttackerVariant>,
    /// argmax or sample.
    #[arg(long, global = true, value_parser = parse_rule)]
    decision_rule: Option<DecisionRule>,
    #[arg(long, global = true)]
    tau_p: Option<f64>,
    #[arg(long, global = true)]
    consumers: Option<usize>,
    #[arg(long, global = true)]
    days: Option<usize>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    #[arg(long, global = true)]
    paillier_bits: Option<usize>,
    #[arg(long, global = true, value_enum)]
    suite: Option<SuiteKind>,
}

fn parse_rule(s: &str) -> Result<DecisionRule, String> {
    match s {
        "argmax" => Ok(DecisionRule::Argmax),
        "sample" => Ok(DecisionRule::Sample),
        _ => Err(format!("unknown decision rule {s:?}; expected argmax or sample")),
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate synthetic 1-min traces with ground-truth presence.
    Synth,
    /// Validate an external CSV and adopt it as the run's traces.
    Ingest { input: PathBuf },
    /// Resample, apply CAT, label days and split.
    Prep,
    /// Train one model.
    Train {
        #[arg(long, value_enum)]
        target: Target,
    },
    /// Score the attacker on the test split.
    Eval,
    /// Run the encrypted reporting protocol.
    Simulate,
    /// Tabulate success rate and efficiency with and without the defense.
    Report { inputs: Vec<PathBuf> },
}

fn resolve(opts: &Opts) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &opts.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(v) = &opts.workdir {
        cfg.workdir = v.clone();
    }
    macro_rules! set {
        ($($field:ident).+ = $v:expr) => {
            if let Some(v) = $v {
                cfg.$($field).+ = v;
            }
        };
    }
    set!(rate = opts.rate);
    set!(threshold_percent = opts.threshold);
    set!(seed = opts.seed);
    set!(defense = opts.defense);
    set!(attacker = opts.attacker);
    set!(decision_rule = opts.decision_rule);
    set!(tau_p = opts.tau_p);
    set!(synth.consumer_count = opts.consumers);
    set!(synth.day_count = opts.days);
    set!(paillier_bits = opts.paillier_bits);
    set!(suite = opts.suite);
    if let Some(e) = opts.epochs {
        cfg.attacker_training.epochs = e;
        cfg.defense_training.epochs = e;
        cfg.threeclass_training.epochs = e;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print<T: Serialize>(v: &T) -> Result<(), CliError> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = resolve(&cli.opts)?;
    match cli.cmd {
        Cmd::Synth => print(&commands::cmd_synth(&cfg)?),
        Cmd::Ingest { input } => print(&commands::cmd_ingest(&cfg, &input)?),
        Cmd::Prep => print(&commands::cmd_prep(&cfg)?),
        Cmd::Train { target } => {
            let s = commands::cmd_train(&cfg, target)?;
            print(&serde_json::json!({ "target": s.target, "samples": s.samples, "final": s.history.last() }))
        }
        Cmd::Eval => print(&commands::cmd_eval(&cfg)?),
        Cmd::Simulate => {
            let r = commands::cmd_simulate(&cfg)?;
            print(&serde_json::json!({
                "exact": r.exact, "transmissions": r.transmissions, "spoofed": r.spoofed,
                "efficiency": r.efficiency, "cat_efficiency": r.cat_efficiency, "error_p95": r.error_p95,
            }))
        }
        Cmd::Report { inputs } => print(&commands::cmd_report(&cfg, &inputs)?),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

//! One function per subcommand. Inputs and outputs live in the work directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use amiguard_core::attacker::{
    build_attacker, build_threeclass, evaluate, evaluate_known_defense, train_attacker,
    EvalReport, KnownDefenseReport,
};
use amiguard_core::cat::{aggregate_error_cdf, efficiency_table, write_efficiency_csv, TransmissionPattern};
use amiguard_core::data::{
    ingest_csv, synthesize, write_csv as write_traces, ConsumptionTrace, GroundTruth, LabeledDataset, PresenceLabel,
    Split,
};
use amiguard_core::defense::{
    bootstrap_history, build_defense, train_defense, write_transcript, DefenseModel, MeterTimeline,
};
use amiguard_core::protocol::{kdc_setup, run_simulation, Scenario, SimulationReport};
use amiguard_core::{cat::CatConfig, CoreError};
use amiguard_crypto::{Bls12Suite, PairingSuite, ToySuite};
use amiguard_nn::{EpochStats, ModelSpec, Params};
use chrono::NaiveDate;
use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::artifact::{read_json, write_csv, write_json, write_jsonl};
use crate::config::{AttackerVariant, ExperimentConfig, SuiteKind};
use crate::error::{CliError, Result};
use crate::pipeline::{
    calibrate_tau_p, truth_agreement,
    attacker_set, cat_patterns, consumer_ranges, defend, defense_windows, prepare, three_class_set,
};

pub const TRACES: &str = "traces.csv";
pub const TRUTH: &str = "truth.csv";
pub const EFFICIENCY_TABLE: &str = "efficiency-table.csv";
/// Candidate periods cutoffs for calibration against ground truth.
pub const TAU_P_GRID: [f64; 10] = [0.2, 0.3, 0.4, 0.5, 0.6, 0.8, 1.0, 1.25, 1.5, 2.0];

/// Training targets of `train`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Attacker,
    Defense,
    Threeclass,
}

impl Target {
    fn name(self) -> &'static str {
        match self {
            Target::Attacker => "attacker",
            Target::Defense => "defense",
            Target::Threeclass => "threeclass",
        }
    }

    fn spec(self, cfg: &ExperimentConfig) -> ModelSpec {
        match self {
            Target::Attacker => build_attacker(cfg.rate),
            Target::Defense => build_defense(cfg.rate),
            Target::Threeclass => build_threeclass(cfg.rate),
        }
    }
}

pub fn dataset_file(cfg: &ExperimentConfig) -> PathBuf {
    cfg.path(&format!("dataset-{}.jsonl", cfg.rate))
}

pub fn params_file(cfg: &ExperimentConfig, target: Target) -> PathBuf {
    cfg.path(&format!("{}-{}.params", target.name(), cfg.rate))
}

fn defended_tag(on: bool) -> &'static str {
    if on {
        "defended"
    } else {
        "undefended"
    }
}

pub fn eval_file(cfg: &ExperimentConfig) -> PathBuf {
    match cfg.attacker {
        AttackerVariant::Twoclass => cfg.path(&format!("eval-{}-twoclass-{}.json", cfg.rate, defended_tag(cfg.defense))),
        AttackerVariant::Threeclass => cfg.path(&format!("eval-{}-threeclass.json", cfg.rate)),
    }
}

pub fn simulation_file(cfg: &ExperimentConfig) -> PathBuf {
    cfg.path(&format!("simulation-{}-{}.json", cfg.rate, defended_tag(cfg.defense)))
}

pub fn report_file(cfg: &ExperimentConfig, ext: &str) -> PathBuf {
    cfg.path(&format!("report-{}.{ext}", cfg.rate))
}

#[derive(Clone, Debug, Serialize)]
pub struct SynthSummary {
    pub consumers: usize,
    pub days: usize,
    pub absent_days: usize,
}

/// Synthetic 1-min traces, their ground-truth presence and the CAT efficiency table.
pub fn cmd_synth(cfg: &ExperimentConfig) -> Result<SynthSummary> {
    let synth = cfg.synth_config();
    let (traces, truth) = synthesize(&synth)?;
    save_traces(cfg, &traces, "traces")?;
    write_csv(&cfg.path(TRUTH), cfg, "truth", |w| write_truth(&truth, w))?;
    efficiency_artifact(cfg, &traces)?;
    let summary = SynthSummary {
        consumers: traces.len(),
        days: synth.day_count,
        absent_days: truth.values().filter(|&&l| l == PresenceLabel::Absent).count(),
    };
    write_json(&cfg.path("synth.json"), cfg, "synth", &summary)?;
    Ok(summary)
}

fn write_truth(truth: &GroundTruth, w: &mut Vec<u8>) -> amiguard_core::Result<()> {
    use std::io::Write;
    let mut io = |s: String| w.write_all(s.as_bytes()).map_err(|e| CoreError::Io { path: TRUTH.into(), source: e });
    io("consumer_id,date,presence\n".into())?;
    for ((c, d), l) in truth {
        io(format!("{c},{d},{}\n", serde_json::to_value(l)?.as_str().unwrap_or_default()))?;
    }
    Ok(())
}

pub fn read_truth(path: &Path) -> Result<GroundTruth> {
    let text = std::fs::read_to_string(path).map_err(|e| crate::artifact::io_err(path, e))?;
    let mut out = GroundTruth::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.starts_with('#')).skip(1) {
        let bad = || CliError::Data(format!("{}:{}: malformed truth row", path.display(), i + 1));
        let mut f = line.split(',');
        let (c, d, l) = (f.next().ok_or_else(bad)?, f.next().ok_or_else(bad)?, f.next().ok_or_else(bad)?);
        let date: NaiveDate = d.parse().map_err(|_| bad())?;
        let label: PresenceLabel = serde_json::from_value(serde_json::Value::String(l.into())).map_err(|_| bad())?;
        out.insert((c.to_string(), date), label);
    }
    Ok(out)
}

fn save_traces(cfg: &ExperimentConfig, traces: &[ConsumptionTrace], kind: &str) -> Result<()> {
    write_csv(&cfg.path(TRACES), cfg, kind, |w| write_traces(traces, w))
}

fn efficiency_artifact(cfg: &ExperimentConfig, traces: &[ConsumptionTrace]) -> Result<()> {
    if traces.iter().any(|t| t.granularity_minutes != 1) {
        warn!("traces are not 1-min; skipping the efficiency table");
        return Ok(());
    }
    let cells = efficiency_table(traces, &[1.0, 4.0, 7.0, 10.0], &[1, 5, 15, 30])?;
    write_csv(&cfg.path(EFFICIENCY_TABLE), cfg, "efficiency-table", |w| write_efficiency_csv(&cells, w))
}

#[derive(Clone, Debug, Serialize)]
pub struct IngestSummary {
    pub consumers: usize,
    pub granularity_minutes: u32,
    pub days: usize,
}

/// Validates an external CSV and stores it as the run's traces.
pub fn cmd_ingest(cfg: &ExperimentConfig, input: &Path) -> Result<IngestSummary> {
    let traces = ingest_csv(input)?;
    if traces.is_empty() {
        return Err(CliError::Data(format!("{}: no complete days", input.display())));
    }
    save_traces(cfg, &traces, "traces")?;
    efficiency_artifact(cfg, &traces)?;
    let summary = IngestSummary {
        consumers: traces.len(),
        granularity_minutes: traces[0].granularity_minutes,
        days: traces.iter().map(|t| t.day_count()).sum(),
    };
    write_json(&cfg.path("ingest.json"), cfg, "ingest", &summary)?;
    Ok(summary)
}

pub fn load_traces(cfg: &ExperimentConfig) -> Result<Vec<ConsumptionTrace>> {
    let path = cfg.path(TRACES);
    if !path.exists() {
        return Err(CliError::Data(format!("{} not found; run `synth` or `ingest` first", path.display())));
    }
    Ok(ingest_csv(path)?)
}

pub fn load_dataset(cfg: &ExperimentConfig) -> Result<LabeledDataset> {
    let path = dataset_file(cfg);
    if !path.exists() {
        return Err(CliError::Data(format!("{} not found; run `prep` first", path.display())));
    }
    let ds = LabeledDataset::load(&path)?;
    if ds.is_empty() {
        return Err(CliError::Data(format!("{} holds no records", path.display())));
    }
    Ok(ds)
}

#[derive(Clone, Debug, Serialize)]
pub struct PrepSummary {
    pub records: usize,
    pub absent: usize,
    pub train: usize,
    pub test: usize,
    /// Share of labels matching `truth.csv`, when present.
    pub truth_agreement: Option<f64>,
    /// Periods cutoff that best matches `truth.csv`, when present.
    pub suggested_tau_p: Option<f64>,
    pub cat_efficiency: f64,
    pub error_p95: Option<f64>,
}

/// Resample, CAT, label and split; also the aggregate-error CDF.
pub fn cmd_prep(cfg: &ExperimentConfig) -> Result<PrepSummary> {
    let traces = load_traces(cfg)?;
    let ds = prepare(&traces, cfg.rate, cfg.threshold_percent, &cfg.label_config())?;
    write_jsonl(&dataset_file(cfg), cfg, "dataset", |w| ds.write_jsonl(w))?;
    let cat = cat_patterns(&ds, cfg.threshold_percent)?;
    let truth_path = cfg.path(TRUTH);
    let (truth_agreement, suggested_tau_p) = if truth_path.exists() {
        let truth = read_truth(&truth_path)?;
        let (tau, _) = calibrate_tau_p(
            &traces,
            &truth,
            cfg.rate,
            cfg.threshold_percent,
            &cfg.label_config(),
            &TAU_P_GRID,
        )?;
        (Some(truth_agreement(&ds, &truth)), Some(tau))
    } else {
        (None, None)
    };
    let mut error_p95 = None;
    let (common, _) = common_dates(&ds);
    if !common.is_empty() {
        let mut truth = Vec::new();
        let mut eu = Vec::new();
        for range in consumer_ranges(&ds) {
            let (mut t, mut v) = (Vec::new(), Vec::new());
            for i in range.filter(|&i| common.contains(&ds.records[i].day.date)) {
                t.extend_from_slice(&ds.records[i].day.readings);
                v.extend_from_slice(&cat[i].1.values);
            }
            truth.push(t);
            eu.push(v);
        }
        let cdf = aggregate_error_cdf(&truth, &eu)?;
        error_p95 = cdf.abs_percentile(95.0);
        write_csv(&cfg.path(&format!("error-cdf-{}.csv", cfg.rate)), cfg, "error-cdf", |w| cdf.write_csv(w))?;
    }
    let patterns: Vec<&TransmissionPattern> = cat.iter().map(|(p, _)| p).collect();
    let summary = PrepSummary {
        records: ds.len(),
        absent: ds.count_label(PresenceLabel::Absent),
        train: ds.split(Split::Train).count(),
        test: ds.split(Split::Test).count(),
        truth_agreement,
        suggested_tau_p,
        cat_efficiency: crate::pipeline::corpus_efficiency(patterns),
        error_p95,
    };
    write_json(&cfg.path(&format!("prep-{}.json", cfg.rate)), cfg, "prep", &summary)?;
    Ok(summary)
}

/// Dates every consumer has, and how many records fall outside them.
fn common_dates(ds: &LabeledDataset) -> (std::collections::BTreeSet<NaiveDate>, usize) {
    let ranges = consumer_ranges(ds);
    let mut common: Option<std::collections::BTreeSet<NaiveDate>> = None;
    for r in &ranges {
        let dates = ds.records[r.clone()].iter().map(|x| x.day.date).collect();
        common = Some(match common {
            None => dates,
            Some(c) => c.intersection(&dates).copied().collect(),
        });
    }
    let common = common.unwrap_or_default();
    let dropped = ds.records.iter().filter(|r| !common.contains(&r.day.date)).count();
    (common, dropped)
}

fn load_params(cfg: &ExperimentConfig, target: Target) -> Result<Params> {
    let path = params_file(cfg, target);
    if !path.exists() {
        return Err(CliError::Data(format!("{} not found; run `train --target {}` first", path.display(), target.name())));
    }
    Ok(Params::load(&target.spec(cfg), &path)?)
}

fn defense_model(cfg: &ExperimentConfig) -> Result<DefenseModel> {
    Ok(DefenseModel::new(cfg.rate, load_params(cfg, Target::Defense)?, cfg.decision_rule)?)
}

fn undefended(ds: &LabeledDataset, cfg: &ExperimentConfig) -> Result<Vec<TransmissionPattern>> {
    Ok(cat_patterns(ds, cfg.threshold_percent)?.into_iter().map(|(p, _)| p).collect())
}

fn defended(ds: &LabeledDataset, cfg: &ExperimentConfig, undefended: &[TransmissionPattern]) -> Result<Vec<TransmissionPattern>> {
    let model = defense_model(cfg)?;
    Ok(defend(ds, undefended, &model, cfg.threshold_percent, cfg.defense_seed())?.into_iter().map(|(p, _, _)| p).collect())
}

#[derive(Clone, Debug, Serialize)]
pub struct TrainSummary {
    pub target: Target,
    pub samples: usize,
    pub history: Vec<EpochStats>,
    /// Defense only: share of next decisions that are transmissions.
    pub positive_rate: Option<f64>,
}

pub fn cmd_train(cfg: &ExperimentConfig, target: Target) -> Result<TrainSummary> {
    let ds = load_dataset(cfg)?;
    let plain = undefended(&ds, cfg)?;
    let (params, samples, history, positive_rate) = match target {
        Target::Attacker => {
            let (p, l) = attacker_set(&ds, &plain, Split::Train);
            let (params, h) = train_attacker(&build_attacker(cfg.rate), &p, &l, &cfg.attacker_train())?;
            (params, p.len(), h, None)
        }
        Target::Defense => {
            let windows = defense_windows(&ds, &plain, cfg.rate.window())?;
            if windows.skipped > 0 {
                info!("{} occupied runs were too short for a window", windows.skipped);
            }
            let (params, h) = train_defense(cfg.rate, &windows, None, &cfg.defense_train())?;
            (params, windows.len(), h, Some(windows.positive_rate()))
        }
        Target::Threeclass => {
            let spoofed = defended(&ds, cfg, &plain)?;
            let train = three_class_set(&ds, &plain, &spoofed, Split::Train);
            let (p, l) = train.flatten();
            let (params, h) = train_attacker(&build_threeclass(cfg.rate), &p, &l, &cfg.threeclass_train())?;
            (params, p.len(), h, None)
        }
    };
    let spec = target.spec(cfg);
    let path = params_file(cfg, target);
    params.save(&spec, &path)?;
    let summary = TrainSummary { target, samples, history, positive_rate };
    let stem = format!("{}-{}", target.name(), cfg.rate);
    write_json(&cfg.path(&format!("{stem}.json")), cfg, "train", &summary)?;
    write_csv(&cfg.path(&format!("{stem}-history.csv")), cfg, "train-history", |w| {
        use std::io::Write;
        let mut out = String::from("epoch,loss,accuracy\n");
        for e in &summary.history {
            out.push_str(&format!("{},{},{}\n", e.epoch, e.loss, e.accuracy));
        }
        w.write_all(out.as_bytes()).map_err(|e| CoreError::Io { path: PathBuf::from(&stem), source: e })
    })?;
    Ok(summary)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "lowercase")]
pub enum EvalOutput {
    Twoclass { defended: bool, report: EvalReport },
    Threeclass { report: KnownDefenseReport },
}

impl EvalOutput {
    fn roc(&self) -> &[(f64, f64)] {
        match self {
            EvalOutput::Twoclass { report, .. } => &report.roc_points,
            EvalOutput::Threeclass { report } => &report.defended.roc_points,
        }
    }
}

/// Scores the attacker on the test split (absent days defended when
/// `cfg.defense` is set) and writes the report and ROC points.
pub fn cmd_eval(cfg: &ExperimentConfig) -> Result<EvalOutput> {
    let ds = load_dataset(cfg)?;
    if ds.split(Split::Test).next().is_none() {
        return Err(CliError::Data("the test split is empty".into()));
    }
    let plain = undefended(&ds, cfg)?;
    let out = match cfg.attacker {
        AttackerVariant::Twoclass => {
            let params = load_params(cfg, Target::Attacker)?;
            let patterns = if cfg.defense { defended(&ds, cfg, &plain)? } else { plain };
            let (p, l) = attacker_set(&ds, &patterns, Split::Test);
            EvalOutput::Twoclass { defended: cfg.defense, report: evaluate(&build_attacker(cfg.rate), &params, &p, &l)? }
        }
        AttackerVariant::Threeclass => {
            let params = load_params(cfg, Target::Threeclass)?;
            let spoofed = defended(&ds, cfg, &plain)?;
            let test = three_class_set(&ds, &plain, &spoofed, Split::Test);
            let (defended, undefended, present_as_spoofing) = evaluate_known_defense(cfg.rate, &params, &test)?;
            EvalOutput::Threeclass { report: KnownDefenseReport { defended, undefended, present_as_spoofing, history: Vec::new() } }
        }
    };
    let path = eval_file(cfg);
    write_json(&path, cfg, "eval", &out)?;
    write_csv(&path.with_extension("roc.csv"), cfg, "roc", |w| {
        amiguard_core::attacker::Roc { points: out.roc().to_vec(), auc: 0.0, sr_at_fa_005: 0.0 }.write_csv(w)
    })?;
    Ok(out)
}

/// Runs the encrypted protocol over the common days of every consumer.
pub fn cmd_simulate(cfg: &ExperimentConfig) -> Result<SimulationReport> {
    let ds = load_dataset(cfg)?;
    let (common, dropped) = common_dates(&ds);
    if common.is_empty() {
        return Err(CliError::Data("consumers share no common day".into()));
    }
    if dropped > 0 {
        warn!("{dropped} records fall outside the days all consumers share and are not simulated");
    }
    let plain = undefended(&ds, cfg)?;
    let model = if cfg.defense { Some(defense_model(cfg)?) } else { None };
    let window = model.as_ref().map_or(1, DefenseModel::window);
    let mut meters = Vec::new();
    for range in consumer_ranges(&ds) {
        let recs: Vec<usize> = range.clone().filter(|&i| common.contains(&ds.records[i].day.date)).collect();
        let train: Vec<(PresenceLabel, &TransmissionPattern)> =
            range.filter(|&i| ds.records[i].split == Split::Train).map(|i| (ds.records[i].label, &plain[i])).collect();
        meters.push(MeterTimeline {
            days: recs.iter().map(|&i| ds.records[i].day.clone()).collect(),
            presence: recs.iter().map(|&i| ds.records[i].label).collect(),
            history: bootstrap_history(&train, window),
        });
    }
    let granularity = meters[0].days[0].granularity_minutes;
    let scenario = Scenario { meters: &meters, cat: CatConfig::new(cfg.threshold_percent, granularity)?, defense: model.as_ref() };
    let (report, transcript) = match cfg.suite {
        SuiteKind::Toy => simulate_with(ToySuite::from_seed(cfg.seed)?, cfg, &scenario)?,
        SuiteKind::Bls12 => simulate_with(Bls12Suite, cfg, &scenario)?,
    };
    let path = simulation_file(cfg);
    write_json(&path, cfg, "simulation", &report)?;
    write_jsonl(&path.with_extension("transcript.jsonl"), cfg, "transcript", |w| write_transcript(&transcript, w))?;
    Ok(report)
}

fn simulate_with<S: PairingSuite>(
    suite: S,
    cfg: &ExperimentConfig,
    scenario: &Scenario<'_>,
) -> Result<(SimulationReport, Vec<amiguard_core::defense::TranscriptLine>)> {
    let window = scenario.defense.map_or(1, DefenseModel::window);
    let mut setup = kdc_setup(suite, scenario.meters.len(), &cfg.security(), window)?;
    Ok(run_simulation(&mut setup, scenario)?)
}

/// The with/without-defense comparison.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    /// Two-class attacker's TP / (TP + FP) on the test split.
    pub success_rate: Cell,
    /// Share of absent test days the same attacker flags.
    pub detection_rate: Cell,
    pub efficiency: Cell,
    /// Known-defense attacker, defended absent days as the positive class.
    pub threeclass_success_rate: Option<f64>,
    pub threeclass_detection_rate: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub without_defense: Option<f64>,
    pub with_defense: Option<f64>,
}

impl Cell {
    fn set(&mut self, defended: bool, v: f64) {
        if defended {
            self.with_defense = Some(v);
        } else {
            self.without_defense = Some(v);
        }
    }
}

/// Consolidates eval and simulation artifacts into the comparison table.
pub fn cmd_report(cfg: &ExperimentConfig, inputs: &[PathBuf]) -> Result<Report> {
    let inputs: Vec<PathBuf> = if inputs.is_empty() {
        let mut v = Vec::new();
        for defense in [false, true] {
            let c = ExperimentConfig { defense, attacker: AttackerVariant::Twoclass, ..cfg.clone() };
            v.push(eval_file(&c));
            v.push(simulation_file(&c));
        }
        let three = eval_file(&ExperimentConfig { attacker: AttackerVariant::Threeclass, ..cfg.clone() });
        if three.exists() {
            v.push(three);
        }
        v
    } else {
        inputs.to_vec()
    };
    let mut report = Report::default();
    for path in &inputs {
        if !path.exists() {
            return Err(CliError::Data(format!("{} not found", path.display())));
        }
        let (kind, result) = read_json(path)?;
        let bad = |e: serde_json::Error| CliError::Data(format!("{}: {e}", path.display()));
        match kind.as_str() {
            "eval" => match serde_json::from_value::<EvalOutput>(result).map_err(bad)? {
                EvalOutput::Twoclass { defended, report: r } => {
                    report.success_rate.set(defended, r.sr);
                    report.detection_rate.set(defended, r.detection_rate);
                }
                EvalOutput::Threeclass { report: r } => {
                    report.threeclass_success_rate = Some(r.defended.sr);
                    report.threeclass_detection_rate = Some(r.defended.detection_rate);
                }
            },
            "simulation" => {
                let r: SimulationReport = serde_json::from_value(result).map_err(bad)?;
                report.efficiency.set(r.defense, r.efficiency);
            }
            other => return Err(CliError::Data(format!("{}: cannot report on a {other:?} artifact", path.display()))),
        }
    }
    write_json(&report_file(cfg, "json"), cfg, "report", &report)?;
    write_csv(&report_file(cfg, "csv"), cfg, "report", |w| {
        use std::io::Write;
        let f = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut rows: BTreeMap<&str, (Option<f64>, Option<f64>)> = BTreeMap::new();
        rows.insert("attacker_success_rate", (report.success_rate.without_defense, report.success_rate.with_defense));
        rows.insert("attacker_detection_rate", (report.detection_rate.without_defense, report.detection_rate.with_defense));
        rows.insert("efficiency_percent", (report.efficiency.without_defense, report.efficiency.with_defense));
        rows.insert("threeclass_success_rate", (None, report.threeclass_success_rate));
        rows.insert("threeclass_detection_rate", (None, report.threeclass_detection_rate));
        let mut out = String::from("metric,without_defense,with_defense\n");
        for (k, (a, b)) in rows {
            out.push_str(&format!("{k},{},{}\n", f(a), f(b)));
        }
        w.write_all(out.as_bytes()).map_err(|e| CoreError::Io { path: "report".into(), source: e })
    })?;
    Ok(report)
}

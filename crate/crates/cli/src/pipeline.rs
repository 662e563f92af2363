//! Stage functions shared by the subcommands.

use std::collections::BTreeMap;

use amiguard_core::attacker::{AttackClass, ThreeClassData};
use amiguard_core::cat::{apply_cat, cat_trace, CatConfig, EuView, TransmissionPattern};
use amiguard_core::data::{
    label_days, resample, ConsumptionTrace, GroundTruth, LabelConfig, LabeledDataset, PresenceLabel, Split,
};
use amiguard_core::defense::{
    bootstrap_history, build_window_dataset, present_runs, simulate_meters, DefenseModel, MeterRun, MeterTimeline,
    WindowDataset,
};
use amiguard_core::{Rate, Result};

/// Resamples 1-min traces to `rate`, runs CAT and labels every day.
pub fn prepare(traces: &[ConsumptionTrace], rate: Rate, threshold: f64, label: &LabelConfig) -> Result<LabeledDataset> {
    let resampled = traces.iter().map(|t| resample(t, rate.minutes())).collect::<Result<Vec<_>>>()?;
    let patterns: Vec<Vec<TransmissionPattern>> =
        resampled.iter().map(|t| cat_trace(t, threshold).into_iter().map(|(p, _)| p).collect()).collect();
    label_days(&resampled, &patterns, label, label.seed)
}

/// Share of labelled days that match the ground truth.
pub fn truth_agreement(ds: &LabeledDataset, truth: &GroundTruth) -> f64 {
    if ds.is_empty() {
        return 0.0;
    }
    let hits = ds
        .records
        .iter()
        .filter(|r| truth.get(&(r.day.consumer_id.clone(), r.day.date)) == Some(&r.label))
        .count();
    hits as f64 / ds.len() as f64
}

/// Picks the periods cutoff from `grid` that best reproduces `truth`; ties go
/// to the smaller cutoff. Returns the cutoff and its agreement.
pub fn calibrate_tau_p(
    traces: &[ConsumptionTrace],
    truth: &GroundTruth,
    rate: Rate,
    threshold: f64,
    base: &LabelConfig,
    grid: &[f64],
) -> Result<(f64, f64)> {
    let mut best: Option<(f64, f64)> = None;
    for &tau_p in grid {
        let ds = prepare(traces, rate, threshold, &LabelConfig { tau_p, ..base.clone() })?;
        let agreement = truth_agreement(&ds, truth);
        if best.map_or(true, |(_, a)| agreement > a) {
            best = Some((tau_p, agreement));
        }
    }
    best.ok_or_else(|| amiguard_core::CoreError::Argument("empty calibration grid".into()))
}

/// Index ranges of each consumer's records (records are grouped by consumer).
pub fn consumer_ranges(ds: &LabeledDataset) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    while start < ds.records.len() {
        let id = &ds.records[start].day.consumer_id;
        let len = ds.records[start..].iter().take_while(|r| &r.day.consumer_id == id).count();
        out.push(start..start + len);
        start += len;
    }
    out
}

/// Plain CAT over every record, chaining the baseline across a consumer's days.
pub fn cat_patterns(ds: &LabeledDataset, threshold: f64) -> Result<Vec<(TransmissionPattern, EuView)>> {
    let mut out = Vec::with_capacity(ds.len());
    for range in consumer_ranges(ds) {
        let mut last = None;
        for r in &ds.records[range] {
            let cfg = CatConfig::new(threshold, r.day.granularity_minutes)?;
            let (p, v, l) = apply_cat(&r.day, &cfg, last)?;
            last = Some(l);
            out.push((p, v));
        }
    }
    Ok(out)
}

pub fn attack_class(label: PresenceLabel) -> AttackClass {
    match label {
        PresenceLabel::Present => AttackClass::Present,
        PresenceLabel::Absent => AttackClass::Absent,
    }
}

/// Patterns and two-class labels of one split.
pub fn attacker_set(ds: &LabeledDataset, patterns: &[TransmissionPattern], split: Split) -> (Vec<TransmissionPattern>, Vec<AttackClass>) {
    ds.records
        .iter()
        .zip(patterns)
        .filter(|(r, _)| r.split == split)
        .map(|(r, p)| (p.clone(), attack_class(r.label)))
        .unzip()
}

/// Next-decision windows from the training split's occupied days.
pub fn defense_windows(ds: &LabeledDataset, patterns: &[TransmissionPattern], n: usize) -> Result<WindowDataset> {
    let mut runs = Vec::new();
    for range in consumer_ranges(ds) {
        let days: Vec<_> = range
            .filter(|&i| ds.records[i].split == Split::Train)
            .map(|i| (ds.records[i].day.date, ds.records[i].label, &patterns[i]))
            .collect();
        runs.extend(present_runs(&days));
    }
    build_window_dataset(&runs, n)
}

/// Re-runs every consumer's days with the defense active on absent days.
/// Returns one outcome per record, aligned with `ds.records`.
pub fn defend(
    ds: &LabeledDataset,
    patterns: &[TransmissionPattern],
    model: &DefenseModel,
    threshold: f64,
    seed: u64,
) -> Result<Vec<(TransmissionPattern, EuView, usize)>> {
    let ranges = consumer_ranges(ds);
    let mut meters = Vec::with_capacity(ranges.len());
    for range in &ranges {
        let recs = &ds.records[range.clone()];
        let train_present: Vec<(PresenceLabel, &TransmissionPattern)> = range
            .clone()
            .filter(|&i| ds.records[i].split == Split::Train)
            .map(|i| (ds.records[i].label, &patterns[i]))
            .collect();
        meters.push(MeterTimeline {
            days: recs.iter().map(|r| r.day.clone()).collect(),
            presence: recs.iter().map(|r| r.label).collect(),
            history: bootstrap_history(&train_present, model.window()),
        });
    }
    let granularity = ds.records.first().map_or(model.rate.minutes(), |r| r.day.granularity_minutes);
    let runs: Vec<MeterRun> = simulate_meters(&meters, &CatConfig::new(threshold, granularity)?, Some(model), seed)?;
    Ok(runs.into_iter().flat_map(|r| r.days.into_iter().map(|d| (d.pattern, d.eu_view, d.spoofed))).collect())
}

/// Present, undefended-absent and defended-absent patterns of one split.
pub fn three_class_set(
    ds: &LabeledDataset,
    undefended: &[TransmissionPattern],
    defended: &[TransmissionPattern],
    split: Split,
) -> ThreeClassData {
    let mut out = ThreeClassData::default();
    for ((r, u), d) in ds.records.iter().zip(undefended).zip(defended) {
        if r.split != split {
            continue;
        }
        match r.label {
            PresenceLabel::Present => out.present.push(u.clone()),
            PresenceLabel::Absent => {
                out.absent.push(u.clone());
                out.spoofing.push(d.clone());
            }
        }
    }
    out
}

/// Share of periodic readings suppressed: Σ(P − R) / ΣP in percent.
pub fn corpus_efficiency<'a>(patterns: impl IntoIterator<Item = &'a TransmissionPattern>) -> f64 {
    let (p, r) = patterns.into_iter().fold((0usize, 0usize), |(p, r), x| (p + x.len(), r + x.count()));
    if p == 0 {
        0.0
    } else {
        100.0 * (p - r) as f64 / p as f64
    }
}

/// Per-consumer mean transmissions on present days.
pub fn mean_present_counts(ds: &LabeledDataset, patterns: &[TransmissionPattern]) -> BTreeMap<String, f64> {
    let mut acc: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for (r, p) in ds.records.iter().zip(patterns) {
        if r.label == PresenceLabel::Present {
            let e = acc.entry(r.day.consumer_id.clone()).or_default();
            e.0 += p.count();
            e.1 += 1;
        }
    }
    acc.into_iter().map(|(k, (s, n))| (k, s as f64 / n as f64)).collect()
}

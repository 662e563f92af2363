//! Spoofing defense: a next-decision predictor trained on occupied-day
//! patterns. While the home is empty, slots CAT leaves silent are filled
//! wherever the predictor says an occupied home would have transmitted.

use std::collections::VecDeque;
use std::io::Write;

use amiguard_nn::{
    predict, train, ActivationKind as Act, Dataset, EpochStats, LayerSpec as L, ModelSpec, Params, Tensor, TrainConfig,
};
use chrono::NaiveDate;
use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attacker::KERNEL_SIZE;
use crate::cat::{cat_decide, CatConfig, EuView, TransmissionPattern};
use crate::data::{DayRecord, PresenceLabel};
use crate::error::{CoreError, Result};
use crate::Rate;

pub fn build_defense(rate: Rate) -> ModelSpec {
    let conv = |filters| [L::Conv1d { filters, kernel_size: KERNEL_SIZE }, L::Activation { kind: Act::Relu }];
    let mut layers: Vec<L> = match rate {
        Rate::Per5Min => [conv(150).as_slice(), &[L::MaxPool1d { pool_size: 4 }, L::Gru { units: 200 }]].concat(),
        Rate::Per30Min => [
            conv(128).as_slice(),
            &conv(64),
            &conv(32),
            &[L::MaxPool1d { pool_size: 2 }, L::Gru { units: 128 }],
        ]
        .concat(),
    };
    layers.extend([
        L::Dense { units: 128 },
        L::Activation { kind: Act::Relu },
        L::Dense { units: 32 },
        L::Activation { kind: Act::Relu },
        L::Dense { units: 2 },
        L::Activation { kind: Act::Softmax },
    ]);
    ModelSpec { input_length: rate.window(), input_channels: 1, layers, output_classes: 2 }
}

/// Training defaults: 60 epochs, batch 400, learning rate 1e-4.
pub fn default_train_config() -> TrainConfig {
    TrainConfig { epochs: 60, batch_size: 400, learning_rate: 1e-4, ..TrainConfig::default() }
}

/// Windows of `n` consecutive decisions, each labelled with the next one.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowDataset {
    pub n: usize,
    /// Row-major, `n` bits per window.
    pub windows: Vec<u8>,
    pub labels: Vec<u8>,
    /// Runs too short to yield a window.
    pub skipped: usize,
}

impl WindowDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn window(&self, i: usize) -> &[u8] {
        &self.windows[i * self.n..(i + 1) * self.n]
    }

    /// Share of windows followed by a transmission.
    pub fn positive_rate(&self) -> f64 {
        self.labels.iter().map(|&b| b as f64).sum::<f64>() / self.len().max(1) as f64
    }

    pub fn to_dataset(&self, rows: Option<&[usize]>) -> Result<Dataset> {
        let all: Vec<usize>;
        let idx = match rows {
            Some(r) => r,
            None => {
                all = (0..self.len()).collect();
                &all
            }
        };
        let data: Vec<f64> = idx.iter().flat_map(|&i| self.window(i).iter().map(|&b| b as f64)).collect();
        let inputs = Tensor::new(vec![idx.len(), self.n, 1], data)?;
        Ok(Dataset::new(inputs, idx.iter().map(|&i| self.labels[i] as usize).collect())?)
    }
}

/// Slides a window of `n` over each run of consecutive occupied-day bits.
/// Windows cross midnight inside a run but never between runs.
pub fn build_window_dataset(runs: &[Vec<u8>], n: usize) -> Result<WindowDataset> {
    if n == 0 {
        return Err(CoreError::Argument("window size must be positive".into()));
    }
    let mut ds = WindowDataset { n, windows: Vec::new(), labels: Vec::new(), skipped: 0 };
    for run in runs {
        if run.len() <= n {
            ds.skipped += 1;
            continue;
        }
        for start in 0..run.len() - n {
            ds.windows.extend_from_slice(&run[start..start + n]);
            ds.labels.push(run[start + n]);
        }
    }
    Ok(ds)
}

/// Splits a consumer's days into runs of consecutive Present days.
pub fn present_runs(days: &[(NaiveDate, PresenceLabel, &TransmissionPattern)]) -> Vec<Vec<u8>> {
    let mut runs: Vec<Vec<u8>> = Vec::new();
    let mut prev: Option<NaiveDate> = None;
    for (date, label, pattern) in days {
        if *label != PresenceLabel::Present {
            prev = None;
            continue;
        }
        match (prev, runs.last_mut()) {
            (Some(p), Some(run)) if p.succ_opt() == Some(*date) => run.extend_from_slice(pattern.bits()),
            _ => runs.push(pattern.bits().to_vec()),
        }
        prev = Some(*date);
    }
    runs
}

/// How the predictor's output becomes a decision.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecisionRule {
    /// Transmit iff P(transmit) > P(silent).
    #[default]
    Argmax,
    /// Transmit with probability P(transmit), drawn from the meter's own RNG.
    Sample,
}

/// A trained defense, frozen for inference.
#[derive(Clone, Debug, PartialEq)]
pub struct DefenseModel {
    pub rate: Rate,
    pub spec: ModelSpec,
    pub params: Params,
    pub rule: DecisionRule,
}

impl DefenseModel {
    pub fn new(rate: Rate, params: Params, rule: DecisionRule) -> Result<Self> {
        let spec = build_defense(rate);
        params.check(&spec)?;
        Ok(Self { rate, spec, params, rule })
    }

    pub fn window(&self) -> usize {
        self.spec.input_length
    }
}

pub fn train_defense(
    rate: Rate,
    data: &WindowDataset,
    rows: Option<&[usize]>,
    config: &TrainConfig,
) -> Result<(Params, Vec<EpochStats>)> {
    let spec = build_defense(rate);
    if data.n != spec.input_length {
        return Err(CoreError::Argument(format!(
            "windows of {} bits, model expects {}",
            data.n, spec.input_length
        )));
    }
    let ds = data.to_dataset(rows)?;
    if ds.is_empty() {
        return Err(CoreError::Data("no training windows".into()));
    }
    Ok(train(&spec, &ds, config)?)
}

/// The last `n` transmission decisions of one meter.
#[derive(Clone, Debug)]
pub struct DefenseState {
    n: usize,
    memory: VecDeque<u8>,
    rng: ChaCha8Rng,
}

impl DefenseState {
    /// Empty memory; call [`DefenseState::prefill`] before deciding.
    pub fn new(n: usize, seed: u64) -> Self {
        Self { n, memory: VecDeque::with_capacity(n), rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// Loads the last `n` of `history`; shorter histories are left-padded
    /// with zeros.
    pub fn prefill(&mut self, history: &[u8]) {
        self.memory.clear();
        let take = history.len().min(self.n);
        self.memory.extend(std::iter::repeat(0).take(self.n - take));
        self.memory.extend(&history[history.len() - take..]);
    }

    pub fn is_ready(&self) -> bool {
        self.memory.len() == self.n
    }

    pub fn capacity(&self) -> usize {
        self.n
    }

    /// Appends a decision, evicting the oldest.
    pub fn push(&mut self, bit: u8) {
        if self.memory.len() == self.n {
            self.memory.pop_front();
        }
        self.memory.push_back(bit.min(1));
    }

    pub fn memory(&self) -> Vec<u8> {
        self.memory.iter().copied().collect()
    }
}

/// One forward pass per state; returns a bit per state.
pub fn decide_batch(model: &DefenseModel, states: &mut [&mut DefenseState]) -> Result<Vec<u8>> {
    if states.is_empty() {
        return Ok(Vec::new());
    }
    let n = model.window();
    let mut data = Vec::with_capacity(states.len() * n);
    for s in states.iter() {
        if !s.is_ready() || s.n != n {
            return Err(CoreError::State(format!(
                "defense memory holds {} of {n} decisions",
                s.memory.len()
            )));
        }
        data.extend(s.memory.iter().map(|&b| b as f64));
    }
    let probs = predict(&model.spec, &model.params, &Tensor::new(vec![states.len(), n, 1], data)?)?;
    Ok(states
        .iter_mut()
        .enumerate()
        .map(|(i, s)| {
            let p = probs.row(i);
            match model.rule {
                DecisionRule::Argmax => (p[1] > p[0]) as u8,
                DecisionRule::Sample => (s.rng.gen::<f64>() < p[1]) as u8,
            }
        })
        .collect())
}

/// Queries the defense for the states whose `ask` flag is set, in one batch.
/// Entries not asked get 0.
pub fn decide_masked<'a>(
    model: &DefenseModel,
    states: impl IntoIterator<Item = &'a mut DefenseState>,
    ask: &[bool],
) -> Result<Vec<u8>> {
    let mut refs: Vec<&mut DefenseState> =
        states.into_iter().zip(ask).filter_map(|(s, &a)| a.then_some(s)).collect();
    let mut bits = decide_batch(model, &mut refs)?.into_iter();
    Ok(ask.iter().map(|&a| if a { bits.next().unwrap_or(0) } else { 0 }).collect())
}

pub fn defense_decide(state: &mut DefenseState, model: &DefenseModel) -> Result<u8> {
    Ok(decide_batch(model, &mut [state])?[0])
}

/// Per-meter reporting state shared by the simulators.
#[derive(Clone, Debug)]
pub struct MeterState {
    pub last_reported: Option<f64>,
    pub defense: DefenseState,
}

/// What a meter does in one slot before the defense is consulted.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SlotPlan {
    /// CAT fires: send the reading.
    Cat,
    /// Home empty, CAT silent: ask the defense.
    AskDefense,
    Silent,
}

impl MeterState {
    pub fn new(window: usize, seed: u64, history: &[u8]) -> Self {
        let mut defense = DefenseState::new(window, seed);
        defense.prefill(history);
        Self { last_reported: None, defense }
    }

    pub fn plan(&self, reading: f64, presence: PresenceLabel, threshold: f64, defense_on: bool) -> SlotPlan {
        let fires = self.last_reported.map_or(true, |l| cat_decide(reading, l, threshold));
        if fires {
            SlotPlan::Cat
        } else if defense_on && presence == PresenceLabel::Absent {
            SlotPlan::AskDefense
        } else {
            SlotPlan::Silent
        }
    }

    /// Records the slot's decision. Any transmission, spoofed or not, carries
    /// the current reading and becomes the new baseline.
    pub fn commit(&mut self, reading: f64, transmit: bool) -> f64 {
        if transmit {
            self.last_reported = Some(reading);
        }
        self.defense.push(transmit as u8);
        self.last_reported.unwrap_or(0.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DayOutcome {
    pub pattern: TransmissionPattern,
    pub eu_view: EuView,
    /// Transmissions added by the defense.
    pub spoofed: usize,
}

/// Runs one day for one meter (see [`simulate_meters`] for many at once).
pub fn simulate_day(
    day: &DayRecord,
    presence: PresenceLabel,
    cat: &CatConfig,
    defense: Option<&DefenseModel>,
    meter: &mut MeterState,
) -> Result<DayOutcome> {
    let mut bits = Vec::with_capacity(day.readings.len());
    let mut values = Vec::with_capacity(day.readings.len());
    let mut spoofed = 0;
    for &m in &day.readings {
        let send = match meter.plan(m, presence, cat.threshold_percent, defense.is_some()) {
            SlotPlan::Cat => true,
            SlotPlan::Silent => false,
            SlotPlan::AskDefense => {
                let model = defense.expect("planned only with a defense");
                let bit = defense_decide(&mut meter.defense, model)? == 1;
                spoofed += bit as usize;
                bit
            }
        };
        values.push(meter.commit(m, send));
        bits.push(send as u8);
    }
    Ok(DayOutcome { pattern: TransmissionPattern::new(bits)?, eu_view: EuView { values }, spoofed })
}

/// One meter's days, in date order, plus its memory bootstrap.
#[derive(Clone, Debug)]
pub struct MeterTimeline {
    pub days: Vec<DayRecord>,
    pub presence: Vec<PresenceLabel>,
    /// Decisions preceding the first day (most recent last).
    pub history: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeterRun {
    pub consumer_id: String,
    pub days: Vec<DayOutcome>,
}

/// Simulates all meters slot by slot, batching defense queries across meters.
pub fn simulate_meters(
    meters: &[MeterTimeline],
    cat: &CatConfig,
    defense: Option<&DefenseModel>,
    seed: u64,
) -> Result<Vec<MeterRun>> {
    let window = defense.map_or(1, DefenseModel::window);
    let mut states: Vec<MeterState> = meters
        .iter()
        .enumerate()
        .map(|(i, m)| MeterState::new(window, seed.wrapping_add(i as u64), &m.history))
        .collect();
    let mut runs: Vec<MeterRun> = meters
        .iter()
        .map(|m| MeterRun { consumer_id: m.days.first().map(|d| d.consumer_id.clone()).unwrap_or_default(), days: Vec::new() })
        .collect();
    for m in meters {
        if m.days.len() != m.presence.len() {
            return Err(CoreError::Argument("one presence label per day required".into()));
        }
        if let Some(d) = m.days.iter().find(|d| d.granularity_minutes != cat.granularity_minutes) {
            return Err(CoreError::Argument(format!("{} on {} is not at the CAT granularity", d.consumer_id, d.date)));
        }
    }
    let max_days = meters.iter().map(|m| m.days.len()).max().unwrap_or(0);
    let slots = (1440 / cat.granularity_minutes) as usize;
    for d in 0..max_days {
        let active: Vec<usize> = (0..meters.len()).filter(|&i| d < meters[i].days.len()).collect();
        let mut bits = vec![vec![0u8; slots]; meters.len()];
        let mut values = vec![vec![0f64; slots]; meters.len()];
        let mut spoofed = vec![0usize; meters.len()];
        for t in 0..slots {
            let mut plans = Vec::with_capacity(active.len());
            for &i in &active {
                let m = meters[i].days[d].readings[t];
                plans.push(states[i].plan(m, meters[i].presence[d], cat.threshold_percent, defense.is_some()));
            }
            let mut ask = vec![false; meters.len()];
            for (&i, p) in active.iter().zip(&plans) {
                ask[i] = *p == SlotPlan::AskDefense;
            }
            let answers = match defense {
                Some(model) => decide_masked(model, states.iter_mut().map(|s| &mut s.defense), &ask)?,
                None => vec![0; meters.len()],
            };
            for (&i, plan) in active.iter().zip(&plans) {
                let send = match plan {
                    SlotPlan::Cat => true,
                    SlotPlan::Silent => false,
                    SlotPlan::AskDefense => {
                        spoofed[i] += answers[i] as usize;
                        answers[i] == 1
                    }
                };
                values[i][t] = states[i].commit(meters[i].days[d].readings[t], send);
                bits[i][t] = send as u8;
            }
        }
        for &i in &active {
            runs[i].days.push(DayOutcome {
                pattern: TransmissionPattern::new(std::mem::take(&mut bits[i]))?,
                eu_view: EuView { values: std::mem::take(&mut values[i]) },
                spoofed: spoofed[i],
            });
        }
    }
    Ok(runs)
}

/// Memory bootstrap: the tail of the first occupied-day pattern, or zeros.
pub fn bootstrap_history(patterns: &[(PresenceLabel, &TransmissionPattern)], n: usize) -> Vec<u8> {
    match patterns.iter().find(|(l, _)| *l == PresenceLabel::Present) {
        Some((_, p)) => {
            let bits = p.bits();
            bits[bits.len().saturating_sub(n)..].to_vec()
        }
        None => {
            warn!("no occupied day to seed defense memory; starting from silence");
            vec![0; n]
        }
    }
}

/// One transcript line per (consumer, day).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranscriptLine {
    pub consumer: String,
    pub date: NaiveDate,
    pub bits: String,
    pub count: usize,
    pub presence: PresenceLabel,
    pub defense: bool,
}

pub fn write_transcript<W: Write>(lines: &[TranscriptLine], mut w: W) -> Result<()> {
    for l in lines {
        serde_json::to_writer(&mut w, l)?;
        w.write_all(b"\n").map_err(|e| CoreError::io("<transcript>", e))?;
    }
    Ok(())
}

pub fn transcript_lines(meters: &[MeterTimeline], runs: &[MeterRun], defense: bool) -> Vec<TranscriptLine> {
    meters
        .iter()
        .zip(runs)
        .flat_map(|(m, r)| {
            m.days.iter().zip(&m.presence).zip(&r.days).map(move |((d, &p), o)| TranscriptLine {
                consumer: d.consumer_id.clone(),
                date: d.date,
                bits: o.pattern.bits().iter().map(|b| char::from(b'0' + b)).collect(),
                count: o.pattern.count(),
                presence: p,
                defense,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cat::apply_cat;
    use amiguard_nn::LayerSpec;

    #[test]
    fn specs_follow_the_table() {
        let d5 = build_defense(Rate::Per5Min);
        let d30 = build_defense(Rate::Per30Min);
        assert_eq!(d5.input_length, 100);
        assert_eq!(d30.input_length, 35);
        let filters: Vec<usize> = d30.layers.iter().filter_map(|l| match l { LayerSpec::Conv1d { filters, .. } => Some(*filters), _ => None }).collect();
        assert_eq!(filters, vec![128, 64, 32]);
        assert!(d5.layers.contains(&LayerSpec::Gru { units: 200 }));
        for s in [&d5, &d30] {
            s.validate().unwrap();
            assert_eq!(s.output_classes, 2);
            assert_eq!(s.final_activation(), Some(Act::Softmax));
        }
    }

    #[test]
    fn window_enumeration() {
        let ds = build_window_dataset(&[vec![1, 0, 1, 1]], 2).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!((ds.window(0), ds.labels[0]), (&[1u8, 0][..], 1));
        assert_eq!((ds.window(1), ds.labels[1]), (&[0u8, 1][..], 1));
        let zeros = build_window_dataset(&[vec![0; 50]], 10).unwrap();
        assert!(zeros.labels.iter().all(|&b| b == 0));
        let days: Vec<Vec<u8>> = vec![vec![0; 288]; 10];
        assert_eq!(build_window_dataset(&days, 100).unwrap().len(), 1880);
        let short = build_window_dataset(&[vec![1; 3], vec![1; 4]], 3).unwrap();
        assert_eq!((short.len(), short.skipped), (1, 1));
    }

    #[test]
    fn runs_break_on_absence_and_gaps() {
        let p = TransmissionPattern::new(vec![1, 0]).unwrap();
        let d = |i| NaiveDate::from_ymd_opt(2016, 1, i).unwrap();
        let runs = present_runs(&[
            (d(1), PresenceLabel::Present, &p),
            (d(2), PresenceLabel::Present, &p),
            (d(3), PresenceLabel::Absent, &p),
            (d(4), PresenceLabel::Present, &p),
            (d(6), PresenceLabel::Present, &p),
        ]);
        assert_eq!(runs, vec![vec![1, 0, 1, 0], vec![1, 0], vec![1, 0]]);
    }

    #[test]
    fn ring_buffer_keeps_exactly_n() {
        let mut s = DefenseState::new(3, 0);
        assert!(!s.is_ready());
        s.prefill(&[1, 1, 0, 1]);
        assert_eq!(s.memory(), vec![1, 0, 1]);
        s.push(0);
        assert_eq!(s.memory(), vec![0, 1, 0]);
        s.prefill(&[1]);
        assert_eq!(s.memory(), vec![0, 0, 1]);
    }

    fn tiny_model(rate: Rate, seed: u64) -> DefenseModel {
        let spec = build_defense(rate);
        DefenseModel::new(rate, Params::init(&spec, seed).unwrap(), DecisionRule::Argmax).unwrap()
    }

    #[test]
    fn uninitialised_memory_is_an_error() {
        let model = tiny_model(Rate::Per30Min, 1);
        let mut s = DefenseState::new(35, 0);
        assert!(matches!(defense_decide(&mut s, &model), Err(CoreError::State(_))));
        s.prefill(&[1; 35]);
        let a = defense_decide(&mut s, &model).unwrap();
        assert!(a <= 1);
        assert_eq!(defense_decide(&mut s, &model).unwrap(), a);
    }

    fn day30(readings: Vec<f64>) -> DayRecord {
        DayRecord::new("m", NaiveDate::from_ymd_opt(2016, 1, 1).unwrap(), 30, readings).unwrap()
    }

    #[test]
    fn present_day_matches_plain_cat() {
        let model = tiny_model(Rate::Per30Min, 2);
        let day = day30((0..48).map(|i| 1.0 + (i % 5) as f64 * 0.3).collect());
        let cat = CatConfig::new(10.0, 30).unwrap();
        let mut meter = MeterState::new(35, 0, &[1; 35]);
        let out = simulate_day(&day, PresenceLabel::Present, &cat, Some(&model), &mut meter).unwrap();
        let (p, v, _) = apply_cat(&day, &cat, None).unwrap();
        assert_eq!(out.pattern, p);
        assert_eq!(out.eu_view, v);
        assert_eq!(out.spoofed, 0);
        assert_eq!(meter.defense.memory().len(), 35);
    }

    #[test]
    fn absent_without_defense_is_plain_cat() {
        let day = day30(vec![1.0; 48]);
        let cat = CatConfig::new(10.0, 30).unwrap();
        let mut meter = MeterState::new(35, 0, &[]);
        let out = simulate_day(&day, PresenceLabel::Absent, &cat, None, &mut meter).unwrap();
        assert_eq!(out.pattern.count(), 1);
    }

    #[test]
    fn batched_and_single_meter_simulations_agree() {
        let model = tiny_model(Rate::Per30Min, 3);
        let cat = CatConfig::new(10.0, 30).unwrap();
        let mk = |k: usize| MeterTimeline {
            days: (0..2).map(|d| day30((0..48).map(|i| 1.0 + ((i * (k + 1) + d) % 7) as f64 * 0.05).collect())).collect(),
            presence: vec![PresenceLabel::Absent, PresenceLabel::Present],
            history: vec![(k % 2) as u8; 35],
        };
        let meters: Vec<MeterTimeline> = (0..3).map(mk).collect();
        let runs = simulate_meters(&meters, &cat, Some(&model), 5).unwrap();
        for (i, m) in meters.iter().enumerate() {
            let mut st = MeterState::new(35, 5 + i as u64, &m.history);
            for (d, day) in m.days.iter().enumerate() {
                let out = simulate_day(day, m.presence[d], &cat, Some(&model), &mut st).unwrap();
                assert_eq!(out, runs[i].days[d]);
            }
        }
    }

    #[test]
    fn cat_bound_holds_with_defense_active() {
        let model = DefenseModel { rule: DecisionRule::Sample, ..tiny_model(Rate::Per30Min, 4) };
        let cat = CatConfig::new(10.0, 30).unwrap();
        let readings: Vec<f64> = (0..48).map(|i| 1.0 + ((i * 7) % 11) as f64 * 0.04).collect();
        let mut meter = MeterState::new(35, 9, &[1; 35]);
        let out = simulate_day(&day30(readings.clone()), PresenceLabel::Absent, &cat, Some(&model), &mut meter).unwrap();
        for (t, &m) in readings.iter().enumerate() {
            let v = out.eu_view.values[t];
            assert!((m - v).abs() <= 0.1 * v + 1e-12);
            if out.pattern.bits()[t] == 1 {
                assert_eq!(v, m);
            }
        }
    }
}

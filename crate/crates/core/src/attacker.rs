//! The eavesdropper: CNN classifiers over daily transmission patterns, and
//! the SR / FA / ROC metrics used to score them.

use std::io::Write;

use amiguard_nn::{
    predict, train, ActivationKind as Act, Dataset, EpochStats, LayerSpec as L, ModelSpec, Params, Tensor, TrainConfig,
};
use log::warn;
use serde::{Deserialize, Serialize};

use crate::cat::TransmissionPattern;
use crate::error::{CoreError, Result};
use crate::Rate;

/// Class indices shared by both attacker variants.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackClass {
    Present = 0,
    Absent = 1,
    Spoofing = 2,
}

impl AttackClass {
    pub fn index(self) -> usize {
        self as usize
    }
}

fn conv(filters: usize, act: Act) -> [L; 2] {
    [L::Conv1d { filters, kernel_size: KERNEL_SIZE }, L::Activation { kind: act }]
}

fn dense(units: usize, act: Act) -> [L; 2] {
    [L::Dense { units }, L::Activation { kind: act }]
}

/// Convolution width; the architecture tables list filter counts only.
pub const KERNEL_SIZE: usize = 3;

/// Two-class attacker.
pub fn build_attacker(rate: Rate) -> ModelSpec {
    let layers: Vec<L> = match rate {
        Rate::Per5Min => [
            conv(150, Act::Elu),
            conv(85, Act::Relu),
            conv(45, Act::Relu),
            conv(25, Act::Relu),
        ]
        .concat()
        .into_iter()
        .chain([L::MaxPool1d { pool_size: 2 }, L::Flatten])
        .chain([dense(512, Act::Elu), dense(512, Act::Relu), dense(128, Act::Sigmoid), dense(64, Act::Elu), dense(2, Act::Softmax)].concat())
        .collect(),
        Rate::Per30Min => [conv(80, Act::Relu), conv(32, Act::Relu), conv(20, Act::Elu)]
            .concat()
            .into_iter()
            .chain([L::MaxPool1d { pool_size: 2 }, L::Flatten])
            .chain([dense(256, Act::Elu), dense(512, Act::Sigmoid), dense(64, Act::Elu), dense(64, Act::Relu), dense(2, Act::Sigmoid)].concat())
            .collect(),
    };
    ModelSpec { input_length: rate.slots_per_day(), input_channels: 1, layers, output_classes: 2 }
}

/// Three-class attacker that knows the defense exists.
pub fn build_threeclass(rate: Rate) -> ModelSpec {
    let layers: Vec<L> = match rate {
        Rate::Per5Min => conv(150, Act::Relu)
            .into_iter()
            .chain([L::MaxPool1d { pool_size: 4 }, L::Flatten])
            .chain([dense(128, Act::Relu), dense(35, Act::Relu), dense(3, Act::Softmax)].concat())
            .collect(),
        Rate::Per30Min => conv(128, Act::Relu)
            .into_iter()
            .chain([L::MaxPool1d { pool_size: 4 }, L::Gru { units: 32 }])
            .chain([dense(64, Act::Relu), dense(32, Act::Relu), dense(3, Act::Softmax)].concat())
            .collect(),
    };
    ModelSpec { input_length: rate.slots_per_day(), input_channels: 1, layers, output_classes: 3 }
}

/// Training defaults: 60 epochs, batch 128, learning rate 1e-3.
pub fn default_train_config() -> TrainConfig {
    TrainConfig { epochs: 60, batch_size: 128, learning_rate: 1e-3, ..TrainConfig::default() }
}

pub fn patterns_tensor(patterns: &[TransmissionPattern], len: usize) -> Result<Tensor> {
    if let Some(p) = patterns.iter().find(|p| p.len() != len) {
        return Err(CoreError::Data(format!("pattern of length {} where {len} expected", p.len())));
    }
    let data: Vec<f64> = patterns.iter().flat_map(|p| p.bits().iter().map(|&b| b as f64)).collect();
    Ok(Tensor::new(vec![patterns.len(), len, 1], data)?)
}

pub fn to_dataset(spec: &ModelSpec, patterns: &[TransmissionPattern], labels: &[AttackClass]) -> Result<Dataset> {
    if patterns.len() != labels.len() {
        return Err(CoreError::Argument("one label per pattern required".into()));
    }
    let inputs = patterns_tensor(patterns, spec.input_length)?;
    Ok(Dataset::new(inputs, labels.iter().map(|c| c.index()).collect())?)
}

pub fn train_attacker(
    spec: &ModelSpec,
    patterns: &[TransmissionPattern],
    labels: &[AttackClass],
    config: &TrainConfig,
) -> Result<(Params, Vec<EpochStats>)> {
    let data = to_dataset(spec, patterns, labels)?;
    if data.is_empty() {
        return Err(CoreError::Data("empty training set".into()));
    }
    let mut counts = vec![0usize; spec.output_classes];
    for &l in &data.labels {
        counts[l] += 1;
    }
    let majority = *counts.iter().max().unwrap_or(&0) as f64 / data.len() as f64;
    if majority > 0.95 {
        warn!("class imbalance: majority class is {:.1}% of the training set", majority * 100.0);
    }
    Ok(train(spec, &data, config)?)
}

/// Counts over true (rows) and predicted (columns) classes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion(pub Vec<Vec<usize>>);

impl Confusion {
    pub fn new(k: usize, truth: &[usize], predicted: &[usize]) -> Self {
        let mut m = vec![vec![0; k]; k];
        for (&t, &p) in truth.iter().zip(predicted) {
            m[t][p] += 1;
        }
        Confusion(m)
    }

    pub fn total(&self) -> usize {
        self.0.iter().flatten().sum()
    }
}

/// Binary counts with "absence inferred" as the positive outcome.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl BinaryCounts {
    /// `SR = TP / (TP + FP)`; 0 with `false` when undefined.
    pub fn sr(&self) -> (f64, bool) {
        ratio(self.tp, self.tp + self.fp)
    }

    /// `FA = FP / (TN + FN)`, exactly as the scheme defines it (not the usual FPR).
    pub fn fa(&self) -> (f64, bool) {
        ratio(self.fp, self.tn + self.fn_)
    }

    /// Conventional `FP / (FP + TN)`.
    pub fn fpr(&self) -> (f64, bool) {
        ratio(self.fp, self.fp + self.tn)
    }

    /// `TP / (TP + FN)`: share of absent days the attacker catches.
    pub fn detection_rate(&self) -> (f64, bool) {
        ratio(self.tp, self.tp + self.fn_)
    }
}

fn ratio(num: usize, den: usize) -> (f64, bool) {
    if den == 0 {
        (0.0, false)
    } else {
        (num as f64 / den as f64, true)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Roc {
    /// `(fpr, tpr)` from `(0, 0)` to `(1, 1)`.
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
    /// Best true-positive rate with false-positive rate at most 0.05.
    pub sr_at_fa_005: f64,
}

impl Roc {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let fmt = |e: csv::Error| CoreError::Format(e.to_string());
        w.write_record(["fa", "sr"]).map_err(fmt)?;
        for (x, y) in &self.points {
            w.write_record([x.to_string(), y.to_string()]).map_err(fmt)?;
        }
        w.flush().map_err(|e| CoreError::io("<csv>", e))
    }
}

/// Sweeps every distinct score as a threshold (`score >= t` is positive).
pub fn roc_curve(scores: &[f64], positive: &[bool]) -> Result<Roc> {
    if scores.len() != positive.len() {
        return Err(CoreError::Argument("one label per score required".into()));
    }
    let p = positive.iter().filter(|&&b| b).count();
    let n = positive.len() - p;
    if p == 0 || n == 0 {
        return Err(CoreError::Undefined("ROC needs both positive and negative samples".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if positive[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / n as f64, tp as f64 / p as f64));
    }
    let auc = points.windows(2).map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0).sum();
    let sr_at_fa_005 = points.iter().filter(|(x, _)| *x <= 0.05).map(|(_, y)| *y).fold(0.0, f64::max);
    Ok(Roc { points, auc, sr_at_fa_005 })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub samples: usize,
    pub sr: f64,
    pub fa: f64,
    pub fpr: f64,
    pub detection_rate: f64,
    /// `None` when the evaluated set holds a single class.
    pub auc: Option<f64>,
    pub sr_at_fa_005: Option<f64>,
    pub roc_points: Vec<(f64, f64)>,
    pub confusion: Confusion,
    pub counts: BinaryCounts,
    /// Metrics whose denominator was zero (reported as 0).
    pub undefined: Vec<String>,
}

/// Scores a model. `labels` are true classes; a prediction or label counts as
/// "absence" when it is Absent or Spoofing.
pub fn evaluate(spec: &ModelSpec, params: &Params, patterns: &[TransmissionPattern], labels: &[AttackClass]) -> Result<EvalReport> {
    if patterns.is_empty() {
        return Err(CoreError::Data("empty evaluation set".into()));
    }
    let probs = predict(spec, params, &patterns_tensor(patterns, spec.input_length)?)?;
    report_from_probs(&probs, labels)
}

pub fn report_from_probs(probs: &Tensor, labels: &[AttackClass]) -> Result<EvalReport> {
    if probs.rows() != labels.len() {
        return Err(CoreError::Argument("one label per prediction required".into()));
    }
    let k = probs.row_len();
    let predicted = probs.argmax_rows();
    let truth: Vec<usize> = labels.iter().map(|c| c.index()).collect();
    if truth.iter().any(|&t| t >= k) {
        return Err(CoreError::Argument(format!("label outside the model's {k} classes")));
    }
    let absent_like = |c: usize| c != AttackClass::Present.index();
    let mut counts = BinaryCounts::default();
    for (&t, &p) in truth.iter().zip(&predicted) {
        match (absent_like(t), absent_like(p)) {
            (true, true) => counts.tp += 1,
            (false, true) => counts.fp += 1,
            (false, false) => counts.tn += 1,
            (true, false) => counts.fn_ += 1,
        }
    }
    let mut undefined = Vec::new();
    let mut metric = |name: &str, (v, ok): (f64, bool)| {
        if !ok {
            undefined.push(name.to_string());
        }
        v
    };
    let sr = metric("sr", counts.sr());
    let fa = metric("fa", counts.fa());
    let fpr = metric("fpr", counts.fpr());
    let detection_rate = metric("detection_rate", counts.detection_rate());
    // absence score: probability mass outside Present
    let scores: Vec<f64> = (0..probs.rows()).map(|i| 1.0 - probs.row(i)[0]).collect();
    let positive: Vec<bool> = truth.iter().map(|&t| absent_like(t)).collect();
    let roc = match roc_curve(&scores, &positive) {
        Ok(r) => Some(r),
        Err(CoreError::Undefined(_)) => {
            undefined.push("auc".into());
            None
        }
        Err(e) => return Err(e),
    };
    Ok(EvalReport {
        samples: labels.len(),
        sr,
        fa,
        fpr,
        detection_rate,
        auc: roc.as_ref().map(|r| r.auc),
        sr_at_fa_005: roc.as_ref().map(|r| r.sr_at_fa_005),
        roc_points: roc.map(|r| r.points).unwrap_or_default(),
        confusion: Confusion::new(k, &truth, &predicted),
        counts,
        undefined,
    })
}

/// Data for the known-defense attacker.
#[derive(Clone, Debug, Default)]
pub struct ThreeClassData {
    pub present: Vec<TransmissionPattern>,
    pub absent: Vec<TransmissionPattern>,
    pub spoofing: Vec<TransmissionPattern>,
}

impl ThreeClassData {
    pub fn flatten(&self) -> (Vec<TransmissionPattern>, Vec<AttackClass>) {
        let mut p = Vec::new();
        let mut l = Vec::new();
        for (set, class) in [
            (&self.present, AttackClass::Present),
            (&self.absent, AttackClass::Absent),
            (&self.spoofing, AttackClass::Spoofing),
        ] {
            p.extend(set.iter().cloned());
            l.extend(std::iter::repeat(class).take(set.len()));
        }
        (p, l)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnownDefenseReport {
    /// Test set: present days plus defended absent days labelled Spoofing.
    pub defended: EvalReport,
    /// Test set: present days plus undefended absent days.
    pub undefended: EvalReport,
    /// Share of present test days classified Spoofing.
    pub present_as_spoofing: f64,
    pub history: Vec<EpochStats>,
}

/// Trains the three-class model on present / absent / spoofing patterns and
/// scores it; an Absent or Spoofing verdict on an absent day is a success.
pub fn known_defense_attack(rate: Rate, train_set: &ThreeClassData, test_set: &ThreeClassData, config: &TrainConfig) -> Result<(Params, KnownDefenseReport)> {
    if train_set.spoofing.is_empty() {
        return Err(CoreError::Data("no spoofing patterns: run the defense over absent days first".into()));
    }
    let spec = build_threeclass(rate);
    let (p, l) = train_set.flatten();
    let (params, history) = train_attacker(&spec, &p, &l, config)?;
    let (defended, undefended, present_as_spoofing) = evaluate_known_defense(rate, &params, test_set)?;
    Ok((params, KnownDefenseReport { defended, undefended, present_as_spoofing, history }))
}

/// Scores a three-class model on present days mixed with (a) defended and
/// (b) undefended absent days; also returns the share of present days
/// mistaken for spoofing.
pub fn evaluate_known_defense(rate: Rate, params: &Params, test_set: &ThreeClassData) -> Result<(EvalReport, EvalReport, f64)> {
    let spec = build_threeclass(rate);
    let score = |absent_like: &[TransmissionPattern], class: AttackClass| -> Result<EvalReport> {
        let mut pats = test_set.present.clone();
        let mut labels = vec![AttackClass::Present; pats.len()];
        pats.extend(absent_like.iter().cloned());
        labels.extend(std::iter::repeat(class).take(absent_like.len()));
        evaluate(&spec, params, &pats, &labels)
    };
    let defended = score(&test_set.spoofing, AttackClass::Spoofing)?;
    let undefended = score(&test_set.absent, AttackClass::Absent)?;
    let row = &defended.confusion.0[AttackClass::Present.index()];
    let n: usize = row.iter().sum();
    let present_as_spoofing = if n == 0 { 0.0 } else { row[AttackClass::Spoofing.index()] as f64 / n as f64 };
    Ok((defended, undefended, present_as_spoofing))
}

#[cfg(test)]
mod tests {
    use super::*;
    use amiguard_nn::LayerSpec;

    #[test]
    fn attacker_specs_follow_the_tables() {
        let filters = |s: &ModelSpec| -> Vec<usize> {
            s.layers.iter().filter_map(|l| match l { LayerSpec::Conv1d { filters, .. } => Some(*filters), _ => None }).collect()
        };
        let a5 = build_attacker(Rate::Per5Min);
        let a30 = build_attacker(Rate::Per30Min);
        assert_eq!(filters(&a5), vec![150, 85, 45, 25]);
        assert_eq!(filters(&a30), vec![80, 32, 20]);
        assert_eq!((a5.input_length, a30.input_length), (288, 48));
        for s in [&a5, &a30] {
            assert_eq!(s.output_classes, 2);
            s.validate().unwrap();
        }
        assert_eq!(a5.final_activation(), Some(Act::Softmax));
        assert_eq!(a30.final_activation(), Some(Act::Sigmoid));
    }

    #[test]
    fn threeclass_specs_follow_the_table() {
        let t5 = build_threeclass(Rate::Per5Min);
        let t30 = build_threeclass(Rate::Per30Min);
        let grus = |s: &ModelSpec| s.layers.iter().filter(|l| matches!(l, LayerSpec::Gru { .. })).count();
        assert_eq!(grus(&t5), 0);
        assert_eq!(grus(&t30), 1);
        assert!(t30.layers.contains(&LayerSpec::Gru { units: 32 }));
        for s in [&t5, &t30] {
            assert_eq!(s.output_classes, 3);
            s.validate().unwrap();
        }
    }

    #[test]
    fn verbatim_formulas() {
        let c = BinaryCounts { tp: 9, fp: 1, tn: 10, fn_: 0 };
        assert_eq!(c.sr(), (0.9, true));
        assert_eq!(c.fa(), (0.1, true));
        assert!((c.fpr().0 - 1.0 / 11.0).abs() < 1e-15);
        assert_eq!(BinaryCounts::default().sr(), (0.0, false));
    }

    fn probs(rows: &[[f64; 2]]) -> Tensor {
        Tensor::from_rows(rows).unwrap()
    }

    #[test]
    fn perfect_and_chance_classifiers() {
        let labels = [AttackClass::Absent, AttackClass::Absent, AttackClass::Present, AttackClass::Present];
        let r = report_from_probs(&probs(&[[0.1, 0.9], [0.2, 0.8], [0.9, 0.1], [0.8, 0.2]]), &labels).unwrap();
        assert_eq!((r.sr, r.fa, r.auc), (1.0, 0.0, Some(1.0)));
        assert_eq!(r.confusion.total(), 4);
        let flat = report_from_probs(&probs(&[[0.5, 0.5]; 4]), &labels).unwrap();
        assert_eq!(flat.auc, Some(0.5));
        let single = report_from_probs(&probs(&[[0.1, 0.9]]), &labels[..1]).unwrap();
        assert_eq!(single.auc, None);
        assert!(single.undefined.contains(&"auc".to_string()));
    }

    #[test]
    fn roc_examples() {
        let r = roc_curve(&[0.9, 0.8, 0.1, 0.2], &[true, true, false, false]).unwrap();
        assert_eq!(r.auc, 1.0);
        assert_eq!(r.points.first(), Some(&(0.0, 0.0)));
        assert_eq!(r.points.last(), Some(&(1.0, 1.0)));
        let inv = roc_curve(&[0.9, 0.8, 0.1, 0.2], &[false, false, true, true]).unwrap();
        assert_eq!(inv.auc, 0.0);
        assert!(roc_curve(&[0.1, 0.2], &[true, true]).is_err());
    }

    #[test]
    fn random_scores_are_near_chance() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let scores: Vec<f64> = (0..1000).map(|_| rng.gen()).collect();
        let labels: Vec<bool> = (0..1000).map(|_| rng.gen()).collect();
        let auc = roc_curve(&scores, &labels).unwrap().auc;
        assert!((0.45..=0.55).contains(&auc), "auc {auc}");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn auc_invariant_under_monotone_maps(raw in proptest::collection::vec((0.0f64..1.0, any::<bool>()), 2..60)) {
                let scores: Vec<f64> = raw.iter().map(|r| r.0).collect();
                let labels: Vec<bool> = raw.iter().map(|r| r.1).collect();
                prop_assume!(labels.iter().any(|&b| b) && labels.iter().any(|&b| !b));
                let a = roc_curve(&scores, &labels).unwrap();
                let mapped: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() + 1.0).collect();
                let b = roc_curve(&mapped, &labels).unwrap();
                prop_assert!((a.auc - b.auc).abs() < 1e-12);
                let flipped: Vec<bool> = labels.iter().map(|b| !b).collect();
                let c = roc_curve(&scores, &flipped).unwrap();
                prop_assert!((a.auc + c.auc - 1.0).abs() < 1e-12);
                for w in a.points.windows(2) {
                    prop_assert!(w[1].0 >= w[0].0 && w[1].1 >= w[0].1);
                }
            }

            #[test]
            fn confusion_sums_to_sample_count(rows in proptest::collection::vec((0.0f64..1.0, any::<bool>()), 1..50)) {
                let p: Vec<[f64; 2]> = rows.iter().map(|r| [1.0 - r.0, r.0]).collect();
                let labels: Vec<AttackClass> = rows.iter().map(|r| if r.1 { AttackClass::Absent } else { AttackClass::Present }).collect();
                let rep = report_from_probs(&probs(&p), &labels).unwrap();
                prop_assert_eq!(rep.confusion.total(), rows.len());
                let c = rep.counts;
                prop_assert_eq!(c.tp + c.fp + c.tn + c.fn_, rows.len());
                if c.tp + c.fp > 0 { prop_assert_eq!(rep.sr, c.tp as f64 / (c.tp + c.fp) as f64); }
                if c.tn + c.fn_ > 0 { prop_assert_eq!(rep.fa, c.fp as f64 / (c.tn + c.fn_) as f64); }
            }
        }
    }
}

//! Two-vote absence labeling: a k-means vote on per-day features and a
//! periods-score vote; a day is Absent only if both agree.

use serde::{Deserialize, Serialize};

use super::dataset::LabeledDataset;
use super::kmeans::kmeans;
use super::trace::{periods_score, ConsumptionTrace, DayRecord, PresenceLabel};
use crate::cat::TransmissionPattern;
use crate::error::{CoreError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelConfig {
    /// Days scoring at or below this are absence candidates.
    pub tau_p: f64,
    pub seed: u64,
    pub max_iter: usize,
}

impl Default for LabelConfig {
    fn default() -> Self {
        Self { tau_p: 0.4, seed: 42, max_iter: 100 }
    }
}

/// `[transmission count, reading std, total kWh]`.
pub fn day_features(day: &DayRecord, pattern: &TransmissionPattern) -> [f64; 3] {
    let n = day.readings.len() as f64;
    let total = day.total();
    let mean = total / n;
    let var = day.readings.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    [pattern.count() as f64, var.sqrt(), total]
}

fn z_normalize(rows: &mut [Vec<f64>]) {
    let n = rows.len() as f64;
    for d in 0..rows[0].len() {
        let mean = rows.iter().map(|r| r[d]).sum::<f64>() / n;
        let std = (rows.iter().map(|r| (r[d] - mean).powi(2)).sum::<f64>() / n).sqrt();
        for r in rows.iter_mut() {
            r[d] = if std > 0.0 { (r[d] - mean) / std } else { 0.0 };
        }
    }
}

/// Absent iff the day sits in the low-transmission cluster and its periods
/// score is at most `tau_p` (a degenerate day counts as a low score).
pub fn combine_votes(in_low_cluster: bool, score: &Result<f64>, tau_p: f64) -> PresenceLabel {
    let flat = match score {
        Ok(s) => *s <= tau_p,
        Err(CoreError::DegenerateDay(_)) => true,
        Err(_) => false,
    };
    if in_low_cluster && flat {
        PresenceLabel::Absent
    } else {
        PresenceLabel::Present
    }
}

/// Labels one consumer's consecutive days.
pub fn label_consumer(days: &[DayRecord], patterns: &[TransmissionPattern], cfg: &LabelConfig) -> Result<Vec<PresenceLabel>> {
    if days.len() != patterns.len() {
        return Err(CoreError::Argument(format!(
            "{} days but {} transmission patterns",
            days.len(),
            patterns.len()
        )));
    }
    if days.len() < 2 {
        return Ok(vec![PresenceLabel::Present; days.len()]);
    }
    let mut feats: Vec<Vec<f64>> = days.iter().zip(patterns).map(|(d, p)| day_features(d, p).to_vec()).collect();
    let counts: Vec<f64> = feats.iter().map(|f| f[0]).collect();
    z_normalize(&mut feats);
    let km = kmeans(&feats, 2, cfg.seed, cfg.max_iter)?;
    let mean_count = |j: usize| {
        let members: Vec<f64> = counts.iter().zip(&km.assignments).filter(|(_, &a)| a == j).map(|(c, _)| *c).collect();
        if members.is_empty() {
            f64::INFINITY
        } else {
            members.iter().sum::<f64>() / members.len() as f64
        }
    };
    let low = if mean_count(0) <= mean_count(1) { 0 } else { 1 };
    Ok(days
        .iter()
        .zip(&km.assignments)
        .map(|(d, &a)| combine_votes(a == low, &periods_score(d), cfg.tau_p))
        .collect())
}

/// Labels every day of every trace and assigns the train/test split.
/// `patterns[i][d]` is the CAT pattern of day `d` of `traces[i]`.
pub fn label_days(
    traces: &[ConsumptionTrace],
    patterns: &[Vec<TransmissionPattern>],
    cfg: &LabelConfig,
    split_seed: u64,
) -> Result<LabeledDataset> {
    if traces.len() != patterns.len() {
        return Err(CoreError::Argument("one pattern list per trace required".into()));
    }
    let mut out = Vec::new();
    for (t, p) in traces.iter().zip(patterns) {
        let days = t.days();
        let labels = label_consumer(&days, p, cfg)?;
        out.extend(days.into_iter().zip(labels));
    }
    Ok(LabeledDataset::from_labeled_days(out, split_seed))
}

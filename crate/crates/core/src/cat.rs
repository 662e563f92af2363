//! Change-and-transmit: a meter reports only when its reading moves by more
//! than a threshold relative to the last reported value.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::{resample, ConsumptionTrace, DayRecord, SUPPORTED_GRANULARITIES};
use crate::error::{CoreError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CatConfig {
    pub threshold_percent: f64,
    pub granularity_minutes: u32,
}

impl CatConfig {
    pub fn new(threshold_percent: f64, granularity_minutes: u32) -> Result<Self> {
        let c = Self { threshold_percent, granularity_minutes };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.threshold_percent > 0.0 && self.threshold_percent < 100.0) {
            return Err(CoreError::Config(format!(
                "threshold {}% outside (0, 100)",
                self.threshold_percent
            )));
        }
        if !SUPPORTED_GRANULARITIES.contains(&self.granularity_minutes) {
            return Err(CoreError::Config(format!("granularity {} min unsupported", self.granularity_minutes)));
        }
        Ok(())
    }
}

/// One day of transmit (1) / silent (0) decisions.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TransmissionPattern {
    bits: Vec<u8>,
}

impl TransmissionPattern {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if bits.iter().any(|&b| b > 1) {
            return Err(CoreError::Data("pattern bits must be 0 or 1".into()));
        }
        Ok(Self { bits })
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn count(&self) -> usize {
        self.bits.iter().map(|&b| b as usize).sum()
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.bits.iter().map(|&b| b as f64).collect()
    }
}

/// The readings the utility holds: the last transmitted value, carried forward.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EuView {
    pub values: Vec<f64>,
}

/// True iff the relative change exceeds the threshold strictly. From a zero
/// baseline any positive reading is a change.
pub fn cat_decide(current: f64, last_reported: f64, threshold_percent: f64) -> bool {
    if last_reported == 0.0 {
        return current > 0.0;
    }
    (current - last_reported).abs() / last_reported * 100.0 > threshold_percent
}

/// Runs CAT over one day. With no prior report the first slot always
/// transmits. Returns the final last-reported value for chaining days.
pub fn apply_cat(day: &DayRecord, cfg: &CatConfig, initial_last: Option<f64>) -> Result<(TransmissionPattern, EuView, f64)> {
    if day.granularity_minutes != cfg.granularity_minutes {
        return Err(CoreError::Argument(format!(
            "day at {} min, CAT configured for {} min",
            day.granularity_minutes, cfg.granularity_minutes
        )));
    }
    let (bits, values, last) = cat_series(&day.readings, cfg.threshold_percent, initial_last);
    Ok((TransmissionPattern { bits }, EuView { values }, last))
}

pub(crate) fn cat_series(readings: &[f64], threshold: f64, initial_last: Option<f64>) -> (Vec<u8>, Vec<f64>, f64) {
    let mut last = initial_last;
    let mut bits = Vec::with_capacity(readings.len());
    let mut values = Vec::with_capacity(readings.len());
    for &m in readings {
        let send = match last {
            None => true,
            Some(l) => cat_decide(m, l, threshold),
        };
        if send {
            last = Some(m);
        }
        bits.push(send as u8);
        values.push(last.expect("set by the first slot"));
    }
    (bits, values, last.unwrap_or(0.0))
}

/// CAT over a whole trace with state carried across midnight.
pub fn cat_trace(trace: &ConsumptionTrace, threshold_percent: f64) -> Vec<(TransmissionPattern, EuView)> {
    let n = trace.slots_per_day();
    let (bits, values, _) = cat_series(&trace.readings, threshold_percent, None);
    bits.chunks(n)
        .zip(values.chunks(n))
        .map(|(b, v)| (TransmissionPattern { bits: b.to_vec() }, EuView { values: v.to_vec() }))
        .collect()
}

/// `(P - R) / P * 100`: share of periodic readings that were not sent.
pub fn efficiency(periodic: usize, transmitted: usize) -> Result<f64> {
    if periodic == 0 || transmitted > periodic {
        return Err(CoreError::Argument(format!(
            "efficiency needs 0 <= R <= P and P > 0 (P={periodic}, R={transmitted})"
        )));
    }
    Ok((periodic - transmitted) as f64 / periodic as f64 * 100.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyCell {
    pub threshold: f64,
    pub rate: u32,
    pub efficiency: f64,
}

/// Efficiency over all consumers and days, for every (rate, threshold) pair.
/// Rates are in minutes; traces must be at 1-minute granularity.
pub fn efficiency_table(traces: &[ConsumptionTrace], thresholds: &[f64], rates: &[u32]) -> Result<Vec<EfficiencyCell>> {
    if let Some(t) = traces.iter().find(|t| t.granularity_minutes != 1) {
        return Err(CoreError::Argument(format!(
            "efficiency table needs 1-min traces; {} is at {} min",
            t.consumer_id, t.granularity_minutes
        )));
    }
    let mut cells = Vec::new();
    for &rate in rates {
        let resampled: Vec<ConsumptionTrace> = traces.iter().map(|t| resample(t, rate)).collect::<Result<_>>()?;
        let periodic: usize = resampled.iter().map(|t| t.readings.len()).sum();
        for &threshold in thresholds {
            CatConfig::new(threshold, rate)?;
            let sent: usize = resampled
                .iter()
                .map(|t| cat_series(&t.readings, threshold, None).0.iter().map(|&b| b as usize).sum::<usize>())
                .sum();
            cells.push(EfficiencyCell { threshold, rate, efficiency: efficiency(periodic, sent)? });
        }
    }
    Ok(cells)
}

pub fn write_efficiency_csv<W: Write>(cells: &[EfficiencyCell], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for c in cells {
        w.serialize(c).map_err(|e| CoreError::Format(e.to_string()))?;
    }
    w.flush().map_err(|e| CoreError::io("<csv>", e))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorCdf {
    /// `(error_percent, cumulative_probability)`, one point per distinct error.
    pub points: Vec<(f64, f64)>,
    /// Signed per-slot errors in percent.
    pub errors: Vec<f64>,
    /// Slots with a zero true aggregate.
    pub skipped: usize,
}

impl ErrorCdf {
    /// Nearest-rank percentile of `|error|`, `q` in (0, 100].
    pub fn abs_percentile(&self, q: f64) -> Option<f64> {
        if self.errors.is_empty() {
            return None;
        }
        let mut abs: Vec<f64> = self.errors.iter().map(|e| e.abs()).collect();
        abs.sort_by(f64::total_cmp);
        let rank = ((q / 100.0) * abs.len() as f64).ceil().max(1.0) as usize;
        Some(abs[rank.min(abs.len()) - 1])
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let fmt = |e: csv::Error| CoreError::Format(e.to_string());
        w.write_record(["error_percent", "cdf"]).map_err(fmt)?;
        for (e, p) in &self.points {
            w.write_record([e.to_string(), p.to_string()]).map_err(fmt)?;
        }
        w.flush().map_err(|e| CoreError::io("<csv>", e))
    }
}

/// Per-slot `(sum m_SM - sum m_EU) / sum m_SM * 100` and its empirical CDF.
/// `truth[i]` and `eu[i]` are meter `i`'s aligned series.
pub fn aggregate_error_cdf(truth: &[Vec<f64>], eu: &[Vec<f64>]) -> Result<ErrorCdf> {
    if truth.len() != eu.len() || truth.is_empty() {
        return Err(CoreError::Argument("need matching, non-empty meter sets".into()));
    }
    let slots = truth[0].len();
    if truth.iter().chain(eu).any(|s| s.len() != slots) {
        return Err(CoreError::Argument("all series must have the same length".into()));
    }
    let mut errors = Vec::with_capacity(slots);
    let mut skipped = 0;
    for t in 0..slots {
        let sm: f64 = truth.iter().map(|s| s[t]).sum();
        let view: f64 = eu.iter().map(|s| s[t]).sum();
        if sm == 0.0 {
            skipped += 1;
            continue;
        }
        errors.push((sm - view) / sm * 100.0);
    }
    let mut sorted = errors.clone();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut points: Vec<(f64, f64)> = Vec::new();
    for (i, e) in sorted.iter().enumerate() {
        let p = (i + 1) as f64 / n;
        match points.last_mut() {
            Some(last) if last.0 == *e => last.1 = p,
            _ => points.push((*e, p)),
        }
    }
    Ok(ErrorCdf { points, errors, skipped })
}

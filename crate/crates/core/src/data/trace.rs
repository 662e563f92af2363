use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

pub const MINUTES_PER_DAY: u32 = 1440;
pub const SUPPORTED_GRANULARITIES: [u32; 4] = [1, 5, 15, 30];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PresenceLabel {
    Present,
    Absent,
}

/// One consumer's kWh-per-slot series starting at midnight of `start_date`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsumptionTrace {
    pub consumer_id: String,
    pub start_date: NaiveDate,
    pub granularity_minutes: u32,
    pub readings: Vec<f64>,
}

/// One consumer-day.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DayRecord {
    pub consumer_id: String,
    pub date: NaiveDate,
    pub granularity_minutes: u32,
    pub readings: Vec<f64>,
}

pub(crate) fn check_granularity(minutes: u32) -> Result<()> {
    if SUPPORTED_GRANULARITIES.contains(&minutes) {
        Ok(())
    } else {
        Err(CoreError::Format(format!(
            "granularity {minutes} min not supported (expected one of {SUPPORTED_GRANULARITIES:?})"
        )))
    }
}

fn check_readings(readings: &[f64]) -> Result<()> {
    match readings.iter().position(|r| !r.is_finite() || *r < 0.0) {
        Some(i) => Err(CoreError::Data(format!(
            "reading {i} is {} (must be finite and non-negative)",
            readings[i]
        ))),
        None => Ok(()),
    }
}

impl ConsumptionTrace {
    pub fn new(
        consumer_id: impl Into<String>,
        start_date: NaiveDate,
        granularity_minutes: u32,
        readings: Vec<f64>,
    ) -> Result<Self> {
        check_granularity(granularity_minutes)?;
        let per_day = (MINUTES_PER_DAY / granularity_minutes) as usize;
        if readings.len() % per_day != 0 {
            return Err(CoreError::Data(format!(
                "{} readings is not a whole number of {per_day}-slot days",
                readings.len()
            )));
        }
        check_readings(&readings)?;
        Ok(Self {
            consumer_id: consumer_id.into(),
            start_date,
            granularity_minutes,
            readings,
        })
    }

    pub fn slots_per_day(&self) -> usize {
        (MINUTES_PER_DAY / self.granularity_minutes) as usize
    }

    pub fn day_count(&self) -> usize {
        self.readings.len() / self.slots_per_day()
    }

    pub fn day(&self, index: usize) -> DayRecord {
        let n = self.slots_per_day();
        DayRecord {
            consumer_id: self.consumer_id.clone(),
            date: self.start_date + Days::new(index as u64),
            granularity_minutes: self.granularity_minutes,
            readings: self.readings[index * n..(index + 1) * n].to_vec(),
        }
    }

    pub fn days(&self) -> Vec<DayRecord> {
        (0..self.day_count()).map(|i| self.day(i)).collect()
    }

    pub fn total_energy(&self) -> f64 {
        self.readings.iter().sum()
    }
}

impl DayRecord {
    pub fn new(
        consumer_id: impl Into<String>,
        date: NaiveDate,
        granularity_minutes: u32,
        readings: Vec<f64>,
    ) -> Result<Self> {
        check_granularity(granularity_minutes)?;
        let per_day = (MINUTES_PER_DAY / granularity_minutes) as usize;
        if readings.len() != per_day {
            return Err(CoreError::Data(format!(
                "day has {} readings, expected {per_day} at {granularity_minutes}-min granularity",
                readings.len()
            )));
        }
        check_readings(&readings)?;
        Ok(Self {
            consumer_id: consumer_id.into(),
            date,
            granularity_minutes,
            readings,
        })
    }

    pub fn total(&self) -> f64 {
        self.readings.iter().sum()
    }
}

/// Sums consecutive readings into `target_minutes` slots.
pub fn resample(trace: &ConsumptionTrace, target_minutes: u32) -> Result<ConsumptionTrace> {
    let g = trace.granularity_minutes;
    if target_minutes == 0 || target_minutes % g != 0 || MINUTES_PER_DAY % target_minutes != 0 {
        return Err(CoreError::Argument(format!(
            "cannot resample {g}-min readings to {target_minutes} min"
        )));
    }
    check_granularity(target_minutes).map_err(|e| CoreError::Argument(e.to_string()))?;
    let factor = (target_minutes / g) as usize;
    let readings = trace
        .readings
        .chunks_exact(factor)
        .map(|c| c.iter().sum())
        .collect();
    Ok(ConsumptionTrace {
        consumer_id: trace.consumer_id.clone(),
        start_date: trace.start_date,
        granularity_minutes: target_minutes,
        readings,
    })
}

/// `|(C1 - C2) / C1| + |(C3 - C2) / C3|` over the 8-16h, 16-24h and 0-8h
/// consumption totals. Low values mean a flat day.
pub fn periods_score(day: &DayRecord) -> Result<f64> {
    let g = day.granularity_minutes as usize;
    let mut totals = [0.0f64; 3];
    for (slot, r) in day.readings.iter().enumerate() {
        let minute = slot * g;
        let period = match minute {
            m if m < 480 => 2,
            m if m < 960 => 0,
            _ => 1,
        };
        totals[period] += r;
    }
    let [c1, c2, c3] = totals;
    if c1 <= 0.0 || c3 <= 0.0 {
        return Err(CoreError::DegenerateDay(format!(
            "{} on {}: zero consumption in a period (C1={c1}, C3={c3})",
            day.consumer_id, day.date
        )));
    }
    Ok(((c1 - c2) / c1).abs() + ((c3 - c2) / c3).abs())
}

//! Labeled day records with a seeded per-consumer train/test split.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::trace::{DayRecord, PresenceLabel};
use crate::error::{CoreError, Result};

pub const TEST_FRACTION: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledRecord {
    pub day: DayRecord,
    pub label: PresenceLabel,
    pub split: Split,
}

/// On-disk line layout.
#[derive(Serialize, Deserialize)]
struct Line {
    consumer: String,
    date: NaiveDate,
    granularity: u32,
    readings: Vec<f64>,
    label: PresenceLabel,
    split: Split,
}

/// Lines starting with this prefix carry metadata, not records.
pub const META_PREFIX: &str = "{\"meta\"";

/// Records ordered by consumer, then date.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LabeledDataset {
    pub records: Vec<LabeledRecord>,
}

impl LabeledDataset {
    /// Builds a dataset and assigns splits: per consumer, a seeded shuffle puts
    /// `round(0.2 * days)` records in the test split.
    pub fn from_labeled_days(days: Vec<(DayRecord, PresenceLabel)>, seed: u64) -> Self {
        let mut records: Vec<LabeledRecord> = days
            .into_iter()
            .map(|(day, label)| LabeledRecord { day, label, split: Split::Train })
            .collect();
        records.sort_by(|a, b| (&a.day.consumer_id, a.day.date).cmp(&(&b.day.consumer_id, b.day.date)));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut start = 0;
        while start < records.len() {
            let id = records[start].day.consumer_id.clone();
            let end = start + records[start..].iter().take_while(|r| r.day.consumer_id == id).count();
            let mut idx: Vec<usize> = (start..end).collect();
            idx.shuffle(&mut rng);
            let n_test = ((end - start) as f64 * TEST_FRACTION).round() as usize;
            for &i in &idx[..n_test] {
                records[i].split = Split::Test;
            }
            start = end;
        }
        Self { records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &LabeledRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn consumers(&self) -> Vec<&str> {
        let mut ids: Vec<&str> = self.records.iter().map(|r| r.day.consumer_id.as_str()).collect();
        ids.dedup();
        ids
    }

    pub fn count_label(&self, label: PresenceLabel) -> usize {
        self.records.iter().filter(|r| r.label == label).count()
    }

    pub fn write_jsonl<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = BufWriter::new(writer);
        for r in &self.records {
            let line = Line {
                consumer: r.day.consumer_id.clone(),
                date: r.day.date,
                granularity: r.day.granularity_minutes,
                readings: r.day.readings.clone(),
                label: r.label,
                split: r.split,
            };
            serde_json::to_writer(&mut w, &line)?;
            w.write_all(b"\n").map_err(|e| CoreError::io("<jsonl>", e))?;
        }
        w.flush().map_err(|e| CoreError::io("<jsonl>", e))
    }

    /// Blank lines and `{"meta": ...}` header lines are skipped.
    pub fn read_jsonl<R: Read>(reader: R, source: &str) -> Result<Self> {
        let mut records = Vec::new();
        for (i, line) in BufReader::new(reader).lines().enumerate() {
            let line = line.map_err(|e| CoreError::io(source, e))?;
            if line.trim().is_empty() || line.starts_with(META_PREFIX) {
                continue;
            }
            let parse = |msg: String| CoreError::Parse { path: source.into(), line: i as u64 + 1, msg };
            let l: Line = serde_json::from_str(&line).map_err(|e| parse(e.to_string()))?;
            let day = DayRecord::new(l.consumer, l.date, l.granularity, l.readings).map_err(|e| parse(e.to_string()))?;
            records.push(LabeledRecord { day, label: l.label, split: l.split });
        }
        Ok(Self { records })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = File::create(path).map_err(|e| CoreError::io(path, e))?;
        self.write_jsonl(f)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| CoreError::io(path, e))?;
        Self::read_jsonl(f, &path.display().to_string())
    }
}

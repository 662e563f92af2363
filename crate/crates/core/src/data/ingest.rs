//! CSV in/out: header `consumer_id,timestamp_iso8601,kwh`.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, Duration, NaiveDateTime, Timelike};
use log::warn;

use super::trace::{check_granularity, ConsumptionTrace, MINUTES_PER_DAY};
use crate::error::{CoreError, Result};

const HEADER: [&str; 3] = ["consumer_id", "timestamp_iso8601", "kwh"];

struct Row {
    line: u64,
    ts: NaiveDateTime,
    kwh: f64,
}

fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.naive_local());
    }
    ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
}

pub fn ingest_csv(path: impl AsRef<Path>) -> Result<Vec<ConsumptionTrace>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| CoreError::io(path, e))?;
    ingest_reader(file, &path.display().to_string())
}

/// Parses rows grouped by consumer and sorted by time; `#` lines are comments. Gaps are forward-filled
/// and partial first/last days dropped. `source` names the input in errors.
pub fn ingest_reader<R: Read>(reader: R, source: &str) -> Result<Vec<ConsumptionTrace>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let parse_err = |line: u64, msg: String| CoreError::Parse {
        path: source.to_string(),
        line,
        msg,
    };

    let mut groups: Vec<(String, Vec<Row>)> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| parse_err(e.position().map_or(i as u64 + 1, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(i as u64 + 1, |p| p.line());
        if i == 0 {
            if rec.iter().collect::<Vec<_>>() != HEADER {
                return Err(parse_err(line, format!("expected header {}", HEADER.join(","))));
            }
            continue;
        }
        if rec.len() != 3 {
            return Err(parse_err(line, format!("expected 3 fields, found {}", rec.len())));
        }
        let consumer = rec[0].to_string();
        if consumer.is_empty() {
            return Err(parse_err(line, "empty consumer_id".into()));
        }
        let ts = parse_timestamp(&rec[1]).ok_or_else(|| parse_err(line, format!("bad timestamp {:?}", &rec[1])))?;
        let kwh: f64 = rec[2]
            .parse()
            .map_err(|_| parse_err(line, format!("bad kwh value {:?}", &rec[2])))?;
        if !kwh.is_finite() || kwh < 0.0 {
            return Err(parse_err(line, format!("kwh must be finite and non-negative, got {kwh}")));
        }
        let row = Row { line, ts, kwh };
        match groups.last_mut() {
            Some((c, rows)) if *c == consumer => {
                let prev = rows.last().expect("groups are never empty");
                if row.ts <= prev.ts {
                    return Err(parse_err(line, format!("timestamp {} not after {}", row.ts, prev.ts)));
                }
                rows.push(row);
            }
            _ => {
                if groups.iter().any(|(c, _)| *c == consumer) {
                    return Err(parse_err(line, format!("rows for consumer {consumer:?} are not contiguous")));
                }
                groups.push((consumer, vec![row]));
            }
        }
    }

    groups
        .into_iter()
        .map(|(consumer, rows)| build_trace(consumer, rows, source))
        .collect()
}

fn build_trace(consumer: String, rows: Vec<Row>, source: &str) -> Result<ConsumptionTrace> {
    let minute_gaps: Vec<i64> = rows
        .windows(2)
        .map(|w| (w[1].ts - w[0].ts).num_seconds())
        .map(|s| if s % 60 == 0 { s / 60 } else { -1 })
        .collect();
    let g = minute_gaps
        .iter()
        .copied()
        .filter(|&m| m > 0)
        .min()
        .ok_or_else(|| CoreError::Format(format!("{source}: consumer {consumer:?} needs at least two whole-minute rows")))?;
    check_granularity(g as u32).map_err(|e| CoreError::Format(format!("{source}: consumer {consumer:?}: {e}")))?;
    if let Some(i) = minute_gaps.iter().position(|&m| m <= 0 || m % g != 0) {
        return Err(CoreError::Format(format!(
            "{source}:{}: consumer {consumer:?} has inconsistent granularity (gap does not fit {g}-min slots)",
            rows[i + 1].line
        )));
    }
    if let Some(r) = rows.iter().find(|r| r.ts.second() != 0 || (r.ts.hour() * 60 + r.ts.minute()) % g as u32 != 0) {
        return Err(CoreError::Format(format!(
            "{source}:{}: timestamp {} is not aligned to {g}-min slots",
            r.line, r.ts
        )));
    }

    // forward-fill onto the regular grid
    let mut filled = Vec::with_capacity(rows.len());
    filled.push(rows[0].kwh);
    for (w, gap) in rows.windows(2).zip(&minute_gaps) {
        for _ in 1..(gap / g) {
            filled.push(w[0].kwh);
        }
        filled.push(w[1].kwh);
    }

    let per_day = (MINUTES_PER_DAY as i64 / g) as usize;
    let first = rows[0].ts;
    let offset = ((first.hour() * 60 + first.minute()) as i64 / g) as usize;
    let (skip, start_date) = if offset == 0 {
        (0, first.date())
    } else {
        (per_day - offset, (first + Duration::days(1)).date())
    };
    let usable = filled.len().saturating_sub(skip);
    let days = usable / per_day;
    if days == 0 {
        warn!("{source}: consumer {consumer:?} has no complete day");
    }
    let readings = filled
        .get(skip..skip + days * per_day)
        .map(<[f64]>::to_vec)
        .unwrap_or_default();
    ConsumptionTrace::new(consumer, start_date, g as u32, readings)
}

/// Writes traces in the ingest format.
pub fn write_csv<W: Write>(traces: &[ConsumptionTrace], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| CoreError::Format(e.to_string());
    w.write_record(HEADER).map_err(io)?;
    for t in traces {
        let start = t.start_date.and_hms_opt(0, 0, 0).expect("midnight exists");
        for (i, r) in t.readings.iter().enumerate() {
            let ts = start + Duration::minutes(i as i64 * t.granularity_minutes as i64);
            w.write_record([
                t.consumer_id.as_str(),
                &ts.format("%Y-%m-%dT%H:%M:%S").to_string(),
                &r.to_string(),
            ])
            .map_err(io)?;
        }
    }
    w.flush().map_err(|e| CoreError::Format(e.to_string()))?;
    Ok(())
}

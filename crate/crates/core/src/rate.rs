use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::CoreError;

/// Reporting rate of the meters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rate {
    Per5Min,
    Per30Min,
}

impl Rate {
    pub const ALL: [Rate; 2] = [Rate::Per5Min, Rate::Per30Min];

    pub fn minutes(self) -> u32 {
        match self {
            Rate::Per5Min => 5,
            Rate::Per30Min => 30,
        }
    }

    pub fn slots_per_day(self) -> usize {
        (1440 / self.minutes()) as usize
    }

    /// Defense memory length `n`.
    pub fn window(self) -> usize {
        match self {
            Rate::Per5Min => 100,
            Rate::Per30Min => 35,
        }
    }

    pub fn from_minutes(minutes: u32) -> Option<Self> {
        Rate::ALL.into_iter().find(|r| r.minutes() == minutes)
    }
}

impl fmt::Display for Rate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Rate::Per5Min => "per5min",
            Rate::Per30Min => "per30min",
        })
    }
}

impl FromStr for Rate {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "per5min" | "5" | "1/5min" => Ok(Rate::Per5Min),
            "per30min" | "30" | "1/30min" => Ok(Rate::Per30Min),
            other => Err(CoreError::Config(format!("unknown rate {other:?}; expected per5min or per30min"))),
        }
    }
}

//! Presence-privacy for change-and-transmit smart metering.
//!
//! The pipeline: consumption traces ([`data`]) are reduced to per-slot
//! transmission decisions ([`cat`]); an eavesdropper classifies the resulting
//! patterns ([`attacker`]); the meter hides absences by adding spoofing
//! transmissions ([`defense`]); readings travel encrypted and signed
//! ([`protocol`]).

pub mod attacker;
pub mod cat;
pub mod data;
pub mod defense;
mod error;
pub mod protocol;
mod rate;

pub use error::{CoreError, Result};
pub use rate::Rate;

/// Version string embedded in every artifact.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

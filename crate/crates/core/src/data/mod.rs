//! Consumption traces: ingestion, synthesis, resampling and presence labeling.

mod dataset;
mod ingest;
mod kmeans;
mod label;
mod synth;
mod trace;

pub use dataset::{LabeledDataset, LabeledRecord, Split, META_PREFIX, TEST_FRACTION};
pub use ingest::{ingest_csv, ingest_reader, write_csv};
pub use kmeans::{kmeans, KMeansResult};
pub use label::{combine_votes, day_features, label_consumer, label_days, LabelConfig};
pub use synth::{synthesize, GroundTruth, MeanStd, SyntheticConfig};
pub use trace::{
    periods_score, resample, ConsumptionTrace, DayRecord, PresenceLabel, MINUTES_PER_DAY,
    SUPPORTED_GRANULARITIES,
};

//! Record ingestion, cleaning, feature encoding, sample construction,
//! splitting and the synthetic dataset generator.

mod clean;
mod dataset;
mod encoder;
mod pipeline;
mod record;
mod samples;
mod split;
mod synth;

use thiserror::Error;

pub use clean::{clean, CleanReport, Removal, RemovalRule, DEFAULT_EPSILON_RISE};
pub use dataset::{rescale, Dataset, INDEX_SCALE};
pub use encoder::{fit_encoder, BlockEncoding, EncodedBlock, EncoderSpec, FeatureBlock};
pub use record::{
    parse_records, sort_records, write_records, IndexKind, LineError, ParseOutcome, PerformanceRecord, RoadAttributes,
    AADT_RANGE, CITIES, DIRECTIONS, HEADER, LEVELS, MAX_LANES, SPEED_LIMIT_RANGE, SURFACES,
};
pub use pipeline::{prepare_split, PipelineOptions, PreparedSplit};
pub use samples::{build_samples, prediction_inputs, DroppedUnit, Sample, SampleReport};
pub use split::{split, DEFAULT_TRAIN_RATIO};
pub use synth::{
    latent_lane_value, reconstruct_target, synth_generate, Scenario, SegmentLatent, SynthConfig, SynthLedger,
    SynthOutput,
};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("unreadable source: {0}")]
    Unreadable(String),
    #[error("schema mismatch: {0}")]
    Schema(String),
    #[error("invalid data: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

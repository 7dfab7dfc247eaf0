use serde::{Deserialize, Serialize};

use super::clean::{clean, CleanReport, DEFAULT_EPSILON_RISE};
use super::dataset::Dataset;
use super::encoder::{fit_encoder, EncoderSpec, FeatureBlock};
use super::record::{IndexKind, PerformanceRecord};
use super::samples::{build_samples, Sample, SampleReport};
use super::split::{split, DEFAULT_TRAIN_RATIO};
use super::DataError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineOptions {
    pub series_len: usize,
    pub epsilon_rise: f64,
    pub train_ratio: f64,
    pub split_seed: u64,
    pub group_by_segment: bool,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            series_len: 3,
            epsilon_rise: DEFAULT_EPSILON_RISE,
            train_ratio: DEFAULT_TRAIN_RATIO,
            split_seed: 0,
            group_by_segment: true,
        }
    }
}

/// Cleaned, sample-built and split data for one index kind.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedSplit {
    pub index_kind: IndexKind,
    pub num_lanes: usize,
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
    pub clean_report: CleanReport,
    pub sample_report: SampleReport,
}

pub fn prepare_split(
    records: &[PerformanceRecord],
    maintained: &[String],
    index_kind: IndexKind,
    num_lanes: usize,
    opts: &PipelineOptions,
) -> Result<PreparedSplit, DataError> {
    if !(opts.train_ratio > 0.0 && opts.train_ratio < 1.0) {
        return Err(DataError::Invalid(format!("train_ratio must lie in (0, 1), got {}", opts.train_ratio)));
    }
    let (kept, clean_report) = clean(records, maintained, opts.epsilon_rise);
    let (samples, sample_report) = build_samples(&kept, index_kind, opts.series_len, num_lanes);
    if samples.is_empty() {
        return Err(DataError::Invalid(format!("no complete {index_kind} samples for {num_lanes} lanes")));
    }
    let (train_idx, test_idx) = split(&samples, opts.train_ratio, opts.split_seed, opts.group_by_segment);
    if train_idx.is_empty() || test_idx.is_empty() {
        return Err(DataError::Invalid(format!(
            "split of {} samples left an empty side ({} train, {} test)",
            samples.len(),
            train_idx.len(),
            test_idx.len()
        )));
    }
    Ok(PreparedSplit {
        index_kind,
        num_lanes,
        train: train_idx.iter().map(|&i| samples[i].clone()).collect(),
        test: test_idx.iter().map(|&i| samples[i].clone()).collect(),
        clean_report,
        sample_report,
    })
}

impl PreparedSplit {
    /// Fits the encoder on the training samples only and encodes both sides.
    pub fn encode(&self, exclude: &[FeatureBlock]) -> Result<(EncoderSpec, Dataset, Dataset), DataError> {
        let encoder = fit_encoder(self.train.iter().map(|s| &s.attrs), exclude)?;
        let train = Dataset::from_samples(&self.train, &encoder)?;
        let test = Dataset::from_samples(&self.test, &encoder)?;
        Ok((encoder, train, test))
    }
}

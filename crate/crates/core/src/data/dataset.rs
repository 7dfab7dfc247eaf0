use super::encoder::EncoderSpec;
use super::samples::Sample;
use super::DataError;
use crate::model::Batch;
use crate::nn::Matrix;

/// Index values are divided by this before entering the network.
pub const INDEX_SCALE: f64 = 100.0;

/// Back to index points from training scale.
pub fn rescale(m: &Matrix) -> Matrix {
    m.map(|v| v * INDEX_SCALE)
}

/// Encoded, scaled tensors for a list of samples. Row `i` belongs to the
/// `i`-th sample it was built from.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub segment_ids: Vec<String>,
    pub unit_ids: Vec<String>,
    /// `M x k`, divided by [`INDEX_SCALE`].
    pub series: Matrix,
    /// `M x U`.
    pub aux: Matrix,
    /// `M x N`, divided by [`INDEX_SCALE`]; zero columns for unlabeled data.
    pub targets: Matrix,
}

impl Dataset {
    pub fn from_samples(samples: &[Sample], encoder: &EncoderSpec) -> Result<Self, DataError> {
        let m = samples.len();
        let k = samples.first().map_or(0, |s| s.series.len());
        let n = samples.first().map_or(0, |s| s.targets.len());
        if let Some(bad) = samples.iter().find(|s| s.series.len() != k || s.targets.len() != n) {
            return Err(DataError::Invalid(format!("unit {} has inconsistent series or target length", bad.unit_id)));
        }
        let u = encoder.width();
        let mut series = Matrix::zeros(m, k);
        let mut aux = Matrix::zeros(m, u);
        let mut targets = Matrix::zeros(m, n);
        for (i, s) in samples.iter().enumerate() {
            for (t, v) in s.series.iter().enumerate() {
                series.set(i, t, v / INDEX_SCALE);
            }
            let context = format!("unit {}", s.unit_id);
            aux.row_mut(i).copy_from_slice(&encoder.encode_logged(&s.attrs, &context));
            for (l, v) in s.targets.iter().enumerate() {
                targets.set(i, l, v / INDEX_SCALE);
            }
        }
        Ok(Dataset {
            segment_ids: samples.iter().map(|s| s.segment_id.clone()).collect(),
            unit_ids: samples.iter().map(|s| s.unit_id.clone()).collect(),
            series,
            aux,
            targets,
        })
    }

    pub fn len(&self) -> usize {
        self.series.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_lanes(&self) -> usize {
        self.targets.cols()
    }

    pub fn aux_dim(&self) -> usize {
        self.aux.cols()
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            segment_ids: idx.iter().map(|&i| self.segment_ids[i].clone()).collect(),
            unit_ids: idx.iter().map(|&i| self.unit_ids[i].clone()).collect(),
            series: self.series.gather_rows(idx),
            aux: self.aux.gather_rows(idx),
            targets: self.targets.gather_rows(idx),
        }
    }

    /// Model inputs and targets for the listed rows.
    pub fn batch(&self, idx: &[usize]) -> (Batch, Matrix) {
        (
            Batch { series: self.series.gather_rows(idx), aux: self.aux.gather_rows(idx) },
            self.targets.gather_rows(idx),
        )
    }

    pub fn full_batch(&self) -> (Batch, Matrix) {
        (Batch { series: self.series.clone(), aux: self.aux.clone() }, self.targets.clone())
    }

    /// Single-lane view: targets reduced to lane `lane` (0-based).
    pub fn lane(&self, lane: usize) -> Dataset {
        Dataset { targets: Matrix::column_vector(&self.targets.column(lane)), ..self.clone() }
    }

    /// Pools every lane into one single-target dataset, appending a lane
    /// one-hot block to the auxiliary features. Rows are ordered lane-major.
    pub fn pooled_with_lane_one_hot(&self) -> Dataset {
        let n = self.num_lanes();
        let m = self.len();
        let u = self.aux_dim();
        let mut aux = Matrix::zeros(m * n, u + n);
        let mut series = Matrix::zeros(m * n, self.series.cols());
        let mut targets = Matrix::zeros(m * n, 1);
        let mut segment_ids = Vec::with_capacity(m * n);
        let mut unit_ids = Vec::with_capacity(m * n);
        for lane in 0..n {
            for i in 0..m {
                let r = lane * m + i;
                series.row_mut(r).copy_from_slice(self.series.row(i));
                aux.row_mut(r)[..u].copy_from_slice(self.aux.row(i));
                aux.set(r, u + lane, 1.0);
                targets.set(r, 0, self.targets.get(i, lane));
                segment_ids.push(self.segment_ids[i].clone());
                unit_ids.push(self.unit_ids[i].clone());
            }
        }
        Dataset { segment_ids, unit_ids, series, aux, targets }
    }

    /// Drops the auxiliary features entirely (`U = 0`).
    pub fn without_aux(&self) -> Dataset {
        Dataset { aux: Matrix::zeros(self.len(), 0), ..self.clone() }
    }
}

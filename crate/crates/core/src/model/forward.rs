//! Forward and backward passes of the multi-task network.
//!
//! Stage (a) runs the shared LSTM over the segment series. Stage (b) gives
//! each lane a head: an LSTM reading the shared hidden sequence, started from
//! the shared final states through a learned adapter, followed by a scalar
//! readout and a two-layer fully connected stack producing `S_n`. Stage (c)
//! concatenates `S = [S_1 .. S_N, X]` and maps it to each lane's prediction
//! with a bias-free output matrix `W_n`.

use super::config::{build_variant, ArchConfig, Variant};
use super::params::{zeros_for, ModelParams};
use super::ModelError;
use crate::nn::matrix::{gemm, matmul};
use crate::nn::{
    linear_backward, linear_forward, lstm_sequence_backward, lstm_sequence_forward, LeakyRelu, LstmState, Matrix,
    SequenceCache,
};

/// Model input for `B` units: `series` is `B x k`, `aux` is `B x U`.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub series: Matrix,
    pub aux: Matrix,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.series.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.series.rows() == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchOutput {
    /// Per-lane predictions, `B x 1` each.
    pub predictions: Vec<Matrix>,
    /// Per-lane head feature blocks `S_n`, `B x V` each (empty for `no_heads`).
    pub head_features: Vec<Matrix>,
    /// Per-lane head LSTM outputs `s_n`.
    pub head_outputs: Vec<Matrix>,
    /// Concatenation `S`, absent for `no_concat`.
    pub concat: Option<Matrix>,
}

#[derive(Clone, Debug)]
struct SharedCache {
    seq: SequenceCache,
    top_hidden: Vec<Matrix>,
    finals: Vec<LstmState>,
}

#[derive(Clone, Debug)]
struct HeadCache {
    seq: SequenceCache,
    steps: usize,
    h_final: Matrix,
    fc_in: Matrix,
    pre_act: Matrix,
    act: Matrix,
}

/// Everything [`backward`] needs from the matching [`forward`] call.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    variant: Variant,
    num_lanes: usize,
    batch: usize,
    shared: Option<SharedCache>,
    heads: Vec<HeadCache>,
    concat: Option<Matrix>,
    head_features: Vec<Matrix>,
}

fn series_steps(batch: &Batch) -> Vec<Matrix> {
    (0..batch.series.cols()).map(|t| Matrix::column_vector(&batch.series.column(t))).collect()
}

fn check_finite(m: &Matrix, what: &'static str) -> Result<(), ModelError> {
    if m.is_finite() {
        Ok(())
    } else {
        Err(ModelError::NonFinite(what))
    }
}

pub fn forward(batch: &Batch, params: &ModelParams, config: &ArchConfig) -> Result<(BatchOutput, ForwardCache), ModelError> {
    let wiring = build_variant(config)?;
    params.check_shapes(config)?;
    let b = batch.len();
    if b == 0 {
        return Err(ModelError::ShapeMismatch("empty batch".into()));
    }
    if batch.series.cols() != config.series_len || batch.aux.shape() != (b, config.aux_dim) {
        return Err(ModelError::ShapeMismatch(format!(
            "batch series {:?} / aux {:?}, expected {}x{} / {}x{}",
            batch.series.shape(),
            batch.aux.shape(),
            b,
            config.series_len,
            b,
            config.aux_dim
        )));
    }
    let act = LeakyRelu::new(config.leaky_alpha)?;
    let raw_steps = series_steps(batch);

    let shared = match wiring.shared {
        Some(_) => {
            let out = lstm_sequence_forward(&raw_steps, &params.shared, None)?;
            for h in &out.top_hidden {
                check_finite(h, "shared lstm output")?;
            }
            Some(SharedCache { seq: out.cache, top_hidden: out.top_hidden, finals: out.finals })
        }
        None => None,
    };

    let mut heads = Vec::with_capacity(params.heads.len());
    let mut head_features = Vec::with_capacity(params.heads.len());
    let mut head_outputs = Vec::with_capacity(params.heads.len());
    for head in &params.heads {
        let (inputs, init) = match &shared {
            Some(s) => {
                let init: Vec<LstmState> = head
                    .adapters
                    .iter()
                    .enumerate()
                    .map(|(l, a)| {
                        let src = &s.finals[l.min(s.finals.len() - 1)];
                        LstmState { h: matmul(&src.h, false, &a.h, false), c: matmul(&src.c, false, &a.c, false) }
                    })
                    .collect();
                (s.top_hidden.as_slice(), Some(init))
            }
            None => (raw_steps.as_slice(), None),
        };
        let out = lstm_sequence_forward(inputs, &head.lstm, init.as_deref())?;
        let h_final = out.top_hidden.last().cloned().expect("nonempty sequence");
        let fc_in = match &head.projection {
            Some(p) => matmul(&h_final, false, p, false),
            None => h_final.clone(),
        };
        let pre_act = linear_forward(&fc_in, &head.fc_hidden_w, Some(&head.fc_hidden_b))?;
        let activated = pre_act.map(|v| act.apply(v));
        let features = linear_forward(&activated, &head.fc_out_w, None)?;
        check_finite(&features, "head features")?;
        head_outputs.push(fc_in.clone());
        head_features.push(features);
        heads.push(HeadCache { seq: out.cache, steps: inputs.len(), h_final, fc_in, pre_act, act: activated });
    }

    let concat = match wiring.variant {
        Variant::Full | Variant::NoShared => {
            let mut blocks: Vec<&Matrix> = head_features.iter().collect();
            blocks.push(&batch.aux);
            Some(Matrix::hcat(&blocks)?)
        }
        Variant::NoHeads => {
            let s = shared.as_ref().expect("no_heads keeps the shared layer");
            let mut blocks: Vec<&Matrix> = s.top_hidden.iter().collect();
            blocks.push(&batch.aux);
            Some(Matrix::hcat(&blocks)?)
        }
        Variant::NoConcat => None,
    };

    let predictions: Vec<Matrix> = params
        .outputs
        .iter()
        .enumerate()
        .map(|(n, w)| match &concat {
            Some(s) => matmul(s, false, w, false),
            None => matmul(&head_features[n], false, w, false),
        })
        .collect();
    for p in &predictions {
        check_finite(p, "predictions")?;
    }

    let output = BatchOutput { predictions, head_features: head_features.clone(), head_outputs, concat: concat.clone() };
    let cache = ForwardCache {
        variant: config.variant,
        num_lanes: config.num_lanes,
        batch: b,
        shared,
        heads,
        concat,
        head_features,
    };
    Ok((output, cache))
}

/// Gradients of every parameter given `dL/dY_n` for each lane.
pub fn backward(
    grad_predictions: &[Matrix],
    cache: &ForwardCache,
    params: &ModelParams,
    config: &ArchConfig,
) -> Result<ModelParams, ModelError> {
    let wiring = build_variant(config)?;
    if cache.variant != config.variant || cache.num_lanes != config.num_lanes || cache.heads.len() != params.heads.len()
    {
        return Err(ModelError::StaleCache("forward cache built for a different architecture"));
    }
    if grad_predictions.len() != config.num_lanes
        || grad_predictions.iter().any(|g| g.shape() != (cache.batch, 1))
    {
        return Err(ModelError::StaleCache("prediction gradients do not match cached batch"));
    }
    let mut grads = zeros_for(&wiring);
    let act = LeakyRelu::new(config.leaky_alpha)?;

    // stage (c)
    let mut d_features: Vec<Matrix> = Vec::with_capacity(config.num_lanes);
    let mut d_concat = cache.concat.as_ref().map(|s| Matrix::zeros(s.rows(), s.cols()));
    for (n, g) in grad_predictions.iter().enumerate() {
        let input = cache.concat.as_ref().unwrap_or_else(|| &cache.head_features[n]);
        gemm(1.0, input, true, g, false, 1.0, &mut grads.outputs[n]);
        match d_concat.as_mut() {
            Some(ds) => gemm(1.0, g, false, &params.outputs[n], true, 1.0, ds),
            None => d_features.push(matmul(g, false, &params.outputs[n], true)),
        }
    }
    if let Some(ds) = &d_concat {
        if wiring.head.is_some() {
            let v = config.head_fc_out;
            d_features = (0..config.num_lanes).map(|n| ds.column_slice(n * v, v)).collect();
        }
    }

    // stage (b), accumulating gradients that flow back into the shared layer
    let steps = config.series_len;
    let mut d_shared_top: Vec<Matrix> = match &cache.shared {
        Some(s) => s.top_hidden.iter().map(|h| Matrix::zeros(h.rows(), h.cols())).collect(),
        None => Vec::new(),
    };
    let mut d_shared_finals: Vec<LstmState> = match &cache.shared {
        Some(s) => s.finals.iter().map(|f| LstmState::zeros(f.h.rows(), f.h.cols())).collect(),
        None => Vec::new(),
    };
    for (n, (head, hc)) in params.heads.iter().zip(&cache.heads).enumerate() {
        let gh = &mut grads.heads[n];
        let d_act = linear_backward(&hc.act, &head.fc_out_w, &d_features[n], &mut gh.fc_out_w, None);
        let mut d_pre = d_act;
        for (d, &z) in d_pre.data_mut().iter_mut().zip(hc.pre_act.data()) {
            *d *= act.derivative(z);
        }
        let d_fc_in =
            linear_backward(&hc.fc_in, &head.fc_hidden_w, &d_pre, &mut gh.fc_hidden_w, Some(&mut gh.fc_hidden_b));
        let d_h_final = match (&head.projection, gh.projection.as_mut()) {
            (Some(p), Some(gp)) => linear_backward(&hc.h_final, p, &d_fc_in, gp, None),
            _ => d_fc_in,
        };
        let mut grad_top: Vec<Matrix> =
            (0..hc.steps).map(|_| Matrix::zeros(d_h_final.rows(), d_h_final.cols())).collect();
        grad_top[hc.steps - 1] = d_h_final;
        let (d_inputs, d_init) = lstm_sequence_backward(&grad_top, None, &hc.seq, &head.lstm, &mut gh.lstm)?;
        if let Some(s) = &cache.shared {
            for (acc, d) in d_shared_top.iter_mut().zip(&d_inputs) {
                acc.add_assign(d);
            }
            for (l, (adapter, d0)) in head.adapters.iter().zip(&d_init).enumerate() {
                let src_idx = l.min(s.finals.len() - 1);
                let src = &s.finals[src_idx];
                let ga = &mut gh.adapters[l];
                let dh = linear_backward(&src.h, &adapter.h, &d0.h, &mut ga.h, None);
                let dc = linear_backward(&src.c, &adapter.c, &d0.c, &mut ga.c, None);
                d_shared_finals[src_idx].h.add_assign(&dh);
                d_shared_finals[src_idx].c.add_assign(&dc);
            }
        }
    }

    // stage (a)
    if let Some(s) = &cache.shared {
        if wiring.variant == Variant::NoHeads {
            let ds = d_concat.as_ref().expect("no_heads has a concatenation");
            let hidden = config.shared_hidden;
            for (t, acc) in d_shared_top.iter_mut().enumerate().take(steps) {
                acc.add_assign(&ds.column_slice(t * hidden, hidden));
            }
        }
        lstm_sequence_backward(&d_shared_top, Some(&d_shared_finals), &s.seq, &params.shared, &mut grads.shared)?;
    }
    Ok(grads)
}

/// Convenience for inference: per-lane predictions as a `B x N` matrix.
pub fn predict(batch: &Batch, params: &ModelParams, config: &ArchConfig) -> Result<Matrix, ModelError> {
    let (out, _) = forward(batch, params, config)?;
    Ok(stack_lanes(&out.predictions))
}

/// Joins per-lane `B x 1` columns into one `B x N` matrix.
pub fn stack_lanes(columns: &[Matrix]) -> Matrix {
    let refs: Vec<&Matrix> = columns.iter().collect();
    Matrix::hcat(&refs).expect("lane predictions share a batch size")
}

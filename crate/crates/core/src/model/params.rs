use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{build_variant, ArchConfig, HeadShape, StackShape, Wiring};
use super::ModelError;
use crate::nn::{LstmCellParams, Matrix, Parameters};

/// Maps a shared layer's final `(h, c)` onto a head layer's initial state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateAdapter {
    /// `shared_hidden x head_hidden`
    pub h: Matrix,
    /// `shared_hidden x head_hidden`
    pub c: Matrix,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadParams {
    /// One per head LSTM layer; empty when the head starts from zero state.
    pub adapters: Vec<StateAdapter>,
    pub lstm: Vec<LstmCellParams>,
    /// `head_hidden x 1` readout producing the scalar head output.
    pub projection: Option<Matrix>,
    /// `fc_in x fc_hidden`
    pub fc_hidden_w: Matrix,
    pub fc_hidden_b: Vec<f64>,
    /// `fc_hidden x V`, no bias.
    pub fc_out_w: Matrix,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub shared: Vec<LstmCellParams>,
    pub heads: Vec<HeadParams>,
    /// Per-lane output matrices, `output_in x 1`, no bias.
    pub outputs: Vec<Matrix>,
}

fn uniform(rows: usize, cols: usize, fan_in: usize, rng: &mut impl Rng) -> Matrix {
    let bound = 1.0 / (fan_in as f64).sqrt();
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-bound..bound))
}

fn init_stack(shape: StackShape, forget_bias: f64, rng: &mut impl Rng) -> Vec<LstmCellParams> {
    (0..shape.layers)
        .map(|l| {
            let input = if l == 0 { shape.input } else { shape.hidden };
            LstmCellParams::init(input, shape.hidden, forget_bias, rng)
        })
        .collect()
}

fn init_head(shape: &HeadShape, forget_bias: f64, rng: &mut impl Rng) -> HeadParams {
    let hh = shape.lstm.hidden;
    let adapters = match shape.adapt_from {
        Some(shared) => (0..shape.lstm.layers)
            .map(|_| StateAdapter { h: uniform(shared, hh, shared, rng), c: uniform(shared, hh, shared, rng) })
            .collect(),
        None => Vec::new(),
    };
    let lstm = init_stack(shape.lstm, forget_bias, rng);
    let projection = shape.projection.then(|| uniform(hh, 1, hh, rng));
    HeadParams {
        adapters,
        lstm,
        projection,
        fc_hidden_w: uniform(shape.fc_in, shape.fc_hidden, shape.fc_in, rng),
        fc_hidden_b: vec![0.0; shape.fc_hidden],
        fc_out_w: uniform(shape.fc_hidden, shape.fc_out, shape.fc_hidden, rng),
    }
}

/// Seeded initialization. Weights are uniform in `±1/sqrt(fan_in)`; biases
/// are zero apart from the LSTM forget gates.
pub fn init_params(config: &ArchConfig, seed: u64) -> Result<ModelParams, ModelError> {
    let wiring = build_variant(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shared = wiring.shared.map(|s| init_stack(s, config.forget_bias, &mut rng)).unwrap_or_default();
    let heads = match &wiring.head {
        Some(h) => (0..config.num_lanes).map(|_| init_head(h, config.forget_bias, &mut rng)).collect(),
        None => Vec::new(),
    };
    let outputs =
        (0..config.num_lanes).map(|_| uniform(wiring.output_in, 1, wiring.output_in, &mut rng)).collect();
    Ok(ModelParams { shared, heads, outputs })
}

impl ModelParams {
    /// Checks every tensor against the layout implied by `config`.
    pub fn check_shapes(&self, config: &ArchConfig) -> Result<(), ModelError> {
        let wiring = build_variant(config)?;
        let reference = zeros_for(&wiring);
        let same = self.tensors().len() == reference.tensors().len()
            && self.tensors().iter().zip(reference.tensors()).all(|(a, b)| a.len() == b.len())
            && self.outputs.iter().zip(&reference.outputs).all(|(a, b)| a.shape() == b.shape())
            && self.shared.iter().zip(&reference.shared).all(|(a, b)| a.w_forget.shape() == b.w_forget.shape());
        if same {
            Ok(())
        } else {
            Err(ModelError::ShapeMismatch(format!(
                "parameters do not match {} layout with {} lanes",
                config.variant, config.num_lanes
            )))
        }
    }
}

/// All-zero parameters with the layout of `wiring`.
pub fn zeros_for(wiring: &Wiring) -> ModelParams {
    let stack = |s: StackShape| -> Vec<LstmCellParams> {
        (0..s.layers).map(|l| LstmCellParams::zeros(if l == 0 { s.input } else { s.hidden }, s.hidden)).collect()
    };
    let shared = wiring.shared.map(stack).unwrap_or_default();
    let heads = match &wiring.head {
        Some(h) => (0..wiring.num_lanes)
            .map(|_| HeadParams {
                adapters: match h.adapt_from {
                    Some(s) => (0..h.lstm.layers)
                        .map(|_| StateAdapter { h: Matrix::zeros(s, h.lstm.hidden), c: Matrix::zeros(s, h.lstm.hidden) })
                        .collect(),
                    None => Vec::new(),
                },
                lstm: stack(h.lstm),
                projection: h.projection.then(|| Matrix::zeros(h.lstm.hidden, 1)),
                fc_hidden_w: Matrix::zeros(h.fc_in, h.fc_hidden),
                fc_hidden_b: vec![0.0; h.fc_hidden],
                fc_out_w: Matrix::zeros(h.fc_hidden, h.fc_out),
            })
            .collect(),
        None => Vec::new(),
    };
    let outputs = (0..wiring.num_lanes).map(|_| Matrix::zeros(wiring.output_in, 1)).collect();
    ModelParams { shared, heads, outputs }
}

impl Parameters for HeadParams {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for a in &self.adapters {
            out.push(a.h.data());
            out.push(a.c.data());
        }
        for l in &self.lstm {
            out.extend(l.tensors());
        }
        if let Some(p) = &self.projection {
            out.push(p.data());
        }
        out.push(self.fc_hidden_w.data());
        out.push(&self.fc_hidden_b);
        out.push(self.fc_out_w.data());
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for a in &mut self.adapters {
            out.push(a.h.data_mut());
            out.push(a.c.data_mut());
        }
        for l in &mut self.lstm {
            out.extend(l.tensors_mut());
        }
        if let Some(p) = &mut self.projection {
            out.push(p.data_mut());
        }
        out.push(self.fc_hidden_w.data_mut());
        out.push(&mut self.fc_hidden_b);
        out.push(self.fc_out_w.data_mut());
        out
    }

    fn tensor_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for i in 0..self.adapters.len() {
            out.push(format!("adapter{i}.h"));
            out.push(format!("adapter{i}.c"));
        }
        for (i, l) in self.lstm.iter().enumerate() {
            out.extend(l.tensor_names().into_iter().map(|n| format!("lstm{i}.{n}")));
        }
        if self.projection.is_some() {
            out.push("projection".into());
        }
        out.extend(["fc_hidden_w".into(), "fc_hidden_b".into(), "fc_out_w".into()]);
        out
    }
}

impl Parameters for ModelParams {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for l in &self.shared {
            out.extend(l.tensors());
        }
        for h in &self.heads {
            out.extend(h.tensors());
        }
        out.extend(self.outputs.iter().map(|w| w.data()));
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for l in &mut self.shared {
            out.extend(l.tensors_mut());
        }
        for h in &mut self.heads {
            out.extend(h.tensors_mut());
        }
        out.extend(self.outputs.iter_mut().map(|w| w.data_mut()));
        out
    }

    fn tensor_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (i, l) in self.shared.iter().enumerate() {
            out.extend(l.tensor_names().into_iter().map(|n| format!("shared{i}.{n}")));
        }
        for (i, h) in self.heads.iter().enumerate() {
            out.extend(h.tensor_names().into_iter().map(|n| format!("head{i}.{n}")));
        }
        out.extend((0..self.outputs.len()).map(|i| format!("output{i}")));
        out
    }
}

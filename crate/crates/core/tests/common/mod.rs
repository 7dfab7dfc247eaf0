#![allow(dead_code)]

use lanecast::model::{ArchConfig, Batch, HeadFcInput, ModelParams, Variant};
use lanecast::nn::{LstmCellParams, Matrix, Parameters};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// Adds noise to every parameter so zero-initialized biases are exercised.
pub fn jitter<P: Parameters>(p: &mut P, scale: f64, rng: &mut ChaCha8Rng) {
    for t in p.tensors_mut() {
        for v in t.iter_mut() {
            *v += rng.random_range(-scale..scale);
        }
    }
}

pub fn random_batch(b: usize, k: usize, u: usize, rng: &mut ChaCha8Rng) -> Batch {
    Batch {
        series: Matrix::from_fn(b, k, |_, _| rng.random_range(0.5..1.0)),
        aux: random_matrix(b, u, rng),
    }
}

// Straight-line reference implementation on plain vectors, one sample at a time.
pub mod reference {
    use super::*;

    fn sigmoid(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    /// `(h, c)` after one step.
    pub fn cell(x: &[f64], h: &[f64], c: &[f64], p: &LstmCellParams) -> (Vec<f64>, Vec<f64>) {
        let hidden = h.len();
        let z: Vec<f64> = h.iter().chain(x).copied().collect();
        let gate = |w: &Matrix, b: &[f64], j: usize| -> f64 {
            let mut a = b[j];
            for (k, zk) in z.iter().enumerate() {
                a += w.get(j, k) * zk;
            }
            a
        };
        let mut h_new = vec![0.0; hidden];
        let mut c_new = vec![0.0; hidden];
        for j in 0..hidden {
            let f = sigmoid(gate(&p.w_forget, &p.b_forget, j));
            let i = sigmoid(gate(&p.w_input, &p.b_input, j));
            let g = gate(&p.w_candidate, &p.b_candidate, j).tanh();
            let o = sigmoid(gate(&p.w_output, &p.b_output, j));
            c_new[j] = f * c[j] + i * g;
            h_new[j] = o * c_new[j].tanh();
        }
        (h_new, c_new)
    }

    /// Top-layer hidden sequence and per-layer final states.
    pub fn stack(
        inputs: &[Vec<f64>],
        layers: &[LstmCellParams],
        init: Option<Vec<(Vec<f64>, Vec<f64>)>>,
    ) -> (Vec<Vec<f64>>, Vec<(Vec<f64>, Vec<f64>)>) {
        let mut state: Vec<(Vec<f64>, Vec<f64>)> = init.unwrap_or_else(|| {
            layers.iter().map(|l| (vec![0.0; l.hidden_size()], vec![0.0; l.hidden_size()])).collect()
        });
        let mut top = Vec::new();
        for x in inputs {
            let mut input = x.clone();
            for (l, p) in layers.iter().enumerate() {
                let (h, c) = cell(&input, &state[l].0, &state[l].1, p);
                state[l] = (h.clone(), c);
                input = h;
            }
            top.push(input);
        }
        (top, state)
    }

    fn vec_mat(v: &[f64], m: &Matrix) -> Vec<f64> {
        (0..m.cols()).map(|j| (0..m.rows()).map(|i| v[i] * m.get(i, j)).sum()).collect()
    }

    /// Predictions of every lane for one sample.
    pub fn model(series: &[f64], aux: &[f64], p: &ModelParams, cfg: &ArchConfig) -> Vec<f64> {
        let raw: Vec<Vec<f64>> = series.iter().map(|&v| vec![v]).collect();
        let shared = (cfg.variant != Variant::NoShared).then(|| stack(&raw, &p.shared, None));
        let mut features = Vec::new();
        for head in &p.heads {
            let (inputs, init) = match &shared {
                Some((top, finals)) => {
                    let init = head
                        .adapters
                        .iter()
                        .enumerate()
                        .map(|(l, a)| {
                            let src = &finals[l.min(finals.len() - 1)];
                            (vec_mat(&src.0, &a.h), vec_mat(&src.1, &a.c))
                        })
                        .collect();
                    (top.clone(), Some(init))
                }
                None => (raw.clone(), None),
            };
            let (top, _) = stack(&inputs, &head.lstm, init);
            let h = top.last().unwrap();
            let s = match &head.projection {
                Some(proj) => vec_mat(h, proj),
                None => h.clone(),
            };
            let mut hidden = vec_mat(&s, &head.fc_hidden_w);
            for (v, b) in hidden.iter_mut().zip(&head.fc_hidden_b) {
                *v += b;
                if *v < 0.0 {
                    *v *= cfg.leaky_alpha;
                }
            }
            features.push(vec_mat(&hidden, &head.fc_out_w));
        }
        let concat: Vec<f64> = match cfg.variant {
            Variant::NoHeads => shared.as_ref().unwrap().0.iter().flatten().chain(aux).copied().collect(),
            _ => features.iter().flatten().chain(aux).copied().collect(),
        };
        (0..cfg.num_lanes)
            .map(|n| {
                let input = if cfg.variant == Variant::NoConcat { &features[n] } else { &concat };
                vec_mat(input, &p.outputs[n])[0]
            })
            .collect()
    }
}

pub fn random_arch(rng: &mut ChaCha8Rng) -> ArchConfig {
    let variant = Variant::ALL[rng.random_range(0..Variant::ALL.len())];
    ArchConfig {
        num_lanes: rng.random_range(1..=3),
        series_len: rng.random_range(1..=4),
        shared_layers: rng.random_range(1..=3),
        shared_hidden: rng.random_range(2..=5),
        head_layers: rng.random_range(1..=3),
        head_hidden: rng.random_range(2..=4),
        head_fc_hidden: rng.random_range(2..=4),
        head_fc_out: rng.random_range(1..=3),
        aux_dim: rng.random_range(0..=3),
        head_fc_input: if rng.random::<bool>() { HeadFcInput::Scalar } else { HeadFcInput::Hidden },
        ..ArchConfig::full_size(1, 0).with_variant(variant)
    }
}

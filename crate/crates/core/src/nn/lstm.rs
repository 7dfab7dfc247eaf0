//! LSTM cell and stacked sequence runner with hand-derived backpropagation
//! through time.
//!
//! Every gate reads the concatenation `[h_prev, x]` through a single
//! `hidden x (hidden + input)` matrix:
//!
//! ```text
//! f  = sigmoid(W_f [h_prev, x] + b_f)      forget gate
//! i  = sigmoid(W_i [h_prev, x] + b_i)      input gate
//! c~ = tanh(W_c [h_prev, x] + b_c)         candidate cell
//! c  = f * c_prev + i * c~
//! o  = sigmoid(W_o [h_prev, x] + b_o)      output gate
//! h  = o * tanh(c)
//! ```
//!
//! All tensors are batched: row `r` of every activation belongs to sample `r`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::activation::sigmoid;
use super::matrix::{gemm, matmul};
use super::{Matrix, NnError, Parameters};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LstmCellParams {
    pub w_forget: Matrix,
    pub w_input: Matrix,
    pub w_candidate: Matrix,
    pub w_output: Matrix,
    pub b_forget: Vec<f64>,
    pub b_input: Vec<f64>,
    pub b_candidate: Vec<f64>,
    pub b_output: Vec<f64>,
}

impl LstmCellParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        let w = Matrix::zeros(hidden, hidden + input);
        LstmCellParams {
            w_forget: w.clone(),
            w_input: w.clone(),
            w_candidate: w.clone(),
            w_output: w,
            b_forget: vec![0.0; hidden],
            b_input: vec![0.0; hidden],
            b_candidate: vec![0.0; hidden],
            b_output: vec![0.0; hidden],
        }
    }

    /// Weights uniform in `±1/sqrt(hidden + input)`, biases zero except the
    /// forget gate, which starts at `forget_bias`.
    pub fn init<R: Rng + ?Sized>(input: usize, hidden: usize, forget_bias: f64, rng: &mut R) -> Self {
        let bound = 1.0 / ((hidden + input) as f64).sqrt();
        let mut draw = || Matrix::from_fn(hidden, hidden + input, |_, _| rng.random_range(-bound..bound));
        LstmCellParams {
            w_forget: draw(),
            w_input: draw(),
            w_candidate: draw(),
            w_output: draw(),
            b_forget: vec![forget_bias; hidden],
            b_input: vec![0.0; hidden],
            b_candidate: vec![0.0; hidden],
            b_output: vec![0.0; hidden],
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.w_forget.rows()
    }

    pub fn input_size(&self) -> usize {
        self.w_forget.cols() - self.w_forget.rows()
    }

    fn check_consistent(&self) -> Result<(), NnError> {
        let shape = self.w_forget.shape();
        let h = shape.0;
        let ok = [&self.w_input, &self.w_candidate, &self.w_output].iter().all(|w| w.shape() == shape)
            && shape.1 >= h
            && [&self.b_forget, &self.b_input, &self.b_candidate, &self.b_output].iter().all(|b| b.len() == h);
        if ok {
            Ok(())
        } else {
            Err(NnError::DimensionMismatch {
                op: "lstm params",
                expected: format!("four {}x{} gate matrices and length-{} biases", h, shape.1, h),
                found: "inconsistent gate shapes".into(),
            })
        }
    }

    fn gates(&self) -> [(&Matrix, &[f64]); 4] {
        [
            (&self.w_forget, &self.b_forget),
            (&self.w_input, &self.b_input),
            (&self.w_candidate, &self.b_candidate),
            (&self.w_output, &self.b_output),
        ]
    }
}

impl Parameters for LstmCellParams {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![
            self.w_forget.data(),
            self.w_input.data(),
            self.w_candidate.data(),
            self.w_output.data(),
            &self.b_forget,
            &self.b_input,
            &self.b_candidate,
            &self.b_output,
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.w_forget.data_mut(),
            self.w_input.data_mut(),
            self.w_candidate.data_mut(),
            self.w_output.data_mut(),
            &mut self.b_forget,
            &mut self.b_input,
            &mut self.b_candidate,
            &mut self.b_output,
        ]
    }

    fn tensor_names(&self) -> Vec<String> {
        ["w_forget", "w_input", "w_candidate", "w_output", "b_forget", "b_input", "b_candidate", "b_output"]
            .iter()
            .map(|s| s.to_string())
            .collect()
    }
}

/// Hidden and cell state, `batch x hidden` each.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmState {
    pub h: Matrix,
    pub c: Matrix,
}

impl LstmState {
    pub fn zeros(batch: usize, hidden: usize) -> Self {
        LstmState { h: Matrix::zeros(batch, hidden), c: Matrix::zeros(batch, hidden) }
    }
}

/// Intermediates of one cell step, consumed by [`lstm_cell_backward`].
#[derive(Clone, Debug)]
pub struct CellCache {
    pub z: Matrix,
    pub c_prev: Matrix,
    pub forget: Matrix,
    pub input: Matrix,
    pub candidate: Matrix,
    pub output: Matrix,
    pub c: Matrix,
    pub tanh_c: Matrix,
    pub h: Matrix,
}

pub fn lstm_cell_forward(
    x: &Matrix,
    prev: &LstmState,
    params: &LstmCellParams,
) -> Result<(LstmState, CellCache), NnError> {
    params.check_consistent()?;
    let hidden = params.hidden_size();
    let batch = x.rows();
    if x.cols() != params.input_size()
        || prev.h.shape() != (batch, hidden)
        || prev.c.shape() != (batch, hidden)
    {
        return Err(NnError::DimensionMismatch {
            op: "lstm_cell_forward",
            expected: format!("x {}x{}, state {}x{}", batch, params.input_size(), batch, hidden),
            found: format!("x {}x{}, h {:?}, c {:?}", x.rows(), x.cols(), prev.h.shape(), prev.c.shape()),
        });
    }
    let z = Matrix::hcat(&[&prev.h, x])?;
    let [(wf, bf), (wi, bi), (wc, bc), (wo, bo)] = params.gates();
    let pre = |w: &Matrix, b: &[f64]| {
        let mut a = matmul(&z, false, w, true);
        a.add_row_broadcast(b);
        a
    };
    let forget = pre(wf, bf).map(sigmoid);
    let input = pre(wi, bi).map(sigmoid);
    let candidate = pre(wc, bc).map(f64::tanh);
    let output = pre(wo, bo).map(sigmoid);

    let mut c = Matrix::zeros(batch, hidden);
    for (k, cv) in c.data_mut().iter_mut().enumerate() {
        *cv = forget.data()[k] * prev.c.data()[k] + input.data()[k] * candidate.data()[k];
    }
    let tanh_c = c.map(f64::tanh);
    let mut h = Matrix::zeros(batch, hidden);
    for (k, hv) in h.data_mut().iter_mut().enumerate() {
        *hv = output.data()[k] * tanh_c.data()[k];
    }
    let state = LstmState { h: h.clone(), c: c.clone() };
    let cache = CellCache { z, c_prev: prev.c.clone(), forget, input, candidate, output, c, tanh_c, h };
    Ok((state, cache))
}

/// Backpropagates one step.
///
/// `grad_h` and `grad_c` are the loss gradients flowing into this step's `h`
/// and `c`. Parameter gradients are added into `grads`, so repeated calls
/// across timesteps accumulate. Returns `(dL/dx, dL/d[h_prev, c_prev])`.
pub fn lstm_cell_backward(
    grad_h: &Matrix,
    grad_c: &Matrix,
    cache: &CellCache,
    params: &LstmCellParams,
    grads: &mut LstmCellParams,
) -> Result<(Matrix, LstmState), NnError> {
    let hidden = params.hidden_size();
    let batch = cache.c.rows();
    let stale = cache.c.cols() != hidden
        || cache.z.cols() != params.w_forget.cols()
        || grad_h.shape() != (batch, hidden)
        || grad_c.shape() != (batch, hidden)
        || grads.w_forget.shape() != params.w_forget.shape();
    if stale {
        return Err(NnError::StaleCache("lstm cell cache does not match parameters or incoming gradients"));
    }

    let n = batch * hidden;
    let mut d_forget = Matrix::zeros(batch, hidden);
    let mut d_input = Matrix::zeros(batch, hidden);
    let mut d_candidate = Matrix::zeros(batch, hidden);
    let mut d_output = Matrix::zeros(batch, hidden);
    let mut dc_prev = Matrix::zeros(batch, hidden);
    for k in 0..n {
        let dh = grad_h.data()[k];
        let tc = cache.tanh_c.data()[k];
        let o = cache.output.data()[k];
        let f = cache.forget.data()[k];
        let i = cache.input.data()[k];
        let g = cache.candidate.data()[k];
        let dc = grad_c.data()[k] + dh * o * (1.0 - tc * tc);
        // gradients with respect to pre-activations
        d_output.data_mut()[k] = dh * tc * o * (1.0 - o);
        d_forget.data_mut()[k] = dc * cache.c_prev.data()[k] * f * (1.0 - f);
        d_input.data_mut()[k] = dc * g * i * (1.0 - i);
        d_candidate.data_mut()[k] = dc * i * (1.0 - g * g);
        dc_prev.data_mut()[k] = dc * f;
    }

    let mut dz = Matrix::zeros(batch, cache.z.cols());
    let pairs: [(&Matrix, &Matrix, &mut Matrix, &mut Vec<f64>); 4] = [
        (&d_forget, &params.w_forget, &mut grads.w_forget, &mut grads.b_forget),
        (&d_input, &params.w_input, &mut grads.w_input, &mut grads.b_input),
        (&d_candidate, &params.w_candidate, &mut grads.w_candidate, &mut grads.b_candidate),
        (&d_output, &params.w_output, &mut grads.w_output, &mut grads.b_output),
    ];
    for (da, w, gw, gb) in pairs {
        gemm(1.0, da, true, &cache.z, false, 1.0, gw);
        da.accumulate_column_sums(gb);
        gemm(1.0, da, false, w, false, 1.0, &mut dz);
    }
    let dh_prev = dz.column_slice(0, hidden);
    let dx = dz.column_slice(hidden, dz.cols() - hidden);
    Ok((dx, LstmState { h: dh_prev, c: dc_prev }))
}

/// Cache of a stacked sequence pass, indexed `[layer][timestep]`.
#[derive(Clone, Debug)]
pub struct SequenceCache {
    pub steps: Vec<Vec<CellCache>>,
}

#[derive(Clone, Debug)]
pub struct SequenceOutput {
    /// Top layer hidden state at every timestep.
    pub top_hidden: Vec<Matrix>,
    /// Final `(h, c)` of every layer.
    pub finals: Vec<LstmState>,
    pub cache: SequenceCache,
}

/// Runs the stacked LSTM over `series` (one `batch x input` matrix per
/// timestep). Missing `init` means zero initial states.
pub fn lstm_sequence_forward(
    series: &[Matrix],
    layers: &[LstmCellParams],
    init: Option<&[LstmState]>,
) -> Result<SequenceOutput, NnError> {
    if series.is_empty() {
        return Err(NnError::EmptySequence);
    }
    if layers.is_empty() {
        return Err(NnError::EmptyInput("lstm layers"));
    }
    for w in layers.windows(2) {
        if w[1].input_size() != w[0].hidden_size() {
            return Err(NnError::DimensionMismatch {
                op: "lstm_sequence_forward",
                expected: format!("layer input {}", w[0].hidden_size()),
                found: format!("layer input {}", w[1].input_size()),
            });
        }
    }
    if let Some(init) = init {
        if init.len() != layers.len() {
            return Err(NnError::DimensionMismatch {
                op: "lstm_sequence_forward",
                expected: format!("{} initial states", layers.len()),
                found: format!("{} initial states", init.len()),
            });
        }
    }
    let batch = series[0].rows();
    let mut inputs: Vec<Matrix> = series.to_vec();
    let mut finals = Vec::with_capacity(layers.len());
    let mut steps = Vec::with_capacity(layers.len());
    for (l, p) in layers.iter().enumerate() {
        let mut state = match init {
            Some(init) => init[l].clone(),
            None => LstmState::zeros(batch, p.hidden_size()),
        };
        let mut layer_cache = Vec::with_capacity(inputs.len());
        let mut outputs = Vec::with_capacity(inputs.len());
        for x in &inputs {
            let (next, cache) = lstm_cell_forward(x, &state, p)?;
            outputs.push(next.h.clone());
            layer_cache.push(cache);
            state = next;
        }
        finals.push(state);
        steps.push(layer_cache);
        inputs = outputs;
    }
    Ok(SequenceOutput { top_hidden: inputs, finals, cache: SequenceCache { steps } })
}

/// Reverse of [`lstm_sequence_forward`].
///
/// `grad_top` holds one gradient per timestep for the top layer's hidden
/// output; `grad_finals` optionally carries gradients on each layer's final
/// state. Parameter gradients are added into `grads`. Returns the gradient
/// with respect to every input timestep and every layer's initial state.
pub fn lstm_sequence_backward(
    grad_top: &[Matrix],
    grad_finals: Option<&[LstmState]>,
    cache: &SequenceCache,
    layers: &[LstmCellParams],
    grads: &mut [LstmCellParams],
) -> Result<(Vec<Matrix>, Vec<LstmState>), NnError> {
    if cache.steps.len() != layers.len() || grads.len() != layers.len() {
        return Err(NnError::StaleCache("sequence cache layer count differs from parameters"));
    }
    let steps = cache.steps.first().map_or(0, |s| s.len());
    if grad_top.len() != steps || cache.steps.iter().any(|s| s.len() != steps) {
        return Err(NnError::StaleCache("sequence cache length differs from incoming gradients"));
    }
    let mut grad_in: Vec<Matrix> = grad_top.to_vec();
    let mut grad_init = vec![LstmState::zeros(0, 0); layers.len()];
    for l in (0..layers.len()).rev() {
        let p = &layers[l];
        let first = &cache.steps[l][0];
        let (batch, hidden) = first.c.shape();
        let (mut dh_next, mut dc_next) = match grad_finals {
            Some(g) => (g[l].h.clone(), g[l].c.clone()),
            None => (Matrix::zeros(batch, hidden), Matrix::zeros(batch, hidden)),
        };
        let mut grad_x = vec![Matrix::zeros(0, 0); steps];
        for t in (0..steps).rev() {
            let mut dh = grad_in[t].clone();
            dh.add_assign(&dh_next);
            let (dx, dprev) = lstm_cell_backward(&dh, &dc_next, &cache.steps[l][t], p, &mut grads[l])?;
            grad_x[t] = dx;
            dh_next = dprev.h;
            dc_next = dprev.c;
        }
        grad_init[l] = LstmState { h: dh_next, c: dc_next };
        grad_in = grad_x;
    }
    Ok((grad_in, grad_init))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_everything_gives_half_gates() {
        let p = LstmCellParams::zeros(2, 3);
        let (s, cache) = lstm_cell_forward(&Matrix::zeros(1, 2), &LstmState::zeros(1, 3), &p).unwrap();
        assert!(cache.forget.data().iter().all(|&v| v == 0.5));
        assert!(cache.input.data().iter().all(|&v| v == 0.5));
        assert!(cache.output.data().iter().all(|&v| v == 0.5));
        assert!(cache.candidate.data().iter().all(|&v| v == 0.0));
        assert!(s.c.data().iter().all(|&v| v == 0.0));
        assert!(s.h.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unit_cell_state_halves() {
        let p = LstmCellParams::zeros(1, 4);
        let prev = LstmState { h: Matrix::zeros(1, 4), c: Matrix::from_vec(1, 4, vec![1.0; 4]).unwrap() };
        let (s, _) = lstm_cell_forward(&Matrix::zeros(1, 1), &prev, &p).unwrap();
        for k in 0..4 {
            assert_eq!(s.c.data()[k], 0.5);
            assert_eq!(s.h.data()[k], 0.5 * 0.5f64.tanh());
        }
    }

    #[test]
    fn dimension_mismatch_is_named() {
        let p = LstmCellParams::zeros(2, 3);
        let err = lstm_cell_forward(&Matrix::zeros(1, 3), &LstmState::zeros(1, 3), &p).unwrap_err();
        assert!(matches!(err, NnError::DimensionMismatch { op: "lstm_cell_forward", .. }));
    }

    #[test]
    fn zero_incoming_gradient_gives_zero_outputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = LstmCellParams::init(2, 3, 1.0, &mut rng);
        let x = Matrix::from_vec(1, 2, vec![0.3, -0.7]).unwrap();
        let (_, cache) = lstm_cell_forward(&x, &LstmState::zeros(1, 3), &p).unwrap();
        let mut g = p.zeros_like();
        let (dx, dprev) = lstm_cell_backward(&Matrix::zeros(1, 3), &Matrix::zeros(1, 3), &cache, &p, &mut g).unwrap();
        assert!(dx.data().iter().all(|&v| v == 0.0));
        assert!(dprev.h.data().iter().chain(dprev.c.data()).all(|&v| v == 0.0));
        assert_eq!(g.global_norm(), 0.0);
    }

    #[test]
    fn stale_cache_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = LstmCellParams::init(2, 3, 1.0, &mut rng);
        let other = LstmCellParams::init(2, 4, 1.0, &mut rng);
        let (_, cache) = lstm_cell_forward(&Matrix::zeros(1, 2), &LstmState::zeros(1, 3), &p).unwrap();
        let mut g = other.zeros_like();
        let r = lstm_cell_backward(&Matrix::zeros(1, 4), &Matrix::zeros(1, 4), &cache, &other, &mut g);
        assert!(matches!(r, Err(NnError::StaleCache(_))));
    }

    #[test]
    fn single_step_sequence_is_cell_per_layer() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let l0 = LstmCellParams::init(1, 3, 1.0, &mut rng);
        let l1 = LstmCellParams::init(3, 2, 1.0, &mut rng);
        let x = Matrix::from_vec(2, 1, vec![0.4, -0.1]).unwrap();
        let out = lstm_sequence_forward(std::slice::from_ref(&x), &[l0.clone(), l1.clone()], None).unwrap();
        let (s0, _) = lstm_cell_forward(&x, &LstmState::zeros(2, 3), &l0).unwrap();
        let (s1, _) = lstm_cell_forward(&s0.h, &LstmState::zeros(2, 2), &l1).unwrap();
        assert_eq!(out.top_hidden[0], s1.h);
        assert_eq!(out.finals[0], s0);
        assert_eq!(out.finals[1], s1);
    }

    #[test]
    fn full_size_sequence_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let layers = vec![LstmCellParams::init(1, 128, 1.0, &mut rng), LstmCellParams::init(128, 128, 1.0, &mut rng)];
        let series: Vec<Matrix> = (0..3).map(|t| Matrix::from_vec(1, 1, vec![0.9 - 0.02 * t as f64]).unwrap()).collect();
        let out = lstm_sequence_forward(&series, &layers, None).unwrap();
        assert_eq!(out.top_hidden.len(), 3);
        assert!(out.top_hidden.iter().all(|h| h.shape() == (1, 128)));
        assert_eq!(out.finals.len(), 2);
    }

    #[test]
    fn empty_series_rejected() {
        let p = LstmCellParams::zeros(1, 2);
        assert!(matches!(lstm_sequence_forward(&[], &[p], None), Err(NnError::EmptySequence)));
    }

    #[test]
    fn mismatched_layer_stack_rejected() {
        let a = LstmCellParams::zeros(1, 3);
        let b = LstmCellParams::zeros(2, 3);
        let x = [Matrix::zeros(1, 1)];
        assert!(matches!(lstm_sequence_forward(&x, &[a, b], None), Err(NnError::DimensionMismatch { .. })));
    }
}

use lanecast::model::{backward, forward, init_params, ArchConfig, Batch, HeadFcInput, ModelParams, Variant};
use lanecast::nn::{
    grad_check, grad_check_with_floor, lstm_cell_backward, lstm_cell_forward, lstm_sequence_forward, LstmCellParams, LstmState, Matrix,
    Parameters,
};
use lanecast::training::{loss_gradients, total_loss};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;

use common::{jitter, random_arch, random_batch, random_matrix, reference};

#[test]
fn cell_forward_matches_transcription() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for _ in 0..10 {
        let (input, hidden, b) = (rng.random_range(1..6), rng.random_range(1..6), rng.random_range(1..4));
        let mut p = LstmCellParams::init(input, hidden, 1.0, &mut rng);
        jitter(&mut p, 0.3, &mut rng);
        let x = random_matrix(b, input, &mut rng);
        let prev = LstmState { h: random_matrix(b, hidden, &mut rng), c: random_matrix(b, hidden, &mut rng) };
        let (next, _) = lstm_cell_forward(&x, &prev, &p).unwrap();
        for r in 0..b {
            let (h, c) = reference::cell(x.row(r), prev.h.row(r), prev.c.row(r), &p);
            for j in 0..hidden {
                assert!((next.h.get(r, j) - h[j]).abs() < 1e-12);
                assert!((next.c.get(r, j) - c[j]).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn model_forward_matches_transcription() {
    let mut rng = ChaCha8Rng::seed_from_u64(200);
    for case in 0..10 {
        let cfg = random_arch(&mut rng);
        let mut p = init_params(&cfg, case).unwrap();
        jitter(&mut p, 0.2, &mut rng);
        let batch = random_batch(rng.random_range(1..4), cfg.series_len, cfg.aux_dim, &mut rng);
        let (out, _) = forward(&batch, &p, &cfg).unwrap();
        for r in 0..batch.len() {
            let expect = reference::model(batch.series.row(r), batch.aux.row(r), &p, &cfg);
            for (n, e) in expect.iter().enumerate() {
                let got = out.predictions[n].get(r, 0);
                assert!((got - e).abs() < 1e-12, "case {case} {:?} lane {n}: {got} vs {e}", cfg.variant);
            }
        }
    }
}

#[test]
fn every_variant_matches_transcription() {
    let mut rng = ChaCha8Rng::seed_from_u64(300);
    for variant in Variant::ALL {
        for fc in [HeadFcInput::Scalar, HeadFcInput::Hidden] {
            let cfg = ArchConfig { head_fc_input: fc, shared_layers: 3, ..ArchConfig::tiny(3, 2).with_variant(variant) };
            let mut p = init_params(&cfg, 9).unwrap();
            jitter(&mut p, 0.2, &mut rng);
            let batch = random_batch(2, 3, 2, &mut rng);
            let (out, _) = forward(&batch, &p, &cfg).unwrap();
            for r in 0..2 {
                let expect = reference::model(batch.series.row(r), batch.aux.row(r), &p, &cfg);
                for (n, e) in expect.iter().enumerate() {
                    assert!((out.predictions[n].get(r, 0) - e).abs() < 1e-12);
                }
            }
        }
    }
}

fn loss_of(p: &ModelParams, batch: &Batch, targets: &Matrix, cfg: &ArchConfig) -> f64 {
    let (out, _) = forward(batch, p, cfg).unwrap();
    total_loss(&out.predictions, targets).unwrap().0
}

fn model_grads(p: &ModelParams, batch: &Batch, targets: &Matrix, cfg: &ArchConfig) -> ModelParams {
    let (out, cache) = forward(batch, p, cfg).unwrap();
    backward(&loss_gradients(&out.predictions, targets).unwrap(), &cache, p, cfg).unwrap()
}

#[test]
fn full_model_gradient_check_twenty_seeds() {
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let cfg = ArchConfig::tiny(2, 2);
        let mut p = init_params(&cfg, seed).unwrap();
        // Zero-initialized biases leave LeakyReLU inputs within a step of the kink.
        jitter(&mut p, 0.1, &mut rng);
        let batch = random_batch(4, 3, 2, &mut rng);
        let targets = Matrix::from_fn(4, 2, |_, _| rng.random_range(0.5..1.0));
        let analytic = model_grads(&p, &batch, &targets, &cfg);
        let report = grad_check(&p, &analytic, 1e-5, |q| loss_of(q, &batch, &targets, &cfg)).unwrap();
        assert!(report.passes(1e-4), "seed {seed}: {report:?}");
    }
}

#[test]
fn every_variant_gradient_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for variant in Variant::ALL {
        for fc in [HeadFcInput::Scalar, HeadFcInput::Hidden] {
            let cfg = ArchConfig { head_fc_input: fc, shared_layers: 3, ..ArchConfig::tiny(3, 2).with_variant(variant) };
            let mut p = init_params(&cfg, 5).unwrap();
            jitter(&mut p, 0.1, &mut rng);
            let batch = random_batch(3, 3, 2, &mut rng);
            let targets = Matrix::from_fn(3, 3, |_, _| rng.random_range(0.5..1.0));
            let analytic = model_grads(&p, &batch, &targets, &cfg);
            let report = grad_check(&p, &analytic, 1e-5, |q| loss_of(q, &batch, &targets, &cfg)).unwrap();
            assert!(report.passes(1e-4), "{variant} {fc:?}: {report:?}");
        }
    }
}

fn cell_check(p: &LstmCellParams, x: &Matrix, prev: &LstmState, probe_h: &Matrix, probe_c: &Matrix) -> f64 {
    let loss = |q: &LstmCellParams| {
        let (s, _) = lstm_cell_forward(x, prev, q).unwrap();
        s.h.data().iter().zip(probe_h.data()).map(|(a, b)| a * b).sum::<f64>()
            + s.c.data().iter().zip(probe_c.data()).map(|(a, b)| a * b).sum::<f64>()
    };
    let (_, cache) = lstm_cell_forward(x, prev, p).unwrap();
    let mut grads = p.zeros_like();
    lstm_cell_backward(probe_h, probe_c, &cache, p, &mut grads).unwrap();
    grad_check_with_floor(p, &grads, 1e-5, 1e-4, loss).unwrap().max_rel_error
}

#[test]
fn cell_gradient_check_twenty_seeds() {
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (input, hidden, b) = (3, 4, 2);
        let mut p = LstmCellParams::init(input, hidden, 1.0, &mut rng);
        jitter(&mut p, 0.5, &mut rng);
        let x = random_matrix(b, input, &mut rng);
        let prev = LstmState { h: random_matrix(b, hidden, &mut rng), c: random_matrix(b, hidden, &mut rng) };
        let (gh, gc) = (random_matrix(b, hidden, &mut rng), random_matrix(b, hidden, &mut rng));
        let err = cell_check(&p, &x, &prev, &gh, &gc);
        assert!(err < 1e-6, "seed {seed}: {err}");
    }
}

#[test]
fn cell_gradient_check_saturated_output_gate() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut p = LstmCellParams::init(2, 3, 1.0, &mut rng);
    p.b_output.iter_mut().for_each(|b| *b = 12.0);
    let x = random_matrix(2, 2, &mut rng);
    let prev = LstmState { h: random_matrix(2, 3, &mut rng), c: random_matrix(2, 3, &mut rng) };
    let (gh, gc) = (random_matrix(2, 3, &mut rng), random_matrix(2, 3, &mut rng));
    assert!(cell_check(&p, &x, &prev, &gh, &gc) < 1e-6);
}

#[test]
fn zero_parameters_predict_zero() {
    let cfg = ArchConfig::tiny(3, 2);
    let p = init_params(&cfg, 1).unwrap().zeros_like();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (out, _) = forward(&random_batch(4, 3, 2, &mut rng), &p, &cfg).unwrap();
    assert!(out.predictions.iter().all(|m| m.data().iter().all(|&v| v == 0.0)));
}

#[test]
fn identical_heads_give_identical_lanes() {
    let cfg = ArchConfig::tiny(2, 2);
    let mut p = init_params(&cfg, 8).unwrap();
    p.heads[1] = p.heads[0].clone();
    p.outputs[1] = p.outputs[0].clone();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (out, _) = forward(&random_batch(5, 3, 2, &mut rng), &p, &cfg).unwrap();
    assert_eq!(out.predictions[0], out.predictions[1]);
    assert_eq!(out.head_features[0], out.head_features[1]);
}

#[test]
fn shared_gradient_is_sum_of_lane_gradients() {
    let cfg = ArchConfig::tiny(3, 2);
    let p = init_params(&cfg, 12).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let batch = random_batch(4, 3, 2, &mut rng);
    let targets = Matrix::from_fn(4, 3, |_, _| rng.random_range(0.5..1.0));
    let (out, cache) = forward(&batch, &p, &cfg).unwrap();
    let all = loss_gradients(&out.predictions, &targets).unwrap();
    let total = backward(&all, &cache, &p, &cfg).unwrap();
    let mut summed = total.zeros_like();
    for n in 0..3 {
        let only: Vec<Matrix> = all
            .iter()
            .enumerate()
            .map(|(m, g)| if m == n { g.clone() } else { Matrix::zeros(g.rows(), 1) })
            .collect();
        summed.add_assign_params(&backward(&only, &cache, &p, &cfg).unwrap());
    }
    for (a, b) in total.tensors().iter().zip(summed.tensors()) {
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < 1e-14);
        }
    }
}

#[test]
fn without_concat_each_lane_ignores_other_heads() {
    let cfg = ArchConfig::tiny(2, 2).with_variant(Variant::NoConcat);
    let mut p = init_params(&cfg, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let batch = random_batch(3, 3, 2, &mut rng);
    let (before, _) = forward(&batch, &p, &cfg).unwrap();
    jitter(&mut p.heads[1], 0.5, &mut rng);
    let (after, _) = forward(&batch, &p, &cfg).unwrap();
    assert_eq!(before.predictions[0], after.predictions[0]);
    assert_ne!(before.predictions[1], after.predictions[1]);
}

#[test]
fn with_concat_lanes_see_every_head() {
    let cfg = ArchConfig::tiny(2, 2);
    let mut p = init_params(&cfg, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let batch = random_batch(3, 3, 2, &mut rng);
    let (before, _) = forward(&batch, &p, &cfg).unwrap();
    jitter(&mut p.heads[1], 0.5, &mut rng);
    let (after, _) = forward(&batch, &p, &cfg).unwrap();
    assert_ne!(before.predictions[0], after.predictions[0]);
}

#[test]
fn no_shared_equals_independent_towers() {
    let cfg = ArchConfig::tiny(2, 2).with_variant(Variant::NoShared);
    let p = init_params(&cfg, 21).unwrap();
    assert!(p.shared.is_empty());
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let batch = random_batch(3, 3, 2, &mut rng);
    let (out, _) = forward(&batch, &p, &cfg).unwrap();
    let steps: Vec<Matrix> = (0..3).map(|t| Matrix::column_vector(&batch.series.column(t))).collect();
    for (n, head) in p.heads.iter().enumerate() {
        let tower = lstm_sequence_forward(&steps, &head.lstm, None).unwrap();
        let h = tower.top_hidden.last().unwrap();
        let s = lanecast::nn::linear_forward(h, head.projection.as_ref().unwrap(), None).unwrap();
        let mut a = lanecast::nn::linear_forward(&s, &head.fc_hidden_w, Some(&head.fc_hidden_b)).unwrap();
        a = a.map(|v| if v < 0.0 { 0.01 * v } else { v });
        let features = lanecast::nn::linear_forward(&a, &head.fc_out_w, None).unwrap();
        assert_eq!(features, out.head_features[n]);
    }
}

#[test]
fn intra_batch_order_does_not_change_gradients() {
    let cfg = ArchConfig::tiny(2, 2);
    let p = init_params(&cfg, 30).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let batch = random_batch(5, 3, 2, &mut rng);
    let targets = Matrix::from_fn(5, 2, |_, _| rng.random_range(0.5..1.0));
    let perm = [3, 0, 4, 1, 2];
    let shuffled = Batch { series: batch.series.gather_rows(&perm), aux: batch.aux.gather_rows(&perm) };
    let g1 = model_grads(&p, &batch, &targets, &cfg);
    let g2 = model_grads(&p, &shuffled, &targets.gather_rows(&perm), &cfg);
    for (a, b) in g1.tensors().iter().zip(g2.tensors()) {
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= 1e-13 * x.abs().max(1.0));
        }
    }
}

use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use lanecast::data::{
    build_samples, clean, fit_encoder, prepare_split, split, synth_generate, Dataset, IndexKind, PipelineOptions,
    PreparedSplit, Scenario, SynthConfig, SynthOutput,
};
use lanecast::eval::{
    mape_lane, mape_overall, mean_std, run_ablation, run_benchmark, AblationSpec, AuxMode, BenchmarkData, BenchmarkMatrix,
    BenchmarkSpec, Family,
};
use lanecast::model::{backward, forward, init_params, layer_shapes, ArchConfig, Batch, ModelParams, Variant};
use lanecast::nn::{
    grad_check, grad_check_with_floor, lstm_cell_backward, lstm_cell_forward, LstmCellParams, LstmState, Matrix, Parameters,
};
use lanecast::training::{dataset_loss, fit, loss_gradients, total_loss, TrainConfig};
use proptest::prelude::*;
use proptest::test_runner::{Config as ProptestConfig, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[path = "../../core/tests/common/mod.rs"]
mod common;

use common::{jitter, random_arch, random_batch, random_matrix, reference};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, pass: String, fail: String) -> Outcome {
    if ok {
        Ok(pass)
    } else {
        Err(fail)
    }
}

fn model_loss(p: &ModelParams, batch: &Batch, targets: &Matrix, cfg: &ArchConfig) -> f64 {
    let (out, _) = forward(batch, p, cfg).unwrap();
    total_loss(&out.predictions, targets).unwrap().0
}

fn gradient_correctness() -> Outcome {
    let mut worst_model = 0.0f64;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let cfg = ArchConfig::tiny(2, 2);
        let mut p = init_params(&cfg, seed).map_err(|e| e.to_string())?;
        jitter(&mut p, 0.1, &mut rng);
        let batch = random_batch(4, 3, 2, &mut rng);
        let targets = Matrix::from_fn(4, 2, |_, _| rng.random_range(0.5..1.0));
        let (out, cache) = forward(&batch, &p, &cfg).unwrap();
        let analytic = backward(&loss_gradients(&out.predictions, &targets).unwrap(), &cache, &p, &cfg).unwrap();
        let report = grad_check(&p, &analytic, 1e-5, |q| model_loss(q, &batch, &targets, &cfg)).unwrap();
        worst_model = worst_model.max(report.max_rel_error);
    }

    let mut worst_cell = 0.0f64;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = LstmCellParams::init(3, 4, 1.0, &mut rng);
        jitter(&mut p, 0.5, &mut rng);
        let x = random_matrix(2, 3, &mut rng);
        let prev = LstmState { h: random_matrix(2, 4, &mut rng), c: random_matrix(2, 4, &mut rng) };
        let (gh, gc) = (random_matrix(2, 4, &mut rng), random_matrix(2, 4, &mut rng));
        let loss = |q: &LstmCellParams| {
            let (s, _) = lstm_cell_forward(&x, &prev, q).unwrap();
            s.h.data().iter().zip(gh.data()).map(|(a, b)| a * b).sum::<f64>()
                + s.c.data().iter().zip(gc.data()).map(|(a, b)| a * b).sum::<f64>()
        };
        let (_, cache) = lstm_cell_forward(&x, &prev, &p).unwrap();
        let mut grads = p.zeros_like();
        lstm_cell_backward(&gh, &gc, &cache, &p, &mut grads).unwrap();
        worst_cell = worst_cell.max(grad_check_with_floor(&p, &grads, 1e-5, 1e-4, loss).unwrap().max_rel_error);
    }
    check(
        worst_model < 1e-4 && worst_cell < 1e-6,
        format!("model max rel error {worst_model:.2e}, cell {worst_cell:.2e}"),
        format!("model max rel error {worst_model:.2e} (limit 1e-4), cell {worst_cell:.2e} (limit 1e-6)"),
    )
}

fn transcription() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(200);
    let mut worst_cell = 0.0f64;
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
                worst_cell = worst_cell.max((next.h.get(r, j) - h[j]).abs()).max((next.c.get(r, j) - c[j]).abs());
            }
        }
    }
    let mut worst_model = 0.0f64;
    for case in 0..10 {
        let cfg = random_arch(&mut rng);
        let mut p = init_params(&cfg, case).map_err(|e| e.to_string())?;
        jitter(&mut p, 0.2, &mut rng);
        let batch = random_batch(rng.random_range(1..4), cfg.series_len, cfg.aux_dim, &mut rng);
        let (out, _) = forward(&batch, &p, &cfg).unwrap();
        for r in 0..batch.len() {
            let expect = reference::model(batch.series.row(r), batch.aux.row(r), &p, &cfg);
            for (n, e) in expect.iter().enumerate() {
                worst_model = worst_model.max((out.predictions[n].get(r, 0) - e).abs());
            }
        }
    }
    check(
        worst_cell < 1e-12 && worst_model < 1e-12,
        format!("cell max abs diff {worst_cell:.1e}, model {worst_model:.1e}"),
        format!("cell max abs diff {worst_cell:.1e}, model {worst_model:.1e} (limit 1e-12)"),
    )
}

fn loss_and_metrics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let (m, n) = (rng.random_range(1..40), rng.random_range(1..5));
        let preds: Vec<Matrix> = (0..n).map(|_| Matrix::from_fn(m, 1, |_, _| rng.random_range(0.0..1.5))).collect();
        let targets = Matrix::from_fn(m, n, |_, _| rng.random_range(0.1..1.0));
        let (loss, lanes) = total_loss(&preds, &targets).unwrap();
        let mut brute = 0.0;
        for (l, pred) in preds.iter().enumerate() {
            let mut sq = 0.0;
            for i in 0..m {
                sq += (pred.get(i, 0) - targets.get(i, l)).powi(2);
            }
            worst = worst.max((lanes[l] - sq / m as f64).abs());
            brute += sq / m as f64;
        }
        worst = worst.max((loss - brute).abs());

        let mut per_lane = Vec::new();
        for l in 0..n {
            let p: Vec<f64> = (0..m).map(|i| preds[l].get(i, 0) * 100.0).collect();
            let a: Vec<f64> = (0..m).map(|i| targets.get(i, l) * 100.0).collect();
            let mut s = 0.0;
            for i in 0..m {
                s += ((a[i] - p[i]) / a[i]).abs();
            }
            let expected = 100.0 * s / m as f64;
            let got = mape_lane(&p, &a).map_err(|e| e.to_string())?;
            worst = worst.max((got - expected).abs());
            per_lane.push(got);
        }
        let mut total = 0.0;
        for v in &per_lane {
            total += v;
        }
        worst = worst.max((mape_overall(&per_lane).unwrap() - total / n as f64).abs());
    }
    let worked = mape_lane(&[90.0, 55.0], &[100.0, 50.0]).map_err(|e| e.to_string())?;
    check(
        worst < 1e-12 && worked == 10.0,
        format!("max abs diff {worst:.1e}, worked case {worked}%"),
        format!("max abs diff {worst:.1e} (limit 1e-12), worked case {worked}% (expected 10)"),
    )
}

fn overfit() -> Outcome {
    let out = synth_generate(&SynthConfig::new(Scenario::TwoLane, 5)).map_err(|e| e.to_string())?;
    let split = prepare_split(&out.records, &out.ledger.maintained, IndexKind::Pci, 2, &PipelineOptions::default())
        .map_err(|e| e.to_string())?;
    let (_, train, _) = split.encode(&[]).map_err(|e| e.to_string())?;
    let train = train.subset(&(0..32).collect::<Vec<_>>());
    let arch = ArchConfig::full_size(2, train.aux_dim());
    let config = TrainConfig { epochs: 2000, learning_rate: 0.001, batch_size: 32, ..TrainConfig::default() };
    let start = Instant::now();
    let fitted = fit(&train, None, &arch, &config).map_err(|e| e.to_string())?;
    let initial = fitted.log.initial.as_ref().map(|e| e.loss).ok_or("missing initial loss")?;
    let (last, _) = dataset_loss(&fitted.final_checkpoint.params, &arch, &train).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let ratio = initial / last;
    check(
        ratio >= 100.0 && secs < 300.0,
        format!("loss {initial:.4e} -> {last:.4e} ({ratio:.0}x) in {secs:.0}s"),
        format!("loss {initial:.4e} -> {last:.4e} ({ratio:.1}x, need 100x) in {secs:.0}s (limit 300s)"),
    )
}

const E2E_CONFIG: &str = r#"
seed = 17
scenario = "3lane"

[synth]
n_segments = 16
units_per_segment = 3

[arch]
shared_hidden = 16
head_hidden = 8
head_fc_hidden = 8
head_fc_out = 4

[train]
epochs = 10
"#;

fn end_to_end(dir: &Path, name: &str) -> Result<std::path::PathBuf, String> {
    let root = dir.join(name);
    let config = dir.join("e2e.toml");
    fs::write(&config, E2E_CONFIG).map_err(|e| e.to_string())?;
    let run = |out: &Path, args: &[&str]| -> Result<(), String> {
        let status = Command::new(env!("CARGO_BIN_EXE_lanecast"))
            .env_remove("LANECAST_CONFIG")
            .env("RUST_LOG", "error")
            .arg("--config")
            .arg(&config)
            .arg("--out-dir")
            .arg(out)
            .args(args)
            .status()
            .map_err(|e| e.to_string())?;
        if status.success() {
            Ok(())
        } else {
            Err(format!("{args:?} exited with {status}"))
        }
    };
    let (data, trained, evaluated) = (root.join("data"), root.join("train"), root.join("eval"));
    run(&data, &["synth"])?;
    let records = data.join("records.csv");
    let maintained = data.join("maintained.txt");
    let (records, maintained) = (records.to_str().unwrap(), maintained.to_str().unwrap());
    run(&trained, &["train", "--data", records, "--maintained", maintained])?;
    let checkpoint = trained.join("checkpoint.json");
    run(&evaluated, &["eval", "--checkpoint", checkpoint.to_str().unwrap(), "--data", records, "--maintained", maintained])?;
    Ok(root)
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let a = end_to_end(dir.path(), "a")?;
    let b = end_to_end(dir.path(), "b")?;
    let files = [
        "data/records.csv",
        "data/maintained.txt",
        "train/checkpoint.json",
        "train/train_log.csv",
        "train/eval_report.json",
        "eval/eval_report.json",
        "eval/eval_report.csv",
    ];
    let differing: Vec<&str> =
        files.iter().copied().filter(|f| fs::read(a.join(f)).ok() != fs::read(b.join(f)).ok()).collect();
    check(
        differing.is_empty(),
        format!("{} artifacts bit-identical across two runs", files.len()),
        format!("artifacts differ: {differing:?}"),
    )
}

const SEEDS: [u64; 3] = [0, 1, 2];

/// Synthetic data with one decay rate per segment, per-lane offsets and
/// lane multipliers whose spread grows with traffic.
fn shared_structure(scenario: Scenario, seed: u64) -> SynthConfig {
    SynthConfig {
        n_segments: 50,
        units_per_segment: 10,
        lane_decay: (0.5, 1.8),
        lane_offset_scale: 1.5,
        unit_jitter: 1.0,
        lane_traffic: 1.0,
        ..SynthConfig::new(scenario, seed)
    }
}

fn shared_structure_split(scenario: Scenario, kind: IndexKind, seed: u64) -> Result<PreparedSplit, String> {
    let out = synth_generate(&shared_structure(scenario, seed)).map_err(|e| e.to_string())?;
    let options = PipelineOptions { split_seed: seed, ..PipelineOptions::default() };
    prepare_split(&out.records, &out.ledger.maintained, kind, scenario.num_lanes(), &options).map_err(|e| e.to_string())
}

fn compact_arch() -> ArchConfig {
    ArchConfig { shared_hidden: 32, head_hidden: 16, head_fc_hidden: 16, head_fc_out: 8, ..ArchConfig::full_size(1, 0) }
}

fn multi_task_benefit() -> Outcome {
    let start = Instant::now();
    let mut runs = Vec::new();
    for seed in SEEDS {
        let mut data = Vec::new();
        for scenario in [Scenario::FourLane, Scenario::ThreeLane, Scenario::TwoLane] {
            for kind in IndexKind::ALL {
                let (_, train, test) = shared_structure_split(scenario, kind, seed)?.encode(&[]).map_err(|e| e.to_string())?;
                data.push(BenchmarkData { scenario: scenario.to_string(), index_kind: kind, train, test });
            }
        }
        let spec = BenchmarkSpec {
            arch: compact_arch(),
            train: TrainConfig::default(),
            seeds: vec![seed],
            families: Family::ALL.to_vec(),
            baseline_aux: vec![AuxMode::With],
        };
        runs.push(run_benchmark(&data, &spec));
    }
    let comparisons = BenchmarkMatrix::pooled(&runs).comparisons();
    for c in &comparisons {
        let best = c.best_baseline.as_ref().map_or("none".to_string(), |(l, v)| format!("{v:.3} {l}"));
        println!("    {} {}: multi_task {:.3}, best baseline {best}", c.scenario, c.index_kind, c.multi_task.unwrap_or(f64::NAN));
    }
    let wins = comparisons.iter().filter(|c| c.multi_task_wins() == Some(true)).count();
    let secs = start.elapsed().as_secs_f64();
    check(
        wins >= 7 && comparisons.len() == 9 && secs < 1800.0,
        format!("multi-task wins {wins}/9 cells in {secs:.0}s"),
        format!("multi-task wins {wins}/{} cells (need 7/9) in {secs:.0}s (limit 1800s)", comparisons.len()),
    )
}

fn ablation_direction() -> Outcome {
    let scenario = Scenario::FourLane;
    let mut full = Vec::new();
    let mut no_shared = Vec::new();
    for seed in SEEDS {
        let split = shared_structure_split(scenario, IndexKind::Pci, seed)?;
        let spec = AblationSpec {
            arch: compact_arch(),
            train: TrainConfig::default(),
            seeds: vec![seed],
            variants: vec![Variant::NoShared],
            feature_blocks: Vec::new(),
        };
        let report = run_ablation(&split, scenario.name(), &spec);
        let mape = |name: &str| report.row(name).and_then(|r| r.cell.mean_overall).ok_or(format!("{name} failed for seed {seed}"));
        full.push(mape("full")?);
        no_shared.push(mape("no_shared")?);
    }
    let (full_mean, full_std) = mean_std(&full);
    let (removed_mean, removed_std) = mean_std(&no_shared);
    let (delta, band) = (removed_mean - full_mean, full_std.max(removed_std));
    check(
        delta > band,
        format!("full {full_mean:.3}, no_shared {removed_mean:.3}: +{delta:.3} beyond noise band {band:.3}"),
        format!("full {full_mean:.3}, no_shared {removed_mean:.3}: delta {delta:.3} not beyond noise band {band:.3}"),
    )
}

fn generator() -> impl Strategy<Value = SynthConfig> {
    (
        prop_oneof![Just(Scenario::TwoLane), Just(Scenario::ThreeLane), Just(Scenario::FourLane)],
        2usize..14,
        any::<u64>(),
        1usize..5,
        0.0f64..0.3,
        0.0f64..0.1,
        0.0f64..1.0,
    )
        .prop_map(|(scenario, n_segments, seed, units, maint, missing, noise)| SynthConfig {
            n_segments,
            units_per_segment: units,
            maintenance_rate: maint,
            missing_rate: missing,
            measurement_noise: noise,
            ..SynthConfig::new(scenario, seed)
        })
}

fn generate(config: &SynthConfig) -> SynthOutput {
    synth_generate(config).expect("valid generator config")
}

fn pipeline_invariants() -> Outcome {
    const CASES: u32 = 128;
    let mut runner = TestRunner::new(ProptestConfig { cases: CASES, failure_persistence: None, ..ProptestConfig::default() });
    let properties: [(&str, Result<(), String>); 4] = [
        (
            "clean idempotence",
            runner
                .run(&(generator(), 0.0f64..5.0), |(config, eps)| {
                    let out = generate(&config);
                    let (once, _) = clean(&out.records, &out.ledger.maintained, eps);
                    let (twice, report) = clean(&once, &out.ledger.maintained, eps);
                    prop_assert_eq!(&twice, &once);
                    prop_assert!(report.removals.is_empty());
                    Ok(())
                })
                .map_err(|e| e.to_string()),
        ),
        (
            "grouped split",
            runner
                .run(&(generator(), any::<u64>(), 0.2f64..0.9), |(config, seed, ratio)| {
                    let out = generate(&config);
                    let (kept, _) = clean(&out.records, &out.ledger.maintained, 2.0);
                    let (samples, _) = build_samples(&kept, IndexKind::Pci, 3, config.scenario.num_lanes());
                    let (train, test) = split(&samples, ratio, seed, true);
                    let segments = |idx: &[usize]| {
                        idx.iter().map(|&i| samples[i].segment_id.clone()).collect::<std::collections::BTreeSet<_>>()
                    };
                    prop_assert!(segments(&train).is_disjoint(&segments(&test)));
                    prop_assert_eq!(train.len() + test.len(), samples.len());
                    Ok(())
                })
                .map_err(|e| e.to_string()),
        ),
        (
            "encoder train-only fit",
            runner
                .run(&(generator(), 100.0f64..2000.0), |(config, shift)| {
                    let out = generate(&config);
                    let opts = PipelineOptions { train_ratio: 0.6, ..PipelineOptions::default() };
                    let Ok(prepared) =
                        prepare_split(&out.records, &out.ledger.maintained, IndexKind::Pci, config.scenario.num_lanes(), &opts)
                    else {
                        return Ok(());
                    };
                    let (encoder, train, _) = prepared.encode(&[]).unwrap();
                    prop_assert_eq!(&encoder, &fit_encoder(prepared.train.iter().map(|s| &s.attrs), &[]).unwrap());
                    let mut perturbed = prepared.clone();
                    for s in &mut perturbed.test {
                        s.attrs.aadt = (s.attrs.aadt + shift).min(3000.0);
                        s.attrs.town = "Elsewhere".into();
                    }
                    let (encoder2, train2, _) = perturbed.encode(&[]).unwrap();
                    prop_assert_eq!(&encoder2, &encoder);
                    prop_assert_eq!(&train2, &train);
                    prop_assert_eq!(Dataset::from_samples(&prepared.train, &encoder).unwrap(), train);
                    Ok(())
                })
                .map_err(|e| e.to_string()),
        ),
        (
            "target positivity",
            runner
                .run(&generator(), |config| {
                    let out = generate(&config);
                    let (kept, _) = clean(&out.records, &out.ledger.maintained, 2.0);
                    for kind in IndexKind::ALL {
                        let (samples, _) = build_samples(&kept, kind, 3, config.scenario.num_lanes());
                        for s in &samples {
                            prop_assert!(s.targets.iter().all(|&t| t > 0.0 && t.is_finite()));
                        }
                    }
                    Ok(())
                })
                .map_err(|e| e.to_string()),
        ),
    ];
    let failed: Vec<String> =
        properties.iter().filter_map(|(name, r)| r.as_ref().err().map(|e| format!("{name}: {e}"))).collect();
    check(
        failed.is_empty(),
        format!("{} properties held over {CASES} generator configurations each", properties.len()),
        failed.join("; "),
    )
}

fn shape_conformance() -> Outcome {
    let m = 716;
    let shapes = layer_shapes(&ArchConfig::full_size(4, 10), m).map_err(|e| e.to_string())?;
    let get = |name: &str| shapes.iter().find(|(n, _)| *n == name).map(|(_, s)| s.clone());
    let expected = [
        ("shared_lstm", vec![m, 3, 128]),
        ("head_lstm", vec![m, 1]),
        ("head_fc", vec![m, 32]),
        ("output", vec![m, 1]),
    ];
    let wrong: Vec<String> = expected
        .iter()
        .filter(|(name, shape)| get(name).as_ref() != Some(shape))
        .map(|(name, shape)| format!("{name}: got {:?}, expected {shape:?}", get(name)))
        .collect();
    check(
        wrong.is_empty(),
        expected.iter().map(|(n, s)| format!("{n} {s:?}")).collect::<Vec<_>>().join(", "),
        wrong.join("; "),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("gradient correctness", gradient_correctness),
        ("forward transcription", transcription),
        ("loss and metric oracles", loss_and_metrics),
        ("overfit sanity", overfit),
        ("end-to-end determinism", determinism),
        ("multi-task benefit", multi_task_benefit),
        ("ablation direction", ablation_direction),
        ("pipeline invariants", pipeline_invariants),
        ("shape conformance", shape_conformance),
    ];
    let only: Vec<usize> = std::env::var("ACCEPTANCE_ONLY")
        .map(|s| s.split(',').filter_map(|v| v.trim().parse().ok()).collect())
        .unwrap_or_default();
    let mut failures = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let number = i + 1;
        if !only.is_empty() && !only.contains(&number) {
            continue;
        }
        let start = Instant::now();
        let result = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {number} {name}: PASS ({detail}) [{secs:.1}s]"),
            Err(detail) => {
                failures += 1;
                println!("criterion {number} {name}: FAIL ({detail}) [{secs:.1}s]");
            }
        }
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

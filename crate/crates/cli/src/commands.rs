use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};

use lanecast::data::{
    parse_records, prediction_inputs, prepare_split, rescale, synth_generate, write_records, Dataset, IndexKind,
    PerformanceRecord, PipelineOptions, PreparedSplit, Scenario, SynthConfig,
};
use lanecast::eval::{run_ablation, run_benchmark, BenchmarkData, EvalReport};
use lanecast::model::Checkpoint;
use lanecast::training::{fit, predict_dataset, TrainError};
use log::{info, warn};
use serde_json::json;

use crate::config::{resolve, Overrides, RunConfig};
use crate::{Cli, CliError, Command, DataArgs, OptionalDataArgs, Preset};

pub const RECORDS_FILE: &str = "records.csv";
pub const MAINTAINED_FILE: &str = "maintained.txt";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const PREDICTION_BAND: (f64, f64) = (0.0, 120.0);

const OVERFIT_SAMPLES: usize = 32;
const OVERFIT_EPOCHS: usize = 2000;

/// Resolves the configuration and dispatches the subcommand.
pub fn run(cli: Cli) -> Result<(), CliError> {
    let overrides = Overrides {
        seed: cli.seed,
        scenario: cli.scenario,
        index: cli.index,
        variant: cli.variant,
        out_dir: cli.out_dir.clone(),
    };
    let mut rc = resolve(cli.config.as_deref(), &overrides)?;
    match cli.command {
        Command::Synth { segments } => {
            if let Some(n) = segments {
                rc.synth.n_segments = n;
                rc.synth.validate().map_err(|e| CliError::Usage(e.to_string()))?;
            }
            cmd_synth(&rc).map(|_| ())
        }
        Command::Train { data, max_samples, preset } => {
            let mut limit = max_samples;
            if preset == Some(Preset::Overfit) {
                limit = Some(limit.unwrap_or(OVERFIT_SAMPLES));
                rc.train.epochs = OVERFIT_EPOCHS;
            }
            cmd_train(&rc, &data, limit).map(|_| ())
        }
        Command::Eval { checkpoint, data } => cmd_eval(&rc, &checkpoint, &data).map(|_| ()),
        Command::Benchmark { data } => {
            let scenarios = if cli.scenario.is_some() || data.data.is_some() { vec![rc.scenario] } else { rc.benchmark.scenarios.clone() };
            let indices = cli.index.map_or_else(|| rc.benchmark.indices.clone(), |i| vec![i]);
            cmd_benchmark(&rc, &scenarios, &indices, &data)
        }
        Command::Ablate { data } => cmd_ablate(&rc, &data),
        Command::Predict { checkpoint, input } => cmd_predict(&rc, &checkpoint, &input).map(|_| ()),
    }
}

fn prepare_out_dir(rc: &RunConfig) -> Result<PathBuf, CliError> {
    fs::create_dir_all(&rc.out_dir)?;
    rc.write_resolved(&rc.out_dir)?;
    Ok(rc.out_dir.clone())
}

fn require_file(path: &Path, what: &str) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{what} {} does not exist", path.display())))
    }
}

pub fn load_records(path: &Path) -> Result<Vec<PerformanceRecord>, CliError> {
    require_file(path, "data file")?;
    let outcome = parse_records(BufReader::new(File::open(path)?))?;
    for e in &outcome.errors {
        warn!("{}: line {}: {}", path.display(), e.line, e.message);
    }
    if outcome.records.is_empty() {
        return Err(CliError::Data(format!("{} holds no valid records", path.display())));
    }
    Ok(outcome.records)
}

pub fn load_maintained(path: Option<&Path>) -> Result<Vec<String>, CliError> {
    let Some(path) = path else { return Ok(Vec::new()) };
    require_file(path, "maintenance list")?;
    Ok(fs::read_to_string(path)?.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect())
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    fs::write(path, serde_json::to_string_pretty(value).map_err(|e| CliError::Data(e.to_string()))?)?;
    Ok(())
}

/// Writes `records.csv`, `maintained.txt` and `synth_ledger.json`.
pub fn cmd_synth(rc: &RunConfig) -> Result<PathBuf, CliError> {
    let out = synth_generate(&rc.synth).map_err(|e| CliError::Usage(e.to_string()))?;
    let dir = prepare_out_dir(rc)?;
    write_records(File::create(dir.join(RECORDS_FILE))?, &out.records)?;
    let mut maintained = out.ledger.maintained.join("\n");
    if !maintained.is_empty() {
        maintained.push('\n');
    }
    fs::write(dir.join(MAINTAINED_FILE), maintained)?;
    write_json(&dir.join("synth_ledger.json"), &out.ledger)?;
    info!(
        "{} records for {} segments written to {}",
        out.records.len(),
        out.ledger.segments,
        dir.display()
    );
    Ok(dir)
}

fn split_from(
    records: &[PerformanceRecord],
    maintained: &[String],
    kind: IndexKind,
    num_lanes: usize,
    opts: &PipelineOptions,
) -> Result<PreparedSplit, CliError> {
    let split = prepare_split(records, maintained, kind, num_lanes, opts)?;
    info!(
        "{kind}: {} records kept of {}, {} samples built, {} units dropped, {} train / {} test",
        split.clean_report.records_kept,
        split.clean_report.records_in,
        split.sample_report.built,
        split.sample_report.dropped.len(),
        split.train.len(),
        split.test.len()
    );
    Ok(split)
}

fn score(ck: &Checkpoint, scenario: &str, kind: IndexKind, test: &Dataset) -> Result<EvalReport, CliError> {
    let preds = rescale(&predict_dataset(&ck.params, &ck.arch, test)?);
    Ok(EvalReport::from_predictions(ck.arch.variant.name(), scenario, kind, &preds, &rescale(&test.targets))?)
}

fn write_report(dir: &Path, report: &EvalReport) -> Result<(), CliError> {
    fs::write(dir.join("eval_report.csv"), report.to_delimited())?;
    write_json(&dir.join("eval_report.json"), report)
}

/// Trains on the training split and writes the checkpoint, the epoch log and
/// the test-split report.
pub fn cmd_train(rc: &RunConfig, data: &DataArgs, max_samples: Option<usize>) -> Result<EvalReport, CliError> {
    let records = load_records(&data.data)?;
    let maintained = load_maintained(data.maintained.as_deref())?;
    let mut split = split_from(&records, &maintained, rc.index, rc.scenario.num_lanes(), &rc.pipeline)?;
    if let Some(n) = max_samples {
        if n == 0 {
            return Err(CliError::Usage("max_samples must be positive".into()));
        }
        split.train.truncate(n);
    }
    let (encoder, train, test) = split.encode(&[])?;
    let arch = rc.arch_for(split.num_lanes, train.aux_dim(), rc.variant);
    let dir = prepare_out_dir(rc)?;

    let outcome = match fit(&train, Some(&test), &arch, &rc.train) {
        Ok(o) => o,
        Err(TrainError::Diverged { epoch, reason, log }) => {
            fs::write(dir.join("train_log.csv"), log.to_delimited())?;
            return Err(CliError::Numeric(format!("training diverged at epoch {epoch}: {reason}")));
        }
        Err(e) => return Err(e.into()),
    };
    let mut ck = outcome.final_checkpoint;
    ck.encoder = Some(encoder);
    ck.meta.insert("scenario".into(), rc.scenario.to_string());
    ck.meta.insert("index".into(), rc.index.to_string());
    ck.meta.insert("pipeline".into(), json!(rc.pipeline).to_string());
    ck.meta.insert("train_samples".into(), train.len().to_string());
    ck.save(&dir.join(CHECKPOINT_FILE))?;
    fs::write(dir.join("train_log.csv"), outcome.log.to_delimited())?;
    write_json(
        &dir.join("data_report.json"),
        &json!({ "clean": split.clean_report, "samples": split.sample_report }),
    )?;

    let report = score(&ck, rc.scenario.name(), rc.index, &test)?;
    write_report(&dir, &report)?;
    if let (Some(first), Some(last)) = (outcome.log.initial.as_ref(), outcome.log.last()) {
        info!("loss {:.6} -> {:.6} after {} epochs", first.loss, last.loss, last.epoch);
    }
    info!("test MAPE {:.4}% ({})", report.overall_mape, dir.display());
    Ok(report)
}

fn checkpoint_meta<'a>(ck: &'a Checkpoint, key: &str) -> Result<&'a str, CliError> {
    ck.meta
        .get(key)
        .map(String::as_str)
        .ok_or_else(|| CliError::Data(format!("checkpoint lacks `{key}` metadata")))
}

fn load_checkpoint(path: &Path) -> Result<(Checkpoint, IndexKind), CliError> {
    require_file(path, "checkpoint")?;
    let ck = Checkpoint::load(path)?;
    if ck.encoder.is_none() {
        return Err(CliError::Data("checkpoint carries no feature encoder".into()));
    }
    let kind = checkpoint_meta(&ck, "index")?.parse()?;
    Ok((ck, kind))
}

/// Rebuilds the split the checkpoint was trained with and scores its test
/// side.
pub fn cmd_eval(rc: &RunConfig, checkpoint: &Path, data: &DataArgs) -> Result<EvalReport, CliError> {
    let (ck, kind) = load_checkpoint(checkpoint)?;
    let scenario: Scenario = checkpoint_meta(&ck, "scenario")?.parse()?;
    let pipeline: PipelineOptions = serde_json::from_str(checkpoint_meta(&ck, "pipeline")?)
        .map_err(|e| CliError::Data(format!("checkpoint pipeline settings: {e}")))?;
    let records = load_records(&data.data)?;
    let maintained = load_maintained(data.maintained.as_deref())?;
    let split = split_from(&records, &maintained, kind, ck.arch.num_lanes, &pipeline)?;
    let encoder = ck.encoder.as_ref().expect("checked on load");
    let test = Dataset::from_samples(&split.test, encoder)?;
    let report = score(&ck, scenario.name(), kind, &test)?;
    let dir = prepare_out_dir(rc)?;
    write_report(&dir, &report)?;
    info!("test MAPE {:.4}% ({})", report.overall_mape, dir.display());
    Ok(report)
}

fn benchmark_records(
    rc: &RunConfig,
    scenario: Scenario,
    data: &OptionalDataArgs,
) -> Result<(Vec<PerformanceRecord>, Vec<String>), CliError> {
    match &data.data {
        Some(path) => Ok((load_records(path)?, load_maintained(data.maintained.as_deref())?)),
        None => {
            let config = SynthConfig {
                scenario,
                n_segments: rc.benchmark.segments.unwrap_or(if scenario == rc.scenario {
                    rc.synth.n_segments
                } else {
                    scenario.default_segments()
                }),
                ..rc.synth.clone()
            };
            let out = synth_generate(&config).map_err(|e| CliError::Usage(e.to_string()))?;
            Ok((out.records, out.ledger.maintained))
        }
    }
}

/// Runs the benchmark grid and writes the matrix, its long form and the
/// multi-task comparison table.
pub fn cmd_benchmark(
    rc: &RunConfig,
    scenarios: &[Scenario],
    indices: &[IndexKind],
    data: &OptionalDataArgs,
) -> Result<(), CliError> {
    let dir = prepare_out_dir(rc)?;
    let mut failures = Vec::new();
    let mut sets = Vec::new();
    for &scenario in scenarios {
        let (records, maintained) = benchmark_records(rc, scenario, data)?;
        for &kind in indices {
            let prepared = split_from(&records, &maintained, kind, scenario.num_lanes(), &rc.pipeline)
                .and_then(|s| s.encode(&[]).map_err(CliError::from));
            match prepared {
                Ok((_, train, test)) => sets.push(BenchmarkData { scenario: scenario.to_string(), index_kind: kind, train, test }),
                Err(e) => failures.push(format!("{scenario} {kind}: {e}")),
            }
        }
    }
    let matrix = run_benchmark(&sets, &rc.benchmark_spec());
    fs::write(dir.join("benchmark.csv"), matrix.to_delimited())?;
    fs::write(dir.join("benchmark_long.csv"), matrix.to_long_delimited())?;
    fs::write(dir.join("benchmark_summary.csv"), matrix.comparisons_delimited())?;
    fs::write(dir.join("benchmark.json"), matrix.to_json())?;
    for c in matrix.comparisons() {
        info!(
            "{} {}: multi_task {:?} vs best baseline {:?}",
            c.scenario, c.index_kind, c.multi_task, c.best_baseline
        );
    }
    failures.extend(matrix.failures().iter().map(|c| {
        format!("{} {} {}: {}", c.scenario, c.index_kind, c.label, c.failure.as_deref().unwrap_or("failed"))
    }));
    let total = matrix.cells.len() + failures.len() - matrix.failures().len();
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Partial { failures, total })
    }
}

/// Runs the structural and feature ablations on one scenario and index.
pub fn cmd_ablate(rc: &RunConfig, data: &OptionalDataArgs) -> Result<(), CliError> {
    let (records, maintained) = benchmark_records(rc, rc.scenario, data)?;
    let split = split_from(&records, &maintained, rc.index, rc.scenario.num_lanes(), &rc.pipeline)?;
    let dir = prepare_out_dir(rc)?;
    let report = run_ablation(&split, rc.scenario.name(), &rc.ablation_spec());
    fs::write(dir.join("ablation.csv"), report.to_delimited())?;
    fs::write(dir.join("ablation.json"), report.to_json())?;
    for r in &report.rows {
        info!(
            "{}: mean {:?} delta {:?} band {:?}",
            r.name, r.cell.mean_overall, r.delta_vs_full, r.noise_band
        );
    }
    let failures: Vec<String> = report
        .rows
        .iter()
        .filter_map(|r| r.cell.failure.as_ref().map(|f| format!("{}: {f}", r.name)))
        .collect();
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Partial { failures, total: report.rows.len() })
    }
}

/// Predicts every lane of every unit in `input` and writes
/// `predictions.csv` in index points.
pub fn cmd_predict(rc: &RunConfig, checkpoint: &Path, input: &Path) -> Result<PathBuf, CliError> {
    let (ck, kind) = load_checkpoint(checkpoint)?;
    let records = load_records(input)?;
    let samples = prediction_inputs(&records, kind, ck.arch.series_len);
    if samples.is_empty() {
        return Err(CliError::Data(format!(
            "no segment in {} has {} consecutive {kind} years",
            input.display(),
            ck.arch.series_len
        )));
    }
    let data = Dataset::from_samples(&samples, ck.encoder.as_ref().expect("checked on load"))?;
    let preds = rescale(&predict_dataset(&ck.params, &ck.arch, &data)?);

    let n = ck.arch.num_lanes;
    let mut out = String::from("segment_id,unit_id,year");
    for l in 1..=n {
        out.push_str(&format!(",lane{l}"));
    }
    out.push('\n');
    let mut outside = 0;
    for (i, s) in samples.iter().enumerate() {
        out.push_str(&format!("{},{},{}", s.segment_id, s.unit_id, s.target_year));
        for l in 0..n {
            let v = preds.get(i, l);
            if !(PREDICTION_BAND.0..=PREDICTION_BAND.1).contains(&v) {
                outside += 1;
                warn!("{} unit {} lane {}: prediction {v} outside {:?}", s.segment_id, s.unit_id, l + 1, PREDICTION_BAND);
            }
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    let dir = prepare_out_dir(rc)?;
    let path = dir.join("predictions.csv");
    fs::write(&path, out)?;
    info!("{} units predicted, {outside} values outside the sanity band ({})", samples.len(), path.display());
    Ok(path)
}

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::report::EvalReport;
use super::EvalError;
use crate::data::{rescale, Dataset, IndexKind};
use crate::model::{ArchConfig, Variant};
use crate::nn::Matrix;
use crate::training::{fit, predict_dataset, TrainConfig, TrainError};

/// Model families compared by the benchmark.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// One single-task model per lane.
    LaneSpecific,
    /// One single-task model on every lane's samples, lane identity one-hot
    /// appended to the auxiliary features.
    Mix,
    MultiTask,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::LaneSpecific, Family::Mix, Family::MultiTask];

    pub fn name(self) -> &'static str {
        match self {
            Family::LaneSpecific => "lane_specific",
            Family::Mix => "mix",
            Family::MultiTask => "multi_task",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| EvalError::Config(format!("unknown model family `{s}`")))
    }
}

/// Whether a baseline sees the encoded road attributes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuxMode {
    With,
    Without,
}

impl AuxMode {
    pub fn name(self) -> &'static str {
        match self {
            AuxMode::With => "with_aux",
            AuxMode::Without => "without_aux",
        }
    }
}

/// Encoded train and test sets for one scenario and index kind.
#[derive(Clone, Debug)]
pub struct BenchmarkData {
    pub scenario: String,
    pub index_kind: IndexKind,
    pub train: Dataset,
    pub test: Dataset,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchmarkSpec {
    /// Layer sizes shared by every family; lane count, auxiliary width and
    /// variant are set per model.
    pub arch: ArchConfig,
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    pub families: Vec<Family>,
    /// Auxiliary modes run for the two baseline families.
    pub baseline_aux: Vec<AuxMode>,
}

impl Default for BenchmarkSpec {
    fn default() -> Self {
        BenchmarkSpec {
            arch: ArchConfig::full_size(1, 0),
            train: TrainConfig::default(),
            seeds: vec![0, 1, 2],
            families: Family::ALL.to_vec(),
            baseline_aux: vec![AuxMode::With],
        }
    }
}

fn sized(template: &ArchConfig, num_lanes: usize, aux_dim: usize, variant: Variant) -> ArchConfig {
    ArchConfig { num_lanes, aux_dim, variant, ..template.clone() }
}

fn fit_predict(
    train: &Dataset,
    test: &Dataset,
    arch: &ArchConfig,
    config: &TrainConfig,
) -> Result<Matrix, TrainError> {
    let out = fit(train, None, arch, config)?;
    Ok(predict_dataset(&out.final_checkpoint.params, arch, test)?)
}

/// Trains one model of `family` with `config.seed` and scores it on the
/// test set. Predictions are `M x N` in training scale.
pub fn train_family(
    family: Family,
    aux: AuxMode,
    variant: Variant,
    data: &BenchmarkData,
    template: &ArchConfig,
    config: &TrainConfig,
) -> Result<Matrix, TrainError> {
    let (train, test) = match aux {
        AuxMode::With => (data.train.clone(), data.test.clone()),
        AuxMode::Without => (data.train.without_aux(), data.test.without_aux()),
    };
    let n = train.num_lanes();
    match family {
        Family::MultiTask => fit_predict(&train, &test, &sized(template, n, train.aux_dim(), variant), config),
        Family::LaneSpecific => {
            let arch = sized(template, 1, train.aux_dim(), variant);
            let columns = (0..n)
                .map(|lane| fit_predict(&train.lane(lane), &test.lane(lane), &arch, config))
                .collect::<Result<Vec<_>, _>>()?;
            let refs: Vec<&Matrix> = columns.iter().collect();
            Ok(Matrix::hcat(&refs)?)
        }
        Family::Mix => {
            let pooled_train = train.pooled_with_lane_one_hot();
            let pooled_test = test.pooled_with_lane_one_hot();
            let arch = sized(template, 1, pooled_train.aux_dim(), variant);
            let p = fit_predict(&pooled_train, &pooled_test, &arch, config)?;
            let m = test.len();
            Ok(Matrix::from_fn(m, n, |i, lane| p.get(lane * m + i, 0)))
        }
    }
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// One benchmark cell: a model configuration run once per seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub label: String,
    pub scenario: String,
    pub index_kind: IndexKind,
    pub family: Family,
    pub aux: AuxMode,
    pub variant: Variant,
    pub seeds: Vec<u64>,
    pub reports: Vec<EvalReport>,
    pub mean_overall: Option<f64>,
    pub std_overall: Option<f64>,
    /// Per-lane MAPE averaged over seeds.
    pub mean_lane: Vec<f64>,
    pub failure: Option<String>,
}

impl Cell {
    pub fn is_ok(&self) -> bool {
        self.failure.is_none()
    }
}

pub fn cell_label(family: Family, aux: AuxMode, variant: Variant) -> String {
    match (family, variant) {
        (Family::MultiTask, Variant::Full) => family.name().to_string(),
        (Family::MultiTask, v) => format!("{family}/{v}"),
        (_, Variant::Full) => format!("{family}/{}", aux.name()),
        (_, v) => format!("{family}/{}/{v}", aux.name()),
    }
}

/// Runs `family` once per seed on `data`. A failing seed marks the whole
/// cell failed with its reason.
pub fn run_cell(
    family: Family,
    aux: AuxMode,
    variant: Variant,
    data: &BenchmarkData,
    template: &ArchConfig,
    config: &TrainConfig,
    seeds: &[u64],
) -> Cell {
    let label = cell_label(family, aux, variant);
    let mut cell = Cell {
        label: label.clone(),
        scenario: data.scenario.clone(),
        index_kind: data.index_kind,
        family,
        aux,
        variant,
        seeds: seeds.to_vec(),
        reports: Vec::new(),
        mean_overall: None,
        std_overall: None,
        mean_lane: Vec::new(),
        failure: None,
    };
    let actuals = rescale(&data.test.targets);
    for &seed in seeds {
        log::info!("{} {} {label} seed {seed}", data.scenario, data.index_kind);
        let cfg = TrainConfig { seed, ..config.clone() };
        let result = train_family(family, aux, variant, data, template, &cfg)
            .map_err(|e| e.to_string())
            .and_then(|p| {
                EvalReport::from_predictions(&label, &data.scenario, data.index_kind, &rescale(&p), &actuals)
                    .map_err(|e| e.to_string())
            });
        match result {
            Ok(r) => cell.reports.push(r),
            Err(e) => {
                log::warn!("{} {} {label} seed {seed} failed: {e}", data.scenario, data.index_kind);
                cell.failure = Some(format!("seed {seed}: {e}"));
                return cell;
            }
        }
    }
    summarize(&mut cell);
    cell
}

fn summarize(cell: &mut Cell) {
    if cell.reports.is_empty() {
        cell.failure.get_or_insert_with(|| "no seeds requested".into());
        return;
    }
    let overall: Vec<f64> = cell.reports.iter().map(|r| r.overall_mape).collect();
    let (mean, std) = mean_std(&overall);
    cell.mean_overall = Some(mean);
    cell.std_overall = Some(std);
    let lanes = cell.reports[0].lane_mape.len();
    cell.mean_lane =
        (0..lanes).map(|n| mean_std(&cell.reports.iter().map(|r| r.lane_mape[n]).collect::<Vec<_>>()).0).collect();
}

/// Every cell of a benchmark or ablation run, in execution order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkMatrix {
    pub cells: Vec<Cell>,
}

impl BenchmarkMatrix {
    pub fn find(&self, scenario: &str, index_kind: IndexKind, label: &str) -> Option<&Cell> {
        self.cells.iter().find(|c| c.scenario == scenario && c.index_kind == index_kind && c.label == label)
    }

    /// Pools repeated runs, such as one per synthetic dataset seed, into one
    /// matrix. Cells sharing scenario, index kind and label are merged: seeds
    /// and reports are concatenated and statistics recomputed. A failure in
    /// any run fails the merged cell.
    pub fn pooled(runs: &[BenchmarkMatrix]) -> BenchmarkMatrix {
        let mut out = BenchmarkMatrix::default();
        for c in runs.iter().flat_map(|r| &r.cells) {
            match out.cells.iter_mut().find(|o| o.scenario == c.scenario && o.index_kind == c.index_kind && o.label == c.label) {
                Some(o) => {
                    o.seeds.extend(&c.seeds);
                    o.reports.extend(c.reports.iter().cloned());
                    if o.failure.is_none() {
                        o.failure = c.failure.clone();
                    }
                }
                None => out.cells.push(c.clone()),
            }
        }
        for c in &mut out.cells {
            if c.failure.is_some() {
                c.mean_overall = None;
                c.std_overall = None;
                c.mean_lane.clear();
            } else {
                summarize(c);
            }
        }
        out
    }

    pub fn failures(&self) -> Vec<&Cell> {
        self.cells.iter().filter(|c| !c.is_ok()).collect()
    }

    /// One row per cell with seed statistics and per-lane means.
    pub fn to_delimited(&self) -> String {
        let lanes = self.cells.iter().map(|c| c.mean_lane.len()).max().unwrap_or(0);
        let mut out = String::from("scenario,index,model,family,aux,variant,seeds,mean_mape,std_mape");
        for n in 1..=lanes {
            out.push_str(&format!(",lane{n}_mape"));
        }
        out.push_str(",status\n");
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        for c in &self.cells {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}",
                c.scenario,
                c.index_kind,
                c.label,
                c.family,
                c.aux.name(),
                c.variant,
                c.seeds.len(),
                opt(c.mean_overall),
                opt(c.std_overall)
            ));
            for n in 0..lanes {
                out.push_str(&format!(",{}", c.mean_lane.get(n).map_or(String::new(), |v| v.to_string())));
            }
            let status = c.failure.as_ref().map_or("ok".to_string(), |f| format!("failed: {}", f.replace([',', '\n'], ";")));
            out.push_str(&format!(",{status}\n"));
        }
        out
    }

    /// Long format for charting: one row per seed and lane plus an overall
    /// row per seed.
    pub fn to_long_delimited(&self) -> String {
        let mut out = String::from("model,scenario,index,seed,lane,mape\n");
        for c in &self.cells {
            for (seed, r) in c.seeds.iter().zip(&c.reports) {
                for (n, m) in r.lane_mape.iter().enumerate() {
                    out.push_str(&format!("{},{},{},{},{},{}\n", c.label, c.scenario, c.index_kind, seed, n + 1, m));
                }
                out.push_str(&format!("{},{},{},{},overall,{}\n", c.label, c.scenario, c.index_kind, seed, r.overall_mape));
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("matrix serializes")
    }

    /// Multi-task model against the best successful baseline, one entry per
    /// scenario and index kind in execution order.
    pub fn comparisons(&self) -> Vec<Comparison> {
        let mut out: Vec<Comparison> = Vec::new();
        for c in self.cells.iter().filter(|c| c.variant == Variant::Full) {
            let pos = match out.iter().position(|o| o.scenario == c.scenario && o.index_kind == c.index_kind) {
                Some(p) => p,
                None => {
                    out.push(Comparison {
                        scenario: c.scenario.clone(),
                        index_kind: c.index_kind,
                        multi_task: None,
                        best_baseline: None,
                    });
                    out.len() - 1
                }
            };
            let Some(m) = c.mean_overall else { continue };
            let o = &mut out[pos];
            if c.family == Family::MultiTask {
                o.multi_task = Some(m);
            } else if o.best_baseline.as_ref().is_none_or(|(_, b)| m < *b) {
                o.best_baseline = Some((c.label.clone(), m));
            }
        }
        out
    }

    pub fn comparisons_delimited(&self) -> String {
        let mut out = String::from("scenario,index,multi_task_mape,best_baseline,best_baseline_mape,multi_task_wins\n");
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        for c in self.comparisons() {
            let (label, mape) = c.best_baseline.clone().map_or((String::new(), None), |(l, m)| (l, Some(m)));
            let wins = c.multi_task_wins().map_or(String::new(), |w| w.to_string());
            out.push_str(&format!("{},{},{},{},{},{}\n", c.scenario, c.index_kind, opt(c.multi_task), label, opt(mape), wins));
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub scenario: String,
    pub index_kind: IndexKind,
    pub multi_task: Option<f64>,
    /// Label and mean overall MAPE of the best baseline cell.
    pub best_baseline: Option<(String, f64)>,
}

impl Comparison {
    /// Whether the multi-task mean is at most the best baseline mean; `None`
    /// when either side is missing.
    pub fn multi_task_wins(&self) -> Option<bool> {
        Some(self.multi_task? <= self.best_baseline.as_ref()?.1)
    }
}

/// Runs every requested family on every dataset. Baselines run once per
/// requested auxiliary mode; the multi-task model always uses the auxiliary
/// features. Failed cells are kept with their reason.
pub fn run_benchmark(data: &[BenchmarkData], spec: &BenchmarkSpec) -> BenchmarkMatrix {
    let mut matrix = BenchmarkMatrix::default();
    for d in data {
        for &family in &spec.families {
            let modes = if family == Family::MultiTask { vec![AuxMode::With] } else { spec.baseline_aux.clone() };
            for aux in modes {
                matrix.cells.push(run_cell(family, aux, Variant::Full, d, &spec.arch, &spec.train, &spec.seeds));
            }
        }
    }
    matrix
}

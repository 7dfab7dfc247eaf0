use serde::{Deserialize, Serialize};

use super::benchmark::{run_cell, AuxMode, BenchmarkData, Cell, Family};
use crate::data::{FeatureBlock, IndexKind, PreparedSplit};
use crate::model::{ArchConfig, Variant};
use crate::training::TrainConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationKind {
    Full,
    Structural,
    Feature,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub name: String,
    pub kind: AblationKind,
    pub variant: Variant,
    pub removed_block: Option<FeatureBlock>,
    pub cell: Cell,
    /// Mean overall MAPE minus the full model's.
    pub delta_vs_full: Option<f64>,
    /// Larger of this row's and the full model's seed standard deviation.
    pub noise_band: Option<f64>,
}

impl AblationRow {
    /// True when the row is worse than the full model by more than the
    /// seed noise band.
    pub fn significantly_worse(&self) -> bool {
        matches!((self.delta_vs_full, self.noise_band), (Some(d), Some(b)) if d > b)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub scenario: String,
    pub index_kind: IndexKind,
    pub rows: Vec<AblationRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationSpec {
    pub arch: ArchConfig,
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    pub variants: Vec<Variant>,
    pub feature_blocks: Vec<FeatureBlock>,
}

impl Default for AblationSpec {
    fn default() -> Self {
        AblationSpec {
            arch: ArchConfig::full_size(1, 0),
            train: TrainConfig::default(),
            seeds: vec![0, 1, 2],
            variants: Variant::ABLATIONS.to_vec(),
            feature_blocks: FeatureBlock::ALL.to_vec(),
        }
    }
}

impl AblationReport {
    pub fn full(&self) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.kind == AblationKind::Full)
    }

    pub fn row(&self, name: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn to_delimited(&self) -> String {
        let mut out = String::from("scenario,index,name,kind,mean_mape,std_mape,delta_vs_full,noise_band,status\n");
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        for r in &self.rows {
            let kind = match r.kind {
                AblationKind::Full => "full",
                AblationKind::Structural => "structural",
                AblationKind::Feature => "feature",
            };
            let status = r.cell.failure.as_ref().map_or("ok".to_string(), |f| format!("failed: {}", f.replace([',', '\n'], ";")));
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                self.scenario,
                self.index_kind,
                r.name,
                kind,
                opt(r.cell.mean_overall),
                opt(r.cell.std_overall),
                opt(r.delta_vs_full),
                opt(r.noise_band),
                status
            ));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Trains the full multi-task model, each structural variant, and the full
/// model with each auxiliary feature block removed, all on the same split
/// and seeds, and reports every row's MAPE change against the full model.
pub fn run_ablation(split: &PreparedSplit, scenario: &str, spec: &AblationSpec) -> AblationReport {
    let mut rows = Vec::new();
    let mut push = |name: String, kind, variant, removed_block, cell: Cell| {
        rows.push(AblationRow { name, kind, variant, removed_block, cell, delta_vs_full: None, noise_band: None });
    };
    let failed = |variant: Variant, reason: String| Cell {
        label: variant.to_string(),
        scenario: scenario.to_string(),
        index_kind: split.index_kind,
        family: Family::MultiTask,
        aux: AuxMode::With,
        variant,
        seeds: spec.seeds.clone(),
        reports: Vec::new(),
        mean_overall: None,
        std_overall: None,
        mean_lane: Vec::new(),
        failure: Some(reason),
    };

    match split.encode(&[]) {
        Ok((_, train, test)) => {
            let data = BenchmarkData { scenario: scenario.into(), index_kind: split.index_kind, train, test };
            let run = |v| run_cell(Family::MultiTask, AuxMode::With, v, &data, &spec.arch, &spec.train, &spec.seeds);
            push("full".into(), AblationKind::Full, Variant::Full, None, run(Variant::Full));
            for &v in spec.variants.iter().filter(|v| **v != Variant::Full) {
                push(v.to_string(), AblationKind::Structural, v, None, run(v));
            }
        }
        Err(e) => {
            push("full".into(), AblationKind::Full, Variant::Full, None, failed(Variant::Full, e.to_string()));
        }
    }
    for &block in &spec.feature_blocks {
        let name = format!("without_{block}");
        let cell = match split.encode(&[block]) {
            Ok((_, train, test)) => {
                let data = BenchmarkData { scenario: scenario.into(), index_kind: split.index_kind, train, test };
                let mut c = run_cell(Family::MultiTask, AuxMode::With, Variant::Full, &data, &spec.arch, &spec.train, &spec.seeds);
                c.label = name.clone();
                c
            }
            Err(e) => failed(Variant::Full, e.to_string()),
        };
        push(name, AblationKind::Feature, Variant::Full, Some(block), cell);
    }

    let full = rows.iter().find(|r| r.kind == AblationKind::Full).map(|r| (r.cell.mean_overall, r.cell.std_overall));
    if let Some((Some(full_mean), Some(full_std))) = full {
        for r in rows.iter_mut().filter(|r| r.kind != AblationKind::Full) {
            if let (Some(m), Some(s)) = (r.cell.mean_overall, r.cell.std_overall) {
                r.delta_vs_full = Some(m - full_mean);
                r.noise_band = Some(s.max(full_std));
            }
        }
    }
    AblationReport { scenario: scenario.into(), index_kind: split.index_kind, rows }
}

use std::fs;
use std::path::{Path, PathBuf};

use lanecast::data::{FeatureBlock, IndexKind, PipelineOptions, Scenario, SynthConfig};
use lanecast::eval::{AblationSpec, AuxMode, BenchmarkSpec, Family};
use lanecast::model::{ArchConfig, HeadFcInput, Variant};
use lanecast::seed::derive_seed;
use lanecast::training::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const RESOLVED_CONFIG: &str = "resolved_config.toml";

/// Architecture settings that do not depend on the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArchSettings {
    pub shared_layers: usize,
    pub shared_hidden: usize,
    pub head_layers: usize,
    pub head_hidden: usize,
    pub head_fc_hidden: usize,
    pub head_fc_out: usize,
    pub leaky_alpha: f64,
    pub forget_bias: f64,
    pub head_fc_input: HeadFcInput,
}

impl Default for ArchSettings {
    fn default() -> Self {
        let a = ArchConfig::full_size(1, 0);
        ArchSettings {
            shared_layers: a.shared_layers,
            shared_hidden: a.shared_hidden,
            head_layers: a.head_layers,
            head_hidden: a.head_hidden,
            head_fc_hidden: a.head_fc_hidden,
            head_fc_out: a.head_fc_out,
            leaky_alpha: a.leaky_alpha,
            forget_bias: a.forget_bias,
            head_fc_input: a.head_fc_input,
        }
    }
}

impl ArchSettings {
    pub fn to_arch(&self, num_lanes: usize, series_len: usize, aux_dim: usize, variant: Variant) -> ArchConfig {
        ArchConfig {
            num_lanes,
            series_len,
            shared_layers: self.shared_layers,
            shared_hidden: self.shared_hidden,
            head_layers: self.head_layers,
            head_hidden: self.head_hidden,
            head_fc_hidden: self.head_fc_hidden,
            head_fc_out: self.head_fc_out,
            aux_dim,
            leaky_alpha: self.leaky_alpha,
            forget_bias: self.forget_bias,
            head_fc_input: self.head_fc_input,
            variant,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchmarkSettings {
    pub scenarios: Vec<Scenario>,
    pub indices: Vec<IndexKind>,
    pub seeds: Vec<u64>,
    pub families: Vec<Family>,
    pub baseline_aux: Vec<AuxMode>,
    /// Segments to synthesize per scenario; the scenario default when unset.
    pub segments: Option<usize>,
}

impl Default for BenchmarkSettings {
    fn default() -> Self {
        let spec = BenchmarkSpec::default();
        BenchmarkSettings {
            scenarios: Scenario::ALL.to_vec(),
            indices: IndexKind::ALL.to_vec(),
            seeds: spec.seeds,
            families: spec.families,
            baseline_aux: spec.baseline_aux,
            segments: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationSettings {
    pub seeds: Vec<u64>,
    pub variants: Vec<Variant>,
    pub feature_blocks: Vec<FeatureBlock>,
}

impl Default for AblationSettings {
    fn default() -> Self {
        let spec = AblationSpec::default();
        AblationSettings { seeds: spec.seeds, variants: spec.variants, feature_blocks: spec.feature_blocks }
    }
}

/// Effective settings of one invocation.
///
/// The root `seed` drives every random consumer: the generator, the split
/// and model training each get their own stream derived from it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub scenario: Scenario,
    pub index: IndexKind,
    pub variant: Variant,
    pub out_dir: PathBuf,
    pub synth: SynthConfig,
    pub pipeline: PipelineOptions,
    pub arch: ArchSettings,
    pub train: TrainConfig,
    pub benchmark: BenchmarkSettings,
    pub ablation: AblationSettings,
}

impl RunConfig {
    pub fn defaults(seed: u64, scenario: Scenario) -> Self {
        let mut rc = RunConfig {
            seed,
            scenario,
            index: IndexKind::Pci,
            variant: Variant::Full,
            out_dir: PathBuf::from("out"),
            synth: SynthConfig::new(scenario, 0),
            pipeline: PipelineOptions::default(),
            arch: ArchSettings::default(),
            train: TrainConfig::default(),
            benchmark: BenchmarkSettings::default(),
            ablation: AblationSettings::default(),
        };
        rc.derive_seeds();
        rc
    }

    /// Derived seeds keep 63 bits so the resolved file stays valid TOML.
    fn derive_seeds(&mut self) {
        let child = |label| derive_seed(self.seed, label) >> 1;
        self.synth.scenario = self.scenario;
        self.synth.seed = child("synth");
        self.pipeline.split_seed = child("split");
        self.train.seed = child("train");
    }

    pub fn arch_for(&self, num_lanes: usize, aux_dim: usize, variant: Variant) -> ArchConfig {
        self.arch.to_arch(num_lanes, self.pipeline.series_len, aux_dim, variant)
    }

    pub fn benchmark_spec(&self) -> BenchmarkSpec {
        BenchmarkSpec {
            arch: self.arch_for(1, 0, Variant::Full),
            train: self.train.clone(),
            seeds: self.benchmark.seeds.clone(),
            families: self.benchmark.families.clone(),
            baseline_aux: self.benchmark.baseline_aux.clone(),
        }
    }

    pub fn ablation_spec(&self) -> AblationSpec {
        AblationSpec {
            arch: self.arch_for(1, 0, Variant::Full),
            train: self.train.clone(),
            seeds: self.ablation.seeds.clone(),
            variants: self.ablation.variants.clone(),
            feature_blocks: self.ablation.feature_blocks.clone(),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn write_resolved(&self, dir: &Path) -> Result<PathBuf, CliError> {
        let path = dir.join(RESOLVED_CONFIG);
        fs::write(&path, self.to_toml())?;
        Ok(path)
    }
}

/// Values given on the command line; they win over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub scenario: Option<Scenario>,
    pub index: Option<IndexKind>,
    pub variant: Option<Variant>,
    pub out_dir: Option<PathBuf>,
}

const DERIVED_KEYS: [(&str, &str); 4] =
    [("synth", "seed"), ("synth", "scenario"), ("pipeline", "split_seed"), ("train", "seed")];

/// Layers flags over the config file over the built-in defaults.
///
/// Defaults depend on the scenario (segment count), so the scenario is
/// settled first and the file is merged onto the defaults for it.
pub fn resolve(file: Option<&Path>, overrides: &Overrides) -> Result<RunConfig, CliError> {
    let file_table = match file {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
            text.parse::<toml::Table>()
                .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?
        }
        None => toml::Table::new(),
    };
    let probe: RootProbe = file_table
        .clone()
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Usage(format!("config: {e}")))?;
    let seed = overrides.seed.or(probe.seed).unwrap_or(0);
    if i64::try_from(seed).is_err() {
        return Err(CliError::Usage(format!("seed must be at most {}", i64::MAX)));
    }
    let scenario = overrides.scenario.or(probe.scenario).unwrap_or(Scenario::FourLane);

    let mut merged = toml::Table::try_from(RunConfig::defaults(seed, scenario)).expect("defaults serialize");
    merge(&mut merged, file_table.clone());
    let mut rc: RunConfig = merged.try_into().map_err(|e: toml::de::Error| CliError::Usage(format!("config: {e}")))?;

    rc.seed = seed;
    rc.scenario = scenario;
    if let Some(i) = overrides.index {
        rc.index = i;
    }
    if let Some(v) = overrides.variant {
        rc.variant = v;
    }
    if let Some(d) = &overrides.out_dir {
        rc.out_dir = d.clone();
    }
    rc.derive_seeds();
    let derived = toml::Table::try_from(&rc).expect("run config serializes");
    for (section, key) in DERIVED_KEYS {
        let given = file_table.get(section).and_then(|s| s.get(key));
        if given.is_some_and(|g| Some(g) != derived.get(section).and_then(|s| s.get(key))) {
            log::warn!("ignoring `{section}.{key}` from the config file; it is derived from the root seed and scenario");
        }
    }
    rc.synth.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    rc.train.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(rc)
}

#[derive(Deserialize)]
struct RootProbe {
    seed: Option<u64>,
    scenario: Option<Scenario>,
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

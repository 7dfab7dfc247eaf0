use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StudentT};
use serde::{Deserialize, Serialize};

use super::clean::DEFAULT_EPSILON_RISE;
use super::record::{sort_records, IndexKind, PerformanceRecord, RoadAttributes, AADT_RANGE, CITIES, DIRECTIONS};
use super::DataError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scenario {
    #[serde(rename = "2lane")]
    TwoLane,
    #[serde(rename = "3lane")]
    ThreeLane,
    #[serde(rename = "4lane")]
    FourLane,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::TwoLane, Scenario::ThreeLane, Scenario::FourLane];

    pub fn num_lanes(self) -> usize {
        match self {
            Scenario::TwoLane => 2,
            Scenario::ThreeLane => 3,
            Scenario::FourLane => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scenario::TwoLane => "2lane",
            Scenario::ThreeLane => "3lane",
            Scenario::FourLane => "4lane",
        }
    }

    /// Segment count giving roughly the sample sizes of the reference
    /// datasets (the 4-lane PCI set needs at least 716 units).
    pub fn default_segments(self) -> usize {
        match self {
            Scenario::TwoLane => 60,
            Scenario::ThreeLane => 80,
            Scenario::FourLane => 85,
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scenario::ALL
            .into_iter()
            .find(|x| x.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| DataError::Invalid(format!("unknown scenario `{s}` (expected 2lane, 3lane or 4lane)")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub scenario: Scenario,
    pub n_segments: usize,
    pub seed: u64,
    pub units_per_segment: usize,
    pub start_year: i32,
    /// Segment-level years before the lane-level target year.
    pub history_years: usize,
    pub maintenance_rate: f64,
    /// Probability that one lane row of a unit is missing, per index kind.
    pub missing_rate: f64,
    pub measurement_noise: f64,
    pub unit_jitter: f64,
    pub lane_offset_scale: f64,
    /// Decay multiplier of the innermost and outermost lane.
    pub lane_decay: (f64, f64),
    /// Systematic per-lane offset step, in index points per lane outward.
    pub lane_shift: f64,
    /// How strongly traffic widens the spread of lane decay multipliers:
    /// `0` gives every segment the same spread, `1` scales it from none on
    /// the quietest roads to double on the busiest.
    pub lane_traffic: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig::new(Scenario::FourLane, 0)
    }
}

impl SynthConfig {
    pub fn new(scenario: Scenario, seed: u64) -> Self {
        SynthConfig {
            scenario,
            n_segments: scenario.default_segments(),
            seed,
            units_per_segment: 10,
            start_year: 2020,
            history_years: 3,
            maintenance_rate: 0.03,
            missing_rate: 0.005,
            measurement_noise: 0.3,
            unit_jitter: 1.0,
            lane_offset_scale: 1.5,
            lane_decay: (0.7, 1.3),
            lane_shift: -1.5,
            lane_traffic: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: &str| Err(DataError::Invalid(format!("synth config: {m}")));
        if self.n_segments == 0 {
            return bad("n_segments must be at least 1");
        }
        if self.units_per_segment == 0 || self.units_per_segment > 99 {
            return bad("units_per_segment must be in 1..=99");
        }
        if self.history_years == 0 {
            return bad("history_years must be at least 1");
        }
        for (name, p) in [("maintenance_rate", self.maintenance_rate), ("missing_rate", self.missing_rate)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(&format!("{name} must be a probability"));
            }
        }
        for (name, s) in [
            ("measurement_noise", self.measurement_noise),
            ("unit_jitter", self.unit_jitter),
            ("lane_offset_scale", self.lane_offset_scale),
        ] {
            if !(s.is_finite() && s >= 0.0) {
                return bad(&format!("{name} must be finite and non-negative"));
            }
        }
        if !(self.lane_decay.0 > 0.0 && self.lane_decay.1 > 0.0 && self.lane_shift.is_finite()) {
            return bad("lane_decay must be positive and lane_shift finite");
        }
        if !(0.0..=1.0).contains(&self.lane_traffic) {
            return bad("lane_traffic must lie in 0..=1");
        }
        Ok(())
    }

    pub fn target_year(&self) -> i32 {
        self.start_year + self.history_years as i32
    }
}

/// Latent parameters of one (segment, index kind) curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentLatent {
    pub segment_id: String,
    pub index_kind: IndexKind,
    pub base: f64,
    pub decay: f64,
    pub lane_multipliers: Vec<f64>,
    pub lane_offsets: Vec<f64>,
    /// Year index at which a maintenance jump applies, and its size.
    pub maintenance: Option<(usize, f64)>,
    /// `[unit][lane]` jitter added to the target-year value.
    pub unit_jitter: Vec<Vec<f64>>,
}

/// Noise-free lane value `y` years after the first observed year.
pub fn latent_lane_value(latent: &SegmentLatent, lane: usize, y: usize) -> f64 {
    let t = y as f64;
    let mut v = latent.base + latent.lane_offsets[lane] - latent.decay * latent.lane_multipliers[lane] * t * (1.0 + 0.08 * t);
    if let Some((at, jump)) = latent.maintenance {
        if y >= at {
            v += jump;
        }
    }
    v
}

/// Target-year value of `unit`'s `lane` as emitted, reconstructed from the
/// latent parameters.
pub fn reconstruct_target(latent: &SegmentLatent, history_years: usize, unit: usize, lane: usize) -> f64 {
    to_measurement(latent_lane_value(latent, lane, history_years) + latent.unit_jitter[unit][lane])
}

fn to_measurement(v: f64) -> f64 {
    ((v.clamp(1.0, 100.0)) * 10.0).round() / 10.0
}

/// Generator bookkeeping written alongside the records.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthLedger {
    pub config: SynthConfig,
    pub num_lanes: usize,
    pub segments: usize,
    pub units: usize,
    pub maintained: Vec<String>,
    /// Segments whose emitted series rises by more than the default
    /// cleaning threshold, per index kind.
    pub fluctuating: BTreeMap<IndexKind, Vec<String>>,
    /// Samples expected from `build_samples` after default cleaning.
    pub expected_samples: BTreeMap<IndexKind, usize>,
    pub latents: Vec<SegmentLatent>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthOutput {
    pub records: Vec<PerformanceRecord>,
    pub ledger: SynthLedger,
}

const CODES: [&str; 6] = ["G107", "G207", "G310", "S312", "S323", "S234"];

fn towns(city: &str) -> &'static [&'static str] {
    match city {
        "Zhengzhou" => &["Erqi", "Jinshui", "Zhongyuan", "Huiji"],
        "Luoyang" => &["Xigong", "Laocheng", "Jianxi"],
        _ => &["Jiefang", "Shanyang", "Macun"],
    }
}

fn draw_attributes(rng: &mut ChaCha8Rng) -> RoadAttributes {
    let code = *CODES.choose(rng).expect("non-empty");
    let level: u8 = if code.starts_with('G') { rng.random_range(1..=2) } else { rng.random_range(2..=4) };
    let speed_limit = match level {
        1 => *[100.0, 120.0].choose(rng).expect("non-empty"),
        2 => *[80.0, 100.0].choose(rng).expect("non-empty"),
        3 => *[60.0, 80.0].choose(rng).expect("non-empty"),
        _ => 60.0,
    };
    let city = *CITIES.choose(rng).expect("non-empty");
    let town = *towns(city).choose(rng).expect("non-empty");
    let aadt = (50f64.ln() + rng.random::<f64>() * (3000f64.ln() - 50f64.ln())).exp();
    RoadAttributes {
        code: code.into(),
        direction: DIRECTIONS.choose(rng).expect("non-empty").to_string(),
        level,
        city: city.into(),
        town: town.into(),
        surface: if rng.random::<f64>() < 0.8 { "Asphalt".into() } else { "Concrete".into() },
        speed_limit,
        aadt: (aadt * 10.0).round() / 10.0,
    }
}

/// Annual decay for one index kind: a base rate scaled by traffic, road
/// level and surface, clamped to 1..6 points (before the kind factor).
fn decay_rate(rng: &mut ChaCha8Rng, attrs: &RoadAttributes, kind: IndexKind) -> f64 {
    let traffic = 1.0 + 0.5 * (attrs.aadt - 50.0) / 2950.0;
    let level = match attrs.level {
        1 => 0.9,
        2 => 1.0,
        3 => 1.1,
        _ => 1.2,
    };
    let surface = if attrs.surface == "Concrete" { 0.85 } else { 1.0 };
    let kind_factor = match kind {
        IndexKind::Pci => 1.0,
        IndexKind::Pqi => 0.85,
        IndexKind::Rqi => 0.6,
    };
    (rng.random_range(1.0..4.0) * traffic * level * surface).clamp(1.0, 6.0) * kind_factor
}

/// Generates a synthetic dataset for `config.scenario`.
///
/// Each segment gets one decay curve per index kind. Every lane follows the
/// curve with its own decay multiplier (rising from the inner to the outer
/// lane) and a static offset; segment-level rows for the history years are
/// lane averages with measurement noise, and each unit's lanes are observed
/// once in the target year with unit jitter. Values are rounded to 0.1.
/// Code, direction, city and town never influence the values.
pub fn synth_generate(config: &SynthConfig) -> Result<SynthOutput, DataError> {
    config.validate()?;
    let n = config.scenario.num_lanes();
    let k = config.history_years;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let noise = Normal::new(0.0, config.measurement_noise).map_err(|e| DataError::Invalid(e.to_string()))?;
    let jitter = Normal::new(0.0, config.unit_jitter).map_err(|e| DataError::Invalid(e.to_string()))?;
    let heavy = StudentT::new(3.0).map_err(|e| DataError::Invalid(e.to_string()))?;
    let multipliers: Vec<f64> = (0..n)
        .map(|l| {
            let f = if n == 1 { 0.5 } else { l as f64 / (n - 1) as f64 };
            config.lane_decay.0 + f * (config.lane_decay.1 - config.lane_decay.0)
        })
        .collect();

    let mut records = Vec::new();
    let mut latents = Vec::new();
    let mut maintained = Vec::new();
    let mut fluctuating: BTreeMap<IndexKind, Vec<String>> = BTreeMap::new();
    let mut expected: BTreeMap<IndexKind, usize> = IndexKind::ALL.into_iter().map(|k| (k, 0)).collect();

    for s in 0..config.n_segments {
        let segment_id = format!("{}-S{:04}", config.scenario, s);
        let attrs = draw_attributes(&mut rng);
        let busy = (attrs.aadt / AADT_RANGE.0).ln() / (AADT_RANGE.1 / AADT_RANGE.0).ln();
        let spread = 1.0 - config.lane_traffic + 2.0 * config.lane_traffic * busy;
        let maintenance_year = (rng.random::<f64>() < config.maintenance_rate).then(|| rng.random_range(1..k.max(2)));
        if maintenance_year.is_some() {
            maintained.push(segment_id.clone());
        }
        for kind in IndexKind::ALL {
            let base = rng.random_range(85.0..98.0);
            let decay = decay_rate(&mut rng, &attrs, kind);
            let lane_offsets: Vec<f64> = (0..n)
                .map(|l| {
                    let o = config.lane_shift * l as f64 + config.lane_offset_scale * heavy.sample(&mut rng);
                    o.clamp(-60.0, 60.0)
                })
                .collect();
            let maintenance = maintenance_year.map(|y| (y, rng.random_range(8.0..20.0)));
            let unit_jitter: Vec<Vec<f64>> = (0..config.units_per_segment)
                .map(|_| (0..n).map(|_| jitter.sample(&mut rng)).collect())
                .collect();
            let latent = SegmentLatent {
                segment_id: segment_id.clone(),
                index_kind: kind,
                base,
                decay,
                lane_multipliers: multipliers.iter().map(|m| 1.0 + (m - 1.0) * spread).collect(),
                lane_offsets,
                maintenance,
                unit_jitter,
            };

            let series: Vec<f64> = (0..k)
                .map(|y| {
                    let mean = (0..n).map(|l| latent_lane_value(&latent, l, y)).sum::<f64>() / n as f64;
                    to_measurement(mean + noise.sample(&mut rng))
                })
                .collect();
            for (y, &v) in series.iter().enumerate() {
                records.push(PerformanceRecord {
                    segment_id: segment_id.clone(),
                    unit_id: None,
                    lane: None,
                    year: config.start_year + y as i32,
                    index_kind: kind,
                    value: v,
                    attrs: attrs.clone(),
                });
            }
            let rises = series.windows(2).any(|w| w[1] - w[0] > DEFAULT_EPSILON_RISE);
            if rises && maintenance_year.is_none() {
                fluctuating.entry(kind).or_default().push(segment_id.clone());
            }

            let mut complete_units = 0;
            for u in 0..config.units_per_segment {
                let unit_id = format!("{segment_id}-U{u:02}");
                let missing_lane = (rng.random::<f64>() < config.missing_rate).then(|| rng.random_range(0..n));
                for l in (0..n).filter(|&l| Some(l) != missing_lane) {
                    records.push(PerformanceRecord {
                        segment_id: segment_id.clone(),
                        unit_id: Some(unit_id.clone()),
                        lane: Some(l as u8 + 1),
                        year: config.target_year(),
                        index_kind: kind,
                        value: reconstruct_target(&latent, k, u, l),
                        attrs: attrs.clone(),
                    });
                }
                if missing_lane.is_none() {
                    complete_units += 1;
                }
            }
            if maintenance_year.is_none() && !rises {
                *expected.get_mut(&kind).expect("all kinds present") += complete_units;
            }
            latents.push(latent);
        }
    }
    sort_records(&mut records);
    Ok(SynthOutput {
        records,
        ledger: SynthLedger {
            config: config.clone(),
            num_lanes: n,
            segments: config.n_segments,
            units: config.n_segments * config.units_per_segment,
            maintained,
            fluctuating,
            expected_samples: expected,
            latents,
        },
    })
}

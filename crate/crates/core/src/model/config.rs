use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ModelError;

/// Structural variant of the network. `Full` is the complete three-stage
/// model; the others each remove one stage.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    /// Raw series feeds each head directly.
    NoShared,
    /// Shared hidden sequence is flattened and concatenated with aux features.
    NoHeads,
    /// Each lane's output layer sees only its own head features.
    NoConcat,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Full, Variant::NoShared, Variant::NoHeads, Variant::NoConcat];
    pub const ABLATIONS: [Variant; 3] = [Variant::NoShared, Variant::NoHeads, Variant::NoConcat];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoShared => "no_shared",
            Variant::NoHeads => "no_heads",
            Variant::NoConcat => "no_concat",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| ModelError::UnknownVariant(s.to_string()))
    }
}

/// What the first layer of a head's fully connected stack consumes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadFcInput {
    /// The head LSTM's final hidden state projected to one scalar per sample.
    Scalar,
    /// The head LSTM's final hidden state as is.
    Hidden,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchConfig {
    pub num_lanes: usize,
    pub series_len: usize,
    pub shared_layers: usize,
    pub shared_hidden: usize,
    pub head_layers: usize,
    pub head_hidden: usize,
    pub head_fc_hidden: usize,
    /// Width `V` of each head's feature block.
    pub head_fc_out: usize,
    /// Width `U` of the encoded auxiliary vector.
    pub aux_dim: usize,
    pub leaky_alpha: f64,
    pub forget_bias: f64,
    pub head_fc_input: HeadFcInput,
    pub variant: Variant,
}

impl ArchConfig {
    /// Full-size dimensions: shared 2x128, heads 2x64, head FC 64 -> 32.
    pub fn full_size(num_lanes: usize, aux_dim: usize) -> Self {
        ArchConfig {
            num_lanes,
            series_len: 3,
            shared_layers: 2,
            shared_hidden: 128,
            head_layers: 2,
            head_hidden: 64,
            head_fc_hidden: 64,
            head_fc_out: 32,
            aux_dim,
            leaky_alpha: 0.01,
            forget_bias: 1.0,
            head_fc_input: HeadFcInput::Scalar,
            variant: Variant::Full,
        }
    }

    /// Reduced dimensions used by gradient checks.
    pub fn tiny(num_lanes: usize, aux_dim: usize) -> Self {
        ArchConfig {
            shared_hidden: 4,
            head_hidden: 3,
            head_fc_hidden: 3,
            head_fc_out: 2,
            ..ArchConfig::full_size(num_lanes, aux_dim)
        }
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = [
            ("num_lanes", self.num_lanes),
            ("series_len", self.series_len),
            ("shared_layers", self.shared_layers),
            ("shared_hidden", self.shared_hidden),
            ("head_layers", self.head_layers),
            ("head_hidden", self.head_hidden),
            ("head_fc_hidden", self.head_fc_hidden),
            ("head_fc_out", self.head_fc_out),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(ModelError::InvalidConfig(format!("{name} must be at least 1")));
        }
        if !(self.leaky_alpha > 0.0 && self.leaky_alpha < 1.0) {
            return Err(ModelError::InvalidConfig(format!("leaky_alpha {} outside (0, 1)", self.leaky_alpha)));
        }
        if !self.forget_bias.is_finite() {
            return Err(ModelError::InvalidConfig("forget_bias must be finite".into()));
        }
        Ok(())
    }

    pub fn param_count(&self) -> Result<usize, ModelError> {
        Ok(build_variant(self)?.param_count())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StackShape {
    pub input: usize,
    pub hidden: usize,
    pub layers: usize,
}

impl StackShape {
    fn param_count(&self) -> usize {
        (0..self.layers)
            .map(|l| {
                let input = if l == 0 { self.input } else { self.hidden };
                4 * (self.hidden * (self.hidden + input) + self.hidden)
            })
            .sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HeadShape {
    pub lstm: StackShape,
    /// Heads start from adapted shared final states rather than zeros.
    pub adapt_from: Option<usize>,
    pub projection: bool,
    pub fc_in: usize,
    pub fc_hidden: usize,
    pub fc_out: usize,
}

impl HeadShape {
    fn param_count(&self) -> usize {
        let adapters = self.adapt_from.map_or(0, |shared| 2 * self.lstm.layers * shared * self.lstm.hidden);
        let projection = if self.projection { self.lstm.hidden } else { 0 };
        adapters
            + self.lstm.param_count()
            + projection
            + self.fc_in * self.fc_hidden
            + self.fc_hidden
            + self.fc_hidden * self.fc_out
    }
}

/// Resolved component layout of one [`ArchConfig`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Wiring {
    pub variant: Variant,
    pub num_lanes: usize,
    pub series_len: usize,
    pub aux_dim: usize,
    pub shared: Option<StackShape>,
    pub head: Option<HeadShape>,
    /// Width of the concatenation `S`, when the variant has one.
    pub concat_width: Option<usize>,
    /// Rows of each lane's output matrix.
    pub output_in: usize,
}

impl Wiring {
    pub fn param_count(&self) -> usize {
        self.shared.map_or(0, |s| s.param_count())
            + self.head.map_or(0, |h| self.num_lanes * h.param_count())
            + self.num_lanes * self.output_in
    }
}

pub fn build_variant(config: &ArchConfig) -> Result<Wiring, ModelError> {
    config.validate()?;
    let n = config.num_lanes;
    let shared = StackShape { input: 1, hidden: config.shared_hidden, layers: config.shared_layers };
    let head_for = |lstm_input: usize, adapt_from: Option<usize>| {
        let projection = config.head_fc_input == HeadFcInput::Scalar;
        HeadShape {
            lstm: StackShape { input: lstm_input, hidden: config.head_hidden, layers: config.head_layers },
            adapt_from,
            projection,
            fc_in: if projection { 1 } else { config.head_hidden },
            fc_hidden: config.head_fc_hidden,
            fc_out: config.head_fc_out,
        }
    };
    let blocks = n * config.head_fc_out + config.aux_dim;
    let wiring = match config.variant {
        Variant::Full => Wiring {
            shared: Some(shared),
            head: Some(head_for(config.shared_hidden, Some(config.shared_hidden))),
            concat_width: Some(blocks),
            output_in: blocks,
            ..base_wiring(config)
        },
        Variant::NoShared => Wiring {
            shared: None,
            head: Some(head_for(1, None)),
            concat_width: Some(blocks),
            output_in: blocks,
            ..base_wiring(config)
        },
        Variant::NoHeads => {
            let width = config.series_len * config.shared_hidden + config.aux_dim;
            Wiring { shared: Some(shared), head: None, concat_width: Some(width), output_in: width, ..base_wiring(config) }
        }
        Variant::NoConcat => Wiring {
            shared: Some(shared),
            head: Some(head_for(config.shared_hidden, Some(config.shared_hidden))),
            concat_width: None,
            output_in: config.head_fc_out,
            ..base_wiring(config)
        },
    };
    Ok(wiring)
}

fn base_wiring(config: &ArchConfig) -> Wiring {
    Wiring {
        variant: config.variant,
        num_lanes: config.num_lanes,
        series_len: config.series_len,
        aux_dim: config.aux_dim,
        shared: None,
        head: None,
        concat_width: None,
        output_in: 0,
    }
}

/// Output shape of each stage for a batch of `m` units, one row per stage.
pub fn layer_shapes(config: &ArchConfig, m: usize) -> Result<Vec<(&'static str, Vec<usize>)>, ModelError> {
    let wiring = build_variant(config)?;
    let mut rows = vec![("input", vec![m, config.series_len, 1])];
    if let Some(s) = wiring.shared {
        rows.push(("shared_lstm", vec![m, config.series_len, s.hidden]));
    }
    if let Some(h) = wiring.head {
        rows.push(("head_lstm", vec![m, if h.projection { 1 } else { h.lstm.hidden }]));
        rows.push(("head_fc", vec![m, h.fc_out]));
    }
    if let Some(w) = wiring.concat_width {
        rows.push(("concat", vec![m, w]));
    }
    rows.push(("output", vec![m, 1]));
    Ok(rows)
}

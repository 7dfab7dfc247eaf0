use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::record::{RoadAttributes, CITIES, DIRECTIONS, LEVELS, SURFACES};
use super::DataError;

/// Auxiliary feature groups; each contributes one block of encoded columns.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureBlock {
    Code,
    Direction,
    Level,
    City,
    Town,
    SpeedLimit,
    Aadt,
    Surface,
}

impl FeatureBlock {
    pub const ALL: [FeatureBlock; 8] = [
        FeatureBlock::Code,
        FeatureBlock::Direction,
        FeatureBlock::Level,
        FeatureBlock::City,
        FeatureBlock::Town,
        FeatureBlock::SpeedLimit,
        FeatureBlock::Aadt,
        FeatureBlock::Surface,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureBlock::Code => "code",
            FeatureBlock::Direction => "direction",
            FeatureBlock::Level => "level",
            FeatureBlock::City => "city",
            FeatureBlock::Town => "town",
            FeatureBlock::SpeedLimit => "speed_limit",
            FeatureBlock::Aadt => "aadt",
            FeatureBlock::Surface => "surface",
        }
    }

    fn is_continuous(self) -> bool {
        matches!(self, FeatureBlock::SpeedLimit | FeatureBlock::Aadt)
    }

    fn declared_vocabulary(self) -> Option<&'static [&'static str]> {
        match self {
            FeatureBlock::Direction => Some(&DIRECTIONS),
            FeatureBlock::Level => Some(&LEVELS),
            FeatureBlock::City => Some(&CITIES),
            FeatureBlock::Surface => Some(&SURFACES),
            _ => None,
        }
    }

    fn categorical_value(self, a: &RoadAttributes) -> String {
        match self {
            FeatureBlock::Code => a.code.clone(),
            FeatureBlock::Direction => a.direction.clone(),
            FeatureBlock::Level => a.level.to_string(),
            FeatureBlock::City => a.city.clone(),
            FeatureBlock::Town => a.town.clone(),
            FeatureBlock::Surface => a.surface.clone(),
            FeatureBlock::SpeedLimit | FeatureBlock::Aadt => unreachable!("continuous block"),
        }
    }

    fn continuous_value(self, a: &RoadAttributes) -> f64 {
        match self {
            FeatureBlock::SpeedLimit => a.speed_limit,
            FeatureBlock::Aadt => a.aadt,
            _ => unreachable!("categorical block"),
        }
    }
}

impl fmt::Display for FeatureBlock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureBlock {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FeatureBlock::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| DataError::Invalid(format!("unknown feature block `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BlockEncoding {
    OneHot { vocabulary: Vec<String> },
    ZScore { mean: f64, std: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncodedBlock {
    pub block: FeatureBlock,
    pub encoding: BlockEncoding,
}

impl EncodedBlock {
    pub fn width(&self) -> usize {
        match &self.encoding {
            BlockEncoding::OneHot { vocabulary } => vocabulary.len(),
            BlockEncoding::ZScore { .. } => 1,
        }
    }
}

/// Fitted transform from [`RoadAttributes`] to the auxiliary vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderSpec {
    pub blocks: Vec<EncodedBlock>,
}

/// Fits one-hot vocabularies and Z-score statistics on training attributes
/// only. Blocks listed in `exclude` produce no columns.
///
/// Vocabularies with a declared value set keep the declared order, filtered
/// to values seen in training; open vocabularies are sorted. A continuous
/// column with zero spread uses `std = 1`, so it encodes to zero.
pub fn fit_encoder<'a, I>(train: I, exclude: &[FeatureBlock]) -> Result<EncoderSpec, DataError>
where
    I: IntoIterator<Item = &'a RoadAttributes>,
{
    let rows: Vec<&RoadAttributes> = train.into_iter().collect();
    if rows.is_empty() {
        return Err(DataError::Invalid("cannot fit encoder on an empty training set".into()));
    }
    let mut blocks = Vec::new();
    for block in FeatureBlock::ALL.into_iter().filter(|b| !exclude.contains(b)) {
        let encoding = if block.is_continuous() {
            let n = rows.len() as f64;
            let mean = rows.iter().map(|a| block.continuous_value(a)).sum::<f64>() / n;
            let var = rows.iter().map(|a| (block.continuous_value(a) - mean).powi(2)).sum::<f64>() / n;
            let std = if var > 0.0 { var.sqrt() } else { 1.0 };
            BlockEncoding::ZScore { mean, std }
        } else {
            let seen: BTreeSet<String> = rows.iter().map(|a| block.categorical_value(a)).collect();
            let vocabulary = match block.declared_vocabulary() {
                Some(declared) => declared.iter().filter(|v| seen.contains(**v)).map(|v| v.to_string()).collect(),
                None => seen.into_iter().collect(),
            };
            BlockEncoding::OneHot { vocabulary }
        };
        blocks.push(EncodedBlock { block, encoding });
    }
    Ok(EncoderSpec { blocks })
}

impl EncoderSpec {
    pub fn width(&self) -> usize {
        self.blocks.iter().map(EncodedBlock::width).sum()
    }

    pub fn column_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for b in &self.blocks {
            match &b.encoding {
                BlockEncoding::OneHot { vocabulary } => {
                    out.extend(vocabulary.iter().map(|v| format!("{}={}", b.block, v)));
                }
                BlockEncoding::ZScore { .. } => out.push(b.block.to_string()),
            }
        }
        out
    }

    /// Column range of `block`, if encoded.
    pub fn block_columns(&self, block: FeatureBlock) -> Option<std::ops::Range<usize>> {
        let mut start = 0;
        for b in &self.blocks {
            if b.block == block {
                return Some(start..start + b.width());
            }
            start += b.width();
        }
        None
    }

    /// Encodes one attribute set. Categories missing from the fitted
    /// vocabulary encode as an all-zero block and are returned in the second
    /// slot so callers can log them.
    pub fn encode(&self, attrs: &RoadAttributes) -> (Vec<f64>, Vec<FeatureBlock>) {
        let mut out = Vec::with_capacity(self.width());
        let mut unseen = Vec::new();
        for b in &self.blocks {
            match &b.encoding {
                BlockEncoding::OneHot { vocabulary } => {
                    let v = b.block.categorical_value(attrs);
                    let hit = vocabulary.iter().position(|x| *x == v);
                    if hit.is_none() {
                        unseen.push(b.block);
                    }
                    out.extend((0..vocabulary.len()).map(|i| if Some(i) == hit { 1.0 } else { 0.0 }));
                }
                BlockEncoding::ZScore { mean, std } => out.push((b.block.continuous_value(attrs) - mean) / std),
            }
        }
        (out, unseen)
    }

    /// [`encode`](Self::encode), logging unseen categories.
    pub fn encode_logged(&self, attrs: &RoadAttributes, context: &str) -> Vec<f64> {
        let (v, unseen) = self.encode(attrs);
        for b in unseen {
            log::warn!("{context}: unseen {b} category, encoded as zeros");
        }
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn attrs(city: &str, aadt: f64) -> RoadAttributes {
        RoadAttributes {
            code: "G107".into(),
            direction: "Upstream".into(),
            level: 1,
            city: city.into(),
            town: "Erqi".into(),
            surface: "Asphalt".into(),
            speed_limit: 100.0,
            aadt,
        }
    }

    #[test]
    fn two_city_one_hot() {
        let train = [attrs("Zhengzhou", 100.0), attrs("Luoyang", 200.0)];
        let spec = fit_encoder(&train, &[]).unwrap();
        let cols = spec.block_columns(FeatureBlock::City).unwrap();
        let (v, unseen) = spec.encode(&train[0]);
        assert_eq!(&v[cols.clone()], &[1.0, 0.0]);
        assert!(unseen.is_empty());
        let (v, _) = spec.encode(&train[1]);
        assert_eq!(&v[cols], &[0.0, 1.0]);
    }

    #[test]
    fn mean_maps_to_zero() {
        let train = [attrs("Zhengzhou", 100.0), attrs("Zhengzhou", 300.0)];
        let spec = fit_encoder(&train, &[]).unwrap();
        let col = spec.block_columns(FeatureBlock::Aadt).unwrap().start;
        let (v, _) = spec.encode(&attrs("Luoyang", 200.0));
        assert_eq!(v[col], 0.0);
    }

    #[test]
    fn unseen_category_is_zero_block() {
        let spec = fit_encoder(&[attrs("Zhengzhou", 100.0)], &[]).unwrap();
        let cols = spec.block_columns(FeatureBlock::City).unwrap();
        let (v, unseen) = spec.encode(&attrs("Jiaozuo", 100.0));
        assert!(v[cols].iter().all(|&x| x == 0.0));
        assert_eq!(unseen, vec![FeatureBlock::City]);
    }

    #[test]
    fn constant_column_encodes_to_zero() {
        let spec = fit_encoder(&[attrs("Zhengzhou", 100.0), attrs("Luoyang", 100.0)], &[]).unwrap();
        let col = spec.block_columns(FeatureBlock::SpeedLimit).unwrap().start;
        assert_eq!(spec.encode(&attrs("Luoyang", 5.0)).0[col], 0.0);
    }

    #[test]
    fn excluded_block_has_no_columns() {
        let train = [attrs("Zhengzhou", 100.0)];
        let full = fit_encoder(&train, &[]).unwrap();
        let reduced = fit_encoder(&train, &[FeatureBlock::Aadt]).unwrap();
        assert_eq!(reduced.width(), full.width() - 1);
        assert!(reduced.block_columns(FeatureBlock::Aadt).is_none());
        assert_eq!(full.column_names().len(), full.width());
    }

    #[test]
    fn empty_training_set_rejected() {
        assert!(fit_encoder(std::iter::empty(), &[]).is_err());
    }
}

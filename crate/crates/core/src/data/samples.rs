use std::collections::BTreeMap;

use serde::Serialize;

use super::record::{IndexKind, PerformanceRecord, RoadAttributes};

/// One prediction unit: its parent segment's `k`-year history and static
/// attributes, plus lane-level targets for the following year.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub segment_id: String,
    pub unit_id: String,
    pub target_year: i32,
    /// Segment-level values for years `target_year - k .. target_year - 1`.
    pub series: Vec<f64>,
    pub attrs: RoadAttributes,
    /// One value per lane, lane 1 (innermost) first. Empty for prediction
    /// inputs without ground truth.
    pub targets: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DroppedUnit {
    pub segment_id: String,
    pub unit_id: String,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SampleReport {
    pub built: usize,
    pub dropped: Vec<DroppedUnit>,
}

struct SegmentHistory<'a> {
    values: BTreeMap<i32, f64>,
    attrs: BTreeMap<i32, &'a RoadAttributes>,
}

fn segment_histories<'a>(records: &'a [PerformanceRecord], kind: IndexKind) -> BTreeMap<&'a str, SegmentHistory<'a>> {
    let mut out: BTreeMap<&str, SegmentHistory> = BTreeMap::new();
    for r in records.iter().filter(|r| r.index_kind == kind && r.is_segment_level()) {
        let h = out
            .entry(r.segment_id.as_str())
            .or_insert_with(|| SegmentHistory { values: BTreeMap::new(), attrs: BTreeMap::new() });
        h.values.insert(r.year, r.value);
        h.attrs.insert(r.year, &r.attrs);
    }
    out
}

/// The `k` segment values before `target_year` and the attributes of the
/// latest of those years, if all are present.
fn history_window(h: &SegmentHistory, target_year: i32, k: usize) -> Option<(Vec<f64>, RoadAttributes)> {
    let years = (target_year - k as i32)..target_year;
    let series: Option<Vec<f64>> = years.clone().map(|y| h.values.get(&y).copied()).collect();
    let attrs = h.attrs.get(&(target_year - 1))?;
    Some((series?, (*attrs).clone()))
}

/// Builds one [`Sample`] per 100 m unit for `kind`.
///
/// The target year of a unit is the latest year with unit-level rows; the
/// unit needs a positive value for each lane `1..=num_lanes` in that year and
/// its segment needs all `k` preceding segment-level years. Units failing
/// either condition are dropped and reported.
pub fn build_samples(
    records: &[PerformanceRecord],
    kind: IndexKind,
    k: usize,
    num_lanes: usize,
) -> (Vec<Sample>, SampleReport) {
    let histories = segment_histories(records, kind);
    type UnitKey<'a> = (&'a str, &'a str);
    let mut units: BTreeMap<UnitKey, BTreeMap<i32, BTreeMap<u8, f64>>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.index_kind == kind) {
        if let (Some(unit), Some(lane)) = (&r.unit_id, r.lane) {
            units
                .entry((r.segment_id.as_str(), unit.as_str()))
                .or_default()
                .entry(r.year)
                .or_default()
                .insert(lane, r.value);
        }
    }

    let mut samples = Vec::new();
    let mut report = SampleReport::default();
    for ((seg, unit), by_year) in units {
        let drop = |reason: String| DroppedUnit { segment_id: seg.to_string(), unit_id: unit.to_string(), reason };
        let (&target_year, lanes) = by_year.iter().next_back().expect("unit has at least one row");
        let Some(history) = histories.get(seg) else {
            report.dropped.push(drop("no segment-level history".into()));
            continue;
        };
        let Some((series, attrs)) = history_window(history, target_year, k) else {
            report.dropped.push(drop(format!("incomplete {k}-year segment history before {target_year}")));
            continue;
        };
        let targets: Vec<Option<f64>> = (1..=num_lanes as u8).map(|l| lanes.get(&l).copied()).collect();
        if let Some(missing) = targets.iter().position(Option::is_none) {
            report.dropped.push(drop(format!("missing lane {} target in {}", missing + 1, target_year)));
            continue;
        }
        if let Some(&extra) = lanes.keys().find(|&&l| l as usize > num_lanes) {
            report.dropped.push(drop(format!("lane {extra} outside a {num_lanes}-lane scenario")));
            continue;
        }
        let targets: Vec<f64> = targets.into_iter().flatten().collect();
        if targets.iter().any(|&t| t <= 0.0 || !t.is_finite()) {
            report.dropped.push(drop("non-positive target".into()));
            continue;
        }
        samples.push(Sample {
            segment_id: seg.to_string(),
            unit_id: unit.to_string(),
            target_year,
            series,
            attrs,
            targets,
        });
    }
    report.built = samples.len();
    (samples, report)
}

/// Prediction inputs: for every segment with at least `k` segment-level
/// years, one entry per unit seen under that segment (or one segment-level
/// entry when it has no units). The window is the latest `k` years.
pub fn prediction_inputs(records: &[PerformanceRecord], kind: IndexKind, k: usize) -> Vec<Sample> {
    let histories = segment_histories(records, kind);
    let mut units: BTreeMap<&str, std::collections::BTreeSet<&str>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.index_kind == kind) {
        let entry = units.entry(r.segment_id.as_str()).or_default();
        if let Some(u) = &r.unit_id {
            entry.insert(u.as_str());
        }
    }
    let mut out = Vec::new();
    for (seg, h) in &histories {
        let Some((&last, _)) = h.values.iter().next_back() else { continue };
        let Some((series, attrs)) = history_window(h, last + 1, k) else { continue };
        let unit_ids: Vec<String> = match units.get(seg) {
            Some(set) if !set.is_empty() => set.iter().map(|u| u.to_string()).collect(),
            _ => vec![String::new()],
        };
        for unit_id in unit_ids {
            out.push(Sample {
                segment_id: seg.to_string(),
                unit_id,
                target_year: last + 1,
                series: series.clone(),
                attrs: attrs.clone(),
                targets: Vec::new(),
            });
        }
    }
    out
}

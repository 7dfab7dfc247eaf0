use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::record::{IndexKind, PerformanceRecord};

/// Largest tolerated year-over-year rise of a segment series, in index points.
pub const DEFAULT_EPSILON_RISE: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RemovalRule {
    Maintenance,
    Fluctuation,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Removal {
    pub segment_id: String,
    /// `None` when every index kind of the segment was removed.
    pub index_kind: Option<IndexKind>,
    pub rule: RemovalRule,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct CleanReport {
    pub removals: Vec<Removal>,
    pub records_in: usize,
    pub records_kept: usize,
}

/// Drops segments with recorded maintenance, then every (segment, index
/// kind) whose segment-level series rises by more than `epsilon_rise`
/// between consecutive observed years. Removal covers the unit-level rows of
/// the removed group too.
pub fn clean(
    records: &[PerformanceRecord],
    maintained: &[String],
    epsilon_rise: f64,
) -> (Vec<PerformanceRecord>, CleanReport) {
    let maintained: BTreeSet<&str> = maintained.iter().map(String::as_str).collect();
    let mut report = CleanReport { records_in: records.len(), ..Default::default() };

    let present: BTreeSet<&str> = records.iter().map(|r| r.segment_id.as_str()).collect();
    for seg in present.intersection(&maintained) {
        report.removals.push(Removal {
            segment_id: seg.to_string(),
            index_kind: None,
            rule: RemovalRule::Maintenance,
            detail: "listed in maintenance records".into(),
        });
    }

    let mut series: BTreeMap<(&str, IndexKind), BTreeMap<i32, f64>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.is_segment_level() && !maintained.contains(r.segment_id.as_str())) {
        series.entry((r.segment_id.as_str(), r.index_kind)).or_default().insert(r.year, r.value);
    }
    let mut fluctuating: BTreeSet<(&str, IndexKind)> = BTreeSet::new();
    for ((seg, kind), years) in &series {
        let values: Vec<(i32, f64)> = years.iter().map(|(&y, &v)| (y, v)).collect();
        if let Some(w) = values.windows(2).find(|w| w[1].1 - w[0].1 > epsilon_rise) {
            fluctuating.insert((seg, *kind));
            report.removals.push(Removal {
                segment_id: seg.to_string(),
                index_kind: Some(*kind),
                rule: RemovalRule::Fluctuation,
                detail: format!("{} -> {} between {} and {}", w[0].1, w[1].1, w[0].0, w[1].0),
            });
        }
    }

    let kept: Vec<PerformanceRecord> = records
        .iter()
        .filter(|r| {
            !maintained.contains(r.segment_id.as_str()) && !fluctuating.contains(&(r.segment_id.as_str(), r.index_kind))
        })
        .cloned()
        .collect();
    report.records_kept = kept.len();
    (kept, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::record::RoadAttributes;
    use proptest::prelude::*;

    fn attrs() -> RoadAttributes {
        RoadAttributes {
            code: "S323".into(),
            direction: "Downstream".into(),
            level: 3,
            city: "Luoyang".into(),
            town: "Xigong".into(),
            surface: "Concrete".into(),
            speed_limit: 60.0,
            aadt: 300.0,
        }
    }

    fn series(seg: &str, values: &[f64]) -> Vec<PerformanceRecord> {
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| PerformanceRecord {
                segment_id: seg.into(),
                unit_id: None,
                lane: None,
                year: 2020 + i as i32,
                index_kind: IndexKind::Pci,
                value: v,
                attrs: attrs(),
            })
            .collect()
    }

    #[test]
    fn monotone_decline_kept() {
        let (kept, report) = clean(&series("A", &[90.0, 85.0, 81.0]), &[], 2.0);
        assert_eq!(kept.len(), 3);
        assert!(report.removals.is_empty());
    }

    #[test]
    fn large_rise_removed_as_fluctuation() {
        let (kept, report) = clean(&series("A", &[80.0, 92.0, 88.0]), &[], 2.0);
        assert!(kept.is_empty());
        assert_eq!(report.removals.len(), 1);
        assert_eq!(report.removals[0].rule, RemovalRule::Fluctuation);
    }

    #[test]
    fn small_rise_within_epsilon_kept() {
        let (kept, _) = clean(&series("A", &[85.0, 84.5, 86.0]), &[], 2.0);
        assert_eq!(kept.len(), 3);
    }

    #[test]
    fn maintenance_list_removes_whole_segment() {
        let mut recs = series("A", &[90.0, 88.0, 86.0]);
        recs.extend(series("B", &[90.0, 88.0, 86.0]));
        let (kept, report) = clean(&recs, &["B".to_string(), "Z".to_string()], 2.0);
        assert!(kept.iter().all(|r| r.segment_id == "A"));
        assert_eq!(report.removals.len(), 1);
        assert_eq!(report.removals[0].rule, RemovalRule::Maintenance);
    }

    proptest! {
        #[test]
        fn idempotent(values in prop::collection::vec(prop::collection::vec(60.0f64..100.0, 3), 1..8)) {
            let recs: Vec<PerformanceRecord> =
                values.iter().enumerate().flat_map(|(i, v)| series(&format!("S{i}"), v)).collect();
            let (once, _) = clean(&recs, &["S0".to_string()], 2.0);
            let (twice, report) = clean(&once, &["S0".to_string()], 2.0);
            prop_assert_eq!(once, twice);
            prop_assert!(report.removals.is_empty());
        }
    }
}

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::DataError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum IndexKind {
    #[serde(rename = "PCI", alias = "pci")]
    Pci,
    #[serde(rename = "PQI", alias = "pqi")]
    Pqi,
    #[serde(rename = "RQI", alias = "rqi")]
    Rqi,
}

impl IndexKind {
    pub const ALL: [IndexKind; 3] = [IndexKind::Pci, IndexKind::Pqi, IndexKind::Rqi];

    pub fn name(self) -> &'static str {
        match self {
            IndexKind::Pci => "PCI",
            IndexKind::Pqi => "PQI",
            IndexKind::Rqi => "RQI",
        }
    }
}

impl fmt::Display for IndexKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for IndexKind {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        IndexKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| DataError::Invalid(format!("unknown index kind `{s}` (expected pci, pqi or rqi)")))
    }
}

pub const DIRECTIONS: [&str; 2] = ["Upstream", "Downstream"];
pub const CITIES: [&str; 3] = ["Zhengzhou", "Luoyang", "Jiaozuo"];
pub const SURFACES: [&str; 2] = ["Asphalt", "Concrete"];
pub const LEVELS: [&str; 4] = ["1", "2", "3", "4"];
pub const SPEED_LIMIT_RANGE: (f64, f64) = (60.0, 120.0);
pub const AADT_RANGE: (f64, f64) = (50.0, 3000.0);
pub const MAX_LANES: u8 = 4;

/// Static road attributes shared by every row of a segment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoadAttributes {
    pub code: String,
    pub direction: String,
    pub level: u8,
    pub city: String,
    pub town: String,
    pub surface: String,
    pub speed_limit: f64,
    pub aadt: f64,
}

impl RoadAttributes {
    pub fn validate(&self) -> Result<(), String> {
        let free_text = |name: &str, v: &str| {
            if v.is_empty() || v.contains([',', '"', '\n', '\r']) {
                Err(format!("{name} `{v}` must be non-empty plain text"))
            } else {
                Ok(())
            }
        };
        free_text("Code", &self.code)?;
        free_text("Town", &self.town)?;
        if !DIRECTIONS.contains(&self.direction.as_str()) {
            return Err(format!("Dir `{}` not in {:?}", self.direction, DIRECTIONS));
        }
        if !(1..=4).contains(&self.level) {
            return Err(format!("Level {} outside 1..4", self.level));
        }
        if !CITIES.contains(&self.city.as_str()) {
            return Err(format!("City `{}` not in {:?}", self.city, CITIES));
        }
        if !SURFACES.contains(&self.surface.as_str()) {
            return Err(format!("PSM `{}` not in {:?}", self.surface, SURFACES));
        }
        check_range("SL", self.speed_limit, SPEED_LIMIT_RANGE)?;
        check_range("AADT", self.aadt, AADT_RANGE)?;
        Ok(())
    }
}

fn check_range(name: &str, v: f64, (lo, hi): (f64, f64)) -> Result<(), String> {
    if v.is_finite() && (lo..=hi).contains(&v) {
        Ok(())
    } else {
        Err(format!("{name} value {v} outside range {lo}..{hi}"))
    }
}

/// One observation of one index, either segment-level (no unit, no lane)
/// or for one lane of one 100 m unit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerformanceRecord {
    pub segment_id: String,
    pub unit_id: Option<String>,
    pub lane: Option<u8>,
    pub year: i32,
    pub index_kind: IndexKind,
    pub value: f64,
    pub attrs: RoadAttributes,
}

impl PerformanceRecord {
    pub fn is_segment_level(&self) -> bool {
        self.unit_id.is_none()
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.segment_id.is_empty() || self.segment_id.contains([',', '"', '\n']) {
            return Err("segment_id must be non-empty plain text".into());
        }
        match (&self.unit_id, self.lane) {
            (None, None) => {}
            (Some(u), Some(l)) => {
                if u.is_empty() || u.contains([',', '"', '\n']) {
                    return Err("unit_id must be plain text".into());
                }
                if !(1..=MAX_LANES).contains(&l) {
                    return Err(format!("LN {l} outside 1..{MAX_LANES}"));
                }
            }
            _ => return Err("lane must be present exactly when unit_id is".into()),
        }
        check_range(self.index_kind.name(), self.value, (0.0, 100.0))?;
        self.attrs.validate()
    }

    /// Canonical ordering key: segment, unit, lane, year, index kind.
    pub fn sort_key(&self) -> (String, Option<String>, Option<u8>, i32, IndexKind) {
        (self.segment_id.clone(), self.unit_id.clone(), self.lane, self.year, self.index_kind)
    }
}

/// Sorts records into canonical order.
pub fn sort_records(records: &mut [PerformanceRecord]) {
    records.sort_by_cached_key(PerformanceRecord::sort_key);
}

pub const HEADER: [&str; 15] =
    ["segment_id", "unit_id", "year", "PCI", "PQI", "RQI", "Code", "Dir", "Level", "City", "Town", "SL", "AADT", "PSM", "LN"];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LineError {
    pub line: u64,
    pub message: String,
}

/// Typed records plus the lines that failed validation.
#[derive(Clone, Debug, Default)]
pub struct ParseOutcome {
    pub records: Vec<PerformanceRecord>,
    pub errors: Vec<LineError>,
}

/// Reads the comma-separated table. Each row holds up to three index values
/// for one (segment, unit, lane, year) and yields one record per non-empty
/// index cell.
pub fn parse_records<R: Read>(source: R) -> Result<ParseOutcome, DataError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(source);
    let header = reader.headers().map_err(|e| DataError::Unreadable(e.to_string()))?.clone();
    let found: Vec<&str> = header.iter().map(str::trim).collect();
    if found != HEADER {
        return Err(DataError::Schema(format!("expected header {:?}, found {:?}", HEADER, found)));
    }
    let mut out = ParseOutcome::default();
    for row in reader.records() {
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                if matches!(e.kind(), csv::ErrorKind::Io(_)) {
                    return Err(DataError::Unreadable(e.to_string()));
                }
                out.errors.push(LineError { line, message: e.to_string() });
                continue;
            }
        };
        let line = row.position().map_or(0, |p| p.line());
        match parse_row(&row) {
            Ok(recs) => out.records.extend(recs),
            Err(message) => out.errors.push(LineError { line, message }),
        }
    }
    Ok(out)
}

fn parse_row(row: &csv::StringRecord) -> Result<Vec<PerformanceRecord>, String> {
    if row.len() != HEADER.len() {
        return Err(format!("expected {} fields, found {}", HEADER.len(), row.len()));
    }
    let field = |i: usize| row.get(i).unwrap_or("").trim();
    let num = |i: usize| -> Result<f64, String> {
        field(i).parse::<f64>().map_err(|_| format!("{} `{}` is not a number", HEADER[i], field(i)))
    };
    let segment_id = field(0).to_string();
    let unit_id = Some(field(1)).filter(|s| !s.is_empty()).map(str::to_string);
    let year = field(2).parse::<i32>().map_err(|_| format!("year `{}` is not an integer", field(2)))?;
    let level = field(8).parse::<u8>().map_err(|_| format!("Level `{}` is not an integer", field(8)))?;
    let lane = match field(14) {
        "" => None,
        s => Some(s.parse::<u8>().map_err(|_| format!("LN `{s}` is not an integer"))?),
    };
    let attrs = RoadAttributes {
        code: field(6).to_string(),
        direction: field(7).to_string(),
        level,
        city: field(9).to_string(),
        town: field(10).to_string(),
        speed_limit: num(11)?,
        aadt: num(12)?,
        surface: field(13).to_string(),
    };
    let mut recs = Vec::new();
    for (i, kind) in IndexKind::ALL.into_iter().enumerate() {
        if field(3 + i).is_empty() {
            continue;
        }
        let rec = PerformanceRecord {
            segment_id: segment_id.clone(),
            unit_id: unit_id.clone(),
            lane,
            year,
            index_kind: kind,
            value: num(3 + i)?,
            attrs: attrs.clone(),
        };
        rec.validate()?;
        recs.push(rec);
    }
    if recs.is_empty() {
        return Err("row carries no PCI, PQI or RQI value".into());
    }
    Ok(recs)
}

/// Writes records in canonical row order, merging the index kinds of one
/// (segment, unit, lane, year) into a single row.
pub fn write_records<W: Write>(sink: W, records: &[PerformanceRecord]) -> Result<(), DataError> {
    type RowKey = (String, Option<String>, Option<u8>, i32);
    let mut rows: BTreeMap<RowKey, (RoadAttributes, [Option<f64>; 3])> = BTreeMap::new();
    for r in records {
        r.validate().map_err(DataError::Invalid)?;
        let key = (r.segment_id.clone(), r.unit_id.clone(), r.lane, r.year);
        let entry = rows.entry(key).or_insert_with(|| (r.attrs.clone(), [None; 3]));
        if entry.0 != r.attrs {
            return Err(DataError::Invalid(format!(
                "segment {} year {}: conflicting attributes within one row",
                r.segment_id, r.year
            )));
        }
        let slot = &mut entry.1[r.index_kind as usize];
        if slot.is_some() {
            return Err(DataError::Invalid(format!(
                "duplicate {} record for segment {} unit {:?} lane {:?} year {}",
                r.index_kind, r.segment_id, r.unit_id, r.lane, r.year
            )));
        }
        *slot = Some(r.value);
    }
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(HEADER).map_err(|e| DataError::Unreadable(e.to_string()))?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for ((segment, unit, lane, year), (a, values)) in rows {
        w.write_record([
            segment,
            unit.unwrap_or_default(),
            year.to_string(),
            opt(values[0]),
            opt(values[1]),
            opt(values[2]),
            a.code,
            a.direction,
            a.level.to_string(),
            a.city,
            a.town,
            a.speed_limit.to_string(),
            a.aadt.to_string(),
            a.surface,
            lane.map(|l| l.to_string()).unwrap_or_default(),
        ])
        .map_err(|e| DataError::Unreadable(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn attrs() -> RoadAttributes {
        RoadAttributes {
            code: "G107".into(),
            direction: "Upstream".into(),
            level: 2,
            city: "Zhengzhou".into(),
            town: "Jinshui".into(),
            surface: "Asphalt".into(),
            speed_limit: 80.0,
            aadt: 1200.5,
        }
    }

    const HEAD: &str = "segment_id,unit_id,year,PCI,PQI,RQI,Code,Dir,Level,City,Town,SL,AADT,PSM,LN\n";

    #[test]
    fn well_formed_file_parses() {
        let mut text = String::from(HEAD);
        for y in 0..10 {
            text.push_str(&format!("S1,,{},{},,,G107,Upstream,2,Zhengzhou,Jinshui,80,1200,Asphalt,\n", 2010 + y, 90 - y));
        }
        let out = parse_records(text.as_bytes()).unwrap();
        assert_eq!(out.records.len(), 10);
        assert!(out.errors.is_empty());
    }

    #[test]
    fn out_of_range_value_rejected_with_line() {
        let text = format!(
            "{HEAD}S1,,2020,90,,,G107,Upstream,2,Zhengzhou,Jinshui,80,1200,Asphalt,\nS1,,2021,105,,,G107,Upstream,2,Zhengzhou,Jinshui,80,1200,Asphalt,\n"
        );
        let out = parse_records(text.as_bytes()).unwrap();
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.errors.len(), 1);
        assert_eq!(out.errors[0].line, 3);
        assert!(out.errors[0].message.contains("PCI value 105 outside range"), "{}", out.errors[0].message);
    }

    #[test]
    fn schema_mismatch_is_an_error() {
        let text = "segment,unit,year\nS1,,2020\n";
        assert!(matches!(parse_records(text.as_bytes()), Err(DataError::Schema(_))));
    }

    #[test]
    fn lane_without_unit_rejected() {
        let text = format!("{HEAD}S1,,2020,90,,,G107,Upstream,2,Zhengzhou,Jinshui,80,1200,Asphalt,2\n");
        let out = parse_records(text.as_bytes()).unwrap();
        assert!(out.records.is_empty());
        assert_eq!(out.errors.len(), 1);
    }

    #[test]
    fn unknown_city_rejected() {
        let text = format!("{HEAD}S1,,2020,90,,,G107,Upstream,2,Kaifeng,Jinshui,80,1200,Asphalt,\n");
        let out = parse_records(text.as_bytes()).unwrap();
        assert_eq!(out.errors.len(), 1);
    }

    #[test]
    fn multi_index_row_round_trips() {
        let mk = |kind, value| PerformanceRecord {
            segment_id: "S9".into(),
            unit_id: Some("S9-U01".into()),
            lane: Some(3),
            year: 2023,
            index_kind: kind,
            value,
            attrs: attrs(),
        };
        let recs = vec![mk(IndexKind::Pci, 77.3), mk(IndexKind::Rqi, 91.0)];
        let mut buf = Vec::new();
        write_records(&mut buf, &recs).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 2);
        let back = parse_records(buf.as_slice()).unwrap();
        assert_eq!(back.records, recs);
    }

    #[test]
    fn duplicate_records_refused_on_write() {
        let r = PerformanceRecord {
            segment_id: "S1".into(),
            unit_id: None,
            lane: None,
            year: 2020,
            index_kind: IndexKind::Pci,
            value: 90.0,
            attrs: attrs(),
        };
        assert!(write_records(Vec::new(), &[r.clone(), r]).is_err());
    }
}

//! CSV ingestion and the JSON dataset store.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::preprocess::HourlySeries;
use crate::{Error, Result};

pub const CSV_HEADER: [&str; 3] = ["series_id", "timestamp", "load_mw"];
pub const STORE_VERSION: u32 = 1;
const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

/// Coverage and gap statistics for one series.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub series_id: String,
    pub start: NaiveDateTime,
    pub end: NaiveDateTime,
    pub hours: usize,
    pub missing_hours: usize,
    /// Maximal runs of consecutive missing hours.
    pub gaps: usize,
}

impl ManifestEntry {
    pub fn describe(series: &HourlySeries) -> Self {
        let gaps = series.missing.iter().zip(std::iter::once(&false).chain(&series.missing)).filter(|(m, prev)| **m && !**prev).count();
        Self {
            series_id: series.series_id.clone(),
            start: series.start,
            end: series.end().unwrap_or(series.start),
            hours: series.len(),
            missing_hours: series.missing_count(),
            gaps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub series: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn summary(&self) -> String {
        let mut out = String::new();
        for e in &self.series {
            out.push_str(&format!(
                "{}: {} hours from {} to {}, {} missing in {} gaps\n",
                e.series_id, e.hours, e.start, e.end, e.missing_hours, e.gaps
            ));
        }
        out
    }
}

/// Series sorted by id, with a manifest derived from them. Missing hours
/// hold 0.0 in `values` and are flagged in the mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStore {
    pub version: u32,
    pub manifest: Manifest,
    pub series: Vec<HourlySeries>,
}

impl DatasetStore {
    pub fn new(mut series: Vec<HourlySeries>) -> Result<Self> {
        series.sort_by(|a, b| a.series_id.cmp(&b.series_id));
        if series.windows(2).any(|w| w[0].series_id == w[1].series_id) {
            return Err(Error::Data("duplicate series id".into()));
        }
        if series.is_empty() {
            return Err(Error::Data("dataset has no series".into()));
        }
        for s in &mut series {
            for (v, &m) in s.values.iter_mut().zip(&s.missing) {
                if m {
                    *v = 0.0;
                }
            }
        }
        let manifest = Manifest { series: series.iter().map(ManifestEntry::describe).collect() };
        Ok(Self { version: STORE_VERSION, manifest, series })
    }

    pub fn get(&self, id: &str) -> Option<&HourlySeries> {
        self.series.iter().find(|s| s.series_id == id)
    }

    /// Last calendar year with any observation.
    pub fn final_year(&self) -> Option<i32> {
        self.series.iter().filter_map(|s| s.end()).map(|e| e.year()).max()
    }

    pub fn first_date(&self) -> Option<NaiveDate> {
        self.series.iter().map(|s| s.start.date()).min()
    }

    pub fn last_date(&self) -> Option<NaiveDate> {
        self.series.iter().filter_map(|s| s.end()).map(|e| e.date()).max()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = serde_json::to_vec(self)?;
        std::fs::write(path, bytes)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let store: Self = serde_json::from_slice(&std::fs::read(path)?)?;
        if store.version != STORE_VERSION {
            return Err(Error::Data(format!("unsupported store version {}", store.version)));
        }
        let mut checked = Vec::with_capacity(store.series.len());
        for s in store.series {
            checked.push(HourlySeries::new(s.series_id, s.start, s.values, s.missing)?);
        }
        let rebuilt = Self::new(checked)?;
        if rebuilt.manifest != store.manifest {
            return Err(Error::Data("store manifest does not match its data".into()));
        }
        Ok(rebuilt)
    }
}

pub fn parse_timestamp(s: &str) -> Result<NaiveDateTime> {
    let t = s.trim().trim_end_matches('Z');
    const FORMATS: [&str; 4] = ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"];
    FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(t, f).ok())
        .ok_or_else(|| Error::Data(format!("unparseable timestamp {s:?}")))
}

pub fn format_timestamp(t: NaiveDateTime) -> String {
    t.format(TIMESTAMP_FORMAT).to_string()
}

/// Read `series_id,timestamp,load_mw` rows in any order. A blank load is a
/// missing hour, and absent hours between a series' first and last row are
/// filled as missing. Duplicate timestamps and timestamps off the hour are
/// errors.
pub fn read_csv<R: Read>(reader: R) -> Result<Vec<HourlySeries>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != CSV_HEADER {
        return Err(Error::Data(format!("expected header {}, got {}", CSV_HEADER.join(","), header.join(","))));
    }
    let mut rows: BTreeMap<String, BTreeMap<NaiveDateTime, Option<f64>>> = BTreeMap::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = line + 2;
        let id = rec.get(0).unwrap_or_default().to_string();
        if id.is_empty() {
            return Err(Error::Data(format!("row {row}: empty series_id")));
        }
        let ts = parse_timestamp(rec.get(1).unwrap_or_default())?;
        if ts.minute() != 0 || ts.second() != 0 || ts.nanosecond() != 0 {
            return Err(Error::Data(format!("row {row}: timestamp {ts} is not on an hour boundary")));
        }
        let raw = rec.get(2).unwrap_or_default();
        let value = if raw.is_empty() {
            None
        } else {
            Some(raw.parse::<f64>().map_err(|_| Error::Data(format!("row {row}: bad load {raw:?}")))?)
        };
        if rows.entry(id.clone()).or_default().insert(ts, value).is_some() {
            return Err(Error::Data(format!("row {row}: duplicate timestamp {ts} for series {id}")));
        }
    }
    rows.into_iter()
        .map(|(id, hours)| {
            let start = *hours.keys().next().expect("series has a row");
            let end = *hours.keys().next_back().expect("series has a row");
            let n = ((end - start).num_hours() + 1) as usize;
            let mut values = vec![0.0; n];
            let mut missing = vec![true; n];
            for (t, v) in hours {
                if let Some(v) = v {
                    let i = (t - start).num_hours() as usize;
                    values[i] = v;
                    missing[i] = false;
                }
            }
            HourlySeries::new(id, start, values, missing)
        })
        .collect()
}

/// Rows sorted by series then time; missing hours have a blank load.
pub fn write_csv<W: Write>(writer: W, series: &[HourlySeries]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CSV_HEADER)?;
    for s in series {
        for (i, (v, m)) in s.values.iter().zip(&s.missing).enumerate() {
            let t = s.start + Duration::hours(i as i64);
            let load = if *m { String::new() } else { v.to_string() };
            w.write_record([s.series_id.as_str(), &format_timestamp(t), &load])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn ingest(input_csv: &Path) -> Result<DatasetStore> {
    DatasetStore::new(read_csv(std::fs::File::open(input_csv)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn csv_of(rows: &[(&str, &str, &str)]) -> String {
        let mut s = "series_id,timestamp,load_mw\n".to_string();
        for (a, b, c) in rows {
            s.push_str(&format!("{a},{b},{c}\n"));
        }
        s
    }

    fn hourly(id: &str, n: usize) -> Vec<(String, String, String)> {
        let start = NaiveDate::from_ymd_opt(2018, 3, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
        (0..n).map(|i| (id.to_string(), format_timestamp(start + Duration::hours(i as i64)), format!("{}", 100 + i))).collect()
    }

    fn as_refs(v: &[(String, String, String)]) -> Vec<(&str, &str, &str)> {
        v.iter().map(|(a, b, c)| (a.as_str(), b.as_str(), c.as_str())).collect()
    }

    #[test]
    fn forty_eight_rows_no_gaps() {
        let rows = hourly("EE", 48);
        let store = DatasetStore::new(read_csv(csv_of(&as_refs(&rows)).as_bytes()).unwrap()).unwrap();
        let e = &store.manifest.series[0];
        assert_eq!((e.hours, e.missing_hours, e.gaps), (48, 0, 0));
    }

    #[test]
    fn blank_load_is_missing() {
        let mut rows = hourly("EE", 48);
        rows[10].2.clear();
        let series = read_csv(csv_of(&as_refs(&rows)).as_bytes()).unwrap();
        assert_eq!(series[0].missing_count(), 1);
        assert!(series[0].missing[10]);
    }

    #[test]
    fn absent_hours_become_gaps() {
        let mut rows = hourly("EE", 48);
        rows.drain(20..23);
        let store = DatasetStore::new(read_csv(csv_of(&as_refs(&rows)).as_bytes()).unwrap()).unwrap();
        let e = &store.manifest.series[0];
        assert_eq!((e.hours, e.missing_hours, e.gaps), (48, 3, 1));
    }

    #[test]
    fn shuffled_rows_canonicalize() {
        let mut rows = hourly("EE", 30);
        rows.extend(hourly("LV", 30));
        let a = DatasetStore::new(read_csv(csv_of(&as_refs(&rows)).as_bytes()).unwrap()).unwrap();
        rows.reverse();
        rows.swap(3, 40);
        let b = DatasetStore::new(read_csv(csv_of(&as_refs(&rows)).as_bytes()).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_input() {
        let mut dup = hourly("EE", 5);
        dup.push(dup[2].clone());
        assert!(read_csv(csv_of(&as_refs(&dup)).as_bytes()).is_err());
        let off = csv_of(&[("EE", "2018-03-01T00:30:00", "100")]);
        assert!(read_csv(off.as_bytes()).is_err());
        assert!(read_csv("id,timestamp,load\nEE,2018-03-01T00:00:00,1\n".as_bytes()).is_err());
        let neg = csv_of(&[("EE", "2018-03-01T00:00:00", "-5")]);
        assert!(read_csv(neg.as_bytes()).is_err());
    }

    #[test]
    fn timestamp_forms() {
        let t = parse_timestamp("2018-03-01T05:00:00").unwrap();
        assert_eq!(parse_timestamp("2018-03-01 05:00").unwrap(), t);
        assert_eq!(parse_timestamp("2018-03-01T05:00:00Z").unwrap(), t);
    }

    #[test]
    fn round_trip_through_csv_and_disk() {
        let mut rows = hourly("EE", 48);
        rows[7].2.clear();
        rows.remove(30);
        let store = DatasetStore::new(read_csv(csv_of(&as_refs(&rows)).as_bytes()).unwrap()).unwrap();
        let mut buf = Vec::new();
        write_csv(&mut buf, &store.series).unwrap();
        let again = DatasetStore::new(read_csv(buf.as_slice()).unwrap()).unwrap();
        assert_eq!(store.manifest, again.manifest);
        assert_eq!(store, again);

        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("store.json");
        store.save(&p).unwrap();
        assert_eq!(DatasetStore::load(&p).unwrap(), store);
    }
}

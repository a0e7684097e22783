//! Command implementations behind the `stlf` binary, plus the file formats
//! they read and write.

pub mod config;
pub mod model_file;
pub mod store;
pub mod synth;

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDate, NaiveDateTime};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use config::{RunConfig, SplitConfig};
pub use model_file::{ModelFile, MODEL_FORMAT_VERSION};
pub use store::{DatasetStore, Manifest, ManifestEntry};
pub use synth::SynthConfig;

use crate::cells::{CellSizes, CellSpec};
use crate::evaluation::{daily_losses, gw_matrix, rank_models, score_model, ForecastRecord, ModelScores, Ranking, GW_METHOD};
use crate::gradcheck::{check_cell, check_model, CellProblem, GradcheckReport};
use crate::network::{CellVariant, ModelConfig};
use crate::preprocess::{build_training_set, DateRange, HourlySeries, DAY_HOURS};
use crate::training::{forecast_range, train_ensemble, EpochLog};
use crate::{Error, Result};

pub const TABLE1_HEADER: [&str; 7] = ["Cell type", "MAPE", "MdAPE", "IqrAPE", "RMSE", "MPE", "StdPE"];
pub const TABLE2_HEADER: [&str; 5] = ["Cell type", "% in PI", "% below PI", "% above PI", "Winkler score"];
pub const BASELINE_LABEL: &str = "SeasonalNaive";
/// Nominal miss rate of the baseline interval.
pub const BASELINE_ALPHA: f64 = 0.1;
pub const GRADCHECK_TOLERANCE: f64 = 1e-3;
pub const GRADCHECK_SINGLE_STEP_TOLERANCE: f64 = 1e-4;

pub fn cmd_ingest(input_csv: &Path, out_store: &Path) -> Result<Manifest> {
    let store = store::ingest(input_csv)?;
    store.save(out_store)?;
    Ok(store.manifest)
}

pub fn cmd_export(store_path: &Path, out_csv: &Path) -> Result<()> {
    let store = DatasetStore::load(store_path)?;
    store::write_csv(std::fs::File::create(out_csv)?, &store.series)
}

pub fn cmd_synth(cfg: &SynthConfig, out_csv: &Path) -> Result<Vec<ManifestEntry>> {
    let series = synth::generate(cfg)?;
    store::write_csv(std::io::BufWriter::new(std::fs::File::create(out_csv)?), &series)?;
    Ok(series.iter().map(ManifestEntry::describe).collect())
}

fn data_span(store: &DatasetStore) -> Result<(NaiveDate, NaiveDate)> {
    match (store.first_date(), store.last_date()) {
        (Some(a), Some(b)) => Ok((a, b)),
        _ => Err(Error::Data("store is empty".into())),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainSummary {
    pub label: String,
    pub train_range: DateRange,
    pub samples: usize,
    pub members: Vec<MemberSummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MemberSummary {
    pub seed: u64,
    pub final_loss: f64,
    pub updates: usize,
    pub log: Vec<EpochLog>,
}

/// Train on every day before the test range and write the model file.
pub fn cmd_train(store_path: &Path, config: &RunConfig, out_model: &Path) -> Result<TrainSummary> {
    config.validate()?;
    let store = DatasetStore::load(store_path)?;
    let (first, last) = data_span(&store)?;
    let test = config.split.test_range(first, last)?;
    let train_range = DateRange::new(first, test.from - Duration::days(1));
    if train_range.to < train_range.from {
        return Err(Error::NoTrainableSamples);
    }
    let data = build_training_set(&store.series, Some(train_range))?;
    let ensemble = train_ensemble(&data, config.model, &config.loss, &config.training)?;
    let members = ensemble
        .members
        .iter()
        .map(|m| MemberSummary {
            seed: m.seed,
            final_loss: m.log.last().map_or(f64::NAN, |l| l.mean_loss),
            updates: m.log.iter().map(|l| l.updates).sum(),
            log: m.log.clone(),
        })
        .collect();
    let file = ModelFile::new(config.clone(), ensemble);
    file.save(out_model)?;
    Ok(TrainSummary { label: file.label, train_range, samples: data.len(), members })
}

/// One forecast hour, as written by `cmd_forecast`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRow {
    pub series_id: String,
    #[serde(with = "timestamp_format")]
    pub timestamp: NaiveDateTime,
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
}

mod timestamp_format {
    use chrono::NaiveDateTime;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(t: &NaiveDateTime, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::store::format_timestamp(*t))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<NaiveDateTime, D::Error> {
        let s = String::deserialize(d)?;
        super::store::parse_timestamp(&s).map_err(serde::de::Error::custom)
    }
}

pub fn records_to_rows(records: &[ForecastRecord]) -> Vec<ForecastRow> {
    let mut rows: Vec<ForecastRow> = records
        .iter()
        .flat_map(|r| {
            let midnight = r.target_date.and_hms_opt(0, 0, 0).expect("valid time");
            (0..DAY_HOURS).map(move |h| ForecastRow {
                series_id: r.series_id.clone(),
                timestamp: midnight + Duration::hours(h as i64),
                point: r.point[h],
                lower: r.lower[h],
                upper: r.upper[h],
            })
        })
        .collect();
    rows.sort_by(|a, b| a.series_id.cmp(&b.series_id).then(a.timestamp.cmp(&b.timestamp)));
    rows
}

pub fn write_forecast_csv<W: Write>(writer: W, rows: &[ForecastRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Forecast every day of `range` for one series (or all) and write 24 rows
/// per day. Any day without a complete input week is an error.
pub fn cmd_forecast(
    model_path: &Path,
    store_path: &Path,
    series: Option<&str>,
    range: DateRange,
    out_csv: Option<&Path>,
    out_json: Option<&Path>,
) -> Result<Vec<ForecastRow>> {
    if range.to < range.from {
        return Err(Error::Config(format!("empty date range {}..{}", range.from, range.to)));
    }
    let file = ModelFile::load(model_path)?;
    let ensemble = file.ensemble()?;
    let store = DatasetStore::load(store_path)?;
    let selected: Vec<&HourlySeries> = match series {
        Some(id) => vec![store.get(id).ok_or_else(|| Error::Data(format!("unknown series {id}")))?],
        None => store.series.iter().collect(),
    };
    let mut records = Vec::new();
    for s in selected {
        let recs = forecast_range(&ensemble, s, range, file.config.training.warmup, &file.label)?;
        let have: Vec<NaiveDate> = recs.iter().map(|r| r.target_date).collect();
        if let Some(d) = range.days().find(|d| !have.contains(d)) {
            return Err(Error::IncompleteHistory { series: s.series_id.clone(), date: d });
        }
        records.extend(recs);
    }
    let rows = records_to_rows(&records);
    if let Some(p) = out_csv {
        write_forecast_csv(std::fs::File::create(p)?, &rows)?;
    }
    if let Some(p) = out_json {
        std::fs::write(p, serde_json::to_vec_pretty(&rows)?)?;
    }
    Ok(rows)
}

/// Same hour one week earlier, with an interval from the empirical 5% and
/// 95% quantiles of the week-on-week ratio `z_t / z_(t-168)` over the days
/// before `range`.
pub fn seasonal_naive(series: &HourlySeries, range: DateRange) -> Vec<ForecastRecord> {
    let mut ratios: Vec<f64> = Vec::new();
    for d in series.dates().into_iter().filter(|d| *d < range.from) {
        if let (Some(now), Some(prev)) = (series.day(d), series.day(d - Duration::days(7))) {
            ratios.extend(now.iter().zip(prev).map(|(a, b)| a / b));
        }
    }
    ratios.sort_by(f64::total_cmp);
    let (lo, hi) = if ratios.is_empty() {
        (1.0, 1.0)
    } else {
        (
            crate::evaluation::quantile_sorted(&ratios, BASELINE_ALPHA / 2.0),
            crate::evaluation::quantile_sorted(&ratios, 1.0 - BASELINE_ALPHA / 2.0),
        )
    };
    range
        .days()
        .filter_map(|d| {
            let prev = series.day(d - Duration::days(7))?;
            Some(ForecastRecord {
                series_id: series.series_id.clone(),
                target_date: d,
                point: prev.to_vec(),
                lower: prev.iter().map(|v| v * lo).collect(),
                upper: prev.iter().map(|v| v * hi).collect(),
                model: BASELINE_LABEL.into(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct GwReport {
    pub method: &'static str,
    pub models: Vec<String>,
    /// `p_values[row][col]`: p-value for "column model is more accurate
    /// than row model"; `None` where too few common days exist.
    pub p_values: Vec<Vec<Option<f64>>>,
    /// The loss differential was constant, so the pair is not discriminated.
    pub degenerate: Vec<Vec<bool>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvaluationReport {
    pub test_range: DateRange,
    pub models: Vec<ModelScores>,
    pub mape_ranking: Option<Ranking>,
    pub rmse_ranking: Option<Ranking>,
    pub gw: GwReport,
}

fn f(v: f64) -> String {
    format!("{v:.6}")
}

/// Forecast the test range with each model, score against the store and
/// write `table1.csv`, `table2.csv`, `per_series.csv`, `rankings.csv`,
/// `gw_pvalues.csv` and `report.json` into `out_dir`.
pub fn cmd_evaluate(
    model_paths: &[PathBuf],
    store_path: &Path,
    test_range: Option<DateRange>,
    out_dir: &Path,
    baseline: bool,
) -> Result<EvaluationReport> {
    let store = DatasetStore::load(store_path)?;
    let (first, last) = data_span(&store)?;
    let range = match test_range {
        Some(r) => r,
        None => SplitConfig::default().test_range(first, last)?,
    };
    if range.to < first || range.from > last || range.to < range.from {
        return Err(Error::Evaluation(format!("test range {}..{} does not overlap the data", range.from, range.to)));
    }
    let observed: HashMap<String, HourlySeries> = store.series.iter().map(|s| (s.series_id.clone(), s.clone())).collect();

    let mut labelled: Vec<(String, f64, Vec<ForecastRecord>)> = Vec::new();
    let mut used: BTreeMap<String, usize> = BTreeMap::new();
    for p in model_paths {
        let file = ModelFile::load(p)?;
        let ensemble = file.ensemble()?;
        let n = used.entry(file.label.clone()).or_default();
        *n += 1;
        let label = if *n == 1 { file.label.clone() } else { format!("{}#{}", file.label, n) };
        let mut recs = Vec::new();
        for s in &store.series {
            recs.extend(forecast_range(&ensemble, s, range, file.config.training.warmup, &label)?);
        }
        labelled.push((label, file.config.loss.alpha(), recs));
    }
    if baseline {
        let recs = store.series.iter().flat_map(|s| seasonal_naive(s, range)).collect();
        labelled.push((BASELINE_LABEL.into(), BASELINE_ALPHA, recs));
    }
    if labelled.is_empty() {
        return Err(Error::Evaluation("nothing to evaluate".into()));
    }

    let mut scores = Vec::new();
    for (label, alpha, recs) in &labelled {
        scores.push(score_model(label, recs, &observed, *alpha)?);
    }
    let labels: Vec<String> = labelled.iter().map(|l| l.0.clone()).collect();

    // Rankings need every model scored on the same series.
    let common: Vec<String> = scores[0]
        .per_series
        .keys()
        .filter(|id| scores.iter().all(|s| s.per_series.contains_key(*id)))
        .cloned()
        .collect();
    let rank_by = |metric: fn(&crate::evaluation::MetricsReport) -> f64| -> Result<Option<Ranking>> {
        if common.is_empty() {
            return Ok(None);
        }
        let table: Vec<Vec<f64>> = scores.iter().map(|s| common.iter().map(|id| metric(&s.per_series[id])).collect()).collect();
        rank_models(&labels, &table).map(Some)
    };
    let mape_ranking = rank_by(|m| m.point.mape)?;
    let rmse_ranking = rank_by(|m| m.point.rmse)?;

    let losses: Vec<_> = labelled.iter().map(|(_, _, recs)| daily_losses(recs, &observed)).collect();
    let tests = gw_matrix(&losses);
    let gw = GwReport {
        method: GW_METHOD,
        models: labels.clone(),
        p_values: tests.iter().map(|r| r.iter().map(|t| t.map(|t| t.p_value)).collect()).collect(),
        degenerate: tests.iter().map(|r| r.iter().map(|t| t.is_some_and(|t| t.degenerate)).collect()).collect(),
    };

    std::fs::create_dir_all(out_dir)?;
    let mut t1 = csv::Writer::from_path(out_dir.join("table1.csv"))?;
    t1.write_record(TABLE1_HEADER)?;
    let mut t2 = csv::Writer::from_path(out_dir.join("table2.csv"))?;
    t2.write_record(TABLE2_HEADER)?;
    for s in &scores {
        let (m, pi) = (&s.mean.point, &s.mean.pi);
        t1.write_record([s.model.clone(), f(m.mape), f(m.mdape), f(m.iqr_ape), f(m.rmse), f(m.mpe), f(m.std_pe)])?;
        t2.write_record([s.model.clone(), f(pi.pi_in), f(pi.pi_below), f(pi.pi_above), f(pi.winkler_normalized)])?;
    }
    t1.flush()?;
    t2.flush()?;

    let mut ps = csv::Writer::from_path(out_dir.join("per_series.csv"))?;
    let mut header = vec!["Cell type", "series_id"];
    header.extend(&TABLE1_HEADER[1..]);
    header.extend(&TABLE2_HEADER[1..]);
    ps.write_record(&header)?;
    for s in &scores {
        for (id, r) in &s.per_series {
            let (m, pi) = (&r.point, &r.pi);
            ps.write_record([
                s.model.clone(),
                id.clone(),
                f(m.mape),
                f(m.mdape),
                f(m.iqr_ape),
                f(m.rmse),
                f(m.mpe),
                f(m.std_pe),
                f(pi.pi_in),
                f(pi.pi_below),
                f(pi.pi_above),
                f(pi.winkler_normalized),
            ])?;
        }
    }
    ps.flush()?;

    let mut rk = csv::Writer::from_path(out_dir.join("rankings.csv"))?;
    rk.write_record(["metric", "Cell type", "mean rank", "first places", "series", "tied series"])?;
    for (metric, r) in [("MAPE", &mape_ranking), ("RMSE", &rmse_ranking)] {
        if let Some(r) = r {
            for (i, m) in r.models.iter().enumerate() {
                rk.write_record([metric.to_string(), m.clone(), f(r.mean_rank[i]), r.wins[i].to_string(), common.len().to_string(), r.ties.to_string()])?;
            }
        }
    }
    rk.flush()?;

    let mut gwf = csv::Writer::from_path(out_dir.join("gw_pvalues.csv"))?;
    let mut header = vec!["Y \\ X".to_string()];
    header.extend(labels.iter().cloned());
    gwf.write_record(&header)?;
    for (i, row) in gw.p_values.iter().enumerate() {
        let mut rec = vec![labels[i].clone()];
        rec.extend(row.iter().map(|v| v.map_or_else(|| "NA".into(), f)));
        gwf.write_record(&rec)?;
    }
    gwf.flush()?;

    let report = EvaluationReport { test_range: range, models: scores, mape_ranking, rmse_ranking, gw };
    std::fs::write(out_dir.join("report.json"), serde_json::to_vec_pretty(&report)?)?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct GradcheckCase {
    pub name: String,
    pub tolerance: f64,
    pub passed: bool,
    pub report: GradcheckReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradcheckSummary {
    pub cell: CellVariant,
    pub seed: u64,
    pub passed: bool,
    pub max_relative_error: f64,
    pub cases: Vec<GradcheckCase>,
}

/// Desk sizes for a stand-alone cell check: states of 4, so `s_c = 8`.
pub fn gradcheck_spec(cell: CellVariant, input_size: usize, dilation: usize) -> CellSpec {
    let (kind, connection) = cell.kind_and_connection();
    CellSpec { kind, connection, input_size, sizes: CellSizes::symmetric(4, 4), dilation }
}

/// Finite-difference checks for one cell: a single step, 20-step sequences
/// at dilations 1, 2, 4 and 7, and the stacked model at tiny sizes.
/// `corrupt` perturbs every analytic gradient, so every case must fail.
pub fn cmd_gradcheck(cell: CellVariant, seed: u64, corrupt: bool) -> Result<GradcheckSummary> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases = Vec::new();
    let mut push = |name: String, tolerance: f64, report: GradcheckReport| {
        cases.push(GradcheckCase { name, tolerance, passed: report.passes(tolerance), report });
    };
    let single = CellProblem::random(gradcheck_spec(cell, 5, 1), 1, &mut rng);
    push("cell, 1 step".into(), GRADCHECK_SINGLE_STEP_TOLERANCE, check_cell(&single, seed, corrupt)?);
    for d in [1, 2, 4, 7] {
        let problem = CellProblem::random(gradcheck_spec(cell, 5, d), 20, &mut rng);
        push(format!("cell, 20 steps, dilation {d}"), GRADCHECK_TOLERANCE, check_cell(&problem, seed.wrapping_add(d as u64), corrupt)?);
    }
    let tiny = ModelConfig { cell, s_c: 8, s_h: 4, s_y: 4, s_q: 4, d_emb: 3 };
    push("stacked model, 10 steps".into(), GRADCHECK_TOLERANCE, check_model(tiny, 10, seed, Some(6), corrupt)?);
    let max_relative_error = cases.iter().map(|c| c.report.max_relative_error).fold(0.0, f64::max);
    Ok(GradcheckSummary { cell, seed, passed: cases.iter().all(|c| c.passed), max_relative_error, cases })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradcheck_passes_and_negative_control_fails() {
        let ok = cmd_gradcheck(CellVariant::DLstm, 3, false).unwrap();
        assert!(ok.passed, "{:?}", ok.cases.iter().map(|c| (&c.name, c.report.max_relative_error)).collect::<Vec<_>>());
        assert!(ok.cases.iter().all(|c| !c.report.blocks.is_empty()));
        let bad = cmd_gradcheck(CellVariant::DLstm, 3, true).unwrap();
        assert!(!bad.passed);
    }

    #[test]
    fn forecast_rows_are_chronological() {
        let d = NaiveDate::from_ymd_opt(2018, 5, 1).unwrap();
        let mk = |day: NaiveDate| ForecastRecord {
            series_id: "A".into(),
            target_date: day,
            point: (0..24).map(|h| h as f64).collect(),
            lower: vec![0.0; 24],
            upper: vec![30.0; 24],
            model: "m".into(),
        };
        let rows = records_to_rows(&[mk(d + Duration::days(1)), mk(d)]);
        assert_eq!(rows.len(), 48);
        assert!(rows.windows(2).all(|w| w[0].timestamp < w[1].timestamp));
    }

    #[test]
    fn seasonal_naive_repeats_last_week() {
        let start = NaiveDate::from_ymd_opt(2018, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
        let values: Vec<f64> = (0..24 * 21).map(|t| 100.0 + t as f64).collect();
        let s = HourlySeries::complete("A", start, values.clone()).unwrap();
        let range = DateRange::new(NaiveDate::from_ymd_opt(2018, 1, 15).unwrap(), NaiveDate::from_ymd_opt(2018, 1, 21).unwrap());
        let recs = seasonal_naive(&s, range);
        assert_eq!(recs.len(), 7);
        assert_eq!(recs[0].point, values[24 * 7..24 * 8].to_vec());
        assert!(recs.iter().all(|r| r.lower.iter().zip(&r.upper).all(|(l, u)| l <= u)));
    }
}

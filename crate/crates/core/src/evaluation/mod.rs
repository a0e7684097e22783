//! Accuracy metrics, interval diagnostics, the Giacomini-White test and
//! per-series rankings.

use std::collections::{BTreeMap, HashMap};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::preprocess::{HourlySeries, DAY_HOURS};
use crate::{Error, Result};

/// Label written into GW output metadata.
pub const GW_METHOD: &str = "conditional GW, instruments [1, d(t-1)], chi-square(2), daily MAE averaged over series";
pub const GW_MIN_LENGTH: usize = 30;

/// One day of 24-hour forecasts for one series and model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRecord {
    pub series_id: String,
    pub target_date: NaiveDate,
    pub point: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub model: String,
}

impl ForecastRecord {
    pub fn validate(&self) -> Result<()> {
        for v in [&self.point, &self.lower, &self.upper] {
            if v.len() != DAY_HOURS {
                return Err(Error::Shape(format!("forecast record needs 24 values, got {}", v.len())));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite("forecast record"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PointMetrics {
    #[serde(rename = "MAPE")]
    pub mape: f64,
    #[serde(rename = "MdAPE")]
    pub mdape: f64,
    #[serde(rename = "IqrAPE")]
    pub iqr_ape: f64,
    #[serde(rename = "RMSE")]
    pub rmse: f64,
    #[serde(rename = "MPE")]
    pub mpe: f64,
    #[serde(rename = "StdPE")]
    pub std_pe: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PiMetrics {
    pub pi_in: f64,
    pub pi_below: f64,
    pub pi_above: f64,
    pub winkler_normalized: f64,
    /// Hours where `lower > upper`.
    pub crossings: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(flatten)]
    pub point: PointMetrics,
    #[serde(flatten)]
    pub pi: PiMetrics,
}

/// Quantile of sorted data, linear interpolation between order statistics.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty() && (0.0..=1.0).contains(&p));
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

fn check_pair(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Evaluation(format!("paired series of unequal or zero length ({} vs {})", a.len(), b.len())));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("evaluation input"));
    }
    Ok(())
}

/// Percentage errors use `PE = 100 (z - z_hat) / z`, so over-prediction
/// yields a negative MPE. StdPE is the sample standard deviation.
pub fn point_metrics(actual: &[f64], forecast: &[f64]) -> Result<PointMetrics> {
    check_pair(actual, forecast)?;
    if actual.contains(&0.0) {
        return Err(Error::Evaluation("percentage errors undefined for zero actuals".into()));
    }
    let n = actual.len() as f64;
    let pe: Vec<f64> = actual.iter().zip(forecast).map(|(z, f)| 100.0 * (z - f) / z).collect();
    let mut ape: Vec<f64> = pe.iter().map(|p| p.abs()).collect();
    ape.sort_by(f64::total_cmp);
    let mpe = pe.iter().sum::<f64>() / n;
    let std_pe = if pe.len() > 1 {
        (pe.iter().map(|p| (p - mpe).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let mse = actual.iter().zip(forecast).map(|(z, f)| (z - f).powi(2)).sum::<f64>() / n;
    Ok(PointMetrics {
        mape: ape.iter().sum::<f64>() / n,
        mdape: quantile_sorted(&ape, 0.5),
        iqr_ape: quantile_sorted(&ape, 0.75) - quantile_sorted(&ape, 0.25),
        rmse: mse.sqrt(),
        mpe,
        std_pe,
    })
}

/// Interval width plus `2/alpha` times the miss distance.
pub fn winkler_score(z: f64, lower: f64, upper: f64, alpha: f64) -> f64 {
    let width = upper - lower;
    if z < lower {
        width + 2.0 / alpha * (lower - z)
    } else if z > upper {
        width + 2.0 / alpha * (z - upper)
    } else {
        width
    }
}

pub fn pi_metrics(actual: &[f64], lower: &[f64], upper: &[f64], alpha: f64, mean_test_load: f64) -> Result<PiMetrics> {
    check_pair(actual, lower)?;
    check_pair(actual, upper)?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Evaluation(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if !(mean_test_load > 0.0 && mean_test_load.is_finite()) {
        return Err(Error::Evaluation("mean test load must be positive".into()));
    }
    let n = actual.len();
    let (mut inside, mut below, mut above, mut crossings) = (0usize, 0usize, 0usize, 0usize);
    let mut w = 0.0;
    for i in 0..n {
        let (z, l, u) = (actual[i], lower[i], upper[i]);
        if l > u {
            crossings += 1;
        }
        if z < l {
            below += 1;
        } else if z > u {
            above += 1;
        } else {
            inside += 1;
        }
        w += winkler_score(z, l, u, alpha);
    }
    let pct = |k: usize| 100.0 * k as f64 / n as f64;
    Ok(PiMetrics {
        pi_in: pct(inside),
        pi_below: pct(below),
        pi_above: pct(above),
        winkler_normalized: w / n as f64 / mean_test_load,
        crossings,
    })
}

/// Which model the one-sided alternative favours.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GwDirection {
    /// Alternative: model A has lower loss.
    ABetter,
    /// Alternative: model B has lower loss.
    BBetter,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GwResult {
    pub statistic: f64,
    pub p_value: f64,
    pub two_sided_p: f64,
    /// The differential carries no information; `p_value` is 1.
    pub degenerate: bool,
    pub n: usize,
}

impl GwResult {
    fn degenerate(n: usize) -> Self {
        Self { statistic: 0.0, p_value: 1.0, two_sided_p: 1.0, degenerate: true, n }
    }
}

/// Conditional Giacomini-White test on the loss differential
/// `d_t = L_A,t - L_B,t` with instruments `h_t = [1, d_(t-1)]`.
///
/// `T = n Zbar' S^-1 Zbar` with `S` the sample covariance of `Z_t = h_t d_t`
/// is compared with a chi-square on two degrees of freedom, whose survival
/// function is `exp(-T/2)`.
pub fn gw_test(losses_a: &[f64], losses_b: &[f64], direction: GwDirection) -> Result<GwResult> {
    check_pair(losses_a, losses_b)?;
    if losses_a.len() < GW_MIN_LENGTH {
        return Err(Error::Evaluation(format!("GW test needs at least {GW_MIN_LENGTH} days, got {}", losses_a.len())));
    }
    let d: Vec<f64> = losses_a.iter().zip(losses_b).map(|(a, b)| a - b).collect();
    let mean_d = d.iter().sum::<f64>() / d.len() as f64;
    let scale = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let spread = d.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v)) - d.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    let n = d.len() - 1;
    if scale == 0.0 || spread <= 1e-12 * scale {
        return Ok(GwResult::degenerate(n));
    }

    let z: Vec<[f64; 2]> = (1..d.len()).map(|t| [d[t], d[t - 1] * d[t]]).collect();
    let nf = n as f64;
    let zbar = [z.iter().map(|v| v[0]).sum::<f64>() / nf, z.iter().map(|v| v[1]).sum::<f64>() / nf];
    let mut s = [[0.0; 2]; 2];
    for v in &z {
        let c = [v[0] - zbar[0], v[1] - zbar[1]];
        for i in 0..2 {
            for j in 0..2 {
                s[i][j] += c[i] * c[j];
            }
        }
    }
    s.iter_mut().flatten().for_each(|x| *x /= nf - 1.0);
    let det = s[0][0] * s[1][1] - s[0][1] * s[1][0];
    if det.is_nan() || det <= 1e-14 * s[0][0] * s[1][1] {
        return Ok(GwResult::degenerate(n));
    }
    let inv = [[s[1][1] / det, -s[0][1] / det], [-s[1][0] / det, s[0][0] / det]];
    let quad = zbar[0] * (inv[0][0] * zbar[0] + inv[0][1] * zbar[1]) + zbar[1] * (inv[1][0] * zbar[0] + inv[1][1] * zbar[1]);
    let statistic = nf * quad;
    let two_sided_p = (-statistic / 2.0).exp();
    let favours = match direction {
        GwDirection::ABetter => mean_d < 0.0,
        GwDirection::BBetter => mean_d > 0.0,
    };
    let p_value = if favours { two_sided_p / 2.0 } else { 1.0 - two_sided_p / 2.0 };
    Ok(GwResult { statistic, p_value, two_sided_p, degenerate: false, n })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    pub models: Vec<String>,
    /// `ranks[m][s]`: rank of model `m` on series `s`, 1 is best.
    pub ranks: Vec<Vec<usize>>,
    pub mean_rank: Vec<f64>,
    /// Number of series on which each model ranked first.
    pub wins: Vec<usize>,
    /// Series on which at least two models tied.
    pub ties: usize,
}

/// Rank models per series by ascending metric. `table[m][s]` holds the
/// metric of model `m` on series `s`. Ties go to the lexicographically
/// smaller label.
pub fn rank_models(models: &[String], table: &[Vec<f64>]) -> Result<Ranking> {
    if models.is_empty() || models.len() != table.len() {
        return Err(Error::Evaluation("ranking table must have one row per model".into()));
    }
    let n_series = table[0].len();
    if n_series == 0 || table.iter().any(|r| r.len() != n_series) {
        return Err(Error::Evaluation("ranking table is incomplete".into()));
    }
    if table.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("ranking table"));
    }
    let mut ranks = vec![vec![0; n_series]; models.len()];
    let mut ties = 0;
    for s in 0..n_series {
        let mut order: Vec<usize> = (0..models.len()).collect();
        order.sort_by(|&a, &b| table[a][s].total_cmp(&table[b][s]).then_with(|| models[a].cmp(&models[b])));
        if order.windows(2).any(|w| table[w[0]][s] == table[w[1]][s]) {
            ties += 1;
        }
        for (r, &m) in order.iter().enumerate() {
            ranks[m][s] = r + 1;
        }
    }
    let mean_rank = ranks.iter().map(|r| r.iter().sum::<usize>() as f64 / n_series as f64).collect();
    let wins = ranks.iter().map(|r| r.iter().filter(|&&k| k == 1).count()).collect();
    Ok(Ranking { models: models.to_vec(), ranks, mean_rank, wins, ties })
}

/// Metrics for one model: the per-series reports and their average.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelScores {
    pub model: String,
    pub per_series: BTreeMap<String, MetricsReport>,
    pub mean: MetricsReport,
    /// Forecast days skipped because the actual day had missing hours.
    pub skipped_days: usize,
}

fn mean_report(reports: &[MetricsReport]) -> MetricsReport {
    let n = reports.len() as f64;
    let avg = |f: fn(&MetricsReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    MetricsReport {
        point: PointMetrics {
            mape: avg(|r| r.point.mape),
            mdape: avg(|r| r.point.mdape),
            iqr_ape: avg(|r| r.point.iqr_ape),
            rmse: avg(|r| r.point.rmse),
            mpe: avg(|r| r.point.mpe),
            std_pe: avg(|r| r.point.std_pe),
        },
        pi: PiMetrics {
            pi_in: avg(|r| r.pi.pi_in),
            pi_below: avg(|r| r.pi.pi_below),
            pi_above: avg(|r| r.pi.pi_above),
            winkler_normalized: avg(|r| r.pi.winkler_normalized),
            crossings: reports.iter().map(|r| r.pi.crossings).sum(),
        },
    }
}

/// Score one model's records against the observed series. Each series'
/// Winkler score is normalised by its mean load over the scored hours.
pub fn score_model(model: &str, records: &[ForecastRecord], series: &HashMap<String, HourlySeries>, alpha: f64) -> Result<ModelScores> {
    struct Acc {
        z: Vec<f64>,
        p: Vec<f64>,
        l: Vec<f64>,
        u: Vec<f64>,
    }
    let mut by_series: BTreeMap<String, Acc> = BTreeMap::new();
    let mut skipped = 0;
    for r in records {
        r.validate()?;
        let s = series
            .get(&r.series_id)
            .ok_or_else(|| Error::Evaluation(format!("no observations for series {}", r.series_id)))?;
        let Some(actual) = s.day(r.target_date) else {
            skipped += 1;
            continue;
        };
        let acc = by_series.entry(r.series_id.clone()).or_insert_with(|| Acc { z: vec![], p: vec![], l: vec![], u: vec![] });
        acc.z.extend_from_slice(actual);
        acc.p.extend_from_slice(&r.point);
        acc.l.extend_from_slice(&r.lower);
        acc.u.extend_from_slice(&r.upper);
    }
    if by_series.is_empty() {
        return Err(Error::Evaluation(format!("model {model} has no scorable forecasts")));
    }
    let mut per_series = BTreeMap::new();
    for (id, a) in by_series {
        let mean_load = a.z.iter().sum::<f64>() / a.z.len() as f64;
        let report = MetricsReport { point: point_metrics(&a.z, &a.p)?, pi: pi_metrics(&a.z, &a.l, &a.u, alpha, mean_load)? };
        per_series.insert(id, report);
    }
    let mean = mean_report(&per_series.values().copied().collect::<Vec<_>>());
    Ok(ModelScores { model: model.to_string(), per_series, mean, skipped_days: skipped })
}

/// Per calendar day: the 24-hour MAE of each series, averaged across series.
pub fn daily_losses(records: &[ForecastRecord], series: &HashMap<String, HourlySeries>) -> BTreeMap<NaiveDate, f64> {
    let mut acc: BTreeMap<NaiveDate, (f64, usize)> = BTreeMap::new();
    for r in records {
        let Some(actual) = series.get(&r.series_id).and_then(|s| s.day(r.target_date)) else { continue };
        let mae = actual.iter().zip(&r.point).map(|(z, f)| (z - f).abs()).sum::<f64>() / DAY_HOURS as f64;
        let e = acc.entry(r.target_date).or_default();
        e.0 += mae;
        e.1 += 1;
    }
    acc.into_iter().map(|(d, (s, n))| (d, s / n as f64)).collect()
}

/// Pairwise one-sided GW tests. Entry `[row][col]` tests whether the
/// column model is more accurate than the row model. Diagonal entries are
/// degenerate with p = 1; pairs with fewer than [`GW_MIN_LENGTH`] common
/// days are `None`.
pub fn gw_matrix(losses: &[BTreeMap<NaiveDate, f64>]) -> Vec<Vec<Option<GwResult>>> {
    let k = losses.len();
    (0..k)
        .map(|row| {
            (0..k)
                .map(|col| {
                    let common: Vec<NaiveDate> = losses[col].keys().filter(|d| losses[row].contains_key(d)).copied().collect();
                    if row == col {
                        return Some(GwResult::degenerate(common.len().saturating_sub(1)));
                    }
                    let a: Vec<f64> = common.iter().map(|d| losses[col][d]).collect();
                    let b: Vec<f64> = common.iter().map(|d| losses[row][d]).collect();
                    gw_test(&a, &b, GwDirection::ABetter).ok()
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perfect_forecast() {
        let z = [100.0, 120.0, 90.0, 300.0];
        let m = point_metrics(&z, &z).unwrap();
        assert_eq!(m, PointMetrics::default());
    }

    #[test]
    fn two_point_example() {
        let m = point_metrics(&[100.0, 200.0], &[110.0, 180.0]).unwrap();
        assert!((m.mape - 10.0).abs() < 1e-12);
        assert!(m.mpe.abs() < 1e-12);
        assert!((m.rmse - (250.0f64).sqrt()).abs() < 1e-12);
        assert!((m.rmse - 15.8114).abs() < 1e-4);
        assert!(m.iqr_ape.abs() < 1e-12);
        // PE = [-10, 10], sample std sqrt(200).
        assert!((m.std_pe - 200f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn over_prediction_gives_negative_mpe() {
        let m = point_metrics(&[100.0, 100.0], &[105.0, 110.0]).unwrap();
        assert!(m.mpe < 0.0);
    }

    #[test]
    fn zero_actual_rejected() {
        assert!(point_metrics(&[0.0, 1.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn quantiles_interpolate() {
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&s, 0.5), 2.5);
        assert_eq!(quantile_sorted(&s, 0.25), 1.75);
        assert_eq!(quantile_sorted(&s, 0.75), 3.25);
    }

    #[test]
    fn winkler_cases() {
        assert_eq!(winkler_score(15.0, 10.0, 20.0, 0.1), 10.0);
        assert!((winkler_score(5.0, 10.0, 20.0, 0.1) - 110.0).abs() < 1e-12);
        assert!((winkler_score(25.0, 10.0, 20.0, 0.1) - 110.0).abs() < 1e-12);
    }

    #[test]
    fn pi_triple_and_crossings() {
        let m = pi_metrics(&[15.0, 5.0, 25.0, 15.0], &[10.0, 10.0, 10.0, 16.0], &[20.0, 20.0, 20.0, 14.0], 0.1, 10.0).unwrap();
        assert_eq!((m.pi_in, m.pi_below, m.pi_above), (25.0, 50.0, 25.0));
        assert_eq!(m.crossings, 1);
        assert!(pi_metrics(&[1.0], &[0.0], &[2.0], 1.0, 1.0).is_err());
        assert!(pi_metrics(&[1.0], &[0.0], &[2.0], 0.1, 0.0).is_err());
    }

    #[test]
    fn gw_identical_losses_degenerate() {
        let a: Vec<f64> = (0..60).map(|i| 1.0 + (i as f64).sin()).collect();
        let r = gw_test(&a, &a, GwDirection::ABetter).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn gw_short_series_rejected() {
        assert!(gw_test(&[1.0; 10], &[2.0; 10], GwDirection::ABetter).is_err());
    }

    #[test]
    fn gw_detects_dominance() {
        let b: Vec<f64> = (0..200).map(|i| 10.0 + (i as f64 * 0.7).sin()).collect();
        let a: Vec<f64> = b.iter().enumerate().map(|(i, v)| v - 1.0 + 0.1 * (i as f64 * 1.3).cos()).collect();
        let r = gw_test(&a, &b, GwDirection::ABetter).unwrap();
        assert!(r.p_value < 0.01);
        let r = gw_test(&a, &b, GwDirection::BBetter).unwrap();
        assert!(r.p_value > 0.99);
    }

    #[test]
    fn ranking_examples() {
        let one = rank_models(&["a".into()], &[vec![3.0, 1.0]]).unwrap();
        assert_eq!(one.ranks, vec![vec![1, 1]]);
        let models = vec!["a".to_string(), "b".into(), "c".into()];
        let table = vec![vec![1.0, 1.0, 2.0], vec![2.0, 3.0, 3.0], vec![3.0, 2.0, 2.0]];
        let r = rank_models(&models, &table).unwrap();
        assert_eq!(r.wins, vec![3, 0, 0]);
        // Series 2 ties a and c; a wins on label order.
        assert_eq!(r.ranks[0][2], 1);
        assert_eq!(r.ranks[2][2], 2);
        assert_eq!(r.ties, 1);
    }

    #[test]
    fn gw_matrix_diagonal() {
        let d0 = NaiveDate::from_ymd_opt(2018, 1, 1).unwrap();
        let mk = |off: f64, w: f64| {
            (0..40).map(|i| (d0 + chrono::Duration::days(i), off + (i as f64 * w).sin().abs())).collect::<BTreeMap<_, _>>()
        };
        let m = gw_matrix(&[mk(1.0, 1.0), mk(2.0, 0.37)]);
        let p = |r: usize, c: usize| m[r][c].unwrap().p_value;
        assert_eq!((p(0, 0), p(1, 1)), (1.0, 1.0));
        assert!(m[0][0].unwrap().degenerate);
        assert!(p(1, 0) < 0.01, "model 0 beats model 1");
        assert!(p(0, 1) > 0.99);
        let same = gw_matrix(&[mk(1.0, 1.0), mk(1.0, 1.0)]);
        assert!(same[0][1].unwrap().degenerate && same[0][1].unwrap().p_value == 1.0);
        assert!(gw_matrix(&[mk(1.0, 1.0), BTreeMap::new()])[0][1].is_none());
    }

    proptest! {
        #[test]
        fn scale_invariance(
            pairs in proptest::collection::vec((1.0f64..100.0, 0.5f64..150.0), 4..40),
            c in 0.01f64..100.0,
        ) {
            let z: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let f: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let zs: Vec<f64> = z.iter().map(|v| v * c).collect();
            let fs: Vec<f64> = f.iter().map(|v| v * c).collect();
            let a = point_metrics(&z, &f).unwrap();
            let b = point_metrics(&zs, &fs).unwrap();
            let close = |x: f64, y: f64| (x - y).abs() <= 1e-9 * (1.0 + x.abs());
            prop_assert!(close(a.mape, b.mape) && close(a.mdape, b.mdape) && close(a.iqr_ape, b.iqr_ape));
            prop_assert!(close(a.mpe, b.mpe) && close(a.std_pe, b.std_pe));
            prop_assert!(close(a.rmse * c, b.rmse));
            prop_assert!(a.mape >= 0.0 && a.rmse >= 0.0);
        }

        #[test]
        fn coverage_sums_to_100(rows in proptest::collection::vec((0.0f64..10.0, 0.0f64..10.0, 0.0f64..10.0), 1..50)) {
            let z: Vec<f64> = rows.iter().map(|r| r.0).collect();
            let l: Vec<f64> = rows.iter().map(|r| r.1.min(r.2)).collect();
            let u: Vec<f64> = rows.iter().map(|r| r.1.max(r.2)).collect();
            let m = pi_metrics(&z, &l, &u, 0.1, 5.0).unwrap();
            prop_assert!((m.pi_in + m.pi_below + m.pi_above - 100.0).abs() < 1e-9);
        }

        #[test]
        fn winkler_at_least_width(z in -10.0f64..10.0, l in -5.0f64..0.0, w in 0.0f64..5.0, alpha in 0.01f64..0.99) {
            let u = l + w;
            let w = u - l;
            let s = winkler_score(z, l, u, alpha);
            prop_assert!(s >= w);
            if z >= l && z <= u {
                prop_assert_eq!(s, w);
            } else {
                let miss = if z < l { l - z } else { z - u };
                prop_assert!((s - w - 2.0 / alpha * miss).abs() <= 1e-9 * (1.0 + s));
            }
        }

        #[test]
        fn gw_swap_and_rescale(
            a in proptest::collection::vec(0.0f64..10.0, 30..80),
            noise in proptest::collection::vec(-1.0f64..1.0, 80),
            c in 0.1f64..50.0,
        ) {
            let b: Vec<f64> = a.iter().zip(&noise).map(|(x, e)| x + e).collect();
            let ab = gw_test(&a, &b, GwDirection::ABetter).unwrap();
            let ba = gw_test(&b, &a, GwDirection::ABetter).unwrap();
            prop_assert_eq!(ab.degenerate, ba.degenerate);
            if !ab.degenerate {
                prop_assert!((ab.p_value - (1.0 - ba.p_value)).abs() < 1e-9);
                let a2: Vec<f64> = a.iter().map(|v| v * c).collect();
                let b2: Vec<f64> = b.iter().map(|v| v * c).collect();
                let s = gw_test(&a2, &b2, GwDirection::ABetter).unwrap();
                prop_assert!((s.statistic - ab.statistic).abs() <= 1e-7 * (1.0 + ab.statistic));
            }
        }

        #[test]
        fn ranking_permutation_invariant(table in proptest::collection::vec(proptest::collection::vec(0.0f64..1.0, 5), 3)) {
            let models = vec!["a".to_string(), "b".into(), "c".into()];
            let r = rank_models(&models, &table).unwrap();
            let perm = [2usize, 0, 1];
            let pm: Vec<String> = perm.iter().map(|&i| models[i].clone()).collect();
            let pt: Vec<Vec<f64>> = perm.iter().map(|&i| table[i].clone()).collect();
            let rp = rank_models(&pm, &pt).unwrap();
            for (j, &i) in perm.iter().enumerate() {
                prop_assert_eq!(r.mean_rank[i], rp.mean_rank[j]);
            }
        }
    }
}

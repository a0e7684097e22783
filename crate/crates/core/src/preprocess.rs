//! Weekly input patterns, daily output patterns and the calendar features
//! that extend them.
//!
//! A forecast for day `D` is conditioned on the 168 hours immediately
//! preceding `D 00:00`. That week is standardized to zero mean and unit
//! (population) standard deviation; its mean and standard deviation are
//! the coding variables used to encode the 24 target hours of `D` and to
//! decode the network output back to MW.

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const WEEK_HOURS: usize = 168;
pub const DAY_HOURS: usize = 24;
pub const DAYS_OF_WEEK: usize = 7;
pub const DAYS_OF_MONTH: usize = 31;
pub const WEEKS_OF_YEAR: usize = 52;
pub const CALENDAR_LEN: usize = DAYS_OF_WEEK + DAYS_OF_MONTH + WEEKS_OF_YEAR;
/// Weekly pattern + level + three one-hot blocks.
pub const EXTENDED_INPUT_LEN: usize = WEEK_HOURS + 1 + CALENDAR_LEN;
/// Weeks whose standard deviation falls below this are rejected.
pub const STD_FLOOR: f64 = 1e-6;

/// One contiguous hourly history. Timestamps are implicit: entry `i` is
/// `start + i hours`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourlySeries {
    pub series_id: String,
    pub start: NaiveDateTime,
    pub values: Vec<f64>,
    pub missing: Vec<bool>,
}

impl HourlySeries {
    pub fn new(
        series_id: impl Into<String>,
        start: NaiveDateTime,
        values: Vec<f64>,
        missing: Vec<bool>,
    ) -> Result<Self> {
        let series_id = series_id.into();
        if values.len() != missing.len() {
            return Err(Error::InvalidSeries(format!(
                "{series_id}: {} values but {} mask entries",
                values.len(),
                missing.len()
            )));
        }
        for (i, (&v, &m)) in values.iter().zip(&missing).enumerate() {
            if !m && !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidSeries(format!(
                    "{series_id}: hour {i} has non-positive or non-finite load {v}"
                )));
            }
        }
        Ok(Self { series_id, start, values, missing })
    }

    /// A fully observed series.
    pub fn complete(series_id: impl Into<String>, start: NaiveDateTime, values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        Self::new(series_id, start, values, vec![false; n])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn timestamp(&self, index: usize) -> NaiveDateTime {
        self.start + Duration::hours(index as i64)
    }

    pub fn end(&self) -> Option<NaiveDateTime> {
        (!self.is_empty()).then(|| self.timestamp(self.len() - 1))
    }

    pub fn missing_count(&self) -> usize {
        self.missing.iter().filter(|&&m| m).count()
    }

    /// Index of `date 00:00`, if it is an hour boundary inside or just past
    /// the series.
    fn midnight_index(&self, date: NaiveDate) -> Option<i64> {
        let midnight = date.and_hms_opt(0, 0, 0)?;
        let delta = midnight - self.start;
        (delta.num_seconds() % 3600 == 0).then(|| delta.num_hours())
    }

    /// The `len` hours starting at `from`, or `None` if any are out of
    /// range or missing.
    fn complete_window(&self, from: i64, len: usize) -> Option<&[f64]> {
        if from < 0 {
            return None;
        }
        let from = from as usize;
        let to = from.checked_add(len)?;
        if to > self.len() || self.missing[from..to].iter().any(|&m| m) {
            return None;
        }
        Some(&self.values[from..to])
    }

    /// The 168 hours preceding `date 00:00`, if fully observed.
    pub fn week_before(&self, date: NaiveDate) -> Option<&[f64]> {
        let mid = self.midnight_index(date)?;
        self.complete_window(mid - WEEK_HOURS as i64, WEEK_HOURS)
    }

    /// The 24 hours of `date`, if fully observed.
    pub fn day(&self, date: NaiveDate) -> Option<&[f64]> {
        let mid = self.midnight_index(date)?;
        self.complete_window(mid, DAY_HOURS)
    }

    /// Calendar dates whose midnight falls inside the series.
    pub fn dates(&self) -> Vec<NaiveDate> {
        let Some(end) = self.end() else { return Vec::new() };
        let mut d = if self.start.time() == chrono::NaiveTime::MIN {
            self.start.date()
        } else {
            self.start.date().succ_opt().unwrap()
        };
        let mut out = Vec::new();
        while d.and_hms_opt(0, 0, 0).unwrap() <= end {
            out.push(d);
            d = d.succ_opt().unwrap();
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeeklyPattern(pub Vec<f64>);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyPattern(pub Vec<f64>);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodingVariables {
    pub week_mean: f64,
    pub week_std: f64,
}

/// Standardize one week with its mean and population standard deviation.
pub fn standardize_week(week: &[f64]) -> Result<(WeeklyPattern, CodingVariables)> {
    if week.len() != WEEK_HOURS {
        return Err(Error::Shape(format!("week has {} hours, expected {WEEK_HOURS}", week.len())));
    }
    if week.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("week"));
    }
    let n = week.len() as f64;
    let mean = week.iter().sum::<f64>() / n;
    let var = week.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < STD_FLOOR {
        return Err(Error::ConstantWeek(std));
    }
    let x = week.iter().map(|v| (v - mean) / std).collect();
    Ok((WeeklyPattern(x), CodingVariables { week_mean: mean, week_std: std }))
}

pub fn encode_day(day: &[f64], coding: CodingVariables) -> Result<DailyPattern> {
    if day.len() != DAY_HOURS {
        return Err(Error::Shape(format!("day has {} hours, expected {DAY_HOURS}", day.len())));
    }
    if day.iter().any(|v| !v.is_finite()) || !coding.week_mean.is_finite() || !coding.week_std.is_finite() {
        return Err(Error::NonFinite("day or coding variables"));
    }
    Ok(DailyPattern(day.iter().map(|v| (v - coding.week_mean) / coding.week_std).collect()))
}

/// Map a pattern (point or quantile) back to MW.
pub fn decode_day(y_hat: &[f64], coding: CodingVariables) -> Result<Vec<f64>> {
    let out: Vec<f64> = y_hat.iter().map(|y| y * coding.week_std + coding.week_mean).collect();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("decoded forecast"));
    }
    Ok(out)
}

/// Monday = 0.
pub fn day_of_week_index(date: NaiveDate) -> usize {
    date.weekday().num_days_from_monday() as usize
}

/// ISO week number minus one, with week 53 folded into the last slot.
pub fn week_of_year_index(date: NaiveDate) -> usize {
    (date.iso_week().week() as usize).min(WEEKS_OF_YEAR) - 1
}

/// The 90 calendar indicators for `date`: day of week, day of month, week
/// of year.
pub fn calendar_one_hots(date: NaiveDate) -> Vec<f64> {
    let mut v = vec![0.0; CALENDAR_LEN];
    v[day_of_week_index(date)] = 1.0;
    v[DAYS_OF_WEEK + date.day0() as usize] = 1.0;
    v[DAYS_OF_WEEK + DAYS_OF_MONTH + week_of_year_index(date)] = 1.0;
    v
}

/// Input record for the network: weekly pattern, log10 level and calendar
/// one-hots of the forecasted day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtendedInput {
    pub x: WeeklyPattern,
    pub level: f64,
    pub calendar: Vec<f64>,
    pub coding: CodingVariables,
    pub date: NaiveDate,
}

impl ExtendedInput {
    pub fn day_of_week(&self) -> &[f64] {
        &self.calendar[..DAYS_OF_WEEK]
    }

    pub fn day_of_month(&self) -> &[f64] {
        &self.calendar[DAYS_OF_WEEK..DAYS_OF_WEEK + DAYS_OF_MONTH]
    }

    pub fn week_of_year(&self) -> &[f64] {
        &self.calendar[DAYS_OF_WEEK + DAYS_OF_MONTH..]
    }

    /// `[x, level, day_of_week, day_of_month, week_of_year]`, 259 entries.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(EXTENDED_INPUT_LEN);
        v.extend_from_slice(&self.x.0);
        v.push(self.level);
        v.extend_from_slice(&self.calendar);
        v
    }
}

pub fn build_extended_input(series: &HourlySeries, target_date: NaiveDate) -> Result<ExtendedInput> {
    let week = series.week_before(target_date).ok_or_else(|| Error::IncompleteHistory {
        series: series.series_id.clone(),
        date: target_date,
    })?;
    let (x, coding) = standardize_week(week)?;
    if coding.week_mean <= 0.0 {
        return Err(Error::NonPositiveLevel(coding.week_mean));
    }
    Ok(ExtendedInput {
        x,
        level: coding.week_mean.log10(),
        calendar: calendar_one_hots(target_date),
        coding,
        date: target_date,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub input: ExtendedInput,
    pub target: DailyPattern,
    pub series_id: String,
    pub target_date: NaiveDate,
}

impl TrainingSample {
    pub fn coding(&self) -> CodingVariables {
        self.input.coding
    }
}

/// Inclusive range of target dates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateRange {
    pub from: NaiveDate,
    pub to: NaiveDate,
}

impl DateRange {
    pub fn new(from: NaiveDate, to: NaiveDate) -> Self {
        Self { from, to }
    }

    pub fn contains(&self, d: NaiveDate) -> bool {
        self.from <= d && d <= self.to
    }

    pub fn days(&self) -> impl Iterator<Item = NaiveDate> {
        self.from.iter_days().take_while({
            let to = self.to;
            move |d| *d <= to
        })
    }
}

/// Every sample of one series whose input week and target day are fully
/// observed, in chronological order.
pub fn series_samples(series: &HourlySeries, range: Option<DateRange>) -> Vec<TrainingSample> {
    series
        .dates()
        .into_iter()
        .filter(|d| range.is_none_or(|r| r.contains(*d)))
        .filter_map(|date| {
            let day = series.day(date)?;
            let input = build_extended_input(series, date).ok()?;
            let target = encode_day(day, input.coding).ok()?;
            Some(TrainingSample { input, target, series_id: series.series_id.clone(), target_date: date })
        })
        .collect()
}

/// The cross-learning set: per-series sample sets concatenated in input
/// order, each chronological.
pub fn build_training_set(series_list: &[HourlySeries], range: Option<DateRange>) -> Result<Vec<TrainingSample>> {
    let per_series: Vec<Vec<TrainingSample>> =
        series_list.par_iter().map(|s| series_samples(s, range)).collect();
    let all: Vec<TrainingSample> = per_series.into_iter().flatten().collect();
    if all.is_empty() {
        return Err(Error::NoTrainableSamples);
    }
    Ok(all)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn midnight(y: i32, m: u32, d: u32) -> NaiveDateTime {
        NaiveDate::from_ymd_opt(y, m, d).unwrap().and_hms_opt(0, 0, 0).unwrap()
    }

    fn wavy(hours: usize) -> Vec<f64> {
        (0..hours).map(|i| 1000.0 + 100.0 * (i as f64 * 0.26).sin() + (i % 7) as f64).collect()
    }

    #[test]
    fn alternating_week_standardizes_to_plus_minus_one() {
        let week: Vec<f64> = (0..168).map(|i| if i % 2 == 0 { 90.0 } else { 110.0 }).collect();
        let (x, c) = standardize_week(&week).unwrap();
        assert_eq!(c.week_mean, 100.0);
        assert_eq!(c.week_std, 10.0);
        for (i, v) in x.0.iter().enumerate() {
            assert_eq!(*v, if i % 2 == 0 { -1.0 } else { 1.0 });
        }
    }

    #[test]
    fn constant_week_is_rejected() {
        assert!(matches!(standardize_week(&[100.0; 168]), Err(Error::ConstantWeek(_))));
    }

    #[test]
    fn ramp_week_matches_scalar_loop() {
        let week: Vec<f64> = (1..=168).map(f64::from).collect();
        let (x, _) = standardize_week(&week).unwrap();
        let mut mean = 0.0;
        for v in &x.0 {
            mean += v;
        }
        mean /= 168.0;
        let mut var = 0.0;
        for v in &x.0 {
            var += (v - mean) * (v - mean);
        }
        let std = (var / 168.0).sqrt();
        assert!(mean.abs() < 1e-12);
        assert!((std - 1.0).abs() < 1e-12);
    }

    #[test]
    fn encode_examples() {
        let c = CodingVariables { week_mean: 100.0, week_std: 10.0 };
        assert_eq!(encode_day(&[100.0; 24], c).unwrap().0, vec![0.0; 24]);
        assert_eq!(encode_day(&[110.0; 24], c).unwrap().0, vec![1.0; 24]);
        let day: Vec<f64> = (0..24).map(|i| if i % 2 == 0 { 105.0 } else { 95.0 }).collect();
        let y = encode_day(&day, c).unwrap().0;
        assert_eq!(&y[..2], &[0.5, -0.5]);
        let mut bad = day.clone();
        bad[3] = f64::NAN;
        assert!(encode_day(&bad, c).is_err());
    }

    #[test]
    fn decode_examples() {
        let c = CodingVariables { week_mean: 300.0, week_std: 50.0 };
        assert_eq!(decode_day(&[0.0; 24], c).unwrap(), vec![300.0; 24]);
        let mut y = vec![0.0; 24];
        y[0] = 1.0;
        y[1] = -1.0;
        let z = decode_day(&y, c).unwrap();
        assert_eq!(&z[..3], &[350.0, 250.0, 300.0]);
    }

    #[test]
    fn extended_input_layout() {
        // 2018-01-08 is a Monday.
        let s = HourlySeries::complete("a", midnight(2018, 1, 1), wavy(8 * 24)).unwrap();
        let e = build_extended_input(&s, NaiveDate::from_ymd_opt(2018, 1, 8).unwrap()).unwrap();
        assert_eq!(e.to_vec().len(), 259);
        assert_eq!(e.day_of_week()[0], 1.0);
        assert_eq!(e.day_of_month()[7], 1.0);
        assert_eq!(e.week_of_year()[1], 1.0);
        for block in [e.day_of_week(), e.day_of_month(), e.week_of_year()] {
            assert_eq!(block.iter().sum::<f64>(), 1.0);
        }
        assert!((e.level - e.coding.week_mean.log10()).abs() < 1e-15);
    }

    #[test]
    fn level_is_log10_of_mean() {
        let week: Vec<f64> = (0..168).map(|i| if i % 2 == 0 { 900.0 } else { 1100.0 }).collect();
        let mut v = week.clone();
        v.extend_from_slice(&[1000.0; 24]);
        let s = HourlySeries::complete("a", midnight(2018, 1, 1), v).unwrap();
        let e = build_extended_input(&s, NaiveDate::from_ymd_opt(2018, 1, 8).unwrap()).unwrap();
        assert_eq!(e.level, 3.0);
    }

    #[test]
    fn week_53_folds_into_last_slot() {
        // 2020-12-31 is in ISO week 53.
        let d = NaiveDate::from_ymd_opt(2020, 12, 31).unwrap();
        assert_eq!(d.iso_week().week(), 53);
        assert_eq!(week_of_year_index(d), 51);
    }

    #[test]
    fn incomplete_history_is_reported() {
        let mut s = HourlySeries::complete("a", midnight(2018, 1, 1), wavy(8 * 24)).unwrap();
        s.missing[10] = true;
        let err = build_extended_input(&s, NaiveDate::from_ymd_opt(2018, 1, 8).unwrap()).unwrap_err();
        assert!(matches!(err, Error::IncompleteHistory { .. }));
    }

    #[test]
    fn sample_counts() {
        let a = HourlySeries::complete("a", midnight(2018, 1, 1), wavy(15 * 24)).unwrap();
        let set = build_training_set(std::slice::from_ref(&a), None).unwrap();
        assert_eq!(set.len(), 8);
        assert_eq!(set[0].target_date, NaiveDate::from_ymd_opt(2018, 1, 8).unwrap());
        assert_eq!(set[7].target_date, NaiveDate::from_ymd_opt(2018, 1, 15).unwrap());
        let b = HourlySeries { series_id: "b".into(), ..a.clone() };
        assert_eq!(build_training_set(&[a, b], None).unwrap().len(), 16);
    }

    #[test]
    fn missing_hour_excludes_overlapping_samples() {
        let mut s = HourlySeries::complete("a", midnight(2018, 1, 1), wavy(15 * 24)).unwrap();
        s.missing[100] = true;
        let set = build_training_set(std::slice::from_ref(&s), None).unwrap();
        for smp in &set {
            let mid = (smp.target_date.and_hms_opt(0, 0, 0).unwrap() - s.start).num_hours() as usize;
            assert!(!(mid - 168..mid + 24).contains(&100));
        }
        // Hour 100 falls on day 5, which sits in the input week of days 6..=12.
        assert_eq!(set.len(), 3);
    }

    #[test]
    fn empty_training_set_is_an_error() {
        let s = HourlySeries::complete("a", midnight(2018, 1, 1), wavy(7 * 24)).unwrap();
        assert!(matches!(build_training_set(&[s], None), Err(Error::NoTrainableSamples)));
    }

    #[test]
    fn series_rejects_non_positive_loads() {
        assert!(HourlySeries::complete("a", midnight(2018, 1, 1), vec![1.0, 0.0]).is_err());
        assert!(HourlySeries::new("a", midnight(2018, 1, 1), vec![1.0, 0.0], vec![false, true]).is_ok());
    }

    proptest! {
        #[test]
        fn decode_inverts_encode(
            day in proptest::collection::vec(1.0f64..1e5, 24),
            mean in 1.0f64..1e5,
            std in 1e-3f64..1e4,
        ) {
            let c = CodingVariables { week_mean: mean, week_std: std };
            let back = decode_day(&encode_day(&day, c).unwrap().0, c).unwrap();
            for (a, b) in back.iter().zip(&day) {
                prop_assert!((a - b).abs() <= 1e-10 * b.abs());
            }
        }

        #[test]
        fn weekly_patterns_are_standardized(week in proptest::collection::vec(1.0f64..1e5, 168)) {
            if let Ok((x, _)) = standardize_week(&week) {
                let n = 168.0;
                let mean = x.0.iter().sum::<f64>() / n;
                let std = (x.0.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
                prop_assert!(mean.abs() < 1e-9);
                prop_assert!((std - 1.0).abs() < 1e-9);
            }
        }
    }
}

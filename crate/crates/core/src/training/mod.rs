//! Cross-learning trainer, ensembles and forecasting.
//!
//! One model is trained on the samples of every series at once. Each epoch
//! shuffles the series, groups them into batches of the scheduled size and
//! walks every series of a batch through successive truncated-BPTT windows
//! in lockstep: window `w` of each series in the batch is unrolled (state
//! carried over from window `w - 1`), the composite loss is averaged over
//! the participating series and one Adam update is applied.

mod adam;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use adam::{clip_global_norm, Adam, AdamConfig};

use crate::evaluation::ForecastRecord;
use crate::loss::{composite_loss, composite_loss_grad, LossConfig};
use crate::network::{ModelConfig, ModelState, StackedModel, StepOutput};
use crate::params::Parameterized;
use crate::preprocess::{build_extended_input, decode_day, DateRange, ExtendedInput, HourlySeries, TrainingSample};
use crate::{Error, Result};

pub const DEFAULT_WINDOW: usize = 56;
pub const DEFAULT_WARMUP: usize = 56;

/// Epoch schedules and optimizer settings. Schedules are piecewise
/// constant: `(first_epoch, value)` pairs, epochs counted from 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainRecipe {
    pub epochs: usize,
    pub lr_schedule: Vec<(usize, f64)>,
    pub batch_schedule: Vec<(usize, usize)>,
    #[serde(default)]
    pub adam: AdamConfig,
    /// Global-norm gradient clipping; `None` or 0 disables it.
    pub clip_norm: Option<f64>,
    /// Truncated-BPTT window, in days.
    pub window: usize,
    /// Days unrolled without loss before a forecast.
    pub warmup: usize,
    /// One ensemble member per seed.
    pub seeds: Vec<u64>,
}

impl Default for TrainRecipe {
    /// 10 epochs; learning rate 3e-3 (epochs 1-5), 1e-3 (6), 3e-4 (7),
    /// 1e-4 (8-10); 2 series per batch for epochs 1-3, then 5; five members.
    fn default() -> Self {
        Self {
            epochs: 10,
            lr_schedule: vec![(1, 3e-3), (6, 1e-3), (7, 3e-4), (8, 1e-4)],
            batch_schedule: vec![(1, 2), (4, 5)],
            adam: AdamConfig::default(),
            clip_norm: Some(10.0),
            window: DEFAULT_WINDOW,
            warmup: DEFAULT_WARMUP,
            seeds: vec![1, 2, 3, 4, 5],
        }
    }
}

fn scheduled<T: Copy>(schedule: &[(usize, T)], epoch: usize) -> T {
    schedule.iter().rev().find(|(from, _)| *from <= epoch).map(|(_, v)| *v).expect("schedule validated to start at epoch 1")
}

impl TrainRecipe {
    pub fn validate(&self) -> Result<()> {
        fn check<T: Copy>(name: &str, s: &[(usize, T)], positive: impl Fn(T) -> bool) -> Result<()> {
            if s.first().map(|e| e.0) != Some(1) {
                return Err(Error::Config(format!("{name} must start at epoch 1")));
            }
            if s.windows(2).any(|w| w[0].0 >= w[1].0) {
                return Err(Error::Config(format!("{name} epochs must be strictly increasing")));
            }
            if !s.iter().all(|e| positive(e.1)) {
                return Err(Error::Config(format!("{name} values must be positive")));
            }
            Ok(())
        }
        check("lr_schedule", &self.lr_schedule, |v: f64| v > 0.0 && v.is_finite())?;
        check("batch_schedule", &self.batch_schedule, |v: usize| v > 0)?;
        if self.window == 0 {
            return Err(Error::Config("window must be positive".into()));
        }
        if self.clip_norm.is_some_and(|c| c < 0.0 || !c.is_finite()) {
            return Err(Error::Config("clip_norm must be non-negative".into()));
        }
        let a = &self.adam;
        if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || a.eps <= 0.0 {
            return Err(Error::Config("adam parameters out of range".into()));
        }
        Ok(())
    }

    pub fn learning_rate(&self, epoch: usize) -> f64 {
        scheduled(&self.lr_schedule, epoch)
    }

    pub fn batch_size(&self, epoch: usize) -> usize {
        scheduled(&self.batch_schedule, epoch)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub updates: usize,
    pub mean_loss: f64,
}

/// One truncated-BPTT window of consecutive samples. `fresh` windows start
/// a contiguous run and begin from a zero state.
struct Window<'a> {
    samples: Vec<&'a TrainingSample>,
    fresh: bool,
}

/// Per series: contiguous runs of consecutive days cut into windows.
fn series_windows(data: &[TrainingSample], window: usize) -> Vec<Vec<Window<'_>>> {
    let mut by_series: BTreeMap<&str, Vec<&TrainingSample>> = BTreeMap::new();
    let mut order: Vec<&str> = Vec::new();
    for s in data {
        by_series
            .entry(s.series_id.as_str())
            .or_insert_with(|| {
                order.push(s.series_id.as_str());
                Vec::new()
            })
            .push(s);
    }
    order
        .into_iter()
        .map(|id| {
            let mut samples = by_series.remove(id).unwrap_or_default();
            samples.sort_by_key(|s| s.target_date);
            let mut runs: Vec<Vec<&TrainingSample>> = Vec::new();
            for s in samples {
                match runs.last_mut() {
                    Some(run) if run.last().unwrap().target_date.succ_opt() == Some(s.target_date) => run.push(s),
                    _ => runs.push(vec![s]),
                }
            }
            runs.into_iter()
                .flat_map(|run| {
                    run.chunks(window)
                        .enumerate()
                        .map(|(i, c)| Window { samples: c.to_vec(), fresh: i == 0 })
                        .collect::<Vec<_>>()
                })
                .collect()
        })
        .collect()
}

/// Loss and gradients of one window, averaged over its days.
fn window_gradients(
    model: &StackedModel,
    state: &mut ModelState,
    window: &Window<'_>,
    loss_cfg: &LossConfig,
) -> Result<(StackedModel, f64)> {
    if window.fresh {
        state.reset();
    }
    let inputs: Vec<&ExtendedInput> = window.samples.iter().map(|s| &s.input).collect();
    let (outputs, tape) = model.unroll(state, &inputs)?;
    let n = outputs.len() as f64;
    let mut loss = 0.0;
    let mut d_out = Vec::with_capacity(outputs.len());
    for (o, s) in outputs.iter().zip(&window.samples) {
        loss += composite_loss(&s.target.0, o, loss_cfg)?;
        let mut g = composite_loss_grad(&s.target.0, o, loss_cfg)?;
        g.iter_mut().for_each(|v| *v /= n);
        d_out.push(g);
    }
    Ok((model.backward(&tape, &d_out)?, loss / n))
}

/// Train one model from `seed`.
pub fn train(
    data: &[TrainingSample],
    model_cfg: ModelConfig,
    loss_cfg: &LossConfig,
    recipe: &TrainRecipe,
    seed: u64,
) -> Result<(StackedModel, Vec<EpochLog>)> {
    recipe.validate()?;
    loss_cfg.validate()?;
    if data.is_empty() {
        return Err(Error::NoTrainableSamples);
    }
    let mut model = StackedModel::build(model_cfg, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7261_696e);
    let mut adam = Adam::new(recipe.adam);
    let windows = series_windows(data, recipe.window);
    let mut log = Vec::with_capacity(recipe.epochs);

    for epoch in 1..=recipe.epochs {
        let lr = recipe.learning_rate(epoch);
        let batch = recipe.batch_size(epoch);
        let mut order: Vec<usize> = (0..windows.len()).collect();
        order.shuffle(&mut rng);
        let mut losses = Vec::new();
        let mut updates = 0;

        for group in order.chunks(batch) {
            let mut states: Vec<ModelState> = group.iter().map(|_| model.new_state()).collect();
            let n_windows = group.iter().map(|&s| windows[s].len()).max().unwrap_or(0);
            for w in 0..n_windows {
                let results: Vec<Option<Result<(StackedModel, f64)>>> = group
                    .par_iter()
                    .zip(states.par_iter_mut())
                    .map(|(&s, state)| windows[s].get(w).map(|win| window_gradients(&model, state, win, loss_cfg)))
                    .collect();
                let mut total: Option<StackedModel> = None;
                let mut count = 0usize;
                let mut loss_sum = 0.0;
                for r in results.into_iter().flatten() {
                    let (g, l) = r?;
                    loss_sum += l;
                    count += 1;
                    match total.as_mut() {
                        Some(t) => t.accumulate(&g),
                        None => total = Some(g),
                    }
                }
                let Some(mut grads) = total else { continue };
                grads.scale(1.0 / count as f64);
                let mean = loss_sum / count as f64;
                if !mean.is_finite() {
                    return Err(Error::Diverged { epoch, loss: mean });
                }
                if let Some(c) = recipe.clip_norm.filter(|c| *c > 0.0) {
                    clip_global_norm(&mut grads, c);
                }
                adam.step(&mut model, &grads, lr);
                losses.push(mean);
                updates += 1;
            }
        }
        let mean_loss = losses.iter().sum::<f64>() / losses.len().max(1) as f64;
        if !mean_loss.is_finite() || model.blocks().iter().any(|(_, b)| b.iter().any(|v| !v.is_finite())) {
            return Err(Error::Diverged { epoch, loss: mean_loss });
        }
        log.push(EpochLog { epoch, learning_rate: lr, batch_size: batch, updates, mean_loss });
    }
    Ok((model, log))
}

/// Mean composite loss of `model` over `data`, unrolling each contiguous
/// run from a zero state.
pub fn evaluate_loss(model: &StackedModel, data: &[TrainingSample], loss_cfg: &LossConfig) -> Result<f64> {
    let mut total = 0.0;
    let mut n = 0usize;
    for series in series_windows(data, usize::MAX) {
        for run in series {
            let mut state = model.new_state();
            for s in run.samples {
                let out = model.step(&mut state, &s.input)?;
                total += composite_loss(&s.target.0, &out, loss_cfg)?;
                n += 1;
            }
        }
    }
    Ok(total / n.max(1) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleMember {
    pub seed: u64,
    pub model: StackedModel,
    pub log: Vec<EpochLog>,
}

/// Members whose decoded forecasts are averaged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    pub members: Vec<EnsembleMember>,
}

impl EnsembleModel {
    pub fn new(members: Vec<EnsembleMember>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::Config("an ensemble needs at least one member".into()));
        }
        Ok(Self { members })
    }

    pub fn config(&self) -> ModelConfig {
        self.members[0].model.config
    }
}

/// Train one member per recipe seed, concurrently.
pub fn train_ensemble(
    data: &[TrainingSample],
    model_cfg: ModelConfig,
    loss_cfg: &LossConfig,
    recipe: &TrainRecipe,
) -> Result<EnsembleModel> {
    if recipe.seeds.is_empty() {
        return Err(Error::Config("recipe has no seeds".into()));
    }
    let members = recipe
        .seeds
        .par_iter()
        .map(|&seed| train(data, model_cfg, loss_cfg, recipe, seed).map(|(model, log)| EnsembleMember { seed, model, log }))
        .collect::<Result<Vec<_>>>()?;
    EnsembleModel::new(members)
}

fn mean_of(vs: &[Vec<f64>]) -> Vec<f64> {
    let n = vs.len() as f64;
    let mut out = vec![0.0; vs[0].len()];
    for v in vs {
        for (o, x) in out.iter_mut().zip(v) {
            *o += x;
        }
    }
    out.iter_mut().for_each(|o| *o /= n);
    out
}

/// Forecasts for every day of `range` whose input week is complete.
///
/// Each member streams through the days from `warmup` days before the
/// range start, carrying its state from one day to the next. A day without
/// a complete input week resets the state, so forecasts after a gap are
/// warmed up only by the days since the gap.
pub fn forecast_range(
    ensemble: &EnsembleModel,
    series: &HourlySeries,
    range: DateRange,
    warmup: usize,
    label: &str,
) -> Result<Vec<ForecastRecord>> {
    let start = range.from - chrono::Duration::days(warmup as i64);
    let days: Vec<chrono::NaiveDate> = DateRange::new(start, range.to).days().collect();
    let inputs: Vec<Option<ExtendedInput>> = days.iter().map(|&d| build_extended_input(series, d).ok()).collect();

    let per_member: Vec<Vec<Option<StepOutput>>> = ensemble
        .members
        .par_iter()
        .map(|m| {
            let mut state = m.model.new_state();
            let mut outs = Vec::with_capacity(days.len());
            for (d, inp) in days.iter().zip(&inputs) {
                match inp {
                    None => {
                        state.reset();
                        outs.push(None);
                    }
                    Some(inp) => {
                        let o = m.model.step(&mut state, inp)?;
                        outs.push(range.contains(*d).then_some(o));
                    }
                }
            }
            Ok(outs)
        })
        .collect::<Result<_>>()?;

    let mut records = Vec::new();
    for (i, (d, inp)) in days.iter().zip(&inputs).enumerate() {
        let Some(inp) = inp else { continue };
        if !range.contains(*d) {
            continue;
        }
        let mut points = Vec::new();
        let mut lowers = Vec::new();
        let mut uppers = Vec::new();
        for member in &per_member {
            let o = member[i].as_ref().expect("member output for every complete day");
            points.push(decode_day(&o.point, inp.coding)?);
            lowers.push(decode_day(&o.lower, inp.coding)?);
            uppers.push(decode_day(&o.upper, inp.coding)?);
        }
        records.push(ForecastRecord {
            series_id: series.series_id.clone(),
            target_date: *d,
            point: mean_of(&points),
            lower: mean_of(&lowers),
            upper: mean_of(&uppers),
            model: label.to_string(),
        });
    }
    Ok(records)
}

/// Forecast for one day, after warming up over up to `warmup` preceding
/// days.
pub fn forecast(
    ensemble: &EnsembleModel,
    series: &HourlySeries,
    target_date: chrono::NaiveDate,
    warmup: usize,
    label: &str,
) -> Result<ForecastRecord> {
    build_extended_input(series, target_date)?;
    let mut recs = forecast_range(ensemble, series, DateRange::new(target_date, target_date), warmup, label)?;
    recs.pop().ok_or_else(|| Error::IncompleteHistory { series: series.series_id.clone(), date: target_date })
}

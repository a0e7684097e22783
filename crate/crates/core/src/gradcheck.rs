//! Central finite-difference checks of analytic gradients.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use chrono::NaiveDate;

use crate::cells::{cell_gradient, cell_init, CellSpec};
use crate::network::{ModelConfig, StackedModel, DILATIONS, HEAD_OUTPUTS};
use crate::params::Parameterized;
use crate::preprocess::{calendar_one_hots, CodingVariables, ExtendedInput, WeeklyPattern, WEEK_HOURS};
use crate::Result;

/// Differences below this magnitude are compared absolutely.
pub const RELATIVE_FLOOR: f64 = 1e-6;
pub const DEFAULT_STEP: f64 = 1e-4;

/// `|a - n| / max(|a|, |n|, RELATIVE_FLOOR)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

#[derive(Debug, Clone, Serialize)]
pub struct BlockReport {
    pub block: String,
    pub checked: usize,
    pub worst_relative_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradcheckReport {
    pub blocks: Vec<BlockReport>,
    pub max_relative_error: f64,
}

impl GradcheckReport {
    fn from_blocks(blocks: Vec<BlockReport>) -> Self {
        let max_relative_error = blocks.iter().map(|b| b.worst_relative_error).fold(0.0, f64::max);
        Self { blocks, max_relative_error }
    }

    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_relative_error < tolerance
    }
}

/// Compare `analytic` against central differences of `loss` around
/// `params`. With `per_block = Some(k)` only `k` random entries of each
/// block are perturbed.
pub fn compare_blocks<P, F>(
    params: &P,
    analytic: &P,
    loss: F,
    step: f64,
    per_block: Option<usize>,
    rng: &mut ChaCha8Rng,
) -> Vec<BlockReport>
where
    P: Parameterized + Clone,
    F: Fn(&P) -> f64,
{
    let grads: Vec<(String, Vec<f64>)> = analytic.blocks().into_iter().map(|(n, b)| (n, b.to_vec())).collect();
    let mut probe = params.clone();
    let mut reports = Vec::with_capacity(grads.len());
    for (bi, (name, g)) in grads.iter().enumerate() {
        let indices: Vec<usize> = match per_block {
            Some(k) if k < g.len() => sample(rng, g.len(), k).into_vec(),
            _ => (0..g.len()).collect(),
        };
        let mut worst: f64 = 0.0;
        for &i in &indices {
            let orig = probe.blocks()[bi].1[i];
            probe.blocks_mut()[bi].1[i] = orig + step;
            let up = loss(&probe);
            probe.blocks_mut()[bi].1[i] = orig - step;
            let down = loss(&probe);
            probe.blocks_mut()[bi].1[i] = orig;
            worst = worst.max(relative_error(g[i], (up - down) / (2.0 * step)));
        }
        reports.push(BlockReport { block: name.clone(), checked: indices.len(), worst_relative_error: worst });
    }
    reports
}

/// Inputs, pre-history and upstream weights for one cell check.
#[derive(Debug, Clone)]
pub struct CellProblem {
    pub spec: CellSpec,
    pub warmup: Vec<Vec<f64>>,
    pub inputs: Vec<Vec<f64>>,
    pub upstream: Vec<Vec<f64>>,
}

impl CellProblem {
    /// Random inputs in (-1, 1); the pre-history spans one dilation so the
    /// first recorded steps read non-zero constant states.
    pub fn random(spec: CellSpec, steps: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut vecs = |n: usize, len: usize| -> Vec<Vec<f64>> {
            (0..n).map(|_| (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
        };
        let warmup = vecs(spec.dilation, spec.input_size);
        let inputs = vecs(steps, spec.input_size);
        let upstream = vecs(steps, spec.output_size());
        Self { spec, warmup, inputs, upstream }
    }
}

/// Finite-difference check of [`cell_gradient`] for the scalar loss
/// `sum_t upstream_t . y_t`, covering every parameter and every input.
/// `corrupt` perturbs one analytic entry, as a negative control.
pub fn check_cell(problem: &CellProblem, seed: u64, corrupt: bool) -> Result<GradcheckReport> {
    let (params, mut state) = cell_init(problem.spec, seed)?;
    for x in &problem.warmup {
        params.forward(&mut state, x)?;
    }
    let warm = state.clone();
    let (_, tape) = params.forward_sequence(&mut state, &problem.inputs)?;
    let (mut grads, dxs) = cell_gradient(&params, &tape, &problem.upstream)?;
    if corrupt {
        let (_, first) = grads.blocks_mut().into_iter().next().expect("cell has parameters");
        first[0] += 1.0 + first[0].abs();
    }

    let loss_with = |p: &crate::cells::CellParams, inputs: &[Vec<f64>]| -> f64 {
        let mut st = warm.clone();
        inputs
            .iter()
            .zip(&problem.upstream)
            .map(|(x, g)| {
                let y = p.forward(&mut st, x).expect("shapes checked");
                crate::linalg::dot(&y, g)
            })
            .sum()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut blocks = compare_blocks(&params, &grads, |p| loss_with(p, &problem.inputs), DEFAULT_STEP, None, &mut rng);

    let mut worst: f64 = 0.0;
    let mut probe = problem.inputs.clone();
    for t in 0..probe.len() {
        for k in 0..probe[t].len() {
            let orig = probe[t][k];
            probe[t][k] = orig + DEFAULT_STEP;
            let up = loss_with(&params, &probe);
            probe[t][k] = orig - DEFAULT_STEP;
            let down = loss_with(&params, &probe);
            probe[t][k] = orig;
            worst = worst.max(relative_error(dxs[t][k], (up - down) / (2.0 * DEFAULT_STEP)));
        }
    }
    blocks.push(BlockReport { block: "input".into(), checked: probe.iter().map(Vec::len).sum(), worst_relative_error: worst });
    Ok(GradcheckReport::from_blocks(blocks))
}

/// Consecutive-day extended inputs with random weekly patterns and levels.
pub fn random_inputs(n: usize, seed: u64) -> Vec<ExtendedInput> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut date = NaiveDate::from_ymd_opt(2017, 12, 20).expect("valid date");
    (0..n)
        .map(|_| {
            let x = (0..WEEK_HOURS).map(|_| rng.random_range(-1.5..1.5)).collect();
            let level = rng.random_range(2.5..4.5);
            let inp = ExtendedInput {
                x: WeeklyPattern(x),
                level,
                calendar: calendar_one_hots(date),
                coding: CodingVariables { week_mean: 10f64.powf(level), week_std: 1.0 },
                date,
            };
            date = date.succ_opt().expect("date in range");
            inp
        })
        .collect()
}

/// Finite-difference check of [`StackedModel::backward`] through an unroll
/// of `steps` days, for the loss `sum_t upstream_t . head_t`. The unroll
/// starts from a state warmed up over seven earlier days. Each block is
/// sampled at `per_block` entries when given.
pub fn check_model(
    config: ModelConfig,
    steps: usize,
    seed: u64,
    per_block: Option<usize>,
    corrupt: bool,
) -> Result<GradcheckReport> {
    let model = StackedModel::build(config, seed)?;
    let inputs = random_inputs(steps + DILATIONS[2], seed.wrapping_add(1));
    let (warmup, window) = inputs.split_at(DILATIONS[2]);
    let mut state = model.new_state();
    for inp in warmup {
        model.step(&mut state, inp)?;
    }
    let warm = state.clone();
    let refs: Vec<&ExtendedInput> = window.iter().collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xfeed);
    let upstream: Vec<Vec<f64>> =
        (0..steps).map(|_| (0..HEAD_OUTPUTS).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();

    let (_, tape) = model.unroll(&mut state, &refs)?;
    let mut grads = model.backward(&tape, &upstream)?;
    if corrupt {
        let (_, first) = grads.blocks_mut().into_iter().next().expect("model has parameters");
        first[0] += 1.0 + first[0].abs();
    }
    let loss = |m: &StackedModel| -> f64 {
        let mut st = warm.clone();
        refs.iter()
            .zip(&upstream)
            .map(|(inp, g)| {
                let out = m.step(&mut st, inp).expect("shapes checked");
                let flat: Vec<f64> = out.point.iter().chain(&out.lower).chain(&out.upper).copied().collect();
                crate::linalg::dot(&flat, g)
            })
            .sum()
    };
    let blocks = compare_blocks(&model, &grads, loss, DEFAULT_STEP, per_block, &mut rng);
    Ok(GradcheckReport::from_blocks(blocks))
}

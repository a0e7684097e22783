//! Gated recurrent cells: LSTM, GRU, dilated LSTM, dRNNCell and the
//! attentive adRNNCell, with exact reverse-mode gradients.
//!
//! Every cell is built from one or two [`GatedUnit`]s. Plain LSTM and GRU
//! read their state at a single lag (1, or the layer dilation for the
//! delayed-only variant). dLSTM and dRNNCell read both the recent state and
//! the state `d` steps back, and split `h'` into a controlling state `h`
//! (first `s_h` entries) and the output `y` (the next `s_y`).
//!
//! adRNNCell stacks two dRNNCells. The lower one emits an attention vector
//! `m_t` with one entry per input; `exp(m_t)` reweights the input before it
//! reaches the upper cell, which produces `y_t`.

mod buffer;
mod unit;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use buffer::DelayBuffer;
pub use unit::{drnn_c_update, Gate, GatedUnit, StepCache, UnitKind, UnitState};

use crate::params::Parameterized;
use crate::{Error, Result};

/// Attention pre-activations are clamped to this magnitude before `exp`.
pub const ATTENTION_CLAMP: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Lstm,
    Gru,
    DLstm,
    DRnn,
    AdRnn,
}

/// Which past states feed the gates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Connection {
    RecentOnly,
    DelayedOnly,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellSizes {
    pub s_c: usize,
    pub s_h: usize,
    pub s_y: usize,
    /// Controlling-state size of the upper adRNNCell unit.
    pub s_q: usize,
}

impl CellSizes {
    /// `s_c = s_h + s_y`, `s_q = s_h`.
    pub fn symmetric(s_h: usize, s_y: usize) -> Self {
        Self { s_c: s_h + s_y, s_h, s_y, s_q: s_h }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellSpec {
    pub kind: CellKind,
    pub connection: Connection,
    pub input_size: usize,
    pub sizes: CellSizes,
    pub dilation: usize,
}

impl CellSpec {
    pub fn validate(&self) -> Result<()> {
        let s = &self.sizes;
        let bad = |m: String| Err(Error::Config(m));
        if self.dilation == 0 {
            return bad("dilation must be at least 1".into());
        }
        if self.input_size == 0 || s.s_y == 0 {
            return bad("input and output sizes must be positive".into());
        }
        match self.kind {
            CellKind::Lstm | CellKind::Gru => {
                if self.connection == Connection::Both {
                    return bad(format!("{:?} admits only recent_only or delayed_only connections", self.kind));
                }
            }
            CellKind::DLstm | CellKind::DRnn => {
                if self.connection != Connection::Both {
                    return bad(format!("{:?} requires both recent and delayed connections", self.kind));
                }
                if s.s_h == 0 || s.s_c != s.s_h + s.s_y {
                    return bad(format!("s_c ({}) must equal s_h + s_y ({} + {})", s.s_c, s.s_h, s.s_y));
                }
            }
            CellKind::AdRnn => {
                if self.connection != Connection::Both {
                    return bad("adrnn requires both recent and delayed connections".into());
                }
                if s.s_h == 0 || s.s_q == 0 || s.s_c != s.s_q + s.s_y {
                    return bad(format!("s_c ({}) must equal s_q + s_y ({} + {})", s.s_c, s.s_q, s.s_y));
                }
            }
        }
        Ok(())
    }

    pub fn output_size(&self) -> usize {
        self.sizes.s_y
    }
}

/// Learned parameters of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellParams {
    pub spec: CellSpec,
    /// One unit, or lower and upper units for adRNNCell.
    pub units: Vec<GatedUnit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellState {
    pub units: Vec<UnitState>,
}

impl CellState {
    pub fn reset(&mut self) {
        self.units.iter_mut().for_each(UnitState::reset);
    }
}

impl CellParams {
    pub fn init_with_rng(spec: CellSpec, rng: &mut ChaCha8Rng) -> Result<Self> {
        spec.validate()?;
        let s = spec.sizes;
        let d = spec.dilation;
        let n = spec.input_size;
        let units = match (spec.kind, spec.connection) {
            (CellKind::Lstm, c) | (CellKind::Gru, c) => {
                let kind = if spec.kind == CellKind::Lstm { UnitKind::Lstm } else { UnitKind::Gru };
                let lag = if c == Connection::DelayedOnly { d } else { 1 };
                vec![GatedUnit::new(kind, n, s.s_y, s.s_y, lag, None, rng)]
            }
            (CellKind::DLstm, _) => vec![GatedUnit::new(UnitKind::DLstm, n, s.s_h, s.s_y, 1, Some(d), rng)],
            (CellKind::DRnn, _) => vec![GatedUnit::new(UnitKind::DRnn, n, s.s_h, s.s_y, 1, Some(d), rng)],
            (CellKind::AdRnn, _) => vec![
                GatedUnit::new(UnitKind::DRnn, n, s.s_h, n, 1, Some(d), rng),
                GatedUnit::new(UnitKind::DRnn, n, s.s_q, s.s_y, 1, Some(d), rng),
            ],
        };
        Ok(Self { spec, units })
    }

    pub fn new_state(&self) -> CellState {
        CellState { units: self.units.iter().map(GatedUnit::new_state).collect() }
    }

    pub fn zeros_like(&self) -> Self {
        Self { spec: self.spec, units: self.units.iter().map(GatedUnit::zeros_like).collect() }
    }

    pub fn is_attentive(&self) -> bool {
        self.spec.kind == CellKind::AdRnn
    }

    /// FNV-1a over every parameter's bit pattern.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for (_, block) in self.blocks() {
            for v in block {
                h ^= v.to_bits();
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }

    /// One forward step, advancing `state`.
    pub fn forward(&self, state: &mut CellState, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_cached(state, x)?.0)
    }

    fn forward_cached(&self, state: &mut CellState, x: &[f64]) -> Result<(Vec<f64>, StepRecord)> {
        if x.len() != self.spec.input_size {
            return Err(Error::Shape(format!("cell input has {} entries, expected {}", x.len(), self.spec.input_size)));
        }
        if state.units.len() != self.units.len() {
            return Err(Error::Shape("state does not belong to this cell".into()));
        }
        if !self.is_attentive() {
            let (y, cache) = self.units[0].step(&mut state.units[0], x);
            return Ok((y, StepRecord { units: vec![cache], attention: None }));
        }
        let (lower_states, upper_states) = state.units.split_at_mut(1);
        let (m, lower_cache) = self.units[0].step(&mut lower_states[0], x);
        let weights = attention_weights(&m);
        let x2: Vec<f64> = x.iter().zip(&weights).map(|(a, w)| a * w).collect();
        let (y, upper_cache) = self.units[1].step(&mut upper_states[0], &x2);
        Ok((y, StepRecord { units: vec![lower_cache, upper_cache], attention: Some(AttentionCache { m, weights }) }))
    }

    /// Forward over a sequence, recording the activations for
    /// [`cell_gradient`].
    pub fn forward_sequence(&self, state: &mut CellState, inputs: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, CellTape)> {
        let mut outputs = Vec::with_capacity(inputs.len());
        let mut steps = Vec::with_capacity(inputs.len());
        for x in inputs {
            let (y, rec) = self.forward_cached(state, x)?;
            outputs.push(y);
            steps.push(rec);
        }
        Ok((outputs, CellTape { fingerprint: self.fingerprint(), steps }))
    }
}

impl Parameterized for CellParams {
    fn blocks(&self) -> Vec<(String, &[f64])> {
        let attentive = self.is_attentive();
        self.units
            .iter()
            .enumerate()
            .flat_map(|(i, u)| {
                u.blocks().into_iter().map(move |(n, v)| (unit_prefix(attentive, i) + &n, v))
            })
            .collect()
    }

    fn blocks_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let attentive = self.is_attentive();
        self.units
            .iter_mut()
            .enumerate()
            .flat_map(|(i, u)| {
                u.blocks_mut().into_iter().map(move |(n, v)| (unit_prefix(attentive, i) + &n, v))
            })
            .collect()
    }
}

fn unit_prefix(attentive: bool, i: usize) -> String {
    match (attentive, i) {
        (false, _) => String::new(),
        (true, 0) => "lower.".into(),
        (true, _) => "upper.".into(),
    }
}

/// `exp(clamp(m))`, strictly positive.
pub fn attention_weights(m: &[f64]) -> Vec<f64> {
    m.iter().map(|v| v.clamp(-ATTENTION_CLAMP, ATTENTION_CLAMP).exp()).collect()
}

#[derive(Debug, Clone)]
pub struct AttentionCache {
    pub m: Vec<f64>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct StepRecord {
    pub units: Vec<StepCache>,
    pub attention: Option<AttentionCache>,
}

/// Activations recorded by [`CellParams::forward_sequence`].
#[derive(Debug, Clone)]
pub struct CellTape {
    fingerprint: u64,
    pub steps: Vec<StepRecord>,
}

impl CellTape {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Build a cell and its zeroed state from a seed.
pub fn cell_init(spec: CellSpec, seed: u64) -> Result<(CellParams, CellState)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = CellParams::init_with_rng(spec, &mut rng)?;
    let state = params.new_state();
    Ok((params, state))
}

/// Reverse-mode gradients of a scalar loss given `upstream[t] = dL/dy_t`.
/// Returns parameter gradients (same layout as `params`) and `dL/dx_t`.
pub fn cell_gradient(params: &CellParams, tape: &CellTape, upstream: &[Vec<f64>]) -> Result<(CellParams, Vec<Vec<f64>>)> {
    if tape.fingerprint != params.fingerprint() {
        return Err(Error::StaleTape("parameters changed since the forward pass".into()));
    }
    if upstream.len() != tape.len() {
        return Err(Error::StaleTape(format!("{} upstream gradients for {} recorded steps", upstream.len(), tape.len())));
    }
    let s_y = params.spec.output_size();
    if let Some(bad) = upstream.iter().find(|g| g.len() != s_y) {
        return Err(Error::Shape(format!("upstream gradient has {} entries, expected {s_y}", bad.len())));
    }
    let mut grads = params.zeros_like();
    let dxs = backward_unchecked(params, tape, upstream, &mut grads);
    Ok((grads, dxs))
}

/// Gradient accumulation without the fingerprint check, for callers that
/// own both the parameters and the tape.
pub(crate) fn backward_unchecked(
    params: &CellParams,
    tape: &CellTape,
    upstream: &[Vec<f64>],
    grads: &mut CellParams,
) -> Vec<Vec<f64>> {
    if !params.is_attentive() {
        let caches: Vec<StepCache> = tape.steps.iter().map(|s| s.units[0].clone()).collect();
        return params.units[0].backward_sequence(&caches, upstream, &mut grads.units[0]);
    }
    let lower_caches: Vec<StepCache> = tape.steps.iter().map(|s| s.units[0].clone()).collect();
    let upper_caches: Vec<StepCache> = tape.steps.iter().map(|s| s.units[1].clone()).collect();
    let (g_lower, g_upper) = grads.units.split_at_mut(1);
    let dx2 = params.units[1].backward_sequence(&upper_caches, upstream, &mut g_upper[0]);

    let mut dxs = Vec::with_capacity(tape.len());
    let mut dms = Vec::with_capacity(tape.len());
    for (step, dx2_t) in tape.steps.iter().zip(&dx2) {
        let att = step.attention.as_ref().expect("attentive step records attention");
        let x = &step.units[0].x;
        let mut dx = Vec::with_capacity(x.len());
        let mut dm = Vec::with_capacity(x.len());
        for k in 0..x.len() {
            dx.push(dx2_t[k] * att.weights[k]);
            let inside = att.m[k].abs() < ATTENTION_CLAMP;
            dm.push(if inside { dx2_t[k] * x[k] * att.weights[k] } else { 0.0 });
        }
        dxs.push(dx);
        dms.push(dm);
    }
    let dx_lower = params.units[0].backward_sequence(&lower_caches, &dms, &mut g_lower[0]);
    for (dx, dl) in dxs.iter_mut().zip(dx_lower) {
        crate::linalg::add_assign(dx, &dl);
    }
    dxs
}

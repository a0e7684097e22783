//! Three dilated recurrent layers with shortcuts, a calendar embedding and
//! a linear head producing the point forecast and two quantile vectors.
//!
//! ```text
//! u1 = [x (168), log10 level, embed(calendar one-hots)]
//! y1 = cell1(u1)            dilation 2
//! y2 = cell2(y1) + y1       dilation 4
//! y3 = cell3(y2) + y2       dilation 7
//! [point | lower | upper] = head(y3)
//! ```
//!
//! One recurrent step is one forecasted day.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cells::{backward_unchecked, CellKind, CellParams, CellSizes, CellSpec, CellState, CellTape, Connection};
use crate::linalg::{add_assign, Matrix};
use crate::params::Parameterized;
use crate::preprocess::{ExtendedInput, CALENDAR_LEN, DAYS_OF_MONTH, DAYS_OF_WEEK, DAY_HOURS, WEEK_HOURS};
use crate::{Error, Result};

pub const DILATIONS: [usize; 3] = [2, 4, 7];
pub const HEAD_OUTPUTS: usize = 3 * DAY_HOURS;
pub const DEFAULT_EMBEDDING: usize = 16;

/// Cell choice as named on the command line. `1` variants keep only the
/// recent connection, `2` variants only the delayed one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellVariant {
    Lstm1,
    Lstm2,
    Gru1,
    Gru2,
    DLstm,
    DRnn,
    AdRnn,
}

impl CellVariant {
    pub const ALL: [CellVariant; 7] = [
        CellVariant::Gru1,
        CellVariant::Gru2,
        CellVariant::Lstm1,
        CellVariant::Lstm2,
        CellVariant::DLstm,
        CellVariant::DRnn,
        CellVariant::AdRnn,
    ];

    pub fn kind_and_connection(self) -> (CellKind, Connection) {
        match self {
            CellVariant::Lstm1 => (CellKind::Lstm, Connection::RecentOnly),
            CellVariant::Lstm2 => (CellKind::Lstm, Connection::DelayedOnly),
            CellVariant::Gru1 => (CellKind::Gru, Connection::RecentOnly),
            CellVariant::Gru2 => (CellKind::Gru, Connection::DelayedOnly),
            CellVariant::DLstm => (CellKind::DLstm, Connection::Both),
            CellVariant::DRnn => (CellKind::DRnn, Connection::Both),
            CellVariant::AdRnn => (CellKind::AdRnn, Connection::Both),
        }
    }

    /// Row label used in reports.
    pub fn label(self) -> &'static str {
        match self {
            CellVariant::Lstm1 => "LSTM1",
            CellVariant::Lstm2 => "LSTM2",
            CellVariant::Gru1 => "GRU1",
            CellVariant::Gru2 => "GRU2",
            CellVariant::DLstm => "dLSTM",
            CellVariant::DRnn => "dRNNCell",
            CellVariant::AdRnn => "adRNNCell",
        }
    }
}

impl std::str::FromStr for CellVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "lstm1" => CellVariant::Lstm1,
            "lstm2" => CellVariant::Lstm2,
            "gru1" => CellVariant::Gru1,
            "gru2" => CellVariant::Gru2,
            "dlstm" => CellVariant::DLstm,
            "drnn" | "drnncell" => CellVariant::DRnn,
            "adrnn" | "adrnncell" => CellVariant::AdRnn,
            other => return Err(Error::Config(format!("unknown cell '{other}' (lstm1|lstm2|gru1|gru2|dlstm|drnn|adrnn)"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub cell: CellVariant,
    pub s_c: usize,
    pub s_h: usize,
    pub s_y: usize,
    pub s_q: usize,
    pub d_emb: usize,
}

impl ModelConfig {
    /// Full-scale sizes: `s_c = 250`, `s_h = s_q = s_y = 125`.
    pub fn paper(cell: CellVariant) -> Self {
        Self { cell, s_c: 250, s_h: 125, s_y: 125, s_q: 125, d_emb: DEFAULT_EMBEDDING }
    }

    /// Laptop-scale sizes.
    pub fn desk(cell: CellVariant) -> Self {
        Self { cell, s_c: 32, s_h: 16, s_y: 16, s_q: 16, d_emb: 8 }
    }

    pub fn layer_specs(&self) -> [CellSpec; 3] {
        let (kind, connection) = self.cell.kind_and_connection();
        let sizes = CellSizes { s_c: self.s_c, s_h: self.s_h, s_y: self.s_y, s_q: self.s_q };
        let first_input = WEEK_HOURS + 1 + self.d_emb;
        let mk = |input_size, dilation| CellSpec { kind, connection, input_size, sizes, dilation };
        [mk(first_input, DILATIONS[0]), mk(self.s_y, DILATIONS[1]), mk(self.s_y, DILATIONS[2])]
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_emb == 0 {
            return Err(Error::Config("d_emb must be positive".into()));
        }
        for s in self.layer_specs() {
            s.validate()?;
        }
        Ok(())
    }
}

/// `y = W x + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub w: Matrix,
    pub b: Vec<f64>,
}

impl Linear {
    pub fn new(outputs: usize, inputs: usize, rng: &mut ChaCha8Rng) -> Self {
        Self { w: Matrix::uniform_fan_in(outputs, inputs, rng), b: vec![0.0; outputs] }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.b.clone();
        self.w.matvec_add(x, &mut y);
        y
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutput {
    pub point: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl StepOutput {
    pub fn from_head(v: &[f64]) -> Self {
        Self {
            point: v[..DAY_HOURS].to_vec(),
            lower: v[DAY_HOURS..2 * DAY_HOURS].to_vec(),
            upper: v[2 * DAY_HOURS..].to_vec(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.point.iter().chain(&self.lower).chain(&self.upper).all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackedModel {
    pub config: ModelConfig,
    pub embedding: Linear,
    pub layers: Vec<CellParams>,
    pub head: Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub layers: Vec<CellState>,
}

impl ModelState {
    pub fn reset(&mut self) {
        self.layers.iter_mut().for_each(CellState::reset);
    }
}

fn check_one_hots(v: &[f64]) -> Result<()> {
    let malformed = || Error::Shape("malformed calendar one-hots".into());
    if v.len() != CALENDAR_LEN || v.iter().any(|&x| x != 0.0 && x != 1.0) {
        return Err(malformed());
    }
    let blocks = [&v[..DAYS_OF_WEEK], &v[DAYS_OF_WEEK..DAYS_OF_WEEK + DAYS_OF_MONTH], &v[DAYS_OF_WEEK + DAYS_OF_MONTH..]];
    if blocks.iter().any(|b| b.iter().sum::<f64>() != 1.0) {
        return Err(malformed());
    }
    Ok(())
}

impl StackedModel {
    pub fn build(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let embedding = Linear::new(config.d_emb, CALENDAR_LEN, &mut rng);
        let layers = config
            .layer_specs()
            .into_iter()
            .map(|s| CellParams::init_with_rng(s, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let head = Linear::new(HEAD_OUTPUTS, config.s_y, &mut rng);
        Ok(Self { config, embedding, layers, head })
    }

    pub fn new_state(&self) -> ModelState {
        ModelState { layers: self.layers.iter().map(CellParams::new_state).collect() }
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, b) in z.blocks_mut() {
            b.fill(0.0);
        }
        z
    }

    pub fn embed_calendar(&self, one_hots: &[f64]) -> Result<Vec<f64>> {
        check_one_hots(one_hots)?;
        Ok(self.embedding.apply(one_hots))
    }

    fn first_layer_input(&self, input: &ExtendedInput) -> Result<Vec<f64>> {
        if input.x.0.len() != WEEK_HOURS {
            return Err(Error::Shape(format!("weekly pattern has {} entries", input.x.0.len())));
        }
        let mut u = Vec::with_capacity(WEEK_HOURS + 1 + self.config.d_emb);
        u.extend_from_slice(&input.x.0);
        u.push(input.level);
        u.extend(self.embed_calendar(&input.calendar)?);
        Ok(u)
    }

    /// One day: advances every layer's state once.
    pub fn step(&self, state: &mut ModelState, input: &ExtendedInput) -> Result<StepOutput> {
        if state.layers.len() != self.layers.len() {
            return Err(Error::Shape("state does not belong to this model".into()));
        }
        let u1 = self.first_layer_input(input)?;
        let y1 = self.layers[0].forward(&mut state.layers[0], &u1)?;
        let mut y2 = self.layers[1].forward(&mut state.layers[1], &y1)?;
        add_assign(&mut y2, &y1);
        let mut y3 = self.layers[2].forward(&mut state.layers[2], &y2)?;
        add_assign(&mut y3, &y2);
        Ok(StepOutput::from_head(&self.head.apply(&y3)))
    }

    /// Forward over chronologically consecutive days, recording a tape for
    /// [`StackedModel::backward`].
    pub fn unroll(&self, state: &mut ModelState, inputs: &[&ExtendedInput]) -> Result<(Vec<StepOutput>, ModelTape)> {
        for w in inputs.windows(2) {
            if w[0].date.succ_opt() != Some(w[1].date) {
                return Err(Error::NonContiguous(format!("{} is not followed by {}", w[0].date, w[1].date)));
            }
        }
        let mut u1s = Vec::with_capacity(inputs.len());
        for inp in inputs {
            u1s.push(self.first_layer_input(inp)?);
        }
        let (y1, tape1) = self.layers[0].forward_sequence(&mut state.layers[0], &u1s)?;
        let (mut y2, tape2) = self.layers[1].forward_sequence(&mut state.layers[1], &y1)?;
        for (a, b) in y2.iter_mut().zip(&y1) {
            add_assign(a, b);
        }
        let (mut y3, tape3) = self.layers[2].forward_sequence(&mut state.layers[2], &y2)?;
        for (a, b) in y3.iter_mut().zip(&y2) {
            add_assign(a, b);
        }
        let outputs = y3.iter().map(|y| StepOutput::from_head(&self.head.apply(y))).collect();
        let calendars = inputs.iter().map(|i| i.calendar.clone()).collect();
        let tape = ModelTape { fingerprint: self.fingerprint(), calendars, layers: [tape1, tape2, tape3], top: y3 };
        Ok((outputs, tape))
    }

    /// Parameter gradients given `d_outputs[t]`, the gradient w.r.t. the
    /// 72 head outputs `[point | lower | upper]` at step `t`.
    pub fn backward(&self, tape: &ModelTape, d_outputs: &[Vec<f64>]) -> Result<StackedModel> {
        if tape.fingerprint != self.fingerprint() {
            return Err(Error::StaleTape("model parameters changed since unroll".into()));
        }
        if d_outputs.len() != tape.top.len() || d_outputs.iter().any(|d| d.len() != HEAD_OUTPUTS) {
            return Err(Error::StaleTape("output gradients do not match the recorded unroll".into()));
        }
        let mut grads = self.zeros_like();
        let mut dy3 = Vec::with_capacity(d_outputs.len());
        for (d, y3) in d_outputs.iter().zip(&tape.top) {
            grads.head.w.outer_add(d, y3);
            add_assign(&mut grads.head.b, d);
            let mut g = vec![0.0; self.config.s_y];
            self.head.w.matvec_t_add(d, &mut g);
            dy3.push(g);
        }
        let mut dy2 = backward_unchecked(&self.layers[2], &tape.layers[2], &dy3, &mut grads.layers[2]);
        for (a, b) in dy2.iter_mut().zip(&dy3) {
            add_assign(a, b);
        }
        let mut dy1 = backward_unchecked(&self.layers[1], &tape.layers[1], &dy2, &mut grads.layers[1]);
        for (a, b) in dy1.iter_mut().zip(&dy2) {
            add_assign(a, b);
        }
        let du1 = backward_unchecked(&self.layers[0], &tape.layers[0], &dy1, &mut grads.layers[0]);
        for (du, cal) in du1.iter().zip(&tape.calendars) {
            let d_emb = &du[WEEK_HOURS + 1..];
            grads.embedding.w.outer_add(d_emb, cal);
            add_assign(&mut grads.embedding.b, d_emb);
        }
        Ok(grads)
    }

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
}

impl Parameterized for StackedModel {
    fn blocks(&self) -> Vec<(String, &[f64])> {
        let mut out: Vec<(String, &[f64])> =
            vec![("embedding.W".into(), &self.embedding.w.data), ("embedding.b".into(), &self.embedding.b)];
        for (i, layer) in self.layers.iter().enumerate() {
            out.extend(layer.blocks().into_iter().map(|(n, b)| (format!("layer{}.{n}", i + 1), b)));
        }
        out.push(("head.W".into(), &self.head.w.data));
        out.push(("head.b".into(), &self.head.b));
        out
    }

    fn blocks_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out: Vec<(String, &mut [f64])> = vec![
            ("embedding.W".into(), &mut self.embedding.w.data),
            ("embedding.b".into(), &mut self.embedding.b),
        ];
        for (i, layer) in self.layers.iter_mut().enumerate() {
            out.extend(layer.blocks_mut().into_iter().map(|(n, b)| (format!("layer{}.{n}", i + 1), b)));
        }
        out.push(("head.W".into(), &mut self.head.w.data));
        out.push(("head.b".into(), &mut self.head.b));
        out
    }
}

/// Activations recorded by [`StackedModel::unroll`].
#[derive(Debug, Clone)]
pub struct ModelTape {
    fingerprint: u64,
    calendars: Vec<Vec<f64>>,
    layers: [CellTape; 3],
    top: Vec<Vec<f64>>,
}

impl ModelTape {
    pub fn len(&self) -> usize {
        self.top.len()
    }

    pub fn is_empty(&self) -> bool {
        self.top.is_empty()
    }
}

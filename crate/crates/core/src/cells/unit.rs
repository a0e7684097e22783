//! A single gated recurrent unit (LSTM, GRU, dLSTM or dRNNCell) with its
//! cached forward step and reverse-mode backward step.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::buffer::DelayBuffer;
use crate::linalg::{add_assign, sigmoid, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnitKind {
    Lstm,
    Gru,
    DLstm,
    DRnn,
}

impl UnitKind {
    pub fn gate_names(self) -> &'static [&'static str] {
        match self {
            UnitKind::Lstm | UnitKind::DLstm => &["f", "i", "o", "c"],
            UnitKind::Gru => &["r", "u", "h"],
            UnitKind::DRnn => &["f", "u", "o", "c"],
        }
    }

    /// Whether the output `h'` is split into a controlling state and an
    /// output, rather than being both.
    fn splits_output(self) -> bool {
        matches!(self, UnitKind::DLstm | UnitKind::DRnn)
    }
}

/// `W x + V h_a + U h_b + b` for one gate. `V` reads the state at the
/// unit's primary lag, `U` the delayed state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub w: Matrix,
    pub v: Matrix,
    pub u: Option<Matrix>,
    pub b: Vec<f64>,
}

impl Gate {
    fn preactivation(&self, x: &[f64], h_a: &[f64], h_b: Option<&[f64]>) -> Vec<f64> {
        let mut z = self.b.clone();
        self.w.matvec_add(x, &mut z);
        self.v.matvec_add(h_a, &mut z);
        if let (Some(u), Some(h_b)) = (&self.u, h_b) {
            u.matvec_add(h_b, &mut z);
        }
        z
    }

    /// Accumulate parameter gradients for pre-activation gradient `dz` and
    /// propagate into `dx`, `dh_a`, `dh_b`.
    #[allow(clippy::too_many_arguments)]
    fn backward(
        &self,
        grad: &mut Gate,
        dz: &[f64],
        x: &[f64],
        h_a: &[f64],
        h_b: Option<&[f64]>,
        dx: &mut [f64],
        dh_a: &mut [f64],
        dh_b: Option<&mut Vec<f64>>,
    ) {
        grad.w.outer_add(dz, x);
        grad.v.outer_add(dz, h_a);
        add_assign(&mut grad.b, dz);
        self.w.matvec_t_add(dz, dx);
        self.v.matvec_t_add(dz, dh_a);
        if let (Some(u), Some(gu), Some(h_b), Some(dh_b)) = (&self.u, grad.u.as_mut(), h_b, dh_b) {
            gu.outer_add(dz, h_b);
            u.matvec_t_add(dz, dh_b);
        }
    }
}

/// Parameters and shape of one gated unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatedUnit {
    pub kind: UnitKind,
    pub input_size: usize,
    /// Size of the recurrent (controlling) state `h`.
    pub state_size: usize,
    pub output_size: usize,
    /// Lag of the state read by `V` (1 for recent, `d` for delayed-only).
    pub lag: usize,
    /// Lag of the state read by `U`, for cells with both connections.
    pub delayed_lag: Option<usize>,
    pub gates: Vec<Gate>,
}

impl GatedUnit {
    pub fn new<R: Rng>(
        kind: UnitKind,
        input_size: usize,
        state_size: usize,
        output_size: usize,
        lag: usize,
        delayed_lag: Option<usize>,
        rng: &mut R,
    ) -> Self {
        let gate_size = match kind {
            UnitKind::Lstm | UnitKind::Gru => state_size,
            UnitKind::DLstm | UnitKind::DRnn => state_size + output_size,
        };
        let gates = kind
            .gate_names()
            .iter()
            .map(|_| Gate {
                w: Matrix::uniform_fan_in(gate_size, input_size, rng),
                v: Matrix::uniform_fan_in(gate_size, state_size, rng),
                u: delayed_lag.map(|_| Matrix::uniform_fan_in(gate_size, state_size, rng)),
                b: vec![0.0; gate_size],
            })
            .collect();
        Self { kind, input_size, state_size, output_size, lag, delayed_lag, gates }
    }

    /// Size of `c` (and of `h'`). Zero for GRU, which has no cell state.
    pub fn c_size(&self) -> usize {
        match self.kind {
            UnitKind::Gru => 0,
            UnitKind::Lstm => self.state_size,
            UnitKind::DLstm | UnitKind::DRnn => self.state_size + self.output_size,
        }
    }

    pub fn max_lag(&self) -> usize {
        self.delayed_lag.unwrap_or(1).max(self.lag)
    }

    pub fn new_state(&self) -> UnitState {
        let cap = self.max_lag();
        UnitState {
            h: DelayBuffer::new(self.state_size, cap),
            c: (self.kind != UnitKind::Gru).then(|| DelayBuffer::new(self.c_size(), cap)),
            steps: 0,
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for v in z.blocks_mut() {
            v.1.fill(0.0);
        }
        z
    }

    pub fn blocks(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::new();
        for (name, g) in self.kind.gate_names().iter().zip(&self.gates) {
            out.push((format!("W_{name}"), g.w.data.as_slice()));
            out.push((format!("V_{name}"), g.v.data.as_slice()));
            if let Some(u) = &g.u {
                out.push((format!("U_{name}"), u.data.as_slice()));
            }
            out.push((format!("b_{name}"), g.b.as_slice()));
        }
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out = Vec::new();
        for (name, g) in self.kind.gate_names().iter().zip(self.gates.iter_mut()) {
            out.push((format!("W_{name}"), g.w.data.as_mut_slice()));
            out.push((format!("V_{name}"), g.v.data.as_mut_slice()));
            if let Some(u) = g.u.as_mut() {
                out.push((format!("U_{name}"), u.data.as_mut_slice()));
            }
            out.push((format!("b_{name}"), g.b.as_mut_slice()));
        }
        out
    }

    /// One forward step; returns the output `y` and the activations needed
    /// by [`GatedUnit::backward_step`].
    pub fn step(&self, state: &mut UnitState, x: &[f64]) -> (Vec<f64>, StepCache) {
        let h_a = state.h.lag_or_zero(self.lag);
        let h_b = self.delayed_lag.map(|d| state.h.lag_or_zero(d));
        let c_a = state.c.as_ref().map(|c| c.lag_or_zero(self.lag));
        let c_b = match (self.kind, &state.c, self.delayed_lag) {
            (UnitKind::DRnn, Some(c), Some(d)) => Some(c.lag_or_zero(d)),
            _ => None,
        };

        let n_std = if self.kind == UnitKind::Gru { 2 } else { self.gates.len() };
        let mut z: Vec<Vec<f64>> =
            self.gates[..n_std].iter().map(|g| g.preactivation(x, &h_a, h_b.as_deref())).collect();
        let sig = |z: Vec<f64>| z.into_iter().map(sigmoid).collect::<Vec<_>>();
        let tanh = |z: Vec<f64>| z.into_iter().map(f64::tanh).collect::<Vec<_>>();
        let mut take = |i: usize| std::mem::take(&mut z[i]);

        let mut cache = StepCache { x: x.to_vec(), h_a, h_b, c_a, c_b, ..StepCache::default() };
        let h_full: Vec<f64> = match self.kind {
            UnitKind::Lstm | UnitKind::DLstm => {
                let f = sig(take(0));
                let i = sig(take(1));
                let o = sig(take(2));
                let cc = tanh(take(3));
                let c_prev = cache.c_a.as_ref().unwrap();
                let c: Vec<f64> = (0..cc.len()).map(|k| f[k] * c_prev[k] + i[k] * cc[k]).collect();
                let tc: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
                let h = o.iter().zip(&tc).map(|(o, t)| o * t).collect();
                cache.acts = vec![f, i, o, cc];
                cache.c = Some(c);
                cache.tanh_c = Some(tc);
                h
            }
            UnitKind::DRnn => {
                let f = sig(take(0));
                let u = sig(take(1));
                let o = sig(take(2));
                let cc = tanh(take(3));
                let c = drnn_c_update(&f, &u, cache.c_a.as_ref().unwrap(), cache.c_b.as_ref().unwrap(), &cc);
                let h = o.iter().zip(&c).map(|(o, c)| o * c).collect();
                cache.acts = vec![f, u, o, cc];
                cache.c = Some(c);
                h
            }
            UnitKind::Gru => {
                let r = sig(take(0));
                let u = sig(take(1));
                let rh: Vec<f64> = r.iter().zip(&cache.h_a).map(|(r, h)| r * h).collect();
                let g = &self.gates[2];
                let mut zh = g.b.clone();
                g.w.matvec_add(x, &mut zh);
                g.v.matvec_add(&rh, &mut zh);
                let hh = tanh(zh);
                let h = (0..hh.len()).map(|k| (1.0 - u[k]) * cache.h_a[k] + u[k] * hh[k]).collect();
                cache.acts = vec![r, u, hh];
                cache.rh = Some(rh);
                h
            }
        };

        let (h, y) = if self.kind.splits_output() {
            (h_full[..self.state_size].to_vec(), h_full[self.state_size..].to_vec())
        } else {
            (h_full.clone(), h_full)
        };
        state.h.push(h);
        if let (Some(buf), Some(c)) = (state.c.as_mut(), cache.c.as_ref()) {
            buf.push(c.clone());
        }
        state.steps += 1;
        (y, cache)
    }

    /// Reverse step. `dh_full` is the gradient w.r.t. `h'` (controlling
    /// state and output together), `dc` the gradient w.r.t. `c` arriving
    /// from later steps.
    pub fn backward_step(&self, cache: &StepCache, dh_full: &[f64], dc_in: &[f64], grad: &mut GatedUnit) -> StepGrads {
        let mut dx = vec![0.0; self.input_size];
        let mut dh_a = vec![0.0; self.state_size];
        let mut dh_b = self.delayed_lag.map(|_| vec![0.0; self.state_size]);
        let mut dc_a = None;
        let mut dc_b = None;

        let dzs: Vec<Vec<f64>> = match self.kind {
            UnitKind::Lstm | UnitKind::DLstm => {
                let [f, i, o, cc] = &cache.acts[..] else { unreachable!() };
                let tc = cache.tanh_c.as_ref().unwrap();
                let c_prev = cache.c_a.as_ref().unwrap();
                let n = cc.len();
                let mut dz = vec![vec![0.0; n]; 4];
                let mut dca = vec![0.0; n];
                for k in 0..n {
                    let d_o = dh_full[k] * tc[k];
                    let dc = dc_in[k] + dh_full[k] * o[k] * (1.0 - tc[k] * tc[k]);
                    dz[0][k] = dc * c_prev[k] * f[k] * (1.0 - f[k]);
                    dz[1][k] = dc * cc[k] * i[k] * (1.0 - i[k]);
                    dz[2][k] = d_o * o[k] * (1.0 - o[k]);
                    dz[3][k] = dc * i[k] * (1.0 - cc[k] * cc[k]);
                    dca[k] = dc * f[k];
                }
                dc_a = Some(dca);
                dz
            }
            UnitKind::DRnn => {
                let [f, u, o, cc] = &cache.acts[..] else { unreachable!() };
                let c = cache.c.as_ref().unwrap();
                let ca = cache.c_a.as_ref().unwrap();
                let cb = cache.c_b.as_ref().unwrap();
                let n = cc.len();
                let mut dz = vec![vec![0.0; n]; 4];
                let mut dca = vec![0.0; n];
                let mut dcb = vec![0.0; n];
                for k in 0..n {
                    let d_o = dh_full[k] * c[k];
                    let dc = dc_in[k] + dh_full[k] * o[k];
                    let mix = f[k] * ca[k] + (1.0 - f[k]) * cb[k];
                    let dmix = dc * u[k];
                    dz[0][k] = dmix * (ca[k] - cb[k]) * f[k] * (1.0 - f[k]);
                    dz[1][k] = dc * (mix - cc[k]) * u[k] * (1.0 - u[k]);
                    dz[2][k] = d_o * o[k] * (1.0 - o[k]);
                    dz[3][k] = dc * (1.0 - u[k]) * (1.0 - cc[k] * cc[k]);
                    dca[k] = dmix * f[k];
                    dcb[k] = dmix * (1.0 - f[k]);
                }
                dc_a = Some(dca);
                dc_b = Some(dcb);
                dz
            }
            UnitKind::Gru => {
                let [r, u, hh] = &cache.acts[..] else { unreachable!() };
                let h_prev = &cache.h_a;
                let rh = cache.rh.as_ref().unwrap();
                let n = hh.len();
                let mut dz_h = vec![0.0; n];
                let mut dz_u = vec![0.0; n];
                for k in 0..n {
                    let dh = dh_full[k];
                    dz_u[k] = dh * (hh[k] - h_prev[k]) * u[k] * (1.0 - u[k]);
                    dz_h[k] = dh * u[k] * (1.0 - hh[k] * hh[k]);
                    dh_a[k] += dh * (1.0 - u[k]);
                }
                // Candidate gate reads r*h rather than h.
                let g = &self.gates[2];
                let gg = &mut grad.gates[2];
                gg.w.outer_add(&dz_h, &cache.x);
                gg.v.outer_add(&dz_h, rh);
                add_assign(&mut gg.b, &dz_h);
                g.w.matvec_t_add(&dz_h, &mut dx);
                let mut drh = vec![0.0; n];
                g.v.matvec_t_add(&dz_h, &mut drh);
                let mut dz_r = vec![0.0; n];
                for k in 0..n {
                    dz_r[k] = drh[k] * h_prev[k] * r[k] * (1.0 - r[k]);
                    dh_a[k] += drh[k] * r[k];
                }
                vec![dz_r, dz_u]
            }
        };

        for (gi, dz) in dzs.iter().enumerate() {
            self.gates[gi].backward(
                &mut grad.gates[gi],
                dz,
                &cache.x,
                &cache.h_a,
                cache.h_b.as_deref(),
                &mut dx,
                &mut dh_a,
                dh_b.as_mut(),
            );
        }
        StepGrads { dx, dh_a, dh_b, dc_a, dc_b }
    }

    /// Backpropagation through a recorded sequence. `dys[t]` is the
    /// gradient w.r.t. output `y_t`. States read from before the first
    /// recorded step are treated as constants.
    pub fn backward_sequence(&self, caches: &[StepCache], dys: &[Vec<f64>], grad: &mut GatedUnit) -> Vec<Vec<f64>> {
        let steps = caches.len();
        let cs = self.c_size();
        let mut dh_acc = vec![vec![0.0; self.state_size]; steps];
        let mut dc_acc = vec![vec![0.0; cs]; steps];
        let mut dxs = vec![Vec::new(); steps];
        for t in (0..steps).rev() {
            let dh_full: Vec<f64> = if self.kind.splits_output() {
                let mut v = dh_acc[t].clone();
                v.extend_from_slice(&dys[t]);
                v
            } else {
                dh_acc[t].iter().zip(&dys[t]).map(|(a, b)| a + b).collect()
            };
            let g = self.backward_step(&caches[t], &dh_full, &dc_acc[t], grad);
            if t >= self.lag {
                add_assign(&mut dh_acc[t - self.lag], &g.dh_a);
                if let Some(dc) = &g.dc_a {
                    add_assign(&mut dc_acc[t - self.lag], dc);
                }
            }
            if let Some(d) = self.delayed_lag {
                if t >= d {
                    if let Some(dh) = &g.dh_b {
                        add_assign(&mut dh_acc[t - d], dh);
                    }
                    if let Some(dc) = &g.dc_b {
                        add_assign(&mut dc_acc[t - d], dc);
                    }
                }
            }
            dxs[t] = g.dx;
        }
        dxs
    }
}

/// `c = u*(f*c_recent + (1-f)*c_delayed) + (1-u)*c_candidate`, elementwise.
pub fn drnn_c_update(f: &[f64], u: &[f64], c_recent: &[f64], c_delayed: &[f64], candidate: &[f64]) -> Vec<f64> {
    (0..candidate.len())
        .map(|k| u[k] * (f[k] * c_recent[k] + (1.0 - f[k]) * c_delayed[k]) + (1.0 - u[k]) * candidate[k])
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitState {
    pub h: DelayBuffer,
    pub c: Option<DelayBuffer>,
    pub steps: u64,
}

impl UnitState {
    pub fn reset(&mut self) {
        self.h.clear();
        if let Some(c) = self.c.as_mut() {
            c.clear();
        }
        self.steps = 0;
    }
}

/// Activations recorded by one forward step.
#[derive(Debug, Clone, Default)]
pub struct StepCache {
    pub x: Vec<f64>,
    pub h_a: Vec<f64>,
    pub h_b: Option<Vec<f64>>,
    pub c_a: Option<Vec<f64>>,
    pub c_b: Option<Vec<f64>>,
    /// Gate outputs in gate order (sigmoids, then the tanh candidate).
    pub acts: Vec<Vec<f64>>,
    pub c: Option<Vec<f64>>,
    pub tanh_c: Option<Vec<f64>>,
    pub rh: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct StepGrads {
    pub dx: Vec<f64>,
    pub dh_a: Vec<f64>,
    pub dh_b: Option<Vec<f64>>,
    pub dc_a: Option<Vec<f64>>,
    pub dc_b: Option<Vec<f64>>,
}

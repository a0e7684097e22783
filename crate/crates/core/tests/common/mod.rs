//! Naive reference evaluations of the cell equation blocks. Each oracle
//! keeps its own full state history and reads parameters entry by entry,
//! sharing nothing with the library's forward path beyond the parameter
//! layout.

#![allow(dead_code)]

use stlf_core::cells::{CellKind, CellParams, Connection, GatedUnit};

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `sum_j W[r][j] x[j]` for a row-major matrix stored as (rows, cols, data).
fn row_dot(data: &[f64], cols: usize, r: usize, x: &[f64]) -> f64 {
    let mut s = 0.0;
    for j in 0..cols {
        s += data[r * cols + j] * x[j];
    }
    s
}

/// Pre-activation of gate `g`, entry `r`.
fn pre(unit: &GatedUnit, g: usize, r: usize, x: &[f64], h_a: &[f64], h_b: Option<&[f64]>) -> f64 {
    let gate = &unit.gates[g];
    let mut s = gate.b[r] + row_dot(&gate.w.data, gate.w.cols, r, x) + row_dot(&gate.v.data, gate.v.cols, r, h_a);
    if let (Some(u), Some(hb)) = (&gate.u, h_b) {
        s += row_dot(&u.data, u.cols, r, hb);
    }
    s
}

/// Unbounded history of one unit's states.
#[derive(Clone, Default)]
pub struct History {
    pub h: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
}

impl History {
    fn at(list: &[Vec<f64>], k: usize, width: usize) -> Vec<f64> {
        if k <= list.len() {
            list[list.len() - k].clone()
        } else {
            vec![0.0; width]
        }
    }
}

/// Scalar evaluation of one unit step according to its kind.
fn unit_step(unit: &GatedUnit, hist: &mut History, x: &[f64], kind: &str) -> Vec<f64> {
    let sh = unit.state_size;
    let lag = unit.lag;
    let h_a = History::at(&hist.h, lag, sh);
    let h_b = unit.delayed_lag.map(|d| History::at(&hist.h, d, sh));
    let hb = h_b.as_deref();
    let out: Vec<f64>;
    match kind {
        "lstm" | "dlstm" => {
            let n = unit.gates[0].b.len();
            let c_prev = History::at(&hist.c, lag, n);
            let mut c = vec![0.0; n];
            let mut hp = vec![0.0; n];
            for r in 0..n {
                let f = sig(pre(unit, 0, r, x, &h_a, hb));
                let i = sig(pre(unit, 1, r, x, &h_a, hb));
                let o = sig(pre(unit, 2, r, x, &h_a, hb));
                let cc = pre(unit, 3, r, x, &h_a, hb).tanh();
                c[r] = f * c_prev[r] + i * cc;
                hp[r] = o * c[r].tanh();
            }
            hist.c.push(c);
            out = hp;
        }
        "drnn" => {
            let n = unit.gates[0].b.len();
            let d = unit.delayed_lag.unwrap();
            let c1 = History::at(&hist.c, 1, n);
            let cd = History::at(&hist.c, d, n);
            let mut c = vec![0.0; n];
            let mut hp = vec![0.0; n];
            for r in 0..n {
                let f = sig(pre(unit, 0, r, x, &h_a, hb));
                let u = sig(pre(unit, 1, r, x, &h_a, hb));
                let o = sig(pre(unit, 2, r, x, &h_a, hb));
                let cc = pre(unit, 3, r, x, &h_a, hb).tanh();
                c[r] = u * (f * c1[r] + (1.0 - f) * cd[r]) + (1.0 - u) * cc;
                hp[r] = o * c[r];
            }
            hist.c.push(c);
            out = hp;
        }
        "gru" => {
            let n = sh;
            let mut r_gate = vec![0.0; n];
            let mut u_gate = vec![0.0; n];
            for r in 0..n {
                r_gate[r] = sig(pre(unit, 0, r, x, &h_a, None));
                u_gate[r] = sig(pre(unit, 1, r, x, &h_a, None));
            }
            let mut rh = vec![0.0; n];
            for r in 0..n {
                rh[r] = r_gate[r] * h_a[r];
            }
            let g = &unit.gates[2];
            let mut h = vec![0.0; n];
            for r in 0..n {
                let hh = (g.b[r] + row_dot(&g.w.data, g.w.cols, r, x) + row_dot(&g.v.data, g.v.cols, r, &rh)).tanh();
                h[r] = (1.0 - u_gate[r]) * h_a[r] + u_gate[r] * hh;
            }
            out = h;
        }
        other => panic!("unknown unit kind {other}"),
    }
    if kind == "dlstm" || kind == "drnn" {
        hist.h.push(out[..sh].to_vec());
        out[sh..].to_vec()
    } else {
        hist.h.push(out.clone());
        out
    }
}

/// Oracle for a whole cell, with one history per unit.
pub struct CellOracle<'a> {
    pub params: &'a CellParams,
    pub hist: Vec<History>,
}

impl<'a> CellOracle<'a> {
    pub fn new(params: &'a CellParams) -> Self {
        Self { params, hist: vec![History::default(); params.units.len()] }
    }

    pub fn step(&mut self, x: &[f64]) -> Vec<f64> {
        let p = self.params;
        match p.spec.kind {
            CellKind::Lstm => unit_step(&p.units[0], &mut self.hist[0], x, "lstm"),
            CellKind::Gru => unit_step(&p.units[0], &mut self.hist[0], x, "gru"),
            CellKind::DLstm => unit_step(&p.units[0], &mut self.hist[0], x, "dlstm"),
            CellKind::DRnn => unit_step(&p.units[0], &mut self.hist[0], x, "drnn"),
            CellKind::AdRnn => {
                let m = unit_step(&p.units[0], &mut self.hist[0], x, "drnn");
                let mut x2 = vec![0.0; x.len()];
                for k in 0..x.len() {
                    x2[k] = x[k] * m[k].clamp(-10.0, 10.0).exp();
                }
                unit_step(&p.units[1], &mut self.hist[1], &x2, "drnn")
            }
        }
    }
}

pub const ALL_KINDS: [(CellKind, Connection); 7] = [
    (CellKind::Lstm, Connection::RecentOnly),
    (CellKind::Lstm, Connection::DelayedOnly),
    (CellKind::Gru, Connection::RecentOnly),
    (CellKind::Gru, Connection::DelayedOnly),
    (CellKind::DLstm, Connection::Both),
    (CellKind::DRnn, Connection::Both),
    (CellKind::AdRnn, Connection::Both),
];

//! Row-major dense matrices and the handful of vector kernels the cells need.

use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    /// Entries drawn from uniform(-1/sqrt(cols), 1/sqrt(cols)).
    pub fn uniform_fan_in<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (cols.max(1) as f64).sqrt();
        let data = (0..rows * cols).map(|_| rng.random_range(-bound..bound)).collect();
        Self { rows, cols, data }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `out += self * x`
    pub fn matvec_add(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (r, o) in out.iter_mut().enumerate() {
            *o += dot(self.row(r), x);
        }
    }

    /// `out += self^T * g`
    pub fn matvec_t_add(&self, g: &[f64], out: &mut [f64]) {
        debug_assert_eq!(g.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        for (r, &gr) in g.iter().enumerate() {
            if gr != 0.0 {
                axpy(gr, self.row(r), out);
            }
        }
    }

    /// `self += g x^T`
    pub fn outer_add(&mut self, g: &[f64], x: &[f64]) {
        debug_assert_eq!(g.len(), self.rows);
        debug_assert_eq!(x.len(), self.cols);
        let cols = self.cols;
        for (r, &gr) in g.iter().enumerate() {
            if gr != 0.0 {
                axpy(gr, x, &mut self.data[r * cols..(r + 1) * cols]);
            }
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y += a * x`
#[inline]
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
pub fn add_assign(y: &mut [f64], x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += xi;
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matvec_and_transpose_agree_with_loops() {
        let m = Matrix { rows: 2, cols: 3, data: vec![1., 2., 3., 4., 5., 6.] };
        let mut out = vec![0.0; 2];
        m.matvec_add(&[1., 0., -1.], &mut out);
        assert_eq!(out, vec![-2.0, -2.0]);
        let mut back = vec![0.0; 3];
        m.matvec_t_add(&[1., 1.], &mut back);
        assert_eq!(back, vec![5.0, 7.0, 9.0]);
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(-800.0).is_finite());
        assert!(sigmoid(800.0) <= 1.0);
    }
}

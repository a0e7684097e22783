use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

/// Ring buffer of past state vectors. `lag(k)` returns the vector pushed
/// `k` steps ago; anything older than the recorded history reads as zeros.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayBuffer {
    width: usize,
    capacity: usize,
    items: VecDeque<Vec<f64>>,
}

impl DelayBuffer {
    pub fn new(width: usize, capacity: usize) -> Self {
        let capacity = capacity.max(1);
        Self { width, capacity, items: VecDeque::with_capacity(capacity) }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, v: Vec<f64>) {
        debug_assert_eq!(v.len(), self.width);
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(v);
    }

    /// Panics if `k` is zero or exceeds the capacity.
    pub fn lag(&self, k: usize) -> Option<&[f64]> {
        assert!(k >= 1 && k <= self.capacity, "lag {k} outside 1..={}", self.capacity);
        let n = self.items.len();
        (k <= n).then(|| self.items[n - k].as_slice())
    }

    pub fn lag_or_zero(&self, k: usize) -> Vec<f64> {
        self.lag(k).map_or_else(|| vec![0.0; self.width], <[f64]>::to_vec)
    }

    pub fn clear(&mut self) {
        self.items.clear();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cold_start_reads_zero() {
        let b = DelayBuffer::new(3, 4);
        assert_eq!(b.lag(1), None);
        assert_eq!(b.lag_or_zero(4), vec![0.0; 3]);
    }

    proptest! {
        #[test]
        fn lag_matches_full_history(
            cap in 1usize..10,
            pushes in 0usize..40,
            queries in proptest::collection::vec(1usize..10, 1..20),
        ) {
            let mut buf = DelayBuffer::new(1, cap);
            let mut history: Vec<f64> = Vec::new();
            for i in 0..pushes {
                buf.push(vec![i as f64]);
                history.push(i as f64);
            }
            for k in queries.into_iter().filter(|&k| k <= cap) {
                let expected = if k <= history.len() { history[history.len() - k] } else { 0.0 };
                prop_assert_eq!(buf.lag_or_zero(k)[0], expected);
            }
        }
    }
}

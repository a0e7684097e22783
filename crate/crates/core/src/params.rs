//! Uniform access to the learned tensors of cells and models, used by the
//! optimizer, the gradient checker and serialization.

pub trait Parameterized {
    /// Named parameter blocks in a fixed order.
    fn blocks(&self) -> Vec<(String, &[f64])>;

    fn blocks_mut(&mut self) -> Vec<(String, &mut [f64])>;

    fn param_count(&self) -> usize {
        self.blocks().iter().map(|(_, b)| b.len()).sum()
    }

    /// Sum of squares over every parameter.
    fn squared_norm(&self) -> f64 {
        self.blocks().iter().flat_map(|(_, b)| b.iter()).map(|v| v * v).sum()
    }

    fn scale(&mut self, factor: f64) {
        for (_, b) in self.blocks_mut() {
            b.iter_mut().for_each(|v| *v *= factor);
        }
    }

    /// `self += other`, block by block. Both must share a layout.
    fn accumulate(&mut self, other: &Self)
    where
        Self: Sized,
    {
        let src = other.blocks();
        for ((_, dst), (_, s)) in self.blocks_mut().into_iter().zip(src) {
            for (d, v) in dst.iter_mut().zip(s) {
                *d += v;
            }
        }
    }
}

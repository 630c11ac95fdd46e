//! Small multidimensional FFT helper over flattened `m^d` grids
//! (axis 0 fastest), used by the per-mode solves of the dynamic solver.

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

pub(crate) struct Spectral {
    dims: usize,
    m: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Spectral {
    pub fn new(dims: usize, m: usize) -> Self {
        let mut planner = FftPlanner::new();
        Spectral {
            dims,
            m,
            forward: planner.plan_fft_forward(m),
            inverse: planner.plan_fft_inverse(m),
        }
    }

    pub fn num_cells(&self) -> usize {
        self.m.pow(self.dims as u32)
    }

    /// Decompose a flattened cell index into per-axis indices.
    pub fn unflatten(&self, mut idx: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.dims);
        for _ in 0..self.dims {
            out.push(idx % self.m);
            idx /= self.m;
        }
        out
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.transform(data, true);
    }

    pub fn inverse(&self, data: &mut [Complex64]) {
        self.transform(data, false);
        let scale = 1.0 / self.num_cells() as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }

    fn transform(&self, data: &mut [Complex64], fwd: bool) {
        debug_assert_eq!(data.len(), self.num_cells());
        let fft = if fwd { &self.forward } else { &self.inverse };
        let mut scratch = vec![Complex64::default(); self.m];
        for axis in 0..self.dims {
            let stride = self.m.pow(axis as u32);
            let outer = self.num_cells() / self.m;
            // enumerate all 1-d lines along `axis`
            for line in 0..outer {
                // base index of this line: interleave line counter around the axis
                let below = line % stride;
                let above = line / stride;
                let base = below + above * stride * self.m;
                for (s, slot) in scratch.iter_mut().enumerate() {
                    *slot = data[base + s * stride];
                }
                fft.process(&mut scratch);
                for (s, slot) in scratch.iter().enumerate() {
                    data[base + s * stride] = *slot;
                }
            }
        }
    }
}

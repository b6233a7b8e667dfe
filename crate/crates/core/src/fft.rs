//! Unnormalized multi-dimensional FFTs on row-major `n^d` buffers.

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

use crate::grid::Grid;

#[derive(Clone)]
pub struct SpectralPlan {
    dimension: usize,
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for SpectralPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralPlan")
            .field("dimension", &self.dimension)
            .field("n", &self.n)
            .finish()
    }
}

impl SpectralPlan {
    pub fn new(grid: &Grid) -> Self {
        let mut planner = FftPlanner::new();
        let n = grid.points_per_axis;
        Self {
            dimension: grid.dimension,
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dimension as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `X_k = Σ_j x_j e^{-2πi jk/n}` along every axis.
    pub fn forward(&self, data: &mut [Complex64], scratch: &mut Vec<Complex64>) {
        self.apply(&self.forward, data, scratch);
    }

    /// `x_j = Σ_k X_k e^{+2πi jk/n}` along every axis (no 1/n factor).
    pub fn inverse(&self, data: &mut [Complex64], scratch: &mut Vec<Complex64>) {
        self.apply(&self.inverse, data, scratch);
    }

    fn apply(&self, plan: &Arc<dyn Fft<f64>>, data: &mut [Complex64], line: &mut Vec<Complex64>) {
        debug_assert_eq!(data.len(), self.len());
        let n = self.n;
        if self.dimension == 1 {
            plan.process(data);
            return;
        }
        line.resize(n, Complex64::new(0.0, 0.0));
        let total = data.len();
        for axis in 0..self.dimension {
            let stride = n.pow((self.dimension - 1 - axis) as u32);
            if stride == 1 {
                for chunk in data.chunks_exact_mut(n) {
                    plan.process(chunk);
                }
                continue;
            }
            let block = stride * n;
            for base in (0..total).step_by(block) {
                for offset in 0..stride {
                    let start = base + offset;
                    for (i, v) in line.iter_mut().enumerate() {
                        *v = data[start + i * stride];
                    }
                    plan.process(line);
                    for (i, v) in line.iter().enumerate() {
                        data[start + i * stride] = *v;
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_dft(grid: &Grid, x: &[Complex64]) -> Vec<Complex64> {
        let n = grid.points_per_axis as f64;
        (0..x.len())
            .map(|k| {
                let kk = grid.unravel(k);
                x.iter()
                    .enumerate()
                    .map(|(j, v)| {
                        let jj = grid.unravel(j);
                        let phase: f64 = (0..grid.dimension)
                            .map(|a| (jj[a] * kk[a]) as f64)
                            .sum::<f64>()
                            * -2.0
                            * std::f64::consts::PI
                            / n;
                        v * Complex64::from_polar(1.0, phase)
                    })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn matches_naive_dft_in_two_and_three_dimensions() {
        for d in [2, 3] {
            let grid = Grid::new(d, 1.0, 4, 1.0, 1).unwrap();
            let plan = SpectralPlan::new(&grid);
            let x: Vec<Complex64> = (0..grid.spatial_len())
                .map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 1.3).cos()))
                .collect();
            let mut y = x.clone();
            let mut scratch = Vec::new();
            plan.forward(&mut y, &mut scratch);
            let expect = naive_dft(&grid, &x);
            for (a, b) in y.iter().zip(&expect) {
                assert!((a - b).norm() < 1e-12);
            }
            plan.inverse(&mut y, &mut scratch);
            let scale = grid.spatial_len() as f64;
            for (a, b) in y.iter().zip(&x) {
                assert!((a / scale - b).norm() < 1e-13);
            }
        }
    }
}

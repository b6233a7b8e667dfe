use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Periodic space box `[0, L)^d` sampled at `n` points per axis, times
/// `[0, T]` split into `time_steps` equal steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub dimension: usize,
    pub length: f64,
    pub points_per_axis: usize,
    pub horizon: f64,
    pub time_steps: usize,
}

impl Grid {
    pub fn new(
        dimension: usize,
        length: f64,
        points_per_axis: usize,
        horizon: f64,
        time_steps: usize,
    ) -> Result<Self> {
        let grid = Self {
            dimension,
            length,
            points_per_axis,
            horizon,
            time_steps,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.dimension) {
            return Err(Error::invalid(format!(
                "grid dimension {} unsupported (1..=3)",
                self.dimension
            )));
        }
        if !(self.length.is_finite() && self.length > 0.0) {
            return Err(Error::invalid("domain length must be positive"));
        }
        if self.points_per_axis < 2 || !self.points_per_axis.is_power_of_two() {
            return Err(Error::invalid(format!(
                "points per axis must be a power of two >= 2, got {}",
                self.points_per_axis
            )));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::invalid("time horizon must be positive"));
        }
        if self.time_steps == 0 {
            return Err(Error::invalid("time steps must be positive"));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.time_steps as f64
    }

    pub fn dx(&self) -> f64 {
        self.length / self.points_per_axis as f64
    }

    /// Number of spatial points (= number of Fourier modes).
    pub fn spatial_len(&self) -> usize {
        self.points_per_axis.pow(self.dimension as u32)
    }

    pub fn time(&self, step: usize) -> f64 {
        step as f64 * self.dt()
    }

    /// Fundamental frequency 2π/L.
    pub fn frequency_spacing(&self) -> f64 {
        2.0 * PI / self.length
    }

    /// Signed mode number for a DFT index along one axis.
    pub fn signed_mode(&self, index: usize) -> i64 {
        let n = self.points_per_axis;
        if index <= n / 2 {
            index as i64
        } else {
            index as i64 - n as i64
        }
    }

    /// Per-axis indices of a flat (row-major, last axis fastest) index.
    pub fn unravel(&self, flat: usize) -> [usize; 3] {
        let n = self.points_per_axis;
        let mut out = [0; 3];
        let mut rem = flat;
        for axis in (0..self.dimension).rev() {
            out[axis] = rem % n;
            rem /= n;
        }
        out
    }

    pub fn mode_numbers(&self, flat: usize) -> Vec<i64> {
        let idx = self.unravel(flat);
        (0..self.dimension).map(|a| self.signed_mode(idx[a])).collect()
    }

    /// |ξ_k| for every flat mode index.
    pub fn wavenumbers(&self) -> Vec<f64> {
        let dk = self.frequency_spacing();
        (0..self.spatial_len())
            .map(|flat| {
                let idx = self.unravel(flat);
                let sq: f64 = (0..self.dimension)
                    .map(|a| (self.signed_mode(idx[a]) as f64 * dk).powi(2))
                    .sum();
                sq.sqrt()
            })
            .collect()
    }

    /// Flat index of the mode conjugate to `flat` (−k).
    pub fn conjugate_index(&self, flat: usize) -> usize {
        let n = self.points_per_axis;
        let idx = self.unravel(flat);
        let mut out = 0;
        for &i in idx.iter().take(self.dimension) {
            out = out * n + (n - i) % n;
        }
        out
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        let idx = self.unravel(flat);
        (0..self.dimension)
            .map(|a| idx[a] as f64 * self.dx())
            .collect()
    }

    pub fn cell_volume(&self) -> f64 {
        self.dx().powi(self.dimension as i32)
    }

    pub fn same_shape(&self, other: &Grid) -> bool {
        self == other
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_grids() {
        assert!(Grid::new(1, 1.0, 48, 1.0, 10).is_err());
        assert!(Grid::new(4, 1.0, 8, 1.0, 10).is_err());
        assert!(Grid::new(1, 1.0, 8, 0.0, 10).is_err());
        assert!(Grid::new(1, 1.0, 8, 1.0, 0).is_err());
    }

    #[test]
    fn conjugates_are_involutive() {
        let g = Grid::new(2, 1.0, 8, 1.0, 1).unwrap();
        for flat in 0..g.spatial_len() {
            let c = g.conjugate_index(flat);
            assert_eq!(g.conjugate_index(c), flat);
            let k: Vec<i64> = g.mode_numbers(flat);
            let kc: Vec<i64> = g.mode_numbers(c);
            for (a, b) in k.iter().zip(&kc) {
                assert!(a + b == 0 || (a.abs() == 4 && b.abs() == 4));
            }
        }
    }
}

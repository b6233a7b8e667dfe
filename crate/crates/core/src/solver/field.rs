use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::io::{self, Coupling, Header};
use crate::kernels::{KernelFamily, KernelModel};
use crate::noise::SpectralMeasure;

const MAGIC: &[u8; 8] = b"SPDESOLN";

/// Where a solution came from.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Provenance {
    pub kernel: KernelModel,
    /// Measure description, as produced by [`SpectralMeasure::describe`].
    pub measure: String,
    pub noise_seed: u64,
    pub coupling: Option<Coupling>,
    pub sigma: String,
    pub b: String,
    pub iterations: usize,
    /// Constant initial value (Heat only; 0 otherwise).
    pub initial: f64,
}

impl Provenance {
    /// True when two provenances differ at most in the noise seed and
    /// iteration count.
    pub fn same_experiment(&self, other: &Provenance) -> bool {
        self.kernel == other.kernel
            && self.measure == other.measure
            && self.sigma == other.sigma
            && self.b == other.b
            && self.initial == other.initial
            && self.coupling.map(|c| c.epsilon) == other.coupling.map(|c| c.epsilon)
    }
}

/// `u(t_i, x_j)` for `i = 0..=N_t`, row-major in (time, point).
#[derive(Debug, Clone)]
pub struct SolutionField {
    pub grid: Grid,
    pub measure: SpectralMeasure,
    pub provenance: Provenance,
    values: Vec<f64>,
}

impl PartialEq for SolutionField {
    fn eq(&self, other: &Self) -> bool {
        self.grid == other.grid && self.values == other.values
    }
}

impl SolutionField {
    pub fn new(grid: Grid, measure: SpectralMeasure, provenance: Provenance, values: Vec<f64>) -> Result<Self> {
        if values.len() != (grid.time_steps + 1) * grid.spatial_len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} rows x {} points",
                values.len(),
                grid.time_steps + 1,
                grid.spatial_len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("solution field"));
        }
        Ok(Self {
            grid,
            measure,
            provenance,
            values,
        })
    }

    /// A field built from a closure, for tests and synthetic data.
    pub fn from_fn(grid: Grid, f: impl Fn(f64, &[f64]) -> f64) -> Result<Self> {
        let m = grid.spatial_len();
        let points: Vec<Vec<f64>> = (0..m).map(|j| grid.point(j)).collect();
        let mut values = Vec::with_capacity((grid.time_steps + 1) * m);
        for i in 0..=grid.time_steps {
            let t = grid.time(i);
            values.extend(points.iter().map(|x| f(t, x)));
        }
        let provenance = Provenance {
            kernel: KernelModel::heat(grid.dimension)?,
            measure: "synthetic".into(),
            noise_seed: 0,
            coupling: None,
            sigma: String::new(),
            b: String::new(),
            iterations: 0,
            initial: 0.0,
        };
        Self::new(grid, SpectralMeasure::zero(grid.dimension), provenance, values)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let m = self.grid.spatial_len();
        &self.values[i * m..(i + 1) * m]
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.grid.spatial_len() + j]
    }

    pub fn rows(&self) -> usize {
        self.grid.time_steps + 1
    }

    /// `max |u|` over the grid.
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `max |u − v|` over the grid.
    pub fn sup_distance(&self, other: &SolutionField) -> Result<f64> {
        if !self.grid.same_shape(&other.grid) {
            return Err(Error::GridMismatch("solution grids differ".into()));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    /// Pointwise linear combination `a·self + b·other` with this field's
    /// metadata.
    pub fn combine(&self, a: f64, other: &SolutionField, b: f64) -> Result<SolutionField> {
        if !self.grid.same_shape(&other.grid) {
            return Err(Error::GridMismatch("solution grids differ".into()));
        }
        let values = self.values.iter().zip(&other.values).map(|(x, y)| a * x + b * y).collect();
        SolutionField::new(self.grid, self.measure.clone(), self.provenance.clone(), values)
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        io::write_header(
            w,
            MAGIC,
            &Header {
                grid: self.grid,
                measure: self.measure.clone(),
                seed: self.provenance.noise_seed,
                coupling: self.provenance.coupling,
            },
        )?;
        let p = &self.provenance;
        io::put_u8(
            w,
            match p.kernel.family {
                KernelFamily::Heat => 0,
                KernelFamily::Wave => 1,
            },
        )?;
        io::put_str(w, &p.sigma)?;
        io::put_str(w, &p.b)?;
        io::put_u64(w, p.iterations as u64)?;
        io::put_f64(w, p.initial)?;
        let mut buf = Vec::with_capacity(8 * self.values.len());
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let h = io::read_header(r, MAGIC)?;
        let family = match io::get_u8(r)? {
            0 => KernelFamily::Heat,
            1 => KernelFamily::Wave,
            other => return Err(Error::Format(format!("unknown kernel tag {other}"))),
        };
        let kernel = KernelModel::new(family, h.grid.dimension)?;
        let sigma = io::get_str(r)?;
        let b = io::get_str(r)?;
        let iterations = io::get_u64(r)? as usize;
        let initial = io::get_f64(r)?;
        let count = (h.grid.time_steps + 1) * h.grid.spatial_len();
        let mut bytes = vec![0u8; 8 * count];
        r.read_exact(&mut bytes)?;
        let values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let provenance = Provenance {
            kernel,
            measure: h.measure.describe(),
            noise_seed: h.seed,
            coupling: h.coupling,
            sigma,
            b,
            iterations,
            initial,
        };
        Self::new(h.grid, h.measure, provenance, values)
    }
}

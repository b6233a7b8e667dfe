use std::io::{Read, Write};
use std::sync::{Arc, OnceLock};

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::SpectralMeasure;
use crate::error::{Error, Result};
use crate::fft::SpectralPlan;
use crate::grid::Grid;
use crate::io::{self, Coupling, Header};

const MAGIC: &[u8; 8] = b"SPDENOIS";

/// One realization of the noise increments on a grid, stored as spectral
/// coefficients `ŵ[i][k]` of the increment over `[t_i, t_{i+1})`.
///
/// The physical increment density at `x_j` is `W_i(x_j) = Σ_k ŵ[i][k]
/// e^{i ξ_k x_j}`, so that `Σ_j φ(x_j) W_i(x_j) Δx^d` approximates
/// `∫ φ(x) M(Δt_i, dx)`.
#[derive(Clone)]
pub struct NoiseField {
    pub grid: Grid,
    pub measure: SpectralMeasure,
    pub seed: u64,
    pub coupling: Option<Coupling>,
    increments: Vec<Complex64>,
    physical: Arc<OnceLock<Vec<f64>>>,
}

/// Variance `Δt · g(ξ_k) · (2π/L)^d` of the increment at every mode.
pub fn mode_variances(grid: &Grid, mu: &SpectralMeasure) -> Result<Vec<f64>> {
    grid.validate()?;
    mu.validate()?;
    if grid.dimension != mu.dimension {
        return Err(Error::GridMismatch(format!(
            "grid dimension {} vs measure dimension {}",
            grid.dimension, mu.dimension
        )));
    }
    let weight = grid.dt() * grid.frequency_spacing().powi(grid.dimension as i32);
    grid.wavenumbers()
        .into_iter()
        .enumerate()
        .map(|(flat, r)| {
            let g = mu.mode_density(r);
            if !g.is_finite() {
                return Err(Error::MeasureUnsupportedOnGrid {
                    mode: grid.mode_numbers(flat),
                    radius: r,
                });
            }
            if g < 0.0 {
                return Err(Error::invalid(format!(
                    "spectral density is negative ({g}) at |xi| = {r}"
                )));
            }
            Ok(weight * g)
        })
        .collect()
}

/// Draws a noise field; the same `(grid, mu, seed)` always gives the same
/// increments.
pub fn sample_noise(grid: &Grid, mu: &SpectralMeasure, seed: u64) -> Result<NoiseField> {
    let var = mode_variances(grid, mu)?;
    let m = grid.spatial_len();
    let conj: Vec<usize> = (0..m).map(|k| grid.conjugate_index(k)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut increments = vec![Complex64::new(0.0, 0.0); m * grid.time_steps];
    for row in increments.chunks_exact_mut(m) {
        for k in 0..m {
            let c = conj[k];
            if c < k {
                continue;
            }
            let a: f64 = StandardNormal.sample(&mut rng);
            if c == k {
                row[k] = Complex64::new(a * var[k].sqrt(), 0.0);
            } else {
                let b: f64 = StandardNormal.sample(&mut rng);
                let s = (0.5 * var[k]).sqrt();
                row[k] = Complex64::new(a * s, b * s);
                row[c] = row[k].conj();
            }
        }
    }
    Ok(NoiseField {
        grid: *grid,
        measure: mu.clone(),
        seed,
        coupling: None,
        increments,
        physical: Arc::default(),
    })
}

/// `√(1−ε²)·base + ε·independent`.
pub fn perturb_noise(base: &NoiseField, independent: &NoiseField, epsilon: f64) -> Result<NoiseField> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::invalid(format!("epsilon must lie in [0, 1], got {epsilon}")));
    }
    base.check_compatible(independent)?;
    if base.seed == independent.seed && base.coupling == independent.coupling {
        return Err(Error::invalid("base and independent noise share a seed"));
    }
    let increments = if epsilon == 0.0 {
        base.increments.clone()
    } else if epsilon == 1.0 {
        independent.increments.clone()
    } else {
        let a = (1.0 - epsilon * epsilon).sqrt();
        base.increments
            .iter()
            .zip(&independent.increments)
            .map(|(x, y)| x * a + y * epsilon)
            .collect()
    };
    Ok(NoiseField {
        grid: base.grid,
        measure: base.measure.clone(),
        seed: base.seed,
        coupling: Some(Coupling {
            independent_seed: independent.seed,
            epsilon,
        }),
        increments,
        physical: Arc::default(),
    })
}

impl NoiseField {
    /// All-zero increments.
    pub fn zero(grid: &Grid, mu: &SpectralMeasure) -> Self {
        Self {
            grid: *grid,
            measure: mu.clone(),
            seed: 0,
            coupling: None,
            increments: vec![Complex64::new(0.0, 0.0); grid.spatial_len() * grid.time_steps],
            physical: Arc::default(),
        }
    }

    /// Spectral increments of time step `i`.
    pub fn step(&self, i: usize) -> &[Complex64] {
        let m = self.grid.spatial_len();
        &self.increments[i * m..(i + 1) * m]
    }

    pub fn increments(&self) -> &[Complex64] {
        &self.increments
    }

    /// Physical increment densities `W_i(x_j)`, row-major in (time, point).
    /// Computed once and shared between clones.
    pub fn physical(&self) -> &[f64] {
        self.physical.get_or_init(|| {
            let plan = SpectralPlan::new(&self.grid);
            let m = self.grid.spatial_len();
            let mut out = Vec::with_capacity(self.increments.len());
            let mut buf = vec![Complex64::new(0.0, 0.0); m];
            let mut scratch = Vec::new();
            for row in self.increments.chunks_exact(m) {
                buf.copy_from_slice(row);
                plan.inverse(&mut buf, &mut scratch);
                out.extend(buf.iter().map(|c| c.re));
            }
            out
        })
    }

    pub fn physical_step(&self, i: usize) -> &[f64] {
        let m = self.grid.spatial_len();
        &self.physical()[i * m..(i + 1) * m]
    }

    /// Same grid and same measure.
    pub fn check_compatible(&self, other: &NoiseField) -> Result<()> {
        if !self.grid.same_shape(&other.grid) {
            return Err(Error::GridMismatch(format!("{:?} vs {:?}", self.grid, other.grid)));
        }
        if self.measure.describe() != other.measure.describe() {
            return Err(Error::GridMismatch(format!(
                "measures differ: {} vs {}",
                self.measure.describe(),
                other.measure.describe()
            )));
        }
        Ok(())
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        io::write_header(
            w,
            MAGIC,
            &Header {
                grid: self.grid,
                measure: self.measure.clone(),
                seed: self.seed,
                coupling: self.coupling,
            },
        )?;
        let mut buf = Vec::with_capacity(16 * self.increments.len());
        for c in &self.increments {
            buf.extend_from_slice(&c.re.to_le_bytes());
            buf.extend_from_slice(&c.im.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let h = io::read_header(r, MAGIC)?;
        let count = h.grid.spatial_len() * h.grid.time_steps;
        let mut bytes = vec![0u8; 16 * count];
        r.read_exact(&mut bytes)?;
        let increments = bytes
            .chunks_exact(16)
            .map(|c| {
                Complex64::new(
                    f64::from_le_bytes(c[..8].try_into().expect("8 bytes")),
                    f64::from_le_bytes(c[8..].try_into().expect("8 bytes")),
                )
            })
            .collect();
        Ok(Self {
            grid: h.grid,
            measure: h.measure,
            seed: h.seed,
            coupling: h.coupling,
            increments,
            physical: Arc::default(),
        })
    }

    /// Redraws the field from its recorded seeds.
    pub fn regenerate(&self) -> Result<Self> {
        let base = sample_noise(&self.grid, &self.measure, self.seed)?;
        match self.coupling {
            None => Ok(base),
            Some(c) => {
                let other = sample_noise(&self.grid, &self.measure, c.independent_seed)?;
                perturb_noise(&base, &other, c.epsilon)
            }
        }
    }
}

impl std::fmt::Debug for NoiseField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NoiseField")
            .field("grid", &self.grid)
            .field("measure", &self.measure.describe())
            .field("seed", &self.seed)
            .field("coupling", &self.coupling)
            .finish_non_exhaustive()
    }
}

impl PartialEq for NoiseField {
    fn eq(&self, other: &Self) -> bool {
        self.grid == other.grid
            && self.seed == other.seed
            && self.coupling == other.coupling
            && self.measure.describe() == other.measure.describe()
            && self.increments == other.increments
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid1() -> Grid {
        Grid::new(1, 2.0 * std::f64::consts::PI, 16, 1.0, 4).unwrap()
    }

    #[test]
    fn hermitian_and_real() {
        let g = Grid::new(2, 5.0, 8, 1.0, 3).unwrap();
        let f = sample_noise(&g, &SpectralMeasure::bessel(2, 1.0).unwrap(), 9).unwrap();
        for i in 0..g.time_steps {
            let row = f.step(i);
            for k in 0..g.spatial_len() {
                assert_eq!(row[g.conjugate_index(k)], row[k].conj());
            }
        }
        // Imaginary parts of the inverse transform vanish to roundoff.
        let plan = SpectralPlan::new(&g);
        let mut buf = f.step(1).to_vec();
        plan.inverse(&mut buf, &mut Vec::new());
        assert!(buf.iter().all(|c| c.im.abs() < 1e-12));
        assert_eq!(f.physical_step(1)[5], buf[5].re);
    }

    #[test]
    fn deterministic_in_seed() {
        let mu = SpectralMeasure::white(1);
        let a = sample_noise(&grid1(), &mu, 3).unwrap();
        let b = sample_noise(&grid1(), &mu, 3).unwrap();
        let c = sample_noise(&grid1(), &mu, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn riesz_zero_mode_is_silent() {
        let f = sample_noise(&grid1(), &SpectralMeasure::riesz(1, 0.5).unwrap(), 1).unwrap();
        assert!((0..4).all(|i| f.step(i)[0] == Complex64::new(0.0, 0.0)));
    }

    #[test]
    fn unsupported_density_is_reported() {
        let mu = SpectralMeasure::custom(1, crate::noise::RadialDensity::new("1/r", |r| 1.0 / r)).unwrap();
        match sample_noise(&grid1(), &mu, 1) {
            Err(Error::MeasureUnsupportedOnGrid { mode, radius }) => {
                assert_eq!(mode, vec![0]);
                assert_eq!(radius, 0.0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn perturbation_endpoints() {
        let mu = SpectralMeasure::white(1);
        let a = sample_noise(&grid1(), &mu, 1).unwrap();
        let b = sample_noise(&grid1(), &mu, 2).unwrap();
        assert_eq!(perturb_noise(&a, &b, 0.0).unwrap().increments(), a.increments());
        assert_eq!(perturb_noise(&a, &b, 1.0).unwrap().increments(), b.increments());
        assert!(perturb_noise(&a, &b, 1.5).is_err());
        assert!(perturb_noise(&a, &a, 0.5).is_err());
        let other = Grid::new(1, 1.0, 16, 1.0, 4).unwrap();
        let c = sample_noise(&other, &mu, 5).unwrap();
        assert!(matches!(perturb_noise(&a, &c, 0.5), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn binary_round_trip() {
        let mu = SpectralMeasure::custom(1, crate::io::density_from_source("1/(1+r*r)").unwrap()).unwrap();
        let a = sample_noise(&grid1(), &mu, 11).unwrap();
        let b = sample_noise(&grid1(), &mu, 12).unwrap();
        let p = perturb_noise(&a, &b, 0.3).unwrap();
        let mut bytes = Vec::new();
        p.write_to(&mut bytes).unwrap();
        let back = NoiseField::read_from(&mut bytes.as_slice()).unwrap();
        assert_eq!(back, p);
        assert_eq!(back.regenerate().unwrap(), p);
        assert!(NoiseField::read_from(&mut &bytes[..20]).is_err());
    }
}

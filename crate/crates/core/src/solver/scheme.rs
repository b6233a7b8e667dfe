use num_complex::Complex64;

use super::{Coefficients, Provenance, SolutionField};
use crate::error::{Error, Result};
use crate::fft::SpectralPlan;
use crate::grid::Grid;
use crate::kernels::{KernelFamily, KernelModel};
use crate::noise::{NoiseField, SpectralMeasure};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SolverOptions {
    /// Zero every transformed source mode with some `|k_axis| > n/3`.
    pub dealias: bool,
    /// Constant initial value; only the heat semigroup preserves constants.
    pub initial: f64,
}

#[derive(Debug, Clone)]
enum ModeFactors {
    /// `û ← decay·û + stoch·f̂ + det·ĝ` with
    /// `decay = e^{-λΔt}`, `stoch = √((1−e^{-2λΔt})/(2λΔt))`,
    /// `det = (1−e^{-λΔt})/λ` and `λ = |ξ|²/2`.
    Heat {
        decay: Vec<f64>,
        stoch: Vec<f64>,
        det: Vec<f64>,
    },
    /// Half-step rotation of `(û, v̂)`: `cos(ωΔt/2)`, `sin(ωΔt/2)/ω`,
    /// `ω sin(ωΔt/2)` with `ω = |ξ|`.
    Wave {
        cos: Vec<f64>,
        sin_over_w: Vec<f64>,
        w_sin: Vec<f64>,
    },
}

/// Per-mode exact semigroup stepping for a fixed kernel and grid.
#[derive(Debug, Clone)]
pub struct Scheme {
    pub kernel: KernelModel,
    pub grid: Grid,
    pub options: SolverOptions,
    plan: SpectralPlan,
    conj: Vec<usize>,
    factors: ModeFactors,
    keep: Option<Vec<bool>>,
    points: Vec<f64>,
}

/// Result of a Picard run; `converged == false` is a diagnostic outcome,
/// not an error.
#[derive(Debug, Clone)]
pub struct PicardOutcome {
    pub field: SolutionField,
    /// `d_n = max |u^n − u^{n−1}|` for `n = 1, 2, ...`.
    pub gaps: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub tol: f64,
}

impl Scheme {
    pub fn new(kernel: KernelModel, grid: Grid, options: SolverOptions) -> Result<Self> {
        grid.validate()?;
        if kernel.dimension != grid.dimension {
            return Err(Error::GridMismatch(format!(
                "kernel dimension {} vs grid dimension {}",
                kernel.dimension, grid.dimension
            )));
        }
        if options.initial != 0.0 && kernel.family != KernelFamily::Heat {
            return Err(Error::invalid("constant initial data is supported only for the heat kernel"));
        }
        if !options.initial.is_finite() {
            return Err(Error::NonFinite("initial value"));
        }
        let dt = grid.dt();
        let xi = grid.wavenumbers();
        let factors = match kernel.family {
            KernelFamily::Heat => {
                let lam: Vec<f64> = xi.iter().map(|r| r * r / 2.0).collect();
                ModeFactors::Heat {
                    decay: lam.iter().map(|l| (-l * dt).exp()).collect(),
                    stoch: lam
                        .iter()
                        .map(|&l| {
                            if l == 0.0 {
                                1.0
                            } else {
                                (-(-2.0 * l * dt).exp_m1() / (2.0 * l * dt)).sqrt()
                            }
                        })
                        .collect(),
                    det: lam
                        .iter()
                        .map(|&l| if l == 0.0 { dt } else { -(-l * dt).exp_m1() / l })
                        .collect(),
                }
            }
            KernelFamily::Wave => {
                let h = dt / 2.0;
                ModeFactors::Wave {
                    cos: xi.iter().map(|w| (w * h).cos()).collect(),
                    sin_over_w: xi.iter().map(|&w| if w == 0.0 { h } else { (w * h).sin() / w }).collect(),
                    w_sin: xi.iter().map(|w| w * (w * h).sin()).collect(),
                }
            }
        };
        let m = grid.spatial_len();
        let keep = options.dealias.then(|| {
            let cut = grid.points_per_axis as i64 / 3;
            (0..m)
                .map(|k| grid.mode_numbers(k).iter().all(|q| q.abs() <= cut))
                .collect()
        });
        let points = (0..m).flat_map(|j| grid.point(j)).collect();
        Ok(Self {
            kernel,
            grid,
            options,
            plan: SpectralPlan::new(&grid),
            conj: (0..m).map(|k| grid.conjugate_index(k)).collect(),
            factors,
            keep,
            points,
        })
    }

    pub fn point(&self, j: usize) -> &[f64] {
        let d = self.grid.dimension;
        &self.points[j * d..(j + 1) * d]
    }

    /// Evolves the linear system driven by `σ_i · noise_i` and `b_i`, where
    /// `fill(i, σ_row, b_row)` supplies the left-point values of step `i`.
    /// Returns `(N_t + 1) × n^d` values; row 0 is the initial value.
    pub fn evolve(
        &self,
        noise: Option<&NoiseField>,
        fill: &mut dyn FnMut(usize, &mut [f64], &mut [f64]),
    ) -> Result<Vec<f64>> {
        let g = &self.grid;
        if let Some(nz) = noise {
            if !g.same_shape(&nz.grid) {
                return Err(Error::GridMismatch(format!("noise grid {:?} vs solver grid {:?}", nz.grid, g)));
            }
        }
        let m = g.spatial_len();
        let nt = g.time_steps;
        let dt = g.dt();
        let inv_m = 1.0 / m as f64;
        let mut out = Vec::with_capacity((nt + 1) * m);
        out.resize(m, self.options.initial);
        let zero = Complex64::new(0.0, 0.0);
        let mut u_hat = vec![zero; m];
        let mut v_hat = vec![zero; m];
        let mut buf = vec![zero; m];
        let mut scratch = Vec::new();
        let mut sigma = vec![0.0; m];
        let mut b = vec![0.0; m];
        for i in 0..nt {
            sigma.iter_mut().for_each(|v| *v = 0.0);
            b.iter_mut().for_each(|v| *v = 0.0);
            fill(i, &mut sigma, &mut b);
            if sigma.iter().chain(&b).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("convolution integrand"));
            }
            // Pack σW (real part) and b (imaginary part) into one transform.
            match noise {
                Some(nz) => {
                    let w = nz.physical_step(i);
                    for j in 0..m {
                        buf[j] = Complex64::new(sigma[j] * w[j], b[j]);
                    }
                }
                None => {
                    for j in 0..m {
                        buf[j] = Complex64::new(0.0, b[j]);
                    }
                }
            }
            self.plan.forward(&mut buf, &mut scratch);
            for k in 0..m {
                let c = self.conj[k];
                if c < k {
                    continue;
                }
                let (fk, fc) = (buf[k], buf[c].conj());
                let mut f_hat = (fk + fc) * (0.5 * inv_m);
                let mut g_hat = (fk - fc) * Complex64::new(0.0, -0.5 * inv_m);
                if let Some(keep) = &self.keep {
                    if !keep[k] {
                        f_hat = zero;
                        g_hat = zero;
                    }
                }
                for (idx, fh, gh) in [(k, f_hat, g_hat), (c, f_hat.conj(), g_hat.conj())] {
                    match &self.factors {
                        ModeFactors::Heat { decay, stoch, det } => {
                            u_hat[idx] = u_hat[idx] * decay[idx] + fh * stoch[idx] + gh * det[idx];
                        }
                        ModeFactors::Wave { cos, sin_over_w, w_sin } => {
                            let (co, sw, ws) = (cos[idx], sin_over_w[idx], w_sin[idx]);
                            let (u0, v0) = (u_hat[idx], v_hat[idx]);
                            let u1 = u0 * co + v0 * sw;
                            let v1 = -u0 * ws + v0 * co + fh + gh * dt;
                            u_hat[idx] = u1 * co + v1 * sw;
                            v_hat[idx] = -u1 * ws + v1 * co;
                        }
                    }
                    if c == k {
                        break;
                    }
                }
            }
            buf.copy_from_slice(&u_hat);
            self.plan.inverse(&mut buf, &mut scratch);
            let init = self.options.initial;
            out.extend(buf.iter().map(|z| z.re + init));
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("solution"));
        }
        Ok(out)
    }

    fn check_rows(&self, integrand: &[f64]) -> Result<()> {
        let m = self.grid.spatial_len();
        if integrand.len() < self.grid.time_steps * m || integrand.len() % m != 0 {
            return Err(Error::GridMismatch(format!(
                "integrand has {} values, need at least {} rows of {m}",
                integrand.len(),
                self.grid.time_steps
            )));
        }
        Ok(())
    }

    /// `t ↦ ∫_0^t ∫ S(t−s, x−y) f(s, y) M(ds, dy)` on the grid.
    pub fn stochastic_convolution(&self, integrand: &[f64], noise: &NoiseField) -> Result<Vec<f64>> {
        self.check_rows(integrand)?;
        let m = self.grid.spatial_len();
        let out = self.evolve(Some(noise), &mut |i, s, _| s.copy_from_slice(&integrand[i * m..(i + 1) * m]))?;
        Ok(self.without_initial(out))
    }

    /// `t ↦ ∫_0^t ∫ S(t−s, x−y) f(s, y) dy ds` on the grid.
    pub fn deterministic_convolution(&self, integrand: &[f64]) -> Result<Vec<f64>> {
        self.check_rows(integrand)?;
        let m = self.grid.spatial_len();
        let out = self.evolve(None, &mut |i, _, b| b.copy_from_slice(&integrand[i * m..(i + 1) * m]))?;
        Ok(self.without_initial(out))
    }

    fn without_initial(&self, mut v: Vec<f64>) -> Vec<f64> {
        let init = self.options.initial;
        if init != 0.0 {
            v.iter_mut().for_each(|x| *x -= init);
        }
        v
    }

    /// One Picard map applied to the values of `u_n`.
    pub fn picard_map(&self, c: &Coefficients, noise: &NoiseField, u_n: &[f64]) -> Result<Vec<f64>> {
        let m = self.grid.spatial_len();
        if u_n.len() != (self.grid.time_steps + 1) * m {
            return Err(Error::GridMismatch("iterate does not match the grid".into()));
        }
        let dt = self.grid.dt();
        let d = self.grid.dimension;
        let points = &self.points;
        self.evolve(Some(noise), &mut |i, s, b| {
            let t = i as f64 * dt;
            let row = &u_n[i * m..(i + 1) * m];
            for j in 0..m {
                let x = &points[j * d..(j + 1) * d];
                s[j] = c.sigma.eval(t, x, row[j]);
                b[j] = c.b.eval(t, x, row[j]);
            }
        })
    }

    pub fn provenance(&self, c: &Coefficients, noise: &NoiseField, iterations: usize) -> Provenance {
        Provenance {
            kernel: self.kernel,
            measure: noise.measure.describe(),
            noise_seed: noise.seed,
            coupling: noise.coupling,
            sigma: c.sigma.label.clone(),
            b: c.b.label.clone(),
            iterations,
            initial: self.options.initial,
        }
    }

    fn wrap(&self, c: &Coefficients, noise: &NoiseField, iterations: usize, values: Vec<f64>) -> Result<SolutionField> {
        SolutionField::new(
            self.grid,
            noise.measure.clone(),
            self.provenance(c, noise, iterations),
            values,
        )
    }

    pub fn picard_step(&self, c: &Coefficients, noise: &NoiseField, u_n: &SolutionField) -> Result<SolutionField> {
        if !u_n.grid.same_shape(&self.grid) {
            return Err(Error::GridMismatch("iterate does not match the grid".into()));
        }
        let values = self.picard_map(c, noise, u_n.values())?;
        self.wrap(c, noise, u_n.provenance.iterations + 1, values)
    }

    /// The iterates `u^1, ..., u^count` from `u^0 = 0`.
    pub fn picard_iterates(&self, c: &Coefficients, noise: &NoiseField, count: usize) -> Result<Vec<Vec<f64>>> {
        let m = self.grid.spatial_len();
        let mut u = vec![0.0; (self.grid.time_steps + 1) * m];
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            u = self.picard_map(c, noise, &u)?;
            out.push(u.clone());
        }
        Ok(out)
    }

    /// Iterates until `d_n < tol` or `max_iter` steps have run. A `tol` of
    /// `None` means `1e-8 · (1 + ‖u^1‖)`.
    pub fn picard_solve(
        &self,
        c: &Coefficients,
        noise: &NoiseField,
        tol: Option<f64>,
        max_iter: usize,
    ) -> Result<PicardOutcome> {
        if let Some(t) = tol {
            if !(t > 0.0) {
                return Err(Error::invalid(format!("tolerance must be positive, got {t}")));
            }
        }
        if max_iter == 0 {
            return Err(Error::invalid("max_iter must be positive"));
        }
        let m = self.grid.spatial_len();
        let mut u = vec![0.0; (self.grid.time_steps + 1) * m];
        let mut gaps = Vec::new();
        let mut tol_used = tol.unwrap_or(f64::NAN);
        for n in 1..=max_iter {
            let next = self.picard_map(c, noise, &u)?;
            let gap = next.iter().zip(&u).fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
            if n == 1 && tol.is_none() {
                let sup = next.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
                tol_used = 1e-8 * (1.0 + sup);
            }
            gaps.push(gap);
            u = next;
            if gap < tol_used {
                return Ok(PicardOutcome {
                    field: self.wrap(c, noise, n, u)?,
                    gaps,
                    iterations: n,
                    converged: true,
                    tol: tol_used,
                });
            }
        }
        Ok(PicardOutcome {
            field: self.wrap(c, noise, max_iter, u)?,
            gaps,
            iterations: max_iter,
            converged: false,
            tol: tol_used,
        })
    }

    /// Picard solution with the default tolerance and at most 50 steps.
    pub fn solve(&self, c: &Coefficients, noise: &NoiseField) -> Result<SolutionField> {
        let out = self.picard_solve(c, noise, None, DEFAULT_MAX_ITER)?;
        if !out.converged {
            return Err(Error::NotConverged {
                iterations: out.iterations,
                gap: out.gaps.last().copied().unwrap_or(f64::NAN),
                tol: out.tol,
            });
        }
        Ok(out.field)
    }
}

pub const DEFAULT_MAX_ITER: usize = 50;

fn scheme(k: &KernelModel, grid: &Grid) -> Result<Scheme> {
    Scheme::new(*k, *grid, SolverOptions::default())
}

pub fn stochastic_convolution(k: &KernelModel, grid: &Grid, integrand: &[f64], noise: &NoiseField) -> Result<Vec<f64>> {
    scheme(k, grid)?.stochastic_convolution(integrand, noise)
}

pub fn deterministic_convolution(k: &KernelModel, grid: &Grid, integrand: &[f64]) -> Result<Vec<f64>> {
    scheme(k, grid)?.deterministic_convolution(integrand)
}

pub fn picard_step(
    k: &KernelModel,
    grid: &Grid,
    c: &Coefficients,
    noise: &NoiseField,
    u_n: &SolutionField,
) -> Result<SolutionField> {
    scheme(k, grid)?.picard_step(c, noise, u_n)
}

pub fn picard_solve(
    k: &KernelModel,
    grid: &Grid,
    c: &Coefficients,
    noise: &NoiseField,
    tol: f64,
    max_iter: usize,
) -> Result<PicardOutcome> {
    scheme(k, grid)?.picard_solve(c, noise, Some(tol), max_iter)
}

pub fn solve(k: &KernelModel, grid: &Grid, c: &Coefficients, noise: &NoiseField) -> Result<SolutionField> {
    scheme(k, grid)?.solve(c, noise)
}

/// The zero field with the provenance of `(k, c, noise)`.
pub fn zero_field(k: &KernelModel, grid: &Grid, measure: &SpectralMeasure) -> Result<SolutionField> {
    let provenance = Provenance {
        kernel: *k,
        measure: measure.describe(),
        noise_seed: 0,
        coupling: None,
        sigma: "0".into(),
        b: "0".into(),
        iterations: 0,
        initial: 0.0,
    };
    SolutionField::new(
        *grid,
        measure.clone(),
        provenance,
        vec![0.0; (grid.time_steps + 1) * grid.spatial_len()],
    )
}

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::solver::SolutionField;
use crate::stats::{fit_line, median};

/// Number of dyadic lags (the finest ones) the exponent estimator regresses
/// on; fewer available is an error.
pub const MIN_DYADIC_LAGS: usize = 6;

/// Closed axis-aligned box `K` inside the periodic cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl SpatialBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::invalid("box corners must have the same nonzero dimension"));
        }
        if lower.iter().zip(&upper).any(|(a, b)| !(a <= b) || !a.is_finite() || !b.is_finite()) {
            return Err(Error::invalid("box needs finite lower <= upper on every axis"));
        }
        Ok(Self { lower, upper })
    }

    /// The whole cell `[0, L)^d`.
    pub fn whole(grid: &Grid) -> Self {
        Self {
            lower: vec![0.0; grid.dimension],
            upper: vec![grid.length; grid.dimension],
        }
    }

    fn axis_range(&self, grid: &Grid, axis: usize) -> std::ops::Range<usize> {
        let dx = grid.dx();
        let eps = 1e-9 * dx;
        let n = grid.points_per_axis;
        let lo = ((self.lower[axis] - eps) / dx).ceil().max(0.0) as usize;
        let hi = (((self.upper[axis] + eps) / dx).floor() as i64 + 1).clamp(0, n as i64) as usize;
        lo..hi.max(lo)
    }

    fn check(&self, grid: &Grid) -> Result<()> {
        if self.lower.len() != grid.dimension {
            return Err(Error::GridMismatch(format!(
                "box of dimension {} on a {}-dimensional grid",
                self.lower.len(),
                grid.dimension
            )));
        }
        let tol = 1e-9 * grid.dx();
        if self.lower.iter().any(|&a| a < -tol) || self.upper.iter().any(|&b| b > grid.length + tol) {
            return Err(Error::invalid("box must lie inside the periodic cell"));
        }
        Ok(())
    }

    /// Flat indices of the grid points inside the box, plus per-axis extents.
    pub fn grid_points(&self, grid: &Grid) -> Result<(Vec<usize>, Vec<usize>)> {
        self.check(grid)?;
        let ranges: Vec<_> = (0..grid.dimension).map(|a| self.axis_range(grid, a)).collect();
        let extents: Vec<usize> = ranges.iter().map(|r| r.len()).collect();
        if extents.contains(&0) {
            return Err(Error::invalid("box contains no grid points"));
        }
        let points = (0..grid.spatial_len())
            .filter(|&flat| {
                let idx = grid.unravel(flat);
                ranges.iter().enumerate().all(|(a, r)| r.contains(&idx[a]))
            })
            .collect();
        Ok((points, extents))
    }
}

/// Discrete `‖·‖_{γ,T,K}` for one grid, with the power tables precomputed so
/// that many fields can be measured cheaply.
#[derive(Debug, Clone)]
pub struct HolderNorm {
    points: Vec<usize>,
    rows: usize,
    m: usize,
    /// `(lag·Δt)^γ₁` per time lag.
    time_pow: Vec<f64>,
    /// `‖x_a − x_b‖^γ₂` for box points a, b.
    space_pow: Vec<f64>,
}

impl HolderNorm {
    pub fn new(grid: &Grid, gamma1: f64, gamma2: f64, k: &SpatialBox) -> Result<Self> {
        for g in [gamma1, gamma2] {
            if !(g > 0.0 && g < 1.0) {
                return Err(Error::invalid(format!("Hölder exponents must lie in (0, 1), got {g}")));
            }
        }
        if grid.time_steps < 1 {
            return Err(Error::invalid("need at least two time rows"));
        }
        let (points, _) = k.grid_points(grid)?;
        let coords: Vec<Vec<f64>> = points.iter().map(|&j| grid.point(j)).collect();
        let q = points.len();
        let mut space_pow = vec![0.0; q * q];
        for a in 0..q {
            for b in 0..q {
                let d2: f64 = coords[a].iter().zip(&coords[b]).map(|(p, r)| (p - r) * (p - r)).sum();
                space_pow[a * q + b] = d2.sqrt().powf(gamma2);
            }
        }
        let rows = grid.time_steps + 1;
        Ok(Self {
            points,
            rows,
            m: grid.spatial_len(),
            time_pow: (0..rows).map(|l| (l as f64 * grid.dt()).powf(gamma1)).collect(),
            space_pow,
        })
    }

    /// `(sup |f|, largest Hölder quotient)` over the box.
    pub fn parts(&self, values: &[f64]) -> (f64, f64) {
        assert_eq!(values.len(), self.rows * self.m, "field does not match the norm's grid");
        let q = self.points.len();
        let v: Vec<f64> = (0..self.rows)
            .flat_map(|i| self.points.iter().map(move |&j| values[i * self.m + j]))
            .collect();
        let sup = v.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
        let quotient = (0..self.rows)
            .into_par_iter()
            .map(|i1| {
                let mut best = 0.0f64;
                for i2 in i1..self.rows {
                    let tp = self.time_pow[i2 - i1];
                    let (r1, r2) = (&v[i1 * q..(i1 + 1) * q], &v[i2 * q..(i2 + 1) * q]);
                    for (c1, &a) in r1.iter().enumerate() {
                        let from = if i1 == i2 { c1 + 1 } else { 0 };
                        let sp = &self.space_pow[c1 * q..(c1 + 1) * q];
                        for c2 in from..q {
                            let denom = tp + sp[c2];
                            if denom > 0.0 {
                                best = best.max((a - r2[c2]).abs() / denom);
                            }
                        }
                    }
                }
                best
            })
            .reduce(|| 0.0, f64::max);
        (sup, quotient)
    }

    pub fn eval(&self, values: &[f64]) -> f64 {
        let (sup, quotient) = self.parts(values);
        sup + quotient
    }
}

/// Discrete `‖f‖_{γ,T,K}`: sup of `|f|` over `[0,T]×K` plus the largest
/// quotient `|f(t,x) − f(s,y)| / (|t−s|^γ₁ + ‖x−y‖^γ₂)` over distinct grid pairs.
///
/// Pure-time and pure-space pairs are included.
pub fn holder_norm(field: &SolutionField, gamma1: f64, gamma2: f64, k: &SpatialBox) -> Result<f64> {
    Ok(HolderNorm::new(&field.grid, gamma1, gamma2, k)?.eval(field.values()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Time,
    Space,
}

/// One row of the increment table: the median absolute increment at a lag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IncrementRow {
    pub direction: Direction,
    /// Lag in grid steps.
    pub lag: usize,
    /// Lag in time or space units.
    pub size: f64,
    pub median: f64,
    /// Whether the row entered the regression. Coarse lags are kept for
    /// audit; they sit near the correlation length where increments saturate.
    pub in_fit: bool,
}

/// Regression estimates of the time and space Hölder exponents.
///
/// A direction is `None` when some median increment vanishes (a field
/// constant in that direction has no exponent).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderEstimate {
    pub gamma1_hat: Option<f64>,
    pub gamma2_hat: Option<f64>,
    /// RMS residuals of the two log–log fits.
    pub regression_residuals: (Option<f64>, Option<f64>),
    pub increment_table: Vec<IncrementRow>,
}

impl HolderEstimate {
    /// CSV with columns `direction,lag,size,median_increment,in_fit`.
    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "direction,lag,size,median_increment,in_fit")?;
        for r in &self.increment_table {
            let dir = match r.direction {
                Direction::Time => "time",
                Direction::Space => "space",
            };
            writeln!(w, "{dir},{},{:e},{:e},{}", r.lag, r.size, r.median, r.in_fit)?;
        }
        Ok(())
    }
}

fn dyadic_lags(extent: usize) -> Vec<usize> {
    std::iter::successors(Some(1usize), |l| Some(l * 2))
        .take_while(|&l| 2 * l <= extent)
        .collect()
}

/// Slope of log(median) against log(size), capped at 1; `None` when a
/// median is zero.
fn fit_direction(rows: &[IncrementRow]) -> (Option<f64>, Option<f64>) {
    let rows: Vec<&IncrementRow> = rows.iter().filter(|r| r.in_fit).collect();
    if rows.iter().any(|r| !(r.median > 0.0) || !r.median.is_finite()) {
        return (None, None);
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.size.ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.median.ln()).collect();
    let fit = fit_line(&xs, &ys);
    (Some(fit.slope.min(1.0)), Some(fit.residual))
}

/// Median absolute increments at dyadic lags along time (x fixed) and along
/// each spatial axis (t fixed); the exponents are log–log slopes over the
/// finest [`MIN_DYADIC_LAGS`] lags.
pub fn estimate_holder_exponents(field: &SolutionField, k: &SpatialBox) -> Result<HolderEstimate> {
    let grid = &field.grid;
    let (points, extents) = k.grid_points(grid)?;
    let time_lags = dyadic_lags(field.rows());
    let space_extent = *extents.iter().min().expect("nonempty");
    let space_lags = dyadic_lags(space_extent);
    if time_lags.len() < MIN_DYADIC_LAGS || space_lags.len() < MIN_DYADIC_LAGS {
        return Err(Error::invalid(format!(
            "need {MIN_DYADIC_LAGS} dyadic lags per direction; have {} in time and {} in space",
            time_lags.len(),
            space_lags.len()
        )));
    }

    let mut table = Vec::new();
    for (q, &lag) in time_lags.iter().enumerate() {
        let mut incs: Vec<f64> = (0..field.rows() - lag)
            .flat_map(|i| points.iter().map(move |&j| (field.at(i + lag, j) - field.at(i, j)).abs()))
            .collect();
        table.push(IncrementRow {
            direction: Direction::Time,
            lag,
            size: lag as f64 * grid.dt(),
            median: median(&mut incs),
            in_fit: q < MIN_DYADIC_LAGS,
        });
    }
    let n = grid.points_per_axis;
    let inside: Vec<bool> = {
        let mut v = vec![false; grid.spatial_len()];
        for &j in &points {
            v[j] = true;
        }
        v
    };
    for (q, &lag) in space_lags.iter().enumerate() {
        let mut incs = Vec::new();
        for &j in &points {
            let idx = grid.unravel(j);
            for axis in 0..grid.dimension {
                if idx[axis] + lag >= n {
                    continue;
                }
                let stride = n.pow((grid.dimension - 1 - axis) as u32);
                let other = j + lag * stride;
                if !inside[other] {
                    continue;
                }
                incs.extend((0..field.rows()).map(|i| (field.at(i, other) - field.at(i, j)).abs()));
            }
        }
        table.push(IncrementRow {
            direction: Direction::Space,
            lag,
            size: lag as f64 * grid.dx(),
            median: median(&mut incs),
            in_fit: q < MIN_DYADIC_LAGS,
        });
    }

    let (time_rows, space_rows): (Vec<IncrementRow>, Vec<IncrementRow>) =
        table.iter().partition(|r| r.direction == Direction::Time);
    let (g1, r1) = fit_direction(&time_rows);
    let (g2, r2) = fit_direction(&space_rows);
    Ok(HolderEstimate {
        gamma1_hat: g1,
        gamma2_hat: g2,
        regression_residuals: (r1, r2),
        increment_table: table,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_grid() -> Grid {
        Grid::new(1, 1.0, 64, 1.0, 64).unwrap()
    }

    #[test]
    fn constant_field_norm_is_its_value() {
        let f = SolutionField::from_fn(unit_grid(), |_, _| -3.0).unwrap();
        let k = SpatialBox::whole(&unit_grid());
        assert_eq!(holder_norm(&f, 0.5, 0.5, &k).unwrap(), 3.0);
    }

    #[test]
    fn linear_in_time() {
        let g = unit_grid();
        let f = SolutionField::from_fn(g, |t, _| t).unwrap();
        let k = SpatialBox::whole(&g);
        let v = holder_norm(&f, 0.5, 0.5, &k).unwrap();
        assert!((1.85..=2.0 + 1e-12).contains(&v), "{v}");
        let est = estimate_holder_exponents(&f, &k).unwrap();
        assert!((est.gamma1_hat.unwrap() - 1.0).abs() < 1e-9);
        assert_eq!(est.gamma2_hat, None);
        let mut csv = Vec::new();
        est.write_csv(&mut csv).unwrap();
        assert!(String::from_utf8(csv).unwrap().starts_with("direction,lag,size,median_increment,in_fit\ntime,1,"));
    }

    #[test]
    fn box_selection() {
        let g = unit_grid();
        let (pts, ext) = SpatialBox::new(vec![0.25], vec![0.5]).unwrap().grid_points(&g).unwrap();
        assert_eq!(ext, vec![17]);
        assert_eq!(pts.first(), Some(&16));
        assert!(SpatialBox::new(vec![0.3], vec![0.31]).unwrap().grid_points(&g).is_err());
        assert!(SpatialBox::new(vec![0.5], vec![2.0]).unwrap().grid_points(&g).is_err());
        let short = Grid::new(1, 1.0, 64, 1.0, 16).unwrap();
        let f = SolutionField::from_fn(short, |t, x| t + x[0]).unwrap();
        assert!(estimate_holder_exponents(&f, &SpatialBox::whole(&short)).is_err());
    }
}

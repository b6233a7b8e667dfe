use crate::error::{Error, Result};
use crate::solver::CoefficientFn;

/// Midpoint nodes across the support of the bump.
const NODES: usize = 201;
/// Samples of `f` on `[-cap, cap]` used for the bound and the finiteness check.
const BOUND_SAMPLES: usize = 2001;

fn bump(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - s * s)).exp()
    }
}

/// Truncates `f` to `|u| ≤ cap` and convolves it in `u` with the smooth
/// bump `exp(-1/(1-(s/scale)²))`, normalized on the quadrature nodes.
///
/// The result is Lipschitz with constant `sup|f|·2ρ(0)/scale`, where `ρ`
/// is the normalized bump on `[-1, 1]`; a smaller declared constant of `f`
/// is kept. `sup|f|` is the declared bound when present, otherwise the
/// largest sample on `[-cap, cap]` at `t = 0`, `x = 0`.
pub fn mollify_coefficient(f: &CoefficientFn, scale: f64, cap: f64) -> Result<CoefficientFn> {
    if !(scale > 0.0 && scale.is_finite()) || !(cap > 0.0 && cap.is_finite()) {
        return Err(Error::invalid(format!("scale and cap must be positive, got {scale} and {cap}")));
    }
    let origin = [0.0; 3];
    let mut sampled = 0.0f64;
    for i in 0..BOUND_SAMPLES {
        let u = -cap + 2.0 * cap * i as f64 / (BOUND_SAMPLES - 1) as f64;
        let v = f.eval(0.0, &origin, u);
        if !v.is_finite() {
            return Err(Error::NonFinite("coefficient samples"));
        }
        sampled = sampled.max(v.abs());
    }
    let sup = f.declared_bound.unwrap_or(sampled);

    let h = 2.0 / NODES as f64;
    let nodes: Vec<f64> = (0..NODES).map(|j| -1.0 + (j as f64 + 0.5) * h).collect();
    let raw: Vec<f64> = nodes.iter().map(|&s| bump(s)).collect();
    let mass: f64 = raw.iter().sum::<f64>() * h;
    let weights: Vec<f64> = raw.iter().map(|w| w * h / mass).collect();
    let shifts: Vec<f64> = nodes.iter().map(|s| s * scale).collect();
    let rho0 = bump(0.0) / mass;

    let mut lipschitz = sup * 2.0 * rho0 / scale;
    if let Some(l) = f.declared_lipschitz {
        lipschitz = lipschitz.min(l);
    }
    let inner = f.f.clone();
    let mut out = CoefficientFn::new(format!("mollify({}, {scale:?}, {cap:?})", f.label), move |t, x, u| {
        shifts
            .iter()
            .zip(&weights)
            .map(|(s, w)| w * inner(t, x, (u - s).clamp(-cap, cap)))
            .sum()
    });
    out.declared_lipschitz = Some(lipschitz);
    out.declared_bound = Some(sup);
    Ok(out)
}

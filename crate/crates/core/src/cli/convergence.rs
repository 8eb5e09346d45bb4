//! Step-size ladders and least-squares order estimates.

use crate::error::{Error, Result};
use crate::linalg::norm_inf;
use crate::stepper::{rk_step, SolverConfig, VectorField};
use crate::tableaux::ButcherTableau;

/// Slope of the least-squares line through `(ln dt, ln err)`.
pub fn fit_order(dts: &[f64], errs: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = dts.iter().zip(errs).map(|(d, e)| (d.ln(), e.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

/// Number of steps of size `dt` that land on `t`.
pub fn steps_to(t: f64, dt: f64) -> Result<usize> {
    let n = (t / dt).round();
    if n < 1.0 || ((n * dt - t) / t).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "final time {t} is not a multiple of step {dt}"
        )));
    }
    Ok(n as usize)
}

pub fn integrate(
    tab: &ButcherTableau<f64>,
    f: &VectorField<f64>,
    y0: &[f64],
    dt: f64,
    steps: usize,
    cfg: &SolverConfig<f64>,
) -> Result<Vec<f64>> {
    let mut y = y0.to_vec();
    for _ in 0..steps {
        y = rk_step(tab, f, &y, dt, cfg)?.y1;
    }
    Ok(y)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LadderResult {
    pub dts: Vec<f64>,
    pub errors: Vec<f64>,
    pub order: f64,
}

/// End-time errors against `reference` along the ladder, and the fitted order.
pub fn ladder(
    tab: &ButcherTableau<f64>,
    f: &VectorField<f64>,
    y0: &[f64],
    final_time: f64,
    dts: &[f64],
    reference: &[f64],
    cfg: &SolverConfig<f64>,
) -> Result<LadderResult> {
    let mut errors = Vec::with_capacity(dts.len());
    for &dt in dts {
        let y = integrate(tab, f, y0, dt, steps_to(final_time, dt)?, cfg)?;
        let diff: Vec<f64> = y.iter().zip(reference).map(|(a, b)| a - b).collect();
        errors.push(norm_inf(&diff));
    }
    Ok(LadderResult {
        dts: dts.to_vec(),
        order: fit_order(dts, &errors),
        errors,
    })
}

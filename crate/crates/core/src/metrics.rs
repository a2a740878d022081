//! Predictive scores: RMSE, interval coverage and CRPS.

use std::f64::consts::PI;

use crate::gp::PredictiveSummary;
use crate::normal;
use crate::{Error, Result};

/// Scores for one test set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub rmse: f64,
    pub coverage: f64,
    pub mean_crps: f64,
    pub n_test: usize,
    pub nominal_level: f64,
}

fn same_len(a: usize, b: usize) -> Result<()> {
    if a != b || a == 0 {
        return Err(Error::input(format!("length mismatch: {a} vs {b}")));
    }
    Ok(())
}

pub fn rmse(predictions: &[f64], truths: &[f64]) -> Result<f64> {
    same_len(predictions.len(), truths.len())?;
    let sse: f64 = predictions.iter().zip(truths).map(|(p, t)| (p - t).powi(2)).sum();
    Ok((sse / truths.len() as f64).sqrt())
}

/// Interval standard deviation, with or without observation noise.
fn interval_sd(s: &PredictiveSummary, include_noise: bool) -> f64 {
    if include_noise {
        s.total_sd()
    } else {
        s.variance.sqrt()
    }
}

/// Fraction of truths inside `mean ± z_{1−α/2} ŝ`, with `ŝ² = σ_N² + σ*²`.
/// Boundary points count as covered.
pub fn coverage(summaries: &[PredictiveSummary], truths: &[f64], alpha: f64) -> Result<f64> {
    coverage_with(summaries, truths, alpha, true)
}

/// [`coverage`] with the noise term optional.
pub fn coverage_with(summaries: &[PredictiveSummary], truths: &[f64], alpha: f64, include_noise: bool) -> Result<f64> {
    same_len(summaries.len(), truths.len())?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::input("α must lie in (0, 1)"));
    }
    let z = normal::two_sided_z(alpha);
    let inside = summaries
        .iter()
        .zip(truths)
        .filter(|(s, t)| (*t - s.mean).abs() <= z * interval_sd(s, include_noise))
        .count();
    Ok(inside as f64 / truths.len() as f64)
}

/// Closed-form CRPS of `N(mean, sd²)` at `y`.
pub fn crps_gaussian(mean: f64, sd: f64, y: f64) -> f64 {
    if sd <= 0.0 {
        return (y - mean).abs();
    }
    let z = (y - mean) / sd;
    sd * (z * (2.0 * normal::cdf(z) - 1.0) + 2.0 * normal::pdf(z) - 1.0 / PI.sqrt())
}

fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, fa: f64, b: f64, fb: f64, m: f64, fm: f64, whole: f64, tol: f64, depth: u32) -> Option<f64> {
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    // The second test stops refinement once rounding dominates the estimate.
    if delta.abs() <= 15.0 * tol || delta.abs() <= 4.0 * f64::EPSILON * (left + right).abs() {
        return Some(left + right + delta / 15.0);
    }
    if depth == 0 {
        return None;
    }
    Some(
        simpson(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth - 1)?
            + simpson(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth - 1)?,
    )
}

fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> Result<f64> {
    if b <= a {
        return Ok(0.0);
    }
    // Start from a few panels so narrow features are not skipped.
    const PANELS: usize = 16;
    let width = (b - a) / PANELS as f64;
    let mut total = 0.0;
    for k in 0..PANELS {
        let lo = a + width * k as f64;
        let hi = if k + 1 == PANELS { b } else { lo + width };
        let m = 0.5 * (lo + hi);
        let (flo, fhi, fm) = (f(lo), f(hi), f(m));
        let whole = (hi - lo) / 6.0 * (flo + 4.0 * fm + fhi);
        total += simpson(f, lo, flo, hi, fhi, m, fm, whole, tol / PANELS as f64, 30)
            .ok_or_else(|| Error::numeric("adaptive quadrature did not converge"))?;
    }
    Ok(total)
}

/// `∫_lo^hi (F(t) − 1{y ≤ t})² dt` by adaptive Simpson, split at `y`.
pub fn crps_numeric<F: Fn(f64) -> f64>(cdf: F, y: f64, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    if !(lo < hi) || !(tol > 0.0) {
        return Err(Error::input("need lo < hi and a positive tolerance"));
    }
    let split = y.clamp(lo, hi);
    let below = integrate(&|t| cdf(t).powi(2), lo, split, 0.5 * tol)?;
    let above = integrate(&|t| (1.0 - cdf(t)).powi(2), split, hi, 0.5 * tol)?;
    Ok(below + above)
}

/// Gaussian CRPS with noise-inclusive spread, averaged over a test set.
pub fn mean_crps(summaries: &[PredictiveSummary], truths: &[f64]) -> Result<f64> {
    same_len(summaries.len(), truths.len())?;
    let total: f64 = summaries
        .iter()
        .zip(truths)
        .map(|(s, t)| crps_gaussian(s.mean, s.total_sd(), *t))
        .sum();
    Ok(total / truths.len() as f64)
}

pub fn report(summaries: &[PredictiveSummary], truths: &[f64], alpha: f64) -> Result<MetricsReport> {
    let means: Vec<f64> = summaries.iter().map(|s| s.mean).collect();
    Ok(MetricsReport {
        rmse: rmse(&means, truths)?,
        coverage: coverage(summaries, truths, alpha)?,
        mean_crps: mean_crps(summaries, truths)?,
        n_test: truths.len(),
        nominal_level: 1.0 - alpha,
    })
}

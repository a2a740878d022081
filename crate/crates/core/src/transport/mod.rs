//! Wasserstein distances and Gaussian Gromov-Wasserstein bounds.
//!
//! In one dimension `W_p` is the `L^p` distance between quantile functions.
//! For discrete marginals both quantile functions are step functions, so the
//! integral is an exact finite sum over the merged breakpoints of the two
//! cumulative-weight sequences.

pub mod assignment;

use nalgebra::DMatrix;

use crate::linalg;
use crate::measures::{project_unchecked, Cloud, GaussianSummary, Marginal1D, ProjectionBasis};
use crate::{Error, Result};

/// Default cap on cloud size for exact multivariate transport.
pub const DEFAULT_EXACT_CAP: usize = 256;

fn check_p(p: f64) -> Result<()> {
    if p.is_finite() && p >= 1.0 {
        Ok(())
    } else {
        Err(Error::input(format!("transport exponent p = {p} must be >= 1")))
    }
}

#[inline]
pub(crate) fn pow_abs(x: f64, p: f64) -> f64 {
    let a = x.abs();
    if p == 1.0 {
        a
    } else if p == 2.0 {
        a * a
    } else {
        a.powf(p)
    }
}

#[inline]
fn root(x: f64, p: f64) -> f64 {
    if p == 1.0 {
        x
    } else if p == 2.0 {
        x.sqrt()
    } else {
        x.powf(1.0 / p)
    }
}

/// `W_p(mu, nu)^p` between two discrete marginals, exactly.
pub fn wp_1d_pow(mu: &Marginal1D, nu: &Marginal1D, p: f64) -> Result<f64> {
    check_p(p)?;
    Ok(wp_1d_pow_unchecked(mu, nu, p))
}

pub(crate) fn wp_1d_pow_unchecked(mu: &Marginal1D, nu: &Marginal1D, p: f64) -> f64 {
    let (av, ac) = (mu.values(), mu.cum_weights());
    let (bv, bc) = (nu.values(), nu.cum_weights());
    let (mut i, mut j) = (0usize, 0usize);
    let mut prev = 0.0;
    let mut acc = 0.0;
    while i < av.len() && j < bv.len() {
        let next = ac[i].min(bc[j]);
        acc += (next - prev) * pow_abs(av[i] - bv[j], p);
        prev = next;
        if ac[i] <= next {
            i += 1;
        }
        if bc[j] <= next {
            j += 1;
        }
    }
    acc
}

/// `W_p` between two discrete marginals.
pub fn wp_1d(mu: &Marginal1D, nu: &Marginal1D, p: f64) -> Result<f64> {
    Ok(root(wp_1d_pow(mu, nu, p)?, p))
}

/// Closed-form `W_2` between Gaussians (Bures term clamped at 0).
pub fn w2_gaussian(a: &GaussianSummary, b: &GaussianSummary) -> Result<f64> {
    Ok(w2_gaussian_sq(a, b)?.sqrt())
}

pub(crate) fn w2_gaussian_sq(a: &GaussianSummary, b: &GaussianSummary) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::input("Gaussian summaries differ in dimension"));
    }
    let (a, b) = if a.canonical_cmp(b).is_gt() { (b, a) } else { (a, b) };
    let mean_sq = (a.mean() - b.mean()).norm_squared();
    if a.cov() == b.cov() {
        return Ok(mean_sq);
    }
    let root_a = linalg::psd_sqrt(a.cov());
    let inner = linalg::symmetrize(&root_a * b.cov() * &root_a);
    let cross = linalg::psd_sqrt(&inner).trace();
    let bures = (a.cov().trace() + b.cov().trace() - 2.0 * cross).max(0.0);
    Ok(mean_sq + bures)
}

fn check_exact_case(mu: &Cloud, nu: &Cloud, cap: usize) -> Result<()> {
    if mu.dim() != nu.dim() {
        return Err(Error::input("clouds differ in dimension"));
    }
    if mu.len() != nu.len() || !mu.is_uniform() || !nu.is_uniform() {
        return Err(Error::unsupported(
            "exact transport needs uniform clouds of equal size",
        ));
    }
    if mu.len() > cap {
        return Err(Error::Resource(format!(
            "cloud size {} exceeds exact-transport cap {cap}",
            mu.len()
        )));
    }
    Ok(())
}

/// `W_p^p` between uniform equal-size clouds via optimal assignment.
pub fn wp_cloud_exact_pow(mu: &Cloud, nu: &Cloud, p: f64, cap: usize) -> Result<f64> {
    check_p(p)?;
    check_exact_case(mu, nu, cap)?;
    Ok(wp_cloud_exact_pow_unchecked(mu, nu, p))
}

pub(crate) fn wp_cloud_exact_pow_unchecked(mu: &Cloud, nu: &Cloud, p: f64) -> f64 {
    let (mu, nu) = if mu.canonical_cmp(nu).is_gt() { (nu, mu) } else { (mu, nu) };
    let n = mu.len();
    let mut cost = Vec::with_capacity(n * n);
    for x in mu.points() {
        for y in nu.points() {
            let sq: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
            cost.push(if p == 2.0 { sq } else { pow_abs(sq.sqrt(), p) });
        }
    }
    let (_, total) = assignment::solve(&cost, n);
    total.max(0.0) / n as f64
}

/// `W_p` between uniform equal-size clouds via optimal assignment.
///
/// Clouds of other shapes are rejected rather than approximated.
pub fn wp_cloud_exact(mu: &Cloud, nu: &Cloud, p: f64, cap: usize) -> Result<f64> {
    Ok(root(wp_cloud_exact_pow(mu, nu, p, cap)?, p))
}

/// Power mean of projected 1D distances over a fixed basis.
pub fn sliced_wp(mu: &Cloud, nu: &Cloud, basis: &ProjectionBasis, p: f64) -> Result<f64> {
    check_p(p)?;
    if mu.dim() != nu.dim() || mu.dim() != basis.dim() {
        return Err(Error::input("cloud and basis dimensions differ"));
    }
    let total: f64 = basis
        .directions()
        .iter()
        .map(|v| wp_1d_pow_unchecked(&project_unchecked(mu, v), &project_unchecked(nu, v), p))
        .sum();
    Ok(root(total / basis.len() as f64, p))
}

/// Closed-form lower and upper bounds on `GW_2` between Gaussians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GwBounds {
    pub lower: f64,
    pub upper: f64,
}

/// `LGW_2` and `GGW_2` between Gaussians on `R^m` and `R^d`.
///
/// Arguments may come in either dimension order; the larger-dimensional
/// covariance must be nonsingular.
pub fn gw2_gaussian_bounds(a: &GaussianSummary, b: &GaussianSummary) -> Result<GwBounds> {
    let (big, small) = if a.dim() >= b.dim() { (a, b) } else { (b, a) };
    let (d0, _) = linalg::sorted_eigen(big.cov());
    let (d1, _) = linalg::sorted_eigen(small.cov());
    let min_eig = d0.last().copied().unwrap_or(0.0);
    if min_eig <= 1e-12 {
        return Err(Error::input(format!(
            "covariance of the higher-dimensional Gaussian is singular (min eigenvalue {min_eig:e})"
        )));
    }
    Ok(gw_bounds_from_spectra(&d0, &d1))
}

/// Bounds from descending spectra `d0` (length m) and `d1` (length d <= m).
pub(crate) fn gw_bounds_from_spectra(d0: &[f64], d1: &[f64]) -> GwBounds {
    let d = d1.len();
    let head = &d0[..d];
    let tr_gap = d0.iter().sum::<f64>() - d1.iter().sum::<f64>();
    let fro0_sq: f64 = d0.iter().map(|x| x * x).sum();
    let fro1_sq: f64 = d1.iter().map(|x| x * x).sum();
    let head_sq: f64 = head.iter().map(|x| x * x).sum();
    let diff_sq: f64 = head.iter().zip(d1).map(|(x, y)| (x - y) * (x - y)).sum();
    let (fro0, fro1, head_fro) = (fro0_sq.sqrt(), fro1_sq.sqrt(), head_sq.sqrt());

    let lower_sq = 4.0 * tr_gap * tr_gap
        + 4.0 * (fro0 - fro1).powi(2)
        + 4.0 * diff_sq
        + 4.0 * (fro0 - head_fro).powi(2);
    let upper_sq = 4.0 * tr_gap * tr_gap + 8.0 * diff_sq + 8.0 * (fro0_sq - head_sq).max(0.0);
    let upper = upper_sq.max(0.0).sqrt();
    // lower <= upper holds algebraically; roundoff can tip equal values.
    let lower = lower_sq.max(0.0).sqrt().min(upper);
    GwBounds { lower, upper }
}

/// Covariance spectra helper exposed for property tests.
pub fn descending_spectrum(cov: &DMatrix<f64>) -> Vec<f64> {
    linalg::sorted_eigen(cov).0
}

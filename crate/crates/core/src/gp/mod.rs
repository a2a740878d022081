//! Exact GP regression on measure-valued inputs.

pub mod nelder_mead;
mod optimize;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;

use crate::kernels::{self, KernelSpec, Measure};
use crate::measures::Cloud;
use crate::{Error, Result};

pub use optimize::{optimize_hyperparams, Fitted, SearchConfig};

/// Escalation stops once the added jitter would exceed this fraction of the
/// mean Gram diagonal.
const JITTER_CAP: f64 = 1e-2;
const JITTER_START: f64 = 1e-10;

/// Posterior predictive at one test input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictiveSummary {
    pub mean: f64,
    /// Latent variance, clamped at 0.
    pub variance: f64,
    /// Observation-noise variance added for noise-inclusive intervals.
    pub noise_variance: f64,
    /// True when roundoff drove the raw variance negative.
    pub clamped: bool,
}

impl PredictiveSummary {
    pub fn total_variance(&self) -> f64 {
        self.variance + self.noise_variance
    }

    pub fn total_sd(&self) -> f64 {
        self.total_variance().sqrt()
    }
}

/// A fitted GP. Immutable after construction.
#[derive(Debug, Clone)]
pub struct GpModel {
    inputs: Vec<Measure>,
    spec: KernelSpec,
    noise: f64,
    jitter: f64,
    escalations: u32,
    gram: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    y: DVector<f64>,
}

fn check_response(y: &[f64]) -> Result<()> {
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::input("responses must be finite"));
    }
    Ok(())
}

/// Cholesky of `K + noise·I`, escalating diagonal jitter in decade steps
/// when the factorization fails. Returns the factor, jitter and step count.
pub(crate) fn factor(k: &DMatrix<f64>, noise: f64) -> Result<(Cholesky<f64, Dyn>, f64, u32)> {
    let n = k.nrows();
    let mean_diag = if n == 0 { 0.0 } else { k.trace() / n as f64 };
    let cap = JITTER_CAP * mean_diag.abs();
    let mut jitter = 0.0;
    let mut escalations = 0;
    loop {
        let mut a = k.clone();
        for i in 0..n {
            a[(i, i)] += noise + jitter;
        }
        if let Some(c) = Cholesky::new(a) {
            if c.l_dirty().diagonal().iter().all(|d| d.is_finite() && *d > 0.0) {
                return Ok((c, jitter, escalations));
            }
        }
        jitter = if jitter == 0.0 { JITTER_START * mean_diag.abs().max(f64::MIN_POSITIVE) } else { jitter * 10.0 };
        escalations += 1;
        if !(jitter <= cap) {
            return Err(Error::numeric(format!(
                "Gram matrix not positive definite after {escalations} jitter escalations"
            )));
        }
    }
}

impl GpModel {
    /// Fits with fixed hyperparameters.
    pub fn fit(inputs: &[Measure], y: &[f64], spec: &KernelSpec, noise: f64) -> Result<Self> {
        if inputs.is_empty() || inputs.len() != y.len() {
            return Err(Error::input(format!(
                "{} inputs but {} responses",
                inputs.len(),
                y.len()
            )));
        }
        if !(noise > 0.0 && noise.is_finite()) {
            return Err(Error::input("noise variance must be positive"));
        }
        check_response(y)?;
        let gram = kernels::gram(inputs, spec)?.entries;
        Self::from_gram(inputs.to_vec(), y, spec.clone(), noise, gram)
    }

    pub(crate) fn from_gram(
        inputs: Vec<Measure>,
        y: &[f64],
        spec: KernelSpec,
        noise: f64,
        gram: DMatrix<f64>,
    ) -> Result<Self> {
        let (chol, jitter, escalations) = factor(&gram, noise)?;
        let y = DVector::from_column_slice(y);
        let alpha = chol.solve(&y);
        Ok(GpModel {
            inputs,
            spec,
            noise,
            jitter,
            escalations,
            gram,
            chol,
            alpha,
            y,
        })
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn noise(&self) -> f64 {
        self.noise
    }

    /// Extra diagonal jitter beyond the noise variance, 0 when none was needed.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn jitter_escalations(&self) -> u32 {
        self.escalations
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn inputs(&self) -> &[Measure] {
        &self.inputs
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// Lower Cholesky factor of `K + (σ*² + jitter) I`.
    pub fn cholesky_factor(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    /// Max-row-sum norm of `(K + σ*²I)^{-1}`.
    pub fn inverse_inf_norm(&self) -> f64 {
        let inv = self.chol.inverse();
        inv.row_iter()
            .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        let n = self.y.len() as f64;
        let log_det_half: f64 = self.chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum();
        -0.5 * self.y.dot(&self.alpha) - log_det_half - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
    }

    fn summarize(&self, k_row: DVector<f64>, prior: f64) -> PredictiveSummary {
        let mean = k_row.dot(&self.alpha);
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&k_row)
            .expect("factor has positive diagonal");
        let raw = prior - v.norm_squared();
        PredictiveSummary {
            mean,
            variance: raw.max(0.0),
            noise_variance: self.noise,
            clamped: raw < 0.0,
        }
    }

    pub fn predict(&self, test: &Measure) -> Result<PredictiveSummary> {
        Ok(self.predict_many(std::slice::from_ref(test))?.remove(0))
    }

    pub fn predict_many(&self, tests: &[Measure]) -> Result<Vec<PredictiveSummary>> {
        let cross = kernels::cross_gram(&self.inputs, tests, &self.spec)?;
        let prior = kernels::self_values(tests, &self.spec)?;
        Ok((0..tests.len())
            .into_par_iter()
            .map(|i| self.summarize(cross.row(i).transpose(), prior[i]))
            .collect())
    }
}

/// Replicate count shared by all clouds, or an error.
fn replicate_count(clouds: &[Cloud]) -> Result<usize> {
    let j = clouds.first().map(Cloud::len).unwrap_or(0);
    if clouds.iter().any(|c| c.len() != j) {
        return Err(Error::unsupported("aggregated GP needs equal replicate counts"));
    }
    Ok(j)
}

fn replicate(clouds: &[Cloud], j: usize) -> Vec<Measure> {
    clouds.iter().map(|c| Measure::Point(c.point(j).to_vec())).collect()
}

/// Ensemble of per-replicate point GPs, combined by the law of total variance.
///
/// Replicate `j` trains on the `j`-th sample of every training cloud and
/// predicts at the `j`-th sample of every test cloud. `fit_replicate` builds
/// the model for one replicate, so callers choose fixed or searched
/// hyperparameters.
pub fn aggregated_fit_predict_with<F>(
    clouds: &[Cloud],
    y: &[f64],
    test: &[Cloud],
    fit_replicate: F,
) -> Result<Vec<PredictiveSummary>>
where
    F: Fn(usize, &[Measure], &[f64]) -> Result<GpModel> + Sync,
{
    let j_train = replicate_count(clouds)?;
    let j_test = replicate_count(test)?;
    if !test.is_empty() && j_test != j_train {
        return Err(Error::unsupported("train and test replicate counts differ"));
    }
    if j_train == 0 {
        return Err(Error::input("no training clouds"));
    }
    let per_rep: Vec<Vec<PredictiveSummary>> = (0..j_train)
        .into_par_iter()
        .map(|j| {
            let model = fit_replicate(j, &replicate(clouds, j), y)?;
            model.predict_many(&replicate(test, j))
        })
        .collect::<Result<_>>()?;
    Ok((0..test.len()).map(|i| combine_replicates(per_rep.iter().map(|r| r[i]))).collect())
}

/// Mean of replicate means; variance is mean within-variance plus the
/// population variance of the replicate means.
pub(crate) fn combine_replicates(reps: impl Iterator<Item = PredictiveSummary> + Clone) -> PredictiveSummary {
    let j = reps.clone().count() as f64;
    let mean = reps.clone().map(|r| r.mean).sum::<f64>() / j;
    let within = reps.clone().map(|r| r.variance).sum::<f64>() / j;
    let between = reps.clone().map(|r| (r.mean - mean).powi(2)).sum::<f64>() / j;
    PredictiveSummary {
        mean,
        variance: within + between,
        noise_variance: reps.clone().map(|r| r.noise_variance).sum::<f64>() / j,
        clamped: reps.into_iter().any(|r| r.clamped),
    }
}

/// [`aggregated_fit_predict_with`] using one fixed point-kernel spec and noise.
pub fn aggregated_fit_predict(
    clouds: &[Cloud],
    y: &[f64],
    spec: &KernelSpec,
    noise: f64,
    test: &[Cloud],
) -> Result<Vec<PredictiveSummary>> {
    if !spec.family.is_point() {
        return Err(Error::input("aggregated GP needs a point kernel"));
    }
    aggregated_fit_predict_with(clouds, y, test, |_, x, y| GpModel::fit(x, y, spec, noise))
}

#[cfg(test)]
mod tests;

//! Multi-start marginal-likelihood search over log hyperparameters.
//!
//! Positive hyperparameters are searched as logs inside a box, then mapped
//! back. Scales are expressed in units derived from the median
//! off-diagonal pair term, so one set of box limits fits every dataset:
//! σ in units of `1 / median(W^p)`, lengthscales in units of the median
//! distance. λ and the noise are in units of `var(y)`.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;

use super::{check_response, factor, GpModel};
use crate::kernels::{self, median, Family, KernelSpec, Measure, TermTable};
use crate::{rng, Error, Result};

/// Search settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchConfig {
    pub restarts: usize,
    pub max_iter: usize,
    pub seed: u64,
    /// Simplex diameter in log space at which a restart stops.
    pub tol: f64,
    /// Hold the noise variance fixed instead of searching it.
    pub fixed_noise: Option<f64>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            restarts: 5,
            max_iter: 400,
            seed: 0,
            tol: 1e-6,
            fixed_noise: None,
        }
    }
}

/// Best hyperparameters found.
#[derive(Debug, Clone)]
pub struct Fitted {
    pub spec: KernelSpec,
    pub noise: f64,
    pub lml: f64,
    /// Objective at each restart's starting point.
    pub initial_lml: Vec<f64>,
    /// Objective at each restart's end point.
    pub restart_lml: Vec<f64>,
}

impl Fitted {
    pub fn model(&self, inputs: &[Measure], y: &[f64]) -> Result<GpModel> {
        GpModel::fit(inputs, y, &self.spec, self.noise)
    }
}

const LAMBDA_BOX: (f64, f64) = (1e-3, 1e2);
const LAMBDA_INIT: (f64, f64) = (0.1, 10.0);
const SCALE_BOX: (f64, f64) = (1e-3, 1e3);
const SCALE_INIT: (f64, f64) = (0.01, 100.0);
const NOISE_FLOOR: f64 = 1e-8;
const NOISE_INIT: (f64, f64) = (1e-4, 1.0);
const CENTRE_NOISE: f64 = 0.1;
const SIMPLEX_STEP: f64 = 1.0;

enum Source {
    Table(TermTable),
    Direct,
}

struct Problem<'a> {
    inputs: &'a [Measure],
    y: &'a [f64],
    template: KernelSpec,
    source: Source,
    var: f64,
    /// One unit per searched scale (ℓ for point kernels).
    units: Vec<f64>,
    fixed_noise: Option<f64>,
}

fn positive_or_one(x: f64) -> f64 {
    if x.is_finite() && x > 0.0 {
        x
    } else {
        1.0
    }
}

/// Median absolute difference of input means, per coordinate.
fn mean_spreads(inputs: &[Measure]) -> Vec<f64> {
    let means: Vec<Vec<f64>> = inputs
        .iter()
        .map(|m| match m {
            Measure::Gaussian(g) => g.mean().iter().copied().collect(),
            Measure::Cloud(c) => c.mean(),
            Measure::Point(x) => x.clone(),
        })
        .collect();
    let d = means.first().map(Vec::len).unwrap_or(0);
    (0..d)
        .map(|i| {
            let mut diffs = Vec::new();
            for a in 0..means.len() {
                for b in a + 1..means.len() {
                    diffs.push((means[a][i] - means[b][i]).abs());
                }
            }
            positive_or_one(median(diffs))
        })
        .collect()
}

impl<'a> Problem<'a> {
    fn new(inputs: &'a [Measure], y: &'a [f64], template: &KernelSpec, cfg: &SearchConfig) -> Result<Self> {
        let n = y.len() as f64;
        let mean = y.iter().sum::<f64>() / n;
        let var = positive_or_one(y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n);
        let (source, units) = if template.family == Family::Uigp {
            (Source::Direct, mean_spreads(inputs))
        } else {
            let table = TermTable::build(inputs, template)?;
            let med: Vec<f64> = table.off_diagonal_medians().into_iter().map(positive_or_one).collect();
            let units = match template.family {
                f if f.is_point() => med,
                Family::Kme => Vec::new(),
                _ => med.iter().map(|m| 1.0 / m).collect(),
            };
            (Source::Table(table), units)
        };
        Ok(Problem {
            inputs,
            y,
            template: template.clone(),
            source,
            var,
            units,
            fixed_noise: cfg.fixed_noise,
        })
    }

    fn dim(&self) -> usize {
        1 + self.units.len() + usize::from(self.fixed_noise.is_none())
    }

    fn lower(&self) -> Vec<f64> {
        let mut v = vec![(LAMBDA_BOX.0 * self.var).ln()];
        v.extend(self.units.iter().map(|u| (SCALE_BOX.0 * u).ln()));
        if self.fixed_noise.is_none() {
            v.push(NOISE_FLOOR.ln());
        }
        v
    }

    fn upper(&self) -> Vec<f64> {
        let mut v = vec![(LAMBDA_BOX.1 * self.var).ln()];
        v.extend(self.units.iter().map(|u| (SCALE_BOX.1 * u).ln()));
        if self.fixed_noise.is_none() {
            v.push(self.var.max(NOISE_FLOOR).ln());
        }
        v
    }

    fn clamp(&self, x: &[f64]) -> Vec<f64> {
        let (lo, hi) = (self.lower(), self.upper());
        x.iter().zip(lo.iter().zip(&hi)).map(|(v, (l, h))| v.clamp(*l, *h)).collect()
    }

    fn centre(&self) -> Vec<f64> {
        let mut v = vec![self.var.ln()];
        v.extend(self.units.iter().map(|u| u.ln()));
        if self.fixed_noise.is_none() {
            v.push((CENTRE_NOISE * self.var).ln());
        }
        self.clamp(&v)
    }

    fn random_start(&self, restart: usize, seed: u64) -> Vec<f64> {
        let mut r = rng::stream(seed, &["gp-init", &restart.to_string()]);
        let mut log_uniform = |lo: f64, hi: f64| r.random_range(lo.ln()..hi.ln());
        let mut v = vec![log_uniform(LAMBDA_INIT.0 * self.var, LAMBDA_INIT.1 * self.var)];
        for u in &self.units {
            v.push(log_uniform(SCALE_INIT.0 * u, SCALE_INIT.1 * u));
        }
        if self.fixed_noise.is_none() {
            v.push(log_uniform(NOISE_INIT.0 * self.var, NOISE_INIT.1 * self.var));
        }
        self.clamp(&v)
    }

    fn decode(&self, x: &[f64]) -> (KernelSpec, f64) {
        let x = self.clamp(x);
        let mut spec = self.template.clone();
        spec.amplitude = x[0].exp();
        let scales: Vec<f64> = x[1..1 + self.units.len()].iter().map(|v| v.exp()).collect();
        if spec.family.is_point() {
            spec.base_lengthscale = scales[0];
        } else if spec.family != Family::Kme {
            spec.scales = scales;
        }
        let noise = self.fixed_noise.unwrap_or_else(|| x[x.len() - 1].exp());
        (spec, noise)
    }

    fn gram(&self, spec: &KernelSpec) -> Result<DMatrix<f64>> {
        match &self.source {
            Source::Table(t) => Ok(t.gram(spec)),
            Source::Direct => Ok(kernels::gram(self.inputs, spec)?.entries),
        }
    }

    fn lml(&self, x: &[f64]) -> f64 {
        let (spec, noise) = self.decode(x);
        let Ok(k) = self.gram(&spec) else {
            return f64::NEG_INFINITY;
        };
        let Ok((chol, _, _)) = factor(&k, noise) else {
            return f64::NEG_INFINITY;
        };
        let y = nalgebra::DVector::from_column_slice(self.y);
        let alpha = chol.solve(&y);
        let half_log_det: f64 = chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum();
        let n = self.y.len() as f64;
        -0.5 * y.dot(&alpha) - half_log_det - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
    }
}

/// Maximizes the log marginal likelihood over λ, the family's scales (or ℓ
/// for point kernels) and the noise variance. `template` fixes the family,
/// `p`, basis, slice set and, for KME/MMD, the base lengthscale; its scale
/// values are ignored but its scale count is kept.
///
/// Restart 0 starts from the box centre in data units; the others start at
/// seeded random points. Restarts run concurrently and the best one wins,
/// ties going to the lowest index.
pub fn optimize_hyperparams(
    inputs: &[Measure],
    y: &[f64],
    template: &KernelSpec,
    cfg: &SearchConfig,
) -> Result<Fitted> {
    if inputs.is_empty() || inputs.len() != y.len() {
        return Err(Error::input("inputs and responses must be non-empty and equal in length"));
    }
    check_response(y)?;
    template.validate()?;
    if let Some(noise) = cfg.fixed_noise {
        if !(noise > 0.0 && noise.is_finite()) {
            return Err(Error::input("fixed noise variance must be positive"));
        }
    }
    let problem = Problem::new(inputs, y, template, cfg)?;
    let restarts = cfg.restarts.max(1);
    let runs: Vec<(f64, f64, Vec<f64>)> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let start = if r == 0 { problem.centre() } else { problem.random_start(r, cfg.seed) };
            let initial = problem.lml(&start);
            if problem.dim() == 0 {
                return (initial, initial, start);
            }
            let m = super::nelder_mead::minimize(|x| -problem.lml(x), &start, SIMPLEX_STEP, cfg.tol, cfg.max_iter);
            let end = problem.clamp(&m.x);
            (initial, -m.value, end)
        })
        .collect();

    let best = runs
        .iter()
        .enumerate()
        .filter(|(_, r)| r.1.is_finite())
        .fold(None::<(usize, f64)>, |acc, (i, r)| match acc {
            Some((_, v)) if v >= r.1 => acc,
            _ => Some((i, r.1)),
        });
    let Some((idx, lml)) = best else {
        let starts: Vec<String> = runs.iter().map(|r| format!("{:.3e}", r.0)).collect();
        return Err(Error::numeric(format!(
            "no restart reached a finite likelihood (initial values: {})",
            starts.join(", ")
        )));
    };
    let (spec, noise) = problem.decode(&runs[idx].2);
    Ok(Fitted {
        spec,
        noise,
        lml,
        initial_lml: runs.iter().map(|r| r.0).collect(),
        restart_lml: runs.iter().map(|r| r.1).collect(),
    })
}

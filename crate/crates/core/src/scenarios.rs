//! Seeded synthetic datasets whose covariates are noisy sample clouds.
//!
//! Every draw comes from [`rng::stream`] keyed by
//! `(seed, scenario tag, split, group index, purpose)`, so splits never share
//! draws and changing `n_test` or `M` never perturbs anything else.
//!
//! | Tag | Latent covariate | Cloud | Response `f` |
//! |-----|------------------|-------|--------------|
//! | `1D-EIV` | `x` evenly spaced on `[0.05, 0.95]` (test: uniform) | `x + N(0, (0.02 + 0.08x)²)` | `sin(4πx) + 0.5x` |
//! | `1D-Var` | `μ ~ U[0,1]`, `σ ~ U[0.05, 0.3]` | `N(μ, σ²)` | `sin(2πμ) + 0.5σ²` |
//! | `1D-Skew` | `m ~ U[0,1]`, `s ~ U[0.1, 0.5]` | `exp(N(m, s²))` | `Q₀.₈ − Q₀.₂ + 0.3 sin m` |
//! | `2D-mean` | `μ ~ U[0.1,1]²`, variances `U[0.01, 0.04]` | diagonal Gaussian | mean of `sin u + 2eᵘ` |
//! | `2D-aniso-PC` | `z` as in 1D-EIV | `R₄₅ (z + ε∥, ε⊥)`, `σ∥ = 0.02 + 0.1z`, `σ⊥ = 0.01` | `sin(4πz) + 0.5z` |
//! | `HD-Ackley-{5,10}D` | `x ~ U[−2,2]^d` | `x + N(0, 0.1² I)` | Ackley |
//!
//! All responses add `η ~ N(0, 0.05²)`.

use std::f64::consts::{E, PI};
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;

use crate::bounds;
use crate::linalg;
use crate::measures::{marginal, Cloud};
use crate::normal;
use crate::rng;
use crate::{Error, Result};

/// One covariate cloud and its response.
#[derive(Debug, Clone, PartialEq)]
pub struct Group {
    pub id: u64,
    pub cloud: Cloud,
    pub y: f64,
}

/// Ground truth behind one group: latent covariates, clean response `f`
/// and output noise `η`, with `y = f + η`.
#[derive(Debug, Clone, PartialEq)]
pub struct Latent {
    pub group_id: u64,
    pub values: Vec<f64>,
    pub f: f64,
    pub eta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub groups: Vec<Group>,
    pub latent: Option<Vec<Latent>>,
    pub latent_names: Vec<String>,
}

impl Dataset {
    pub fn dim(&self) -> usize {
        self.groups.first().map(|g| g.cloud.dim()).unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn clouds(&self) -> Vec<Cloud> {
        self.groups.iter().map(|g| g.cloud.clone()).collect()
    }

    pub fn responses(&self) -> Vec<f64> {
        self.groups.iter().map(|g| g.y).collect()
    }

    /// Checks unique ids and a shared dimension.
    pub fn validate(&self) -> Result<()> {
        let mut ids: Vec<u64> = self.groups.iter().map(|g| g.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::input("duplicate group ids"));
        }
        let d = self.dim();
        if self.groups.iter().any(|g| g.cloud.dim() != d) {
            return Err(Error::input("clouds differ in dimension"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ScenarioName {
    Eiv1d,
    Var1d,
    Skew1d,
    Mean2d,
    AnisoPc2d,
    Ackley5d,
    Ackley10d,
}

impl ScenarioName {
    pub const ALL: [ScenarioName; 7] = [
        ScenarioName::Eiv1d,
        ScenarioName::Var1d,
        ScenarioName::Skew1d,
        ScenarioName::Mean2d,
        ScenarioName::AnisoPc2d,
        ScenarioName::Ackley5d,
        ScenarioName::Ackley10d,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            ScenarioName::Eiv1d => "1D-EIV",
            ScenarioName::Var1d => "1D-Var",
            ScenarioName::Skew1d => "1D-Skew",
            ScenarioName::Mean2d => "2D-mean",
            ScenarioName::AnisoPc2d => "2D-aniso-PC",
            ScenarioName::Ackley5d => "HD-Ackley-5D",
            ScenarioName::Ackley10d => "HD-Ackley-10D",
        }
    }

    pub fn dim(self) -> usize {
        match self {
            ScenarioName::Eiv1d | ScenarioName::Var1d | ScenarioName::Skew1d => 1,
            ScenarioName::Mean2d | ScenarioName::AnisoPc2d => 2,
            ScenarioName::Ackley5d => 5,
            ScenarioName::Ackley10d => 10,
        }
    }

    /// `(n_train, n_test)` defaults.
    pub fn default_sizes(self) -> (usize, usize) {
        match self.dim() {
            1 => (60, 60),
            2 => (40, 40),
            _ => (80, 80),
        }
    }
}

impl fmt::Display for ScenarioName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for ScenarioName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScenarioName::ALL
            .into_iter()
            .find(|n| n.tag().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                let tags: Vec<&str> = ScenarioName::ALL.iter().map(|n| n.tag()).collect();
                Error::input(format!("unknown scenario '{s}'; valid tags: {}", tags.join(", ")))
            })
    }
}

/// Target function for 1D-EIV.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EivTarget {
    /// `sin(4πx) + 0.5x`.
    Oscillatory,
    /// `sin(10πx)/(2x) + (x − 1)⁴`.
    Rational,
}

impl EivTarget {
    pub fn eval(self, x: f64) -> f64 {
        match self {
            EivTarget::Oscillatory => (4.0 * PI * x).sin() + 0.5 * x,
            EivTarget::Rational => (10.0 * PI * x).sin() / (2.0 * x) + (x - 1.0).powi(4),
        }
    }
}

/// Tunable generator constants. Ranges are `(lo, hi)` for uniform draws;
/// schedules are `(base, slope)` for `base + slope · covariate`.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub output_sd: f64,
    pub eiv_noise: (f64, f64),
    pub eiv_target: EivTarget,
    pub var_mu: (f64, f64),
    pub var_sigma: (f64, f64),
    pub skew_m: (f64, f64),
    pub skew_s: (f64, f64),
    pub mean_mu: (f64, f64),
    pub mean_var: (f64, f64),
    pub aniso_parallel: (f64, f64),
    pub aniso_perp: f64,
    pub aniso_angle_deg: f64,
    pub ackley_range: f64,
    pub ackley_input_sd: f64,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            output_sd: 0.05,
            eiv_noise: (0.02, 0.08),
            eiv_target: EivTarget::Oscillatory,
            var_mu: (0.0, 1.0),
            var_sigma: (0.05, 0.3),
            skew_m: (0.0, 1.0),
            skew_s: (0.1, 0.5),
            mean_mu: (0.1, 1.0),
            mean_var: (0.01, 0.04),
            aniso_parallel: (0.02, 0.1),
            aniso_perp: 0.01,
            aniso_angle_deg: 45.0,
            ackley_range: 2.0,
            ackley_input_sd: 0.1,
        }
    }
}

/// Samples per cloud when not overridden.
pub const DEFAULT_SAMPLES_PER_CLOUD: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub name: ScenarioName,
    pub n_train: usize,
    pub n_test: usize,
    pub samples_per_cloud: usize,
    pub seed: u64,
    /// Ackley dimension; must match the tag.
    pub dim: usize,
    pub params: Params,
}

impl ScenarioConfig {
    pub fn new(name: ScenarioName, seed: u64) -> Self {
        let (n_train, n_test) = name.default_sizes();
        ScenarioConfig {
            name,
            n_train,
            n_test,
            samples_per_cloud: DEFAULT_SAMPLES_PER_CLOUD,
            seed,
            dim: name.dim(),
            params: Params::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_train == 0 || self.n_test == 0 || self.samples_per_cloud == 0 {
            return Err(Error::input("scenario counts must be at least 1"));
        }
        if self.dim != self.name.dim() {
            return Err(Error::input(format!(
                "{} has dimension {}, not {}",
                self.name,
                self.name.dim(),
                self.dim
            )));
        }
        let p = &self.params;
        let ranges = [p.var_mu, p.var_sigma, p.skew_m, p.skew_s, p.mean_mu, p.mean_var];
        if ranges.iter().any(|(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo <= hi)) {
            return Err(Error::input("sampling ranges need lo <= hi"));
        }
        let nonneg = [
            p.output_sd,
            p.eiv_noise.0,
            p.aniso_parallel.0,
            p.aniso_perp,
            p.ackley_input_sd,
            p.var_sigma.0,
            p.skew_s.0,
            p.mean_var.0,
        ];
        if nonneg.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::input("noise levels must be nonnegative"));
        }
        if p.eiv_noise.0 + p.eiv_noise.1 < 0.0 || p.aniso_parallel.0 + p.aniso_parallel.1 < 0.0 {
            return Err(Error::input("noise schedules must stay nonnegative on [0, 1]"));
        }
        if !(p.ackley_range > 0.0) {
            return Err(Error::input("Ackley range must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn tag(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// Ackley function with `a = 20`, `b = 0.2`, `c = 2π`.
pub fn ackley(x: &[f64]) -> f64 {
    let d = x.len() as f64;
    let sq = x.iter().map(|v| v * v).sum::<f64>() / d;
    let cs = x.iter().map(|v| (2.0 * PI * v).cos()).sum::<f64>() / d;
    -20.0 * (-0.2 * sq.sqrt()).exp() - cs.exp() + 20.0 + E
}

fn uniform(r: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        r.random_range(lo..hi)
    }
}

fn gauss(r: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(r)
}

struct Streams<'a> {
    cfg: &'a ScenarioConfig,
    split: Split,
}

impl Streams<'_> {
    fn get(&self, group: usize, purpose: &str) -> ChaCha8Rng {
        rng::stream(
            self.cfg.seed,
            &[self.cfg.name.tag(), self.split.tag(), &group.to_string(), purpose],
        )
    }

    fn count(&self) -> usize {
        match self.split {
            Split::Train => self.cfg.n_train,
            Split::Test => self.cfg.n_test,
        }
    }

    /// Training covariates on an even grid over `[0.05, 0.95]`, test ones uniform.
    fn grid_or_uniform(&self, i: usize) -> f64 {
        match self.split {
            Split::Train if self.cfg.n_train == 1 => 0.5,
            Split::Train => 0.05 + 0.9 * i as f64 / (self.cfg.n_train - 1) as f64,
            Split::Test => self.get(i, "covariate").random_range(0.05..0.95),
        }
    }

    fn eta(&self, i: usize) -> f64 {
        self.cfg.params.output_sd * gauss(&mut self.get(i, "eta"))
    }
}

/// Per-group output: cloud points, latent values and clean response.
type Draw = (Vec<f64>, Vec<f64>, f64);

fn assemble(cfg: &ScenarioConfig, split: Split, names: &[&str], draw: impl Fn(&Streams, usize) -> Result<Draw> + Sync) -> Result<Dataset> {
    cfg.validate()?;
    let s = Streams { cfg, split };
    let d = cfg.name.dim();
    let rows: Vec<(Group, Latent)> = (0..s.count())
        .into_par_iter()
        .map(|i| {
            let (flat, values, f) = draw(&s, i)?;
            let eta = s.eta(i);
            let id = i as u64;
            Ok((
                Group {
                    id,
                    cloud: Cloud::from_flat(d, flat, None)?,
                    y: f + eta,
                },
                Latent {
                    group_id: id,
                    values,
                    f,
                    eta,
                },
            ))
        })
        .collect::<Result<_>>()?;
    let (groups, latent) = rows.into_iter().unzip();
    Ok(Dataset {
        groups,
        latent: Some(latent),
        latent_names: names.iter().map(|n| n.to_string()).collect(),
    })
}

fn require(cfg: &ScenarioConfig, names: &[ScenarioName]) -> Result<()> {
    if names.contains(&cfg.name) {
        Ok(())
    } else {
        Err(Error::input(format!("generator does not produce {}", cfg.name)))
    }
}

/// 1D-EIV: heteroscedastic Gaussian measurement noise around `x`.
pub fn gen_1d_eiv(cfg: &ScenarioConfig, split: Split) -> Result<Dataset> {
    require(cfg, &[ScenarioName::Eiv1d])?;
    let p = &cfg.params;
    assemble(cfg, split, &["x"], |s, i| {
        let x = s.grid_or_uniform(i);
        let sd = p.eiv_noise.0 + p.eiv_noise.1 * x;
        let mut r = s.get(i, "samples");
        let flat = (0..cfg.samples_per_cloud).map(|_| x + sd * gauss(&mut r)).collect();
        Ok((flat, vec![x], p.eiv_target.eval(x)))
    })
}

/// 1D-Var: response depends on both the location and spread of the cloud.
pub fn gen_1d_var(cfg: &ScenarioConfig, split: Split) -> Result<Dataset> {
    require(cfg, &[ScenarioName::Var1d])?;
    let p = &cfg.params;
    assemble(cfg, split, &["mu", "sigma"], |s, i| {
        let mut lat = s.get(i, "covariate");
        let mu = uniform(&mut lat, p.var_mu);
        let sigma = uniform(&mut lat, p.var_sigma);
        let mut r = s.get(i, "samples");
        let flat = (0..cfg.samples_per_cloud).map(|_| mu + sigma * gauss(&mut r)).collect();
        Ok((flat, vec![mu, sigma], (2.0 * PI * mu).sin() + 0.5 * sigma * sigma))
    })
}

/// `Q₀.₈ − Q₀.₂` of a 1D cloud under the generalized-inverse convention.
pub fn inter_quantile_range(c: &Cloud) -> Result<f64> {
    let m = marginal(c, 0)?;
    Ok(m.quantile(0.8)? - m.quantile(0.2)?)
}

/// 1D-Skew: log-normal clouds; response reads an inter-quantile range.
pub fn gen_1d_skew(cfg: &ScenarioConfig, split: Split) -> Result<Dataset> {
    require(cfg, &[ScenarioName::Skew1d])?;
    let p = &cfg.params;
    assemble(cfg, split, &["m", "s"], |s, i| {
        let mut lat = s.get(i, "covariate");
        let m = uniform(&mut lat, p.skew_m);
        let sd = uniform(&mut lat, p.skew_s);
        let mut r = s.get(i, "samples");
        let flat: Vec<f64> = (0..cfg.samples_per_cloud).map(|_| (m + sd * gauss(&mut r)).exp()).collect();
        let iqr = inter_quantile_range(&Cloud::from_flat(1, flat.clone(), None)?)?;
        Ok((flat, vec![m, sd], iqr + 0.3 * m.sin()))
    })
}

/// Mean over samples and coordinates of `sin u + 2eᵘ`.
pub fn location_functional(c: &Cloud) -> f64 {
    let vals = c.flat_points();
    vals.iter().map(|u| u.sin() + 2.0 * u.exp()).sum::<f64>() / vals.len() as f64
}

/// 2D-mean: diagonal Gaussian clouds; response is a location functional.
pub fn gen_2d_mean(cfg: &ScenarioConfig, split: Split) -> Result<Dataset> {
    require(cfg, &[ScenarioName::Mean2d])?;
    let p = &cfg.params;
    assemble(cfg, split, &["mu1", "mu2", "var1", "var2"], |s, i| {
        let mut lat = s.get(i, "covariate");
        let mu = [uniform(&mut lat, p.mean_mu), uniform(&mut lat, p.mean_mu)];
        let var = [uniform(&mut lat, p.mean_var), uniform(&mut lat, p.mean_var)];
        let mut r = s.get(i, "samples");
        let flat: Vec<f64> = (0..cfg.samples_per_cloud)
            .flat_map(|_| {
                let a = mu[0] + var[0].sqrt() * gauss(&mut r);
                let b = mu[1] + var[1].sqrt() * gauss(&mut r);
                [a, b]
            })
            .collect();
        let f = location_functional(&Cloud::from_flat(2, flat.clone(), None)?);
        Ok((flat, vec![mu[0], mu[1], var[0], var[1]], f))
    })
}

/// 2D-aniso-PC: noise mostly along a rotated line through the origin.
pub fn gen_2d_aniso_pc(cfg: &ScenarioConfig, split: Split) -> Result<Dataset> {
    require(cfg, &[ScenarioName::AnisoPc2d])?;
    let p = &cfg.params;
    let (sin, cos) = p.aniso_angle_deg.to_radians().sin_cos();
    assemble(cfg, split, &["z"], |s, i| {
        let z = s.grid_or_uniform(i);
        let par = p.aniso_parallel.0 + p.aniso_parallel.1 * z;
        let mut r = s.get(i, "samples");
        let flat: Vec<f64> = (0..cfg.samples_per_cloud)
            .flat_map(|_| {
                let a = z + par * gauss(&mut r);
                let b = p.aniso_perp * gauss(&mut r);
                [cos * a - sin * b, sin * a + cos * b]
            })
            .collect();
        Ok((flat, vec![z], (4.0 * PI * z).sin() + 0.5 * z))
    })
}

/// HD-Ackley: isotropic measurement noise around a uniform location.
pub fn gen_hd_ackley(cfg: &ScenarioConfig, split: Split) -> Result<Dataset> {
    require(cfg, &[ScenarioName::Ackley5d, ScenarioName::Ackley10d])?;
    let p = &cfg.params;
    let d = cfg.dim;
    let names: Vec<String> = (1..=d).map(|k| format!("x{k}")).collect();
    let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
    assemble(cfg, split, &name_refs, |s, i| {
        let mut lat = s.get(i, "covariate");
        let x: Vec<f64> = (0..d).map(|_| lat.random_range(-p.ackley_range..p.ackley_range)).collect();
        let mut r = s.get(i, "samples");
        let flat = (0..cfg.samples_per_cloud)
            .flat_map(|_| x.iter().map(|v| v + p.ackley_input_sd * gauss(&mut r)).collect::<Vec<_>>())
            .collect();
        let f = ackley(&x);
        Ok((flat, x, f))
    })
}

/// Dispatches on the scenario tag.
pub fn generate(cfg: &ScenarioConfig, split: Split) -> Result<Dataset> {
    match cfg.name {
        ScenarioName::Eiv1d => gen_1d_eiv(cfg, split),
        ScenarioName::Var1d => gen_1d_var(cfg, split),
        ScenarioName::Skew1d => gen_1d_skew(cfg, split),
        ScenarioName::Mean2d => gen_2d_mean(cfg, split),
        ScenarioName::AnisoPc2d => gen_2d_aniso_pc(cfg, split),
        ScenarioName::Ackley5d | ScenarioName::Ackley10d => gen_hd_ackley(cfg, split),
    }
}

/// Analytic naive-interval coverage and a Monte Carlo estimate of it.
///
/// Draws `ε_X ~ N(0, Σ_X)` and `ε ~ N(0, σ²)` and counts
/// `|wᵀε_X + ε| ≤ z_{1−α/2} σ`.
pub fn prop1_demo(w: &[f64], sigma_x: &DMatrix<f64>, sigma: f64, alpha: f64, n_draws: usize, seed: u64) -> Result<(f64, f64)> {
    let analytic = bounds::naive_coverage(w, sigma_x, sigma, alpha)?;
    if n_draws == 0 {
        return Err(Error::input("need at least one draw"));
    }
    let root = linalg::psd_sqrt(sigma_x);
    let wv = DVector::from_column_slice(w);
    let loadings = root.transpose() * &wv;
    let z = normal::two_sided_z(alpha);
    let noise = Normal::new(0.0, sigma).map_err(|e| Error::input(e.to_string()))?;
    const CHUNK: usize = 1 << 16;
    let chunks = n_draws.div_ceil(CHUNK);
    let inside: usize = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut r = rng::stream(seed, &["prop1", &c.to_string()]);
            let n = CHUNK.min(n_draws - c * CHUNK);
            (0..n)
                .filter(|_| {
                    let lin: f64 = loadings.iter().map(|l| l * gauss(&mut r)).sum();
                    (lin + noise.sample(&mut r)).abs() <= z * sigma
                })
                .count()
        })
        .sum();
    Ok((analytic, inside as f64 / n_draws as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::pca_directions;

    fn cfg(name: ScenarioName, m: usize) -> ScenarioConfig {
        ScenarioConfig {
            samples_per_cloud: m,
            ..ScenarioConfig::new(name, 11)
        }
    }

    fn check_regeneration(ds: &Dataset) {
        for (g, l) in ds.groups.iter().zip(ds.latent.as_ref().unwrap()) {
            assert_eq!(g.y, l.f + l.eta);
            assert_eq!(g.id, l.group_id);
        }
    }

    #[test]
    fn ackley_values() {
        assert!(ackley(&[0.0; 4]).abs() < 1e-15);
        for d in [1, 3, 7] {
            let v = ackley(&vec![1.0; d]);
            assert!((v - (20.0 - 20.0 * (-0.2f64).exp())).abs() < 1e-12);
            assert!((v - 3.625_384_938_440_363).abs() < 1e-9);
        }
        assert_eq!(ackley(&[0.3, -1.2, 0.7]), ackley(&[0.7, 0.3, -1.2]));
    }

    #[test]
    fn shapes_and_determinism() {
        for name in ScenarioName::ALL {
            let c = cfg(name, 5);
            let a = generate(&c, Split::Train).unwrap();
            let b = generate(&c, Split::Train).unwrap();
            assert_eq!(a, b);
            a.validate().unwrap();
            assert_eq!(a.len(), name.default_sizes().0);
            assert_eq!(a.dim(), name.dim());
            assert!(a.groups.iter().all(|g| g.cloud.len() == 5));
            check_regeneration(&a);
            check_regeneration(&generate(&c, Split::Test).unwrap());
        }
    }

    #[test]
    fn test_size_does_not_move_training_draws() {
        let mut c = cfg(ScenarioName::Var1d, 8);
        let before = generate(&c, Split::Train).unwrap();
        c.n_test = 3;
        assert_eq!(generate(&c, Split::Train).unwrap(), before);
        let test = generate(&c, Split::Test).unwrap();
        assert_ne!(test.groups[0].cloud, before.groups[0].cloud);
    }

    #[test]
    fn eiv_spread_grows_with_x() {
        let ds = gen_1d_eiv(&cfg(ScenarioName::Eiv1d, 200), Split::Train).unwrap();
        let sds: Vec<f64> = ds
            .groups
            .iter()
            .map(|g| {
                let m = g.cloud.mean()[0];
                (g.cloud.flat_points().iter().map(|v| (v - m).powi(2)).sum::<f64>() / 200.0).sqrt()
            })
            .collect();
        // Spearman rank correlation of sd against x (x is already sorted).
        let mut idx: Vec<usize> = (0..sds.len()).collect();
        idx.sort_by(|&a, &b| sds[a].total_cmp(&sds[b]));
        let mut rank = vec![0.0; sds.len()];
        for (r, &i) in idx.iter().enumerate() {
            rank[i] = r as f64;
        }
        let n = sds.len() as f64;
        let d2: f64 = rank.iter().enumerate().map(|(i, r)| (i as f64 - r).powi(2)).sum();
        let rho = 1.0 - 6.0 * d2 / (n * (n * n - 1.0));
        assert!(rho > 0.9, "rank correlation {rho}");
    }

    #[test]
    fn var_without_spread() {
        let mut c = cfg(ScenarioName::Var1d, 4);
        c.params.var_sigma = (0.0, 0.0);
        let ds = gen_1d_var(&c, Split::Train).unwrap();
        for (g, l) in ds.groups.iter().zip(ds.latent.unwrap()) {
            assert_eq!(l.f, (2.0 * PI * l.values[0]).sin());
            assert!(g.cloud.points().all(|p| p[0] == l.values[0]));
        }
    }

    #[test]
    fn skew_self_consistency() {
        let ds = gen_1d_skew(&cfg(ScenarioName::Skew1d, 30), Split::Test).unwrap();
        for (g, l) in ds.groups.iter().zip(ds.latent.as_ref().unwrap()) {
            assert!(g.cloud.flat_points().iter().all(|u| *u > 0.0));
            let iqr = inter_quantile_range(&g.cloud).unwrap();
            assert_eq!(iqr + 0.3 * l.values[0].sin(), l.f);
        }
        let mut c = cfg(ScenarioName::Skew1d, 30);
        c.params.skew_s = (0.0, 0.0);
        for l in gen_1d_skew(&c, Split::Train).unwrap().latent.unwrap() {
            assert_eq!(l.f, 0.3 * l.values[0].sin());
        }
    }

    #[test]
    fn location_functional_at_origin() {
        let c = Cloud::from_samples(&[vec![0.0, 0.0]], None).unwrap();
        assert_eq!(location_functional(&c), 2.0);
    }

    #[test]
    fn aniso_degenerate_noise_lies_on_the_ray() {
        let mut c = cfg(ScenarioName::AnisoPc2d, 6);
        c.params.aniso_parallel = (0.0, 0.0);
        c.params.aniso_perp = 0.0;
        let ds = gen_2d_aniso_pc(&c, Split::Train).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        for g in &ds.groups {
            for p in g.cloud.points() {
                assert!((p[0] - p[1]).abs() < 1e-12);
            }
        }
        let basis = pca_directions(&ds.clouds(), 1).unwrap();
        let v = &basis.directions()[0];
        assert!((v[0] - s).abs() < 1e-6 && (v[1] - s).abs() < 1e-6);
    }

    #[test]
    fn aniso_rotation_preserves_distances() {
        let c = cfg(ScenarioName::AnisoPc2d, 5);
        let ds = gen_2d_aniso_pc(&c, Split::Train).unwrap();
        // Undo the rotation and compare pairwise distances.
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let g = &ds.groups[3].cloud;
        for a in 0..g.len() {
            for b in 0..g.len() {
                let (p, q) = (g.point(a), g.point(b));
                let unrot = |v: &[f64]| [s * v[0] + s * v[1], -s * v[0] + s * v[1]];
                let (up, uq) = (unrot(p), unrot(q));
                let d1 = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
                let d2 = ((up[0] - uq[0]).powi(2) + (up[1] - uq[1]).powi(2)).sqrt();
                assert!((d1 - d2).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ackley_clouds_concentrate() {
        let c = cfg(ScenarioName::Ackley5d, 400);
        let ds = gen_hd_ackley(&c, Split::Train).unwrap();
        let close = ds
            .groups
            .iter()
            .zip(ds.latent.as_ref().unwrap())
            .filter(|(g, l)| {
                let m = g.cloud.mean();
                m.iter().zip(&l.values).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() <= 0.05
            })
            .count();
        assert!(close as f64 >= 0.95 * ds.len() as f64);
        let ten = generate(&cfg(ScenarioName::Ackley10d, 2), Split::Test).unwrap();
        assert_eq!(ten.dim(), 10);
    }

    #[test]
    fn config_validation() {
        let mut c = cfg(ScenarioName::Ackley5d, 2);
        c.dim = 7;
        assert!(matches!(generate(&c, Split::Train), Err(Error::Input(_))));
        let err = "2D-wrong".parse::<ScenarioName>().unwrap_err().to_string();
        assert!(err.contains("2D-aniso-PC"));
        assert_eq!("1d-eiv".parse::<ScenarioName>().unwrap(), ScenarioName::Eiv1d);
        let mut z = cfg(ScenarioName::Eiv1d, 2);
        z.n_train = 0;
        assert!(z.validate().is_err());
    }

    #[test]
    fn prop1_demo_matches_analytic() {
        let eye = DMatrix::identity(1, 1);
        let (a, mc) = prop1_demo(&[0.0], &eye, 1.0, 0.1, 200_000, 5).unwrap();
        assert!((a - 0.9).abs() < 1e-12);
        assert!((mc - 0.9).abs() < 3.0 / (200_000f64).sqrt());
        let (a, mc) = prop1_demo(&[1.0], &eye, 1.0, 0.1, 200_000, 5).unwrap();
        assert!((a - mc).abs() < 0.005);
        assert_eq!(prop1_demo(&[1.0], &eye, 1.0, 0.1, 1000, 3).unwrap(), prop1_demo(&[1.0], &eye, 1.0, 0.1, 1000, 3).unwrap());
    }
}

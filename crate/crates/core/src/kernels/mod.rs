//! Covariance kernels on points, Gaussians and empirical clouds.
//!
//! Every kernel except UIGP factors as `combine(spec, terms)` where `terms`
//! are distance-like quantities that do not depend on the amplitude or the
//! scales. Gram assembly and the hyperparameter search share that split, so
//! optimizing λ and σ never recomputes a transport distance.

mod spec;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::linalg;
use crate::measures::{marginal, project_unchecked, Cloud, GaussianSummary, Marginal1D};
use crate::rng;
use crate::transport::{self, DEFAULT_EXACT_CAP};
use crate::{Error, Result};

pub use spec::{Family, KernelSpec};

/// A regression input.
#[derive(Debug, Clone, PartialEq)]
pub enum Measure {
    Point(Vec<f64>),
    Cloud(Cloud),
    Gaussian(GaussianSummary),
}

impl Measure {
    pub fn dim(&self) -> usize {
        match self {
            Measure::Point(x) => x.len(),
            Measure::Cloud(c) => c.dim(),
            Measure::Gaussian(g) => g.dim(),
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Measure::Point(_) => "point",
            Measure::Cloud(_) => "cloud",
            Measure::Gaussian(_) => "gaussian",
        }
    }
}

/// A symmetric kernel matrix together with the spec that produced it.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    pub entries: DMatrix<f64>,
    pub spec: KernelSpec,
}

/// Per-input data a kernel family needs, computed once per Gram assembly.
enum Features<'a> {
    Point(&'a [f64]),
    Line(Marginal1D),
    Cloud(&'a Cloud),
    Gaussian(&'a GaussianSummary),
    Lines(Vec<Marginal1D>),
    Embedded { cloud: &'a Cloud, self_kme: f64 },
}

/// `R` unit directions drawn uniformly on the sphere from the seeded stream.
pub fn slice_directions(dim: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rng::stream(seed, &["swgp-slices", &dim.to_string()]);
    (0..count)
        .map(|_| loop {
            let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-12 {
                break v.into_iter().map(|x| x / norm).collect();
            }
        })
        .collect()
}

fn profile(family: Family, u: f64) -> f64 {
    match family {
        Family::Rbf => (-0.5 * u * u).exp(),
        Family::Matern32 => {
            let s = 3f64.sqrt() * u;
            (1.0 + s) * (-s).exp()
        }
        Family::Matern52 => {
            let s = 5f64.sqrt() * u;
            (1.0 + s + s * s / 3.0) * (-s).exp()
        }
        Family::Exponential => (-u).exp(),
        _ => unreachable!("not a point family"),
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Weighted double sum of Gaussian base-kernel values between two clouds.
pub fn k_kme(mu: &Cloud, nu: &Cloud, base_lengthscale: f64) -> Result<f64> {
    if mu.dim() != nu.dim() {
        return Err(Error::input("clouds differ in dimension"));
    }
    if !(base_lengthscale > 0.0) {
        return Err(Error::input("base lengthscale must be positive"));
    }
    Ok(kme_unchecked(mu, nu, base_lengthscale))
}

fn kme_unchecked(mu: &Cloud, nu: &Cloud, ell: f64) -> f64 {
    let (mu, nu) = if mu.canonical_cmp(nu).is_gt() { (nu, mu) } else { (mu, nu) };
    let inv = -0.5 / (ell * ell);
    let d = mu.dim();
    let (xs, ys) = (mu.flat_points(), nu.flat_points());
    let mut total = 0.0;
    for (a, wa) in mu.weights().iter().enumerate() {
        let x = &xs[a * d..(a + 1) * d];
        let mut row = 0.0;
        for (b, wb) in nu.weights().iter().enumerate() {
            let y = &ys[b * d..(b + 1) * d];
            let sq: f64 = x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum();
            row += wb * (inv * sq).exp();
        }
        total += wa * row;
    }
    total
}

/// Squared MMD under the Gaussian base kernel, clamped at 0.
pub fn mmd2(mu: &Cloud, nu: &Cloud, base_lengthscale: f64) -> Result<f64> {
    let cross = k_kme(mu, nu, base_lengthscale)?;
    let own_mu = kme_unchecked(mu, mu, base_lengthscale);
    let own_nu = kme_unchecked(nu, nu, base_lengthscale);
    Ok((own_mu + own_nu - 2.0 * cross).max(0.0))
}

fn check_compatible(inputs: &[&Measure], spec: &KernelSpec) -> Result<()> {
    let Some(first) = inputs.first() else {
        return Ok(());
    };
    let dim = first.dim();
    for m in inputs {
        if std::mem::discriminant(*m) != std::mem::discriminant(*first) {
            return Err(Error::input(format!(
                "heterogeneous inputs: {} and {}",
                first.kind(),
                m.kind()
            )));
        }
        if m.dim() != dim {
            return Err(Error::input("inputs differ in dimension"));
        }
    }
    let ok = match spec.family {
        f if f.is_point() => matches!(first, Measure::Point(_)),
        Family::Wgp => match first {
            Measure::Cloud(_) => true,
            Measure::Gaussian(_) if spec.p == 2.0 => true,
            Measure::Gaussian(_) => {
                return Err(Error::unsupported(
                    "WGP on Gaussian summaries is closed-form only for p = 2",
                ))
            }
            Measure::Point(_) => false,
        },
        Family::Uigp => matches!(first, Measure::Gaussian(_)),
        _ => matches!(first, Measure::Cloud(_)),
    };
    if !ok {
        return Err(Error::input(format!(
            "{} kernel does not accept {} inputs",
            spec.family,
            first.kind()
        )));
    }
    match spec.family {
        Family::Pwa if spec.scales.len() != dim => Err(Error::input(format!(
            "PWA has {} scales for dimension {dim}",
            spec.scales.len()
        ))),
        Family::Uigp if spec.scales.len() != dim => Err(Error::input(format!(
            "UIGP has {} lengthscales for dimension {dim}",
            spec.scales.len()
        ))),
        Family::Pcpwa if spec.basis.as_ref().map(|b| b.dim()) != Some(dim) => {
            Err(Error::input("PCPWA basis dimension does not match inputs"))
        }
        _ => Ok(()),
    }
}

/// Hyperparameter-independent preparation of a set of inputs.
struct Prepared<'a> {
    feats: Vec<Features<'a>>,
}

fn prepare<'a>(inputs: &[&'a Measure], spec: &KernelSpec, directions: Option<&[Vec<f64>]>) -> Result<Prepared<'a>> {
    check_compatible(inputs, spec)?;
    let feats = inputs
        .par_iter()
        .map(|m| features(m, spec, directions))
        .collect::<Result<Vec<_>>>()?;
    Ok(Prepared { feats })
}

fn features<'a>(m: &'a Measure, spec: &KernelSpec, directions: Option<&[Vec<f64>]>) -> Result<Features<'a>> {
    Ok(match (spec.family, m) {
        (f, Measure::Point(x)) if f.is_point() => Features::Point(x),
        (Family::Wgp, Measure::Cloud(c)) if c.dim() == 1 => Features::Line(marginal(c, 0)?),
        (Family::Wgp, Measure::Cloud(c)) => {
            if !c.is_uniform() {
                return Err(Error::unsupported(
                    "multivariate WGP needs uniform equal-size clouds",
                ));
            }
            if c.len() > DEFAULT_EXACT_CAP {
                return Err(Error::Resource(format!(
                    "cloud size {} exceeds exact-transport cap {DEFAULT_EXACT_CAP}",
                    c.len()
                )));
            }
            Features::Cloud(c)
        }
        (Family::Wgp | Family::Uigp, Measure::Gaussian(g)) => Features::Gaussian(g),
        (Family::Pwa, Measure::Cloud(c)) => {
            Features::Lines((0..c.dim()).map(|i| marginal(c, i)).collect::<Result<_>>()?)
        }
        (Family::Pcpwa, Measure::Cloud(c)) => {
            let basis = spec.basis.as_ref().expect("validated");
            Features::Lines(basis.directions().iter().map(|v| project_unchecked(c, v)).collect())
        }
        (Family::Swgp, Measure::Cloud(c)) => {
            let dirs = directions.expect("sliced kernel directions");
            Features::Lines(dirs.iter().map(|v| project_unchecked(c, v)).collect())
        }
        (Family::Kme, Measure::Cloud(c)) => Features::Cloud(c),
        (Family::Mmd, Measure::Cloud(c)) => Features::Embedded {
            cloud: c,
            self_kme: kme_unchecked(c, c, spec.base_lengthscale),
        },
        (f, m) => {
            return Err(Error::input(format!(
                "{f} kernel does not accept {} inputs",
                m.kind()
            )))
        }
    })
}

fn sliced_directions(spec: &KernelSpec, inputs: &[&Measure]) -> Option<Vec<Vec<f64>>> {
    (spec.family == Family::Swgp).then(|| {
        let dim = inputs.first().map(|m| m.dim()).unwrap_or(1);
        slice_directions(dim, spec.slices, spec.slice_seed)
    })
}

/// Hyperparameter-free pair quantities appended to `out`.
fn pair_terms(a: &Features, b: &Features, spec: &KernelSpec, out: &mut Vec<f64>) -> Result<()> {
    let p = spec.p;
    match (a, b) {
        (Features::Point(x), Features::Point(y)) => out.push(euclidean(x, y)),
        (Features::Line(x), Features::Line(y)) => out.push(transport::wp_1d_pow_unchecked(x, y, p)),
        (Features::Cloud(x), Features::Cloud(y)) if spec.family == Family::Wgp => {
            if x.len() != y.len() {
                return Err(Error::unsupported(
                    "multivariate WGP needs uniform equal-size clouds",
                ));
            }
            out.push(transport::wp_cloud_exact_pow_unchecked(x, y, p))
        }
        (Features::Cloud(x), Features::Cloud(y)) => out.push(kme_unchecked(x, y, spec.base_lengthscale)),
        (Features::Gaussian(x), Features::Gaussian(y)) => out.push(transport::w2_gaussian_sq(x, y)?),
        (Features::Lines(xs), Features::Lines(ys)) => {
            let dists = xs.iter().zip(ys).map(|(x, y)| transport::wp_1d_pow_unchecked(x, y, p));
            if spec.family == Family::Swgp {
                out.push(dists.sum::<f64>() / xs.len() as f64);
            } else {
                out.extend(dists);
            }
        }
        (
            Features::Embedded { cloud: x, self_kme: kx },
            Features::Embedded { cloud: y, self_kme: ky },
        ) => {
            let cross = kme_unchecked(x, y, spec.base_lengthscale);
            out.push((kx + ky - 2.0 * cross).max(0.0));
        }
        _ => return Err(Error::input("incompatible kernel inputs")),
    }
    Ok(())
}

/// Kernel value from pair terms.
pub(crate) fn combine(spec: &KernelSpec, terms: &[f64]) -> f64 {
    let lambda = spec.amplitude;
    match spec.family {
        f if f.is_point() => lambda * profile(f, terms[0] / spec.base_lengthscale),
        Family::Wgp | Family::Swgp | Family::Mmd => lambda * (-spec.scales[0] * terms[0]).exp(),
        Family::Pwa | Family::Pcpwa => {
            let exponent: f64 = spec.scales.iter().zip(terms).map(|(s, t)| s * t).sum();
            lambda * (-exponent).exp()
        }
        Family::Kme => lambda * terms[0],
        _ => unreachable!("UIGP is not separable"),
    }
}

fn uigp_value(a: &GaussianSummary, b: &GaussianSummary, spec: &KernelSpec) -> Result<f64> {
    let d = a.dim();
    let lam_diag = DVector::from_iterator(d, spec.scales.iter().map(|l| l * l));
    let pooled = linalg::symmetrize(a.cov() + b.cov());
    let total = &pooled + DMatrix::from_diagonal(&lam_diag);
    let chol = Cholesky::new(total)
        .ok_or_else(|| Error::numeric("Λ + Σ_a + Σ_b is singular"))?;
    let log_det_total: f64 = chol.l_dirty().diagonal().iter().map(|x| 2.0 * x.ln()).sum();
    let log_det_lam: f64 = lam_diag.iter().map(|x| x.ln()).sum();
    let diff = a.mean() - b.mean();
    let quad = diff.dot(&chol.solve(&diff));
    Ok(spec.amplitude * (-0.5 * (log_det_total - log_det_lam) - 0.5 * quad).exp())
}

fn pair_value(a: &Features, b: &Features, spec: &KernelSpec, scratch: &mut Vec<f64>) -> Result<f64> {
    if spec.family == Family::Uigp {
        return match (a, b) {
            (Features::Gaussian(x), Features::Gaussian(y)) => uigp_value(x, y, spec),
            _ => Err(Error::input("UIGP needs Gaussian inputs")),
        };
    }
    scratch.clear();
    pair_terms(a, b, spec, scratch)?;
    Ok(combine(spec, scratch))
}

/// Kernel value between two inputs of any supported family.
pub fn eval(a: &Measure, b: &Measure, spec: &KernelSpec) -> Result<f64> {
    spec.validate()?;
    let inputs = [a, b];
    let dirs = sliced_directions(spec, &inputs);
    let prep = prepare(&inputs, spec, dirs.as_deref())?;
    pair_value(&prep.feats[0], &prep.feats[1], spec, &mut Vec::new())
}

fn require(spec: &KernelSpec, families: &[Family]) -> Result<()> {
    if families.contains(&spec.family) {
        Ok(())
    } else {
        Err(Error::input(format!("unexpected kernel family {}", spec.family)))
    }
}

/// `λ g(‖x − y‖ / ℓ)` for the RBF, Matérn and exponential profiles.
pub fn k_point(x: &[f64], y: &[f64], spec: &KernelSpec) -> Result<f64> {
    if !spec.family.is_point() {
        return Err(Error::input(format!("{} is not a point kernel", spec.family)));
    }
    if x.len() != y.len() {
        return Err(Error::input("point dimensions differ"));
    }
    spec.validate()?;
    Ok(combine(spec, &[euclidean(x, y)]))
}

/// `λ exp(−σ W_p^p)` on clouds or (for p = 2) Gaussian summaries.
pub fn k_wgp(mu: &Measure, nu: &Measure, spec: &KernelSpec) -> Result<f64> {
    require(spec, &[Family::Wgp])?;
    eval(mu, nu, spec)
}

/// Product of per-axis 1D Wasserstein kernels.
pub fn k_pwa(mu: &Cloud, nu: &Cloud, spec: &KernelSpec) -> Result<f64> {
    require(spec, &[Family::Pwa])?;
    eval(&Measure::Cloud(mu.clone()), &Measure::Cloud(nu.clone()), spec)
}

/// Product of 1D Wasserstein kernels along a fixed basis.
pub fn k_pcpwa(mu: &Cloud, nu: &Cloud, spec: &KernelSpec) -> Result<f64> {
    require(spec, &[Family::Pcpwa])?;
    eval(&Measure::Cloud(mu.clone()), &Measure::Cloud(nu.clone()), spec)
}

/// Exponential of the slice-averaged `W_p^p` over `R` seeded random directions.
pub fn k_swgp(mu: &Cloud, nu: &Cloud, spec: &KernelSpec) -> Result<f64> {
    require(spec, &[Family::Swgp])?;
    eval(&Measure::Cloud(mu.clone()), &Measure::Cloud(nu.clone()), spec)
}

/// Expected RBF under Gaussian inputs with ARD lengthscales.
pub fn k_uigp(a: &GaussianSummary, b: &GaussianSummary, spec: &KernelSpec) -> Result<f64> {
    require(spec, &[Family::Uigp])?;
    eval(&Measure::Gaussian(a.clone()), &Measure::Gaussian(b.clone()), spec)
}

/// `λ exp(−σ MMD²)`.
pub fn k_mmd(mu: &Cloud, nu: &Cloud, spec: &KernelSpec) -> Result<f64> {
    require(spec, &[Family::Mmd])?;
    eval(&Measure::Cloud(mu.clone()), &Measure::Cloud(nu.clone()), spec)
}

/// Symmetric Gram matrix; upper triangle computed, lower mirrored.
pub fn gram(inputs: &[Measure], spec: &KernelSpec) -> Result<GramMatrix> {
    spec.validate()?;
    let refs: Vec<&Measure> = inputs.iter().collect();
    let dirs = sliced_directions(spec, &refs);
    let prep = prepare(&refs, spec, dirs.as_deref())?;
    let n = inputs.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut scratch = Vec::new();
            (i..n)
                .map(|j| pair_value(&prep.feats[i], &prep.feats[j], spec, &mut scratch))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let mut entries = DMatrix::zeros(n, n);
    for (i, row) in rows.into_iter().enumerate() {
        for (offset, v) in row.into_iter().enumerate() {
            entries[(i, i + offset)] = v;
            entries[(i + offset, i)] = v;
        }
    }
    Ok(GramMatrix {
        entries,
        spec: spec.clone(),
    })
}

/// Rectangular matrix `k(test_i, train_j)`.
pub fn cross_gram(train: &[Measure], test: &[Measure], spec: &KernelSpec) -> Result<DMatrix<f64>> {
    spec.validate()?;
    let refs: Vec<&Measure> = train.iter().chain(test).collect();
    let dirs = sliced_directions(spec, &refs);
    let prep = prepare(&refs, spec, dirs.as_deref())?;
    let (n_train, n_test) = (train.len(), test.len());
    let rows: Vec<Vec<f64>> = (0..n_test)
        .into_par_iter()
        .map(|i| {
            let mut scratch = Vec::new();
            (0..n_train)
                .map(|j| pair_value(&prep.feats[n_train + i], &prep.feats[j], spec, &mut scratch))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok(DMatrix::from_fn(n_test, n_train, |i, j| rows[i][j]))
}

/// Diagonal values `k(μ_i, μ_i)`.
pub fn self_values(inputs: &[Measure], spec: &KernelSpec) -> Result<Vec<f64>> {
    if let Some(v) = spec.diagonal() {
        return Ok(vec![v; inputs.len()]);
    }
    inputs.iter().map(|m| eval(m, m, spec)).collect()
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(g: &DMatrix<f64>) -> f64 {
    linalg::min_eigenvalue(g)
}

/// Pair terms for every `i <= j` of a fixed input set, so Grams can be
/// rebuilt for new amplitudes and scales without touching the inputs.
pub(crate) struct TermTable {
    n: usize,
    width: usize,
    data: Vec<f64>,
}

impl TermTable {
    pub(crate) fn build(inputs: &[Measure], spec: &KernelSpec) -> Result<Self> {
        if spec.family == Family::Uigp {
            return Err(Error::input("UIGP has no separable pair terms"));
        }
        let refs: Vec<&Measure> = inputs.iter().collect();
        let dirs = sliced_directions(spec, &refs);
        let prep = prepare(&refs, spec, dirs.as_deref())?;
        let n = inputs.len();
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut out = Vec::new();
                for j in i..n {
                    pair_terms(&prep.feats[i], &prep.feats[j], spec, &mut out)?;
                }
                Ok(out)
            })
            .collect::<Result<_>>()?;
        let pairs = n * (n + 1) / 2;
        let data: Vec<f64> = rows.into_iter().flatten().collect();
        let width = data.len().checked_div(pairs).unwrap_or(0);
        Ok(TermTable { n, width, data })
    }

    pub(crate) fn gram(&self, spec: &KernelSpec) -> DMatrix<f64> {
        let mut k = DMatrix::zeros(self.n, self.n);
        let mut idx = 0;
        for i in 0..self.n {
            for j in i..self.n {
                let v = combine(spec, &self.data[idx..idx + self.width]);
                k[(i, j)] = v;
                k[(j, i)] = v;
                idx += self.width;
            }
        }
        k
    }

    /// Median of each term over off-diagonal pairs, used to scale searches.
    pub(crate) fn off_diagonal_medians(&self) -> Vec<f64> {
        let mut cols: Vec<Vec<f64>> = vec![Vec::new(); self.width];
        let mut idx = 0;
        for i in 0..self.n {
            for j in i..self.n {
                if i != j {
                    for (c, col) in cols.iter_mut().enumerate() {
                        col.push(self.data[idx + c]);
                    }
                }
                idx += self.width;
            }
        }
        cols.into_iter().map(median).collect()
    }
}

pub(crate) fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

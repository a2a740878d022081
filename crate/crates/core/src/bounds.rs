//! Uniform error bands for GP regression on 1D measures under `W_1`.
//!
//! The measure class is every law on `[a, b]` whose quantile function is
//! `ℓ`-Lipschitz. [`quantile_net`] builds an explicit `τ`-net of that class,
//! the Lipschitz helpers bound how fast the posterior mean and standard
//! deviation can move in `W_1`, and [`band`] turns those into the inflation
//! `γ(τ)` added to a `√β(τ)`-scaled credible interval.
//!
//! ```
//! use otgp::bounds::{conservative_condition, band};
//! let cert = band(0.1, 0.05, 1, 0.0, 0.0, 0.0, 0.0).unwrap();
//! assert!((cert.beta - 3.841458820694124).abs() < 1e-9);
//! assert!(conservative_condition(2.0, &cert, 0.3).holds);
//! ```

use nalgebra::{DMatrix, DVector};

use crate::gp::GpModel;
use crate::io::KvRecord;
use crate::kernels::{Family, KernelSpec, Measure};
use crate::measures::{project, Cloud, Marginal1D, ProjectionBasis};
use crate::normal;
use crate::transport;
use crate::{Error, Result};

/// Laws on `[a, b]` with `ℓ`-Lipschitz quantile functions.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureClassSpec {
    pub a: f64,
    pub b: f64,
    pub lipschitz: f64,
    /// Covering-rate constants `(C, α₀)`, kept for reporting only.
    pub rate: Option<(f64, f64)>,
}

impl MeasureClassSpec {
    pub fn new(a: f64, b: f64, lipschitz: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::input("class support needs a < b"));
        }
        if !(lipschitz.is_finite() && lipschitz > 0.0) {
            return Err(Error::input("quantile Lipschitz bound must be positive"));
        }
        Ok(MeasureClassSpec {
            a,
            b,
            lipschitz,
            rate: None,
        })
    }
}

/// Grid shape behind a net: `cells` quantile cells, `levels` support values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetGrid {
    pub cells: usize,
    pub levels: usize,
}

fn net_grid(class: &MeasureClassSpec, tau: f64) -> Result<Option<NetGrid>> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::input("net radius τ must be positive"));
    }
    let width = class.b - class.a;
    if tau >= width {
        return Ok(None);
    }
    let h = tau / (2.0 * class.lipschitz);
    let cells = (1.0 / h).ceil().max(1.0);
    let levels = (width / (tau / 2.0)).ceil() + 1.0;
    if cells > 1e9 || levels > 1e9 {
        return Err(Error::Resource(format!("net grid too fine for τ = {tau}")));
    }
    Ok(Some(NetGrid {
        cells: cells as usize,
        levels: levels as usize,
    }))
}

/// Number of nondecreasing length-`cells` sequences over `levels` values.
fn multiset_count(grid: NetGrid) -> Result<u128> {
    let mut count: u128 = 1;
    for k in 1..=grid.cells as u128 {
        count = count
            .checked_mul(grid.levels as u128 - 1 + k)
            .ok_or_else(|| Error::Resource("net size overflows u128".into()))?
            / k;
    }
    Ok(count)
}

/// Cardinality `M(τ)` of the net [`quantile_net`] would emit.
pub fn net_size(class: &MeasureClassSpec, tau: f64) -> Result<u128> {
    match net_grid(class, tau)? {
        None => Ok(1),
        Some(g) => multiset_count(g),
    }
}

/// Explicit `τ`-net in `W_1`.
///
/// Members have piecewise-constant quantile functions on `Q = ⌈2ℓ/τ⌉` equal
/// cells, taking values on `⌈(b−a)/(τ/2)⌉ + 1` evenly spaced support points,
/// nondecreasing across cells. Rounding a Lipschitz quantile's cell midpoint
/// values to the nearest level stays monotone and moves it by at most
/// `ℓ/(2Q) + τ/8 < τ` pointwise. When `τ ≥ b − a` the net is the point mass
/// at the midpoint. Members are emitted in lexicographic order of their
/// level sequences; more than `max_members` is a resource error.
pub fn quantile_net(class: &MeasureClassSpec, tau: f64, max_members: usize) -> Result<(Vec<Marginal1D>, u128)> {
    let Some(grid) = net_grid(class, tau)? else {
        let mid = 0.5 * (class.a + class.b);
        return Ok((vec![Marginal1D::uniform(&[mid])?], 1));
    };
    let size = multiset_count(grid)?;
    if size > max_members as u128 {
        return Err(Error::Resource(format!(
            "net has {size} members, above the limit {max_members}"
        )));
    }
    let step = (class.b - class.a) / (grid.levels - 1) as f64;
    let level = |i: usize| if i + 1 == grid.levels { class.b } else { class.a + step * i as f64 };
    let w = 1.0 / grid.cells as f64;
    let mut members = Vec::with_capacity(size as usize);
    let mut seq = vec![0usize; grid.cells];
    loop {
        let pairs = seq.iter().map(|&i| (level(i), w)).collect();
        members.push(Marginal1D::from_weighted(pairs)?);
        // Next nondecreasing sequence: bump the last index that can move.
        let Some(pos) = seq.iter().rposition(|&i| i + 1 < grid.levels) else {
            break;
        };
        let v = seq[pos] + 1;
        seq[pos..].iter_mut().for_each(|i| *i = v);
    }
    debug_assert_eq!(members.len() as u128, size);
    Ok((members, size))
}

/// Global Lipschitz constant `λσ` of a `p = 1` WGP kernel in either argument.
pub fn kernel_lipschitz_w1(spec: &KernelSpec) -> Result<f64> {
    if spec.family != Family::Wgp || spec.p != 1.0 {
        return Err(Error::input("Lipschitz constant is defined for WGP kernels with p = 1"));
    }
    Ok(spec.amplitude * spec.scales[0])
}

/// `N · L_k · ‖α‖_∞`.
pub fn posterior_mean_lipschitz(model: &GpModel, l_k: f64) -> f64 {
    let alpha_max = model.alpha().iter().fold(0.0f64, |m, a| m.max(a.abs()));
    model.len() as f64 * l_k * alpha_max
}

/// `L_{σ²} = L_k (1 + 2 N ‖(K + σ*²I)^{-1}‖_∞ λ)`.
pub fn variance_lipschitz(model: &GpModel, l_k: f64) -> f64 {
    let n = model.len() as f64;
    l_k * (1.0 + 2.0 * n * model.inverse_inf_norm() * model.spec().amplitude)
}

/// Hölder-1/2 modulus `√(L_{σ²} τ)` of the posterior standard deviation.
pub fn sigma_modulus(model: &GpModel, l_k: f64, tau: f64) -> f64 {
    (variance_lipschitz(model, l_k) * tau.max(0.0)).sqrt()
}

/// Band constants for one `(τ, δ)` choice.
#[derive(Debug, Clone, PartialEq)]
pub struct BandCertificate {
    pub tau: f64,
    pub delta: f64,
    pub net_size: u128,
    pub beta: f64,
    pub gamma: f64,
    pub l_f: f64,
    pub l_k: f64,
    pub l_nu: f64,
    pub omega: f64,
}

/// `β = Φ^{-1}(1 − δ/(2M))²` and `γ = (L_f + L_ν)τ + √β ω`.
pub fn band(tau: f64, delta: f64, net_size: u128, l_f: f64, l_k: f64, l_nu: f64, omega: f64) -> Result<BandCertificate> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::input("δ must lie in (0, 1)"));
    }
    if net_size == 0 {
        return Err(Error::input("net size must be at least 1"));
    }
    for (name, v) in [("τ", tau), ("L_f", l_f), ("L_k", l_k), ("L_ν", l_nu), ("ω", omega)] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::input(format!("{name} must be finite and nonnegative")));
        }
    }
    let tail = delta / (2.0 * net_size as f64);
    if tail >= 1.0 {
        return Err(Error::input("δ/(2M) must be below 1"));
    }
    let beta = normal::inv_sf(tail).powi(2);
    let gamma = (l_f + l_nu) * tau + beta.sqrt() * omega;
    Ok(BandCertificate {
        tau,
        delta,
        net_size,
        beta,
        gamma,
        l_f,
        l_k,
        l_nu,
        omega,
    })
}

/// Full certificate for a fitted 1D `p = 1` WGP model.
pub fn certify(model: &GpModel, class: &MeasureClassSpec, tau: f64, delta: f64, l_f: f64) -> Result<BandCertificate> {
    if model.inputs().iter().any(|m| !matches!(m, Measure::Cloud(c) if c.dim() == 1)) {
        return Err(Error::unsupported("band certificates cover 1D cloud inputs only"));
    }
    if model.spec().family != Family::Wgp || model.spec().p != 1.0 {
        return Err(Error::unsupported("band certificates need a WGP kernel with p = 1"));
    }
    let l_k = kernel_lipschitz_w1(model.spec())?;
    let l_nu = posterior_mean_lipschitz(model, l_k);
    let omega = sigma_modulus(model, l_k, tau);
    band(tau, delta, net_size(class, tau)?, l_f, l_k, l_nu, omega)
}

impl BandCertificate {
    /// `√β σ_N + γ`.
    pub fn half_width(&self, sigma_n: f64) -> f64 {
        self.beta.sqrt() * sigma_n + self.gamma
    }

    pub fn to_record(&self) -> KvRecord {
        let mut r = KvRecord::default();
        r.push_f64("tau", self.tau);
        r.push_f64("delta", self.delta);
        r.push("net_size", self.net_size.to_string());
        r.push_f64("beta", self.beta);
        r.push_f64("gamma", self.gamma);
        r.push_f64("L_f", self.l_f);
        r.push_f64("L_k", self.l_k);
        r.push_f64("L_nuN", self.l_nu);
        r.push_f64("omega", self.omega);
        r
    }

    pub fn from_record(r: &KvRecord) -> Result<Self> {
        Ok(BandCertificate {
            tau: r.get_f64("tau")?,
            delta: r.get_f64("delta")?,
            net_size: r
                .get("net_size")?
                .parse()
                .map_err(|_| Error::input("net_size is not an integer"))?,
            beta: r.get_f64("beta")?,
            gamma: r.get_f64("gamma")?,
            l_f: r.get_f64("L_f")?,
            l_k: r.get_f64("L_k")?,
            l_nu: r.get_f64("L_nuN")?,
            omega: r.get_f64("omega")?,
        })
    }
}

/// Outcome of the conservative-interval test at one input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Verdict {
    pub holds: bool,
    /// `σ_N − γ/(z − √β)`; `-inf` when `z ≤ √β`.
    pub margin: f64,
}

/// The `z`-interval contains the band when `z > √β` and `σ_N ≥ γ/(z − √β)`.
pub fn conservative_condition(z: f64, cert: &BandCertificate, sigma_n: f64) -> Verdict {
    let root_beta = cert.beta.sqrt();
    if z <= root_beta {
        return Verdict {
            holds: false,
            margin: f64::NEG_INFINITY,
        };
    }
    let margin = sigma_n - cert.gamma / (z - root_beta);
    Verdict {
        holds: margin >= 0.0,
        margin,
    }
}

/// `(Σ_r a_r W_1(μ_{v_r}, ν_{v_r})²)^{1/2}` over fixed directions.
pub fn pcpwa_metric(mu: &Cloud, nu: &Cloud, basis: &ProjectionBasis, weights: &[f64]) -> Result<f64> {
    if weights.len() != basis.len() {
        return Err(Error::input(format!(
            "{} weights for {} directions",
            weights.len(),
            basis.len()
        )));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(Error::input("metric weights must be positive"));
    }
    let mut total = 0.0;
    for (v, a) in basis.directions().iter().zip(weights) {
        let w = transport::wp_1d(&project(mu, v)?, &project(nu, v)?, 1.0)?;
        total += a * w * w;
    }
    Ok(total.sqrt())
}

/// Coverage of the nominal `1 − α` interval that ignores Gaussian input
/// noise `Σ_X` in a linear model with weights `w` and output noise `σ`.
pub fn naive_coverage(w: &[f64], sigma_x: &DMatrix<f64>, sigma: f64, alpha: f64) -> Result<f64> {
    if sigma_x.nrows() != w.len() || sigma_x.ncols() != w.len() {
        return Err(Error::input("Σ_X must be square with the length of w"));
    }
    if !(sigma > 0.0) || !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::input("need σ > 0 and α in (0, 1)"));
    }
    let wv = DVector::from_column_slice(w);
    let spread = wv.dot(&(sigma_x * &wv)).max(0.0);
    let z = normal::two_sided_z(alpha);
    Ok(2.0 * normal::cdf(z * sigma / (sigma * sigma + spread).sqrt()) - 1.0)
}

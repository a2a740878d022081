//! Empirical measures and their one-dimensional views.
//!
//! A [`Cloud`] is a weighted point set in `R^d`. Transport kernels never work
//! on clouds directly: they reduce each cloud to [`Marginal1D`] step
//! distributions, either along coordinate axes ([`marginal`]) or along fixed
//! unit directions ([`project`]).

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector};

use crate::linalg;
use crate::{Error, Result};

const WEIGHT_TOL: f64 = 1e-12;
const UNIT_TOL: f64 = 1e-10;
const ORTHO_TOL: f64 = 1e-8;
const SYM_TOL: f64 = 1e-10;

/// Weighted sample points, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Cloud {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
    uniform: bool,
}

impl Cloud {
    /// Builds a cloud from rows of coordinates. Missing weights mean uniform.
    pub fn from_samples(points: &[Vec<f64>], weights: Option<&[f64]>) -> Result<Self> {
        let dim = points.first().map(Vec::len).unwrap_or(0);
        if points.iter().any(|p| p.len() != dim) {
            return Err(Error::input("ragged sample rows"));
        }
        let flat: Vec<f64> = points.iter().flatten().copied().collect();
        Self::from_flat(dim, flat, weights)
    }

    /// Builds a cloud from a row-major buffer of `n * dim` coordinates.
    pub fn from_flat(dim: usize, points: Vec<f64>, weights: Option<&[f64]>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::input("cloud dimension must be at least 1"));
        }
        if points.is_empty() || !points.len().is_multiple_of(dim) {
            return Err(Error::input("cloud needs at least one complete sample"));
        }
        if points.iter().any(|x| !x.is_finite()) {
            return Err(Error::input("non-finite coordinate in cloud"));
        }
        let n = points.len() / dim;
        let (weights, uniform) = match weights {
            None => (vec![1.0 / n as f64; n], true),
            Some(w) => {
                if w.len() != n {
                    return Err(Error::input(format!(
                        "{} weights for {} samples",
                        w.len(),
                        n
                    )));
                }
                if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
                    return Err(Error::input("weights must be finite and nonnegative"));
                }
                let total: f64 = w.iter().sum();
                if total <= 0.0 {
                    return Err(Error::input("weights are all zero"));
                }
                let normalized: Vec<f64> = w.iter().map(|x| x / total).collect();
                let uniform = normalized
                    .iter()
                    .all(|x| (x - 1.0 / n as f64).abs() <= WEIGHT_TOL);
                (normalized, uniform)
            }
        };
        Ok(Cloud {
            dim,
            points,
            weights,
            uniform,
        })
    }

    /// A single point mass.
    pub fn dirac(point: &[f64]) -> Result<Self> {
        Self::from_flat(point.len(), point.to_vec(), None)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, j: usize) -> &[f64] {
        &self.points[j * self.dim..(j + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.dim)
    }

    pub fn flat_points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// True when every weight equals `1/n` within `1e-12`.
    pub fn is_uniform(&self) -> bool {
        self.uniform
    }

    /// Weighted mean of the samples.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for (p, w) in self.points().zip(&self.weights) {
            for (acc, x) in m.iter_mut().zip(p) {
                *acc += w * x;
            }
        }
        m
    }

    /// Total order on clouds, used to make asymmetric pair computations
    /// independent of argument order.
    pub(crate) fn canonical_cmp(&self, other: &Cloud) -> Ordering {
        self.dim
            .cmp(&other.dim)
            .then(self.len().cmp(&other.len()))
            .then_with(|| cmp_slices(&self.points, &other.points))
            .then_with(|| cmp_slices(&self.weights, &other.weights))
    }
}

fn cmp_slices(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            other => return other,
        }
    }
    a.len().cmp(&b.len())
}

/// A discrete distribution on the real line: sorted atoms and their
/// cumulative weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Marginal1D {
    values: Vec<f64>,
    cum_weights: Vec<f64>,
}

impl Marginal1D {
    /// Sorts `(value, weight)` pairs, merges ties and drops zero-weight atoms.
    pub fn from_weighted(mut pairs: Vec<(f64, f64)>) -> Result<Self> {
        if pairs.iter().any(|(v, w)| !v.is_finite() || !w.is_finite() || *w < 0.0) {
            return Err(Error::input("marginal atoms must be finite with nonnegative weight"));
        }
        pairs.retain(|&(_, w)| w > 0.0);
        if pairs.is_empty() {
            return Err(Error::input("marginal has no mass"));
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut values = Vec::with_capacity(pairs.len());
        let mut masses: Vec<f64> = Vec::with_capacity(pairs.len());
        for (v, w) in pairs {
            match values.last() {
                Some(&last) if last == v => *masses.last_mut().unwrap() += w,
                _ => {
                    values.push(v);
                    masses.push(w);
                }
            }
        }
        let total: f64 = masses.iter().sum();
        let mut acc = 0.0;
        let mut cum_weights: Vec<f64> = masses
            .iter()
            .map(|m| {
                acc += m;
                acc / total
            })
            .collect();
        *cum_weights.last_mut().unwrap() = 1.0;
        Ok(Marginal1D {
            values,
            cum_weights,
        })
    }

    /// Equal-weight atoms.
    pub fn uniform(values: &[f64]) -> Result<Self> {
        let w = 1.0 / values.len().max(1) as f64;
        Self::from_weighted(values.iter().map(|&v| (v, w)).collect())
    }

    /// Builds a marginal from explicit breakpoints. `cum_weights` must be
    /// strictly increasing and end at 1.
    pub fn from_parts(values: Vec<f64>, cum_weights: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.len() != cum_weights.len() {
            return Err(Error::input("values and cum_weights must be nonempty and equal length"));
        }
        if values.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::input("values must be nondecreasing"));
        }
        if cum_weights[0] <= 0.0 || cum_weights.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::input("cum_weights must be strictly increasing and positive"));
        }
        let last = *cum_weights.last().unwrap();
        if (last - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::input("cum_weights must end at 1"));
        }
        let mut cum_weights = cum_weights;
        *cum_weights.last_mut().unwrap() = 1.0;
        Ok(Marginal1D {
            values,
            cum_weights,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn cum_weights(&self) -> &[f64] {
        &self.cum_weights
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        let mut prev = 0.0;
        let mut m = 0.0;
        for (v, c) in self.values.iter().zip(&self.cum_weights) {
            m += v * (c - prev);
            prev = *c;
        }
        m
    }

    /// Generalized inverse CDF, `inf{x : F(x) >= q}`.
    pub fn quantile(&self, q: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::input(format!("quantile level {q} outside [0, 1]")));
        }
        let k = self.cum_weights.partition_point(|&c| c < q);
        Ok(self.values[k.min(self.values.len() - 1)])
    }
}

/// Sorted coordinate-axis marginal of a cloud.
pub fn marginal(c: &Cloud, axis: usize) -> Result<Marginal1D> {
    if axis >= c.dim() {
        return Err(Error::input(format!(
            "axis {axis} out of range for dimension {}",
            c.dim()
        )));
    }
    Marginal1D::from_weighted(
        c.points()
            .zip(c.weights())
            .map(|(p, &w)| (p[axis], w))
            .collect(),
    )
}

/// Push-forward of a cloud through `x -> v·x` for a unit vector `v`.
pub fn project(c: &Cloud, v: &[f64]) -> Result<Marginal1D> {
    if v.len() != c.dim() {
        return Err(Error::input("projection direction has wrong dimension"));
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > UNIT_TOL {
        return Err(Error::input(format!("projection direction has norm {norm}")));
    }
    Ok(project_unchecked(c, v))
}

pub(crate) fn project_unchecked(c: &Cloud, v: &[f64]) -> Marginal1D {
    let pairs = c
        .points()
        .zip(c.weights())
        .map(|(p, &w)| (dot(p, v), w))
        .collect();
    Marginal1D::from_weighted(pairs).expect("valid cloud projects to a valid marginal")
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Mean vector and covariance matrix of a (possibly degenerate) Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSummary {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl GaussianSummary {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 || cov.nrows() != d || cov.ncols() != d {
            return Err(Error::input("covariance shape does not match mean"));
        }
        if mean.iter().chain(cov.iter()).any(|x| !x.is_finite()) {
            return Err(Error::input("non-finite Gaussian summary"));
        }
        let asym = (&cov - cov.transpose()).abs().max();
        if asym > SYM_TOL {
            return Err(Error::input(format!("covariance asymmetric by {asym:e}")));
        }
        let cov = linalg::symmetrize(cov);
        let min_eig = linalg::min_eigenvalue(&cov);
        if min_eig < -SYM_TOL {
            return Err(Error::input(format!(
                "covariance not PSD (min eigenvalue {min_eig:e})"
            )));
        }
        Ok(GaussianSummary { mean, cov })
    }

    pub fn isotropic(mean: &[f64], variance: f64) -> Result<Self> {
        let d = mean.len();
        Self::new(
            DVector::from_column_slice(mean),
            DMatrix::from_diagonal_element(d, d, variance),
        )
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub(crate) fn canonical_cmp(&self, other: &GaussianSummary) -> Ordering {
        self.dim()
            .cmp(&other.dim())
            .then_with(|| cmp_slices(self.mean.as_slice(), other.mean.as_slice()))
            .then_with(|| cmp_slices(self.cov.as_slice(), other.cov.as_slice()))
    }
}

/// Weighted mean and biased (weights sum to one) covariance.
pub fn gaussian_summary(c: &Cloud) -> GaussianSummary {
    let d = c.dim();
    let mean = c.mean();
    let mut cov = DMatrix::zeros(d, d);
    if c.len() > 1 {
        for (p, &w) in c.points().zip(c.weights()) {
            for r in 0..d {
                let dr = p[r] - mean[r];
                for s in r..d {
                    cov[(r, s)] += w * dr * (p[s] - mean[s]);
                }
            }
        }
        for r in 0..d {
            for s in 0..r {
                cov[(r, s)] = cov[(s, r)];
            }
        }
    }
    GaussianSummary {
        mean: DVector::from_vec(mean),
        cov,
    }
}

/// A fixed set of unit directions in `R^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionBasis {
    dim: usize,
    directions: Vec<Vec<f64>>,
    orthonormal: bool,
}

impl ProjectionBasis {
    /// Validates unit norms, and pairwise orthogonality when `orthonormal`.
    pub fn new(directions: Vec<Vec<f64>>, orthonormal: bool) -> Result<Self> {
        let dim = directions.first().map(Vec::len).unwrap_or(0);
        if dim == 0 {
            return Err(Error::input("basis needs at least one direction"));
        }
        for v in &directions {
            if v.len() != dim {
                return Err(Error::input("basis directions differ in dimension"));
            }
            let norm = dot(v, v).sqrt();
            if (norm - 1.0).abs() > UNIT_TOL {
                return Err(Error::input(format!("basis direction has norm {norm}")));
            }
        }
        if orthonormal {
            for i in 0..directions.len() {
                for j in 0..i {
                    let ip = dot(&directions[i], &directions[j]);
                    if ip.abs() > ORTHO_TOL {
                        return Err(Error::input(format!(
                            "directions {j} and {i} not orthogonal (inner product {ip:e})"
                        )));
                    }
                }
            }
        }
        Ok(ProjectionBasis {
            dim,
            directions,
            orthonormal,
        })
    }

    /// The canonical axes `e_1..e_d`.
    pub fn canonical(d: usize) -> Result<Self> {
        let dirs = (0..d)
            .map(|i| {
                let mut e = vec![0.0; d];
                e[i] = 1.0;
                e
            })
            .collect();
        Self::new(dirs, true)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn directions(&self) -> &[Vec<f64>] {
        &self.directions
    }

    pub fn is_orthonormal(&self) -> bool {
        self.orthonormal
    }
}

/// Top-`m` principal directions of the pooled samples, each cloud weighted
/// equally. Signs are fixed so the largest-magnitude entry is positive.
pub fn pca_directions(clouds: &[Cloud], m: usize) -> Result<ProjectionBasis> {
    let d = clouds
        .first()
        .map(Cloud::dim)
        .ok_or_else(|| Error::input("no clouds for PCA"))?;
    if clouds.iter().any(|c| c.dim() != d) {
        return Err(Error::input("clouds differ in dimension"));
    }
    if m == 0 || m > d {
        return Err(Error::input(format!("requested {m} components in dimension {d}")));
    }
    let pooled: usize = clouds.iter().map(Cloud::len).sum();
    if pooled < d {
        return Err(Error::input(format!("{pooled} pooled samples for dimension {d}")));
    }
    let share = 1.0 / clouds.len() as f64;
    let mut mean = vec![0.0; d];
    for c in clouds {
        for (p, &w) in c.points().zip(c.weights()) {
            for k in 0..d {
                mean[k] += share * w * p[k];
            }
        }
    }
    let mut cov = DMatrix::zeros(d, d);
    for c in clouds {
        for (p, &w) in c.points().zip(c.weights()) {
            for r in 0..d {
                for s in 0..d {
                    cov[(r, s)] += share * w * (p[r] - mean[r]) * (p[s] - mean[s]);
                }
            }
        }
    }
    let (_, vectors) = linalg::sorted_eigen(&linalg::symmetrize(cov));
    let directions = (0..m)
        .map(|k| {
            let mut v: Vec<f64> = vectors.column(k).iter().copied().collect();
            let norm = dot(&v, &v).sqrt();
            v.iter_mut().for_each(|x| *x /= norm);
            let lead = v
                .iter()
                .enumerate()
                .fold(0, |best, (i, x)| if x.abs() > v[best].abs() { i } else { best });
            if v[lead] < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            v
        })
        .collect();
    ProjectionBasis::new(directions, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cloud(rows: &[&[f64]]) -> Cloud {
        let v: Vec<Vec<f64>> = rows.iter().map(|r| r.to_vec()).collect();
        Cloud::from_samples(&v, None).unwrap()
    }

    #[test]
    fn from_samples_defaults_and_normalizes() {
        let c = cloud(&[&[1.0], &[2.0], &[3.0]]);
        assert_eq!(c.weights(), &[1.0 / 3.0; 3]);
        let s = cloud(&[&[0.0, 0.0]]);
        assert_eq!((s.len(), s.weights()[0]), (1, 1.0));
        let w = Cloud::from_samples(&[vec![1.0], vec![2.0]], Some(&[2.0, 2.0])).unwrap();
        assert_eq!(w.weights(), &[0.5, 0.5]);
        assert!(w.is_uniform());
    }

    #[test]
    fn from_samples_rejects_bad_input() {
        assert!(Cloud::from_samples(&[vec![f64::NAN]], None).is_err());
        assert!(Cloud::from_samples(&[vec![1.0], vec![2.0]], Some(&[1.0, -1.0])).is_err());
        assert!(Cloud::from_samples(&[vec![1.0], vec![2.0]], Some(&[0.0, 0.0])).is_err());
        assert!(Cloud::from_samples(&[], None).is_err());
    }

    #[test]
    fn marginal_sorts_and_merges() {
        let c = cloud(&[&[3.0, 1.0], &[1.0, 2.0]]);
        let m0 = marginal(&c, 0).unwrap();
        assert_eq!(m0.values(), &[1.0, 3.0]);
        assert_eq!(m0.cum_weights(), &[0.5, 1.0]);
        assert_eq!(marginal(&c, 1).unwrap().values(), &[1.0, 2.0]);
        let tie = marginal(&cloud(&[&[2.0], &[2.0]]), 0).unwrap();
        assert_eq!((tie.values(), tie.cum_weights()), (&[2.0][..], &[1.0][..]));
        assert!(marginal(&c, 2).is_err());
    }

    #[test]
    fn project_matches_hand_values() {
        let h = 1.0 / 2f64.sqrt();
        let single = project(&cloud(&[&[1.0, 1.0]]), &[h, h]).unwrap();
        assert!((single.values()[0] - 2f64.sqrt()).abs() < 1e-15);
        let merged = project(&cloud(&[&[1.0, 0.0], &[0.0, 1.0]]), &[h, h]).unwrap();
        assert_eq!(merged.len(), 1);
        assert!((merged.values()[0] - h).abs() < 1e-15);
        assert!(project(&cloud(&[&[1.0, 0.0]]), &[1.0, 1.0]).is_err());
    }

    #[test]
    fn quantile_follows_generalized_inverse() {
        let m = Marginal1D::uniform(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(m.quantile(0.5).unwrap(), 2.0);
        assert_eq!(m.quantile(1.0).unwrap(), 3.0);
        assert_eq!(m.quantile(0.0).unwrap(), 1.0);
        let skew = Marginal1D::from_weighted(vec![(0.0, 0.9), (10.0, 0.1)]).unwrap();
        assert_eq!(skew.quantile(0.95).unwrap(), 10.0);
        assert_eq!(skew.quantile(0.9).unwrap(), 0.0);
        assert!(m.quantile(1.5).is_err());
        assert!(m.quantile(-0.1).is_err());
    }

    #[test]
    fn gaussian_summary_uses_biased_denominator() {
        let g = gaussian_summary(&cloud(&[&[0.0], &[2.0]]));
        assert_eq!(g.mean()[0], 1.0);
        assert_eq!(g.cov()[(0, 0)], 1.0);
        assert_eq!(gaussian_summary(&cloud(&[&[4.0, 1.0]])).cov().max(), 0.0);
        let same = gaussian_summary(&cloud(&[&[1.0, 1.0], &[1.0, 1.0], &[1.0, 1.0]]));
        assert_eq!(same.cov().abs().max(), 0.0);
    }

    #[test]
    fn gaussian_summary_constructor_validates() {
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(GaussianSummary::new(DVector::zeros(2), bad).is_err());
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert!(GaussianSummary::new(DVector::zeros(2), asym).is_err());
    }

    #[test]
    fn pca_on_axis_data_is_e1() {
        let c = cloud(&[&[-2.0, 0.0], &[1.0, 0.0], &[3.0, 0.0]]);
        let b = pca_directions(&[c], 1).unwrap();
        let v = &b.directions()[0];
        assert!((v[0] - 1.0).abs() < 1e-12 && v[1].abs() < 1e-12);
    }

    #[test]
    fn pca_on_diagonal_data() {
        let rows: Vec<Vec<f64>> = (0..7).map(|k| vec![k as f64 - 3.0, k as f64 - 3.0]).collect();
        let b = pca_directions(&[Cloud::from_samples(&rows, None).unwrap()], 2).unwrap();
        let h = 1.0 / 2f64.sqrt();
        let v = &b.directions()[0];
        assert!((v[0] - h).abs() < 1e-6 && (v[1] - h).abs() < 1e-6);
        assert!(pca_directions(&[cloud(&[&[0.0, 0.0], &[1.0, 1.0]])], 3).is_err());
    }

    #[test]
    fn pca_on_isotropic_data_is_orthonormal() {
        let c = cloud(&[&[1.0, 0.0], &[-1.0, 0.0], &[0.0, 1.0], &[0.0, -1.0]]);
        let b = pca_directions(&[c], 2).unwrap();
        let (u, v) = (&b.directions()[0], &b.directions()[1]);
        assert!(dot(u, v).abs() < 1e-8);
    }

    fn arb_cloud(d: usize) -> impl Strategy<Value = Cloud> {
        proptest::collection::vec(
            (proptest::collection::vec(-5.0..5.0f64, d), 0.01..1.0f64),
            1..12,
        )
        .prop_map(move |rows| {
            let pts: Vec<Vec<f64>> = rows.iter().map(|r| r.0.clone()).collect();
            let w: Vec<f64> = rows.iter().map(|r| r.1).collect();
            Cloud::from_samples(&pts, Some(&w)).unwrap()
        })
    }

    proptest! {
        #[test]
        fn quantile_is_monotone(c in arb_cloud(1), a in 0.0..1.0f64, b in 0.0..1.0f64) {
            let m = marginal(&c, 0).unwrap();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(m.quantile(lo).unwrap() <= m.quantile(hi).unwrap());
        }

        #[test]
        fn canonical_projection_equals_marginal(c in arb_cloud(3), axis in 0usize..3) {
            let mut e = vec![0.0; 3];
            e[axis] = 1.0;
            prop_assert_eq!(project(&c, &e).unwrap(), marginal(&c, axis).unwrap());
        }

        #[test]
        fn summary_covariance_is_psd(c in arb_cloud(3)) {
            let g = gaussian_summary(&c);
            prop_assert!((g.cov() - g.cov().transpose()).abs().max() <= 1e-10);
            prop_assert!(linalg::min_eigenvalue(g.cov()) >= -1e-10);
        }

        #[test]
        fn pca_is_orthonormal_and_deterministic(c in arb_cloud(3)) {
            prop_assume!(c.len() >= 3);
            let b = pca_directions(std::slice::from_ref(&c), 3).unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    let ip = dot(&b.directions()[i], &b.directions()[j]);
                    let target = if i == j { 1.0 } else { 0.0 };
                    prop_assert!((ip - target).abs() < 1e-8);
                }
            }
            prop_assert_eq!(b, pca_directions(&[c], 3).unwrap());
        }
    }
}

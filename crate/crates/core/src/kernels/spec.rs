use std::fmt;
use std::str::FromStr;

use crate::measures::ProjectionBasis;
use crate::{Error, Result};

/// Kernel family tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Family {
    Rbf,
    Matern32,
    Matern52,
    Exponential,
    Wgp,
    Swgp,
    Pwa,
    Pcpwa,
    Uigp,
    Kme,
    Mmd,
}

impl Family {
    pub const ALL: [Family; 11] = [
        Family::Rbf,
        Family::Matern32,
        Family::Matern52,
        Family::Exponential,
        Family::Wgp,
        Family::Swgp,
        Family::Pwa,
        Family::Pcpwa,
        Family::Uigp,
        Family::Kme,
        Family::Mmd,
    ];

    pub fn is_point(self) -> bool {
        matches!(
            self,
            Family::Rbf | Family::Matern32 | Family::Matern52 | Family::Exponential
        )
    }

    /// Families built from transport distances, which carry an exponent `p`.
    pub fn is_transport(self) -> bool {
        matches!(self, Family::Wgp | Family::Swgp | Family::Pwa | Family::Pcpwa)
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::Rbf => "rbf",
            Family::Matern32 => "matern32",
            Family::Matern52 => "matern52",
            Family::Exponential => "exponential",
            Family::Wgp => "wgp",
            Family::Swgp => "swgp",
            Family::Pwa => "pwa",
            Family::Pcpwa => "pcpwa",
            Family::Uigp => "uigp",
            Family::Kme => "kme",
            Family::Mmd => "mmd",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::input(format!("unknown kernel family '{s}'")))
    }
}

/// Kernel family plus hyperparameters.
///
/// `scales` holds σ for WGP/SWGP/MMD (length 1), σ_1..σ_m for PWA/PCPWA and the
/// per-dimension lengthscales for UIGP. Point kernels and KME ignore it and
/// use `base_lengthscale`; MMD uses `base_lengthscale` for its Gaussian base
/// kernel. With both notations in play, an RBF of lengthscale ℓ on means
/// corresponds to σ = 1/(2ℓ²).
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    pub family: Family,
    pub amplitude: f64,
    pub scales: Vec<f64>,
    pub p: f64,
    pub base_lengthscale: f64,
    pub basis: Option<ProjectionBasis>,
    pub slices: usize,
    pub slice_seed: u64,
}

impl KernelSpec {
    fn base(family: Family, amplitude: f64) -> Self {
        KernelSpec {
            family,
            amplitude,
            scales: Vec::new(),
            p: 1.0,
            base_lengthscale: 1.0,
            basis: None,
            slices: 1,
            slice_seed: 0,
        }
    }

    /// RBF, Matérn or exponential kernel on points.
    pub fn point(family: Family, amplitude: f64, lengthscale: f64) -> Result<Self> {
        if !family.is_point() {
            return Err(Error::input(format!("{family} is not a point kernel")));
        }
        let mut s = Self::base(family, amplitude);
        s.base_lengthscale = lengthscale;
        s.validate()?;
        Ok(s)
    }

    pub fn rbf(amplitude: f64, lengthscale: f64) -> Result<Self> {
        Self::point(Family::Rbf, amplitude, lengthscale)
    }

    pub fn wgp(amplitude: f64, scale: f64, p: f64) -> Result<Self> {
        let mut s = Self::base(Family::Wgp, amplitude);
        s.scales = vec![scale];
        s.p = p;
        s.validate()?;
        Ok(s)
    }

    pub fn swgp(amplitude: f64, scale: f64, p: f64, slices: usize, slice_seed: u64) -> Result<Self> {
        let mut s = Self::base(Family::Swgp, amplitude);
        s.scales = vec![scale];
        s.p = p;
        s.slices = slices;
        s.slice_seed = slice_seed;
        s.validate()?;
        Ok(s)
    }

    pub fn pwa(amplitude: f64, scales: Vec<f64>, p: f64) -> Result<Self> {
        let mut s = Self::base(Family::Pwa, amplitude);
        s.scales = scales;
        s.p = p;
        s.validate()?;
        Ok(s)
    }

    pub fn pcpwa(amplitude: f64, scales: Vec<f64>, basis: ProjectionBasis, p: f64) -> Result<Self> {
        let mut s = Self::base(Family::Pcpwa, amplitude);
        s.scales = scales;
        s.basis = Some(basis);
        s.p = p;
        s.validate()?;
        Ok(s)
    }

    pub fn uigp(amplitude: f64, lengthscales: Vec<f64>) -> Result<Self> {
        let mut s = Self::base(Family::Uigp, amplitude);
        s.scales = lengthscales;
        s.validate()?;
        Ok(s)
    }

    pub fn kme(amplitude: f64, base_lengthscale: f64) -> Result<Self> {
        let mut s = Self::base(Family::Kme, amplitude);
        s.base_lengthscale = base_lengthscale;
        s.validate()?;
        Ok(s)
    }

    pub fn mmd(amplitude: f64, scale: f64, base_lengthscale: f64) -> Result<Self> {
        let mut s = Self::base(Family::Mmd, amplitude);
        s.scales = vec![scale];
        s.base_lengthscale = base_lengthscale;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if !positive(self.amplitude) {
            return Err(Error::input("kernel amplitude must be positive"));
        }
        // σ = 0 is admitted: it is the constant-kernel limit of the exponential families.
        if self.scales.iter().any(|&s| !s.is_finite() || s < 0.0) {
            return Err(Error::input("kernel scales must be finite and nonnegative"));
        }
        if self.family == Family::Uigp && self.scales.iter().any(|&s| s <= 0.0) {
            return Err(Error::input("uncertain-input lengthscales must be positive"));
        }
        if !positive(self.base_lengthscale) {
            return Err(Error::input("base lengthscale must be positive"));
        }
        if !(self.p.is_finite() && self.p >= 1.0) {
            return Err(Error::input("transport exponent p must be >= 1"));
        }
        let need_one = matches!(self.family, Family::Wgp | Family::Swgp | Family::Mmd);
        if need_one && self.scales.len() != 1 {
            return Err(Error::input(format!("{} takes exactly one scale", self.family)));
        }
        if matches!(self.family, Family::Pwa | Family::Pcpwa | Family::Uigp) && self.scales.is_empty() {
            return Err(Error::input(format!("{} needs at least one scale", self.family)));
        }
        if self.family == Family::Swgp && self.slices == 0 {
            return Err(Error::input("sliced kernel needs at least one slice"));
        }
        match (&self.basis, self.family) {
            (None, Family::Pcpwa) => return Err(Error::input("PCPWA needs a projection basis")),
            (Some(_), f) if f != Family::Pcpwa => {
                return Err(Error::input("only PCPWA takes a projection basis"))
            }
            (Some(b), _) if b.len() != self.scales.len() => {
                return Err(Error::input(format!(
                    "{} basis directions but {} scales",
                    b.len(),
                    self.scales.len()
                )))
            }
            _ => {}
        }
        Ok(())
    }

    /// `k(μ, μ)` for families whose diagonal is the amplitude.
    pub fn diagonal(&self) -> Option<f64> {
        match self.family {
            Family::Uigp | Family::Kme => None,
            _ => Some(self.amplitude),
        }
    }
}

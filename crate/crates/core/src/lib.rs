//! # otgp
//!
//! Gaussian-process regression for inputs that are probability measures.
//!
//! Each noisy covariate is an empirical cloud of samples. Covariances are
//! built from transport distances between clouds, so input spread widens the
//! posterior where it should instead of being averaged away.
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`measures`] | clouds, 1D marginals, Gaussian summaries, PCA directions |
//! | [`transport`] | 1D closed-form `W_p`, Gaussian `W_2`, exact assignment OT, sliced `W_p`, Gaussian GW bounds |
//! | [`kernels`] | point, Wasserstein, sliced, PWA, PCPWA, uncertain-input, KME and MMD kernels; Gram assembly |
//! | [`gp`] | exact GP fit/predict, marginal likelihood, Nelder-Mead hyperparameter search, aggregated baseline |
//! | [`bounds`] | quantile nets, Lipschitz constants, uniform bands, conservative-interval check, naive EIV coverage |
//! | [`metrics`] | RMSE, interval coverage, CRPS |
//! | [`scenarios`] | seeded synthetic benchmarks |
//! | [`bench`] | per-method fit/predict/score pipeline |
//! | [`io`] | dataset CSV and key-value record formats |
//!
//! ## Costs
//!
//! With `N` clouds of `M` samples in `d` dimensions, Gram assembly costs
//! `O(N² d M)` for PWA after an `O(N d M log M)` sort, `O(N² R M)` for the
//! sliced kernel with `R` directions, `O(N² M² d)` for KME/MMD and
//! `O(N² M³)` for exact multivariate WGP. GP training is `O(N³)` on top.

pub mod bench;
pub mod bounds;
mod error;
pub mod gp;
pub mod io;
pub mod kernels;
mod linalg;
pub mod measures;
pub mod metrics;
pub mod normal;
pub mod rng;
pub mod scenarios;
pub mod transport;

pub use error::{Error, Result};
pub use kernels::{Family, KernelSpec, Measure};
pub use measures::{Cloud, GaussianSummary, Marginal1D, ProjectionBasis};

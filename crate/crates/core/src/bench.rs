//! Fit, predict and score one method on one train/test split.
//!
//! Responses are standardized before fitting (zero mean, unit variance on
//! the training split) and predictions are mapped back, so the search box
//! in [`crate::gp::SearchConfig`] units suits every scenario.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

use crate::gp::{combine_replicates, optimize_hyperparams, Fitted, GpModel, PredictiveSummary, SearchConfig};
use crate::io::KvRecord;
use crate::kernels::{median, Family, KernelSpec, Measure};
use crate::measures::{gaussian_summary, pca_directions, Cloud};
use crate::metrics::{self, MetricsReport};
use crate::scenarios::{generate, Dataset, ScenarioConfig, Split};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Reg,
    Agg,
    Wgp,
    Swgp,
    Pwa,
    Pcpwa,
    Uigp,
    Kme,
    Mmd,
}

impl Method {
    pub const ALL: [Method; 9] = [
        Method::Reg,
        Method::Agg,
        Method::Wgp,
        Method::Swgp,
        Method::Pwa,
        Method::Pcpwa,
        Method::Uigp,
        Method::Kme,
        Method::Mmd,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Method::Reg => "reg",
            Method::Agg => "agg",
            Method::Wgp => "wgp",
            Method::Swgp => "swgp",
            Method::Pwa => "pwa",
            Method::Pcpwa => "pcpwa",
            Method::Uigp => "uigp",
            Method::Kme => "kme",
            Method::Mmd => "mmd",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.tag().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                let tags: Vec<&str> = Method::ALL.iter().map(|m| m.tag()).collect();
                Error::input(format!("unknown method '{s}'; valid tags: {}", tags.join(", ")))
            })
    }
}

/// Per-run settings shared by all methods.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchSettings {
    pub alpha: f64,
    pub search: SearchConfig,
    /// Restarts per replicate for the aggregated baseline.
    pub agg_restarts: usize,
    /// Transport exponent for WGP, SWGP, PWA and PCPWA.
    pub p: f64,
    /// PCPWA direction count; `None` uses the input dimension.
    pub pcpwa_components: Option<usize>,
    pub swgp_slices: usize,
    pub point_family: Family,
    /// Record wall time; off gives byte-identical outputs across runs.
    pub timing: bool,
}

impl Default for BenchSettings {
    fn default() -> Self {
        BenchSettings {
            alpha: 0.1,
            search: SearchConfig::default(),
            agg_restarts: 2,
            p: 1.0,
            pcpwa_components: None,
            swgp_slices: 50,
            point_family: Family::Rbf,
            timing: true,
        }
    }
}

/// Median pairwise distance over a strided subset of the pooled samples.
pub fn median_heuristic(clouds: &[Cloud]) -> f64 {
    const MAX_POINTS: usize = 400;
    let pooled: Vec<&[f64]> = clouds.iter().flat_map(|c| c.points()).collect();
    let stride = pooled.len().div_ceil(MAX_POINTS).max(1);
    let pts: Vec<&[f64]> = pooled.into_iter().step_by(stride).collect();
    let mut dists = Vec::with_capacity(pts.len() * pts.len() / 2);
    for a in 0..pts.len() {
        for b in a + 1..pts.len() {
            let d: f64 = pts[a].iter().zip(pts[b]).map(|(x, y)| (x - y) * (x - y)).sum();
            dists.push(d.sqrt());
        }
    }
    let m = median(dists);
    if m.is_finite() && m > 0.0 {
        m
    } else {
        1.0
    }
}

/// Kernel template and input representation for a method.
pub fn template(method: Method, train: &[Cloud], settings: &BenchSettings, seed: u64) -> Result<KernelSpec> {
    let d = train.first().map(Cloud::dim).ok_or_else(|| Error::input("empty training set"))?;
    let p = settings.p;
    match method {
        Method::Reg | Method::Agg => KernelSpec::point(settings.point_family, 1.0, 1.0),
        Method::Wgp => KernelSpec::wgp(1.0, 1.0, p),
        Method::Swgp => KernelSpec::swgp(1.0, 1.0, p, settings.swgp_slices, seed),
        Method::Pwa => KernelSpec::pwa(1.0, vec![1.0; d], p),
        Method::Pcpwa => {
            let m = settings.pcpwa_components.unwrap_or(d);
            KernelSpec::pcpwa(1.0, vec![1.0; m], pca_directions(train, m)?, p)
        }
        Method::Uigp => KernelSpec::uigp(1.0, vec![1.0; d]),
        Method::Kme => KernelSpec::kme(1.0, median_heuristic(train)),
        Method::Mmd => KernelSpec::mmd(1.0, 1.0, median_heuristic(train)),
    }
}

/// How `method` sees each cloud: its mean, Gaussian summary or the cloud.
pub fn inputs(method: Method, clouds: &[Cloud]) -> Vec<Measure> {
    clouds
        .iter()
        .map(|c| match method {
            Method::Reg => Measure::Point(c.mean()),
            Method::Uigp => Measure::Gaussian(gaussian_summary(c)),
            _ => Measure::Cloud(c.clone()),
        })
        .collect()
}

enum Predictor {
    Single(GpModel),
    Replicates(Vec<GpModel>),
}

/// A fitted method, with the response scaling it was trained under.
pub struct FittedMethod {
    pub method: Method,
    /// Hyperparameters on standardized responses; replicate 0 for `agg`.
    pub fitted: Fitted,
    pub y_mean: f64,
    pub y_scale: f64,
    pub fit_seconds: f64,
    pub jitter_escalations: u32,
    predictor: Predictor,
}

fn standardize(y: &[f64]) -> (Vec<f64>, f64, f64) {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let scale = if var > 0.0 { var.sqrt() } else { 1.0 };
    (y.iter().map(|v| (v - mean) / scale).collect(), mean, scale)
}

/// Searches hyperparameters and fits `method` on `train`.
pub fn fit_method(method: Method, train: &Dataset, settings: &BenchSettings, seed: u64) -> Result<FittedMethod> {
    let clouds = train.clouds();
    let (y, y_mean, y_scale) = standardize(&train.responses());
    let spec = template(method, &clouds, settings, seed)?;
    let search = SearchConfig {
        seed,
        ..settings.search.clone()
    };
    let start = Instant::now();
    let (fitted, predictor) = if method == Method::Agg {
        let j = clouds[0].len();
        if clouds.iter().any(|c| c.len() != j) {
            return Err(Error::unsupported("aggregated GP needs equal replicate counts"));
        }
        let rep_search = SearchConfig {
            restarts: settings.agg_restarts,
            ..search
        };
        let fits: Vec<(Fitted, GpModel)> = (0..j)
            .into_par_iter()
            .map(|r| {
                let x: Vec<Measure> = clouds.iter().map(|c| Measure::Point(c.point(r).to_vec())).collect();
                let cfg = SearchConfig {
                    seed: seed.wrapping_add(r as u64),
                    ..rep_search.clone()
                };
                let f = optimize_hyperparams(&x, &y, &spec, &cfg)?;
                let model = f.model(&x, &y)?;
                Ok((f, model))
            })
            .collect::<Result<_>>()?;
        let first = fits[0].0.clone();
        (first, Predictor::Replicates(fits.into_iter().map(|f| f.1).collect()))
    } else {
        let x = inputs(method, &clouds);
        let f = optimize_hyperparams(&x, &y, &spec, &search)?;
        let model = f.model(&x, &y)?;
        (f, Predictor::Single(model))
    };
    let fit_seconds = if settings.timing { start.elapsed().as_secs_f64() } else { 0.0 };
    let jitter_escalations = match &predictor {
        Predictor::Single(m) => m.jitter_escalations(),
        Predictor::Replicates(ms) => ms.iter().map(GpModel::jitter_escalations).sum(),
    };
    Ok(FittedMethod {
        method,
        fitted,
        y_mean,
        y_scale,
        fit_seconds,
        jitter_escalations,
        predictor,
    })
}

impl FittedMethod {
    /// Predictive summaries in the original response units.
    pub fn predict(&self, test: &[Cloud]) -> Result<Vec<PredictiveSummary>> {
        let raw = match &self.predictor {
            Predictor::Single(m) => m.predict_many(&inputs(self.method, test))?,
            Predictor::Replicates(models) => {
                let j = models.len();
                if test.iter().any(|c| c.len() != j) {
                    return Err(Error::unsupported("test clouds need one sample per replicate"));
                }
                let per_rep: Vec<Vec<PredictiveSummary>> = models
                    .par_iter()
                    .enumerate()
                    .map(|(r, m)| {
                        let x: Vec<Measure> = test.iter().map(|c| Measure::Point(c.point(r).to_vec())).collect();
                        m.predict_many(&x)
                    })
                    .collect::<Result<_>>()?;
                (0..test.len())
                    .map(|i| combine_replicates(per_rep.iter().map(|r| r[i])))
                    .collect()
            }
        };
        let s2 = self.y_scale * self.y_scale;
        Ok(raw
            .into_iter()
            .map(|p| PredictiveSummary {
                mean: self.y_mean + self.y_scale * p.mean,
                variance: p.variance * s2,
                noise_variance: p.noise_variance * s2,
                clamped: p.clamped,
            })
            .collect())
    }

    /// Flat summary: hyperparameters in standardized units plus the scaling.
    pub fn summary(&self) -> KvRecord {
        let spec = &self.fitted.spec;
        let mut r = KvRecord::default();
        r.push("method", self.method.tag());
        r.push("family", spec.family.name());
        r.push_f64("amplitude", spec.amplitude);
        r.push("n_scales", spec.scales.len().to_string());
        for (i, s) in spec.scales.iter().enumerate() {
            r.push_f64(&format!("scale_{}", i + 1), *s);
        }
        if let Some(b) = &spec.basis {
            for (i, v) in b.directions().iter().enumerate() {
                let parts: Vec<String> = v.iter().map(|x| format!("{x:.16e}")).collect();
                r.push(&format!("direction_{}", i + 1), parts.join(" "));
            }
        }
        r.push_f64("p", spec.p);
        r.push_f64("base_lengthscale", spec.base_lengthscale);
        if spec.family == Family::Swgp {
            r.push("slices", spec.slices.to_string());
            r.push("slice_seed", spec.slice_seed.to_string());
        }
        r.push_f64("noise_variance", self.fitted.noise);
        r.push_f64("log_marginal_likelihood", self.fitted.lml);
        r.push_f64("y_mean", self.y_mean);
        r.push_f64("y_scale", self.y_scale);
        r.push("jitter_escalations", self.jitter_escalations.to_string());
        r.push_f64("fit_seconds", self.fit_seconds);
        r
    }
}

/// WGP with `p = 1` fitted on unstandardized responses, for band certificates.
pub fn fit_certifiable(train: &Dataset, search: &SearchConfig) -> Result<GpModel> {
    let clouds = train.clouds();
    let y = train.responses();
    let spec = KernelSpec::wgp(1.0, 1.0, 1.0)?;
    let x = inputs(Method::Wgp, &clouds);
    optimize_hyperparams(&x, &y, &spec, search)?.model(&x, &y)
}

/// Scored predictions for one `(scenario, method, seed)` cell.
pub struct CellOutcome {
    pub report: MetricsReport,
    pub predictions: Vec<PredictiveSummary>,
    pub truths: Vec<f64>,
    pub fit: FittedMethod,
}

pub fn run_split(method: Method, train: &Dataset, test: &Dataset, settings: &BenchSettings, seed: u64) -> Result<CellOutcome> {
    let fit = fit_method(method, train, settings, seed)?;
    let predictions = fit.predict(&test.clouds())?;
    let truths = test.responses();
    let report = metrics::report(&predictions, &truths, settings.alpha)?;
    Ok(CellOutcome {
        report,
        predictions,
        truths,
        fit,
    })
}

/// Simulates both splits of `scenario` at `seed`, then runs `method`.
pub fn run_cell(scenario: &ScenarioConfig, method: Method, settings: &BenchSettings) -> Result<(Dataset, CellOutcome)> {
    let train = generate(scenario, Split::Train)?;
    let test = generate(scenario, Split::Test)?;
    let out = run_split(method, &train, &test, settings, scenario.seed)?;
    Ok((test, out))
}

/// One line of the long-format results table.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub scenario: String,
    pub method: Method,
    pub seed: u64,
    pub rmse: f64,
    pub coverage: f64,
    pub crps: f64,
    pub fit_seconds: f64,
    /// `ok` or the error tag of a failed cell.
    pub status: String,
}

impl ResultRow {
    pub fn from_outcome(scenario: &str, method: Method, seed: u64, outcome: &Result<CellOutcome>) -> Self {
        match outcome {
            Ok(o) => ResultRow {
                scenario: scenario.to_string(),
                method,
                seed,
                rmse: o.report.rmse,
                coverage: o.report.coverage,
                crps: o.report.mean_crps,
                fit_seconds: o.fit.fit_seconds,
                status: "ok".into(),
            },
            Err(e) => ResultRow {
                scenario: scenario.to_string(),
                method,
                seed,
                rmse: f64::NAN,
                coverage: f64::NAN,
                crps: f64::NAN,
                fit_seconds: 0.0,
                status: e.tag().into(),
            },
        }
    }
}

/// Seed-averaged metrics over successful cells.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub scenario: String,
    pub method: Method,
    pub n_ok: usize,
    pub n_failed: usize,
    pub rmse: f64,
    pub coverage: f64,
    pub crps: f64,
    pub fit_seconds: f64,
}

/// Groups rows by `(scenario, method)` in sorted order and averages them.
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut keys: Vec<(String, Method)> = rows.iter().map(|r| (r.scenario.clone(), r.method)).collect();
    keys.sort();
    keys.dedup();
    keys.into_iter()
        .map(|(scenario, method)| {
            let cell: Vec<&ResultRow> = rows.iter().filter(|r| r.scenario == scenario && r.method == method).collect();
            let ok: Vec<&&ResultRow> = cell.iter().filter(|r| r.status == "ok").collect();
            let n = ok.len();
            let avg = |f: fn(&ResultRow) -> f64| {
                if n == 0 {
                    f64::NAN
                } else {
                    ok.iter().map(|r| f(r)).sum::<f64>() / n as f64
                }
            };
            SummaryRow {
                rmse: avg(|r| r.rmse),
                coverage: avg(|r| r.coverage),
                crps: avg(|r| r.crps),
                fit_seconds: avg(|r| r.fit_seconds),
                n_failed: cell.len() - n,
                n_ok: n,
                scenario,
                method,
            }
        })
        .collect()
}

/// Runs `method` on `seeds` and averages the successful cells.
pub fn seed_average(scenario: &ScenarioConfig, method: Method, seeds: &[u64], settings: &BenchSettings) -> SummaryRow {
    let rows: Vec<ResultRow> = seeds
        .par_iter()
        .map(|&seed| {
            let cfg = ScenarioConfig {
                seed,
                ..scenario.clone()
            };
            let out = run_cell(&cfg, method, settings).map(|(_, o)| o);
            ResultRow::from_outcome(scenario.name.tag(), method, seed, &out)
        })
        .collect();
    summarize(&rows).remove(0)
}

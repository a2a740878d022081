//! Run configuration: an optional sectioned config file overlaid by flags.
//!
//! Recognised keys:
//!
//! ```text
//! alpha = 0.1           seed = 0           seeds = 10
//! [scenario]  n_train, n_test, samples_per_cloud, output_sd, eiv_target,
//!             eiv_noise_base, eiv_noise_slope, aniso_parallel_base,
//!             aniso_parallel_slope, aniso_perp, aniso_angle_deg,
//!             ackley_input_sd
//! [search]    restarts, max_iter, tol, fixed_noise
//! [<method>]  p, restarts, max_iter, slices (swgp), components (pcpwa),
//!             replicate_restarts (agg)
//! ```

use std::path::Path;

use anyhow::{bail, Context, Result};
use otgp::bench::{BenchSettings, Method};
use otgp::io::Config;
use otgp::scenarios::{EivTarget, ScenarioConfig, ScenarioName};

const TOP_KEYS: &[&str] = &["alpha", "seed", "seeds"];
const SCENARIO_KEYS: &[&str] = &[
    "n_train",
    "n_test",
    "samples_per_cloud",
    "output_sd",
    "eiv_target",
    "eiv_noise_base",
    "eiv_noise_slope",
    "aniso_parallel_base",
    "aniso_parallel_slope",
    "aniso_perp",
    "aniso_angle_deg",
    "ackley_input_sd",
];
const SEARCH_KEYS: &[&str] = &["restarts", "max_iter", "tol", "fixed_noise"];
const METHOD_KEYS: &[&str] = &["p", "restarts", "max_iter", "slices", "components", "replicate_restarts"];

/// Everything a command needs after merging the config file and flags.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub alpha: f64,
    pub seed: u64,
    pub seeds: usize,
    pub timing: bool,
    samples_per_cloud: Option<usize>,
    file: Config,
}

/// Flag values that override the file; `None` keeps the file or default.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub alpha: Option<f64>,
    pub seed: Option<u64>,
    pub seeds: Option<usize>,
    pub samples_per_cloud: Option<usize>,
    pub no_timing: bool,
}

fn check_keys(file: &Config) -> Result<()> {
    let method_tags: Vec<&str> = Method::ALL.iter().map(|m| m.tag()).collect();
    for (section, allowed) in [("", TOP_KEYS), ("scenario", SCENARIO_KEYS), ("search", SEARCH_KEYS)] {
        for (k, _) in file.section(section) {
            if !allowed.contains(&k) {
                bail!("config: unknown key '{k}' in section [{section}]");
            }
        }
    }
    for tag in &method_tags {
        for (k, _) in file.section(tag) {
            if !METHOD_KEYS.contains(&k) {
                bail!("config: unknown key '{k}' in section [{tag}]");
            }
        }
    }
    Ok(())
}

fn get<T: std::str::FromStr>(file: &Config, section: &str, key: &str) -> Result<Option<T>> {
    Ok(file.get_parsed(section, key)?)
}

impl RunConfig {
    pub fn load(path: Option<&Path>, flags: &Overrides) -> Result<Self> {
        let file = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                Config::parse(&text)?
            }
            None => Config::default(),
        };
        check_keys(&file)?;
        let alpha = flags.alpha.or(get(&file, "", "alpha")?).unwrap_or(0.1);
        if !(alpha > 0.0 && alpha < 1.0) {
            bail!("alpha must lie in (0, 1), got {alpha}");
        }
        let seeds = flags.seeds.or(get(&file, "", "seeds")?).unwrap_or(1);
        if seeds == 0 {
            bail!("seeds must be at least 1");
        }
        Ok(RunConfig {
            alpha,
            seed: flags.seed.or(get(&file, "", "seed")?).unwrap_or(0),
            seeds,
            timing: !flags.no_timing,
            samples_per_cloud: flags.samples_per_cloud,
            file,
        })
    }

    /// Seeds `seed, seed + 1, ..` for multi-seed runs.
    pub fn seed_list(&self) -> Vec<u64> {
        (0..self.seeds as u64).map(|k| self.seed + k).collect()
    }

    pub fn scenario(&self, name: ScenarioName, seed: u64) -> Result<ScenarioConfig> {
        let f = &self.file;
        let s = "scenario";
        let mut cfg = ScenarioConfig::new(name, seed);
        if let Some(v) = get(f, s, "n_train")? {
            cfg.n_train = v;
        }
        if let Some(v) = get(f, s, "n_test")? {
            cfg.n_test = v;
        }
        if let Some(v) = self.samples_per_cloud.or(get(f, s, "samples_per_cloud")?) {
            cfg.samples_per_cloud = v;
        }
        let p = &mut cfg.params;
        if let Some(v) = get(f, s, "output_sd")? {
            p.output_sd = v;
        }
        if let Some(v) = f.get(s, "eiv_target") {
            p.eiv_target = match v {
                "oscillatory" => EivTarget::Oscillatory,
                "rational" => EivTarget::Rational,
                other => bail!("eiv_target must be 'oscillatory' or 'rational', got '{other}'"),
            };
        }
        if let Some(v) = get(f, s, "eiv_noise_base")? {
            p.eiv_noise.0 = v;
        }
        if let Some(v) = get(f, s, "eiv_noise_slope")? {
            p.eiv_noise.1 = v;
        }
        if let Some(v) = get(f, s, "aniso_parallel_base")? {
            p.aniso_parallel.0 = v;
        }
        if let Some(v) = get(f, s, "aniso_parallel_slope")? {
            p.aniso_parallel.1 = v;
        }
        if let Some(v) = get(f, s, "aniso_perp")? {
            p.aniso_perp = v;
        }
        if let Some(v) = get(f, s, "aniso_angle_deg")? {
            p.aniso_angle_deg = v;
        }
        if let Some(v) = get(f, s, "ackley_input_sd")? {
            p.ackley_input_sd = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Shared settings with the `[search]` and `[<method>]` overrides applied.
    pub fn settings(&self, method: Method) -> Result<BenchSettings> {
        let f = &self.file;
        let mut st = BenchSettings {
            alpha: self.alpha,
            timing: self.timing,
            ..BenchSettings::default()
        };
        for section in ["search", method.tag()] {
            if let Some(v) = get(f, section, "restarts")? {
                st.search.restarts = v;
            }
            if let Some(v) = get(f, section, "max_iter")? {
                st.search.max_iter = v;
            }
        }
        if let Some(v) = get(f, "search", "tol")? {
            st.search.tol = v;
        }
        if let Some(v) = get::<f64>(f, "search", "fixed_noise")? {
            st.search.fixed_noise = Some(v);
        }
        let m = method.tag();
        if let Some(v) = get(f, m, "p")? {
            st.p = v;
        }
        if let Some(v) = get(f, m, "slices")? {
            st.swgp_slices = v;
        }
        if let Some(v) = get::<usize>(f, m, "components")? {
            st.pcpwa_components = Some(v);
        }
        if let Some(v) = get(f, m, "replicate_restarts")? {
            st.agg_restarts = v;
        }
        if st.search.restarts == 0 {
            bail!("restarts must be at least 1");
        }
        Ok(st)
    }
}

/// Parses a comma-separated list with `all` expanding to every value.
pub fn parse_list<T: std::str::FromStr<Err = otgp::Error> + Copy>(text: &str, all: &[T]) -> Result<Vec<T>> {
    if text.trim().eq_ignore_ascii_case("all") {
        return Ok(all.to_vec());
    }
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        out.push(part.parse::<T>()?);
    }
    if out.is_empty() {
        bail!("empty list");
    }
    Ok(out)
}

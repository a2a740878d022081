//! Command implementations. Every output is written in a canonical order,
//! so concurrency never changes file bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use otgp::bench::{self, CellOutcome, Method, ResultRow};
use otgp::bounds::{self, MeasureClassSpec};
use otgp::gp::PredictiveSummary;
use otgp::io;
use otgp::normal;
use otgp::scenarios::{generate, Dataset, ScenarioName, Split};
use rayon::prelude::*;

use crate::config::{parse_list, Overrides, RunConfig};

/// A pool capped by `OTGP_THREADS` when set, else rayon's default size.
pub fn thread_pool(threads: Option<&str>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        let n: usize = t
            .trim()
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .with_context(|| format!("OTGP_THREADS must be a positive integer, got '{t}'"))?;
        b = b.num_threads(n);
    }
    Ok(b.build()?)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn read_csv(path: &Path) -> Result<Dataset> {
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    io::read_dataset(std::io::BufReader::new(file)).with_context(|| format!("reading {}", path.display()))
}

pub fn simulate(out_dir: &Path, config: Option<&Path>, flags: &Overrides, scenario: &str) -> Result<ExitCode> {
    let run = RunConfig::load(config, flags)?;
    let name: ScenarioName = scenario.parse()?;
    let cfg = run.scenario(name, run.seed)?;
    let train = generate(&cfg, Split::Train)?;
    let test = generate(&cfg, Split::Test)?;
    ensure_dir(out_dir)?;
    for (file, ds) in [("train.csv", &train), ("test.csv", &test)] {
        let mut buf = Vec::new();
        io::write_dataset(&mut buf, ds)?;
        write_file(&out_dir.join(file), &buf)?;
    }
    let mut buf = Vec::new();
    io::write_latents(&mut buf, &[("train", &train), ("test", &test)])?;
    write_file(&out_dir.join("latent.csv"), &buf)?;
    Ok(ExitCode::SUCCESS)
}

pub fn fit(out_dir: &Path, config: Option<&Path>, flags: &Overrides, method: &str, train: &Path, out: &str) -> Result<ExitCode> {
    let run = RunConfig::load(config, flags)?;
    let method: Method = method.parse()?;
    let data = read_csv(train)?;
    let settings = run.settings(method)?;
    let fitted = bench::fit_method(method, &data, &settings, run.seed)?;
    ensure_dir(out_dir)?;
    write_file(&out_dir.join(out), fitted.summary().render().as_bytes())?;
    Ok(ExitCode::SUCCESS)
}

/// Per-test-point plot data for one benchmark cell.
fn prediction_csv(test: &Dataset, o: &CellOutcome, alpha: f64) -> String {
    let z = normal::two_sided_z(alpha);
    let mut s = String::from("group_id,y,mean,latent_sd,total_sd,lower,upper,covered\n");
    for ((g, p), y) in test.groups.iter().zip(&o.predictions).zip(&o.truths) {
        let sd = p.total_sd();
        let (lo, hi) = (p.mean - z * sd, p.mean + z * sd);
        let covered = (y - p.mean).abs() <= z * sd;
        writeln!(s, "{},{},{},{},{},{},{},{}", g.id, y, p.mean, p.variance.sqrt(), sd, lo, hi, covered as u8).unwrap();
    }
    s
}

fn results_csv(rows: &[ResultRow]) -> String {
    let mut s = String::from("scenario,method,seed,rmse,coverage,crps,fit_seconds,status\n");
    for r in rows {
        writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.scenario, r.method, r.seed, r.rmse, r.coverage, r.crps, r.fit_seconds, r.status
        )
        .unwrap();
    }
    s
}

fn summary_csv(rows: &[ResultRow]) -> String {
    let mut s = String::from("scenario,method,n_ok,n_failed,rmse,coverage,crps,fit_seconds\n");
    for r in bench::summarize(rows) {
        writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.scenario, r.method, r.n_ok, r.n_failed, r.rmse, r.coverage, r.crps, r.fit_seconds
        )
        .unwrap();
    }
    s
}

pub fn benchmark(out_dir: &Path, config: Option<&Path>, flags: &Overrides, scenarios: &str, methods: &str) -> Result<ExitCode> {
    let run = RunConfig::load(config, flags)?;
    let scenarios = parse_list(scenarios, &ScenarioName::ALL)?;
    let methods = parse_list(methods, &Method::ALL)?;
    let seeds = run.seed_list();

    let mut cells = Vec::new();
    for &sc in &scenarios {
        for &m in &methods {
            for &seed in &seeds {
                cells.push((sc, m, seed));
            }
        }
    }
    // Validate configuration up front so bad settings are fatal, not rows.
    for &sc in &scenarios {
        run.scenario(sc, 0)?;
    }
    for &m in &methods {
        run.settings(m)?;
    }

    let pred_dir = out_dir.join("predictions");
    ensure_dir(&pred_dir)?;
    let outcomes: Vec<(ResultRow, Option<(PathBuf, String)>)> = cells
        .par_iter()
        .map(|&(sc, m, seed)| {
            let cfg = run.scenario(sc, seed)?;
            let settings = run.settings(m)?;
            let out = bench::run_cell(&cfg, m, &settings);
            let plot = out.as_ref().ok().map(|(test, o)| {
                let name = format!("{}_{}_seed{}.csv", sc.tag(), m.tag(), seed);
                (pred_dir.join(name), prediction_csv(test, o, run.alpha))
            });
            if let Err(e) = &out {
                eprintln!("warning: {} / {} / seed {seed} failed: {e}", sc.tag(), m.tag());
            }
            let out = out.map(|(_, o)| o);
            Ok((ResultRow::from_outcome(sc.tag(), m, seed, &out), plot))
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(outcomes.len());
    for (row, plot) in outcomes {
        if let Some((path, text)) = plot {
            write_file(&path, text.as_bytes())?;
        }
        rows.push(row);
    }
    rows.sort_by(|a, b| (&a.scenario, a.method, a.seed).cmp(&(&b.scenario, b.method, b.seed)));
    write_file(&out_dir.join("results.csv"), results_csv(&rows).as_bytes())?;
    write_file(&out_dir.join("summary.csv"), summary_csv(&rows).as_bytes())?;
    if rows.iter().any(|r| r.status != "ok") {
        return Ok(ExitCode::from(3));
    }
    Ok(ExitCode::SUCCESS)
}

pub struct CertifyRequest {
    pub train: PathBuf,
    pub test: PathBuf,
    pub class: MeasureClassSpec,
    pub tau: f64,
    pub delta: f64,
    pub l_f: f64,
}

fn verdicts_csv(test: &Dataset, preds: &[PredictiveSummary], cert: &bounds::BandCertificate, z: f64) -> String {
    let mut s = String::from("group_id,mean,latent_sd,band_half_width,interval_half_width,holds,margin\n");
    for (g, p) in test.groups.iter().zip(preds) {
        let sd = p.variance.sqrt();
        let v = bounds::conservative_condition(z, cert, sd);
        writeln!(
            s,
            "{},{},{},{},{},{},{}",
            g.id,
            p.mean,
            sd,
            cert.half_width(sd),
            z * sd,
            v.holds as u8,
            v.margin
        )
        .unwrap();
    }
    s
}

pub fn certify(out_dir: &Path, config: Option<&Path>, flags: &Overrides, req: &CertifyRequest) -> Result<ExitCode> {
    let run = RunConfig::load(config, flags)?;
    let train = read_csv(&req.train)?;
    let test = read_csv(&req.test)?;
    if train.dim() != 1 || test.dim() != 1 {
        bail!("unsupported case: band certificates cover 1D inputs only");
    }
    let settings = run.settings(Method::Wgp)?;
    let search = otgp::gp::SearchConfig {
        seed: run.seed,
        ..settings.search
    };
    let model = bench::fit_certifiable(&train, &search)?;
    let cert = bounds::certify(&model, &req.class, req.tau, req.delta, req.l_f)?;
    let inputs = bench::inputs(Method::Wgp, &test.clouds());
    let preds = model.predict_many(&inputs)?;
    let z = normal::two_sided_z(run.alpha);

    let mut record = cert.to_record();
    record.push_f64("z", z);
    record.push_f64("amplitude", model.spec().amplitude);
    record.push_f64("scale", model.spec().scales[0]);
    record.push_f64("noise_variance", model.noise());
    ensure_dir(out_dir)?;
    write_file(&out_dir.join("certificate.txt"), record.render().as_bytes())?;
    write_file(&out_dir.join("verdicts.csv"), verdicts_csv(&test, &preds, &cert, z).as_bytes())?;
    Ok(ExitCode::SUCCESS)
}

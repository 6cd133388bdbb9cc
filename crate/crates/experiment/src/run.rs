//! Sweep execution, CSV rows and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::Context;
use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use spin_thimble::estimators::{phase_statistic, reweighted_expectation, EstimateReport, Reweightable};
use spin_thimble::exact::Spectrum;
use spin_thimble::sampler::{pi_qmc_chain, spin_qmc_chain, thimble_chain};

use crate::config::{ExperimentConfig, Method};
use crate::seed::cell_seed;

/// Environment variable holding the worker count.
pub const THREADS_ENV: &str = "SPIN_THIMBLE_THREADS";

pub const STATUS_OK: &str = "ok";

/// One CSV line: a single `(method, β, repetition)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub experiment: String,
    pub method: String,
    pub beta: f64,
    pub repetition: usize,
    pub seed: u64,
    pub energy_re: Option<f64>,
    pub energy_im: Option<f64>,
    pub energy_exact: Option<f64>,
    pub phase_abs: Option<f64>,
    pub acceptance: Option<f64>,
    pub n_samples: usize,
    pub status: String,
    pub wall_ms: u64,
}

impl Row {
    pub fn is_ok(&self) -> bool {
        self.status == STATUS_OK
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub method: Method,
    pub beta_index: usize,
    pub beta: f64,
    pub repetition: usize,
    pub seed: u64,
}

/// Every cell of the sweep in output order: methods as configured, then β,
/// then repetition. Exact cells have a single repetition.
pub fn cells(config: &ExperimentConfig) -> Vec<Cell> {
    let mut out = Vec::new();
    for &method in &config.methods {
        let reps = if method.is_stochastic() { config.repetitions } else { 1 };
        for (beta_index, &beta) in config.betas.iter().enumerate() {
            for repetition in 0..reps {
                let seed = cell_seed(config.seed, method, beta_index, repetition);
                out.push(Cell { method, beta_index, beta, repetition, seed });
            }
        }
    }
    out
}

#[derive(Debug, Clone, Default)]
struct Outcome {
    energy: Option<(f64, f64)>,
    phase: Option<f64>,
    acceptance: Option<f64>,
    n_samples: usize,
    status: String,
}

fn from_samples<S: Reweightable>(samples: &[S], acceptance: f64) -> Outcome {
    let mut out = Outcome {
        phase: Some(phase_statistic(samples)),
        acceptance: Some(acceptance),
        n_samples: samples.len(),
        ..Outcome::default()
    };
    match reweighted_expectation(samples) {
        Ok(EstimateReport { observable_mean, autocorrelation_time, .. }) => {
            log::debug!("integrated autocorrelation time {autocorrelation_time:.2}");
            out.energy = Some((observable_mean.re, observable_mean.im));
            out.status = STATUS_OK.into();
        }
        Err(e) => out.status = format!("error: {e}"),
    }
    out
}

fn run_cell(config: &ExperimentConfig, spectrum: Option<&Spectrum>, cell: &Cell) -> anyhow::Result<Outcome> {
    let beta = cell.beta;
    match cell.method {
        Method::Thimble => {
            let params = config.thimble_params(beta, cell.seed)?;
            let chain = thimble_chain(&params, &mut params.rng())?;
            Ok(from_samples(&chain.samples, chain.stats.acceptance_rate()))
        }
        Method::SpinQmc => {
            let params = config.spin_qmc_params(beta, cell.seed)?;
            let chain = spin_qmc_chain(&params, &mut params.rng())?;
            Ok(from_samples(&chain.samples, chain.stats.acceptance_rate()))
        }
        Method::PiQmc => {
            let mut rng = ChaCha8Rng::seed_from_u64(cell.seed);
            let chain =
                pi_qmc_chain(&config.spec()?, beta, config.num_slices, config.n_therm, config.n_samples, &mut rng)?;
            Ok(from_samples(&chain.samples, chain.stats.acceptance_rate()))
        }
        Method::Exact => {
            let spectrum = spectrum.context("exact spectrum unavailable")?;
            let e = spectrum.thermal_energy(beta)?;
            Ok(Outcome {
                energy: Some((e, 0.0)),
                phase: Some(1.0),
                acceptance: None,
                n_samples: 0,
                status: STATUS_OK.into(),
            })
        }
    }
}

/// Evaluates one cell; failures become a status string instead of an error.
pub fn execute_cell(config: &ExperimentConfig, spectrum: Option<&Spectrum>, exact: Option<f64>, cell: &Cell) -> Row {
    let start = Instant::now();
    let outcome = run_cell(config, spectrum, cell).unwrap_or_else(|e| Outcome {
        status: format!("error: {e:#}"),
        ..Outcome::default()
    });
    let wall_ms = start.elapsed().as_millis() as u64;
    if outcome.status != STATUS_OK {
        warn!("{} beta={} rep={}: {}", cell.method, cell.beta, cell.repetition, outcome.status);
    } else {
        info!("{} beta={} rep={} done in {wall_ms} ms", cell.method, cell.beta, cell.repetition);
    }
    Row {
        experiment: config.name.clone(),
        method: cell.method.name().into(),
        beta: cell.beta,
        repetition: cell.repetition,
        seed: cell.seed,
        energy_re: outcome.energy.map(|e| e.0),
        energy_im: outcome.energy.map(|e| e.1),
        energy_exact: exact,
        phase_abs: outcome.phase,
        acceptance: outcome.acceptance,
        n_samples: outcome.n_samples,
        status: outcome.status,
        wall_ms,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub method: Method,
    pub beta_index: usize,
    pub beta: f64,
    pub repetition: usize,
    pub seed: u64,
    pub status: String,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: ExperimentConfig,
    pub package: String,
    pub version: String,
    pub threads: usize,
    pub started_unix_s: u64,
    pub exact_wall_ms: u64,
    pub total_wall_ms: u64,
    pub csv: PathBuf,
    pub cells: Vec<CellRecord>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub rows: Vec<Row>,
    pub manifest: Manifest,
    pub csv_path: PathBuf,
    pub manifest_path: PathBuf,
}

/// `results/foo.csv` → `results/foo.manifest.json`.
pub fn manifest_path(csv: &Path) -> PathBuf {
    csv.with_extension("manifest.json")
}

/// Worker count from [`THREADS_ENV`], or rayon's default.
pub fn thread_count() -> anyhow::Result<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => {
            let n: usize = v.trim().parse().with_context(|| format!("{THREADS_ENV}={v} is not a count"))?;
            anyhow::ensure!(n >= 1, "{THREADS_ENV} must be at least 1");
            Ok(n)
        }
        Err(_) => Ok(rayon::current_num_threads()),
    }
}

/// Exact spectrum when the Hilbert space fits under the cap.
pub fn exact_spectrum(config: &ExperimentConfig) -> anyhow::Result<Spectrum> {
    Ok(Spectrum::compute(&config.spec()?, config.dimension_cap)?)
}

/// Runs every cell and returns the rows in [`cells`] order, without touching
/// the filesystem.
pub fn execute(config: &ExperimentConfig, threads: usize) -> anyhow::Result<(Vec<Row>, Manifest)> {
    config.validate()?;
    let started = Instant::now();
    let started_unix_s = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);

    let spectrum = match exact_spectrum(config) {
        Ok(s) => Some(s),
        Err(e) => {
            warn!("no exact reference: {e:#}");
            None
        }
    };
    let exact_wall_ms = started.elapsed().as_millis() as u64;
    let exact: Vec<Option<f64>> = config
        .betas
        .iter()
        .map(|&b| spectrum.as_ref().and_then(|s| s.thermal_energy(b).ok()))
        .collect();

    let cells = cells(config);
    info!("{}: {} cells on {threads} threads", config.name, cells.len());
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
    let rows: Vec<Row> = pool.install(|| {
        cells
            .par_iter()
            .map(|c| execute_cell(config, spectrum.as_ref(), exact[c.beta_index], c))
            .collect()
    });

    let manifest = Manifest {
        config: config.clone(),
        package: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        threads,
        started_unix_s,
        exact_wall_ms,
        total_wall_ms: started.elapsed().as_millis() as u64,
        csv: config.output.clone(),
        cells: cells
            .iter()
            .zip(&rows)
            .map(|(c, r)| CellRecord {
                method: c.method,
                beta_index: c.beta_index,
                beta: c.beta,
                repetition: c.repetition,
                seed: c.seed,
                status: r.status.clone(),
                wall_ms: r.wall_ms,
            })
            .collect(),
    };
    Ok((rows, manifest))
}

/// Runs the sweep and writes the CSV to `config.output` plus the manifest
/// next to it.
pub fn run(config: &ExperimentConfig) -> anyhow::Result<RunOutput> {
    let (rows, manifest) = execute(config, thread_count()?)?;
    let csv_path = config.output.clone();
    if let Some(dir) = csv_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    write_csv(&csv_path, &rows)?;
    let manifest_path = manifest_path(&csv_path);
    fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?)
        .with_context(|| format!("writing {}", manifest_path.display()))?;
    Ok(RunOutput { rows, manifest, csv_path, manifest_path })
}

pub fn write_csv(path: &Path, rows: &[Row]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(path: &Path) -> anyhow::Result<Vec<Row>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let rows = r.deserialize().collect::<Result<Vec<Row>, _>>()?;
    Ok(rows)
}

pub fn read_manifest(path: &Path) -> anyhow::Result<Manifest> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_str(&text)?)
}

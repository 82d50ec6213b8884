//! Synthetic regression data and the 2BG-vs-3BG experiment grid.
//!
//! Designs have iid standard normal entries, standardized per column. The
//! first `max(1, floor(p/5))` true coefficients are t₂ draws and the rest are
//! exactly zero; the response adds standard normal noise.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use faer::Mat;
use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{aggregate, chain_report, EfficiencyReport};
use crate::error::{Error, Result};
use crate::model::{mat_vec, standardize_columns, CenteredDesign, Dataset, PriorConfig};
use crate::rand_dist::{derive_seed, draw_student_t2, RngStream};
use crate::samplers::{run_chain, SamplerConfig, SamplerKind};

pub const DEFAULT_RATIOS: [f64; 10] = [0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 2.0, 3.0, 4.0, 5.0];

const TAG_DATA: u64 = 0xD47A;
const TAG_CHAIN: u64 = 0xC4A1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub n: usize,
    pub ratios: Vec<f64>,
    pub datasets_per_combo: usize,
    pub prior: PriorConfig,
    pub chains: usize,
    pub iterations: usize,
    pub burn_in_fraction: f64,
    pub base_seed: u64,
}

impl SimSpec {
    pub fn new(n: usize, prior: PriorConfig, base_seed: u64) -> Self {
        Self {
            n,
            ratios: DEFAULT_RATIOS.to_vec(),
            datasets_per_combo: 10,
            prior,
            chains: 6,
            iterations: 15_000,
            burn_in_fraction: 0.1,
            base_seed,
        }
    }

    /// `round(ratio * n)`.
    pub fn p_for(&self, ratio: f64) -> usize {
        (ratio * self.n as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 3 {
            return Err(Error::InvalidParameter(format!("n must be >= 3, got {}", self.n)));
        }
        if self.ratios.is_empty() {
            return Err(Error::InvalidParameter("ratios must not be empty".into()));
        }
        for &r in &self.ratios {
            if !(r > 0.0 && r.is_finite()) || self.p_for(r) < 1 {
                return Err(Error::InvalidParameter(format!("ratio {r} does not give p >= 1 at n = {}", self.n)));
            }
        }
        if self.datasets_per_combo == 0 || self.chains == 0 {
            return Err(Error::InvalidParameter("datasets and chains must be >= 1".into()));
        }
        self.prior.validate(None)?;
        SamplerConfig {
            burn_in_fraction: self.burn_in_fraction,
            ..SamplerConfig::new(SamplerKind::TwoBlock, self.prior.clone(), self.iterations, 0)
        }
        .validate(1)
    }
}

/// `n x p` design with iid N(0, 1) rows, standardized. A degenerate column
/// (probability zero) triggers up to three fresh draws.
pub fn generate_design(n: usize, p: usize, rng: &mut RngStream) -> Result<Mat<f64>> {
    if n < 3 || p < 1 {
        return Err(Error::InvalidParameter(format!("need n >= 3 and p >= 1, got ({n}, {p})")));
    }
    let mut last = None;
    for _ in 0..4 {
        let raw = Mat::from_fn(n, p, |_, _| rng.standard_normal());
        match standardize_columns(raw.as_ref()) {
            Ok(x) => return Ok(x),
            Err(e @ Error::DegenerateColumn(_)) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("loop ran"))
}

/// Number of nonzero true coefficients, `max(1, floor(p/5))`.
pub fn nonzero_count(p: usize) -> usize {
    (p / 5).max(1)
}

pub fn generate_coefficients(p: usize, rng: &mut RngStream) -> Vec<f64> {
    let k = nonzero_count(p).min(p);
    let mut beta = vec![0.0; p];
    for b in beta.iter_mut().take(k) {
        *b = draw_student_t2(rng);
    }
    beta
}

/// `y = X beta_star + eps` with standard normal `eps`.
pub fn generate_response(x: &Mat<f64>, beta_star: &[f64], rng: &mut RngStream) -> Result<Vec<f64>> {
    if x.ncols() != beta_star.len() {
        return Err(Error::InvalidInput(format!(
            "design has {} columns but beta_star has {} entries",
            x.ncols(),
            beta_star.len()
        )));
    }
    let mut y = mat_vec(x.as_ref(), beta_star);
    for yi in y.iter_mut() {
        *yi += rng.standard_normal();
    }
    Ok(y)
}

/// One simulated dataset together with its true coefficients.
#[derive(Clone, Debug)]
pub struct SimulatedData {
    pub dataset: Dataset,
    pub beta_star: Vec<f64>,
}

pub fn simulate_dataset(n: usize, p: usize, rng: &mut RngStream) -> Result<SimulatedData> {
    let x = generate_design(n, p, rng)?;
    let beta_star = generate_coefficients(p, rng);
    let y = generate_response(&x, &beta_star, rng)?;
    Ok(SimulatedData { dataset: Dataset::new(y, x, None)?, beta_star })
}

fn prior_code(prior: &PriorConfig) -> u64 {
    match prior {
        PriorConfig::SpikeSlab(_) => 1,
        PriorConfig::Lasso { .. } => 2,
    }
}

fn sampler_code(kind: SamplerKind) -> u64 {
    match kind {
        SamplerKind::TwoBlock => 2,
        SamplerKind::ThreeBlock => 3,
    }
}

pub fn dataset_seed(spec: &SimSpec, p: usize, dataset: usize) -> u64 {
    derive_seed(spec.base_seed, &[TAG_DATA, prior_code(&spec.prior), spec.n as u64, p as u64, dataset as u64])
}

pub fn chain_seed(spec: &SimSpec, p: usize, dataset: usize, chain: usize, sampler: SamplerKind) -> u64 {
    derive_seed(
        spec.base_seed,
        &[
            TAG_CHAIN,
            prior_code(&spec.prior),
            spec.n as u64,
            p as u64,
            dataset as u64,
            chain as u64,
            sampler_code(sampler),
        ],
    )
}

/// One row of `results.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub n: usize,
    pub p: usize,
    pub ratio: f64,
    pub prior: String,
    pub sampler: SamplerKind,
    pub mean_rho1: f64,
    /// Timing dependent; NaN when no chain finished stably.
    pub mean_neff_per_sec: f64,
    pub chains: usize,
    pub iterations: usize,
    pub datasets: usize,
    pub unstable_chains: usize,
}

/// Per-chain record kept alongside the aggregated rows.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChainRecord {
    pub p: usize,
    pub dataset: usize,
    pub chain: usize,
    pub sampler: SamplerKind,
    pub seed: u64,
    pub report: Option<EfficiencyReport>,
    pub unstable: Option<String>,
}

#[derive(Clone, Debug, Default)]
pub struct ExperimentResult {
    pub rows: Vec<ExperimentRow>,
    pub chains: Vec<ChainRecord>,
}

impl ExperimentResult {
    pub fn unstable(&self) -> bool {
        self.rows.iter().any(|r| r.unstable_chains > 0)
    }

    pub fn row(&self, p: usize, sampler: SamplerKind) -> Option<&ExperimentRow> {
        self.rows.iter().find(|r| r.p == p && r.sampler == sampler)
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Concurrent chains; 0 uses every available core.
    pub workers: usize,
    /// Where `results.csv`, `runs/` and plot data go. Nothing is written
    /// when absent.
    pub out_dir: Option<PathBuf>,
    pub plot_data: bool,
    pub record_beta: bool,
    /// Echoed into every chain sidecar.
    pub run_config: Option<serde_json::Value>,
}


/// Runs every sampler on `datasets_per_combo` shared datasets per ratio,
/// `chains` chains each, and averages `rho1` and `n_eff / T` over all chains
/// of a (ratio, sampler) cell.
pub fn run_experiment(spec: &SimSpec, opts: &RunOptions) -> Result<ExperimentResult> {
    spec.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("cannot build worker pool: {e}")))?;
    let runs_dir = match &opts.out_dir {
        Some(dir) => {
            let runs = dir.join("runs");
            fs::create_dir_all(&runs)?;
            Some(runs)
        }
        None => None,
    };

    let mut result = ExperimentResult::default();
    for &ratio in &spec.ratios {
        let p = spec.p_for(ratio);
        info!("{} n={} p={} ({} datasets x {} chains)", spec.prior.tag(), spec.n, p, spec.datasets_per_combo, spec.chains);
        let mut cell: Vec<ChainRecord> = Vec::new();
        for d in 0..spec.datasets_per_combo {
            let mut rng = RngStream::new(dataset_seed(spec, p, d));
            let data = simulate_dataset(spec.n, p, &mut rng)?;
            let design = CenteredDesign::new(&data.dataset)?;
            let jobs: Vec<(SamplerKind, usize)> = SamplerKind::ALL
                .iter()
                .flat_map(|&s| (0..spec.chains).map(move |c| (s, c)))
                .collect();
            let records = pool.install(|| {
                jobs.par_iter()
                    .map(|&(sampler, c)| {
                        let mut cfg = SamplerConfig::new(sampler, spec.prior.clone(), spec.iterations, chain_seed(spec, p, d, c, sampler));
                        cfg.burn_in_fraction = spec.burn_in_fraction;
                        cfg.record_beta = opts.record_beta;
                        run_one(cfg, &design, p, d, c, runs_dir.as_deref(), spec, opts.run_config.as_ref())
                    })
                    .collect::<Result<Vec<_>>>()
            })?;
            cell.extend(records);
        }
        for sampler in SamplerKind::ALL {
            let mine: Vec<&ChainRecord> = cell.iter().filter(|r| r.sampler == sampler).collect();
            let reports: Vec<EfficiencyReport> = mine.iter().filter_map(|r| r.report.clone()).collect();
            let unstable_chains = mine.len() - reports.len();
            let (mean_rho1, mean_neff_per_sec) = match aggregate(&reports) {
                Ok(a) => (a.mean_rho1, a.mean_neff_per_second.unwrap_or(f64::NAN)),
                Err(_) => (f64::NAN, f64::NAN),
            };
            if unstable_chains > 0 {
                warn!("{unstable_chains} unstable {sampler} chains at n={} p={p}", spec.n);
            }
            result.rows.push(ExperimentRow {
                n: spec.n,
                p,
                ratio,
                prior: spec.prior.tag().to_string(),
                sampler,
                mean_rho1,
                mean_neff_per_sec,
                chains: spec.chains,
                iterations: spec.iterations,
                datasets: spec.datasets_per_combo,
                unstable_chains,
            });
        }
        result.chains.extend(cell);
    }

    if let Some(dir) = &opts.out_dir {
        write_results_csv(&result.rows, &dir.join("results.csv"))?;
        if opts.plot_data {
            write_plot_data(spec, &result.rows, &dir.join("plot_data"))?;
        }
    }
    Ok(result)
}

#[allow(clippy::too_many_arguments)]
fn run_one(
    cfg: SamplerConfig,
    design: &CenteredDesign,
    p: usize,
    dataset: usize,
    chain: usize,
    runs_dir: Option<&Path>,
    spec: &SimSpec,
    run_config: Option<&serde_json::Value>,
) -> Result<ChainRecord> {
    let sampler = cfg.sampler;
    let seed = cfg.seed;
    let mut record = ChainRecord { p, dataset, chain, sampler, seed, report: None, unstable: None };
    match run_chain(&cfg, design) {
        Ok(output) => {
            if let Some(dir) = runs_dir {
                let stem = format!("{}_n{}_p{}_d{}_{}_c{}", spec.prior.tag(), spec.n, p, dataset, sampler, chain);
                output.write_files_with_config(dir, &stem, run_config)?;
            }
            record.report = Some(chain_report(&output)?);
        }
        Err(e @ Error::ChainUnstable { .. }) => record.unstable = Some(e.to_string()),
        Err(e) => return Err(e),
    }
    Ok(record)
}

pub const RESULTS_HEADER: &str = "n,p,ratio,prior,sampler,mean_rho1,mean_neff_per_sec,chains,iterations";

pub fn write_results_csv(rows: &[ExperimentRow], path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{RESULTS_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.n, r.p, r.ratio, r.prior, r.sampler, r.mean_rho1, r.mean_neff_per_sec, r.chains, r.iterations
        )?;
    }
    out.flush()?;
    Ok(())
}

/// Long-format `(ratio, sampler, metric, value)` table behind each figure:
/// mean lag-1 autocorrelation and log10 of mean `n_eff / T`.
pub fn write_plot_data(spec: &SimSpec, rows: &[ExperimentRow], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let path = dir.join(format!("{}_n{}.csv", spec.prior.tag(), spec.n));
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "ratio,sampler,metric,value")?;
    for r in rows {
        writeln!(out, "{},{},mean_rho1,{}", r.ratio, r.sampler, r.mean_rho1)?;
    }
    for r in rows {
        writeln!(out, "{},{},log10_mean_neff_per_sec,{}", r.ratio, r.sampler, r.mean_neff_per_sec.log10())?;
    }
    out.flush()?;
    Ok(())
}

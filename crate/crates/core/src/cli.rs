//! Command-line front end: `simulate`, `fit` and `diagnose`.
//!
//! Every flag has a config-file key of the same kebab-case name. A config
//! file is a flat JSON object; flags override its values. The fully resolved
//! configuration is written to `config.json` in the output directory and
//! echoed into every chain sidecar.
//!
//! Exit codes: 0 on success, 1 on usage, configuration or data errors, 2 when
//! the run completed but some chain was numerically unstable.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, Parser, Subcommand};
use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::diagnostics::{aggregate, autocorrelation, chain_report, default_max_lag, trace_report, EfficiencyReport};
use crate::error::{Error, Result};
use crate::ingest::{load_csv, screen_predictors, write_dataset_csv, ResponseSelector};
use crate::model::{CenteredDesign, PriorConfig};
use crate::rand_dist::derive_seed;
use crate::samplers::{read_trace_csv, run_chain, ChainSidecar, SamplerConfig, SamplerKind};
use crate::sim::{run_experiment, RunOptions, SimSpec, DEFAULT_RATIOS};

pub const EXIT_OK: u8 = 0;
pub const EXIT_ERROR: u8 = 1;
pub const EXIT_UNSTABLE: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "shrinkage-gibbs", version, about = "Two-block vs three-block Gibbs samplers for shrinkage regression")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the simulation grid and write results.csv, runs/ and plot data.
    Simulate(SimulateArgs),
    /// Screen a CSV dataset and compare both samplers on it.
    Fit(FitArgs),
    /// Recompute mixing diagnostics from a stored trace CSV.
    Diagnose(DiagnoseArgs),
}

#[derive(Debug, Default, Args)]
pub struct SharedArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    /// Maximum concurrent chains (0 = all cores).
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Flat JSON object with the same keys as the flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Default, Args)]
pub struct PriorArgs {
    #[arg(long)]
    pub w: Option<f64>,
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long)]
    pub zeta: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub shared: SharedArgs,
    #[command(flatten)]
    pub prior: PriorArgs,
    /// spike-slab or lasso.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Comma-separated p/n ratios.
    #[arg(long, value_delimiter = ',')]
    pub ratios: Option<Vec<f64>>,
    #[arg(long)]
    pub datasets: Option<usize>,
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<f64>,
    #[arg(long)]
    pub plot_data: bool,
    #[arg(long)]
    pub record_beta: bool,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub shared: SharedArgs,
    #[command(flatten)]
    pub prior: PriorArgs,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub response: Option<String>,
    /// Zero-based column index of the response.
    #[arg(long)]
    pub response_index: Option<usize>,
    #[arg(long)]
    pub screen_k: Option<usize>,
    /// spike-slab, lasso or both.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<f64>,
    #[arg(long)]
    pub record_beta: bool,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[command(flatten)]
    pub shared: SharedArgs,
    /// Trace CSV with an `iteration,sigma2,...` header.
    pub trace: Option<PathBuf>,
    #[arg(long)]
    pub max_lag: Option<usize>,
}

/// Flat run configuration shared by the config file, the flags and
/// `config.json`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ratios: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub datasets: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chains: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub zeta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plot_data: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub record_beta: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub response_index: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub screen_k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_lag: Option<usize>,
}

macro_rules! overlay_fields {
    ($base:ident, $top:ident; $($f:ident),*) => {
        $( if $top.$f.is_some() { $base.$f = $top.$f; } )*
    };
}

impl RunConfig {
    /// Parses a flat JSON object; errors name the offending key.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let value: Value =
            serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("config file is not valid JSON: {e}")))?;
        let Value::Object(map) = value else {
            return Err(Error::InvalidInput("config file must hold a flat JSON object".into()));
        };
        match serde_json::from_value::<RunConfig>(Value::Object(map.clone())) {
            Ok(cfg) => Ok(cfg),
            Err(whole) => {
                for (key, v) in map {
                    let single = Map::from_iter([(key.clone(), v)]);
                    if let Err(e) = serde_json::from_value::<RunConfig>(Value::Object(single)) {
                        return Err(Error::InvalidParameter(format!("config key `{key}`: {e}")));
                    }
                }
                Err(Error::InvalidParameter(format!("config: {whole}")))
            }
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::InvalidInput(format!("cannot read config file {}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    /// Fields set in `top` replace those in `self`.
    pub fn overlay(mut self, top: RunConfig) -> Self {
        overlay_fields!(self, top; command, seed, workers, out, model, n, ratios, datasets, chains,
            iterations, burn_in, w, kappa, zeta, lambda, plot_data, record_beta, data, response,
            response_index, screen_k, trace, max_lag);
        self
    }

    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("RunConfig serializes")
    }
}

fn flag(set: bool) -> Option<bool> {
    set.then_some(true)
}

impl SharedArgs {
    fn to_config(&self) -> RunConfig {
        RunConfig { seed: self.seed, workers: self.workers, out: self.out.clone(), ..RunConfig::default() }
    }
}

impl PriorArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        cfg.w = self.w;
        cfg.kappa = self.kappa;
        cfg.zeta = self.zeta;
        cfg.lambda = self.lambda;
    }
}

impl SimulateArgs {
    fn to_config(&self) -> RunConfig {
        let mut cfg = RunConfig {
            model: self.model.clone(),
            n: self.n,
            ratios: self.ratios.clone(),
            datasets: self.datasets,
            chains: self.chains,
            iterations: self.iterations,
            burn_in: self.burn_in,
            plot_data: flag(self.plot_data),
            record_beta: flag(self.record_beta),
            ..self.shared.to_config()
        };
        self.prior.apply(&mut cfg);
        cfg
    }
}

impl FitArgs {
    fn to_config(&self) -> RunConfig {
        let mut cfg = RunConfig {
            data: self.data.clone(),
            response: self.response.clone(),
            response_index: self.response_index,
            screen_k: self.screen_k,
            model: self.model.clone(),
            chains: self.chains,
            iterations: self.iterations,
            burn_in: self.burn_in,
            record_beta: flag(self.record_beta),
            ..self.shared.to_config()
        };
        self.prior.apply(&mut cfg);
        cfg
    }
}

impl DiagnoseArgs {
    fn to_config(&self) -> RunConfig {
        RunConfig { trace: self.trace.clone(), max_lag: self.max_lag, ..self.shared.to_config() }
    }
}

/// Settings used when a key is absent.
struct Defaults {
    model: &'static str,
    w: f64,
    kappa: f64,
    zeta: f64,
    lambda: f64,
    iterations: usize,
    chains: usize,
}

const SIMULATE_DEFAULTS: Defaults =
    Defaults { model: "spike-slab", w: 0.5, kappa: 100.0, zeta: 0.01, lambda: 1.0, iterations: 15_000, chains: 6 };

/// Real-data preset: w = 1/2, κ = 100, ζ = 1/200, λ = 0.5, N = 18000.
const FIT_DEFAULTS: Defaults =
    Defaults { model: "both", w: 0.5, kappa: 100.0, zeta: 0.005, lambda: 0.5, iterations: 18_000, chains: 1 };

const DEFAULT_BURN_IN: f64 = 0.1;
const DEFAULT_SCREEN_K: usize = 100;
const DEFAULT_SIM_N: usize = 50;
const DEFAULT_DATASETS: usize = 10;

fn key_error(key: &str, msg: impl std::fmt::Display) -> Error {
    Error::InvalidParameter(format!("config key `{key}`: {msg}"))
}

fn positive(key: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(key_error(key, format!("must be a positive number, got {v}")))
    }
}

fn at_least(key: &str, v: usize, min: usize) -> Result<usize> {
    if v >= min {
        Ok(v)
    } else {
        Err(key_error(key, format!("must be >= {min}, got {v}")))
    }
}

fn resolve_common(cfg: &mut RunConfig, command: &str, random: bool) {
    cfg.command = Some(command.to_string());
    if random && cfg.seed.is_none() {
        let seed = rand::random::<u64>();
        info!("no seed given; drew {seed} from system entropy");
        cfg.seed = Some(seed);
    }
    cfg.workers.get_or_insert(0);
    cfg.out.get_or_insert_with(|| PathBuf::from("out"));
}

fn resolve_burn_in(cfg: &mut RunConfig) -> Result<f64> {
    let b = *cfg.burn_in.get_or_insert(DEFAULT_BURN_IN);
    if (0.0..1.0).contains(&b) {
        Ok(b)
    } else {
        Err(key_error("burn-in", format!("must lie in [0, 1), got {b}")))
    }
}

fn resolve_prior(cfg: &mut RunConfig, model: &str, d: &Defaults) -> Result<PriorConfig> {
    match model {
        "spike-slab" => {
            let w = *cfg.w.get_or_insert(d.w);
            if !(w > 0.0 && w < 1.0) {
                return Err(key_error("w", format!("must lie in (0, 1), got {w}")));
            }
            let kappa = positive("kappa", *cfg.kappa.get_or_insert(d.kappa))?;
            if kappa <= 1.0 {
                return Err(key_error("kappa", format!("must exceed 1, got {kappa}")));
            }
            let zeta = positive("zeta", *cfg.zeta.get_or_insert(d.zeta))?;
            PriorConfig::spike_slab(w, kappa, zeta)
        }
        "lasso" => PriorConfig::lasso(positive("lambda", *cfg.lambda.get_or_insert(d.lambda))?),
        other => Err(key_error("model", format!("expected spike-slab or lasso, got {other:?}"))),
    }
}

fn ignore_keys(cfg: &mut RunConfig, command: &str, keys: &[&str]) {
    let mut ignored = Vec::new();
    macro_rules! drop_key {
        ($($f:ident => $k:literal),*) => {
            $( if keys.contains(&$k) && cfg.$f.take().is_some() { ignored.push($k); } )*
        };
    }
    drop_key!(model => "model", n => "n", ratios => "ratios", datasets => "datasets", chains => "chains",
        iterations => "iterations", burn_in => "burn-in", w => "w", kappa => "kappa", zeta => "zeta",
        lambda => "lambda", plot_data => "plot-data", record_beta => "record-beta", data => "data",
        response => "response", response_index => "response-index", screen_k => "screen-k",
        trace => "trace", max_lag => "max-lag");
    if !ignored.is_empty() {
        warn!("{command} ignores config keys: {}", ignored.join(", "));
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn prepare_out(cfg: &RunConfig) -> Result<PathBuf> {
    let out = cfg.out.clone().expect("resolved");
    fs::create_dir_all(&out)?;
    write_json(&out.join("config.json"), cfg)?;
    Ok(out)
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("cannot build worker pool: {e}")))
}

/// Resolves a simulate configuration, filling defaults.
pub fn resolve_simulate(mut cfg: RunConfig) -> Result<(RunConfig, SimSpec)> {
    ignore_keys(&mut cfg, "simulate", &["data", "response", "response-index", "screen-k", "trace", "max-lag"]);
    resolve_common(&mut cfg, "simulate", true);
    let d = &SIMULATE_DEFAULTS;
    let model = cfg.model.get_or_insert_with(|| d.model.to_string()).clone();
    let prior = resolve_prior(&mut cfg, &model, d)?;
    // only the active prior's hyperparameters matter
    if model == "lasso" {
        (cfg.w, cfg.kappa, cfg.zeta) = (None, None, None);
    } else {
        cfg.lambda = None;
    }
    let n = at_least("n", *cfg.n.get_or_insert(DEFAULT_SIM_N), 3)?;
    let ratios = cfg.ratios.get_or_insert_with(|| DEFAULT_RATIOS.to_vec()).clone();
    if ratios.is_empty() {
        return Err(key_error("ratios", "must not be empty"));
    }
    for &r in &ratios {
        if !(r > 0.0 && r.is_finite()) || (r * n as f64).round() < 1.0 {
            return Err(key_error("ratios", format!("ratio {r} does not give p >= 1 at n = {n}")));
        }
    }
    let datasets = at_least("datasets", *cfg.datasets.get_or_insert(DEFAULT_DATASETS), 1)?;
    let chains = at_least("chains", *cfg.chains.get_or_insert(d.chains), 1)?;
    let iterations = at_least("iterations", *cfg.iterations.get_or_insert(d.iterations), 10)?;
    let burn_in = resolve_burn_in(&mut cfg)?;
    cfg.plot_data.get_or_insert(false);
    cfg.record_beta.get_or_insert(false);

    let spec = SimSpec {
        n,
        ratios,
        datasets_per_combo: datasets,
        prior,
        chains,
        iterations,
        burn_in_fraction: burn_in,
        base_seed: cfg.seed.expect("resolved"),
    };
    spec.validate()?;
    Ok((cfg, spec))
}

pub fn cmd_simulate(cfg: RunConfig) -> Result<u8> {
    let (cfg, spec) = resolve_simulate(cfg)?;
    let out = prepare_out(&cfg)?;
    let opts = RunOptions {
        workers: cfg.workers.expect("resolved"),
        out_dir: Some(out.clone()),
        plot_data: cfg.plot_data == Some(true),
        record_beta: cfg.record_beta == Some(true),
        run_config: Some(cfg.to_json()),
    };
    let result = run_experiment(&spec, &opts)?;
    println!("{:>6} {:>6} {:>4} {:>12} {:>18}", "ratio", "p", "alg", "mean_rho1", "mean_neff_per_sec");
    for row in &result.rows {
        println!(
            "{:>6} {:>6} {:>4} {:>12.4} {:>18.2}",
            row.ratio, row.p, row.sampler, row.mean_rho1, row.mean_neff_per_sec
        );
    }
    println!("wrote {}", out.join("results.csv").display());
    if result.unstable() {
        eprintln!("warning: some chains were numerically unstable; see the unstable rows above");
        return Ok(EXIT_UNSTABLE);
    }
    Ok(EXIT_OK)
}

/// One row of `comparison.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub prior: String,
    pub sampler: SamplerKind,
    pub n: usize,
    pub p: usize,
    pub rho1: f64,
    pub n_eff: f64,
    pub n_eff_per_sec: f64,
}

pub const COMPARISON_HEADER: &str = "prior,sampler,n,p,rho1,n_eff,n_eff_per_sec";

fn fit_models(model: &str) -> Result<Vec<&'static str>> {
    match model {
        "both" => Ok(vec!["spike-slab", "lasso"]),
        "spike-slab" => Ok(vec!["spike-slab"]),
        "lasso" => Ok(vec!["lasso"]),
        other => Err(key_error("model", format!("expected spike-slab, lasso or both, got {other:?}"))),
    }
}

fn format_table(rows: &[ComparisonRow]) -> String {
    let mut s = String::new();
    let mut header = format!("{:<10}", "");
    let mut sub = format!("{:<10}", "");
    let mut priors: Vec<&str> = Vec::new();
    for r in rows {
        if !priors.contains(&r.prior.as_str()) {
            priors.push(&r.prior);
        }
    }
    for prior in &priors {
        let _ = write!(header, "{:^26}", prior);
        let _ = write!(sub, "{:>13}{:>13}", "2BG", "3BG");
    }
    let _ = writeln!(s, "{header}\n{sub}");
    let metrics: [(&str, fn(&ComparisonRow) -> String); 3] = [
        ("rho1", |r| format!("{:.3}", r.rho1)),
        ("N_eff", |r| format!("{:.0}", r.n_eff)),
        ("N_eff/T", |r| format!("{:.1}", r.n_eff_per_sec)),
    ];
    for (name, f) in metrics {
        let _ = write!(s, "{name:<10}");
        for prior in &priors {
            for sampler in SamplerKind::ALL {
                let cell = rows.iter().find(|r| r.prior == *prior && r.sampler == sampler).map_or("-".into(), f);
                let _ = write!(s, "{cell:>13}");
            }
        }
        s.push('\n');
    }
    s
}

pub fn resolve_fit(mut cfg: RunConfig) -> Result<(RunConfig, ResponseSelector, Vec<(String, PriorConfig)>)> {
    ignore_keys(&mut cfg, "fit", &["n", "ratios", "datasets", "plot-data", "trace", "max-lag"]);
    if cfg.data.is_none() {
        return Err(key_error("data", "a dataset path is required (--data)"));
    }
    let selector = match (&cfg.response, cfg.response_index) {
        (Some(name), None) => ResponseSelector::Name(name.clone()),
        (None, Some(i)) => ResponseSelector::Index(i),
        (Some(_), Some(_)) => return Err(key_error("response", "give either response or response-index, not both")),
        (None, None) => return Err(key_error("response", "a response column is required (--response or --response-index)")),
    };
    resolve_common(&mut cfg, "fit", true);
    let d = &FIT_DEFAULTS;
    let model = cfg.model.get_or_insert_with(|| d.model.to_string()).clone();
    let mut priors = Vec::new();
    for m in fit_models(&model)? {
        priors.push((m.to_string(), resolve_prior(&mut cfg, m, d)?));
    }
    at_least("screen-k", *cfg.screen_k.get_or_insert(DEFAULT_SCREEN_K), 1)?;
    at_least("chains", *cfg.chains.get_or_insert(d.chains), 1)?;
    at_least("iterations", *cfg.iterations.get_or_insert(d.iterations), 10)?;
    resolve_burn_in(&mut cfg)?;
    cfg.record_beta.get_or_insert(false);
    Ok((cfg, selector, priors))
}

pub fn cmd_fit(cfg: RunConfig) -> Result<u8> {
    let (cfg, selector, priors) = resolve_fit(cfg)?;
    let table = load_csv(cfg.data.as_deref().expect("resolved"), &selector)?;
    let (dataset, report) = screen_predictors(&table, cfg.screen_k.expect("resolved"))?;
    let out = prepare_out(&cfg)?;
    write_dataset_csv(&dataset, &table.response_name, &out.join("screened.csv"))?;
    write_json(&out.join("screen_report.json"), &report)?;
    let design = CenteredDesign::new(&dataset)?;
    let runs = out.join("runs");
    fs::create_dir_all(&runs)?;

    let seed = cfg.seed.expect("resolved");
    let chains = cfg.chains.expect("resolved");
    let run_config = cfg.to_json();
    let jobs: Vec<(usize, SamplerKind, usize)> = (0..priors.len())
        .flat_map(|m| SamplerKind::ALL.into_iter().flat_map(move |s| (0..chains).map(move |c| (m, s, c))))
        .collect();
    info!("fitting {} chains on n={} p={}", jobs.len(), design.n(), design.p());
    let results = pool(cfg.workers.expect("resolved"))?.install(|| {
        jobs.par_iter()
            .map(|&(m, sampler, c)| -> Result<Option<EfficiencyReport>> {
                let (tag, prior) = &priors[m];
                let chain_seed = derive_seed(seed, &[m as u64, sampler as u64, c as u64]);
                let mut sc = SamplerConfig::new(sampler, prior.clone(), cfg.iterations.expect("resolved"), chain_seed);
                sc.burn_in_fraction = cfg.burn_in.expect("resolved");
                sc.record_beta = cfg.record_beta == Some(true);
                match run_chain(&sc, &design) {
                    Ok(output) => {
                        output.write_files_with_config(&runs, &format!("{tag}_{sampler}_c{c}"), Some(&run_config))?;
                        chain_report(&output).map(Some)
                    }
                    Err(e @ Error::ChainUnstable { .. }) => {
                        warn!("{tag} {sampler} chain {c}: {e}");
                        Ok(None)
                    }
                    Err(e) => Err(e),
                }
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let mut rows = Vec::new();
    let mut unstable = false;
    for (m, (tag, _)) in priors.iter().enumerate() {
        for sampler in SamplerKind::ALL {
            let reports: Vec<EfficiencyReport> = jobs
                .iter()
                .zip(&results)
                .filter(|((jm, js, _), _)| *jm == m && *js == sampler)
                .filter_map(|(_, r)| {
                    unstable |= r.is_none();
                    r.clone()
                })
                .collect();
            let (rho1, n_eff, nps) = match aggregate(&reports) {
                Ok(a) => (a.mean_rho1, a.mean_n_eff, a.mean_neff_per_second.unwrap_or(f64::NAN)),
                Err(_) => (f64::NAN, f64::NAN, f64::NAN),
            };
            rows.push(ComparisonRow {
                prior: tag.clone(),
                sampler,
                n: design.n(),
                p: design.p(),
                rho1,
                n_eff,
                n_eff_per_sec: nps,
            });
        }
    }
    let mut w = csv::Writer::from_path(out.join("comparison.csv"))?;
    for row in &rows {
        w.serialize(row)?;
    }
    w.flush()?;
    print!("{}", format_table(&rows));
    println!("wrote {}", out.join("comparison.csv").display());
    Ok(if unstable { EXIT_UNSTABLE } else { EXIT_OK })
}

/// Output of `diagnose`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnoseReport {
    pub trace: PathBuf,
    pub max_lag: usize,
    pub report: EfficiencyReport,
    /// Autocorrelations at lags `0..=max_lag`.
    pub acf: Vec<f64>,
}

pub fn cmd_diagnose(mut cfg: RunConfig) -> Result<u8> {
    ignore_keys(
        &mut cfg,
        "diagnose",
        &[
            "model", "n", "ratios", "datasets", "chains", "iterations", "burn-in", "w", "kappa", "zeta", "lambda",
            "plot-data", "record-beta", "data", "response", "response-index", "screen-k",
        ],
    );
    let Some(path) = cfg.trace.clone() else {
        return Err(key_error("trace", "a trace CSV path is required"));
    };
    resolve_common(&mut cfg, "diagnose", false);
    let trace = read_trace_csv(&path)?;
    let n = trace.sigma2.len();
    let max_lag = *cfg.max_lag.get_or_insert(default_max_lag(n));

    let sidecar_path = path.with_extension("json");
    let wall = match fs::read_to_string(&sidecar_path) {
        Ok(text) => match serde_json::from_str::<ChainSidecar>(&text) {
            Ok(side) => Some(side.wall_seconds),
            Err(e) => {
                warn!("ignoring unreadable sidecar {}: {e}", sidecar_path.display());
                None
            }
        },
        Err(_) => None,
    };
    let report = trace_report(&trace.sigma2, wall)?;
    let acf = autocorrelation(&trace.sigma2, max_lag)
        .map_err(|e| match e {
            Error::InvalidInput(msg) => key_error("max-lag", msg),
            other => other,
        })?
        .rho;
    let out = prepare_out(&cfg)?;
    let result = DiagnoseReport { trace: path, max_lag, report, acf };
    write_json(&out.join("report.json"), &result)?;
    println!("{}", serde_json::to_string_pretty(&result)?);
    Ok(EXIT_OK)
}

fn merged(file: Option<&Path>, flags: RunConfig) -> Result<RunConfig> {
    let base = match file {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    Ok(base.overlay(flags))
}

pub fn execute(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Simulate(args) => cmd_simulate(merged(args.shared.config.as_deref(), args.to_config())?),
        Command::Fit(args) => cmd_fit(merged(args.shared.config.as_deref(), args.to_config())?),
        Command::Diagnose(args) => cmd_diagnose(merged(args.shared.config.as_deref(), args.to_config())?),
    }
}

fn subcommand_usage(cli: &Cli) -> String {
    let name = match cli.command {
        Command::Simulate(_) => "simulate",
        Command::Fit(_) => "fit",
        Command::Diagnose(_) => "diagnose",
    };
    let mut cmd = Cli::command();
    cmd.build();
    cmd.find_subcommand_mut(name).map(|c| c.render_usage().to_string()).unwrap_or_default()
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        }
    };
    let usage = subcommand_usage(&cli);
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(&e, Error::InvalidParameter(msg) if msg.contains("`response`") || msg.contains("`data`") || msg.contains("`trace`"))
            {
                eprintln!("\n{usage}");
            }
            EXIT_ERROR
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_errors_name_the_key() {
        let err = RunConfig::from_json_str(r#"{"n": 50, "iteratons": 10}"#).unwrap_err().to_string();
        assert!(err.contains("iteratons"), "{err}");
        let err = RunConfig::from_json_str(r#"{"n": "fifty"}"#).unwrap_err().to_string();
        assert!(err.contains("`n`"), "{err}");
        assert!(RunConfig::from_json_str("[1, 2]").is_err());
    }

    #[test]
    fn flags_override_file() {
        let file = RunConfig::from_json_str(r#"{"n": 40, "seed": 3, "burn-in": 0.2, "ratios": [1, 2]}"#).unwrap();
        let flags = RunConfig { n: Some(60), ..RunConfig::default() };
        let cfg = file.overlay(flags);
        assert_eq!(cfg.n, Some(60));
        assert_eq!(cfg.seed, Some(3));
        assert_eq!(cfg.burn_in, Some(0.2));
        assert_eq!(cfg.ratios, Some(vec![1.0, 2.0]));
    }

    #[test]
    fn simulate_defaults() {
        let (cfg, spec) = resolve_simulate(RunConfig {
            model: Some("lasso".into()),
            n: Some(75),
            seed: Some(1),
            ..RunConfig::default()
        })
        .unwrap();
        assert_eq!(spec.prior, PriorConfig::lasso(1.0).unwrap());
        assert_eq!(cfg.lambda, Some(1.0));
        assert_eq!(cfg.w, None);
        assert_eq!(spec.ratios, DEFAULT_RATIOS.to_vec());

        let (_, spec) = resolve_simulate(RunConfig { seed: Some(1), ..RunConfig::default() }).unwrap();
        assert_eq!(spec.prior, PriorConfig::spike_slab(0.5, 100.0, 0.01).unwrap());
        assert_eq!(spec.n, 50);
    }

    #[test]
    fn resolution_is_a_fixed_point() {
        let (cfg, spec) = resolve_simulate(RunConfig { seed: Some(9), ..RunConfig::default() }).unwrap();
        let echoed = RunConfig::from_json_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        let (again, spec2) = resolve_simulate(echoed).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(spec, spec2);
    }

    #[test]
    fn unseeded_runs_record_their_seed() {
        let (cfg, spec) = resolve_simulate(RunConfig::default()).unwrap();
        assert_eq!(cfg.seed, Some(spec.base_seed));
    }

    #[test]
    fn bad_values_name_the_key() {
        let bad = |cfg: RunConfig, key: &str| {
            let msg = resolve_simulate(cfg).unwrap_err().to_string();
            assert!(msg.contains(&format!("`{key}`")), "{msg}");
        };
        bad(RunConfig { model: Some("ridge".into()), ..RunConfig::default() }, "model");
        bad(RunConfig { w: Some(1.5), ..RunConfig::default() }, "w");
        bad(RunConfig { burn_in: Some(1.0), ..RunConfig::default() }, "burn-in");
        bad(RunConfig { n: Some(2), ..RunConfig::default() }, "n");
        bad(RunConfig { ratios: Some(vec![]), ..RunConfig::default() }, "ratios");
        bad(RunConfig { iterations: Some(5), ..RunConfig::default() }, "iterations");
    }

    #[test]
    fn fit_preset_and_response_rules() {
        let base = RunConfig { data: Some("x.csv".into()), seed: Some(1), ..RunConfig::default() };
        let err = resolve_fit(base.clone()).unwrap_err().to_string();
        assert!(err.contains("`response`"), "{err}");

        let (cfg, sel, priors) =
            resolve_fit(RunConfig { response: Some("y".into()), ..base.clone() }).unwrap();
        assert_eq!(sel, ResponseSelector::Name("y".into()));
        assert_eq!(cfg.iterations, Some(18_000));
        assert_eq!(cfg.burn_in, Some(0.1));
        assert_eq!(cfg.screen_k, Some(100));
        assert_eq!(priors[0].1, PriorConfig::spike_slab(0.5, 100.0, 1.0 / 200.0).unwrap());
        assert_eq!(priors[1].1, PriorConfig::lasso(0.5).unwrap());

        let both = RunConfig { response: Some("y".into()), response_index: Some(0), ..base };
        assert!(resolve_fit(both).is_err());
    }

    #[test]
    fn table_layout() {
        let row = |prior: &str, sampler, rho1| ComparisonRow {
            prior: prior.into(),
            sampler,
            n: 59,
            p: 100,
            rho1,
            n_eff: 1000.0,
            n_eff_per_sec: 50.0,
        };
        let text = format_table(&[
            row("spike-slab", SamplerKind::TwoBlock, 0.1),
            row("spike-slab", SamplerKind::ThreeBlock, 0.4),
        ]);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 5);
        assert!(lines[0].contains("spike-slab"));
        assert!(lines[2].starts_with("rho1") && lines[2].contains("0.100") && lines[2].contains("0.400"));
    }
}

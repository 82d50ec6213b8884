//! Conditional draws and the two Gibbs sweep schemes.
//!
//! Both samplers target the joint posterior of `(beta, sigma2)` with `tau`
//! as an auxiliary block. A three-block sweep draws
//! `tau | beta, sigma2`, then `sigma2 | beta, tau`, then `beta | sigma2, tau`.
//! A two-block sweep draws `tau | beta, sigma2` and then the pair
//! `(beta, sigma2) | tau` jointly: `sigma2` from its marginal given `tau`
//! (inverse gamma with shape `(n-1)/2`), then `beta` given both. The two
//! schemes share the Cholesky factor of `A_tau` within a sweep.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{posterior_precision, CenteredDesign, ChainState, PrecisionFactor, PriorConfig, SpikeSlab};
use crate::rand_dist::{draw_bernoulli, draw_gamma, draw_inverse_gamma, draw_inverse_gaussian, draw_mvn_mean_precision, RngStream};

/// Floor applied to `beta_j²` inside the inverse-Gaussian mean.
pub const LASSO_BETA2_FLOOR: f64 = 1e-20;
/// A clamped two-block scale is set to this multiple of `‖ỹ‖²`.
pub const TWOBLOCK_SCALE_CLAMP: f64 = 1e-12;
/// A chain fails once more than this fraction of sweeps needed a clamp.
pub const MAX_CLAMP_FRACTION: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SamplerKind {
    #[serde(rename = "2BG")]
    TwoBlock,
    #[serde(rename = "3BG")]
    ThreeBlock,
}

impl SamplerKind {
    pub const ALL: [SamplerKind; 2] = [SamplerKind::TwoBlock, SamplerKind::ThreeBlock];

    pub fn tag(self) -> &'static str {
        match self {
            SamplerKind::TwoBlock => "2BG",
            SamplerKind::ThreeBlock => "3BG",
        }
    }
}

impl std::fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub sampler: SamplerKind,
    pub prior: PriorConfig,
    pub iterations: usize,
    pub burn_in_fraction: f64,
    /// Defaults to `1_p`.
    pub init_beta: Option<Vec<f64>>,
    pub init_sigma2: f64,
    pub record_beta: bool,
    pub seed: u64,
}

impl SamplerConfig {
    pub fn new(sampler: SamplerKind, prior: PriorConfig, iterations: usize, seed: u64) -> Self {
        Self {
            sampler,
            prior,
            iterations,
            burn_in_fraction: 0.1,
            init_beta: None,
            init_sigma2: 0.0,
            record_beta: false,
            seed,
        }
    }

    /// Number of discarded sweeps, `floor(burn_in_fraction * N)`.
    pub fn burn_in(&self) -> usize {
        (self.burn_in_fraction * self.iterations as f64).floor() as usize
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if self.iterations < 10 {
            return Err(Error::InvalidParameter(format!("iterations must be >= 10, got {}", self.iterations)));
        }
        if !(0.0..1.0).contains(&self.burn_in_fraction) {
            return Err(Error::InvalidParameter(format!(
                "burn_in_fraction must lie in [0, 1), got {}",
                self.burn_in_fraction
            )));
        }
        if !(self.init_sigma2 >= 0.0 && self.init_sigma2.is_finite()) {
            return Err(Error::InvalidParameter(format!("init_sigma2 must be >= 0, got {}", self.init_sigma2)));
        }
        if let Some(beta) = &self.init_beta {
            if beta.len() != p || beta.iter().any(|b| !b.is_finite()) {
                return Err(Error::InvalidParameter(format!("init_beta must hold {p} finite values")));
            }
        }
        self.prior.validate(Some(p))
    }
}

/// Recorded output of one chain.
#[derive(Clone, Debug)]
pub struct ChainOutput {
    /// Post burn-in `sigma2` draws.
    pub sigma2_trace: Vec<f64>,
    /// Post burn-in `beta` draws, one row per sweep, when requested.
    pub beta_trace: Option<Vec<Vec<f64>>>,
    /// Wall time of the sweep loop (burn-in included), in seconds.
    pub wall_seconds: f64,
    pub config: SamplerConfig,
    pub clamp_count: usize,
    /// Sweeps whose Cholesky factorization needed a ridge.
    pub jitter_count: usize,
}

impl ChainOutput {
    pub fn seed(&self) -> u64 {
        self.config.seed
    }

    pub fn burn_in(&self) -> usize {
        self.config.burn_in()
    }
}

/// Result of one sweep.
#[derive(Clone, Debug)]
pub struct Sweep {
    pub state: ChainState,
    /// The two-block variance scale had to be clamped.
    pub clamped: bool,
    pub jittered: bool,
}

/// Log of the odds `(1 - w̃_j) / w̃_j` for the spike-and-slab `tau_j`
/// conditional. `sigma2 = 0` is taken as the limit: `-inf` for nonzero
/// `beta_j`, the `beta`-free prior odds for `beta_j = 0`.
pub fn spike_slab_log_odds(beta_j: f64, sigma2: f64, w: f64, kappa: f64, zeta: f64) -> f64 {
    let prior_part = ((1.0 - w) / w).ln() + 0.5 * kappa.ln();
    let b2 = beta_j * beta_j;
    if b2 == 0.0 {
        return prior_part;
    }
    if sigma2 == 0.0 {
        return f64::NEG_INFINITY;
    }
    prior_part - b2 / (2.0 * sigma2) * (kappa - 1.0) / (kappa * zeta)
}

/// Conditional probability `w̃_j` that `tau_j` takes the slab value `kappa_j zeta_j`.
pub fn spike_slab_weight(beta_j: f64, sigma2: f64, w: f64, kappa: f64, zeta: f64) -> f64 {
    let log_odds = spike_slab_log_odds(beta_j, sigma2, w, kappa, zeta);
    1.0 / (1.0 + log_odds.exp())
}

pub fn draw_tau_spike_slab(beta: &[f64], sigma2: f64, prior: &SpikeSlab, rng: &mut RngStream) -> Result<Vec<f64>> {
    if !(sigma2 >= 0.0 && sigma2.is_finite()) {
        return Err(Error::InvalidParameter(format!("sigma2 must be >= 0, got {sigma2}")));
    }
    Ok(beta
        .iter()
        .enumerate()
        .map(|(j, &b)| {
            let (w, kappa, zeta) = (prior.w.at(j), prior.kappa.at(j), prior.zeta.at(j));
            if draw_bernoulli(spike_slab_weight(b, sigma2, w, kappa, zeta), rng) {
                prior.slab(j)
            } else {
                prior.spike(j)
            }
        })
        .collect())
}

/// `1/tau_j ~ InverseGaussian(sqrt(lambda² sigma2 / beta_j²), lambda²)`.
pub fn draw_tau_lasso(beta: &[f64], sigma2: f64, lambda: f64, rng: &mut RngStream) -> Result<Vec<f64>> {
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::InvalidParameter(format!("sigma2 must be > 0, got {sigma2}")));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!("lambda must be > 0, got {lambda}")));
    }
    let l2 = lambda * lambda;
    beta.iter()
        .map(|&b| {
            let b2 = (b * b).max(LASSO_BETA2_FLOOR);
            let mean = (l2 * sigma2 / b2).sqrt();
            let inv_tau = draw_inverse_gaussian(mean, l2, rng)?;
            Ok(1.0 / inv_tau)
        })
        .collect()
}

/// Dispatches on the prior. For the lasso, `sigma2 = 0` (only possible in
/// the initial state) has no usable limit, so `tau` is drawn from its
/// Exponential(`lambda²/2`) prior instead.
pub fn draw_tau(beta: &[f64], sigma2: f64, prior: &PriorConfig, rng: &mut RngStream) -> Result<Vec<f64>> {
    match prior {
        PriorConfig::SpikeSlab(ss) => draw_tau_spike_slab(beta, sigma2, ss, rng),
        PriorConfig::Lasso { lambda } if sigma2 == 0.0 => {
            let rate = lambda * lambda / 2.0;
            beta.iter().map(|_| draw_gamma(1.0, rate, rng)).collect()
        }
        PriorConfig::Lasso { lambda } => draw_tau_lasso(beta, sigma2, *lambda, rng),
    }
}

/// Factorized `A_tau` and the conditional mean `A_tau⁻¹ Xᵀỹ`.
#[derive(Clone, Debug)]
pub struct BetaConditional {
    pub factor: PrecisionFactor,
    pub mean: Vec<f64>,
}

impl BetaConditional {
    pub fn new(tau: &[f64], design: &CenteredDesign) -> Result<Self> {
        let a = posterior_precision(design.gram(), tau)?;
        let factor = PrecisionFactor::new(a.as_ref())?;
        let mean = factor.solve(design.xty());
        Ok(Self { factor, mean })
    }

    /// Unclamped `ỹᵀ(I - X A_tau⁻¹ Xᵀ)ỹ / 2`.
    pub fn twoblock_scale(&self, design: &CenteredDesign) -> f64 {
        let quad: f64 = design.xty().iter().zip(&self.mean).map(|(a, b)| a * b).sum();
        0.5 * (design.yty() - quad)
    }

    pub fn draw(&self, sigma2: f64, rng: &mut RngStream) -> Result<Vec<f64>> {
        draw_mvn_mean_precision(&self.mean, sigma2, &self.factor, rng)
    }
}

/// `beta ~ N_p(A_tau⁻¹ Xᵀỹ, sigma2 A_tau⁻¹)`.
pub fn draw_beta(tau: &[f64], sigma2: f64, design: &CenteredDesign, rng: &mut RngStream) -> Result<Vec<f64>> {
    BetaConditional::new(tau, design)?.draw(sigma2, rng)
}

/// Shape and scale of `sigma2 | beta, tau`.
pub fn threeblock_sigma2_params(beta: &[f64], tau: &[f64], design: &CenteredDesign) -> Result<(f64, f64)> {
    let p = design.p();
    if beta.len() != p || tau.len() != p {
        return Err(Error::InvalidInput(format!("beta/tau must have {p} entries")));
    }
    if let Some((index, &value)) = tau.iter().enumerate().find(|(_, t)| !(**t > 0.0)) {
        return Err(Error::InvalidTau { index, value });
    }
    let shape = (design.n() + p - 1) as f64 / 2.0;
    let penalty: f64 = beta.iter().zip(tau).map(|(b, t)| b * b / t).sum();
    let scale = 0.5 * design.residual_sum_of_squares(beta) + 0.5 * penalty;
    Ok((shape, scale))
}

pub fn draw_sigma2_threeblock(beta: &[f64], tau: &[f64], design: &CenteredDesign, rng: &mut RngStream) -> Result<f64> {
    let (shape, scale) = threeblock_sigma2_params(beta, tau, design)?;
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::NumericalFailure(format!("three-block sigma2 scale is {scale}")));
    }
    draw_inverse_gamma(shape, scale, rng)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sigma2Draw {
    pub value: f64,
    pub shape: f64,
    pub scale: f64,
    pub clamped: bool,
}

fn draw_sigma2_from_conditional(
    cond: &BetaConditional,
    design: &CenteredDesign,
    rng: &mut RngStream,
) -> Result<Sigma2Draw> {
    let shape = (design.n() - 1) as f64 / 2.0;
    let raw = cond.twoblock_scale(design);
    let (scale, clamped) = if raw > 0.0 {
        (raw, false)
    } else if raw.is_nan() {
        return Err(Error::NumericalFailure("two-block sigma2 scale is NaN".into()));
    } else {
        (TWOBLOCK_SCALE_CLAMP * design.yty(), true)
    };
    let value = draw_inverse_gamma(shape, scale, rng)?;
    Ok(Sigma2Draw { value, shape, scale, clamped })
}

/// `sigma2 | tau ~ InverseGamma((n-1)/2, ỹᵀ(I - X A_tau⁻¹ Xᵀ)ỹ / 2)`.
pub fn draw_sigma2_twoblock(tau: &[f64], design: &CenteredDesign, rng: &mut RngStream) -> Result<Sigma2Draw> {
    let cond = BetaConditional::new(tau, design)?;
    draw_sigma2_from_conditional(&cond, design, rng)
}

pub fn step_3bg(state: &ChainState, design: &CenteredDesign, prior: &PriorConfig, rng: &mut RngStream) -> Result<Sweep> {
    let tau = draw_tau(&state.beta, state.sigma2, prior, rng)?;
    let sigma2 = draw_sigma2_threeblock(&state.beta, &tau, design, rng)?;
    let cond = BetaConditional::new(&tau, design)?;
    let beta = cond.draw(sigma2, rng)?;
    Ok(Sweep {
        jittered: cond.factor.jitter() > 0.0,
        state: ChainState { beta, sigma2, tau },
        clamped: false,
    })
}

pub fn step_2bg(state: &ChainState, design: &CenteredDesign, prior: &PriorConfig, rng: &mut RngStream) -> Result<Sweep> {
    let tau = draw_tau(&state.beta, state.sigma2, prior, rng)?;
    let cond = BetaConditional::new(&tau, design)?;
    let s2 = draw_sigma2_from_conditional(&cond, design, rng)?;
    let beta = cond.draw(s2.value, rng)?;
    Ok(Sweep {
        jittered: cond.factor.jitter() > 0.0,
        state: ChainState { beta, sigma2: s2.value, tau },
        clamped: s2.clamped,
    })
}

pub fn step(
    kind: SamplerKind,
    state: &ChainState,
    design: &CenteredDesign,
    prior: &PriorConfig,
    rng: &mut RngStream,
) -> Result<Sweep> {
    match kind {
        SamplerKind::TwoBlock => step_2bg(state, design, prior, rng),
        SamplerKind::ThreeBlock => step_3bg(state, design, prior, rng),
    }
}

/// Runs `config.iterations` sweeps and records everything after burn-in.
pub fn run_chain(config: &SamplerConfig, design: &CenteredDesign) -> Result<ChainOutput> {
    let p = design.p();
    config.validate(p)?;
    let n_iter = config.iterations;
    let burn_in = config.burn_in();
    let mut rng = RngStream::new(config.seed);
    let beta0 = config.init_beta.clone().unwrap_or_else(|| vec![1.0; p]);
    let mut state = ChainState::initial(beta0, config.init_sigma2);

    let mut sigma2_trace = Vec::with_capacity(n_iter - burn_in);
    let mut beta_trace = config.record_beta.then(|| Vec::with_capacity(n_iter - burn_in));
    let (mut clamps, mut jitters) = (0usize, 0usize);

    let start = Instant::now();
    for it in 0..n_iter {
        let sweep = step(config.sampler, &state, design, &config.prior, &mut rng)?;
        clamps += sweep.clamped as usize;
        jitters += sweep.jittered as usize;
        state = sweep.state;
        if it >= burn_in {
            sigma2_trace.push(state.sigma2);
            if let Some(bt) = beta_trace.as_mut() {
                bt.push(state.beta.clone());
            }
        }
    }
    let wall_seconds = start.elapsed().as_secs_f64();

    if clamps as f64 > MAX_CLAMP_FRACTION * n_iter as f64 {
        return Err(Error::ChainUnstable { clamps, iterations: n_iter });
    }
    Ok(ChainOutput {
        sigma2_trace,
        beta_trace,
        wall_seconds,
        config: config.clone(),
        clamp_count: clamps,
        jitter_count: jitters,
    })
}

/// JSON sidecar written next to each trace CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainSidecar {
    pub sampler: SamplerKind,
    pub prior: String,
    pub seed: u64,
    pub iterations: usize,
    pub burn_in: usize,
    pub recorded: usize,
    pub wall_seconds: f64,
    pub clamp_count: usize,
    pub jitter_count: usize,
    pub config: SamplerConfig,
    /// The resolved command-line configuration that produced the chain.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_config: Option<serde_json::Value>,
}

impl ChainOutput {
    pub fn sidecar(&self) -> ChainSidecar {
        ChainSidecar {
            sampler: self.config.sampler,
            prior: self.config.prior.tag().to_string(),
            seed: self.config.seed,
            iterations: self.config.iterations,
            burn_in: self.burn_in(),
            recorded: self.sigma2_trace.len(),
            wall_seconds: self.wall_seconds,
            clamp_count: self.clamp_count,
            jitter_count: self.jitter_count,
            config: self.config.clone(),
            run_config: None,
        }
    }

    /// Trace CSV: `iteration,sigma2[,beta_1..beta_p]`, with the 1-based sweep
    /// index of each recorded draw.
    pub fn write_trace_csv(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        write!(out, "iteration,sigma2")?;
        let p = self.beta_trace.as_ref().and_then(|b| b.first()).map_or(0, Vec::len);
        for j in 1..=p {
            write!(out, ",beta_{j}")?;
        }
        writeln!(out)?;
        let first = self.burn_in() + 1;
        for (k, s2) in self.sigma2_trace.iter().enumerate() {
            write!(out, "{},{}", first + k, s2)?;
            if let Some(bt) = &self.beta_trace {
                for b in &bt[k] {
                    write!(out, ",{b}")?;
                }
            }
            writeln!(out)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Writes `<stem>.csv` and `<stem>.json` into `dir`.
    pub fn write_files(&self, dir: &Path, stem: &str) -> Result<()> {
        self.write_files_with_config(dir, stem, None)
    }

    /// As [`write_files`](Self::write_files), echoing `run_config` into the sidecar.
    pub fn write_files_with_config(&self, dir: &Path, stem: &str, run_config: Option<&serde_json::Value>) -> Result<()> {
        self.write_trace_csv(&dir.join(format!("{stem}.csv")))?;
        let mut sidecar = self.sidecar();
        sidecar.run_config = run_config.cloned();
        let mut out = BufWriter::new(File::create(dir.join(format!("{stem}.json")))?);
        serde_json::to_writer_pretty(&mut out, &sidecar)?;
        out.flush()?;
        Ok(())
    }
}

/// A trace CSV read back from disk.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceFile {
    pub iterations: Vec<u64>,
    pub sigma2: Vec<f64>,
    pub beta: Option<Vec<Vec<f64>>>,
}

pub fn read_trace_csv(path: &Path) -> Result<TraceFile> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    if headers.len() < 2 || &headers[0] != "iteration" || &headers[1] != "sigma2" {
        return Err(Error::SchemaError(format!(
            "{}: expected header starting with iteration,sigma2",
            path.display()
        )));
    }
    let p = headers.len() - 2;
    for (j, h) in headers.iter().skip(2).enumerate() {
        if h != format!("beta_{}", j + 1) {
            return Err(Error::SchemaError(format!("{}: unexpected column {h:?}", path.display())));
        }
    }
    let mut trace = TraceFile {
        iterations: Vec::new(),
        sigma2: Vec::new(),
        beta: (p > 0).then(Vec::new),
    };
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let bad = |what: &str| Error::SchemaError(format!("{}: row {}: bad {what}", path.display(), line + 1));
        let it: u64 = record[0].trim().parse().map_err(|_| bad("iteration"))?;
        let s2: f64 = record[1].trim().parse().map_err(|_| bad("sigma2"))?;
        if !s2.is_finite() {
            return Err(bad("sigma2"));
        }
        trace.iterations.push(it);
        trace.sigma2.push(s2);
        if let Some(beta) = trace.beta.as_mut() {
            let row = (2..record.len())
                .map(|k| record[k].trim().parse::<f64>().map_err(|_| bad("beta")))
                .collect::<Result<Vec<_>>>()?;
            beta.push(row);
        }
    }
    Ok(trace)
}

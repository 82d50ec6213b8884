#![allow(dead_code)]

use faer::Mat;
use shrinkage_gibbs::{CenteredDesign, Dataset, RngStream};

/// Posterior moments of a single-predictor model computed on a grid.
#[derive(Clone, Copy, Debug)]
pub struct GridMoments {
    pub sigma2_mean: f64,
    pub beta_mean: f64,
}

/// `n` rows of `y = slope * x + e` with standard normal `x` and `e`.
pub fn one_predictor_design(n: usize, slope: f64, seed: u64) -> CenteredDesign {
    let mut rng = RngStream::new(seed);
    let x: Vec<f64> = (0..n).map(|_| rng.standard_normal()).collect();
    let y: Vec<f64> = x.iter().map(|v| slope * v + rng.standard_normal()).collect();
    let data = Dataset::new(y, Mat::from_fn(n, 1, |i, _| x[i]), None).unwrap();
    CenteredDesign::new(&data).unwrap()
}

fn log_normal_density(beta: f64, var: f64) -> f64 {
    -0.5 * (2.0 * std::f64::consts::PI * var).ln() - beta * beta / (2.0 * var)
}

/// `log p(beta | sigma2)` for the two-point mixture, summed over the
/// `tau in {zeta, kappa zeta}` support.
pub fn spike_slab_log_prior(w: f64, kappa: f64, zeta: f64) -> impl Fn(f64, f64) -> f64 {
    move |beta, sigma2| {
        let slab = w.ln() + log_normal_density(beta, sigma2 * kappa * zeta);
        let spike = (1.0 - w).ln() + log_normal_density(beta, sigma2 * zeta);
        let m = slab.max(spike);
        m + ((slab - m).exp() + (spike - m).exp()).ln()
    }
}

/// Exponential mixing of normal scales gives a Laplace prior with scale
/// `sigma / lambda`.
pub fn lasso_log_prior(lambda: f64) -> impl Fn(f64, f64) -> f64 {
    move |beta, sigma2| {
        let sigma = sigma2.sqrt();
        (lambda / (2.0 * sigma)).ln() - lambda * beta.abs() / sigma
    }
}

/// Brute-force integration of
/// `(sigma2)^{-(n-1)/2 - 1} exp(-RSS(beta) / (2 sigma2)) p(beta | sigma2)`
/// over a `beta x log(sigma2)` grid.
pub fn grid_posterior(
    design: &CenteredDesign,
    log_prior: impl Fn(f64, f64) -> f64,
    beta_points: usize,
    log_sigma2_points: usize,
) -> GridMoments {
    assert_eq!(design.p(), 1);
    let n = design.n() as f64;
    let g = design.gram()[(0, 0)];
    let xty = design.xty()[0];
    let yty = design.yty();

    let beta_ols = xty / g;
    let beta_half = beta_ols.abs() + 12.0 * (yty / g).sqrt();
    let (b_lo, b_step) = (-beta_half, 2.0 * beta_half / (beta_points - 1) as f64);
    let centre = (yty / (n - 1.0)).ln();
    let (u_lo, u_step) = (centre - 12.0, 24.0 / (log_sigma2_points - 1) as f64);

    let mut logs = Vec::with_capacity(beta_points * log_sigma2_points);
    let mut max = f64::NEG_INFINITY;
    for a in 0..log_sigma2_points {
        let u = u_lo + a as f64 * u_step;
        let sigma2 = u.exp();
        for b in 0..beta_points {
            let beta = b_lo + b as f64 * b_step;
            let rss = yty - 2.0 * beta * xty + beta * beta * g;
            // d sigma2 = sigma2 du
            let lf = -((n - 1.0) / 2.0) * u - rss / (2.0 * sigma2) + log_prior(beta, sigma2);
            max = max.max(lf);
            logs.push(lf);
        }
    }
    let (mut z, mut s2, mut bm) = (0.0, 0.0, 0.0);
    for a in 0..log_sigma2_points {
        let sigma2 = (u_lo + a as f64 * u_step).exp();
        for b in 0..beta_points {
            let beta = b_lo + b as f64 * b_step;
            let f = (logs[a * beta_points + b] - max).exp();
            z += f;
            s2 += f * sigma2;
            bm += f * beta;
        }
    }
    GridMoments { sigma2_mean: s2 / z, beta_mean: bm / z }
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Monte Carlo standard error of the mean, `sd / sqrt(n_eff)`.
pub fn mc_standard_error(trace: &[f64]) -> f64 {
    let m = mean(trace);
    let var = trace.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (trace.len() - 1) as f64;
    let (n_eff, _) = shrinkage_gibbs::diagnostics::effective_sample_size(trace).unwrap();
    (var / n_eff).sqrt()
}

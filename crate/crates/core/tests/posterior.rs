mod common;

use common::*;
use faer::Mat;
use shrinkage_gibbs::{run_chain, CenteredDesign, Dataset, PriorConfig, RngStream, SamplerConfig, SamplerKind};

fn chain(kind: SamplerKind, prior: &PriorConfig, design: &CenteredDesign, iterations: usize, seed: u64) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut cfg = SamplerConfig::new(kind, prior.clone(), iterations, seed);
    cfg.record_beta = true;
    let out = run_chain(&cfg, design).unwrap();
    (out.sigma2_trace, out.beta_trace.unwrap())
}

fn coordinate(beta: &[Vec<f64>], j: usize) -> Vec<f64> {
    beta.iter().map(|b| b[j]).collect()
}

#[test]
fn grid_matches_conjugate_closed_form() {
    let design = one_predictor_design(10, 0.7, 11);
    let tau = 2.5;
    let approx = grid_posterior(&design, move |b, s2| -0.5 * (2.0 * std::f64::consts::PI * s2 * tau).ln() - b * b / (2.0 * s2 * tau), 1501, 1501);

    let n = design.n() as f64;
    let g = design.gram()[(0, 0)];
    let xty = design.xty()[0];
    let scale = 0.5 * (design.yty() - xty * xty / (g + 1.0 / tau));
    let shape = 0.5 * (n - 1.0);
    let exact_sigma2 = scale / (shape - 1.0);
    let exact_beta = xty / (g + 1.0 / tau);
    assert!((approx.sigma2_mean / exact_sigma2 - 1.0).abs() < 1e-8, "{} vs {exact_sigma2}", approx.sigma2_mean);
    assert!((approx.beta_mean - exact_beta).abs() < 1e-8);
}

#[test]
fn grid_is_resolution_stable() {
    let design = one_predictor_design(10, 0.5, 12);
    let prior = || spike_slab_log_prior(0.5, 100.0, 0.01);
    let coarse = grid_posterior(&design, prior(), 1501, 1001);
    let fine = grid_posterior(&design, prior(), 3001, 2001);
    assert!((coarse.sigma2_mean / fine.sigma2_mean - 1.0).abs() < 1e-6);
}

fn check_against_grid(prior: PriorConfig, log_prior: impl Fn(f64, f64) -> f64, seed: u64) {
    let design = one_predictor_design(10, 0.5, seed);
    let oracle = grid_posterior(&design, log_prior, 2001, 2001);
    for (i, kind) in SamplerKind::ALL.into_iter().enumerate() {
        let (s2, beta) = chain(kind, &prior, &design, 60_000, seed * 10 + i as u64);
        let b = coordinate(&beta, 0);
        let z_s2 = (mean(&s2) - oracle.sigma2_mean) / mc_standard_error(&s2);
        let z_b = (mean(&b) - oracle.beta_mean) / mc_standard_error(&b);
        assert!(z_s2.abs() < 3.5, "{kind} sigma2: z = {z_s2}");
        assert!(z_b.abs() < 3.5, "{kind} beta: z = {z_b}");
    }
}

#[test]
fn spike_slab_chains_match_grid_oracle() {
    check_against_grid(PriorConfig::spike_slab(0.5, 100.0, 0.01).unwrap(), spike_slab_log_prior(0.5, 100.0, 0.01), 3);
}

#[test]
fn lasso_chains_match_grid_oracle() {
    check_against_grid(PriorConfig::lasso(1.0).unwrap(), lasso_log_prior(1.0), 4);
}

#[test]
fn lasso_samplers_agree_with_two_predictors() {
    let mut rng = RngStream::new(21);
    let n = 10;
    let x = Mat::from_fn(n, 2, |_, _| rng.standard_normal());
    let y: Vec<f64> = (0..n).map(|i| x[(i, 0)] - 0.5 * x[(i, 1)] + rng.standard_normal()).collect();
    let design = CenteredDesign::new(&Dataset::new(y, x, None).unwrap()).unwrap();
    let prior = PriorConfig::lasso(1.0).unwrap();

    let (s2a, ba) = chain(SamplerKind::TwoBlock, &prior, &design, 50_000, 1);
    let (s2b, bb) = chain(SamplerKind::ThreeBlock, &prior, &design, 50_000, 2);
    let combined = |a: &[f64], b: &[f64]| (mean(a) - mean(b)) / mc_standard_error(a).hypot(mc_standard_error(b));
    assert!(combined(&s2a, &s2b).abs() < 3.5);
    for j in 0..2 {
        let z = combined(&coordinate(&ba, j), &coordinate(&bb, j));
        assert!(z.abs() < 3.5, "beta_{j}: z = {z}");
    }
}

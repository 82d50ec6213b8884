//! Mixing diagnostics for a scalar trace.
//!
//! Autocorrelations use the biased estimator (every lag is divided by the
//! full sum of squares), which keeps the estimated sequence positive
//! semidefinite. The effective sample size truncates the autocorrelation sum
//! with Geyer's initial positive sequence on pair sums
//! `Γ_m = ρ_{2m} + ρ_{2m+1}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::samplers::ChainOutput;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcfSummary {
    /// `rho[k]` for `k = 0..=max_lag`.
    pub rho: Vec<f64>,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyReport {
    pub n: usize,
    pub rho1: f64,
    /// Not capped at `n`: antithetic traces can exceed it.
    pub n_eff: f64,
    pub truncation_lag: usize,
    pub wall_seconds: Option<f64>,
    /// `n_eff / wall_seconds`; absent when no positive wall time is known.
    pub n_eff_per_second: Option<f64>,
}

/// Default ACF length when a full ACF is requested: `min(N - 2, 10 ceil(sqrt N))`.
pub fn default_max_lag(n: usize) -> usize {
    let root = (n as f64).sqrt().ceil() as usize;
    n.saturating_sub(2).min(10 * root)
}

struct Centered {
    values: Vec<f64>,
    sum_sq: f64,
}

impl Centered {
    fn new(trace: &[f64]) -> Result<Self> {
        if trace.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("trace has non-finite values".into()));
        }
        let first = match trace.first() {
            Some(v) => *v,
            None => return Err(Error::InvalidInput("empty trace".into())),
        };
        if trace.iter().all(|v| *v == first) {
            return Err(Error::DegenerateTrace);
        }
        let mean = trace.iter().sum::<f64>() / trace.len() as f64;
        let values: Vec<f64> = trace.iter().map(|v| v - mean).collect();
        let sum_sq: f64 = values.iter().map(|v| v * v).sum();
        if !(sum_sq > 0.0) {
            return Err(Error::DegenerateTrace);
        }
        Ok(Self { values, sum_sq })
    }

    #[inline]
    fn rho(&self, lag: usize) -> f64 {
        let v = &self.values;
        if lag == 0 {
            return 1.0;
        }
        v[..v.len() - lag].iter().zip(&v[lag..]).map(|(a, b)| a * b).sum::<f64>() / self.sum_sq
    }
}

pub fn autocorrelation(trace: &[f64], max_lag: usize) -> Result<AcfSummary> {
    if trace.len() < max_lag + 2 {
        return Err(Error::InvalidInput(format!(
            "trace of length {} is too short for max_lag {max_lag}",
            trace.len()
        )));
    }
    let c = Centered::new(trace)?;
    Ok(AcfSummary { rho: (0..=max_lag).map(|k| c.rho(k)).collect(), n: trace.len() })
}

/// `N / (1 + 2 Σ ρ_k)` truncated at the first non-positive pair sum.
/// Returns the estimate and the truncation lag (the first lag left out).
pub fn effective_sample_size(trace: &[f64]) -> Result<(f64, usize)> {
    let n = trace.len();
    if n < 2 {
        return Err(Error::InvalidInput(format!("trace of length {n} is too short")));
    }
    let c = Centered::new(trace)?;
    let mut pair_sum = 0.0;
    let mut m = 0usize;
    while 2 * m + 1 < n {
        let gamma = c.rho(2 * m) + c.rho(2 * m + 1);
        if gamma <= 0.0 {
            break;
        }
        pair_sum += gamma;
        m += 1;
    }
    // -1 + 2 Σ_m Γ_m = 1 + 2 Σ_{k=1}^{2M+1} ρ_k
    let tau_int = (2.0 * pair_sum - 1.0).max(1.0 / (n as f64).log10().max(1.0));
    Ok((n as f64 / tau_int, 2 * m))
}

pub fn trace_report(trace: &[f64], wall_seconds: Option<f64>) -> Result<EfficiencyReport> {
    let rho1 = autocorrelation(trace, 1)?.rho[1];
    let (n_eff, truncation_lag) = effective_sample_size(trace)?;
    let n_eff_per_second = wall_seconds.filter(|w| *w > 0.0).map(|w| n_eff / w);
    Ok(EfficiencyReport { n: trace.len(), rho1, n_eff, truncation_lag, wall_seconds, n_eff_per_second })
}

/// Diagnostics of the recorded `sigma2` marginal of a chain.
pub fn chain_report(output: &ChainOutput) -> Result<EfficiencyReport> {
    trace_report(&output.sigma2_trace, Some(output.wall_seconds))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean_rho1: f64,
    pub mean_neff_per_second: Option<f64>,
    pub mean_n_eff: f64,
    pub chains: usize,
}

/// Arithmetic means across chains.
pub fn aggregate(reports: &[EfficiencyReport]) -> Result<Aggregate> {
    if reports.is_empty() {
        return Err(Error::InvalidInput("no reports to aggregate".into()));
    }
    let k = reports.len() as f64;
    let mean_rho1 = reports.iter().map(|r| r.rho1).sum::<f64>() / k;
    let mean_n_eff = reports.iter().map(|r| r.n_eff).sum::<f64>() / k;
    let mean_neff_per_second = reports
        .iter()
        .map(|r| r.n_eff_per_second)
        .sum::<Option<f64>>()
        .map(|s| s / k);
    Ok(Aggregate { mean_rho1, mean_neff_per_second, mean_n_eff, chains: reports.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rand_dist::RngStream;
    use proptest::prelude::*;

    fn ar1(phi: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = RngStream::new(seed);
        let sd = (1.0 - phi * phi).sqrt();
        let mut x = rng.standard_normal();
        (0..n)
            .map(|_| {
                x = phi * x + sd * rng.standard_normal();
                x
            })
            .collect()
    }

    fn report(rho1: f64, nps: Option<f64>) -> EfficiencyReport {
        EfficiencyReport {
            n: 10,
            rho1,
            n_eff: 5.0,
            truncation_lag: 2,
            wall_seconds: nps.map(|_| 1.0),
            n_eff_per_second: nps,
        }
    }

    #[test]
    fn acf_examples() {
        let acf = autocorrelation(&[1.0, 2.0, 3.0, 4.0], 1).unwrap();
        assert_eq!(acf.rho[0], 1.0);
        assert!((acf.rho[1] - 0.25).abs() < 1e-15);

        let x = ar1(0.9, 100_000, 1);
        let acf = autocorrelation(&x, 3).unwrap();
        assert!((acf.rho[1] - 0.9).abs() < 0.01, "rho1 {}", acf.rho[1]);
        assert!(acf.rho.iter().all(|r| r.abs() <= 1.0 + 1e-12));
    }

    #[test]
    fn acf_errors() {
        assert!(matches!(autocorrelation(&[2.0; 10], 1), Err(Error::DegenerateTrace)));
        assert!(matches!(autocorrelation(&[1.0, 2.0, 3.0], 2), Err(Error::InvalidInput(_))));
        assert!(matches!(effective_sample_size(&[3.0; 50]), Err(Error::DegenerateTrace)));
    }

    #[test]
    fn ess_iid() {
        let mut rng = RngStream::new(2);
        let x: Vec<f64> = (0..10_000).map(|_| rng.standard_normal()).collect();
        let (ess, lag) = effective_sample_size(&x).unwrap();
        let r = ess / 1e4;
        assert!((0.8..=1.2).contains(&r), "ratio {r}");
        assert_eq!(lag % 2, 0);
    }

    #[test]
    fn ess_ar1() {
        let (ess, _) = effective_sample_size(&ar1(0.5, 100_000, 3)).unwrap();
        assert!((ess / 1e5 - 1.0 / 3.0).abs() < 0.05, "ratio {}", ess / 1e5);

        let (ess, _) = effective_sample_size(&ar1(0.99, 100_000, 4)).unwrap();
        let target = 0.01 / 1.99;
        let r = ess / 1e5 / target;
        assert!((0.5..=2.0).contains(&r), "relative {r}");
    }

    #[test]
    fn ess_antithetic_is_finite() {
        let x: Vec<f64> = (0..1000).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let (ess, lag) = effective_sample_size(&x).unwrap();
        assert!(ess.is_finite() && ess > 1000.0);
        assert_eq!(lag % 2, 0);
    }

    #[test]
    fn report_and_aggregate() {
        let x = ar1(0.3, 2_000, 5);
        let r = trace_report(&x, Some(2.0)).unwrap();
        assert!((r.n_eff_per_second.unwrap() - r.n_eff / 2.0).abs() < 1e-12);
        assert_eq!(trace_report(&x, Some(2.0)).unwrap(), r);
        assert_eq!(trace_report(&x, None).unwrap().n_eff_per_second, None);

        let one = aggregate(&[report(0.2, Some(3.0))]).unwrap();
        assert_eq!((one.mean_rho1, one.mean_neff_per_second), (0.2, Some(3.0)));
        let two = aggregate(&[report(0.2, Some(1.0)), report(0.4, Some(3.0))]).unwrap();
        assert!((two.mean_rho1 - 0.3).abs() < 1e-15);
        assert_eq!(two.mean_neff_per_second, Some(2.0));
        let swapped = aggregate(&[report(0.4, Some(3.0)), report(0.2, Some(1.0))]).unwrap();
        assert_eq!(two, swapped);
        assert!(aggregate(&[]).is_err());
    }

    #[test]
    fn default_lag() {
        assert_eq!(default_max_lag(100), 98);
        assert_eq!(default_max_lag(10_000), 1000);
        assert_eq!(default_max_lag(3), 1);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn affine_and_reversal_invariance(
            seed in 0u64..10_000,
            phi in -0.9f64..0.95,
            scale in 0.01f64..100.0,
            shift in -100.0f64..100.0,
        ) {
            let x = ar1(phi, 500, seed);
            let y: Vec<f64> = x.iter().map(|v| scale * v + shift).collect();
            let ax = autocorrelation(&x, 10).unwrap();
            let ay = autocorrelation(&y, 10).unwrap();
            for (a, b) in ax.rho.iter().zip(&ay.rho) {
                prop_assert!((a - b).abs() < 1e-10);
            }
            let (ex, lx) = effective_sample_size(&x).unwrap();
            let (ey, ly) = effective_sample_size(&y).unwrap();
            prop_assert!((ex - ey).abs() < 1e-10 * ex);
            prop_assert_eq!(lx, ly);

            let rev: Vec<f64> = x.iter().rev().copied().collect();
            let (er, _) = effective_sample_size(&rev).unwrap();
            prop_assert!((ex - er).abs() < 1e-10 * ex);
            prop_assert!(ex.is_finite() && ex > 0.0);
            prop_assert_eq!(lx % 2, 0);
        }
    }
}

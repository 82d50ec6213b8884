//! Seedable random-variate primitives.
//!
//! Every stream is a Xoshiro256++ generator seeded through SplitMix64
//! (`Xoshiro256PlusPlus::seed_from_u64`), so a seed pins the whole sequence
//! for a given build on any platform. Normal and exponential variates use
//! the ziggurat samplers from `rand_distr`; gamma, inverse-gamma, inverse
//! Gaussian and Student-t are built here on top of them.

use rand::{Rng, RngCore, SeedableRng};
use rand_distr::{Exp1, StandardNormal};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::error::{Error, Result};
use crate::model::PrecisionFactor;

/// A reproducible random stream owned by exactly one chain.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    inner: Xoshiro256PlusPlus,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self { seed, inner: Xoshiro256PlusPlus::seed_from_u64(seed) }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    #[inline]
    pub fn standard_normal(&mut self) -> f64 {
        self.sample(StandardNormal)
    }

    /// Uniform on `[0, 1)`.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.random::<f64>()
    }

    /// Uniform on `(0, 1]`.
    #[inline]
    fn uniform_open0(&mut self) -> f64 {
        1.0 - self.random::<f64>()
    }
}

impl RngCore for RngStream {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `base ⊕ hash(parts)`. Distinct part tuples give distinct, well mixed
/// seeds for the same base.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let h = parts
        .iter()
        .fold(0x6A09_E667_F3BC_C909u64, |acc, &part| splitmix64(acc ^ splitmix64(part)));
    base ^ h
}

/// Gamma(shape, rate = 1) by Marsaglia and Tsang's squeeze method; shapes
/// below one are boosted with `G(a) = G(a + 1) U^{1/a}`.
fn standard_gamma(shape: f64, rng: &mut RngStream) -> f64 {
    if shape < 1.0 {
        loop {
            let g = standard_gamma(shape + 1.0, rng);
            let x = g * rng.uniform_open0().powf(1.0 / shape);
            if x > 0.0 {
                return x;
            }
        }
    }
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let z = rng.standard_normal();
        let v = 1.0 + c * z;
        if v <= 0.0 {
            continue;
        }
        let v = v * v * v;
        let u = rng.uniform_open0();
        let z2 = z * z;
        if u < 1.0 - 0.0331 * z2 * z2 {
            return d * v;
        }
        if u.ln() < 0.5 * z2 + d * (1.0 - v + v.ln()) {
            return d * v;
        }
    }
}

pub fn draw_gamma(shape: f64, rate: f64, rng: &mut RngStream) -> Result<f64> {
    if !(shape > 0.0 && shape.is_finite()) || !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "gamma needs shape > 0 and rate > 0, got ({shape}, {rate})"
        )));
    }
    Ok(standard_gamma(shape, rng) / rate)
}

/// Inverse-gamma with density proportional to `x^{-shape-1} exp(-scale/x)`.
pub fn draw_inverse_gamma(shape: f64, scale: f64, rng: &mut RngStream) -> Result<f64> {
    if !(shape > 0.0 && shape.is_finite()) || !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "inverse gamma needs shape > 0 and scale > 0, got ({shape}, {scale})"
        )));
    }
    let x = scale / standard_gamma(shape, rng);
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::NumericalFailure(format!("inverse gamma draw overflowed (shape {shape}, scale {scale})")))
    }
}

/// Inverse Gaussian by the Michael–Schucany–Haas transform: one chi-square
/// variate picks the pair of roots, one uniform picks between them.
pub fn draw_inverse_gaussian(mean: f64, shape: f64, rng: &mut RngStream) -> Result<f64> {
    if !(mean > 0.0 && mean.is_finite()) || !(shape > 0.0 && shape.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "inverse Gaussian needs mean > 0 and shape > 0, got ({mean}, {shape})"
        )));
    }
    let z = rng.standard_normal();
    let y = mean * z * z;
    // smaller root, written without the cancellation in mu + mu y/2l - ...
    let x = if y > 0.0 {
        let s = y + (y * y + 4.0 * shape * y).sqrt();
        mean * 4.0 * shape * y / (s * s)
    } else {
        mean
    };
    let u = rng.uniform();
    if u <= mean / (mean + x) {
        Ok(x)
    } else {
        Ok(mean * mean / x)
    }
}

/// Student-t with two degrees of freedom, `Z / sqrt(chi2_2 / 2)`.
pub fn draw_student_t2(rng: &mut RngStream) -> f64 {
    let z = rng.standard_normal();
    loop {
        let e: f64 = rng.sample(Exp1);
        if e > 0.0 {
            return z / e.sqrt();
        }
    }
}

#[inline]
pub fn draw_bernoulli(prob: f64, rng: &mut RngStream) -> bool {
    rng.uniform() < prob
}

/// Draws from `N(mean, sigma2 A⁻¹)` given the Cholesky factor of `A`.
pub fn draw_mvn_mean_precision(
    mean: &[f64],
    sigma2: f64,
    precision_factor: &PrecisionFactor,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    if mean.len() != precision_factor.dim() {
        return Err(Error::InvalidInput(format!(
            "mean has {} entries for a {}-dimensional precision",
            mean.len(),
            precision_factor.dim()
        )));
    }
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::InvalidParameter(format!("sigma2 must be positive, got {sigma2}")));
    }
    let mut z: Vec<f64> = (0..mean.len()).map(|_| rng.standard_normal()).collect();
    precision_factor.apply_inverse_transpose(&mut z);
    let sigma = sigma2.sqrt();
    Ok(mean.iter().zip(&z).map(|(m, e)| m + sigma * e).collect())
}

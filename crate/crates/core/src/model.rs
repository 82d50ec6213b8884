//! Domain types for the shrinkage regression model and the dense linear
//! algebra shared by every sampler sweep.
//!
//! The intercept is integrated out, so samplers only ever see the centered
//! response `y_tilde` and a design whose columns have mean zero and squared
//! Euclidean norm `n`.

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::cholesky::llt::factor::{
    cholesky_in_place, cholesky_in_place_scratch, LltRegularization,
};
use faer::linalg::triangular_solve::{
    solve_lower_triangular_in_place, solve_upper_triangular_in_place,
};
use faer::{Mat, MatMut, MatRef, Par};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the squared column norms of a standardized design.
pub const STANDARDIZE_NORM_TOL: f64 = 1e-8;
/// Tolerance on the column means of a standardized design.
pub const STANDARDIZE_MEAN_TOL: f64 = 1e-10;

/// Response vector and design matrix of a linear regression problem.
#[derive(Clone, Debug)]
pub struct Dataset {
    y: Vec<f64>,
    x: Mat<f64>,
    names: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(y: Vec<f64>, x: Mat<f64>, names: Option<Vec<String>>) -> Result<Self> {
        let n = y.len();
        if n < 3 {
            return Err(Error::InvalidData(format!("need at least 3 observations, got {n}")));
        }
        if x.nrows() != n {
            return Err(Error::InvalidData(format!(
                "design has {} rows but the response has {n} entries",
                x.nrows()
            )));
        }
        if x.ncols() == 0 {
            return Err(Error::InvalidData("design has no columns".into()));
        }
        if let Some(names) = &names {
            if names.len() != x.ncols() {
                return Err(Error::InvalidData(format!(
                    "{} column names for {} columns",
                    names.len(),
                    x.ncols()
                )));
            }
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("response has non-finite entries".into()));
        }
        for j in 0..x.ncols() {
            if x.col_as_slice(j).iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidData(format!("column {j} has non-finite entries")));
            }
        }
        Ok(Self { y, x, names })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn x(&self) -> MatRef<'_, f64> {
        self.x.as_ref()
    }

    pub fn names(&self) -> Option<&[String]> {
        self.names.as_deref()
    }
}

/// Centered response, standardized design and the cross products reused by
/// every sweep. Shared read-only between chains.
#[derive(Clone, Debug)]
pub struct CenteredDesign {
    y_tilde: Vec<f64>,
    y_bar: f64,
    x_std: Mat<f64>,
    gram: Mat<f64>,
    xty: Vec<f64>,
    yty: f64,
}

impl CenteredDesign {
    pub fn new(data: &Dataset) -> Result<Self> {
        let (y_tilde, y_bar) = center_response(data.y())?;
        let yty: f64 = y_tilde.iter().map(|v| v * v).sum();
        if yty <= 0.0 {
            return Err(Error::InvalidData("response is constant".into()));
        }
        let x_std = standardize_columns(data.x())?;
        check_standardized(x_std.as_ref())?;
        let gram = x_std.transpose() * &x_std;
        let xty = mat_t_vec(x_std.as_ref(), &y_tilde);
        Ok(Self { y_tilde, y_bar, x_std, gram, xty, yty })
    }

    /// Uses an already centered response and a design exactly as given,
    /// without standardizing its columns. Only the response centering is
    /// checked.
    pub fn from_centered(y_tilde: Vec<f64>, x: Mat<f64>) -> Result<Self> {
        let n = y_tilde.len();
        if n < 3 || x.nrows() != n || x.ncols() == 0 {
            return Err(Error::InvalidData(format!(
                "need n >= 3 and a conforming design, got n = {n} and {}x{}",
                x.nrows(),
                x.ncols()
            )));
        }
        if y_tilde.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("response has non-finite entries".into()));
        }
        let sum: f64 = y_tilde.iter().sum();
        let yty: f64 = y_tilde.iter().map(|v| v * v).sum();
        if sum.abs() > 1e-10 * n as f64 * yty.sqrt().max(1.0) {
            return Err(Error::InvalidData(format!("response is not centered (sum {sum:e})")));
        }
        if yty <= 0.0 {
            return Err(Error::InvalidData("response is constant".into()));
        }
        let gram = x.transpose() * &x;
        let xty = mat_t_vec(x.as_ref(), &y_tilde);
        Ok(Self { y_tilde, y_bar: 0.0, x_std: x, gram, xty, yty })
    }

    pub fn n(&self) -> usize {
        self.y_tilde.len()
    }

    pub fn p(&self) -> usize {
        self.x_std.ncols()
    }

    pub fn y_tilde(&self) -> &[f64] {
        &self.y_tilde
    }

    pub fn y_bar(&self) -> f64 {
        self.y_bar
    }

    pub fn x_std(&self) -> MatRef<'_, f64> {
        self.x_std.as_ref()
    }

    pub fn gram(&self) -> MatRef<'_, f64> {
        self.gram.as_ref()
    }

    /// `X_stdᵀ ỹ`.
    pub fn xty(&self) -> &[f64] {
        &self.xty
    }

    /// `‖ỹ‖²`.
    pub fn yty(&self) -> f64 {
        self.yty
    }

    /// Squared residual norm `‖ỹ − X_std β‖²`.
    pub fn residual_sum_of_squares(&self, beta: &[f64]) -> f64 {
        let fitted = mat_vec(self.x_std.as_ref(), beta);
        self.y_tilde
            .iter()
            .zip(&fitted)
            .map(|(y, f)| (y - f) * (y - f))
            .sum()
    }
}

fn check_standardized(x: MatRef<'_, f64>) -> Result<()> {
    let n = x.nrows() as f64;
    for j in 0..x.ncols() {
        let col: Vec<f64> = (0..x.nrows()).map(|i| x[(i, j)]).collect();
        let mean = col.iter().sum::<f64>() / n;
        let ss: f64 = col.iter().map(|v| v * v).sum();
        if mean.abs() > STANDARDIZE_MEAN_TOL || (ss - n).abs() > STANDARDIZE_NORM_TOL * n.max(1.0) {
            return Err(Error::NumericalFailure(format!(
                "column {j} failed standardization check (mean {mean:e}, squared norm {ss})"
            )));
        }
    }
    Ok(())
}

/// A hyperparameter shared across coordinates or given per coordinate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Hyper {
    Shared(f64),
    PerCoordinate(Vec<f64>),
}

impl Hyper {
    #[inline]
    pub fn at(&self, j: usize) -> f64 {
        match self {
            Hyper::Shared(v) => *v,
            Hyper::PerCoordinate(v) => v[j],
        }
    }

    fn values(&self) -> &[f64] {
        match self {
            Hyper::Shared(v) => std::slice::from_ref(v),
            Hyper::PerCoordinate(v) => v,
        }
    }

    fn check_len(&self, name: &str, p: usize) -> Result<()> {
        match self {
            Hyper::PerCoordinate(v) if v.len() != p => Err(Error::InvalidParameter(format!(
                "{name} has {} entries but the design has {p} columns",
                v.len()
            ))),
            _ => Ok(()),
        }
    }
}

impl From<f64> for Hyper {
    fn from(v: f64) -> Self {
        Hyper::Shared(v)
    }
}

/// Two-point prior on each `tau_j`: `kappa_j * zeta_j` with probability
/// `w_j`, `zeta_j` otherwise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpikeSlab {
    pub w: Hyper,
    pub kappa: Hyper,
    pub zeta: Hyper,
}

impl SpikeSlab {
    #[inline]
    pub fn spike(&self, j: usize) -> f64 {
        self.zeta.at(j)
    }

    #[inline]
    pub fn slab(&self, j: usize) -> f64 {
        self.kappa.at(j) * self.zeta.at(j)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PriorConfig {
    SpikeSlab(SpikeSlab),
    /// Exponential(`lambda²/2`) prior on each `tau_j`.
    Lasso { lambda: f64 },
}

impl PriorConfig {
    pub fn spike_slab(w: f64, kappa: f64, zeta: f64) -> Result<Self> {
        let prior = PriorConfig::SpikeSlab(SpikeSlab {
            w: w.into(),
            kappa: kappa.into(),
            zeta: zeta.into(),
        });
        prior.validate(None)?;
        Ok(prior)
    }

    pub fn lasso(lambda: f64) -> Result<Self> {
        let prior = PriorConfig::Lasso { lambda };
        prior.validate(None)?;
        Ok(prior)
    }

    /// Checks parameter ranges and, when `p` is given, per-coordinate lengths.
    pub fn validate(&self, p: Option<usize>) -> Result<()> {
        match self {
            PriorConfig::SpikeSlab(ss) => {
                if let Some(p) = p {
                    ss.w.check_len("w", p)?;
                    ss.kappa.check_len("kappa", p)?;
                    ss.zeta.check_len("zeta", p)?;
                }
                if !ss.w.values().iter().all(|&w| w > 0.0 && w < 1.0) {
                    return Err(Error::InvalidParameter("w must lie in (0, 1)".into()));
                }
                if !ss.kappa.values().iter().all(|&k| k > 1.0 && k.is_finite()) {
                    return Err(Error::InvalidParameter("kappa must be > 1".into()));
                }
                if !ss.zeta.values().iter().all(|&z| z > 0.0 && z.is_finite()) {
                    return Err(Error::InvalidParameter("zeta must be > 0".into()));
                }
                Ok(())
            }
            PriorConfig::Lasso { lambda } => {
                if *lambda > 0.0 && lambda.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter("lambda must be > 0".into()))
                }
            }
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            PriorConfig::SpikeSlab(_) => "spike-slab",
            PriorConfig::Lasso { .. } => "lasso",
        }
    }
}

/// Current `(beta, sigma2, tau)` of one Markov chain.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainState {
    pub beta: Vec<f64>,
    pub sigma2: f64,
    pub tau: Vec<f64>,
}

impl ChainState {
    /// Starting state with `tau = 1_p`. Only `beta` and `sigma2` feed the
    /// first sweep.
    pub fn initial(beta: Vec<f64>, sigma2: f64) -> Self {
        let p = beta.len();
        Self { beta, sigma2, tau: vec![1.0; p] }
    }
}

pub fn center_response(y: &[f64]) -> Result<(Vec<f64>, f64)> {
    if y.is_empty() {
        return Err(Error::InvalidData("empty response".into()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidData("response has non-finite entries".into()));
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    Ok((y.iter().map(|v| v - mean).collect(), mean))
}

/// Centers each column and rescales it to squared Euclidean norm `n`.
pub fn standardize_columns(x: MatRef<'_, f64>) -> Result<Mat<f64>> {
    let n = x.nrows();
    let mut out = Mat::<f64>::zeros(n, x.ncols());
    for j in 0..x.ncols() {
        let first = x[(0, j)];
        if (0..n).all(|i| x[(i, j)] == first) {
            return Err(Error::DegenerateColumn(j));
        }
        let mean = (0..n).map(|i| x[(i, j)]).sum::<f64>() / n as f64;
        let col = out.col_as_slice_mut(j);
        for (i, c) in col.iter_mut().enumerate() {
            *c = x[(i, j)] - mean;
        }
        let ss: f64 = col.iter().map(|v| v * v).sum();
        if !(ss > 0.0) || !ss.is_finite() {
            return Err(Error::DegenerateColumn(j));
        }
        let scale = (n as f64 / ss).sqrt();
        col.iter_mut().for_each(|v| *v *= scale);
    }
    Ok(out)
}

/// `A_tau = gram + diag(1 / tau_j)`.
pub fn posterior_precision(gram: MatRef<'_, f64>, tau: &[f64]) -> Result<Mat<f64>> {
    let p = gram.ncols();
    if gram.nrows() != p || tau.len() != p {
        return Err(Error::InvalidInput(format!(
            "gram is {}x{} but tau has {} entries",
            gram.nrows(),
            p,
            tau.len()
        )));
    }
    if let Some((index, &value)) = tau.iter().enumerate().find(|(_, t)| !(**t > 0.0)) {
        return Err(Error::InvalidTau { index, value });
    }
    let mut a = gram.to_owned();
    for (j, t) in tau.iter().enumerate() {
        a[(j, j)] += 1.0 / t;
    }
    Ok(a)
}

/// Lower Cholesky factor `L` of a symmetric positive definite matrix,
/// `A = L Lᵀ`.
#[derive(Clone, Debug)]
pub struct PrecisionFactor {
    l: Mat<f64>,
    jitter: f64,
}

impl PrecisionFactor {
    /// Factors `a`. On failure a ridge of `1e-10 * trace(a) / p` is added
    /// once and the factorization retried.
    pub fn new(a: MatRef<'_, f64>) -> Result<Self> {
        let p = a.nrows();
        if a.ncols() != p || p == 0 {
            return Err(Error::InvalidInput(format!(
                "precision matrix must be square and non-empty, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        let mut buf = MemBuffer::new(cholesky_in_place_scratch::<f64>(p, Par::Seq, Default::default()));
        let mut l = a.to_owned();
        if try_cholesky(l.as_mut(), &mut buf) {
            zero_upper(&mut l);
            return Ok(Self { l, jitter: 0.0 });
        }
        let trace: f64 = (0..p).map(|j| a[(j, j)]).sum();
        let jitter = 1e-10 * trace / p as f64;
        if !(jitter > 0.0) || !jitter.is_finite() {
            return Err(Error::NumericalFailure("Cholesky failed and trace is not positive".into()));
        }
        let mut l = a.to_owned();
        for j in 0..p {
            l[(j, j)] += jitter;
        }
        if try_cholesky(l.as_mut(), &mut buf) {
            zero_upper(&mut l);
            return Ok(Self { l, jitter });
        }
        Err(Error::NumericalFailure(format!(
            "Cholesky factorization failed for a {p}x{p} matrix even with jitter {jitter:e}"
        )))
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn l(&self) -> MatRef<'_, f64> {
        self.l.as_ref()
    }

    /// Ridge that had to be added before the factorization succeeded.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x = rhs.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_in_place(&self, rhs: &mut [f64]) {
        assert_eq!(rhs.len(), self.dim());
        let n = rhs.len();
        let mut col = MatMut::from_column_major_slice_mut(rhs, n, 1);
        solve_lower_triangular_in_place(self.l.as_ref(), col.as_mut(), Par::Seq);
        solve_upper_triangular_in_place(self.l.transpose(), col.as_mut(), Par::Seq);
    }

    pub fn solve_mat(&self, rhs: MatRef<'_, f64>) -> Mat<f64> {
        assert_eq!(rhs.nrows(), self.dim());
        let mut x = rhs.to_owned();
        solve_lower_triangular_in_place(self.l.as_ref(), x.as_mut(), Par::Seq);
        solve_upper_triangular_in_place(self.l.transpose(), x.as_mut(), Par::Seq);
        x
    }

    /// Overwrites `z` with `L⁻ᵀ z`. For standard normal `z` the result has
    /// covariance `A⁻¹`.
    pub fn apply_inverse_transpose(&self, z: &mut [f64]) {
        assert_eq!(z.len(), self.dim());
        let n = z.len();
        let col = MatMut::from_column_major_slice_mut(z, n, 1);
        solve_upper_triangular_in_place(self.l.transpose(), col, Par::Seq);
    }
}

fn try_cholesky(a: MatMut<'_, f64>, buf: &mut MemBuffer) -> bool {
    let stack = MemStack::new(buf);
    cholesky_in_place(a, LltRegularization::default(), Par::Seq, stack, Default::default()).is_ok()
}

fn zero_upper(l: &mut Mat<f64>) {
    let p = l.nrows();
    for j in 1..p {
        for i in 0..j {
            l[(i, j)] = 0.0;
        }
    }
}

/// Solves `A x = rhs` by Cholesky and returns the factorization alongside
/// the solution so that covariance draws can reuse it.
pub fn solve_precision(a: MatRef<'_, f64>, rhs: &[f64]) -> Result<(Vec<f64>, PrecisionFactor)> {
    if rhs.len() != a.nrows() {
        return Err(Error::InvalidInput(format!(
            "rhs has {} entries for a {}x{} matrix",
            rhs.len(),
            a.nrows(),
            a.ncols()
        )));
    }
    let factor = PrecisionFactor::new(a)?;
    let x = factor.solve(rhs);
    Ok((x, factor))
}

pub(crate) fn mat_vec(a: MatRef<'_, f64>, v: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.ncols(), v.len());
    let mut out = vec![0.0; a.nrows()];
    for (j, &vj) in v.iter().enumerate() {
        if vj == 0.0 {
            continue;
        }
        let col = a.col(j);
        for (i, o) in out.iter_mut().enumerate() {
            *o += col[i] * vj;
        }
    }
    out
}

pub(crate) fn mat_t_vec(a: MatRef<'_, f64>, v: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.nrows(), v.len());
    (0..a.ncols())
        .map(|j| {
            let col = a.col(j);
            v.iter().enumerate().map(|(i, vi)| col[i] * vi).sum()
        })
        .collect()
}

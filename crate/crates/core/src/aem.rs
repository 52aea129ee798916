//! Approximation error method: Gaussian statistics of the model error
//! `ε = A·x − Ã·x` and the whitened data-fidelity gradient they induce.

use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::error::{check_shape, Error, Result};
use crate::grid::{Grid, Image, Measurement};
use crate::linalg::{cholesky, gemm, lower_inverse, matvec, matvec_t};
use crate::operators::LinearOp;

/// Mean, covariance and whitening factor of the model error.
///
/// `l` is lower triangular with `lᵀ·l = (gamma + jitter·I)⁻¹`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorStats {
    pub eta: Measurement,
    pub gamma: Vec<f64>,
    pub l: Vec<f64>,
    pub jitter: f64,
}

impl ErrorStats {
    /// Whitens `gamma` (plus an optional additive noise variance on the
    /// diagonal) and bundles it with `eta`.
    pub fn new(eta: Measurement, gamma: Vec<f64>, jitter: Option<f64>, noise_var: f64) -> Result<Self> {
        let d = eta.len();
        if gamma.len() != d * d {
            return Err(Error::Shape {
                expected: (d, d),
                got: (gamma.len(), 1),
            });
        }
        if !(noise_var >= 0.0) {
            return Err(Error::Input(alloc::format!("noise variance must be ≥ 0, got {noise_var}")));
        }
        let mut merged = gamma.clone();
        for i in 0..d {
            merged[i * d + i] += noise_var;
        }
        let jitter = jitter.unwrap_or_else(|| default_jitter(&merged, d));
        let l = whiten(&merged, d, jitter)?;
        Ok(Self { eta, gamma, l, jitter })
    }

    pub fn dim(&self) -> usize {
        self.eta.len()
    }

    /// `Lᵀ·L·r`.
    pub fn precision_apply(&self, r: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let z = matvec(&self.l, d, d, r);
        matvec_t(&self.l, d, d, &z)
    }

    /// `L·r`.
    pub fn whiten_apply(&self, r: &[f64]) -> Vec<f64> {
        matvec(&self.l, self.dim(), self.dim(), r)
    }

    /// The same model with the covariance (and jitter) divided by `s²`, so the
    /// whitening factor becomes `s·L`. This rescales the whitened data term
    /// by `s²` without changing which images it prefers.
    pub fn rescaled(&self, s: f64) -> Result<Self> {
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::Input(alloc::format!("scale must be positive and finite, got {s}")));
        }
        let inv = 1.0 / (s * s);
        Ok(Self {
            eta: self.eta.clone(),
            gamma: self.gamma.iter().map(|v| v * inv).collect(),
            l: self.l.iter().map(|v| v * s).collect(),
            jitter: self.jitter * inv,
        })
    }
}

/// `‖L·Ã‖` by power iteration on `Ã*LᵀLÃ`.
pub fn whitened_norm(atilde: &dyn LinearOp, stats: &ErrorStats, iterations: usize, seed: u64) -> Result<f64> {
    let (dr, dc) = atilde.domain_shape();
    let mut v = crate::rng::normal_grid(&mut crate::rng::stream_rng(seed, 0x7768), dr, dc);
    let mut sigma = 0.0;
    for _ in 0..iterations.max(1) {
        let nv = v.norm();
        if nv == 0.0 {
            return Ok(0.0);
        }
        v.scale(1.0 / nv);
        let av = atilde.apply(&v)?;
        let w = stats.whiten_apply(av.as_slice());
        sigma = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        let p = stats.precision_apply(av.as_slice());
        v = atilde.adjoint(&Grid::from_vec(av.rows(), av.cols(), p)?)?;
    }
    Ok(sigma)
}

/// `1e−6·trace(Γ)/d`, floored at `1e−12` so a zero covariance stays invertible.
pub fn default_jitter(gamma: &[f64], d: usize) -> f64 {
    let trace: f64 = (0..d).map(|i| gamma[i * d + i]).sum();
    (1e-6 * trace / d as f64).max(1e-12)
}

/// Mean and unbiased second-moment covariance of the model error over a set
/// of images: `η = (1/N)Σεᵢ`, `Γ = (1/(N−1))Σεᵢεᵢᵀ − ηηᵀ`.
pub fn estimate_error_stats(
    samples: &[Image],
    a: &dyn LinearOp,
    atilde: &dyn LinearOp,
) -> Result<(Measurement, Vec<f64>)> {
    let errors = samples
        .iter()
        .map(|x| Ok(a.apply(x)?.sub(&atilde.apply(x)?)))
        .collect::<Result<Vec<_>>>()?;
    stats_from_errors(&errors)
}

/// [`estimate_error_stats`] on precomputed error samples.
pub fn stats_from_errors(errors: &[Measurement]) -> Result<(Measurement, Vec<f64>)> {
    let n = errors.len();
    if n < 2 {
        return Err(Error::Statistics(alloc::format!(
            "need at least 2 error samples for an unbiased covariance, got {n}"
        )));
    }
    let (rows, cols) = errors[0].shape();
    let d = rows * cols;
    let mut stacked = Vec::with_capacity(n * d);
    let mut eta = Grid::zeros(rows, cols);
    for e in errors {
        check_shape((rows, cols), e.shape())?;
        stacked.extend_from_slice(e.as_slice());
        eta.axpy(1.0 / n as f64, e);
    }
    let mut gamma = vec![0.0; d * d];
    gemm(d, n, d, &stacked, true, &stacked, false, 0.0, &mut gamma);
    let inv = 1.0 / (n - 1) as f64;
    let et = eta.as_slice();
    for i in 0..d {
        for j in 0..d {
            gamma[i * d + j] = gamma[i * d + j] * inv - et[i] * et[j];
        }
    }
    // Exact symmetry regardless of kernel summation order.
    for i in 0..d {
        for j in i + 1..d {
            let s = 0.5 * (gamma[i * d + j] + gamma[j * d + i]);
            gamma[i * d + j] = s;
            gamma[j * d + i] = s;
        }
    }
    Ok((eta, gamma))
}

/// Lower-triangular `L = C⁻¹` where `C·Cᵀ = Γ + jitter·I`, so that
/// `LᵀL = (Γ + jitter·I)⁻¹`.
pub fn whiten(gamma: &[f64], d: usize, jitter: f64) -> Result<Vec<f64>> {
    if gamma.len() != d * d {
        return Err(Error::Shape {
            expected: (d, d),
            got: (gamma.len(), 1),
        });
    }
    if !(jitter >= 0.0) {
        return Err(Error::Input(alloc::format!("jitter must be ≥ 0, got {jitter}")));
    }
    let scale = gamma.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for i in 0..d {
        for j in i + 1..d {
            if (gamma[i * d + j] - gamma[j * d + i]).abs() > 1e-10 * scale {
                return Err(Error::Input(alloc::format!(
                    "covariance is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    let mut reg = gamma.to_vec();
    for i in 0..d {
        reg[i * d + i] += jitter;
    }
    let c = cholesky(&reg, d)?;
    Ok(lower_inverse(&c, d))
}

/// `Ã*·LᵀL·(Ã·x − y + η)`, the gradient of `½‖L(Ãx − y + η)‖²`.
pub fn aem_gradient(x: &Image, y: &Measurement, atilde: &dyn LinearOp, stats: &ErrorStats) -> Result<Image> {
    let r = aem_residual(x, y, atilde, stats)?;
    let p = stats.precision_apply(r.as_slice());
    atilde.adjoint(&Grid::from_vec(r.rows(), r.cols(), p)?)
}

/// `½‖L(Ãx − y + η)‖²`.
pub fn aem_objective(x: &Image, y: &Measurement, atilde: &dyn LinearOp, stats: &ErrorStats) -> Result<f64> {
    let r = aem_residual(x, y, atilde, stats)?;
    let w = stats.whiten_apply(r.as_slice());
    Ok(0.5 * w.iter().map(|v| v * v).sum::<f64>())
}

fn aem_residual(x: &Image, y: &Measurement, atilde: &dyn LinearOp, stats: &ErrorStats) -> Result<Measurement> {
    check_shape(atilde.range_shape(), y.shape())?;
    check_shape(y.shape(), stats.eta.shape())?;
    let mut r = atilde.apply(x)?.sub(y);
    r.axpy(1.0, &stats.eta);
    Ok(r)
}

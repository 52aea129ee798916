//! Photoacoustic forward models for a line detector on the top row of the image.
//!
//! [`PatAccurate`] propagates the initial pressure with the exact spectral
//! solution of the homogeneous wave equation on a zero-padded periodic grid.
//! [`PatApprox`] maps the (equally padded) image spectrum onto a `(k₁, ω)` grid through the
//! dispersion relation with nearest-bin resampling and an angle-thresholded
//! Jacobian weight, which is fast but aliased.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
#[cfg(not(feature = "std"))]
use num_traits::Float;

use super::LinearOp;
use crate::error::{check_shape, Error, Result};
use crate::fft::{wavenumber, Fft2, FftPlan};
use crate::grid::Grid;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Geometry and discretisation shared by both photoacoustic models.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PatConfig {
    pub n: usize,
    /// Sound speed.
    pub c: f64,
    pub dx: f64,
    pub dt: f64,
    pub n_t: usize,
    /// Largest accepted incidence angle from the detector normal, in degrees.
    pub theta_max: f64,
    /// Zero-padding multiple for the accurate propagator.
    pub pad_factor: usize,
}

impl Default for PatConfig {
    fn default() -> Self {
        Self::with_size(64)
    }
}

impl PatConfig {
    pub fn with_size(n: usize) -> Self {
        Self {
            n,
            c: 1.0,
            dx: 1.0,
            dt: 1.0,
            n_t: n,
            theta_max: 60.0,
            pad_factor: 2,
        }
    }

    pub fn image_shape(&self) -> (usize, usize) {
        (self.n, self.n)
    }

    pub fn measurement_shape(&self) -> (usize, usize) {
        (self.n, self.n_t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 4 || self.n % 2 != 0 {
            return Err(Error::Config(alloc::format!(
                "grid size must be even and >= 4, got {}",
                self.n
            )));
        }
        if !(self.c > 0.0 && self.dx > 0.0 && self.dt > 0.0) {
            return Err(Error::Config(String::from(
                "sound speed, pixel spacing and time step must be positive",
            )));
        }
        if self.n_t == 0 {
            return Err(Error::Config(String::from("need at least one time sample")));
        }
        if !(self.theta_max > 0.0 && self.theta_max < 90.0) {
            return Err(Error::Config(alloc::format!(
                "theta_max must lie in (0, 90) degrees, got {}",
                self.theta_max
            )));
        }
        if self.pad_factor == 0 {
            return Err(Error::Config(String::from("pad_factor must be >= 1")));
        }
        // The nearest periodic image of any source lies at least
        // (pad·n − n + 1)·dx away from every detector.
        let travel = self.c * self.dt * (self.n_t - 1) as f64;
        let clearance = ((self.pad_factor * self.n - self.n + 1) as f64) * self.dx;
        if travel >= clearance {
            return Err(Error::Config(alloc::format!(
                "wavefront travels {travel} but periodic images are only {clearance} away; \
                 increase pad_factor or reduce n_t"
            )));
        }
        Ok(())
    }
}

/// Exact spectral propagation on a padded grid, sampled on the top image row.
#[derive(Debug, Clone)]
pub struct PatAccurate {
    cfg: PatConfig,
    padded: usize,
    fft2: Fft2,
    line: FftPlan,
    // n_t blocks of padded² entries: cos(c|k| t dt)
    propagator: Vec<f64>,
}

impl PatAccurate {
    pub fn new(cfg: PatConfig) -> Result<Self> {
        cfg.validate()?;
        let m = cfg.n * cfg.pad_factor;
        let mut propagator = Vec::with_capacity(cfg.n_t * m * m);
        for t in 0..cfg.n_t {
            let time = t as f64 * cfg.dt;
            for kr in 0..m {
                let k2 = wavenumber(kr, m, cfg.dx);
                for kc in 0..m {
                    let k1 = wavenumber(kc, m, cfg.dx);
                    propagator.push((cfg.c * (k1 * k1 + k2 * k2).sqrt() * time).cos());
                }
            }
        }
        Ok(Self {
            padded: m,
            fft2: Fft2::new(m, m),
            line: FftPlan::new(m),
            propagator,
            cfg,
        })
    }

    pub fn config(&self) -> &PatConfig {
        &self.cfg
    }
}

impl LinearOp for PatAccurate {
    fn label(&self) -> &str {
        "pat_accurate"
    }

    fn domain_shape(&self) -> (usize, usize) {
        self.cfg.image_shape()
    }

    fn range_shape(&self) -> (usize, usize) {
        self.cfg.measurement_shape()
    }

    fn apply(&self, x: &Grid) -> Result<Grid> {
        check_shape(self.domain_shape(), x.shape())?;
        let (n, m) = (self.cfg.n, self.padded);
        let mut spectrum = vec![ZERO; m * m];
        for r in 0..n {
            for c in 0..n {
                spectrum[r * m + c] = Complex64::new(x.get(r, c), 0.0);
            }
        }
        self.fft2.forward(&mut spectrum);
        let norm = 1.0 / (m * m) as f64;
        let mut y = Grid::zeros(n, self.cfg.n_t);
        let mut line = vec![ZERO; m];
        for t in 0..self.cfg.n_t {
            let prop = &self.propagator[t * m * m..(t + 1) * m * m];
            line.iter_mut().for_each(|v| *v = ZERO);
            // Row 0 of the inverse transform only needs the k₂-sum of each column.
            for kr in 0..m {
                let row = &spectrum[kr * m..(kr + 1) * m];
                let p = &prop[kr * m..(kr + 1) * m];
                for kc in 0..m {
                    line[kc] += row[kc] * p[kc];
                }
            }
            self.line.inverse(&mut line);
            for j in 0..n {
                y.set(j, t, line[j].re * norm);
            }
        }
        Ok(y)
    }

    fn adjoint(&self, y: &Grid) -> Result<Grid> {
        check_shape(self.range_shape(), y.shape())?;
        let (n, m) = (self.cfg.n, self.padded);
        let mut acc = vec![ZERO; m * m];
        let mut line = vec![ZERO; m];
        for t in 0..self.cfg.n_t {
            line.iter_mut().for_each(|v| *v = ZERO);
            for j in 0..n {
                line[j] = Complex64::new(y.get(j, t), 0.0);
            }
            self.line.forward(&mut line);
            let prop = &self.propagator[t * m * m..(t + 1) * m * m];
            for kr in 0..m {
                let row = &mut acc[kr * m..(kr + 1) * m];
                let p = &prop[kr * m..(kr + 1) * m];
                for kc in 0..m {
                    row[kc] += line[kc] * p[kc];
                }
            }
        }
        self.fft2.inverse(&mut acc);
        let norm = 1.0 / (m * m) as f64;
        Ok(Grid::from_fn(n, n, |r, c| acc[r * m + c].re * norm))
    }
}

#[derive(Debug, Clone, Copy)]
struct Resample {
    k1: usize,
    omega: usize,
    plus: usize,
    minus: usize,
    weight: f64,
}

/// Fast approximate model: FFT, dispersion-relation resampling, weighted cosine
/// transform in time and an inverse FFT along the detector.
#[derive(Debug, Clone)]
pub struct PatApprox {
    cfg: PatConfig,
    padded: usize,
    fft2: Fft2,
    line: FftPlan,
    resample: Vec<Resample>,
    n_omega: usize,
    // n_omega × n_t
    cosine: Vec<f64>,
}

impl PatApprox {
    pub fn new(cfg: PatConfig) -> Result<Self> {
        cfg.validate()?;
        // Spectra live on the same zero-padded grid as the accurate model.
        let n = cfg.n * cfg.pad_factor;
        let n_omega = cfg.n_t;
        let d_omega = PI / (cfg.n_t as f64 * cfg.dt);
        let d_k = 2.0 * PI / (n as f64 * cfg.dx);
        let sin_max = (cfg.theta_max * PI / 180.0).sin();
        let mut resample = Vec::new();
        for a in 0..n {
            let k1 = wavenumber(a, n, cfg.dx);
            // ω = 0 carries no propagating wave and is left out.
            for m in 1..n_omega {
                let omega = m as f64 * d_omega;
                let k_total = omega / cfg.c;
                if k1 * k1 > k_total * k_total * sin_max * sin_max {
                    continue;
                }
                let kz = (k_total * k_total - k1 * k1).sqrt();
                let bin = (kz / d_k).round() as usize;
                if bin > n / 2 {
                    continue;
                }
                let jacobian = omega / kz;
                resample.push(Resample {
                    k1: a,
                    omega: m,
                    plus: bin % n,
                    minus: (n - bin) % n,
                    weight: (d_omega / d_k) * jacobian / (cfg.c * cfg.c),
                });
            }
        }
        let mut cosine = Vec::with_capacity(n_omega * cfg.n_t);
        for m in 0..n_omega {
            for t in 0..cfg.n_t {
                cosine.push((m as f64 * d_omega * t as f64 * cfg.dt).cos());
            }
        }
        Ok(Self {
            padded: n,
            fft2: Fft2::new(n, n),
            line: FftPlan::new(n),
            resample,
            n_omega,
            cosine,
            cfg,
        })
    }

    pub fn config(&self) -> &PatConfig {
        &self.cfg
    }
}

impl LinearOp for PatApprox {
    fn label(&self) -> &str {
        "pat_approx"
    }

    fn domain_shape(&self) -> (usize, usize) {
        self.cfg.image_shape()
    }

    fn range_shape(&self) -> (usize, usize) {
        self.cfg.measurement_shape()
    }

    fn apply(&self, x: &Grid) -> Result<Grid> {
        check_shape(self.domain_shape(), x.shape())?;
        let (n, n_t, n_w) = (self.padded, self.cfg.n_t, self.n_omega);
        let mut spectrum = vec![ZERO; n * n];
        for r in 0..self.cfg.n {
            for c in 0..self.cfg.n {
                spectrum[r * n + c] = Complex64::new(x.get(r, c), 0.0);
            }
        }
        self.fft2.forward(&mut spectrum);
        // (k₁, ω) grid, k₁-major
        let mut resampled = vec![ZERO; n * n_w];
        for e in &self.resample {
            resampled[e.k1 * n_w + e.omega] +=
                (spectrum[e.plus * n + e.k1] + spectrum[e.minus * n + e.k1]) * e.weight;
        }
        let norm = 1.0 / (n * n) as f64;
        let mut y = Grid::zeros(self.cfg.n, n_t);
        let mut line = vec![ZERO; n];
        for t in 0..n_t {
            for (a, slot) in line.iter_mut().enumerate() {
                let row = &resampled[a * n_w..(a + 1) * n_w];
                *slot = row
                    .iter()
                    .enumerate()
                    .map(|(m, v)| v * self.cosine[m * n_t + t])
                    .sum();
            }
            self.line.inverse(&mut line);
            for j in 0..self.cfg.n {
                y.set(j, t, line[j].re * norm);
            }
        }
        Ok(y)
    }

    fn adjoint(&self, y: &Grid) -> Result<Grid> {
        check_shape(self.range_shape(), y.shape())?;
        let (n, n_t, n_w) = (self.padded, self.cfg.n_t, self.n_omega);
        let norm = 1.0 / (n * n) as f64;
        // detector-FFT of every time column, k₁-major
        let mut detector = vec![ZERO; n * n_t];
        let mut line = vec![ZERO; n];
        for t in 0..n_t {
            line.iter_mut().for_each(|v| *v = ZERO);
            for j in 0..self.cfg.n {
                line[j] = Complex64::new(y.get(j, t), 0.0);
            }
            self.line.forward(&mut line);
            for a in 0..n {
                detector[a * n_t + t] = line[a] * norm;
            }
        }
        let mut resampled = vec![ZERO; n * n_w];
        for a in 0..n {
            let row = &detector[a * n_t..(a + 1) * n_t];
            for m in 0..n_w {
                let cos = &self.cosine[m * n_t..(m + 1) * n_t];
                resampled[a * n_w + m] = row.iter().zip(cos).map(|(v, c)| v * c).sum();
            }
        }
        let mut spectrum = vec![ZERO; n * n];
        for e in &self.resample {
            let v = resampled[e.k1 * n_w + e.omega] * e.weight;
            spectrum[e.plus * n + e.k1] += v;
            spectrum[e.minus * n + e.k1] += v;
        }
        self.fft2.inverse(&mut spectrum);
        let m = self.cfg.n;
        Ok(Grid::from_fn(m, m, |r, c| spectrum[r * n + c].re))
    }
}

//! The downsampling pair: an averaging downsampler and a plain skip sampler.
//!
//! Inputs are flattened column-major, so for an `N × N` image the skipped
//! (odd) flat indices are exactly the odd rows, and the output is the
//! `N/2 × N` row-downsampled image. A column vector of length `n` is the
//! `n × 1` special case.

use alloc::string::String;
use alloc::vec::Vec;

use super::LinearOp;
use crate::error::{check_shape, Error, Result};
use crate::grid::Grid;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ToyKind {
    /// First row `(½, ¼)`, interior rows `(¼, ½, ¼)` centred on even indices.
    Averaging,
    /// Picks every second entry starting at index 0.
    Skip,
}

#[derive(Debug, Clone)]
pub struct ToyOp {
    kind: ToyKind,
    domain: (usize, usize),
    label: String,
}

/// The accurate/approximate toy pair on vectors of even length `n`.
#[derive(Debug, Clone)]
pub struct ToyOps {
    pub n: usize,
    pub a: ToyOp,
    pub atilde: ToyOp,
}

pub fn make_toy_ops(n: usize) -> Result<ToyOps> {
    ToyOps::with_domain((n, 1))
}

impl ToyOps {
    /// Toy pair acting on `rows × cols` grids; `rows·cols` must be even and ≥ 4.
    pub fn with_domain(domain: (usize, usize)) -> Result<Self> {
        let n = domain.0 * domain.1;
        if n < 4 || n % 2 != 0 {
            return Err(Error::Config(alloc::format!(
                "toy operators need an even length >= 4, got {n}"
            )));
        }
        if domain.1 > 1 && domain.0 % 2 != 0 {
            return Err(Error::Config(alloc::format!(
                "image toy operators need an even row count, got {}",
                domain.0
            )));
        }
        Ok(Self {
            n,
            a: ToyOp::new(ToyKind::Averaging, domain),
            atilde: ToyOp::new(ToyKind::Skip, domain),
        })
    }

    /// Toy pair on `side × side` images.
    pub fn for_image(side: usize) -> Result<Self> {
        Self::with_domain((side, side))
    }
}

impl ToyOp {
    fn new(kind: ToyKind, domain: (usize, usize)) -> Self {
        let label = match kind {
            ToyKind::Averaging => "toy_averaging",
            ToyKind::Skip => "toy_skip",
        };
        Self {
            kind,
            domain,
            label: String::from(label),
        }
    }

    pub fn kind(&self) -> ToyKind {
        self.kind
    }

    fn len(&self) -> usize {
        self.domain.0 * self.domain.1
    }

    fn to_flat(&self, x: &Grid) -> Vec<f64> {
        column_major(x)
    }

    fn stencil(&self, i: usize) -> [(usize, f64); 3] {
        let n = self.len();
        let c = 2 * i;
        match self.kind {
            ToyKind::Skip => [(c, 1.0), (c, 0.0), (c, 0.0)],
            ToyKind::Averaging if i == 0 => [(0, 0.5), (1, 0.25), (1, 0.0)],
            ToyKind::Averaging => {
                let right = if c + 1 < n { c + 1 } else { c };
                let w = if c + 1 < n { 0.25 } else { 0.0 };
                [(c - 1, 0.25), (c, 0.5), (right, w)]
            }
        }
    }
}

pub(crate) fn column_major(x: &Grid) -> Vec<f64> {
    let (r, c) = x.shape();
    let mut out = Vec::with_capacity(r * c);
    for j in 0..c {
        for i in 0..r {
            out.push(x.get(i, j));
        }
    }
    out
}

pub(crate) fn from_column_major(rows: usize, cols: usize, v: &[f64]) -> Grid {
    Grid::from_fn(rows, cols, |i, j| v[j * rows + i])
}

impl LinearOp for ToyOp {
    fn label(&self) -> &str {
        &self.label
    }

    fn domain_shape(&self) -> (usize, usize) {
        self.domain
    }

    fn range_shape(&self) -> (usize, usize) {
        (self.domain.0 / 2, self.domain.1)
    }

    fn apply(&self, x: &Grid) -> Result<Grid> {
        check_shape(self.domain, x.shape())?;
        let flat = self.to_flat(x);
        let m = self.len() / 2;
        let out: Vec<f64> = (0..m)
            .map(|i| self.stencil(i).iter().map(|&(j, w)| w * flat[j]).sum())
            .collect();
        let (rr, rc) = self.range_shape();
        Ok(from_column_major(rr, rc, &out))
    }

    fn adjoint(&self, y: &Grid) -> Result<Grid> {
        check_shape(self.range_shape(), y.shape())?;
        let flat = column_major(y);
        let mut out = alloc::vec![0.0; self.len()];
        for (i, v) in flat.iter().enumerate() {
            for (j, w) in self.stencil(i) {
                out[j] += w * v;
            }
        }
        Ok(from_column_major(self.domain.0, self.domain.1, &out))
    }
}

use alloc::string::String;
use alloc::vec::Vec;

use super::LinearOp;
use crate::error::{check_shape, Error, Result};
use crate::grid::Grid;

/// Explicit matrix operator acting on row-major flattened grids.
///
/// The adjoint matrix defaults to the transpose; supplying a different one yields a
/// deliberately inconsistent pair, which is how perturbed adjoints are modelled.
#[derive(Debug, Clone)]
pub struct DenseOp {
    label: String,
    domain: (usize, usize),
    range: (usize, usize),
    // range_len × domain_len, row-major
    forward: Vec<f64>,
    // domain_len × range_len, row-major
    adjoint: Vec<f64>,
}

impl DenseOp {
    pub fn new(
        label: &str,
        domain: (usize, usize),
        range: (usize, usize),
        forward: Vec<f64>,
    ) -> Result<Self> {
        let adjoint = transpose(&forward, range.0 * range.1, domain.0 * domain.1)?;
        Self::with_adjoint(label, domain, range, forward, adjoint)
    }

    pub fn with_adjoint(
        label: &str,
        domain: (usize, usize),
        range: (usize, usize),
        forward: Vec<f64>,
        adjoint: Vec<f64>,
    ) -> Result<Self> {
        let (n, m) = (domain.0 * domain.1, range.0 * range.1);
        if forward.len() != m * n || adjoint.len() != m * n {
            return Err(Error::Input(alloc::format!(
                "dense operator needs {m}x{n} entries"
            )));
        }
        Ok(Self {
            label: String::from(label),
            domain,
            range,
            forward,
            adjoint,
        })
    }

    /// Dense copy of any operator (forward and adjoint assembled independently).
    pub fn from_op(op: &dyn LinearOp) -> Result<Self> {
        let domain = op.domain_shape();
        let range = op.range_shape();
        let (n, m) = (domain.0 * domain.1, range.0 * range.1);
        let cols = super::assemble(op)?;
        let mut forward = alloc::vec![0.0; m * n];
        for (j, col) in cols.iter().enumerate() {
            for (i, v) in col.iter().enumerate() {
                forward[i * n + j] = *v;
            }
        }
        let adj_cols = super::assemble_adjoint(op)?;
        let mut adjoint = alloc::vec![0.0; m * n];
        for (i, col) in adj_cols.iter().enumerate() {
            for (j, v) in col.iter().enumerate() {
                adjoint[j * m + i] = *v;
            }
        }
        Self::with_adjoint(op.label(), domain, range, forward, adjoint)
    }

    pub fn forward_matrix(&self) -> &[f64] {
        &self.forward
    }

    pub fn adjoint_matrix(&self) -> &[f64] {
        &self.adjoint
    }
}

fn transpose(a: &[f64], rows: usize, cols: usize) -> Result<Vec<f64>> {
    if a.len() != rows * cols {
        return Err(Error::Input(alloc::format!(
            "matrix needs {rows}x{cols} entries, got {}",
            a.len()
        )));
    }
    let mut t = alloc::vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            t[j * rows + i] = a[i * cols + j];
        }
    }
    Ok(t)
}

fn matvec(a: &[f64], rows: usize, cols: usize, x: &[f64]) -> Vec<f64> {
    (0..rows)
        .map(|i| a[i * cols..(i + 1) * cols].iter().zip(x).map(|(p, q)| p * q).sum())
        .collect()
}

impl LinearOp for DenseOp {
    fn label(&self) -> &str {
        &self.label
    }

    fn domain_shape(&self) -> (usize, usize) {
        self.domain
    }

    fn range_shape(&self) -> (usize, usize) {
        self.range
    }

    fn apply(&self, x: &Grid) -> Result<Grid> {
        check_shape(self.domain, x.shape())?;
        let (n, m) = (self.domain.0 * self.domain.1, self.range.0 * self.range.1);
        Grid::from_vec(self.range.0, self.range.1, matvec(&self.forward, m, n, x.as_slice()))
    }

    fn adjoint(&self, y: &Grid) -> Result<Grid> {
        check_shape(self.range, y.shape())?;
        let (n, m) = (self.domain.0 * self.domain.1, self.range.0 * self.range.1);
        Grid::from_vec(self.domain.0, self.domain.1, matvec(&self.adjoint, n, m, y.as_slice()))
    }
}

//! Linear forward operators and the tools used to certify them.

mod dense;
mod pat;
mod toy;

use alloc::vec::Vec;

pub use dense::DenseOp;
pub use pat::{PatAccurate, PatApprox, PatConfig};
pub use toy::{make_toy_ops, ToyOps, ToyOp, ToyKind};

use crate::error::Result;
use crate::grid::Grid;
use crate::rng::{normal_grid, stream_rng};

/// A linear map between grids together with its adjoint.
pub trait LinearOp: Send + Sync {
    fn label(&self) -> &str;
    fn domain_shape(&self) -> (usize, usize);
    fn range_shape(&self) -> (usize, usize);
    fn apply(&self, x: &Grid) -> Result<Grid>;
    fn adjoint(&self, y: &Grid) -> Result<Grid>;
}

impl<T: LinearOp + ?Sized> LinearOp for &T {
    fn label(&self) -> &str {
        (**self).label()
    }
    fn domain_shape(&self) -> (usize, usize) {
        (**self).domain_shape()
    }
    fn range_shape(&self) -> (usize, usize) {
        (**self).range_shape()
    }
    fn apply(&self, x: &Grid) -> Result<Grid> {
        (**self).apply(x)
    }
    fn adjoint(&self, y: &Grid) -> Result<Grid> {
        (**self).adjoint(y)
    }
}

impl<T: LinearOp + ?Sized> LinearOp for alloc::boxed::Box<T> {
    fn label(&self) -> &str {
        (**self).label()
    }
    fn domain_shape(&self) -> (usize, usize) {
        (**self).domain_shape()
    }
    fn range_shape(&self) -> (usize, usize) {
        (**self).range_shape()
    }
    fn apply(&self, x: &Grid) -> Result<Grid> {
        (**self).apply(x)
    }
    fn adjoint(&self, y: &Grid) -> Result<Grid> {
        (**self).adjoint(y)
    }
}

impl<T: LinearOp + ?Sized> LinearOp for alloc::sync::Arc<T> {
    fn label(&self) -> &str {
        (**self).label()
    }
    fn domain_shape(&self) -> (usize, usize) {
        (**self).domain_shape()
    }
    fn range_shape(&self) -> (usize, usize) {
        (**self).range_shape()
    }
    fn apply(&self, x: &Grid) -> Result<Grid> {
        (**self).apply(x)
    }
    fn adjoint(&self, y: &Grid) -> Result<Grid> {
        (**self).adjoint(y)
    }
}

/// Normalized adjoint discrepancy `|⟨Ax,y⟩ − ⟨x,A*y⟩| / (‖Ax‖‖y‖ + ‖x‖‖A*y‖)`,
/// maximised over `trials` Gaussian pairs.
pub fn op_dot_test(op: &dyn LinearOp, trials: usize, seed: u64) -> Result<f64> {
    let (dr, dc) = op.domain_shape();
    let (rr, rc) = op.range_shape();
    let mut worst: f64 = 0.0;
    for trial in 0..trials.max(1) {
        let mut rng = stream_rng(seed, trial as u64);
        let x = normal_grid(&mut rng, dr, dc);
        let y = normal_grid(&mut rng, rr, rc);
        let ax = op.apply(&x)?;
        let aty = op.adjoint(&y)?;
        let lhs = ax.dot(&y);
        let rhs = x.dot(&aty);
        let scale = ax.norm() * y.norm() + x.norm() * aty.norm();
        let d = if scale == 0.0 { 0.0 } else { (lhs - rhs).abs() / scale };
        worst = worst.max(d);
    }
    Ok(worst)
}

/// Column-major dense assembly: column `j` is `op` applied to the `j`-th unit vector
/// (row-major flat index into the domain grid).
pub fn assemble(op: &dyn LinearOp) -> Result<Vec<Vec<f64>>> {
    let (dr, dc) = op.domain_shape();
    let mut columns = Vec::with_capacity(dr * dc);
    for j in 0..dr * dc {
        let mut e = Grid::zeros(dr, dc);
        e.as_mut_slice()[j] = 1.0;
        columns.push(op.apply(&e)?.into_vec());
    }
    Ok(columns)
}

/// Dense assembly of the adjoint, column `i` being `A*` applied to the `i`-th unit
/// vector of the range.
pub fn assemble_adjoint(op: &dyn LinearOp) -> Result<Vec<Vec<f64>>> {
    let (rr, rc) = op.range_shape();
    let mut columns = Vec::with_capacity(rr * rc);
    for i in 0..rr * rc {
        let mut e = Grid::zeros(rr, rc);
        e.as_mut_slice()[i] = 1.0;
        columns.push(op.adjoint(&e)?.into_vec());
    }
    Ok(columns)
}

/// Largest singular value estimated by power iteration on `A*A`.
pub fn operator_norm(op: &dyn LinearOp, iterations: usize, seed: u64) -> Result<f64> {
    let (dr, dc) = op.domain_shape();
    let mut rng = stream_rng(seed, 0x6e6f726d);
    let mut v = normal_grid(&mut rng, dr, dc);
    let mut sigma = 0.0;
    for _ in 0..iterations.max(1) {
        let nv = v.norm();
        if nv == 0.0 {
            return Ok(0.0);
        }
        v.scale(1.0 / nv);
        let av = op.apply(&v)?;
        sigma = av.norm();
        v = op.adjoint(&av)?;
    }
    Ok(sigma)
}


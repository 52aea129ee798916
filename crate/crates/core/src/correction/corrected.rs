//! An approximate operator bundled with whatever corrects it.

use alloc::sync::Arc;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use super::CorrectionNet;
use crate::aem::ErrorStats;
use crate::error::{check_shape, Error, Result};
use crate::grid::{Grid, Image, Measurement};
use crate::operators::LinearOp;

/// How the data-term gradient is formed from the approximate operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Method {
    /// `Ã*(Ãx − y)`.
    None,
    /// `Ã*[DF(Ãx)]*(F(Ãx) − y)`: the true gradient of the corrected data term.
    ForwardOnly,
    /// `G(Ã*(F(Ãx) − y))`: a learned gradient surrogate.
    ForwardAdjoint,
    /// `Ã*LᵀL(Ãx − y + η)`: whitened approximation-error model.
    Aem,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::None => "none",
            Method::ForwardOnly => "forward_only",
            Method::ForwardAdjoint => "forward_adjoint",
            Method::Aem => "aem",
        }
    }
}

/// One evaluation of a corrected operator at an iterate.
#[derive(Debug, Clone)]
pub struct Evaluation {
    /// `A_Θ(x)`; for the error model this is `Ãx + η`.
    pub forward: Measurement,
    /// `A_Θ(x) − y`.
    pub residual: Measurement,
    /// The method's data-term gradient surrogate.
    pub gradient: Image,
}

#[derive(Clone)]
pub struct CorrectedOperator {
    method: Method,
    atilde: Arc<dyn LinearOp>,
    f: Option<CorrectionNet>,
    g: Option<CorrectionNet>,
    stats: Option<Arc<ErrorStats>>,
}

impl core::fmt::Debug for CorrectedOperator {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("CorrectedOperator")
            .field("method", &self.method)
            .field("atilde", &self.atilde.label())
            .finish_non_exhaustive()
    }
}

impl CorrectedOperator {
    pub fn none(atilde: Arc<dyn LinearOp>) -> Self {
        Self {
            method: Method::None,
            atilde,
            f: None,
            g: None,
            stats: None,
        }
    }

    pub fn forward_only(atilde: Arc<dyn LinearOp>, f: CorrectionNet) -> Self {
        Self {
            method: Method::ForwardOnly,
            f: Some(f),
            ..Self::none(atilde)
        }
    }

    pub fn forward_adjoint(atilde: Arc<dyn LinearOp>, f: CorrectionNet, g: CorrectionNet) -> Self {
        Self {
            method: Method::ForwardAdjoint,
            f: Some(f),
            g: Some(g),
            ..Self::none(atilde)
        }
    }

    pub fn aem(atilde: Arc<dyn LinearOp>, stats: Arc<ErrorStats>) -> Result<Self> {
        check_shape(atilde.range_shape(), stats.eta.shape())?;
        Ok(Self {
            method: Method::Aem,
            stats: Some(stats),
            ..Self::none(atilde)
        })
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn atilde(&self) -> &dyn LinearOp {
        &*self.atilde
    }

    pub fn forward_net(&self) -> Option<&CorrectionNet> {
        self.f.as_ref()
    }

    pub fn adjoint_net(&self) -> Option<&CorrectionNet> {
        self.g.as_ref()
    }

    fn net(&self, which: &'static str) -> Result<&CorrectionNet> {
        let n = if which == "F" { &self.f } else { &self.g };
        n.as_ref()
            .ok_or_else(|| Error::Config(alloc::format!("method {} has no {which} network", self.method.name())))
    }

    fn stats(&self) -> Result<&ErrorStats> {
        self.stats
            .as_deref()
            .ok_or_else(|| Error::Config("error-model method without statistics".into()))
    }

    /// `A_Θ(x) = F(Ãx)`, or `Ãx` for the uncorrected and error-model methods.
    pub fn corrected_forward(&self, x: &Image) -> Result<Measurement> {
        let u = self.atilde.apply(x)?;
        match self.method {
            Method::ForwardOnly | Method::ForwardAdjoint => self.net("F")?.apply(&u),
            Method::None | Method::Aem => Ok(u),
        }
    }

    /// The method's data-term gradient at `x`.
    pub fn fidelity_gradient(&self, x: &Image, y: &Measurement) -> Result<Image> {
        Ok(self.evaluate(x, y)?.gradient)
    }

    /// Forward prediction, residual and gradient surrogate in one pass.
    pub fn evaluate(&self, x: &Image, y: &Measurement) -> Result<Evaluation> {
        check_shape(self.atilde.range_shape(), y.shape())?;
        let u = self.atilde.apply(x)?;
        let (forward, gradient) = match self.method {
            Method::None => {
                let r = u.sub(y);
                let g = self.atilde.adjoint(&r)?;
                (u, g)
            }
            Method::ForwardOnly => {
                let f = self.net("F")?;
                let tape = f.forward(&u)?;
                let out = tape.output();
                let r = out.sub(y);
                let g = self.atilde.adjoint(&f.vjp(&tape, &r, None)?)?;
                (out, g)
            }
            Method::ForwardAdjoint => {
                let out = self.net("F")?.apply(&u)?;
                let r = out.sub(y);
                let g = self.net("G")?.apply(&self.atilde.adjoint(&r)?)?;
                (out, g)
            }
            Method::Aem => {
                let stats = self.stats()?;
                let mut out = u;
                out.axpy(1.0, &stats.eta);
                let r = out.sub(y);
                let p = stats.precision_apply(r.as_slice());
                let g = self.atilde.adjoint(&Grid::from_vec(r.rows(), r.cols(), p)?)?;
                (out, g)
            }
        };
        let residual = forward.sub(y);
        Ok(Evaluation {
            forward,
            residual,
            gradient,
        })
    }
}

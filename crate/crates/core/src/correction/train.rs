//! Training of the forward and adjoint corrections, optionally on iterates
//! of the variational solve (recursive training).

use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use rand::seq::SliceRandom;
#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use super::{Adam, CorrectionNet};
use crate::error::{Error, Result};
use crate::grid::{Image, Measurement};
use crate::operators::LinearOp;
use crate::rng::stream_rng;
use crate::solver::{huber_grad, initial_iterate};

/// Which iterates recursive training unrolls.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Trajectory {
    /// Steps taken with the current corrected gradient.
    #[default]
    Corrected,
    /// Steps taken with the accurate gradient (experimental).
    Accurate,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct TrainConfig {
    pub lr: f64,
    /// The learning rate is halved this many times, at evenly spaced epochs.
    pub lr_halvings: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Maximum number of unrolled iterates per sample; 1 is non-recursive.
    pub n_max: usize,
    pub lambda: f64,
    pub mu: f64,
    pub delta: f64,
    pub positivity: bool,
    pub trajectory: Trajectory,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            lr_halvings: 2,
            batch_size: 16,
            epochs: 10,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            n_max: 1,
            lambda: 1e-3,
            mu: 0.2,
            delta: 0.01,
            positivity: true,
            trajectory: Trajectory::Corrected,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_max == 0 || self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("n_max, batch_size and epochs must be ≥ 1".into()));
        }
        if !(self.lr > 0.0) || !(self.mu > 0.0) || !(self.delta > 0.0) || !(self.lambda >= 0.0) {
            return Err(Error::Config("lr, mu, delta must be > 0 and lambda ≥ 0".into()));
        }
        Ok(())
    }

    /// Unrolled iterates in `epoch`: `min(N_max, 1 + ⌊epoch·N_max/epochs⌋)`.
    pub fn n_iter(&self, epoch: usize) -> usize {
        self.n_max.min(1 + epoch * self.n_max / self.epochs)
    }

    pub fn learning_rate(&self, epoch: usize) -> f64 {
        let halvings = epoch * (self.lr_halvings + 1) / self.epochs;
        self.lr * 0.5f64.powi(halvings.min(self.lr_halvings) as i32)
    }
}

/// Per-epoch training summary.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean squared forward misfit `‖F(Ãx) − Ax‖²` over all iterates.
    pub forward_loss: f64,
    /// Mean squared adjoint misfit over all iterates.
    pub adjoint_loss: f64,
    pub n_iter: usize,
    /// Largest number of iterates evaluated for any one sample.
    pub max_unrolled: usize,
}

/// Trained networks plus their loss history.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub f: CorrectionNet,
    pub g: Option<CorrectionNet>,
    pub history: Vec<EpochStats>,
}

/// The operator pair a correction is trained against.
#[derive(Clone, Copy)]
pub struct OperatorPair<'a> {
    pub a: &'a dyn LinearOp,
    pub atilde: &'a dyn LinearOp,
}

/// Losses and their gradients at one iterate.
pub struct IterateLoss {
    pub forward: f64,
    pub adjoint: f64,
    /// The method's data gradient, reused for the inner step.
    pub gradient: Image,
}

/// Forward misfit `‖F(Ãx) − Ax‖²` plus the adjoint penalty
/// `‖A*r − Ã*[DF(Ãx)]*r‖²`, `r = F(Ãx) − y` held fixed; accumulates the
/// parameter gradient of their sum into `grad`.
pub fn forward_only_loss(
    ops: OperatorPair<'_>,
    f: &CorrectionNet,
    x: &Image,
    y: &Measurement,
    grad: &mut [f64],
) -> Result<IterateLoss> {
    let u = ops.atilde.apply(x)?;
    let tape = f.forward(&u)?;
    let fu = tape.output();
    let d = fu.sub(&ops.a.apply(x)?);
    let r = fu.sub(y);
    let jr = f.backward(&tape, Some(&r), None, None)?;
    let gradient = ops.atilde.adjoint(&jr)?;
    let e = ops.a.adjoint(&r)?.sub(&gradient);
    // ∂‖e‖²/∂Θ = −2·∂⟨r, J(Ãe)⟩/∂Θ with e and r fixed.
    let v = ops.atilde.apply(&e)?;
    let tape2 = f.forward_with_tangent(&u, &v)?;
    f.backward(&tape2, Some(&d.scaled(2.0)), Some(&r.scaled(-2.0)), Some(grad))?;
    Ok(IterateLoss {
        forward: d.norm_sq(),
        adjoint: e.norm_sq(),
        gradient,
    })
}

/// Forward misfit for `F` and adjoint misfit `‖G(Ã*r) − A*r‖²` for `G`, with
/// `r = F(Ãx) − y` held fixed so no adjoint-loss gradient reaches `F`.
pub fn forward_adjoint_loss(
    ops: OperatorPair<'_>,
    f: &CorrectionNet,
    g: &CorrectionNet,
    x: &Image,
    y: &Measurement,
    grad_f: &mut [f64],
    grad_g: &mut [f64],
) -> Result<IterateLoss> {
    let u = ops.atilde.apply(x)?;
    let tape = f.forward(&u)?;
    let fu = tape.output();
    let d = fu.sub(&ops.a.apply(x)?);
    f.backward(&tape, Some(&d.scaled(2.0)), None, Some(grad_f))?;
    let r = fu.sub(y);
    let w = ops.atilde.adjoint(&r)?;
    let tape_g = g.forward(&w)?;
    let gradient = tape_g.output();
    let e = gradient.sub(&ops.a.adjoint(&r)?);
    g.backward(&tape_g, Some(&e.scaled(2.0)), None, Some(grad_g))?;
    Ok(IterateLoss {
        forward: d.norm_sq(),
        adjoint: e.norm_sq(),
        gradient,
    })
}

/// Callback run after every epoch; an error aborts training.
pub type EpochHook<'h> = dyn FnMut(&EpochStats, &CorrectionNet, Option<&CorrectionNet>) -> Result<()> + 'h;

/// Trains `F` alone with the forward-only losses.
pub fn train_forward_only(
    ys: &[Measurement],
    ops: OperatorPair<'_>,
    f: CorrectionNet,
    cfg: &TrainConfig,
    hook: &mut EpochHook<'_>,
) -> Result<TrainOutcome> {
    train(ys, ops, f, None, cfg, hook)
}

/// Trains `F` on the forward misfit and `G` on the adjoint misfit.
pub fn train_forward_adjoint(
    ys: &[Measurement],
    ops: OperatorPair<'_>,
    f: CorrectionNet,
    g: CorrectionNet,
    cfg: &TrainConfig,
    hook: &mut EpochHook<'_>,
) -> Result<TrainOutcome> {
    train(ys, ops, f, Some(g), cfg, hook)
}

/// Recursive training: each sample contributes the iterates
/// `x⁰ = 4Ã*y, x^{n+1} = Π₊[x^n − μ(∇†(x^n) + λ∇R(x^n))]` for
/// `n < N_iter(epoch)`, computed with the current networks. With
/// `cfg.n_max = 1` this is plain training on `x⁰`.
pub fn train_recursive(
    ys: &[Measurement],
    ops: OperatorPair<'_>,
    f: CorrectionNet,
    g: Option<CorrectionNet>,
    cfg: &TrainConfig,
    hook: &mut EpochHook<'_>,
) -> Result<TrainOutcome> {
    train(ys, ops, f, g, cfg, hook)
}

fn train(
    ys: &[Measurement],
    ops: OperatorPair<'_>,
    mut f: CorrectionNet,
    mut g: Option<CorrectionNet>,
    cfg: &TrainConfig,
    hook: &mut EpochHook<'_>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if ys.is_empty() {
        return Err(Error::Input("training set is empty".into()));
    }
    let x0s = ys
        .iter()
        .map(|y| initial_iterate(ops.atilde, y, cfg.positivity))
        .collect::<Result<Vec<_>>>()?;
    let mut adam_f = Adam::new(f.n_params(), cfg.beta1, cfg.beta2, cfg.eps);
    let mut adam_g = g.as_ref().map(|g| Adam::new(g.n_params(), cfg.beta1, cfg.beta2, cfg.eps));
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..ys.len()).collect();
    for epoch in 0..cfg.epochs {
        let n_iter = cfg.n_iter(epoch);
        let lr = cfg.learning_rate(epoch);
        order.sort_unstable();
        order.shuffle(&mut stream_rng(cfg.seed, epoch as u64));
        let (mut sum_f, mut sum_a, mut count, mut max_unrolled) = (0.0, 0.0, 0usize, 0usize);
        for batch in order.chunks(cfg.batch_size) {
            let mut gf = vec![0.0; f.n_params()];
            let mut gg = vec![0.0; g.as_ref().map_or(0, |g| g.n_params())];
            let mut batch_count = 0usize;
            for &i in batch {
                let y = &ys[i];
                let mut x = x0s[i].clone();
                for n in 0..n_iter {
                    let loss = match &g {
                        Some(g) => forward_adjoint_loss(ops, &f, g, &x, y, &mut gf, &mut gg)?,
                        None => forward_only_loss(ops, &f, &x, y, &mut gf)?,
                    };
                    if !(loss.forward.is_finite() && loss.adjoint.is_finite()) {
                        return Err(Error::NonFinite {
                            context: alloc::format!("training loss, epoch {epoch}, sample {i}, inner step {n}"),
                        });
                    }
                    sum_f += loss.forward;
                    sum_a += loss.adjoint;
                    batch_count += 1;
                    max_unrolled = max_unrolled.max(n + 1);
                    if n + 1 < n_iter {
                        let mut step = match cfg.trajectory {
                            Trajectory::Corrected => loss.gradient,
                            Trajectory::Accurate => ops.a.adjoint(&ops.a.apply(&x)?.sub(y))?,
                        };
                        if cfg.lambda != 0.0 {
                            step.axpy(cfg.lambda, &huber_grad(&x, cfg.delta));
                        }
                        x.axpy(-cfg.mu, &step);
                        if cfg.positivity {
                            x.clamp_nonnegative();
                        }
                        if !x.is_finite() {
                            return Err(Error::NonFinite {
                                context: alloc::format!("training iterate, epoch {epoch}, sample {i}, inner step {}", n + 1),
                            });
                        }
                    }
                }
            }
            count += batch_count;
            let scale = 1.0 / batch_count as f64;
            gf.iter_mut().for_each(|v| *v *= scale);
            gg.iter_mut().for_each(|v| *v *= scale);
            if gf.iter().chain(&gg).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    context: alloc::format!("parameter gradient, epoch {epoch}"),
                });
            }
            adam_f.step(f.params_mut(), &gf, lr);
            if let (Some(g), Some(adam)) = (g.as_mut(), adam_g.as_mut()) {
                adam.step(g.params_mut(), &gg, lr);
            }
        }
        let stats = EpochStats {
            epoch,
            forward_loss: sum_f / count as f64,
            adjoint_loss: sum_a / count as f64,
            n_iter,
            max_unrolled,
        };
        hook(&stats, &f, g.as_ref())?;
        history.push(stats);
    }
    Ok(TrainOutcome { f, g, history })
}

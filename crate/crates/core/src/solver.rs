//! Variational reconstruction by projected gradient descent, the pseudo-Huber
//! regulariser, and diagnostics relating approximate gradients to exact ones.

use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;
#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::correction::CorrectedOperator;
use crate::error::{check_shape, Error, Result};
use crate::grid::{cosine, Grid, Image, Measurement};
use crate::linalg::cholesky;
use crate::operators::{operator_norm, LinearOp};
use crate::rng::{stream_rng, uniform_grid};

/// `Σ δ(√(1 + (dᵥ² + dₕ²)/δ²) − 1)` over forward differences; differences
/// leaving the grid are zero (replicate boundary).
pub fn huber_value(x: &Image, delta: f64) -> f64 {
    let (rows, cols) = x.shape();
    let mut total = 0.0;
    for i in 0..rows {
        for j in 0..cols {
            let (dv, dh) = diffs(x, i, j, rows, cols);
            let s = dv * dv + dh * dh;
            total += delta * ((1.0 + s / (delta * delta)).sqrt() - 1.0);
        }
    }
    total
}

/// Exact gradient of [`huber_value`].
pub fn huber_grad(x: &Image, delta: f64) -> Image {
    let (rows, cols) = x.shape();
    let mut g = Grid::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            let (dv, dh) = diffs(x, i, j, rows, cols);
            let s = dv * dv + dh * dh;
            let w = 1.0 / (delta * (1.0 + s / (delta * delta)).sqrt());
            let (pv, ph) = (w * dv, w * dh);
            if i + 1 < rows {
                g[(i + 1, j)] += pv;
                g[(i, j)] -= pv;
            }
            if j + 1 < cols {
                g[(i, j + 1)] += ph;
                g[(i, j)] -= ph;
            }
        }
    }
    g
}

fn diffs(x: &Image, i: usize, j: usize, rows: usize, cols: usize) -> (f64, f64) {
    let v = x[(i, j)];
    let dv = if i + 1 < rows { x[(i + 1, j)] - v } else { 0.0 };
    let dh = if j + 1 < cols { x[(i, j + 1)] - v } else { 0.0 };
    (dv, dh)
}

/// The variational functional `𝓛(x) = ½‖Bx − y‖² + λR(x)` for a linear `B`.
#[derive(Clone, Copy)]
pub struct Objective<'a> {
    pub op: &'a dyn LinearOp,
    pub y: &'a Measurement,
    pub lambda: f64,
    pub delta: f64,
}

impl Objective<'_> {
    pub fn value(&self, x: &Image) -> Result<f64> {
        let r = self.op.apply(x)?.sub(self.y);
        Ok(0.5 * r.norm_sq() + self.lambda * huber_value(x, self.delta))
    }

    /// Data-term gradient `B*(Bx − y)`.
    pub fn data_gradient(&self, x: &Image) -> Result<Image> {
        self.op.adjoint(&self.op.apply(x)?.sub(self.y))
    }

    pub fn gradient(&self, x: &Image) -> Result<Image> {
        let mut g = self.data_gradient(x)?;
        if self.lambda != 0.0 {
            g.axpy(self.lambda, &huber_grad(x, self.delta));
        }
        Ok(g)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct SolveConfig {
    pub lambda: f64,
    pub delta: f64,
    pub mu: f64,
    pub max_iters: usize,
    pub positivity: bool,
    pub trace_every: usize,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-3,
            delta: 0.01,
            mu: 0.2,
            max_iters: 4000,
            positivity: true,
            trace_every: 10,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0) || !(self.delta > 0.0) || !(self.lambda >= 0.0) {
            return Err(Error::Config(alloc::format!(
                "solver needs mu > 0, delta > 0, lambda ≥ 0 (got mu={}, delta={}, lambda={})",
                self.mu,
                self.delta,
                self.lambda
            )));
        }
        if self.trace_every == 0 {
            return Err(Error::Config("trace_every must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// The trusted operator used to instrument a solve.
#[derive(Clone, Copy)]
pub struct Reference<'a> {
    pub op: &'a dyn LinearOp,
    /// Estimate of `‖A‖`, see [`estimate_norm`].
    pub norm: f64,
}

/// `‖A‖` by 50 power iterations.
pub fn estimate_norm(op: &dyn LinearOp, seed: u64) -> Result<f64> {
    operator_norm(op, 50, seed)
}

/// Metrics recorded at one iterate.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct TraceEntry {
    pub iter: usize,
    /// `‖Ax − y‖`.
    pub data_term: f64,
    /// Cosine between `A*(Ax − y)` and the method's data gradient.
    pub alignment: Option<f64>,
    /// `‖x − x_true‖/‖x_true‖`.
    pub rel_l2: Option<f64>,
    /// `‖(A − A_Θ)x‖/‖Ax‖`.
    pub fwd_err: f64,
    /// `‖A*r − g‖/‖A*r‖` with `r = A_Θ(x) − y` and `g` the method's gradient.
    pub adj_err: f64,
    /// Gradient-alignment bound, including the regulariser.
    pub lemma: Option<LemmaCheck>,
}

#[derive(Debug, Clone, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Trace {
    pub entries: Vec<TraceEntry>,
}

/// Both sides of the alignment lower bound
/// `⟨∇𝓛, ∇†⟩/‖∇𝓛‖² ≥ 1 − (‖A‖‖(A−A_Θ)x‖ + ‖(A*−A*_Φ)r‖)/‖∇𝓛‖`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct LemmaCheck {
    pub lhs: f64,
    pub rhs: f64,
    /// `‖∇𝓛(x)‖`.
    pub grad_norm: f64,
    /// `‖A‖·‖(A − A_Θ)x‖`.
    pub fwd_term: f64,
    /// `‖(A* − A*_Φ)r‖`.
    pub adj_term: f64,
}

impl LemmaCheck {
    pub fn holds(&self, tol: f64) -> bool {
        self.lhs >= self.rhs - tol
    }
}

/// Cosine of the accurate and method data gradients; `None` when either vanishes.
pub fn alignment(g_accurate: &Image, g_method: &Image) -> Option<f64> {
    cosine(g_accurate, g_method)
}

/// Evaluates both sides of the alignment bound from its ingredients.
///
/// `fwd_diff = (A − A_Θ)x`; `a_fwd_diff = A*·fwd_diff`; `adj_diff = (A* − A*_Φ)r`.
/// The norm used is `max(norm, ‖A*·fwd_diff‖/‖fwd_diff‖)`: both are lower
/// bounds of `‖A‖`, and the second is what the bound actually consumes.
pub fn lemma_bound(
    grad: &Image,
    surrogate: &Image,
    norm: f64,
    fwd_diff: &Measurement,
    a_fwd_diff: &Image,
    adj_diff: &Image,
) -> Option<LemmaCheck> {
    let gn = grad.norm();
    if !(gn > 0.0) {
        return None;
    }
    let fd = fwd_diff.norm();
    let norm = if fd > 0.0 { norm.max(a_fwd_diff.norm() / fd) } else { norm };
    let fwd_term = norm * fd;
    let adj_term = adj_diff.norm();
    Some(LemmaCheck {
        lhs: grad.dot(surrogate) / (gn * gn),
        rhs: 1.0 - (fwd_term + adj_term) / gn,
        grad_norm: gn,
        fwd_term,
        adj_term,
    })
}

/// Alignment bound for a corrected operator at `x`.
pub fn lemma_bound_check(
    co: &CorrectedOperator,
    x: &Image,
    y: &Measurement,
    reference: Reference<'_>,
    lambda: f64,
    delta: f64,
) -> Result<Option<LemmaCheck>> {
    let ev = co.evaluate(x, y)?;
    let ax = reference.op.apply(x)?;
    Ok(bound_from_parts(reference, x, y, &ax, &ev.forward, &ev.residual, &ev.gradient, lambda, delta)?.0)
}

/// Alignment bound for a pair of linear surrogates: `A_Θ = op.apply`,
/// `A*_Φ = op.adjoint` (which need not be the true adjoint of `op`).
pub fn lemma_bound_linear(
    surrogate: &dyn LinearOp,
    x: &Image,
    y: &Measurement,
    reference: Reference<'_>,
    lambda: f64,
    delta: f64,
) -> Result<Option<LemmaCheck>> {
    let fwd = surrogate.apply(x)?;
    let r = fwd.sub(y);
    let g = surrogate.adjoint(&r)?;
    let ax = reference.op.apply(x)?;
    Ok(bound_from_parts(reference, x, y, &ax, &fwd, &r, &g, lambda, delta)?.0)
}

/// Lemma check plus `(A*(Ax − y), A*r)` for reuse by traces.
#[allow(clippy::too_many_arguments)]
fn bound_from_parts(
    reference: Reference<'_>,
    x: &Image,
    y: &Measurement,
    ax: &Measurement,
    forward: &Measurement,
    residual: &Measurement,
    gradient: &Image,
    lambda: f64,
    delta: f64,
) -> Result<(Option<LemmaCheck>, Image, Image)> {
    let a = reference.op;
    let g_acc = a.adjoint(&ax.sub(y))?;
    let a_r = a.adjoint(residual)?;
    let fwd_diff = ax.sub(forward);
    let a_fwd_diff = a.adjoint(&fwd_diff)?;
    let adj_diff = a_r.sub(gradient);
    let (mut full, mut surrogate) = (g_acc.clone(), gradient.clone());
    if lambda != 0.0 {
        let hr = huber_grad(x, delta);
        full.axpy(lambda, &hr);
        surrogate.axpy(lambda, &hr);
    }
    let check = lemma_bound(&full, &surrogate, reference.norm, &fwd_diff, &a_fwd_diff, &adj_diff);
    Ok((check, g_acc, a_r))
}

/// Initial iterate `4·Ã*y`, clipped at zero when positivity is enforced.
pub fn initial_iterate(atilde: &dyn LinearOp, y: &Measurement, positivity: bool) -> Result<Image> {
    let mut x0 = atilde.adjoint(y)?.scaled(4.0);
    if positivity {
        x0.clamp_nonnegative();
    }
    Ok(x0)
}

/// Projected gradient descent `x ← Π₊[x − μ(g(x) + λ∇R(x))]` from `4·Ã*y`.
///
/// With a reference operator every `trace_every`-th iterate (and the last)
/// is instrumented; `truth` adds the relative reconstruction error.
pub fn solve(
    co: &CorrectedOperator,
    y: &Measurement,
    cfg: &SolveConfig,
    truth: Option<&Image>,
    reference: Option<Reference<'_>>,
) -> Result<(Image, Trace)> {
    let x0 = initial_iterate(co.atilde(), y, cfg.positivity)?;
    solve_from(co, y, cfg, x0, truth, reference)
}

/// [`solve`] from a given starting point.
pub fn solve_from(
    co: &CorrectedOperator,
    y: &Measurement,
    cfg: &SolveConfig,
    mut x: Image,
    truth: Option<&Image>,
    reference: Option<Reference<'_>>,
) -> Result<(Image, Trace)> {
    cfg.validate()?;
    check_shape(co.atilde().domain_shape(), x.shape())?;
    if let Some(t) = truth {
        check_shape(x.shape(), t.shape())?;
    }
    let mut trace = Trace::default();
    for iter in 0..=cfg.max_iters {
        let ev = co.evaluate(&x, y)?;
        let record = iter % cfg.trace_every == 0 || iter == cfg.max_iters;
        if let (true, Some(reference)) = (record, reference) {
            trace.entries.push(trace_entry(iter, &x, y, &ev, truth, reference, cfg)?);
        }
        if iter == cfg.max_iters {
            break;
        }
        let mut step = ev.gradient;
        if cfg.lambda != 0.0 {
            step.axpy(cfg.lambda, &huber_grad(&x, cfg.delta));
        }
        x.axpy(-cfg.mu, &step);
        if cfg.positivity {
            x.clamp_nonnegative();
        }
        if !x.is_finite() {
            return Err(Error::NonFinite {
                context: alloc::format!("solver iterate {}", iter + 1),
            });
        }
    }
    Ok((x, trace))
}

fn trace_entry(
    iter: usize,
    x: &Image,
    y: &Measurement,
    ev: &crate::correction::Evaluation,
    truth: Option<&Image>,
    reference: Reference<'_>,
    cfg: &SolveConfig,
) -> Result<TraceEntry> {
    let ax = reference.op.apply(x)?;
    let (lemma, g_acc, a_r) = bound_from_parts(
        reference,
        x,
        y,
        &ax,
        &ev.forward,
        &ev.residual,
        &ev.gradient,
        cfg.lambda,
        cfg.delta,
    )?;
    let ratio = |num: f64, den: f64| if den > 0.0 { num / den } else { 0.0 };
    Ok(TraceEntry {
        iter,
        data_term: ax.sub(y).norm(),
        alignment: alignment(&g_acc, &ev.gradient),
        rel_l2: truth.map(|t| x.rel_err(t)),
        fwd_err: ratio(ax.sub(&ev.forward).norm(), ax.norm()),
        adj_err: ratio(a_r.sub(&ev.gradient).norm(), a_r.norm()),
        lemma,
    })
}

/// Curvature `2[𝓛(b) − 𝓛(a) − ⟨∇𝓛(a), b − a⟩]/‖b − a‖²` along the segment from `a` to `b`.
pub fn segment_curvature(obj: &Objective<'_>, a: &Image, b: &Image) -> Result<f64> {
    let d = b.sub(a);
    let dn = d.norm_sq();
    if dn == 0.0 {
        return Err(Error::Input("degenerate segment".into()));
    }
    Ok(2.0 * (obj.value(b)? - obj.value(a)? - obj.gradient(a)?.dot(&d)) / dn)
}

/// Empirical strong-convexity constant: the smallest segment curvature over
/// `pairs` random segments in `[0, bound]ⁿ` and over the `extra` segments
/// (each taken in both orientations). Clamped at zero.
pub fn strong_convexity_probe(
    obj: &Objective<'_>,
    pairs: usize,
    bound: f64,
    extra: &[(Image, Image)],
    seed: u64,
) -> Result<f64> {
    let (r, c) = obj.op.domain_shape();
    let mut m = f64::INFINITY;
    for k in 0..pairs {
        let mut rng = stream_rng(seed, k as u64);
        let a = uniform_grid(&mut rng, r, c, 0.0, bound);
        let b = uniform_grid(&mut rng, r, c, 0.0, bound);
        m = m.min(segment_curvature(obj, &a, &b)?);
    }
    for (a, b) in extra {
        if a == b {
            continue;
        }
        m = m.min(segment_curvature(obj, a, b)?);
        m = m.min(segment_curvature(obj, b, a)?);
    }
    Ok(m.max(0.0))
}

/// Unconstrained minimiser of a small smooth objective by damped Newton steps
/// with a finite-difference Hessian. Intended for toy-sized problems.
pub fn newton_minimise(obj: &Objective<'_>, x0: &Image, max_steps: usize) -> Result<Image> {
    let n = x0.len();
    let (r, c) = x0.shape();
    let mut x = x0.clone();
    for _ in 0..max_steps {
        let g = obj.gradient(&x)?;
        if g.norm() <= 1e-13 * (1.0 + x.norm()) {
            break;
        }
        let h = 1e-6;
        let mut hess = vec![0.0; n * n];
        for j in 0..n {
            let mut xp = x.clone();
            xp.as_mut_slice()[j] += h;
            let mut xm = x.clone();
            xm.as_mut_slice()[j] -= h;
            let col = obj.gradient(&xp)?.sub(&obj.gradient(&xm)?);
            for i in 0..n {
                hess[i * n + j] = col.as_slice()[i] / (2.0 * h);
            }
        }
        for i in 0..n {
            for j in i + 1..n {
                let s = 0.5 * (hess[i * n + j] + hess[j * n + i]);
                hess[i * n + j] = s;
                hess[j * n + i] = s;
            }
        }
        let chol = cholesky(&hess, n)?;
        // Solve H·d = g by forward then backward substitution.
        let mut z = g.as_slice().to_vec();
        for i in 0..n {
            for p in 0..i {
                z[i] -= chol[i * n + p] * z[p];
            }
            z[i] /= chol[i * n + i];
        }
        for i in (0..n).rev() {
            for p in i + 1..n {
                z[i] -= chol[p * n + i] * z[p];
            }
            z[i] /= chol[i * n + i];
        }
        let d = Grid::from_vec(r, c, z)?;
        let f0 = obj.value(&x)?;
        let mut t = 1.0;
        loop {
            let mut xn = x.clone();
            xn.axpy(-t, &d);
            if obj.value(&xn)? <= f0 || t < 1e-8 {
                x = xn;
                break;
            }
            t *= 0.5;
        }
    }
    Ok(x)
}

/// Outcome of comparing minimisers of the accurate and surrogate functionals.
#[derive(Debug, Clone, PartialEq)]
pub struct Proximity {
    /// `‖x̂ − x̂_Θ‖`.
    pub distance: f64,
    /// `sup ‖A_Θx − Ax‖` over the probe set.
    pub sup_error: f64,
    /// `sup ‖Ax − y‖` over the probe set.
    pub c_bound: f64,
    /// `4C·sup_error`.
    pub delta: f64,
    pub m_hat: f64,
    /// `√(2δ/m̂)`.
    pub bound: f64,
    /// Whether `δ ≤ 32C²`, required for the bound to apply.
    pub applicable: bool,
}

impl Proximity {
    pub fn holds(&self) -> bool {
        !self.applicable || self.distance <= self.bound
    }
}

/// Minimises `½‖Ax − y‖² + λR` and `½‖A_Θx − y‖² + λR` (both unconstrained,
/// by Newton's method), then measures how far apart the minimisers are
/// against `√(2δ/m̂)` with `δ = 4C·sup‖A_Θx − Ax‖`.
///
/// The probe set contains both minimisers and `probes` random points in
/// `[0, 1]ⁿ`; `m̂` is probed on random segments plus the segments joining
/// the minimisers and the probe points.
pub fn proximity_check_toy(
    a: &dyn LinearOp,
    a_theta: &dyn LinearOp,
    y: &Measurement,
    lambda: f64,
    delta: f64,
    probes: usize,
    seed: u64,
) -> Result<Proximity> {
    let obj = Objective { op: a, y, lambda, delta };
    let obj_t = Objective { op: a_theta, y, lambda, delta };
    let x0 = a.adjoint(y)?;
    let xh = newton_minimise(&obj, &x0, 100)?;
    let xt = newton_minimise(&obj_t, &x0, 100)?;
    let (r, c) = x0.shape();
    let mut set = vec![xh.clone(), xt.clone()];
    for k in 0..probes {
        set.push(uniform_grid(&mut stream_rng(seed ^ 0x5eed, k as u64), r, c, 0.0, 1.0));
    }
    let mut sup_error = 0.0f64;
    let mut c_bound = 0.0f64;
    for x in &set {
        let ax = a.apply(x)?;
        sup_error = sup_error.max(a_theta.apply(x)?.sub(&ax).norm());
        c_bound = c_bound.max(ax.sub(y).norm());
    }
    let extra: Vec<(Image, Image)> = set[1..].iter().map(|p| (xh.clone(), p.clone())).collect();
    let m_hat = strong_convexity_probe(&obj, probes, 1.0, &extra, seed)?;
    let delta_p = 4.0 * c_bound * sup_error;
    let bound = if m_hat > 0.0 { (2.0 * delta_p / m_hat).sqrt() } else { f64::INFINITY };
    Ok(Proximity {
        distance: xh.sub(&xt).norm(),
        sup_error,
        c_bound,
        delta: delta_p,
        m_hat,
        bound,
        applicable: delta_p <= 32.0 * c_bound * c_bound,
    })
}

/// Counts of probe points violating the two strong-convexity consequences
/// `𝓛(x) − 𝓛(x̂) ≥ (m̂/2)‖x − x̂‖²` (so `‖x − x̂‖ ≤ √(2δ/m̂)` whenever
/// `𝓛(x) − 𝓛(x̂) ≤ δ`) and `‖∇𝓛(x)‖ ≥ (m̂/2)‖x − x̂‖` for `‖x − x̂‖ > ε`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvexitySweep {
    pub probes: usize,
    pub energy_violations: usize,
    pub gradient_violations: usize,
}

/// Checks both consequences of strong convexity with constant `m_hat` at
/// every point of `points`, relative to the minimiser `x_hat`.
pub fn convexity_lemma_sweep(
    obj: &Objective<'_>,
    x_hat: &Image,
    points: &[Image],
    m_hat: f64,
    eps: f64,
) -> Result<ConvexitySweep> {
    let f_hat = obj.value(x_hat)?;
    let mut sweep = ConvexitySweep {
        probes: points.len(),
        energy_violations: 0,
        gradient_violations: 0,
    };
    for x in points {
        let dist = x.sub(x_hat).norm();
        let gap = obj.value(x)? - f_hat;
        if dist > (2.0 * gap.max(0.0) / m_hat).sqrt() * (1.0 + 1e-6) + 1e-12 {
            sweep.energy_violations += 1;
        }
        if dist > eps && obj.gradient(x)?.norm() < 0.5 * m_hat * dist * (1.0 - 1e-6) {
            sweep.gradient_violations += 1;
        }
    }
    Ok(sweep)
}

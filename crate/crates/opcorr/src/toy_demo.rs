//! The downsampling toy problem: mapping-property panels, range confinement of
//! forward-only iterates and the minimiser-proximity bound.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use opcorr_core::correction::{CorrectedOperator, CorrectionNet, NetArch};
use opcorr_core::operators::{make_toy_ops, DenseOp, LinearOp, ToyOps};
use opcorr_core::phantoms::make_ball;
use opcorr_core::rng::{normal_grid, stream_rng, uniform_grid};
use opcorr_core::solver::proximity_check_toy;
use opcorr_core::Grid;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::write_json;
use crate::raster::write_png;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyDemoConfig {
    /// Image side; even and at least 16.
    pub n: usize,
    /// Forward-only iterations of the range-confinement run.
    pub iterations: usize,
    pub step: f64,
    /// Scale of the random final-layer weights of the demo network.
    pub net_scale: f64,
    /// Length of the vectors in the proximity sweep.
    pub proximity_n: usize,
    pub seed: u64,
}

impl Default for ToyDemoConfig {
    fn default() -> Self {
        Self {
            n: 16,
            iterations: 1000,
            step: 0.2,
            net_scale: 0.5,
            proximity_n: 16,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyReport {
    pub checks: Vec<CheckResult>,
    pub panels: Vec<PathBuf>,
}

impl ToyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Root-sum-square of the odd rows relative to the whole image. Odd rows are
/// the kernel of the skip sampler.
pub fn kernel_fraction(x: &Grid) -> f64 {
    let total = x.norm();
    if total == 0.0 {
        return 0.0;
    }
    let odd: f64 = (0..x.rows())
        .filter(|r| r % 2 == 1)
        .flat_map(|r| (0..x.cols()).map(move |c| (r, c)))
        .map(|(r, c)| x.get(r, c).powi(2))
        .sum();
    odd.sqrt() / total
}

/// Worst kernel fraction over `iterations` forward-only gradient steps from
/// `Ã*y`, using a network with random parameters.
pub fn range_confinement(toy: &ToyOps, y: &Grid, cfg: &ToyDemoConfig) -> Result<f64> {
    let atilde: Arc<dyn LinearOp> = Arc::new(toy.atilde.clone());
    let arch = NetArch {
        channels: vec![4, 8],
        kernel: 3,
        convs_per_block: 1,
        ..NetArch::desk()
    };
    let f = CorrectionNet::random(arch, cfg.seed, cfg.net_scale)?;
    let co = CorrectedOperator::forward_only(atilde.clone(), f);
    let mut x = atilde.adjoint(y)?;
    let mut worst = kernel_fraction(&x);
    for k in 0..cfg.iterations {
        let g = co.fidelity_gradient(&x, y)?;
        x.axpy(-cfg.step, &g);
        if !x.is_finite() {
            return Err(Error::Check(format!("forward-only iterate {} is not finite", k + 1)));
        }
        worst = worst.max(kernel_fraction(&x));
    }
    Ok(worst)
}

fn check(name: &str, passed: bool, detail: String) -> CheckResult {
    CheckResult {
        name: name.into(),
        passed,
        detail,
    }
}

/// Runs every toy check and writes the panels plus `toy_report.json` to `out`.
pub fn cmd_toy_demo(cfg: &ToyDemoConfig, out: &Path) -> Result<ToyReport> {
    if cfg.n < 16 || cfg.n % 2 != 0 {
        return Err(Error::Config(format!("toy demo needs an even n ≥ 16, got {}", cfg.n)));
    }
    let toy = ToyOps::for_image(cfg.n)?;
    let x = make_ball(cfg.n, cfg.seed)?;
    let ax = toy.a.apply(&x)?;
    let atx = toy.atilde.apply(&x)?;
    let panels_src = [
        ("x", x.clone()),
        ("Ax", ax.clone()),
        ("AstarAx", toy.a.adjoint(&ax)?),
        ("Atildex", atx.clone()),
        ("AtildestarAtildex", toy.atilde.adjoint(&atx)?),
        ("AtildestarAx", toy.atilde.adjoint(&ax)?),
    ];
    let panel_dir = out.join("panels");
    let panels = panels_src
        .iter()
        .map(|(name, g)| write_png(&panel_dir, name, g))
        .collect::<Result<Vec<_>>>()?;

    let mut checks = Vec::new();
    let striped = kernel_fraction(&panels_src[4].1);
    checks.push(check(
        "backprojection_zeroes_odd_rows",
        striped == 0.0,
        format!("odd-row fraction of Ã*Ãx = {striped:e}"),
    ));
    let worst = range_confinement(&toy, &ax, cfg)?;
    checks.push(check(
        "forward_only_range_confinement",
        worst <= 1e-8,
        format!("max odd-row fraction over {} iterates = {worst:e}", cfg.iterations),
    ));

    let vt = make_toy_ops(cfg.proximity_n)?;
    let dense = DenseOp::from_op(&vt.a)?;
    let mut rng = stream_rng(cfg.seed, 0x70726f78);
    let xt = uniform_grid(&mut rng, cfg.proximity_n, 1, 0.0, 1.0);
    let y = vt.a.apply(&xt)?;
    let mut surrogates: Vec<(String, Box<dyn LinearOp>)> = vec![("skip".into(), Box::new(vt.atilde.clone()))];
    for (k, eps) in [1e-3, 1e-2, 1e-1].into_iter().enumerate() {
        let p = normal_grid(&mut stream_rng(cfg.seed, 0x70657274 + k as u64), 1, dense.forward_matrix().len());
        let fwd: Vec<f64> = dense
            .forward_matrix()
            .iter()
            .zip(p.as_slice())
            .map(|(a, b)| a + eps * b)
            .collect();
        let op = DenseOp::new("perturbed", (cfg.proximity_n, 1), (cfg.proximity_n / 2, 1), fwd)?;
        surrogates.push((format!("perturbed_{eps:e}"), Box::new(op)));
    }
    for (k, (name, op)) in surrogates.iter().enumerate() {
        let p = proximity_check_toy(&vt.a, op.as_ref(), &y, 1e-2, 0.1, 50, cfg.seed + k as u64)?;
        checks.push(check(
            &format!("minimiser_proximity_{name}"),
            p.holds(),
            format!(
                "distance {:.3e} vs bound {:.3e} (m̂ = {:.3e}, applicable = {})",
                p.distance, p.bound, p.m_hat, p.applicable
            ),
        ));
    }
    let report = ToyReport { checks, panels };
    write_json(&out.join("toy_report.json"), &report)?;
    Ok(report)
}

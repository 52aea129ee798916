//! The experiment stages behind the CLI: generate, train, reconstruct, evaluate.
//!
//! Output layout under `cfg.out`:
//! `config.resolved.json`, `checkpoints/`, `training/<method>.csv`,
//! `recon/<label>/{<i>.x.bin, trace_<i>.csv, lambda.json, summary.json}` and
//! `figures/{fig_*.csv, table1.csv, summary.json, png/}`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use opcorr_core::aem::{estimate_error_stats, whitened_norm, ErrorStats};
use opcorr_core::correction::{
    train_recursive, CorrectedOperator, CorrectionNet, EpochStats, OperatorPair,
};
use opcorr_core::operators::{LinearOp, PatAccurate, PatApprox, PatConfig};
use opcorr_core::phantoms::Split;
use opcorr_core::solver::{estimate_norm, solve, Reference, SolveConfig};
use opcorr_core::{Image, Measurement};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::artifacts::{
    latest_checkpoint, read_checkpoint, read_csv, read_stats, stats_name, trace_rows, write_checkpoint,
    write_csv, write_stats, TraceRow, TrainingRow,
};
use crate::config::{ExperimentConfig, MethodName};
use crate::dataset::{resolve_data_root, Dataset};
use crate::error::{Error, Result};
use crate::format::{read_json, write_grid_with_sidecar, write_json};
use crate::raster::write_png;

/// Tolerance of the gradient-alignment bound on traced iterates.
pub const LEMMA_TOL: f64 = 1e-9;

/// The accurate and approximate photoacoustic operators plus `‖A‖`.
#[derive(Clone)]
pub struct Operators {
    pub a: Arc<dyn LinearOp>,
    pub atilde: Arc<dyn LinearOp>,
    pub norm: f64,
}

impl Operators {
    pub fn new(cfg: &PatConfig, seed: u64) -> Result<Self> {
        let a: Arc<dyn LinearOp> = Arc::new(PatAccurate::new(cfg.clone())?);
        let atilde: Arc<dyn LinearOp> = Arc::new(PatApprox::new(cfg.clone())?);
        let norm = estimate_norm(a.as_ref(), seed)?;
        Ok(Self { a, atilde, norm })
    }

    pub fn reference(&self) -> Reference<'_> {
        Reference {
            op: self.a.as_ref(),
            norm: self.norm,
        }
    }
}

/// Runs `f` on a thread pool bounded by `cfg.jobs`.
pub fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        builder = builder.num_threads(j);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

fn data_root(cfg: &ExperimentConfig) -> PathBuf {
    resolve_data_root(cfg.data_root.as_deref())
}

fn echo_config(cfg: &ExperimentConfig) -> Result<()> {
    cfg.save(&cfg.resolved_path())
}

/// Builds the dataset of `cfg` and returns the manifest path.
pub fn cmd_generate(cfg: &ExperimentConfig) -> Result<PathBuf> {
    cfg.validate()?;
    echo_config(cfg)?;
    with_jobs(cfg.jobs, || {
        crate::dataset::build_dataset(&data_root(cfg), &cfg.dataset, &cfg.operator)
    })?
}

fn open_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    Dataset::open_or_build(&data_root(cfg), &cfg.dataset, &cfg.operator)
}

/// What a training run produced.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub method: MethodName,
    pub artifacts: Vec<PathBuf>,
    pub history: Vec<TrainingRow>,
}

/// Trains `method` (or estimates the error statistics for the error model).
/// Methods without learned parts succeed without producing anything.
pub fn cmd_train(cfg: &ExperimentConfig, method: MethodName) -> Result<TrainReport> {
    cfg.validate()?;
    echo_config(cfg)?;
    let mut report = TrainReport {
        method,
        artifacts: Vec::new(),
        history: Vec::new(),
    };
    if !method.needs_training() {
        return Ok(report);
    }
    let ds = with_jobs(cfg.jobs, || open_dataset(cfg))??;
    let ops = Operators::new(&cfg.operator, cfg.seed)?;
    let kind = cfg.kind().name();
    let ckpt_dir = cfg.checkpoint_dir();
    let train = with_jobs(cfg.jobs, || ds.load_split(Split::Train, None))??;
    if method == MethodName::Aem {
        let xs: Vec<Image> = train.into_iter().map(|(x, _)| x).collect();
        let (eta, gamma) = estimate_error_stats(&xs, ops.a.as_ref(), ops.atilde.as_ref())?;
        let stats = ErrorStats::new(eta, gamma, None, 0.0)?;
        let path = ckpt_dir.join(stats_name(kind));
        write_stats(&path, kind, &stats, 0.0)?;
        report.artifacts.push(path);
        return Ok(report);
    }
    let ys: Vec<Measurement> = train.into_iter().map(|(_, y)| y).collect();
    let tcfg = cfg.train_config(method);
    let f = CorrectionNet::new(cfg.arch.clone(), cfg.net_seed(method, 0))?;
    let g = if method.has_adjoint_net() {
        Some(CorrectionNet::new(cfg.arch.clone(), cfg.net_seed(method, 1))?)
    } else {
        None
    };
    let pair = OperatorPair {
        a: ops.a.as_ref(),
        atilde: ops.atilde.as_ref(),
    };
    let csv_path = cfg.out.join("training").join(format!("{}.csv", method.name()));
    let start = Instant::now();
    let mut rows = Vec::new();
    let mut artifacts = Vec::new();
    let mut hook = |stats: &EpochStats, f: &CorrectionNet, g: Option<&CorrectionNet>| {
        rows.push(TrainingRow::new(stats, start.elapsed().as_secs_f64()));
        write_csv(&csv_path, &rows).map_err(to_core)?;
        let path = write_checkpoint(&ckpt_dir, method.name(), kind, stats.epoch + 1, f, g).map_err(to_core)?;
        artifacts.push(path);
        Ok(())
    };
    train_recursive(&ys, pair, f, g, &tcfg, &mut hook)?;
    artifacts.push(csv_path);
    report.artifacts = artifacts;
    report.history = rows;
    Ok(report)
}

// Hook errors travel through the core trainer, which only knows its own error type.
fn to_core(e: Error) -> opcorr_core::Error {
    opcorr_core::Error::Input(e.to_string())
}

/// The corrected operator `method` reconstructs with, loading its artifacts
/// from `ckpt_dir` (trained on `dataset`).
pub fn corrected_operator(
    method: MethodName,
    ops: &Operators,
    ckpt_dir: &Path,
    dataset: &str,
) -> Result<CorrectedOperator> {
    Ok(match method {
        MethodName::None => CorrectedOperator::none(ops.atilde.clone()),
        MethodName::Accurate => CorrectedOperator::none(ops.a.clone()),
        MethodName::Aem => {
            // Normalise the whitened data term to the accurate operator's
            // Lipschitz constant so step size and λ grid stay comparable.
            let stats = read_stats(&ckpt_dir.join(stats_name(dataset)))?;
            let wn = whitened_norm(ops.atilde.as_ref(), &stats, 50, 0)?;
            let stats = if wn > 0.0 { stats.rescaled(ops.norm / wn)? } else { stats };
            CorrectedOperator::aem(ops.atilde.clone(), Arc::new(stats))?
        }
        _ => {
            let path = latest_checkpoint(ckpt_dir, method.name(), dataset)?;
            let ck = read_checkpoint(&path)?;
            match (method.has_adjoint_net(), ck.g) {
                (true, Some(g)) => CorrectedOperator::forward_adjoint(ops.atilde.clone(), ck.f, g),
                (false, None) => CorrectedOperator::forward_only(ops.atilde.clone(), ck.f),
                _ => {
                    return Err(Error::Format {
                        path,
                        msg: format!("checkpoint nets do not match method {method}"),
                    })
                }
            }
        }
    })
}

/// One scored λ value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaScore {
    pub lambda: f64,
    pub mean_rel_l2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaSearch {
    pub pilot: Vec<LambdaScore>,
    pub grid: Vec<LambdaScore>,
    pub best: f64,
}

fn score_lambdas(
    co: &CorrectedOperator,
    samples: &[(Image, Measurement)],
    base: &SolveConfig,
    lambdas: &[f64],
) -> Result<Vec<LambdaScore>> {
    let jobs: Vec<(usize, usize)> = (0..lambdas.len())
        .flat_map(|l| (0..samples.len()).map(move |s| (l, s)))
        .collect();
    let errs: Vec<f64> = jobs
        .par_iter()
        .map(|&(l, s)| {
            let cfg = SolveConfig {
                lambda: lambdas[l],
                ..*base
            };
            let (x, y) = &samples[s];
            // a diverging λ simply scores badly
            Ok(match solve(co, y, &cfg, None, None) {
                Ok((xh, _)) => xh.rel_err(x),
                Err(opcorr_core::Error::NonFinite { .. }) => f64::INFINITY,
                Err(e) => return Err(e.into()),
            })
        })
        .collect::<Result<_>>()?;
    Ok(lambdas
        .iter()
        .enumerate()
        .map(|(l, &lambda)| {
            let chunk = &errs[l * samples.len()..(l + 1) * samples.len()];
            LambdaScore {
                lambda,
                mean_rel_l2: chunk.iter().sum::<f64>() / chunk.len() as f64,
            }
        })
        .collect())
}

fn best_of(scores: &[LambdaScore]) -> Result<f64> {
    scores
        .iter()
        .filter(|s| s.mean_rel_l2.is_finite())
        .min_by(|a, b| a.mean_rel_l2.total_cmp(&b.mean_rel_l2))
        .map(|s| s.lambda)
        .ok_or_else(|| Error::Check("the solver diverged for every λ on the grid".into()))
}

/// Picks λ by the mean relative L2 error on `samples`: an optional coarse pilot
/// re-centres the log grid, then the full grid is scored.
pub fn tune_lambda(
    cfg: &ExperimentConfig,
    co: &CorrectedOperator,
    samples: &[(Image, Measurement)],
    centre: f64,
    max_iters: usize,
) -> Result<LambdaSearch> {
    let grid = &cfg.lambda_grid;
    let base = SolveConfig {
        max_iters,
        ..cfg.solve
    };
    let mut centre = centre;
    let mut pilot = Vec::new();
    if grid.pilot_points > 0 {
        let pilot_cfg = SolveConfig {
            max_iters: ((max_iters as f64 * grid.pilot_fraction).ceil() as usize).max(1),
            ..base
        };
        let lambdas = grid.around(centre, grid.pilot_points, grid.ratio * grid.ratio);
        pilot = score_lambdas(co, samples, &pilot_cfg, &lambdas)?;
        centre = best_of(&pilot)?;
    }
    let scores = score_lambdas(co, samples, &base, &grid.around(centre, grid.points, grid.ratio))?;
    Ok(LambdaSearch {
        best: best_of(&scores)?,
        pilot,
        grid: scores,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleResult {
    pub index: usize,
    pub rel_l2: f64,
    /// Smallest `lhs − rhs` of the alignment bound over traced iterates.
    pub lemma_min_margin: Option<f64>,
    pub lemma_checked: usize,
}

/// Per-label reconstruction summary (`summary.json`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconSummary {
    pub label: String,
    pub method: MethodName,
    /// Dataset the reconstructions are of.
    pub dataset: String,
    /// Dataset the corrections were trained on.
    pub trained_on: String,
    pub lambda: f64,
    pub max_iters: usize,
    pub samples: Vec<SampleResult>,
    pub mean_rel_l2: f64,
    pub std_rel_l2: f64,
    pub lemma_checked: usize,
    pub lemma_violations: usize,
}

/// How a reconstruction run chooses λ.
#[derive(Debug, Clone, Copy)]
pub enum LambdaChoice {
    /// Grid search around the given centre.
    Tune(f64),
    Fixed(f64),
}

pub fn test_indices(cfg: &ExperimentConfig, selector: Option<&[usize]>) -> Result<Vec<usize>> {
    let n = cfg.dataset.n_test;
    match selector {
        Some(sel) => {
            if let Some(bad) = sel.iter().find(|&&i| i >= n) {
                return Err(Error::Config(format!("test sample {bad} out of range (n_test = {n})")));
            }
            Ok(sel.to_vec())
        }
        None => Ok((0..cfg.test_samples.map_or(n, |k| k.min(n))).collect()),
    }
}

/// Reconstructs the selected test samples with `co`, writing images, traces
/// and the summary under `recon/<label>`.
#[allow(clippy::too_many_arguments)]
pub fn reconstruct_with(
    cfg: &ExperimentConfig,
    ds: &Dataset,
    ops: &Operators,
    label: &str,
    method: MethodName,
    trained_on: &str,
    co: &CorrectedOperator,
    lambda: LambdaChoice,
    indices: &[usize],
) -> Result<ReconSummary> {
    let dir = cfg.recon_dir(label);
    let max_iters = cfg.max_iters(method);
    let lambda = match lambda {
        LambdaChoice::Fixed(l) => l,
        LambdaChoice::Tune(centre) => {
            let tune = ds.load_split(Split::Train, Some(cfg.lambda_grid.tune_samples))?;
            let search = tune_lambda(cfg, co, &tune, centre, max_iters)?;
            write_json(&dir.join("lambda.json"), &search)?;
            search.best
        }
    };
    let scfg = SolveConfig {
        lambda,
        max_iters,
        ..cfg.solve
    };
    let samples: Vec<SampleResult> = indices
        .par_iter()
        .map(|&i| {
            let (x, y) = ds.load(Split::Test, i)?;
            let (xh, trace) = solve(co, &y, &scfg, Some(&x), Some(ops.reference()))
                .map_err(|e| Error::Check(format!("{label}, test sample {i}: {e}")))?;
            write_grid_with_sidecar(&dir.join(format!("{i}.x.bin")), &xh, &cfg.operator)?;
            write_csv(&dir.join(format!("trace_{i}.csv")), &trace_rows(&trace))?;
            let margins: Vec<f64> = trace
                .entries
                .iter()
                .filter_map(|e| e.lemma.map(|l| l.lhs - l.rhs))
                .collect();
            Ok(SampleResult {
                index: i,
                rel_l2: xh.rel_err(&x),
                lemma_min_margin: margins.iter().copied().reduce(f64::min),
                lemma_checked: margins.len(),
            })
        })
        .collect::<Result<_>>()?;
    let n = samples.len() as f64;
    let mean = samples.iter().map(|s| s.rel_l2).sum::<f64>() / n;
    let var = samples.iter().map(|s| (s.rel_l2 - mean).powi(2)).sum::<f64>() / n;
    let summary = ReconSummary {
        label: label.into(),
        method,
        dataset: cfg.kind().name().into(),
        trained_on: trained_on.into(),
        lambda,
        max_iters,
        mean_rel_l2: mean,
        std_rel_l2: var.sqrt(),
        lemma_checked: samples.iter().map(|s| s.lemma_checked).sum(),
        lemma_violations: samples
            .iter()
            .filter(|s| s.lemma_min_margin.is_some_and(|m| m < -LEMMA_TOL))
            .count(),
        samples,
    };
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(summary)
}

/// Labels of the cross-dataset rows: networks trained elsewhere, evaluated
/// with their original λ and with λ re-tuned on this dataset.
pub fn cross_labels(cfg: &ExperimentConfig) -> Option<(String, String)> {
    cfg.cross_dataset.as_ref().map(|c| {
        let base = format!("{}_from_{}", c.method.name(), c.source_kind.name());
        (format!("{base}_old_lambda"), format!("{base}_new_lambda"))
    })
}

/// Reconstructs with every method in `methods` (and the cross-dataset rows
/// when `cross` is set).
pub fn cmd_reconstruct(
    cfg: &ExperimentConfig,
    methods: &[MethodName],
    cross: bool,
    selector: Option<&[usize]>,
) -> Result<Vec<ReconSummary>> {
    cfg.validate()?;
    echo_config(cfg)?;
    let indices = test_indices(cfg, selector)?;
    let ops = Operators::new(&cfg.operator, cfg.seed)?;
    let kind = cfg.kind().name();
    with_jobs(cfg.jobs, || {
        let ds = open_dataset(cfg)?;
        let mut out = Vec::new();
        for &m in methods {
            let co = corrected_operator(m, &ops, &cfg.checkpoint_dir(), kind)?;
            let centre = cfg.lambda_grid.centre(m);
            out.push(reconstruct_with(
                cfg,
                &ds,
                &ops,
                m.name(),
                m,
                kind,
                &co,
                LambdaChoice::Tune(centre),
                &indices,
            )?);
        }
        if let (true, Some(c), Some((old, new))) = (cross, &cfg.cross_dataset, cross_labels(cfg)) {
            let src = c.source_kind.name();
            let co = corrected_operator(c.method, &ops, &c.source_out.join("checkpoints"), src)?;
            let src_summary = c.source_out.join("recon").join(c.method.name()).join("summary.json");
            if !src_summary.exists() {
                return Err(Error::Missing {
                    what: "source reconstruction summary".into(),
                    path: src_summary,
                    hint: "run `opcorr reconstruct` for the source experiment first".into(),
                });
            }
            let old_lambda = read_json::<ReconSummary>(&src_summary)?.lambda;
            let fixed = LambdaChoice::Fixed(old_lambda);
            out.push(reconstruct_with(cfg, &ds, &ops, &old, c.method, src, &co, fixed, &indices)?);
            let tune = LambdaChoice::Tune(old_lambda);
            out.push(reconstruct_with(cfg, &ds, &ops, &new, c.method, src, &co, tune, &indices)?);
        }
        Ok(out)
    })?
}

/// One point of a mean curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub method: String,
    pub iter: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Row {
    pub method: String,
    pub dataset: String,
    pub trained_on: String,
    pub lambda: f64,
    pub iterations: usize,
    pub mean_rel_l2: f64,
    pub std_rel_l2: f64,
    pub samples: usize,
}

/// Alignment landmarks of one method's mean curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentClaims {
    pub first: Option<f64>,
    pub min: Option<f64>,
    /// First traced iterate whose mean alignment is negative.
    pub first_negative_iter: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub table: Vec<Table1Row>,
    pub alignment: BTreeMap<String, AlignmentClaims>,
    pub lemma_checked: usize,
    pub lemma_violations: usize,
    pub figures: Vec<PathBuf>,
}

type Metric = fn(&TraceRow) -> Option<f64>;

const FIGURES: [(&str, Metric); 5] = [
    ("alignment", |r| r.alignment),
    ("forward_error", |r| Some(r.fwd_err)),
    ("adjoint_error", |r| Some(r.adj_err)),
    ("data_term", |r| Some(r.data_term)),
    ("rel_l2", |r| r.rel_l2),
];

fn mean_curve(label: &str, traces: &[Vec<TraceRow>], metric: Metric) -> Vec<CurvePoint> {
    let mut acc: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for t in traces {
        for row in t {
            if let Some(v) = metric(row) {
                acc.entry(row.iter).or_default().push(v);
            }
        }
    }
    acc.into_iter()
        .map(|(iter, vs)| CurvePoint {
            method: label.into(),
            iter,
            mean: vs.iter().sum::<f64>() / vs.len() as f64,
            min: vs.iter().copied().fold(f64::INFINITY, f64::min),
            max: vs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            count: vs.len(),
        })
        .collect()
}

/// Every label `cmd_reconstruct` produces for `cfg`.
pub fn expected_labels(cfg: &ExperimentConfig) -> Vec<String> {
    let mut labels: Vec<String> = cfg.methods.iter().map(|m| m.name().to_string()).collect();
    if let Some((old, new)) = cross_labels(cfg) {
        labels.push(old);
        labels.push(new);
    }
    labels
}

/// Aggregates traces into figure CSVs, `table1.csv` and PNG panels. Missing
/// reconstructions are listed together in one error after the available
/// ones are written; a violated alignment bound also fails the command.
pub fn cmd_evaluate(cfg: &ExperimentConfig) -> Result<EvalReport> {
    cfg.validate()?;
    echo_config(cfg)?;
    let fig_dir = cfg.figures_dir();
    let mut missing = Vec::new();
    let mut loaded = Vec::new();
    for label in expected_labels(cfg) {
        let path = cfg.recon_dir(&label).join("summary.json");
        if !path.exists() {
            missing.push(path);
            continue;
        }
        let summary: ReconSummary = read_json(&path)?;
        let mut traces = Vec::new();
        for s in &summary.samples {
            let tp = cfg.recon_dir(&label).join(format!("trace_{}.csv", s.index));
            if tp.exists() {
                traces.push(read_csv::<TraceRow>(&tp)?);
            } else {
                missing.push(tp);
            }
        }
        loaded.push((summary, traces));
    }
    let mut report = EvalReport {
        table: Vec::new(),
        alignment: BTreeMap::new(),
        lemma_checked: 0,
        lemma_violations: 0,
        figures: Vec::new(),
    };
    for (name, metric) in FIGURES {
        let rows: Vec<CurvePoint> = loaded
            .iter()
            .flat_map(|(s, t)| mean_curve(&s.label, t, metric))
            .collect();
        let path = fig_dir.join(format!("fig_{name}.csv"));
        write_csv(&path, &rows)?;
        report.figures.push(path);
    }
    for (s, traces) in &loaded {
        let curve = mean_curve(&s.label, traces, FIGURES[0].1);
        report.alignment.insert(
            s.label.clone(),
            AlignmentClaims {
                first: curve.first().map(|p| p.mean),
                min: curve.iter().map(|p| p.mean).reduce(f64::min),
                first_negative_iter: curve.iter().find(|p| p.mean < 0.0).map(|p| p.iter),
            },
        );
        report.lemma_checked += s.lemma_checked;
        report.lemma_violations += s.lemma_violations;
        report.table.push(Table1Row {
            method: s.label.clone(),
            dataset: s.dataset.clone(),
            trained_on: s.trained_on.clone(),
            lambda: s.lambda,
            iterations: s.max_iters,
            mean_rel_l2: s.mean_rel_l2,
            std_rel_l2: s.std_rel_l2,
            samples: s.samples.len(),
        });
    }
    let table_path = fig_dir.join("table1.csv");
    write_csv(&table_path, &report.table)?;
    report.figures.push(table_path);
    report.figures.extend(render_panels(cfg, &loaded)?);
    write_json(&fig_dir.join("summary.json"), &report)?;
    if !missing.is_empty() {
        let list: Vec<String> = missing.iter().map(|p| p.display().to_string()).collect();
        return Err(Error::Missing {
            what: format!("{} reconstruction artifact(s)", missing.len()),
            path: missing[0].clone(),
            hint: format!("run `opcorr reconstruct` first; missing: {}", list.join(", ")),
        });
    }
    if report.lemma_violations > 0 {
        return Err(Error::Check(format!(
            "alignment bound violated on {} traced sample(s)",
            report.lemma_violations
        )));
    }
    Ok(report)
}

/// Ground truth and every method's reconstruction of the first evaluated sample.
fn render_panels(cfg: &ExperimentConfig, loaded: &[(ReconSummary, Vec<Vec<TraceRow>>)]) -> Result<Vec<PathBuf>> {
    let Some(index) = loaded.first().and_then(|(s, _)| s.samples.first()).map(|s| s.index) else {
        return Ok(Vec::new());
    };
    let png_dir = cfg.figures_dir().join("png");
    let ds = open_dataset(cfg)?;
    let (x, y) = ds.load(Split::Test, index)?;
    let mut out = vec![
        write_png(&png_dir, &format!("sample{index}_truth"), &x)?,
        write_png(&png_dir, &format!("sample{index}_measurement"), &y)?,
    ];
    for (s, _) in loaded {
        let path = cfg.recon_dir(&s.label).join(format!("{index}.x.bin"));
        if path.exists() {
            let xh = crate::format::read_grid(&path)?;
            out.push(write_png(&png_dir, &format!("sample{index}_{}", s.label), &xh)?);
        }
    }
    Ok(out)
}

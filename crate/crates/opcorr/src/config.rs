//! Experiment configuration: one JSON document, scale presets and CLI overrides.

use std::collections::BTreeMap;
use std::path::PathBuf;

use opcorr_core::correction::{Method, NetArch, TrainConfig};
use opcorr_core::operators::PatConfig;
use opcorr_core::phantoms::{derive_seed, DatasetSpec, PhantomKind};
use opcorr_core::solver::SolveConfig;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::{read_json, write_json};

/// The compared reconstruction methods.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum,
)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum MethodName {
    /// Approximate operator without correction.
    None,
    /// Accurate operator (reference).
    Accurate,
    /// Approximation error model.
    Aem,
    /// Forward correction only, trained on the first iterate.
    Forward,
    /// Forward correction only, trained recursively.
    ForwardRecursive,
    /// Forward and adjoint corrections, trained on the first iterate.
    ForwardAdjoint,
    /// Forward and adjoint corrections, trained recursively.
    ForwardAdjointRecursive,
}

impl MethodName {
    pub const ALL: [MethodName; 7] = [
        MethodName::None,
        MethodName::Accurate,
        MethodName::Aem,
        MethodName::Forward,
        MethodName::ForwardRecursive,
        MethodName::ForwardAdjoint,
        MethodName::ForwardAdjointRecursive,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MethodName::None => "none",
            MethodName::Accurate => "accurate",
            MethodName::Aem => "aem",
            MethodName::Forward => "forward",
            MethodName::ForwardRecursive => "forward_recursive",
            MethodName::ForwardAdjoint => "forward_adjoint",
            MethodName::ForwardAdjointRecursive => "forward_adjoint_recursive",
        }
    }

    /// Whether the method owns network checkpoints.
    pub fn is_learned(self) -> bool {
        matches!(
            self,
            MethodName::Forward
                | MethodName::ForwardRecursive
                | MethodName::ForwardAdjoint
                | MethodName::ForwardAdjointRecursive
        )
    }

    pub fn needs_training(self) -> bool {
        self.is_learned() || self == MethodName::Aem
    }

    pub fn is_recursive(self) -> bool {
        matches!(self, MethodName::ForwardRecursive | MethodName::ForwardAdjointRecursive)
    }

    pub fn has_adjoint_net(self) -> bool {
        matches!(self, MethodName::ForwardAdjoint | MethodName::ForwardAdjointRecursive)
    }

    /// The gradient family used at reconstruction time.
    pub fn core_method(self) -> Method {
        match self {
            MethodName::None | MethodName::Accurate => Method::None,
            MethodName::Aem => Method::Aem,
            MethodName::Forward | MethodName::ForwardRecursive => Method::ForwardOnly,
            MethodName::ForwardAdjoint | MethodName::ForwardAdjointRecursive => Method::ForwardAdjoint,
        }
    }
}

impl std::fmt::Display for MethodName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Compute budget tier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    /// Publication-sized runs: 4096 balls, 4000 solver iterations.
    Full,
    /// Continuous-integration runs: 512 balls, 400 solver iterations.
    Ci,
    /// Minutes-long runs exercising every stage on a handful of samples.
    Smoke,
}

/// Log-spaced regularisation search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LambdaGrid {
    /// Points of the final grid, centred on the (pilot-adjusted) centre.
    pub points: usize,
    /// Ratio between neighbouring grid points.
    pub ratio: f64,
    /// Starting centre per method; methods not listed use `default_centre`.
    pub centres: BTreeMap<MethodName, f64>,
    pub default_centre: f64,
    /// Pilot points at `ratio²` spacing, solved with `pilot_fraction` of the
    /// iterations; the best one becomes the centre. Zero disables the pilot.
    pub pilot_points: usize,
    pub pilot_fraction: f64,
    /// Training samples used to score λ by the relative L2 error.
    pub tune_samples: usize,
}

impl Default for LambdaGrid {
    fn default() -> Self {
        let centres = BTreeMap::from([
            (MethodName::Accurate, 2e-3),
            (MethodName::None, 3e-2),
            (MethodName::Aem, 1e-2),
        ]);
        Self {
            points: 7,
            ratio: 10f64.sqrt(),
            centres,
            default_centre: 3e-3,
            pilot_points: 3,
            pilot_fraction: 0.25,
            tune_samples: 4,
        }
    }
}

impl LambdaGrid {
    pub fn centre(&self, method: MethodName) -> f64 {
        self.centres.get(&method).copied().unwrap_or(self.default_centre)
    }

    /// `points` values `centre·ratio^k`, symmetric about the centre.
    pub fn around(&self, centre: f64, points: usize, ratio: f64) -> Vec<f64> {
        let half = (points as f64 - 1.0) / 2.0;
        (0..points)
            .map(|k| centre * ratio.powf(k as f64 - half))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.points == 0 || !(self.ratio > 1.0) || !(self.default_centre > 0.0) {
            return Err(Error::Config("λ grid needs points ≥ 1, ratio > 1 and a positive centre".into()));
        }
        if self.centres.values().any(|c| !(*c > 0.0)) {
            return Err(Error::Config("λ centres must be positive".into()));
        }
        if !(self.pilot_fraction > 0.0 && self.pilot_fraction <= 1.0) {
            return Err(Error::Config("pilot_fraction must lie in (0, 1]".into()));
        }
        if self.tune_samples == 0 {
            return Err(Error::Config("tune_samples must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// Evaluates networks trained in another experiment on this experiment's data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrossDataset {
    /// Output directory of the experiment that trained the networks.
    pub source_out: PathBuf,
    /// Dataset the networks were trained on.
    pub source_kind: PhantomKind,
    pub method: MethodName,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub scale: Scale,
    /// Global seed; the dataset and training seeds are derived from it.
    pub seed: u64,
    pub dataset: DatasetSpec,
    /// Dataset root; falls back to `$OPCORR_DATA_ROOT`, then `./data`.
    #[serde(default)]
    pub data_root: Option<PathBuf>,
    pub operator: PatConfig,
    pub methods: Vec<MethodName>,
    pub arch: NetArch,
    /// Shared training settings; `n_max` is forced to 1 for non-recursive methods
    /// and the inner-step λ is the method's λ-grid centre.
    pub train: TrainConfig,
    /// Unrolling depth of the recursive methods.
    pub recursive_n_max: usize,
    pub solve: SolveConfig,
    /// Iteration budget for the error model, which converges more slowly.
    #[serde(default)]
    pub aem_max_iters: Option<usize>,
    pub lambda_grid: LambdaGrid,
    /// Number of test samples reconstructed (all when absent).
    #[serde(default)]
    pub test_samples: Option<usize>,
    #[serde(default)]
    pub cross_dataset: Option<CrossDataset>,
    pub out: PathBuf,
    /// Worker threads (all cores when absent).
    #[serde(default)]
    pub jobs: Option<usize>,
}

const TRAIN_SEED_STREAM: u64 = 0x7472_6169_6e;
const NET_SEED_STREAM: u64 = 0x6e65_74;

impl ExperimentConfig {
    /// Defaults for `kind` at `scale`.
    pub fn preset(kind: PhantomKind, scale: Scale) -> Self {
        let mut dataset = DatasetSpec::for_kind(kind);
        let mut train = TrainConfig::default();
        let mut solve = SolveConfig::default();
        let mut grid = LambdaGrid::default();
        let mut arch = NetArch::desk();
        let mut recursive_n_max = 10;
        let mut test_samples = None;
        let vessel_iters = 250;
        match scale {
            Scale::Full => {
                train.epochs = 20;
            }
            Scale::Ci => {
                dataset.n_train = if kind == PhantomKind::Vessels { 256 } else { 512 };
                solve.max_iters = 400;
                train.epochs = 10;
                train.lr = 1e-3;
                arch = NetArch {
                    channels: vec![8, 16, 32],
                    kernel: 3,
                    ..NetArch::desk()
                };
                recursive_n_max = 5;
                test_samples = Some(16);
                grid.tune_samples = 2;
            }
            Scale::Smoke => {
                dataset.n_train = 8;
                dataset.n_test = 4;
                solve.max_iters = 60;
                train.epochs = 2;
                train.batch_size = 4;
                train.lr = 1e-3;
                arch = NetArch {
                    channels: vec![4, 8],
                    kernel: 3,
                    ..NetArch::desk()
                };
                recursive_n_max = 3;
                grid.points = 3;
                grid.pilot_points = 0;
                grid.tune_samples = 1;
            }
        }
        let mut aem_max_iters = None;
        if kind == PhantomKind::Vessels {
            solve.max_iters = solve.max_iters.min(vessel_iters);
            aem_max_iters = Some(match scale {
                Scale::Full => 20_000,
                Scale::Ci => 2_000,
                Scale::Smoke => 120,
            });
        }
        let scale_name = match scale {
            Scale::Full => "full",
            Scale::Ci => "ci",
            Scale::Smoke => "smoke",
        };
        Self {
            name: format!("{}_{scale_name}", kind.name()),
            scale,
            seed: 0,
            operator: PatConfig::with_size(dataset.n),
            dataset,
            data_root: None,
            methods: MethodName::ALL.to_vec(),
            arch,
            train,
            recursive_n_max,
            solve,
            aem_max_iters,
            lambda_grid: grid,
            test_samples,
            cross_dataset: None,
            out: PathBuf::from(format!("runs/{}_{scale_name}", kind.name())),
            jobs: None,
        }
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        read_json(path)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn kind(&self) -> PhantomKind {
        self.dataset.kind
    }

    /// Propagates the global seed into the nested seeds.
    pub fn resolve_seeds(&mut self) {
        self.dataset.seed = self.seed;
        self.train.seed = derive_seed(self.seed, TRAIN_SEED_STREAM);
    }

    /// Initialisation seed of a method's network with the given role index.
    pub fn net_seed(&self, method: MethodName, role: u64) -> u64 {
        derive_seed(self.seed, NET_SEED_STREAM + 16 * method as u64 + role)
    }

    /// Training settings for `method`.
    pub fn train_config(&self, method: MethodName) -> TrainConfig {
        let mut t = self.train.clone();
        t.n_max = if method.is_recursive() { self.recursive_n_max } else { 1 };
        t.lambda = self.lambda_grid.centre(method);
        t.mu = self.solve.mu;
        t.delta = self.solve.delta;
        t.positivity = self.solve.positivity;
        t
    }

    pub fn max_iters(&self, method: MethodName) -> usize {
        match (method, self.aem_max_iters) {
            (MethodName::Aem, Some(n)) => n,
            _ => self.solve.max_iters,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.dataset.validate()?;
        self.operator.validate()?;
        if self.operator.n != self.dataset.n {
            return Err(Error::Config(format!(
                "operator size {} differs from image size {}",
                self.operator.n, self.dataset.n
            )));
        }
        self.arch.validate()?;
        if self.dataset.n % self.arch.divisor() != 0 {
            return Err(Error::Config(format!(
                "image size {} is not divisible by {} as the network needs",
                self.dataset.n,
                self.arch.divisor()
            )));
        }
        self.train.validate()?;
        self.solve.validate()?;
        self.lambda_grid.validate()?;
        if self.recursive_n_max == 0 {
            return Err(Error::Config("recursive_n_max must be ≥ 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("no methods selected".into()));
        }
        if self.jobs == Some(0) {
            return Err(Error::Config("jobs must be ≥ 1".into()));
        }
        Ok(())
    }

    pub fn checkpoint_dir(&self) -> PathBuf {
        self.out.join("checkpoints")
    }

    pub fn recon_dir(&self, label: &str) -> PathBuf {
        self.out.join("recon").join(label)
    }

    pub fn figures_dir(&self) -> PathBuf {
        self.out.join("figures")
    }

    pub fn resolved_path(&self) -> PathBuf {
        self.out.join("config.resolved.json")
    }
}

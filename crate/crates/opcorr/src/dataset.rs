//! On-disk datasets: `<root>/<kind>/{train,test}/<index>.{x,y}.bin` plus a
//! `manifest.json` recording the spec, operator setup and every sample's seeds.

use std::path::{Path, PathBuf};

use opcorr_core::operators::{PatAccurate, PatConfig};
use opcorr_core::phantoms::{make_sample, DatasetSpec, Split};
use opcorr_core::{Image, Measurement};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::{read_grid, read_json, write_grid, write_json};

pub const FORMAT_VERSION: u32 = 1;
pub const DATA_ROOT_ENV: &str = "OPCORR_DATA_ROOT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub index: usize,
    pub phantom_seed: u64,
    pub noise_seed: u64,
    pub rotated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format_version: u32,
    pub spec: DatasetSpec,
    pub operator: PatConfig,
    pub train: Vec<SampleRecord>,
    pub test: Vec<SampleRecord>,
}

impl Manifest {
    pub fn records(&self, split: Split) -> &[SampleRecord] {
        match split {
            Split::Train => &self.train,
            Split::Test => &self.test,
        }
    }
}

/// `explicit`, else `$OPCORR_DATA_ROOT`, else `./data`.
pub fn resolve_data_root(explicit: Option<&Path>) -> PathBuf {
    if let Some(p) = explicit {
        return p.to_path_buf();
    }
    match std::env::var_os(DATA_ROOT_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => PathBuf::from("data"),
    }
}

pub fn dataset_dir(root: &Path, spec: &DatasetSpec) -> PathBuf {
    root.join(spec.kind.name())
}

pub fn sample_paths(dir: &Path, split: Split, index: usize) -> (PathBuf, PathBuf) {
    let base = dir.join(split.name());
    (
        base.join(format!("{index}.x.bin")),
        base.join(format!("{index}.y.bin")),
    )
}

/// Generates every sample of `spec`, measuring with the accurate operator, and
/// writes the files and manifest under `<root>/<kind>`. Returns the manifest path.
///
/// Each sample depends only on its own seeds, so the output is identical for
/// any number of worker threads.
pub fn build_dataset(root: &Path, spec: &DatasetSpec, cfg: &PatConfig) -> Result<PathBuf> {
    spec.validate()?;
    cfg.validate()?;
    if cfg.n != spec.n {
        return Err(Error::Config(format!(
            "dataset image size {} does not match operator size {}",
            spec.n, cfg.n
        )));
    }
    let op = PatAccurate::new(cfg.clone())?;
    let dir = dataset_dir(root, spec);
    let mut records = Vec::new();
    for split in [Split::Train, Split::Test] {
        let recs: Vec<SampleRecord> = (0..spec.stored_count(split))
            .into_par_iter()
            .map(|index| {
                let s = make_sample(spec, split, index, &op)?;
                let (xp, yp) = sample_paths(&dir, split, index);
                write_grid(&xp, &s.x)?;
                write_grid(&yp, &s.y)?;
                Ok(SampleRecord {
                    index,
                    phantom_seed: s.phantom_seed,
                    noise_seed: s.noise_seed,
                    rotated: s.rotated,
                })
            })
            .collect::<Result<_>>()?;
        records.push(recs);
    }
    let test = records.pop().expect("two splits");
    let train = records.pop().expect("two splits");
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        spec: spec.clone(),
        operator: cfg.clone(),
        train,
        test,
    };
    let path = dir.join("manifest.json");
    write_json(&path, &manifest)?;
    Ok(path)
}

/// A dataset opened from disk.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub dir: PathBuf,
    pub manifest: Manifest,
}

impl Dataset {
    pub fn open(dir: &Path) -> Result<Self> {
        let path = dir.join("manifest.json");
        if !path.exists() {
            return Err(Error::Missing {
                what: "dataset manifest".into(),
                path,
                hint: "run `opcorr generate` with the same config first".into(),
            });
        }
        let manifest: Manifest = read_json(&path)?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(Error::Format {
                path,
                msg: format!("unsupported dataset format version {}", manifest.format_version),
            });
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest,
        })
    }

    /// Opens the dataset for `spec` and `cfg`, building it when absent.
    /// An existing dataset generated from a different spec is an error rather
    /// than being silently overwritten.
    pub fn open_or_build(root: &Path, spec: &DatasetSpec, cfg: &PatConfig) -> Result<Self> {
        let dir = dataset_dir(root, spec);
        if !dir.join("manifest.json").exists() {
            build_dataset(root, spec, cfg)?;
        }
        let ds = Self::open(&dir)?;
        if &ds.manifest.spec != spec || &ds.manifest.operator != cfg {
            return Err(Error::Config(format!(
                "dataset at {} was generated from a different spec or operator; \
                 choose another data root or delete it",
                dir.display()
            )));
        }
        Ok(ds)
    }

    pub fn len(&self, split: Split) -> usize {
        self.manifest.records(split).len()
    }

    pub fn load(&self, split: Split, index: usize) -> Result<(Image, Measurement)> {
        let (xp, yp) = sample_paths(&self.dir, split, index);
        Ok((read_grid(&xp)?, read_grid(&yp)?))
    }

    /// Loads the first `limit` samples of `split` (all when `None`).
    pub fn load_split(&self, split: Split, limit: Option<usize>) -> Result<Vec<(Image, Measurement)>> {
        let n = limit.map_or(self.len(split), |l| l.min(self.len(split)));
        (0..n)
            .into_par_iter()
            .map(|i| self.load(split, i))
            .collect()
    }
}

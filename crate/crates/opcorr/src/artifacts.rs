//! Checkpoints, error statistics and CSV traces.
//!
//! A checkpoint is `OPCK`, a little-endian `u32` format version, a `u32` length,
//! a JSON descriptor of that length, then the parameters of every listed net as
//! little-endian `f32`. Error statistics use the same envelope (`OPCS`) with the
//! mean and covariance stored as `f64`; the whitening factor is recomputed on load.

use std::path::{Path, PathBuf};

use opcorr_core::aem::ErrorStats;
use opcorr_core::correction::{CorrectionNet, EpochStats, NetArch};
use opcorr_core::solver::Trace;
use opcorr_core::{Grid, Measurement};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{io_err, Error, Result};
use crate::format::write_bytes;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"OPCK";
pub const STATS_MAGIC: &[u8; 4] = b"OPCS";
pub const ARTIFACT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NetRole {
    /// Forward correction `F`.
    F,
    /// Adjoint correction `G`.
    G,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetEntry {
    pub role: NetRole,
    pub arch: NetArch,
    pub n_params: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub method: String,
    pub dataset: String,
    pub epoch: usize,
    pub nets: Vec<NetEntry>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub f: CorrectionNet,
    pub g: Option<CorrectionNet>,
}

pub fn checkpoint_name(method: &str, dataset: &str, epoch: usize) -> String {
    format!("{method}_{dataset}_{epoch}.ckpt")
}

fn envelope(magic: &[u8; 4], header: &impl Serialize, payload: &[u8]) -> Vec<u8> {
    let json = serde_json::to_vec(header).expect("header serialises");
    let mut out = Vec::with_capacity(12 + json.len() + payload.len());
    out.extend_from_slice(magic);
    out.extend_from_slice(&ARTIFACT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(payload);
    out
}

fn open_envelope<'b, H: DeserializeOwned>(
    magic: &[u8; 4],
    bytes: &'b [u8],
    path: &Path,
) -> Result<(H, &'b [u8])> {
    let bad = |msg: String| Error::Format {
        path: path.to_path_buf(),
        msg,
    };
    if bytes.len() < 12 || &bytes[..4] != magic {
        return Err(bad(format!(
            "not a {} file",
            String::from_utf8_lossy(magic)
        )));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != ARTIFACT_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let json = bytes
        .get(12..12 + len)
        .ok_or_else(|| bad("truncated header".into()))?;
    let header = serde_json::from_slice(json).map_err(|e| bad(format!("bad header: {e}")))?;
    Ok((header, &bytes[12 + len..]))
}

pub fn encode_checkpoint(header: &CheckpointHeader, f: &CorrectionNet, g: Option<&CorrectionNet>) -> Vec<u8> {
    let mut payload = Vec::new();
    for net in std::iter::once(f).chain(g) {
        for p in net.params() {
            payload.extend_from_slice(&(*p as f32).to_le_bytes());
        }
    }
    envelope(CHECKPOINT_MAGIC, header, &payload)
}

pub fn write_checkpoint(
    dir: &Path,
    method: &str,
    dataset: &str,
    epoch: usize,
    f: &CorrectionNet,
    g: Option<&CorrectionNet>,
) -> Result<PathBuf> {
    let mut nets = vec![NetEntry {
        role: NetRole::F,
        arch: f.arch().clone(),
        n_params: f.n_params(),
    }];
    if let Some(g) = g {
        nets.push(NetEntry {
            role: NetRole::G,
            arch: g.arch().clone(),
            n_params: g.n_params(),
        });
    }
    let header = CheckpointHeader {
        method: method.into(),
        dataset: dataset.into(),
        epoch,
        nets,
    };
    let path = dir.join(checkpoint_name(method, dataset, epoch));
    write_bytes(&path, &encode_checkpoint(&header, f, g))?;
    Ok(path)
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    let (header, mut payload): (CheckpointHeader, _) = open_envelope(CHECKPOINT_MAGIC, &bytes, path)?;
    let bad = |msg: String| Error::Format {
        path: path.to_path_buf(),
        msg,
    };
    let mut f = None;
    let mut g = None;
    for entry in &header.nets {
        let take = 4 * entry.n_params;
        if payload.len() < take {
            return Err(bad("truncated parameter block".into()));
        }
        let params = payload[..take]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect();
        payload = &payload[take..];
        let net = CorrectionNet::from_params(entry.arch.clone(), params)?;
        let slot = match entry.role {
            NetRole::F => &mut f,
            NetRole::G => &mut g,
        };
        if slot.replace(net).is_some() {
            return Err(bad(format!("duplicate {:?} net", entry.role)));
        }
    }
    if !payload.is_empty() {
        return Err(bad(format!("{} trailing bytes", payload.len())));
    }
    let f = f.ok_or_else(|| bad("no forward net".into()))?;
    Ok(Checkpoint { header, f, g })
}

/// Latest checkpoint `<method>_<dataset>_<epoch>.ckpt` in `dir`.
pub fn latest_checkpoint(dir: &Path, method: &str, dataset: &str) -> Result<PathBuf> {
    let prefix = format!("{method}_{dataset}_");
    let mut best: Option<(usize, PathBuf)> = None;
    if let Ok(entries) = std::fs::read_dir(dir) {
        for entry in entries.flatten() {
            let name = entry.file_name().to_string_lossy().into_owned();
            let epoch = name
                .strip_prefix(&prefix)
                .and_then(|rest| rest.strip_suffix(".ckpt"))
                .and_then(|e| e.parse::<usize>().ok());
            if let Some(e) = epoch {
                if best.as_ref().map_or(true, |(b, _)| e > *b) {
                    best = Some((e, entry.path()));
                }
            }
        }
    }
    best.map(|(_, p)| p).ok_or_else(|| Error::Missing {
        what: format!("checkpoint for {method} on {dataset}"),
        path: dir.join(format!("{prefix}<epoch>.ckpt")),
        hint: format!("run `opcorr train --method {method}` first"),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct StatsHeader {
    dataset: String,
    rows: usize,
    cols: usize,
    jitter: f64,
    noise_var: f64,
}

pub fn stats_name(dataset: &str) -> String {
    format!("aem_{dataset}.stats")
}

/// `noise_var` is the diagonal noise variance that was merged when `stats` was built.
pub fn write_stats(path: &Path, dataset: &str, stats: &ErrorStats, noise_var: f64) -> Result<()> {
    let header = StatsHeader {
        dataset: dataset.into(),
        rows: stats.eta.rows(),
        cols: stats.eta.cols(),
        jitter: stats.jitter,
        noise_var,
    };
    let mut payload = Vec::with_capacity(8 * (stats.eta.len() + stats.gamma.len()));
    for v in stats.eta.as_slice().iter().chain(&stats.gamma) {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    write_bytes(path, &envelope(STATS_MAGIC, &header, &payload))
}

pub fn read_stats(path: &Path) -> Result<ErrorStats> {
    if !path.exists() {
        return Err(Error::Missing {
            what: "error statistics".into(),
            path: path.to_path_buf(),
            hint: "run `opcorr train --method aem` first".into(),
        });
    }
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    let (h, payload): (StatsHeader, _) = open_envelope(STATS_MAGIC, &bytes, path)?;
    let d = h.rows * h.cols;
    if payload.len() != 8 * (d + d * d) {
        return Err(Error::Format {
            path: path.to_path_buf(),
            msg: "payload size does not match the header".into(),
        });
    }
    let vals: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let eta: Measurement = Grid::from_vec(h.rows, h.cols, vals[..d].to_vec())?;
    Ok(ErrorStats::new(eta, vals[d..].to_vec(), Some(h.jitter), h.noise_var)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRow {
    pub epoch: usize,
    pub forward_loss: f64,
    pub adjoint_loss: f64,
    pub n_iter: usize,
    pub wall_time: f64,
}

impl TrainingRow {
    pub fn new(stats: &EpochStats, wall_time: f64) -> Self {
        Self {
            epoch: stats.epoch,
            forward_loss: stats.forward_loss,
            adjoint_loss: stats.adjoint_loss,
            n_iter: stats.n_iter,
            wall_time,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub data_term: f64,
    pub alignment: Option<f64>,
    pub rel_l2: Option<f64>,
    pub fwd_err: f64,
    pub adj_err: f64,
    /// Both sides of the gradient-alignment bound (absent when the gradient vanishes).
    pub lemma_lhs: Option<f64>,
    pub lemma_rhs: Option<f64>,
}

pub fn trace_rows(trace: &Trace) -> Vec<TraceRow> {
    trace
        .entries
        .iter()
        .map(|e| TraceRow {
            iter: e.iter,
            data_term: e.data_term,
            alignment: e.alignment,
            rel_l2: e.rel_l2,
            fwd_err: e.fwd_err,
            adj_err: e.adj_err,
            lemma_lhs: e.lemma.map(|l| l.lhs),
            lemma_rhs: e.lemma.map(|l| l.rhs),
        })
        .collect()
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let csv_err = |e: csv::Error| Error::Format {
        path: path.to_path_buf(),
        msg: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let csv_err = |e: csv::Error| Error::Format {
        path: path.to_path_buf(),
        msg: e.to_string(),
    };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}

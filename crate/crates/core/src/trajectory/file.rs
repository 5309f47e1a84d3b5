//! Binary trajectory and collector-checkpoint files.
//!
//! Trajectory layout (little-endian):
//!
//! ```text
//! "SWGT" | version: u32 | dim: u64 | count: u64 | count × dim × f64
//! ```
//!
//! A collector checkpoint stores the retained deviation columns as the
//! records (oldest first) and appends a trailer:
//!
//! ```text
//! "CKPT" | snapshots_seen: u64 | rank_cap: u64 | deviation_mode: u32
//!        | running_mean: dim × f64 | running_sq_mean: dim × f64
//! ```
//!
//! Metadata (experiment id, epoch indices) lives in a JSON sidecar next to
//! the binary file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{CollectorState, DeviationMode, ParamSnapshot, SwagCollector};
use crate::error::{Error, Result};
use crate::io::{read_file, write_atomic, ByteReader, ByteWriter};

pub const TRAJECTORY_MAGIC: &[u8; 4] = b"SWGT";
pub const CHECKPOINT_TAG: &[u8; 4] = b"CKPT";
pub const FORMAT_VERSION: u32 = 1;

/// An ordered sequence of equal-length parameter vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    dim: usize,
    snapshots: Vec<ParamSnapshot>,
}

impl Trajectory {
    pub fn new(dim: usize, snapshots: Vec<ParamSnapshot>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("trajectory dimension must be at least 1".into()));
        }
        if let Some(s) = snapshots.iter().find(|s| s.dim() != dim) {
            return Err(Error::DimensionMismatch {
                what: "trajectory record",
                expected: dim,
                found: s.dim(),
            });
        }
        Ok(Self { dim, snapshots })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn snapshots(&self) -> &[ParamSnapshot] {
        &self.snapshots
    }

    pub fn into_snapshots(self) -> Vec<ParamSnapshot> {
        self.snapshots
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        write_header(&mut w, self.dim, self.snapshots.len());
        for s in &self.snapshots {
            w.f64s(s.values());
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new("trajectory", bytes);
        let (dim, records) = read_records(&mut r)?;
        r.finish()?;
        let snapshots = records
            .into_iter()
            .map(ParamSnapshot::new)
            .collect::<Result<_>>()?;
        Ok(Self { dim, snapshots })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_file(path)?)
    }
}

fn write_header(w: &mut ByteWriter, dim: usize, count: usize) {
    w.bytes(TRAJECTORY_MAGIC);
    w.u32(FORMAT_VERSION);
    w.u64(dim as u64);
    w.u64(count as u64);
}

fn read_records(r: &mut ByteReader<'_>) -> Result<(usize, Vec<Vec<f64>>)> {
    r.expect_magic(TRAJECTORY_MAGIC)?;
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(r.error(format!("unsupported version {version}")));
    }
    let dim = r.len("dim")?;
    if dim == 0 {
        return Err(r.error("dim must be at least 1"));
    }
    let count = r.len("count")?;
    let needed = dim.checked_mul(count).and_then(|n| n.checked_mul(8));
    if needed.is_none_or(|n| n > r.remaining()) {
        return Err(r.error(format!(
            "{count} records of dim {dim} exceed the {} remaining bytes",
            r.remaining()
        )));
    }
    let records = (0..count).map(|_| r.f64s(dim)).collect::<Result<_>>()?;
    Ok((dim, records))
}

impl SwagCollector {
    pub fn to_checkpoint_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        write_header(&mut w, self.dim, self.deviations.len());
        for col in &self.deviations {
            w.f64s(col);
        }
        w.bytes(CHECKPOINT_TAG);
        w.u64(self.count as u64);
        w.u64(self.rank_cap as u64);
        w.u32(self.mode.code());
        w.f64s(&self.running_mean);
        w.f64s(&self.running_sq_mean);
        w.finish()
    }

    pub fn from_checkpoint_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new("collector checkpoint", bytes);
        let (dim, deviations) = read_records(&mut r)?;
        r.expect_magic(CHECKPOINT_TAG)?;
        let count = r.len("snapshot count")?;
        let rank_cap = r.len("rank cap")?;
        let code = r.u32()?;
        let mode = DeviationMode::from_code(code)
            .ok_or_else(|| r.error(format!("unknown deviation mode {code}")))?;
        let running_mean = r.f64s(dim)?;
        let running_sq_mean = r.f64s(dim)?;
        r.finish()?;
        SwagCollector::from_state(CollectorState {
            count,
            rank_cap,
            mode,
            running_mean,
            running_sq_mean,
            deviations,
        })
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_checkpoint_bytes())
    }

    pub fn load_checkpoint(path: &Path) -> Result<Self> {
        Self::from_checkpoint_bytes(&read_file(path)?)
    }
}

/// JSON sidecar describing where a trajectory file came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub experiment_id: String,
    /// Epoch index of each record (empty when records are not epochs,
    /// e.g. posterior draws).
    #[serde(default)]
    pub epochs: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

/// `run/base.swgt` -> `run/base.swgt.json`
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".json");
    path.with_file_name(name)
}

pub fn write_sidecar(path: &Path, meta: &TrajectoryMeta) -> Result<()> {
    let mut json = serde_json::to_vec_pretty(meta)?;
    json.push(b'\n');
    write_atomic(&sidecar_path(path), &json)
}

pub fn read_sidecar(path: &Path) -> Result<TrajectoryMeta> {
    Ok(serde_json::from_slice(&read_file(&sidecar_path(path))?)?)
}

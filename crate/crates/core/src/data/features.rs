//! Dense feature files: `"SWGF" | version: u32 | rows: u64 | cols: u64 |
//! rows × cols × f64` (little-endian, row-major), with a JSON id manifest
//! giving the example id of each row.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::SoftLabelExample;
use crate::error::{Error, Result};
use crate::io::{read_file, write_atomic, ByteReader, ByteWriter};
use crate::trajectory::check_finite;

pub const FEATURE_MAGIC: &[u8; 4] = b"SWGF";
pub const FEATURE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows.checked_mul(cols) != Some(data.len()) {
            return Err(Error::DimensionMismatch {
                what: "feature matrix data",
                expected: rows.saturating_mul(cols),
                found: data.len(),
            });
        }
        check_finite(&data)?;
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch {
                what: "feature row",
                expected: cols,
                found: r.len(),
            });
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        w.bytes(FEATURE_MAGIC);
        w.u32(FEATURE_FORMAT_VERSION);
        w.u64(self.rows as u64);
        w.u64(self.cols as u64);
        w.f64s(&self.data);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new("feature", bytes);
        r.expect_magic(FEATURE_MAGIC)?;
        let version = r.u32()?;
        if version != FEATURE_FORMAT_VERSION {
            return Err(r.error(format!("unsupported version {version}")));
        }
        let rows = r.len("rows")?;
        let cols = r.len("cols")?;
        let n = rows
            .checked_mul(cols)
            .filter(|n| n.checked_mul(8).is_some_and(|b| b <= r.remaining()))
            .ok_or_else(|| r.error(format!("{rows}×{cols} exceeds the file size")))?;
        let data = r.f64s(n)?;
        r.finish()?;
        Self::new(rows, cols, data)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_file(path)?)
    }
}

/// Example id of each feature row, in row order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureManifest {
    pub example_ids: Vec<String>,
}

impl FeatureManifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut json = serde_json::to_vec_pretty(self)?;
        json.push(b'\n');
        write_atomic(path, &json)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&read_file(path)?)?)
    }
}

/// `feats.swgf` -> `feats.swgf.ids.json`
pub fn manifest_path(feature_path: &Path) -> PathBuf {
    let mut name = feature_path.file_name().unwrap_or_default().to_os_string();
    name.push(".ids.json");
    feature_path.with_file_name(name)
}

/// Fills each example's features from the matching row. Row `i` must carry
/// the id of example `i`.
pub fn attach_features(
    mut examples: Vec<SoftLabelExample>,
    features: &FeatureMatrix,
    manifest: &FeatureManifest,
) -> Result<Vec<SoftLabelExample>> {
    if features.rows() != examples.len() {
        return Err(Error::Data(format!(
            "feature file has {} rows for {} examples",
            features.rows(),
            examples.len()
        )));
    }
    if manifest.example_ids.len() != features.rows() {
        return Err(Error::Data(format!(
            "id manifest lists {} ids for {} feature rows",
            manifest.example_ids.len(),
            features.rows()
        )));
    }
    if let Some((ex, id)) = examples
        .iter()
        .zip(&manifest.example_ids)
        .find(|(ex, id)| &ex.example_id != *id)
    {
        return Err(Error::Data(format!(
            "id mismatch: manifest has {id:?} where the annotation file has {:?}",
            ex.example_id
        )));
    }
    for (i, ex) in examples.iter_mut().enumerate() {
        ex.features = features.row(i).to_vec();
    }
    Ok(examples)
}

/// [`attach_features`] reading the matrix from `feature_path` and the
/// manifest from [`manifest_path`].
pub fn attach_features_from_file(
    examples: Vec<SoftLabelExample>,
    feature_path: &Path,
) -> Result<Vec<SoftLabelExample>> {
    let features = FeatureMatrix::load(feature_path)?;
    let manifest = FeatureManifest::load(&manifest_path(feature_path))?;
    attach_features(examples, &features, &manifest)
}

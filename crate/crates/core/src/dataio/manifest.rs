use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::format::{encode_binary, read_labels_csv, read_view, write_labels_csv, write_view, ViewFormat};
use super::MultiViewDataset;
use crate::error::{Error, Result};
use crate::target::minmax_scale_columns;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewEntry {
    pub file: String,
    pub dims: usize,
    #[serde(default)]
    pub format: ViewFormat,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub name: String,
    pub n: usize,
    pub views: Vec<ViewEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels_file: Option<String>,
    #[serde(default)]
    pub scale: bool,
    /// File name to SHA-256 hex digest. Files without an entry are not verified.
    #[serde(default)]
    pub checksums: BTreeMap<String, String>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes views, labels and `manifest.json` into `dir` (created if needed).
pub fn save_dataset(dataset: &MultiViewDataset, dir: &Path, format: ViewFormat) -> Result<DatasetManifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let ext = match format {
        ViewFormat::Binary => "bin",
        ViewFormat::Csv => "csv",
    };
    let mut checksums = BTreeMap::new();
    let mut views = Vec::with_capacity(dataset.n_views());
    for (v, m) in dataset.views().iter().enumerate() {
        let file = format!("view{v}.{ext}");
        write_view(m, &dir.join(&file), format)?;
        checksums.insert(file.clone(), sha256_hex(&encode_binary(m)?));
        views.push(ViewEntry {
            file,
            dims: m.cols(),
            format,
        });
    }
    let labels_file = match dataset.labels() {
        Some(labels) => {
            let file = "labels.csv".to_string();
            let path = dir.join(&file);
            write_labels_csv(labels, &path)?;
            let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            checksums.insert(file.clone(), sha256_hex(&bytes));
            Some(file)
        }
        None => None,
    };
    let manifest = DatasetManifest {
        name: dataset.name.clone(),
        n: dataset.n(),
        views,
        labels_file,
        scale: false,
        checksums,
    };
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

fn verify(manifest: &DatasetManifest, file: &str, path: &Path, actual: String) -> Result<()> {
    match manifest.checksums.get(file) {
        Some(expected) if !expected.eq_ignore_ascii_case(&actual) => Err(Error::Checksum {
            file: path.to_path_buf(),
            expected: expected.clone(),
            actual,
        }),
        _ => Ok(()),
    }
}

/// Loads a dataset directory, verifying dimensions and checksums and
/// min-max scaling every view when the manifest asks for it.
pub fn load_dataset(dir: &Path) -> Result<MultiViewDataset> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: DatasetManifest = serde_json::from_str(&text).map_err(|e| Error::Format {
        file: manifest_path.clone(),
        detail: e.to_string(),
    })?;
    if manifest.views.is_empty() {
        return Err(Error::Format {
            file: manifest_path,
            detail: "manifest lists no views".into(),
        });
    }

    let mut views = Vec::with_capacity(manifest.views.len());
    for entry in &manifest.views {
        let path = dir.join(&entry.file);
        let m = read_view(&path, entry.format)?;
        if m.rows() != manifest.n {
            return Err(Error::DimMismatch {
                file: path,
                detail: format!("manifest says n = {}, file has {} rows", manifest.n, m.rows()),
            });
        }
        if m.cols() != entry.dims {
            return Err(Error::DimMismatch {
                file: path,
                detail: format!("manifest says dims = {}, file has {} columns", entry.dims, m.cols()),
            });
        }
        verify(&manifest, &entry.file, &path, sha256_hex(&encode_binary(&m)?))?;
        if !m.is_finite() {
            return Err(Error::Format {
                file: path,
                detail: "non-finite feature values".into(),
            });
        }
        views.push(if manifest.scale { minmax_scale_columns(&m) } else { m });
    }

    let labels = match &manifest.labels_file {
        Some(file) => {
            let path = dir.join(file);
            let labels = read_labels_csv(&path)?;
            if labels.len() != manifest.n {
                return Err(Error::DimMismatch {
                    file: path,
                    detail: format!("manifest says n = {}, file has {} labels", manifest.n, labels.len()),
                });
            }
            let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            verify(&manifest, file, &path, sha256_hex(&bytes))?;
            Some(labels)
        }
        None => None,
    };
    MultiViewDataset::new(manifest.name, views, labels)
}

//! Datasets on disk, the synthetic generator, embedding export and run
//! reports.
//!
//! A dataset directory holds `manifest.json`, one file per view and an
//! optional labels file:
//!
//! ```text
//! {"name": "...", "n": 1000,
//!  "views": [{"file": "view0.bin", "dims": 20, "format": "binary"}, ...],
//!  "labels_file": "labels.csv", "scale": false,
//!  "checksums": {"view0.bin": "<sha256 hex>", "labels.csv": "<sha256 hex>"}}
//! ```
//!
//! Binary view files are `"MVDS"`, `u32` rows, `u32` cols (little endian),
//! then `rows * cols` little-endian `f64` in row-major order. CSV view files
//! carry a header row and one example per line. View checksums are always
//! SHA-256 over the binary encoding of the matrix, whichever format the file
//! uses; the labels checksum is over the raw file bytes.

mod export;
mod format;
mod manifest;
mod report;
mod synthetic;

pub use export::{export_embeddings, write_labels, write_view_labels, ExportedEmbeddings};
pub use format::{
    decode_binary, encode_binary, read_labels_csv, read_matrix_csv, read_view, write_labels_csv, write_matrix_csv,
    write_view, ViewFormat, MAGIC,
};
pub use manifest::{load_dataset, save_dataset, DatasetManifest, ViewEntry, MANIFEST_FILE};
pub use report::{read_report, write_report};
pub use synthetic::{generate_synthetic, SyntheticSpec};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// `N` aligned examples observed through `V` views with features in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiViewDataset {
    pub name: String,
    views: Vec<Matrix>,
    labels: Option<Vec<usize>>,
}

impl MultiViewDataset {
    pub fn new(name: impl Into<String>, views: Vec<Matrix>, labels: Option<Vec<usize>>) -> Result<Self> {
        let Some(first) = views.first() else {
            return Err(Error::invalid("a dataset needs at least one view"));
        };
        let n = first.rows();
        for (v, m) in views.iter().enumerate() {
            if m.rows() != n {
                return Err(Error::shape(format!("view {v} has {} rows, view 0 has {n}", m.rows())));
            }
            if m.cols() == 0 {
                return Err(Error::invalid(format!("view {v} has no features")));
            }
            if m.as_slice().iter().any(|x| !(0.0..=1.0).contains(x)) {
                return Err(Error::invalid(format!(
                    "view {v} has features outside [0, 1]; scale it first"
                )));
            }
        }
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::shape(format!("{} labels for {n} examples", l.len())));
            }
        }
        Ok(MultiViewDataset {
            name: name.into(),
            views,
            labels,
        })
    }

    pub fn n(&self) -> usize {
        self.views[0].rows()
    }

    pub fn n_views(&self) -> usize {
        self.views.len()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.views.iter().map(Matrix::cols).collect()
    }

    pub fn view(&self, v: usize) -> &Matrix {
        &self.views[v]
    }

    pub fn views(&self) -> &[Matrix] {
        &self.views
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    /// Number of ground-truth classes, when labels are present.
    pub fn n_classes(&self) -> Option<usize> {
        self.labels.as_ref().map(|l| l.iter().max().map_or(0, |m| m + 1))
    }

    /// A dataset made of a subset of the views, in the given order.
    pub fn select_views(&self, views: &[usize]) -> Result<Self> {
        if let Some(&bad) = views.iter().find(|&&v| v >= self.n_views()) {
            return Err(Error::invalid(format!("no view {bad}")));
        }
        MultiViewDataset::new(
            self.name.clone(),
            views.iter().map(|&v| self.views[v].clone()).collect(),
            self.labels.clone(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_invariants() {
        let a = Matrix::filled(3, 2, 0.5);
        assert!(MultiViewDataset::new("x", vec![], None).is_err());
        assert!(MultiViewDataset::new("x", vec![a.clone(), Matrix::zeros(2, 2)], None).is_err());
        assert!(MultiViewDataset::new("x", vec![Matrix::filled(3, 2, 1.5)], None).is_err());
        assert!(MultiViewDataset::new("x", vec![a.clone()], Some(vec![0, 1])).is_err());
        let d = MultiViewDataset::new("x", vec![a.clone(), Matrix::zeros(3, 4)], Some(vec![0, 2, 1])).unwrap();
        assert_eq!(d.n(), 3);
        assert_eq!(d.dims(), vec![2, 4]);
        assert_eq!(d.n_classes(), Some(3));
        assert_eq!(d.select_views(&[1]).unwrap().dims(), vec![4]);
    }
}

use std::fs;
use std::path::{Path, PathBuf};

use super::format::{write_labels_csv, write_matrix_csv};
use super::MultiViewDataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::Autoencoder;
use crate::target::scale_and_concat;

/// Files written by [`export_embeddings`].
#[derive(Clone, Debug, PartialEq)]
pub struct ExportedEmbeddings {
    pub view_files: Vec<PathBuf>,
    pub global_file: PathBuf,
}

/// Writes `view{v}.csv` with each view's embeddings (columns `z0..`) and
/// `global.csv` with the min-max scaled concatenation (columns `v{v}_z{j}`).
pub fn export_embeddings(models: &[Autoencoder], dataset: &MultiViewDataset, dir: &Path) -> Result<ExportedEmbeddings> {
    if models.len() != dataset.n_views() {
        return Err(Error::invalid(format!(
            "{} models for {} views",
            models.len(),
            dataset.n_views()
        )));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let embeddings = models
        .iter()
        .zip(dataset.views())
        .map(|(m, x)| m.encode(x))
        .collect::<Result<Vec<Matrix>>>()?;

    let mut view_files = Vec::with_capacity(embeddings.len());
    let mut global_header = Vec::new();
    for (v, z) in embeddings.iter().enumerate() {
        let path = dir.join(format!("view{v}.csv"));
        let header: Vec<String> = (0..z.cols()).map(|j| format!("z{j}")).collect();
        write_matrix_csv(z, &path, &header)?;
        view_files.push(path);
        global_header.extend((0..z.cols()).map(|j| format!("v{v}_z{j}")));
    }
    let global = scale_and_concat(&embeddings)?;
    let global_file = dir.join("global.csv");
    write_matrix_csv(&global.values, &global_file, &global_header)?;
    Ok(ExportedEmbeddings { view_files, global_file })
}

/// Consensus labels, one `label` column.
pub fn write_labels(labels: &[usize], path: &Path) -> Result<()> {
    write_labels_csv(labels, path)
}

/// Per-view labels with columns `view0, view1, ...`.
pub fn write_view_labels(view_labels: &[Vec<usize>], path: &Path) -> Result<()> {
    let n = view_labels.first().map_or(0, Vec::len);
    if view_labels.iter().any(|l| l.len() != n) {
        return Err(Error::shape("per-view label vectors differ in length"));
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record((0..view_labels.len()).map(|v| format!("view{v}")))?;
    for i in 0..n {
        w.write_record(view_labels.iter().map(|l| l[i].to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

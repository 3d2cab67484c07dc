//! Student's-t clustering layer.
//!
//! For embeddings `z_i` and centroids `mu_j` the kernel is
//! `k_ij = 1 / (1 + ||z_i - mu_j||^2)` (one degree of freedom) and the soft
//! assignment `q_ij = k_ij / sum_j' k_ij'`. The clustering loss against a fixed
//! target `P` is `KL(P || Q)` and its gradients are
//!
//! ```text
//! dL/dmu_j = 2 sum_i k_ij (q_ij - p_ij) (z_i - mu_j)
//! dL/dz_i  = 2 sum_j k_ij (p_ij - q_ij) (z_i - mu_j)
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{squared_distance, Matrix};

/// Lower clamp for `q` inside logarithms.
pub const Q_FLOOR: f64 = 1e-12;

/// Row-sum tolerance accepted by [`AssignmentMatrix::new`].
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

/// An `N x K` row-stochastic matrix: soft assignments, pseudo assignments or
/// targets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssignmentMatrix(Matrix);

impl AssignmentMatrix {
    /// Validates entries in `[0, 1]` and rows summing to one.
    pub fn new(values: Matrix) -> Result<Self> {
        for (i, row) in values.row_iter().enumerate() {
            if row.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
                return Err(Error::invalid(format!("assignment row {i} has entries outside [0, 1]")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::invalid(format!("assignment row {i} sums to {s}")));
            }
        }
        Ok(AssignmentMatrix(values))
    }

    pub(crate) fn from_normalized(values: Matrix) -> Self {
        AssignmentMatrix(values)
    }

    pub fn values(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn n_rows(&self) -> usize {
        self.0.rows()
    }

    pub fn n_clusters(&self) -> usize {
        self.0.cols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.0.row(i)
    }

    pub fn select_rows(&self, indices: &[usize]) -> AssignmentMatrix {
        AssignmentMatrix(self.0.select_rows(indices))
    }
}

/// Learnable centroids of one view.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusteringLayer {
    centroids: Matrix,
}

impl ClusteringLayer {
    /// Requires at least two pairwise distinct centroid rows.
    pub fn new(centroids: Matrix) -> Result<Self> {
        if centroids.rows() < 2 {
            return Err(Error::invalid(format!(
                "clustering layer needs K >= 2 centroids, got {}",
                centroids.rows()
            )));
        }
        for a in 0..centroids.rows() {
            for b in a + 1..centroids.rows() {
                if centroids.row(a) == centroids.row(b) {
                    return Err(Error::invalid(format!("centroids {a} and {b} coincide")));
                }
            }
        }
        if !centroids.is_finite() {
            return Err(Error::invalid("centroids must be finite"));
        }
        Ok(ClusteringLayer { centroids })
    }

    pub fn centroids(&self) -> &Matrix {
        &self.centroids
    }

    pub fn centroids_mut(&mut self) -> &mut Matrix {
        &mut self.centroids
    }

    pub fn n_clusters(&self) -> usize {
        self.centroids.rows()
    }

    pub fn dim(&self) -> usize {
        self.centroids.cols()
    }

    pub fn soft_assign(&self, z: &Matrix) -> Result<AssignmentMatrix> {
        soft_assign(z, &self.centroids)
    }
}

/// `k_ij = (1 + ||z_i - c_j||^2)^-1`.
pub fn student_t_kernel(points: &Matrix, centroids: &Matrix) -> Result<Matrix> {
    if points.cols() != centroids.cols() {
        return Err(Error::shape(format!(
            "points have {} dims, centroids {}",
            points.cols(),
            centroids.cols()
        )));
    }
    Ok(Matrix::from_fn(points.rows(), centroids.rows(), |i, j| {
        1.0 / (1.0 + squared_distance(points.row(i), centroids.row(j)))
    }))
}

/// Normalizes each row of a positive kernel matrix.
pub(crate) fn normalize_rows(mut kernel: Matrix) -> AssignmentMatrix {
    for i in 0..kernel.rows() {
        let row = kernel.row_mut(i);
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|x| *x /= s);
    }
    AssignmentMatrix(kernel)
}

/// Student's-t soft assignment of each row of `points` to each centroid.
/// Also used for the pseudo assignments over global features.
pub fn soft_assign(points: &Matrix, centroids: &Matrix) -> Result<AssignmentMatrix> {
    if centroids.rows() == 0 {
        return Err(Error::invalid("no centroids"));
    }
    Ok(normalize_rows(student_t_kernel(points, centroids)?))
}

/// `sum_ij p_ij ln(p_ij / max(q_ij, 1e-12))`; terms with `p_ij = 0` vanish.
pub fn kl_clustering_loss(p: &AssignmentMatrix, q: &AssignmentMatrix) -> Result<f64> {
    p.0.check_same_shape(&q.0, "compare")?;
    let total = p
        .0
        .as_slice()
        .iter()
        .zip(q.0.as_slice())
        .filter(|(&pij, _)| pij > 0.0)
        .map(|(&pij, &qij)| pij * (pij / qij.max(Q_FLOOR)).ln())
        .sum();
    Ok(total)
}

fn check_gradient_inputs(z: &Matrix, centroids: &Matrix, p: &AssignmentMatrix, q: &AssignmentMatrix) -> Result<()> {
    let expect = (z.rows(), centroids.rows());
    if z.cols() != centroids.cols() {
        return Err(Error::shape(format!(
            "embeddings have {} dims, centroids {}",
            z.cols(),
            centroids.cols()
        )));
    }
    if p.0.shape() != expect || q.0.shape() != expect {
        return Err(Error::shape(format!(
            "P is {:?} and Q is {:?}, expected {:?}",
            p.0.shape(),
            q.0.shape(),
            expect
        )));
    }
    Ok(())
}

/// `dL/dmu_j = 2 sum_i k_ij (q_ij - p_ij)(z_i - mu_j)`, shape `K x d`.
pub fn grad_centroids(z: &Matrix, layer: &ClusteringLayer, p: &AssignmentMatrix, q: &AssignmentMatrix) -> Result<Matrix> {
    let mu = &layer.centroids;
    check_gradient_inputs(z, mu, p, q)?;
    let mut grad = Matrix::zeros(mu.rows(), mu.cols());
    for i in 0..z.rows() {
        let zi = z.row(i);
        for j in 0..mu.rows() {
            let mj = mu.row(j);
            let k = 1.0 / (1.0 + squared_distance(zi, mj));
            let coeff = 2.0 * k * (q.0[(i, j)] - p.0[(i, j)]);
            for ((g, a), b) in grad.row_mut(j).iter_mut().zip(zi).zip(mj) {
                *g += coeff * (a - b);
            }
        }
    }
    Ok(grad)
}

/// `dL/dz_i = 2 sum_j k_ij (p_ij - q_ij)(z_i - mu_j)`, shape `n x d`.
pub fn grad_embeddings(z: &Matrix, layer: &ClusteringLayer, p: &AssignmentMatrix, q: &AssignmentMatrix) -> Result<Matrix> {
    let mu = &layer.centroids;
    check_gradient_inputs(z, mu, p, q)?;
    let mut grad = Matrix::zeros(z.rows(), z.cols());
    for i in 0..z.rows() {
        let zi = z.row(i);
        let gi = grad.row_mut(i);
        for j in 0..mu.rows() {
            let mj = mu.row(j);
            let k = 1.0 / (1.0 + squared_distance(zi, mj));
            let coeff = 2.0 * k * (p.0[(i, j)] - q.0[(i, j)]);
            for ((g, a), b) in gi.iter_mut().zip(zi).zip(mj) {
                *g += coeff * (a - b);
            }
        }
    }
    Ok(grad)
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = j;
        }
    }
    best
}

/// Per-row argmax with lowest-index tie-break.
pub fn hard_predict(q: &AssignmentMatrix) -> Vec<usize> {
    q.0.row_iter().map(argmax).collect()
}

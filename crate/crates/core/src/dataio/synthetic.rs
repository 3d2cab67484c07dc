//! Gaussian-blob multi-view data.
//!
//! Each view gets `K` prototypes placed on a scaled orthonormal frame, so
//! every pair of prototypes sits exactly `separation` apart (when the view has
//! at least `K` dimensions). Example `i` of cluster `k` observes
//! `prototype_v[k] + N(0, noise_v^2 I)` in view `v`; each view is then
//! min-max scaled per column to `[0, 1]`. A view with large noise relative to
//! the separation has an unclear cluster structure even though the same
//! examples are cleanly separated in the other views.

use serde::{Deserialize, Serialize};

use super::MultiViewDataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::{derive_seed, Rng};
use crate::target::minmax_scale_columns;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n: usize,
    pub k: usize,
    pub views: usize,
    pub dims: Vec<usize>,
    pub noise_per_view: Vec<f64>,
    pub separation: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    /// Three 20-dimensional views of four clusters; views 0 and 1 are clean,
    /// view 2 is dominated by noise.
    pub fn noisy_view() -> Self {
        SyntheticSpec {
            n: 1000,
            k: 4,
            views: 3,
            dims: vec![20, 20, 20],
            noise_per_view: vec![0.05, 0.05, 0.60],
            separation: 1.0,
            seed: 7,
        }
    }

    /// Noise-free blobs: every view holds exactly `k` distinct rows.
    pub fn noiseless(n: usize, k: usize, dims: Vec<usize>, seed: u64) -> Self {
        SyntheticSpec {
            n,
            k,
            views: dims.len(),
            noise_per_view: vec![0.0; dims.len()],
            dims,
            separation: 1.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 1 || self.n < 2 * self.k {
            return Err(Error::invalid(format!(
                "need n >= 2k with k >= 1, got n = {} and k = {}",
                self.n, self.k
            )));
        }
        if self.views == 0 || self.dims.len() != self.views || self.noise_per_view.len() != self.views {
            return Err(Error::invalid(format!(
                "{} views but {} dims and {} noise levels",
                self.views,
                self.dims.len(),
                self.noise_per_view.len()
            )));
        }
        if self.dims.contains(&0) {
            return Err(Error::invalid("view dims must be positive"));
        }
        if self.noise_per_view.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::invalid("noise levels must be finite and non-negative"));
        }
        if !(self.separation.is_finite() && self.separation > 0.0) {
            return Err(Error::invalid("separation must be positive"));
        }
        Ok(())
    }
}

/// `k` distinct vectors of length `dim`: Gram–Schmidt over Gaussian draws,
/// orthonormal for the first `min(k, dim)`. Vector `j >= dim` is a random
/// direction of length `1 + j / dim`, so surplus prototypes sit on separate
/// shells.
fn frame(k: usize, dim: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(k);
    while out.len() < k {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
        if out.len() < dim {
            for u in &out {
                let dot: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(u).for_each(|(a, b)| *a -= dot * b);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-8 {
            continue;
        }
        let radius = 1.0 + (out.len() / dim) as f64;
        v.iter_mut().for_each(|x| *x *= radius / norm);
        out.push(v);
    }
    out
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<MultiViewDataset> {
    spec.validate()?;
    let mut label_rng = Rng::new(derive_seed(spec.seed, &[0]));
    let mut labels: Vec<usize> = (0..spec.n).map(|i| i % spec.k).collect();
    label_rng.shuffle(&mut labels);

    let scale = spec.separation / std::f64::consts::SQRT_2;
    let mut views = Vec::with_capacity(spec.views);
    for (v, (&dim, &noise)) in spec.dims.iter().zip(&spec.noise_per_view).enumerate() {
        let mut rng = Rng::new(derive_seed(spec.seed, &[1, v as u64]));
        let prototypes = frame(spec.k, dim, &mut rng);
        let mut raw = Matrix::zeros(spec.n, dim);
        for (i, &y) in labels.iter().enumerate() {
            for (x, p) in raw.row_mut(i).iter_mut().zip(&prototypes[y]) {
                *x = scale * p + noise * rng.normal();
            }
        }
        views.push(minmax_scale_columns(&raw));
    }
    MultiViewDataset::new(format!("synthetic-n{}-k{}-seed{}", spec.n, spec.k, spec.seed), views, Some(labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::squared_distance;

    #[test]
    fn deterministic() {
        let s = SyntheticSpec::noisy_view();
        assert_eq!(generate_synthetic(&s).unwrap(), generate_synthetic(&s).unwrap());
        let mut other = s.clone();
        other.seed = 8;
        assert_ne!(generate_synthetic(&s).unwrap(), generate_synthetic(&other).unwrap());
    }

    #[test]
    fn balanced_labels() {
        let s = SyntheticSpec {
            n: 103,
            ..SyntheticSpec::noisy_view()
        };
        let d = generate_synthetic(&s).unwrap();
        let mut counts = vec![0usize; s.k];
        d.labels().unwrap().iter().for_each(|&l| counts[l] += 1);
        let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
        assert!(hi - lo <= 1, "{counts:?}");
    }

    #[test]
    fn noiseless_views_have_k_distinct_rows() {
        let d = generate_synthetic(&SyntheticSpec::noiseless(40, 4, vec![5, 3], 1)).unwrap();
        let labels = d.labels().unwrap();
        for v in 0..d.n_views() {
            let m = d.view(v);
            for i in 0..d.n() {
                for j in 0..d.n() {
                    let same = m.row(i) == m.row(j);
                    assert_eq!(same, labels[i] == labels[j]);
                }
            }
        }
    }

    #[test]
    fn prototypes_are_equidistant() {
        let mut rng = Rng::new(3);
        let f = frame(4, 20, &mut rng);
        for a in 0..4 {
            for b in 0..4 {
                let d = squared_distance(&f[a], &f[b]);
                let expected = if a == b { 0.0 } else { 2.0 };
                assert!((d - expected).abs() < 1e-12);
            }
        }
        // fewer dims than clusters still yields distinct prototypes
        let f = frame(4, 1, &mut rng);
        let mut r: Vec<f64> = f.iter().map(|v| v[0].abs()).collect();
        r.sort_by(f64::total_cmp);
        assert!(r.iter().zip([1.0, 2.0, 3.0, 4.0]).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn invalid_specs() {
        let base = SyntheticSpec::noisy_view();
        for bad in [
            SyntheticSpec { n: 7, ..base.clone() },
            SyntheticSpec { views: 2, ..base.clone() },
            SyntheticSpec { separation: 0.0, ..base.clone() },
            SyntheticSpec {
                noise_per_view: vec![0.1, -1.0, 0.1],
                ..base.clone()
            },
        ] {
            assert!(generate_synthetic(&bad).is_err());
        }
    }

    #[test]
    fn features_in_unit_range() {
        let d = generate_synthetic(&SyntheticSpec::noisy_view()).unwrap();
        for m in d.views() {
            assert!(m.as_slice().iter().all(|&x| (0.0..=1.0).contains(&x)));
        }
    }
}

//! Unified target construction.
//!
//! View embeddings are min-max scaled per dimension and concatenated into
//! global features, clustered with k-means, turned into Student's-t pseudo
//! assignments `S` against the global centroids, and sharpened into the target
//! `P` with `p_ij ∝ s_ij^2 / f_j`, `f_j = sum_i s_ij`.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::clustering::{normalize_rows, soft_assign, AssignmentMatrix};
use crate::error::{Error, Result};
use crate::matrix::{squared_distance, Matrix};
use crate::parallel::Parallelism;
use crate::rng::{derive_seed, Rng};

pub const DEFAULT_RESTARTS: usize = 10;
pub const MAX_KMEANS_ITERATIONS: usize = 300;

/// Clamp for vanishing column frequencies in [`sharpen`].
pub const FREQUENCY_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct GlobalFeatures {
    pub values: Matrix,
    pub view_offsets: Vec<Range<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlobalCentroids {
    pub centroids: Matrix,
    /// `sum_i min_j ||x_i - c_j||^2` for the returned centroids.
    pub inertia: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansResult {
    pub centroids: GlobalCentroids,
    pub assignments: Vec<usize>,
    pub iterations: usize,
    /// Whether assignments stabilized before the iteration cap.
    pub converged: bool,
}

/// Per-column min-max scaling to `[0, 1]`; constant columns map to 0.
pub fn minmax_scale_columns(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    for j in 0..m.cols() {
        let (lo, hi) = (0..m.rows()).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), i| {
            (lo.min(m[(i, j)]), hi.max(m[(i, j)]))
        });
        let range = hi - lo;
        for i in 0..m.rows() {
            out[(i, j)] = if range > 0.0 {
                ((m[(i, j)] - lo) / range).clamp(0.0, 1.0)
            } else {
                0.0
            };
        }
    }
    out
}

/// Scales each view block to `[0, 1]` per column and concatenates in view order.
pub fn scale_and_concat(embeddings: &[Matrix]) -> Result<GlobalFeatures> {
    let Some(first) = embeddings.first() else {
        return Err(Error::invalid("no view embeddings to concatenate"));
    };
    if let Some(bad) = embeddings.iter().find(|e| e.rows() != first.rows()) {
        return Err(Error::shape(format!(
            "views have {} and {} rows",
            first.rows(),
            bad.rows()
        )));
    }
    let scaled: Vec<Matrix> = embeddings.iter().map(minmax_scale_columns).collect();
    let mut view_offsets = Vec::with_capacity(scaled.len());
    let mut start = 0;
    for s in &scaled {
        view_offsets.push(start..start + s.cols());
        start += s.cols();
    }
    let refs: Vec<&Matrix> = scaled.iter().collect();
    Ok(GlobalFeatures {
        values: Matrix::hcat(&refs)?,
        view_offsets,
    })
}

/// Index and squared distance of the nearest centroid (lowest index on ties).
fn nearest(point: &[f64], centroids: &Matrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.row_iter().enumerate() {
        let d = squared_distance(point, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Sum of squared distances to the nearest centroid.
pub fn inertia(points: &Matrix, centroids: &Matrix) -> f64 {
    points.row_iter().map(|p| nearest(p, centroids).1).sum()
}

fn plus_plus_seeding(points: &Matrix, k: usize, rng: &mut Rng) -> Matrix {
    let n = points.rows();
    let mut chosen = vec![rng.below(n)];
    let mut d2: Vec<f64> = points
        .row_iter()
        .map(|p| squared_distance(p, points.row(chosen[0])))
        .collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.next_f64() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if acc > target && d > 0.0 {
                    pick = Some(i);
                    break;
                }
            }
            // rounding can leave the cumulative sum just short of `target`
            pick.unwrap_or_else(|| d2.iter().rposition(|&d| d > 0.0).expect("total > 0"))
        } else {
            // all points coincide with chosen seeds
            rng.below(n)
        };
        chosen.push(next);
        for (i, p) in points.row_iter().enumerate() {
            d2[i] = d2[i].min(squared_distance(p, points.row(next)));
        }
    }
    points.select_rows(&chosen)
}

fn assign_all(points: &Matrix, centroids: &Matrix, labels: &mut [usize]) -> bool {
    let mut changed = false;
    for (i, p) in points.row_iter().enumerate() {
        let (j, _) = nearest(p, centroids);
        if labels[i] != j {
            labels[i] = j;
            changed = true;
        }
    }
    changed
}

/// Recomputes centroids as assignment means. Empty clusters take the point
/// farthest from its own centroid, which is moved into the empty cluster.
fn update_centroids(points: &Matrix, labels: &mut [usize], centroids: &mut Matrix) {
    let (k, d) = centroids.shape();
    let mut sums = Matrix::zeros(k, d);
    let mut counts = vec![0usize; k];
    for (i, p) in points.row_iter().enumerate() {
        counts[labels[i]] += 1;
        for (s, x) in sums.row_mut(labels[i]).iter_mut().zip(p) {
            *s += x;
        }
    }

    let mut moved = vec![false; points.rows()];
    for j in 0..k {
        if counts[j] > 0 {
            continue;
        }
        let far = points
            .row_iter()
            .enumerate()
            .filter(|(i, _)| !moved[*i] && counts[labels[*i]] > 1)
            .map(|(i, p)| (i, squared_distance(p, centroids.row(labels[i]))))
            .fold(None, |best: Option<(usize, f64)>, (i, dist)| match best {
                Some((_, bd)) if bd >= dist => best,
                _ => Some((i, dist)),
            });
        let Some((i, _)) = far else { continue };
        let old = labels[i];
        counts[old] -= 1;
        for (s, x) in sums.row_mut(old).iter_mut().zip(points.row(i)) {
            *s -= x;
        }
        labels[i] = j;
        moved[i] = true;
        counts[j] = 1;
        sums.row_mut(j).copy_from_slice(points.row(i));
    }

    for (j, &count) in counts.iter().enumerate() {
        if count == 0 {
            continue;
        }
        let inv = 1.0 / count as f64;
        for (c, s) in centroids.row_mut(j).iter_mut().zip(sums.row(j)) {
            *c = s * inv;
        }
    }
}

/// Hartigan single-point transfers: moves a point from cluster `a` to `b`
/// whenever that lowers the inertia, i.e. when
/// `n_b / (n_b + 1) |x - mu_b|^2 < n_a / (n_a - 1) |x - mu_a|^2`.
/// Means are updated incrementally and recomputed exactly at the end.
/// Returns whether any point moved.
fn transfer_pass(points: &Matrix, labels: &mut [usize], centroids: &mut Matrix) -> bool {
    let k = centroids.rows();
    let mut counts = vec![0usize; k];
    labels.iter().for_each(|&l| counts[l] += 1);
    let mut moved = false;
    for (i, x) in points.row_iter().enumerate() {
        let a = labels[i];
        if counts[a] <= 1 {
            continue;
        }
        let na = counts[a] as f64;
        let leave = na / (na - 1.0) * squared_distance(x, centroids.row(a));
        let mut best: Option<(usize, f64)> = None;
        for b in (0..k).filter(|&b| b != a) {
            let nb = counts[b] as f64;
            let join = nb / (nb + 1.0) * squared_distance(x, centroids.row(b));
            if best.is_none_or(|(_, c)| join < c) {
                best = Some((b, join));
            }
        }
        let Some((b, join)) = best else { continue };
        if join >= leave * (1.0 - 1e-12) {
            continue;
        }
        let nb = counts[b] as f64;
        for (m, v) in centroids.row_mut(a).iter_mut().zip(x) {
            *m = (na * *m - v) / (na - 1.0);
        }
        for (m, v) in centroids.row_mut(b).iter_mut().zip(x) {
            *m = (nb * *m + v) / (nb + 1.0);
        }
        counts[a] -= 1;
        counts[b] += 1;
        labels[i] = b;
        moved = true;
    }
    if moved {
        update_centroids(points, labels, centroids);
    }
    moved
}

/// One run from k-means++ seeds: Lloyd iterations to a fixpoint, then
/// Hartigan transfers, repeated until neither changes anything.
fn lloyd(points: &Matrix, k: usize, rng: &mut Rng) -> KMeansResult {
    let mut centroids = plus_plus_seeding(points, k, rng);
    let mut labels = vec![usize::MAX; points.rows()];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < MAX_KMEANS_ITERATIONS {
        iterations += 1;
        if assign_all(points, &centroids, &mut labels) {
            update_centroids(points, &mut labels, &mut centroids);
        } else if !transfer_pass(points, &mut labels, &mut centroids) {
            converged = true;
            break;
        }
    }
    let inertia = inertia(points, &centroids);
    KMeansResult {
        centroids: GlobalCentroids { centroids, inertia },
        assignments: labels,
        iterations,
        converged,
    }
}

/// k-means with k-means++ seeding and `restarts` independent Lloyd runs; the
/// lowest-inertia run wins, ties going to the earlier restart. Restart `r`
/// draws from the stream `derive_seed(seed, [r])`, so the result does not
/// depend on `parallelism`.
pub fn kmeans_with(features: &Matrix, k: usize, seed: u64, restarts: usize, parallelism: Parallelism) -> Result<KMeansResult> {
    let n = features.rows();
    if k == 0 {
        return Err(Error::invalid("k-means needs K >= 1"));
    }
    if n < k {
        return Err(Error::invalid(format!("k-means with K = {k} on only {n} points")));
    }
    if !features.is_finite() {
        return Err(Error::invalid("k-means input contains non-finite values"));
    }
    let restarts = restarts.max(1);
    let runs = parallelism.map((0..restarts as u64).collect(), |r| {
        let mut rng = Rng::new(derive_seed(seed, &[r]));
        lloyd(features, k, &mut rng)
    });
    let best = runs
        .into_iter()
        .reduce(|best, run| if run.centroids.inertia < best.centroids.inertia { run } else { best })
        .expect("at least one restart");
    Ok(best)
}

/// [`kmeans_with`] using the policy from the environment.
pub fn kmeans(features: &Matrix, k: usize, seed: u64, restarts: usize) -> Result<KMeansResult> {
    kmeans_with(features, k, seed, restarts, Parallelism::from_env())
}

/// Student's-t similarity of global features to global centroids, row-normalized.
pub fn pseudo_assign(features: &GlobalFeatures, centroids: &GlobalCentroids) -> Result<AssignmentMatrix> {
    soft_assign(&features.values, &centroids.centroids)
}

/// `f_j = sum_i s_ij`.
pub fn column_frequencies(s: &AssignmentMatrix) -> Vec<f64> {
    let mut f = vec![0.0; s.n_clusters()];
    for row in s.values().row_iter() {
        for (fj, x) in f.iter_mut().zip(row) {
            *fj += x;
        }
    }
    f
}

/// Sharpened target together with the clusters whose frequency had to be
/// clamped.
#[derive(Clone, Debug, PartialEq)]
pub struct Sharpened {
    pub target: AssignmentMatrix,
    pub clamped_clusters: Vec<usize>,
}

/// `p_ij = (s_ij^2 / f_j) / sum_j' (s_ij'^2 / f_j')`.
pub fn sharpen_with_diagnostics(s: &AssignmentMatrix) -> Sharpened {
    let f = column_frequencies(s);
    let clamped_clusters = f
        .iter()
        .enumerate()
        .filter(|(_, &x)| x < FREQUENCY_FLOOR)
        .map(|(j, _)| j)
        .collect();
    let f: Vec<f64> = f.into_iter().map(|x| x.max(FREQUENCY_FLOOR)).collect();
    let weighted = Matrix::from_fn(s.n_rows(), s.n_clusters(), |i, j| {
        let v = s.values()[(i, j)];
        v * v / f[j]
    });
    let mut target = normalize_rows(weighted).into_matrix();
    // rows whose entries are all zero cannot be normalized; keep them uniform
    let k = s.n_clusters();
    for i in 0..target.rows() {
        if target.row(i).iter().any(|x| !x.is_finite()) {
            target.row_mut(i).iter_mut().for_each(|x| *x = 1.0 / k as f64);
        }
    }
    Sharpened {
        target: AssignmentMatrix::from_normalized(target),
        clamped_clusters,
    }
}

pub fn sharpen(s: &AssignmentMatrix) -> AssignmentMatrix {
    sharpen_with_diagnostics(s).target
}

#[cfg(test)]
#[allow(clippy::single_range_in_vec_init)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use proptest::prelude::*;

    fn a(rows: &[&[f64]]) -> AssignmentMatrix {
        AssignmentMatrix::new(Matrix::from_rows(rows).unwrap()).unwrap()
    }

    /// Exhaustive oracle: minimum within-cluster sum of squares over every
    /// labeling of the points into `k` groups.
    fn brute_force_inertia(points: &Matrix, k: usize) -> f64 {
        let n = points.rows();
        let d = points.cols();
        let mut labels = vec![0usize; n];
        let mut best = f64::INFINITY;
        loop {
            let mut cost = 0.0;
            for c in 0..k {
                let members: Vec<usize> = (0..n).filter(|&i| labels[i] == c).collect();
                if members.is_empty() {
                    continue;
                }
                let mean: Vec<f64> = (0..d)
                    .map(|j| members.iter().map(|&i| points[(i, j)]).sum::<f64>() / members.len() as f64)
                    .collect();
                cost += members.iter().map(|&i| squared_distance(points.row(i), &mean)).sum::<f64>();
            }
            best = best.min(cost);
            let mut pos = 0;
            loop {
                if pos == n {
                    return best;
                }
                labels[pos] += 1;
                if labels[pos] < k {
                    break;
                }
                labels[pos] = 0;
                pos += 1;
            }
        }
    }

    #[test]
    fn scale_examples() {
        let v1 = Matrix::from_rows(&[[0.0], [1.0]]).unwrap();
        let v2 = Matrix::from_rows(&[[1.0], [0.0]]).unwrap();
        let g = scale_and_concat(&[v1, v2]).unwrap();
        assert_eq!(g.values, Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap());
        assert_eq!(g.view_offsets, vec![0..1, 1..2]);

        let c = minmax_scale_columns(&Matrix::from_rows(&[[7.0, 2.0], [7.0, 4.0], [7.0, 6.0]]).unwrap());
        assert_eq!(c.column(0), vec![0.0, 0.0, 0.0]);
        assert_eq!(c.column(1), vec![0.0, 0.5, 1.0]);

        assert!(scale_and_concat(&[Matrix::zeros(2, 1), Matrix::zeros(3, 1)]).is_err());
    }

    #[test]
    fn kmeans_k_equals_n() {
        let pts = Matrix::from_rows(&[[0.0, 0.0], [1.0, 5.0], [3.0, -2.0], [9.0, 9.0]]).unwrap();
        let r = kmeans_with(&pts, 4, 1, 10, Parallelism::Sequential).unwrap();
        assert_eq!(r.centroids.inertia, 0.0);
        let mut seen = r.assignments.clone();
        seen.sort_unstable();
        assert_eq!(seen, vec![0, 1, 2, 3]);
    }

    #[test]
    fn kmeans_single_cluster_is_mean() {
        let pts = Matrix::from_rows(&[[0.0, 1.0], [2.0, 3.0], [4.0, -1.0]]).unwrap();
        let r = kmeans_with(&pts, 1, 3, 2, Parallelism::Sequential).unwrap();
        assert_eq!(r.centroids.centroids.row(0), &[2.0, 1.0]);
        // N times the per-point total variance: 8 + 8 = 16
        assert!((r.centroids.inertia - 16.0).abs() < 1e-12);
    }

    #[test]
    fn kmeans_two_far_pairs() {
        let pts = Matrix::from_rows(&[[0.0, 0.0], [0.0, 1.0], [10.0, 10.0], [11.0, 10.0]]).unwrap();
        let r = kmeans_with(&pts, 2, 0, 10, Parallelism::Sequential).unwrap();
        let mut cs: Vec<Vec<f64>> = r.centroids.centroids.row_iter().map(<[f64]>::to_vec).collect();
        cs.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert_eq!(cs, vec![vec![0.0, 0.5], vec![10.5, 10.0]]);
        assert!((r.centroids.inertia - brute_force_inertia(&pts, 2)).abs() < 1e-12);
        assert!((r.centroids.inertia - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kmeans_rejects_too_few_points() {
        assert!(kmeans_with(&Matrix::zeros(2, 2), 3, 0, 1, Parallelism::Sequential).is_err());
    }

    #[test]
    fn kmeans_handles_duplicate_points() {
        let pts = Matrix::from_rows(&[[1.0], [1.0], [1.0], [5.0]]).unwrap();
        let r = kmeans_with(&pts, 3, 0, 3, Parallelism::Sequential).unwrap();
        assert_eq!(r.centroids.inertia, 0.0);
        assert!(r.centroids.centroids.is_finite());
    }

    #[test]
    fn kmeans_is_policy_independent() {
        let mut rng = Rng::new(11);
        let pts = Matrix::from_fn(60, 3, |_, _| rng.normal());
        let a = kmeans_with(&pts, 4, 5, 10, Parallelism::Sequential).unwrap();
        let b = kmeans_with(&pts, 4, 5, 10, Parallelism::Auto).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn kmeans_matches_exhaustive_optimum() {
        let mut hits = 0;
        for seed in 0..200u64 {
            let mut rng = Rng::new(1000 + seed);
            let n = 3 + rng.below(6);
            let k = 2 + rng.below(2);
            let pts = Matrix::from_fn(n, 2, |_, _| rng.uniform(-1.0, 1.0));
            let r = kmeans_with(&pts, k, seed, DEFAULT_RESTARTS, Parallelism::Sequential).unwrap();
            let opt = brute_force_inertia(&pts, k);
            assert!(r.centroids.inertia >= opt - 1e-12, "seed {seed}: below the optimum");
            if (r.centroids.inertia - opt).abs() <= 1e-9 * opt.max(1e-12) {
                hits += 1;
            }
        }
        assert_eq!(hits, 200);
    }

    #[test]
    fn pseudo_assign_examples() {
        let f = GlobalFeatures {
            values: Matrix::from_rows(&[[0.0]]).unwrap(),
            view_offsets: vec![0..1],
        };
        let c = GlobalCentroids {
            centroids: Matrix::from_rows(&[[0.0], [1.0]]).unwrap(),
            inertia: 0.0,
        };
        let s = pseudo_assign(&f, &c).unwrap();
        assert!((s.row(0)[0] - 2.0 / 3.0).abs() < 1e-15);

        let f = GlobalFeatures {
            values: Matrix::from_rows(&[[0.0, 0.0], [5.0, 5.0]]).unwrap(),
            view_offsets: vec![0..2],
        };
        let c = GlobalCentroids {
            centroids: Matrix::from_rows(&[[5.0, 5.0], [-5.0, 5.0], [5.0, -5.0], [-5.0, -5.0]]).unwrap(),
            inertia: 0.0,
        };
        let s = pseudo_assign(&f, &c).unwrap();
        assert!(s.row(0).iter().all(|&x| (x - 0.25).abs() < 1e-15));
        assert!(s.row(1)[0] > 0.9);
        assert_eq!(crate::clustering::argmax(s.row(1)), 0);
    }

    #[test]
    fn sharpen_hand_values() {
        let p = sharpen(&a(&[&[0.8, 0.2], &[0.4, 0.6]]));
        let expected = [[0.914_285_714_285_714_3, 0.085_714_285_714_285_7], [0.228_571_428_571_428_6, 0.771_428_571_428_571_4]];
        for (i, row) in expected.iter().enumerate() {
            for (j, &e) in row.iter().enumerate() {
                assert!((p.row(i)[j] - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sharpen_fixed_points() {
        let u = a(&[&[0.25; 4], &[0.25; 4]]);
        assert_eq!(sharpen(&u).values().max_abs_diff(u.values()), 0.0);
        let hard = a(&[&[1.0, 0.0], &[0.0, 1.0]]);
        assert_eq!(sharpen(&hard), hard);
    }

    #[test]
    fn sharpen_flags_empty_clusters() {
        let s = a(&[&[1.0, 0.0], &[1.0, 0.0]]);
        let out = sharpen_with_diagnostics(&s);
        assert_eq!(out.clamped_clusters, vec![1]);
        assert_eq!(out.target, s);
    }

    proptest! {
        #[test]
        fn sharpen_keeps_rows_stochastic(seed in any::<u64>(), n in 1usize..20, k in 2usize..6) {
            let mut rng = Rng::new(seed);
            let s = normalize_rows(Matrix::from_fn(n, k, |_, _| rng.uniform(1e-6, 1.0)));
            let p = sharpen(&s);
            for row in p.values().row_iter() {
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn sharpen_enhances_under_balanced_frequencies(seed in any::<u64>(), k in 2usize..6) {
            // Cyclic shifts of one row give every column the same frequency.
            let mut rng = Rng::new(seed);
            let base: Vec<f64> = (0..k).map(|_| rng.uniform(1e-3, 1.0)).collect();
            let total: f64 = base.iter().sum();
            let rows: Vec<Vec<f64>> = (0..k)
                .map(|r| (0..k).map(|j| base[(j + r) % k] / total).collect())
                .collect();
            let s = AssignmentMatrix::new(Matrix::from_rows(&rows).unwrap()).unwrap();
            let p = sharpen(&s);
            for i in 0..k {
                let smax = s.row(i).iter().cloned().fold(0.0, f64::max);
                let pmax = p.row(i).iter().cloned().fold(0.0, f64::max);
                prop_assert!(pmax >= smax - 1e-12);
                prop_assert_eq!(crate::clustering::argmax(p.row(i)), crate::clustering::argmax(s.row(i)));
            }
        }

        #[test]
        fn scaled_features_in_unit_range(seed in any::<u64>()) {
            let mut rng = Rng::new(seed);
            let v1 = Matrix::from_fn(10, 3, |_, _| rng.uniform(-50.0, 50.0));
            let v2 = Matrix::from_fn(10, 2, |_, _| rng.normal() * 1e-3);
            let g = scale_and_concat(&[v1, v2]).unwrap();
            prop_assert_eq!(g.values.cols(), 5);
            prop_assert!(g.values.as_slice().iter().all(|&x| (0.0..=1.0).contains(&x)));
        }

        #[test]
        fn kmeans_fixpoint(seed in any::<u64>(), n in 4usize..40, k in 1usize..4) {
            let mut rng = Rng::new(seed);
            let pts = Matrix::from_fn(n, 2, |_, _| rng.uniform(-1.0, 1.0));
            let r = kmeans_with(&pts, k, seed, 3, Parallelism::Sequential).unwrap();
            prop_assert!(r.converged);
            for (i, p) in pts.row_iter().enumerate() {
                let d_own = squared_distance(p, r.centroids.centroids.row(r.assignments[i]));
                let (_, d_best) = nearest(p, &r.centroids.centroids);
                prop_assert!(d_own <= d_best + 1e-12);
            }
            for j in 0..k {
                let members: Vec<usize> = (0..n).filter(|&i| r.assignments[i] == j).collect();
                prop_assert!(!members.is_empty());
                for c in 0..2 {
                    let mean = members.iter().map(|&i| pts[(i, c)]).sum::<f64>() / members.len() as f64;
                    prop_assert!((mean - r.centroids.centroids[(j, c)]).abs() < 1e-12);
                }
            }
            let direct = inertia(&pts, &r.centroids.centroids);
            prop_assert!((direct - r.centroids.inertia).abs() <= 1e-9 * direct.max(1e-12));
        }
    }
}

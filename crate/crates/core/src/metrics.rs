//! External clustering quality: accuracy under the best cluster-to-class
//! matching, normalized mutual information and the adjusted Rand index.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusteringScores {
    pub acc: f64,
    pub nmi: f64,
    pub ari: f64,
}

impl ClusteringScores {
    pub fn compute(pred: &[usize], truth: &[usize]) -> Result<Self> {
        let table = ContingencyTable::new(pred, truth)?;
        Ok(ClusteringScores {
            acc: table.accuracy(),
            nmi: table.nmi(),
            ari: table.ari(),
        })
    }
}

/// `counts[p][t]` is the number of examples predicted `p` with class `t`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContingencyTable {
    counts: Vec<Vec<u64>>,
    n: u64,
}

impl ContingencyTable {
    pub fn new(pred: &[usize], truth: &[usize]) -> Result<Self> {
        if pred.len() != truth.len() {
            return Err(Error::shape(format!(
                "{} predictions for {} labels",
                pred.len(),
                truth.len()
            )));
        }
        let kp = pred.iter().max().map_or(0, |m| m + 1);
        let kt = truth.iter().max().map_or(0, |m| m + 1);
        let mut counts = vec![vec![0u64; kt]; kp];
        for (&p, &t) in pred.iter().zip(truth) {
            counts[p][t] += 1;
        }
        Ok(ContingencyTable {
            counts,
            n: pred.len() as u64,
        })
    }

    pub fn total(&self) -> u64 {
        self.n
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    fn col_sums(&self) -> Vec<u64> {
        let kt = self.counts.first().map_or(0, Vec::len);
        (0..kt).map(|t| self.counts.iter().map(|r| r[t]).sum()).collect()
    }

    /// Fraction of examples matched under the optimal one-to-one mapping of
    /// predicted clusters to classes.
    pub fn accuracy(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        let kp = self.counts.len();
        let kt = self.counts.first().map_or(0, Vec::len);
        let size = kp.max(kt);
        let max = self.counts.iter().flatten().copied().max().unwrap_or(0) as i64;
        let cost: Vec<Vec<i64>> = (0..size)
            .map(|p| {
                (0..size)
                    .map(|t| {
                        let c = if p < kp && t < kt { self.counts[p][t] as i64 } else { 0 };
                        max - c
                    })
                    .collect()
            })
            .collect();
        let matching = hungarian(&cost);
        let matched: u64 = matching
            .iter()
            .enumerate()
            .filter(|&(p, &t)| p < kp && t < kt)
            .map(|(p, &t)| self.counts[p][t])
            .sum();
        matched as f64 / self.n as f64
    }

    /// `I(pred; truth) / sqrt(H(pred) H(truth))`, natural logs.
    pub fn nmi(&self) -> f64 {
        let n = self.n as f64;
        let entropy = |sums: &[u64]| -> f64 {
            sums.iter()
                .filter(|&&c| c > 0)
                .map(|&c| {
                    let p = c as f64 / n;
                    -p * p.ln()
                })
                .sum()
        };
        let rows = self.row_sums();
        let cols = self.col_sums();
        let (hp, ht) = (entropy(&rows), entropy(&cols));
        if hp == 0.0 && ht == 0.0 {
            return 1.0;
        }
        if hp == 0.0 || ht == 0.0 {
            return 0.0;
        }
        let mut mi = 0.0;
        for (p, row) in self.counts.iter().enumerate() {
            for (t, &c) in row.iter().enumerate() {
                if c == 0 {
                    continue;
                }
                let c = c as f64;
                mi += c / n * (c * n / (rows[p] as f64 * cols[t] as f64)).ln();
            }
        }
        (mi / (hp * ht).sqrt()).clamp(0.0, 1.0)
    }

    /// Pair-counting Rand index corrected for chance.
    pub fn ari(&self) -> f64 {
        let choose2 = |x: u64| (x * x.saturating_sub(1) / 2) as f64;
        let index: f64 = self.counts.iter().flatten().map(|&c| choose2(c)).sum();
        let a: f64 = self.row_sums().into_iter().map(choose2).sum();
        let b: f64 = self.col_sums().into_iter().map(choose2).sum();
        let total = choose2(self.n);
        if total == 0.0 {
            return 1.0;
        }
        let expected = a * b / total;
        let max_index = 0.5 * (a + b);
        if max_index == expected {
            // both partitions trivial (all in one cluster or all singletons)
            return if index == expected { 1.0 } else { 0.0 };
        }
        (index - expected) / (max_index - expected)
    }
}

pub fn acc(pred: &[usize], truth: &[usize]) -> Result<f64> {
    Ok(ContingencyTable::new(pred, truth)?.accuracy())
}

pub fn nmi(pred: &[usize], truth: &[usize]) -> Result<f64> {
    Ok(ContingencyTable::new(pred, truth)?.nmi())
}

pub fn ari(pred: &[usize], truth: &[usize]) -> Result<f64> {
    Ok(ContingencyTable::new(pred, truth)?.ari())
}

/// Minimum-cost perfect matching on a square cost matrix (Kuhn–Munkres with
/// row/column potentials, O(n^3)). Returns the column assigned to each row.
pub fn hungarian(cost: &[Vec<i64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    const INF: i64 = i64::MAX / 4;
    // 1-based potentials; column 0 is a virtual start node
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![INF; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = INF;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        if row_of[j] > 0 {
            assignment[row_of[j] - 1] = j - 1;
        }
    }
    assignment
}

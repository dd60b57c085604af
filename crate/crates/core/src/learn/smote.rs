//! Synthetic minority oversampling.

use rand::Rng as _;

use super::Matrix;
use crate::error::{Error, Result};
use crate::par::Rng;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct SmoteConfig {
    pub k_neighbors: usize,
    /// Target minority:majority ratio after oversampling.
    pub ratio: f64,
}

impl Default for SmoteConfig {
    fn default() -> Self {
        SmoteConfig {
            k_neighbors: 5,
            ratio: 1.0,
        }
    }
}

impl SmoteConfig {
    /// Synthetic rows needed to bring `minority` up to `ratio * majority`.
    pub fn amount(&self, minority: usize, majority: usize) -> usize {
        let target = (self.ratio * majority as f64).round() as usize;
        target.saturating_sub(minority)
    }
}

#[derive(Debug, Clone)]
pub struct SmoteOutput {
    pub rows: Matrix,
    /// `(sample, neighbor)` minority row indices behind each synthetic row.
    pub parents: Vec<(usize, usize)>,
}

/// Generates `amount` rows `x + u (x_nn - x)`, with `x` a random minority
/// row, `x_nn` one of its `k` nearest minority neighbors (Euclidean) and
/// `u ~ U[0, 1]`. Callers standardize features first.
pub fn smote(minority: &Matrix, k: usize, amount: usize, rng: &mut Rng) -> Result<SmoteOutput> {
    let mut out = SmoteOutput {
        rows: Matrix::new(minority.cols),
        parents: Vec::with_capacity(amount),
    };
    if amount == 0 {
        return Ok(out);
    }
    if k == 0 {
        return Err(Error::Parameter("SMOTE needs k_neighbors >= 1".into()));
    }
    let n = minority.rows;
    if n <= k {
        return Err(Error::Parameter(format!(
            "SMOTE has {n} minority rows but k_neighbors = {k}; lower k below {n} or supply more minority samples"
        )));
    }

    let neighbors = nearest_neighbors(minority, k);
    let mut row = vec![0.0; minority.cols];
    for _ in 0..amount {
        let i = rng.random_range(0..n);
        let j = neighbors[i * k + rng.random_range(0..k)];
        let u: f64 = rng.random();
        let (a, b) = (minority.row(i), minority.row(j));
        for (r, (x, y)) in row.iter_mut().zip(a.iter().zip(b)) {
            *r = x + u * (y - x);
        }
        out.rows.push(&row);
        out.parents.push((i, j));
    }
    Ok(out)
}

/// Flattened `n x k` table of nearest neighbors (excluding self), ties
/// broken by index.
fn nearest_neighbors(x: &Matrix, k: usize) -> Vec<usize> {
    let n = x.rows;
    let mut out = Vec::with_capacity(n * k);
    let mut dist: Vec<(f64, usize)> = Vec::with_capacity(n);
    for i in 0..n {
        dist.clear();
        let a = x.row(i);
        for j in (0..n).filter(|&j| j != i) {
            let d: f64 = a.iter().zip(x.row(j)).map(|(p, q)| (p - q) * (p - q)).sum();
            dist.push((d, j));
        }
        dist.select_nth_unstable_by(k - 1, |p, q| p.0.total_cmp(&q.0).then(p.1.cmp(&q.1)));
        let mut top: Vec<(f64, usize)> = dist[..k].to_vec();
        top.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.cmp(&q.1)));
        out.extend(top.iter().map(|t| t.1));
    }
    out
}

//! Imbalanced viral-cascade classification.
//!
//! Labels are always rederived from final size: a cascade is viral iff
//! `final_size >= threshold`, so one feature matrix serves every threshold.

pub mod cv;
pub mod forest;
pub mod smote;
pub mod stability;

pub use cv::{
    cross_validate, sweep_thresholds, train_full, CvConfig, FoldMetrics, MeanSd, MetricsReport,
    SweepRow, TrainedModel,
};
pub use forest::{predict, train_forest, ForestModel, ForestParams};
pub use smote::{smote, SmoteConfig, SmoteOutput};
pub use stability::{stability_weights, StabilityConfig, WeightReport};

use crate::features::FeatureMatrix;

pub fn label(final_size: usize, threshold: usize) -> bool {
    final_size >= threshold
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Matrix {
    pub data: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
}

impl Matrix {
    pub fn new(cols: usize) -> Self {
        Matrix {
            data: Vec::new(),
            rows: 0,
            cols,
        }
    }

    pub fn from_rows<R: AsRef<[f64]>>(cols: usize, rows: &[R]) -> Self {
        let mut m = Matrix::new(cols);
        for r in rows {
            m.push(r.as_ref());
        }
        m
    }

    pub fn push(&mut self, row: &[f64]) {
        assert_eq!(row.len(), self.cols, "row arity");
        self.data.extend_from_slice(row);
        self.rows += 1;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn select(&self, idx: &[usize]) -> Matrix {
        let mut m = Matrix::new(self.cols);
        m.data.reserve(idx.len() * self.cols);
        for &i in idx {
            m.push(self.row(i));
        }
        m
    }

    pub fn append(&mut self, other: &Matrix) {
        assert_eq!(self.cols, other.cols);
        self.data.extend_from_slice(&other.data);
        self.rows += other.rows;
    }
}

/// Numeric view of a feature matrix.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub names: Vec<String>,
    pub mids: Vec<String>,
    pub final_sizes: Vec<usize>,
    pub x: Matrix,
}

impl LabeledDataset {
    pub fn from_features(fm: &FeatureMatrix) -> Self {
        let mut x = Matrix::new(fm.arity());
        for r in &fm.rows {
            x.push(&r.values);
        }
        LabeledDataset {
            names: fm.names.clone(),
            mids: fm.rows.iter().map(|r| r.mid.clone()).collect(),
            final_sizes: fm.rows.iter().map(|r| r.final_size).collect(),
            x,
        }
    }

    pub fn len(&self) -> usize {
        self.x.rows
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows == 0
    }

    pub fn labels(&self, threshold: usize) -> Vec<bool> {
        self.final_sizes.iter().map(|&n| label(n, threshold)).collect()
    }
}

/// Per-column z-scoring; constant columns get unit scale.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &Matrix) -> Self {
        let (n, d) = (x.rows, x.cols);
        let mut mean = vec![0.0; d];
        for i in 0..n {
            for (m, v) in mean.iter_mut().zip(x.row(i)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n.max(1) as f64);
        let mut var = vec![0.0; d];
        for i in 0..n {
            for j in 0..d {
                var[j] += (x.get(i, j) - mean[j]).powi(2);
            }
        }
        let sd = var
            .iter()
            .map(|v| {
                let s = (v / n.max(1) as f64).sqrt();
                if s > 1e-12 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { mean, sd }
    }

    pub fn apply(&self, x: &Matrix) -> Matrix {
        let mut out = x.clone();
        for i in 0..out.rows {
            for j in 0..out.cols {
                let v = &mut out.data[i * out.cols + j];
                *v = (*v - self.mean[j]) / self.sd[j];
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standardizer_zero_mean_unit_sd() {
        let x = Matrix::from_rows(2, &[[1.0, 5.0], [3.0, 5.0], [5.0, 5.0]]);
        let s = Standardizer::fit(&x);
        let z = s.apply(&x);
        let col0: Vec<f64> = (0..3).map(|i| z.get(i, 0)).collect();
        assert!((col0.iter().sum::<f64>()).abs() < 1e-12);
        assert!((col0.iter().map(|v| v * v).sum::<f64>() / 3.0 - 1.0).abs() < 1e-12);
        assert!((0..3).all(|i| z.get(i, 1) == 0.0));
    }

    #[test]
    fn labels_follow_threshold() {
        assert!(label(500, 500));
        assert!(!label(499, 500));
    }
}

//! Stability selection with randomized L1 logistic regression.
//!
//! Each run fits an L1-penalised logistic model on a random half of the rows
//! with every standardized feature multiplied by an independent random
//! scale. A feature's weight is the fraction of converged runs in which its
//! coefficient is non-zero.

use rand::seq::index::sample;
use rand::Rng as _;
use serde::Serialize;

use super::{LabeledDataset, Matrix, Standardizer};
use crate::error::{Error, Result};
use crate::par;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityConfig {
    pub runs: usize,
    /// Fraction of rows drawn (without replacement) per run.
    pub subsample: f64,
    /// Feature scales are drawn from `U[scale_low, 1]`.
    pub scale_low: f64,
    /// Penalty on the mean log-loss.
    pub l1_strength: f64,
    /// Weight above which a feature is reported as selected.
    pub threshold: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        StabilityConfig {
            runs: 100,
            subsample: 0.5,
            scale_low: 0.5,
            l1_strength: 0.01,
            threshold: 0.01,
            max_iter: 10_000,
            tol: 1e-7,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureWeight {
    pub feature: String,
    pub weight: f64,
    pub selected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightReport {
    pub weights: Vec<FeatureWeight>,
    pub runs: usize,
    pub discarded: usize,
}

impl WeightReport {
    pub fn weight(&self, name: &str) -> Option<f64> {
        self.weights.iter().find(|w| w.feature == name).map(|w| w.weight)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("feature,weight,selected\n");
        for w in &self.weights {
            s.push_str(&format!("{},{},{}\n", w.feature, w.weight, u8::from(w.selected)));
        }
        s
    }
}

/// L1-regularised logistic regression fitted by accelerated proximal
/// gradient. Returns `(coefficients, intercept)` or `None` if it did not
/// converge. The intercept is not penalised.
pub fn fit_l1_logistic(
    x: &Matrix,
    y: &[bool],
    l1: f64,
    max_iter: usize,
    tol: f64,
) -> Option<(Vec<f64>, f64)> {
    let (n, d) = (x.rows, x.cols);
    let nf = n as f64;
    let lipschitz = 0.25 * (spectral_norm_sq(x) / nf).max(1e-12);
    let step = 1.0 / lipschitz;

    let mut w = vec![0.0; d + 1]; // last entry is the intercept
    let mut prev = w.clone();
    let mut z = w.clone();
    let mut t = 1.0f64;
    let mut grad = vec![0.0; d + 1];
    for _ in 0..max_iter {
        grad.iter_mut().for_each(|g| *g = 0.0);
        for i in 0..n {
            let row = x.row(i);
            let margin = row.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>() + z[d];
            let p = 1.0 / (1.0 + (-margin).exp());
            let r = (p - f64::from(u8::from(y[i]))) / nf;
            for (g, a) in grad.iter_mut().zip(row) {
                *g += r * a;
            }
            grad[d] += r;
        }
        prev.copy_from_slice(&w);
        for j in 0..d {
            let v = z[j] - step * grad[j];
            let thr = step * l1;
            w[j] = v.signum() * (v.abs() - thr).max(0.0);
        }
        w[d] = z[d] - step * grad[d];

        let delta = w.iter().zip(&prev).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if !delta.is_finite() {
            return None;
        }
        if delta < tol {
            return Some((w[..d].to_vec(), w[d]));
        }
        // Restart momentum when it points against the last step.
        let against: f64 = z.iter().zip(&w).zip(&prev).map(|((zz, ww), pp)| (zz - ww) * (ww - pp)).sum();
        if against > 0.0 {
            t = 1.0;
            z.copy_from_slice(&w);
            continue;
        }
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        let beta = (t - 1.0) / t_next;
        for j in 0..=d {
            z[j] = w[j] + beta * (w[j] - prev[j]);
        }
        t = t_next;
    }
    None
}

/// Largest squared singular value of `[x, 1]` by power iteration.
fn spectral_norm_sq(x: &Matrix) -> f64 {
    let (n, d) = (x.rows, x.cols);
    let mut v = vec![1.0 / ((d + 1) as f64).sqrt(); d + 1];
    let mut est = 0.0;
    let mut xv = vec![0.0; n];
    for _ in 0..50 {
        for (i, out) in xv.iter_mut().enumerate() {
            *out = x.row(i).iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() + v[d];
        }
        let mut u = vec![0.0; d + 1];
        for (i, &s) in xv.iter().enumerate() {
            for (uj, a) in u.iter_mut().zip(x.row(i)) {
                *uj += s * a;
            }
            u[d] += s;
        }
        let norm = u.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        est = norm;
        v = u.iter().map(|a| a / norm).collect();
    }
    // Power iteration underestimates slightly; pad for a safe step size.
    est * 1.05
}

/// Stability-selection weights of every feature under `threshold` labels.
pub fn stability_weights(
    ds: &LabeledDataset,
    threshold: usize,
    cfg: &StabilityConfig,
) -> Result<WeightReport> {
    let y_all = ds.labels(threshold);
    let pos = y_all.iter().filter(|&&l| l).count();
    if pos == 0 || pos == y_all.len() {
        return Err(Error::Precondition(
            "stability selection needs both classes present".into(),
        ));
    }
    if !(cfg.subsample > 0.0 && cfg.subsample <= 1.0) || !(0.0..=1.0).contains(&cfg.scale_low) {
        return Err(Error::Parameter(
            "subsample must be in (0, 1] and scale_low in [0, 1]".into(),
        ));
    }
    let n = ds.len();
    let take = ((n as f64 * cfg.subsample).round() as usize).clamp(2, n);
    let d = ds.x.cols;

    let fits = par::map_range(cfg.runs, |run| {
        let mut rng = par::rng(cfg.seed, &[run as u64]);
        let mut idx = sample(&mut rng, n, take).into_vec();
        idx.sort_unstable();
        let raw = ds.x.select(&idx);
        let mut x = Standardizer::fit(&raw).apply(&raw);
        let scales: Vec<f64> = (0..d)
            .map(|_| rng.random_range(cfg.scale_low..=1.0))
            .collect();
        for i in 0..x.rows {
            for j in 0..d {
                x.data[i * d + j] *= scales[j];
            }
        }
        let y: Vec<bool> = idx.iter().map(|&i| y_all[i]).collect();
        fit_l1_logistic(&x, &y, cfg.l1_strength, cfg.max_iter, cfg.tol).map(|(w, _)| w)
    });

    let discarded = fits.iter().filter(|f| f.is_none()).count();
    if cfg.runs == 0 || discarded * 5 > cfg.runs {
        return Err(Error::NonConvergence {
            discarded,
            runs: cfg.runs,
        });
    }
    let kept = (cfg.runs - discarded) as f64;
    let mut counts = vec![0usize; d];
    for w in fits.iter().flatten() {
        for (c, &v) in counts.iter_mut().zip(w) {
            if v != 0.0 {
                *c += 1;
            }
        }
    }
    let weights = ds
        .names
        .iter()
        .zip(&counts)
        .map(|(name, &c)| {
            let weight = c as f64 / kept;
            FeatureWeight {
                feature: name.clone(),
                weight,
                selected: weight > cfg.threshold,
            }
        })
        .collect();
    Ok(WeightReport {
        weights,
        runs: cfg.runs,
        discarded,
    })
}

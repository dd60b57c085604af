//! Stratified k-fold cross-validation with minority-class metrics and
//! training-threshold relabelling.
//!
//! Folds are stratified on the test-threshold labels. Inside each training
//! fold the labels are recomputed with the training threshold, features are
//! standardized with training-fold statistics, and SMOTE adds synthetic
//! viral rows to the training fold only. Test folds are never touched.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use serde::Serialize;

use super::{
    label, predict, smote, train_forest, ForestModel, ForestParams, LabeledDataset, Matrix,
    SmoteConfig, Standardizer,
};
use crate::error::{Error, Result};
use crate::par;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvConfig {
    pub folds: usize,
    pub repeats: usize,
    pub forest: ForestParams,
    pub smote: SmoteConfig,
    pub seed: u64,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            folds: 10,
            repeats: 10,
            forest: ForestParams::default(),
            smote: SmoteConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn precision(&self) -> f64 {
        if self.tp + self.fp == 0 {
            0.0
        } else {
            self.tp as f64 / (self.tp + self.fp) as f64
        }
    }

    pub fn recall(&self) -> f64 {
        if self.tp + self.fn_ == 0 {
            0.0
        } else {
            self.tp as f64 / (self.tp + self.fn_) as f64
        }
    }

    pub fn f1(&self) -> f64 {
        f1(self.precision(), self.recall())
    }
}

pub fn f1(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldMetrics {
    pub repeat: usize,
    pub fold: usize,
    pub confusion: Confusion,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Final sizes of test-fold viral cascades predicted viral.
    pub recalled_sizes: Vec<usize>,
    /// Final sizes of test-fold viral cascades predicted non-viral.
    pub missed_sizes: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

impl MeanSd {
    /// Mean and sample standard deviation.
    pub fn of(xs: impl IntoIterator<Item = f64>) -> Self {
        let xs: Vec<f64> = xs.into_iter().collect();
        if xs.is_empty() {
            return MeanSd::default();
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let sd = if xs.len() > 1 {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        MeanSd { mean, sd }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub th_tr: usize,
    pub th_ts: usize,
    pub folds: Vec<FoldMetrics>,
    pub precision: MeanSd,
    pub recall: MeanSd,
    pub f1: MeanSd,
    /// Pooled mean final size of recalled viral cascades.
    pub recalled_avg_size: Option<f64>,
    pub nonrecalled_avg_size: Option<f64>,
}

fn mean_size(sizes: impl Iterator<Item = usize>) -> Option<f64> {
    let (mut s, mut n) = (0usize, 0usize);
    for x in sizes {
        s += x;
        n += 1;
    }
    (n > 0).then(|| s as f64 / n as f64)
}

/// Assigns each row to one of `folds` folds so every fold's positive count
/// is within one of `positives / folds`.
pub fn stratified_folds(labels: &[bool], folds: usize, rng: &mut par::Rng) -> Vec<usize> {
    let mut pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i]).collect();
    let mut neg: Vec<usize> = (0..labels.len()).filter(|&i| !labels[i]).collect();
    pos.shuffle(rng);
    neg.shuffle(rng);
    let mut fold = vec![0; labels.len()];
    // Negatives continue the round-robin where positives stopped so fold
    // sizes also stay balanced.
    for (k, &i) in pos.iter().chain(neg.iter()).enumerate() {
        fold[i] = k % folds;
    }
    fold
}

/// One prepared training fold: rows, labels and the SMOTE provenance.
#[derive(Debug, Clone)]
pub struct TrainingFold {
    pub train_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
    pub standardizer: Standardizer,
    /// Standardized training rows followed by synthetic rows.
    pub x: Matrix,
    pub y: Vec<bool>,
    pub synthetic: usize,
}

/// Builds the training side of one fold: relabel with `th_tr`, standardize,
/// oversample. Exposed so tests can audit what enters training.
pub fn prepare_fold(
    ds: &LabeledDataset,
    fold_of: &[usize],
    fold: usize,
    th_tr: usize,
    smote_cfg: &SmoteConfig,
    rng: &mut par::Rng,
) -> Result<TrainingFold> {
    let (test_idx, train_idx): (Vec<usize>, Vec<usize>) =
        (0..ds.len()).partition(|&i| fold_of[i] == fold);
    let raw = ds.x.select(&train_idx);
    let standardizer = Standardizer::fit(&raw);
    let mut x = standardizer.apply(&raw);
    let mut y: Vec<bool> = train_idx
        .iter()
        .map(|&i| label(ds.final_sizes[i], th_tr))
        .collect();

    let minority_idx: Vec<usize> = (0..y.len()).filter(|&i| y[i]).collect();
    let amount = smote_cfg.amount(minority_idx.len(), y.len() - minority_idx.len());
    let synth = smote(&x.select(&minority_idx), smote_cfg.k_neighbors, amount, rng)?;
    x.append(&synth.rows);
    y.extend(std::iter::repeat_n(true, synth.rows.rows));
    Ok(TrainingFold {
        train_idx,
        test_idx,
        standardizer,
        x,
        y,
        synthetic: synth.rows.rows,
    })
}

/// A forest trained on a whole dataset, with the scaling it expects.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainedModel {
    pub features: Vec<String>,
    pub th_tr: usize,
    pub training_rows: usize,
    pub synthetic_rows: usize,
    pub standardizer: Standardizer,
    pub forest: ForestModel,
}

/// Trains on every row of `ds` with the same relabel, scale and oversample
/// steps a cross-validation fold uses.
pub fn train_full(ds: &LabeledDataset, th_tr: usize, cfg: &CvConfig) -> Result<TrainedModel> {
    let all_train = vec![1; ds.len()];
    let mut rng = par::rng(cfg.seed, &[u64::MAX, 1]);
    let tf = prepare_fold(ds, &all_train, 0, th_tr, &cfg.smote, &mut rng)?;
    let forest = ForestParams {
        seed: par::derive_seed(cfg.seed, &[u64::MAX, 2]),
        ..cfg.forest.clone()
    };
    let model = train_forest(&tf.x, &tf.y, &forest)?;
    Ok(TrainedModel {
        features: ds.names.clone(),
        th_tr,
        training_rows: ds.len(),
        synthetic_rows: tf.synthetic,
        standardizer: tf.standardizer,
        forest: model,
    })
}

/// Stratified `folds`-fold cross-validation repeated `repeats` times.
///
/// Rows are viral for testing iff `final_size >= th_ts`; the training folds
/// use `th_tr` instead.
pub fn cross_validate(
    ds: &LabeledDataset,
    th_tr: usize,
    th_ts: usize,
    cfg: &CvConfig,
) -> Result<MetricsReport> {
    if cfg.folds < 2 || cfg.repeats == 0 {
        return Err(Error::Parameter("need folds >= 2 and repeats >= 1".into()));
    }
    let test_labels = ds.labels(th_ts);
    let positives = test_labels.iter().filter(|&&l| l).count();
    if positives < cfg.folds {
        return Err(Error::TooFewPositives {
            have: positives,
            need: cfg.folds,
        });
    }

    let plans: Vec<Vec<usize>> = (0..cfg.repeats)
        .map(|r| stratified_folds(&test_labels, cfg.folds, &mut par::rng(cfg.seed, &[r as u64, 0])))
        .collect();
    let tasks: Vec<(usize, usize)> = (0..cfg.repeats)
        .flat_map(|r| (0..cfg.folds).map(move |f| (r, f)))
        .collect();

    let results = par::map(&tasks, |&(r, f)| -> Result<FoldMetrics> {
        let mut rng = par::rng(cfg.seed, &[r as u64, f as u64, 1]);
        let tf = prepare_fold(ds, &plans[r], f, th_tr, &cfg.smote, &mut rng)?;
        let forest = ForestParams {
            seed: par::derive_seed(cfg.seed, &[r as u64, f as u64, 2]),
            ..cfg.forest.clone()
        };
        let model = train_forest(&tf.x, &tf.y, &forest)?;
        let test = tf.standardizer.apply(&ds.x.select(&tf.test_idx));
        let pred = predict(&model, &test)?;

        let mut c = Confusion::default();
        let mut recalled_sizes = Vec::new();
        let mut missed_sizes = Vec::new();
        for (k, &i) in tf.test_idx.iter().enumerate() {
            match (test_labels[i], pred.viral[k]) {
                (true, true) => {
                    c.tp += 1;
                    recalled_sizes.push(ds.final_sizes[i]);
                }
                (true, false) => {
                    c.fn_ += 1;
                    missed_sizes.push(ds.final_sizes[i]);
                }
                (false, true) => c.fp += 1,
                (false, false) => c.tn += 1,
            }
        }
        Ok(FoldMetrics {
            repeat: r,
            fold: f,
            precision: c.precision(),
            recall: c.recall(),
            f1: c.f1(),
            confusion: c,
            recalled_sizes,
            missed_sizes,
        })
    });
    let folds = results.into_iter().collect::<Result<Vec<_>>>()?;

    Ok(MetricsReport {
        th_tr,
        th_ts,
        precision: MeanSd::of(folds.iter().map(|f| f.precision)),
        recall: MeanSd::of(folds.iter().map(|f| f.recall)),
        f1: MeanSd::of(folds.iter().map(|f| f.f1)),
        recalled_avg_size: mean_size(folds.iter().flat_map(|f| f.recalled_sizes.iter().copied())),
        nonrecalled_avg_size: mean_size(folds.iter().flat_map(|f| f.missed_sizes.iter().copied())),
        folds,
    })
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub th_tr: usize,
    pub th_ts: usize,
    pub result: std::result::Result<MetricsReport, String>,
}

/// `(th_tr, th_ts)` pairs for both sweep cases: training threshold varied
/// with the test threshold fixed, then both moved together. Duplicates are
/// dropped.
pub fn sweep_combinations(thresholds: &[usize], fixed_ts: usize) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> = thresholds.iter().map(|&t| (t, fixed_ts)).collect();
    for &t in thresholds {
        if !out.contains(&(t, t)) {
            out.push((t, t));
        }
    }
    out
}

/// Runs cross-validation for each combination; failures are recorded per
/// row and do not stop the sweep.
pub fn sweep_thresholds(
    ds: &LabeledDataset,
    combos: &[(usize, usize)],
    cfg: &CvConfig,
) -> Vec<SweepRow> {
    combos
        .iter()
        .map(|&(th_tr, th_ts)| SweepRow {
            th_tr,
            th_ts,
            result: cross_validate(ds, th_tr, th_ts, cfg).map_err(|e| e.to_string()),
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub const METRICS_HEADER: &str =
    "th_tr,th_ts,fold,repeat,precision,recall,f1,tp,fp,fn,recalled_avg_size,nonrecalled_avg_size";

/// Per-fold rows followed by `mean` and `sd` rows (fold column `all`).
pub fn metrics_csv<'a>(reports: impl IntoIterator<Item = &'a MetricsReport>) -> String {
    let mut s = format!("{METRICS_HEADER}\n");
    for r in reports {
        for f in &r.folds {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                r.th_tr,
                r.th_ts,
                f.fold,
                f.repeat,
                f.precision,
                f.recall,
                f.f1,
                f.confusion.tp,
                f.confusion.fp,
                f.confusion.fn_,
                opt(mean_size(f.recalled_sizes.iter().copied())),
                opt(mean_size(f.missed_sizes.iter().copied())),
            );
        }
        let (tp, fp, fn_) = r.folds.iter().fold((0, 0, 0), |a, f| {
            (a.0 + f.confusion.tp, a.1 + f.confusion.fp, a.2 + f.confusion.fn_)
        });
        let _ = writeln!(
            s,
            "{},{},all,mean,{},{},{},{},{},{},{},{}",
            r.th_tr,
            r.th_ts,
            r.precision.mean,
            r.recall.mean,
            r.f1.mean,
            tp,
            fp,
            fn_,
            opt(r.recalled_avg_size),
            opt(r.nonrecalled_avg_size)
        );
        let _ = writeln!(
            s,
            "{},{},all,sd,{},{},{},,,,,",
            r.th_tr, r.th_ts, r.precision.sd, r.recall.sd, r.f1.sd
        );
    }
    s
}

/// One summary row per sweep combination.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from(
        "th_tr,th_ts,precision,precision_sd,recall,recall_sd,f1,f1_sd,recalled_avg_size,nonrecalled_avg_size,error\n",
    );
    for row in rows {
        match &row.result {
            Ok(r) => {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{},{},{},{},",
                    row.th_tr,
                    row.th_ts,
                    r.precision.mean,
                    r.precision.sd,
                    r.recall.mean,
                    r.recall.sd,
                    r.f1.mean,
                    r.f1.sd,
                    opt(r.recalled_avg_size),
                    opt(r.nonrecalled_avg_size)
                );
            }
            Err(e) => {
                let _ = writeln!(
                    s,
                    "{},{},,,,,,,,,\"{}\"",
                    row.th_tr,
                    row.th_ts,
                    e.replace('"', "'")
                );
            }
        }
    }
    s
}

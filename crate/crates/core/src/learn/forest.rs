//! Random forest of CART trees with Gini splits.

use rand::Rng as _;
use serde::Serialize;

use super::Matrix;
use crate::error::{Error, Result};
use crate::par;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForestParams {
    pub n_trees: usize,
    /// `None` grows until leaves are pure or too small to split.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// `None` means `ceil(sqrt(d))`.
    pub features_per_split: Option<usize>,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            max_depth: None,
            min_leaf: 1,
            features_per_split: None,
            seed: 0,
        }
    }
}

const LEAF: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq, Serialize)]
struct Node {
    feature: u32,
    threshold: f64,
    left: u32,
    right: u32,
    /// `[non-viral, viral]` training rows reaching this node.
    counts: [u32; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn leaf_for(&self, row: &[f64]) -> &Node {
        let mut n = &self.nodes[0];
        while n.feature != LEAF {
            n = if row[n.feature as usize] <= n.threshold {
                &self.nodes[n.left as usize]
            } else {
                &self.nodes[n.right as usize]
            };
        }
        n
    }

    /// Leaf majority class; ties go to non-viral.
    pub fn predict(&self, row: &[f64]) -> bool {
        let c = self.leaf_for(row).counts;
        c[1] > c[0]
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            let n = &t.nodes[i];
            if n.feature == LEAF {
                0
            } else {
                1 + go(t, n.left as usize).max(go(t, n.right as usize))
            }
        }
        go(self, 0)
    }

    fn split_features(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().filter(|n| n.feature != LEAF).map(|n| n.feature as usize)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
    pub n_features: usize,
    pub params: ForestParams,
}

impl ForestModel {
    /// Checks that split indices are in range and every leaf saw data.
    pub fn is_well_formed(&self) -> bool {
        self.trees.iter().all(|t| {
            t.split_features().all(|f| f < self.n_features)
                && t.nodes
                    .iter()
                    .filter(|n| n.feature == LEAF)
                    .all(|n| n.counts[0] + n.counts[1] > 0)
        })
    }
}

/// Trains a forest on rows `x` with binary labels `y` (true = viral).
pub fn train_forest(x: &Matrix, y: &[bool], params: &ForestParams) -> Result<ForestModel> {
    if x.rows != y.len() {
        return Err(Error::Parameter(format!(
            "{} rows but {} labels",
            x.rows,
            y.len()
        )));
    }
    let pos = y.iter().filter(|&&l| l).count();
    if pos == 0 || pos == y.len() {
        return Err(Error::Precondition(
            "training set needs at least one row of each class".into(),
        ));
    }
    if params.n_trees == 0 || params.min_leaf == 0 {
        return Err(Error::Parameter("n_trees and min_leaf must be positive".into()));
    }
    let d = x.cols;
    let mtry = params
        .features_per_split
        .unwrap_or_else(|| (d as f64).sqrt().ceil() as usize)
        .clamp(1, d.max(1));
    let trees = par::map_range(params.n_trees, |t| {
        let mut rng = par::rng(params.seed, &[t as u64]);
        let sample: Vec<usize> = (0..x.rows).map(|_| rng.random_range(0..x.rows)).collect();
        grow(x, y, sample, params, mtry, &mut rng)
    });
    Ok(ForestModel {
        trees,
        n_features: d,
        params: params.clone(),
    })
}

struct Split {
    feature: usize,
    threshold: f64,
    score: f64,
}

fn counts(idx: &[usize], y: &[bool]) -> [u32; 2] {
    let p = idx.iter().filter(|&&i| y[i]).count() as u32;
    [idx.len() as u32 - p, p]
}

fn grow(
    x: &Matrix,
    y: &[bool],
    sample: Vec<usize>,
    params: &ForestParams,
    mtry: usize,
    rng: &mut par::Rng,
) -> Tree {
    let mut nodes = vec![Node {
        feature: LEAF,
        threshold: 0.0,
        left: 0,
        right: 0,
        counts: counts(&sample, y),
    }];
    let mut stack: Vec<(usize, Vec<usize>, usize)> = vec![(0, sample, 0)];
    let mut features: Vec<usize> = (0..x.cols).collect();
    let mut buf: Vec<(f64, bool)> = Vec::new();

    while let Some((id, idx, depth)) = stack.pop() {
        let c = nodes[id].counts;
        if c[0] == 0
            || c[1] == 0
            || idx.len() < 2 * params.min_leaf
            || params.max_depth.is_some_and(|m| depth >= m)
        {
            continue;
        }
        let Some(split) = best_split(x, y, &idx, &mut features, mtry, params.min_leaf, rng, &mut buf)
        else {
            continue;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx
            .iter()
            .partition(|&&i| x.get(i, split.feature) <= split.threshold);
        let li = nodes.len();
        for part in [&l, &r] {
            nodes.push(Node {
                feature: LEAF,
                threshold: 0.0,
                left: 0,
                right: 0,
                counts: counts(part, y),
            });
        }
        let n = &mut nodes[id];
        n.feature = split.feature as u32;
        n.threshold = split.threshold;
        n.left = li as u32;
        n.right = li as u32 + 1;
        stack.push((li, l, depth + 1));
        stack.push((li + 1, r, depth + 1));
    }
    Tree { nodes }
}

/// Lowest weighted Gini over a random feature subset. Keeps drawing
/// features past `mtry` until some feature admits a valid split.
#[allow(clippy::too_many_arguments)]
fn best_split(
    x: &Matrix,
    y: &[bool],
    idx: &[usize],
    features: &mut [usize],
    mtry: usize,
    min_leaf: usize,
    rng: &mut par::Rng,
    buf: &mut Vec<(f64, bool)>,
) -> Option<Split> {
    let n = idx.len();
    let total_pos = idx.iter().filter(|&&i| y[i]).count() as f64;
    let mut best: Option<Split> = None;
    for k in 0..features.len() {
        if k >= mtry && best.is_some() {
            break;
        }
        let pick = rng.random_range(k..features.len());
        features.swap(k, pick);
        let f = features[k];

        buf.clear();
        buf.extend(idx.iter().map(|&i| (x.get(i, f), y[i])));
        buf.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
        if buf[0].0 == buf[n - 1].0 {
            continue;
        }
        let mut lp = 0.0;
        for s in 0..n - 1 {
            if buf[s].1 {
                lp += 1.0;
            }
            let nl = (s + 1) as f64;
            if s + 1 < min_leaf || n - s - 1 < min_leaf || buf[s].0 == buf[s + 1].0 {
                continue;
            }
            let nr = n as f64 - nl;
            let rp = total_pos - lp;
            let (ln, rn) = (nl - lp, nr - rp);
            // n_l * gini_l + n_r * gini_r, up to the constant n.
            let score = -(lp * lp + ln * ln) / nl - (rp * rp + rn * rn) / nr;
            if best.as_ref().is_none_or(|b| score < b.score - 1e-12) {
                best = Some(Split {
                    feature: f,
                    threshold: buf[s].0 + (buf[s + 1].0 - buf[s].0) / 2.0,
                    score,
                });
            }
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub viral: Vec<bool>,
    /// Fraction of trees voting viral.
    pub score: Vec<f64>,
}

/// Majority vote over trees; an exact tie is non-viral.
pub fn predict(model: &ForestModel, rows: &Matrix) -> Result<Prediction> {
    if rows.rows > 0 && rows.cols != model.n_features {
        return Err(Error::Parameter(format!(
            "model expects {} features, rows have {}",
            model.n_features, rows.cols
        )));
    }
    let t = model.trees.len();
    let votes: Vec<usize> = (0..rows.rows)
        .map(|i| model.trees.iter().filter(|tr| tr.predict(rows.row(i))).count())
        .collect();
    Ok(Prediction {
        viral: votes.iter().map(|&v| 2 * v > t).collect(),
        score: votes.iter().map(|&v| v as f64 / t as f64).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn xor(seed: u64) -> (Matrix, Vec<bool>) {
        let mut rng = par::rng(seed, &[]);
        let mut x = Matrix::new(2);
        let mut y = Vec::new();
        for c in 0..4 {
            let (cx, cy) = ((c & 1) as f64, (c >> 1) as f64);
            for _ in 0..100 {
                x.push(&[
                    cx + rng.random_range(-0.2..0.2),
                    cy + rng.random_range(-0.2..0.2),
                ]);
                y.push((c & 1) != (c >> 1));
            }
        }
        (x, y)
    }

    #[test]
    fn rejects_single_class() {
        let x = Matrix::from_rows(1, &[[0.0], [1.0]]);
        assert!(train_forest(&x, &[false, false], &ForestParams::default()).is_err());
    }

    #[test]
    fn fits_xor() {
        let (x, y) = xor(3);
        let params = ForestParams {
            n_trees: 25,
            max_depth: Some(4),
            seed: 5,
            ..Default::default()
        };
        let model = train_forest(&x, &y, &params).unwrap();
        assert!(model.is_well_formed());
        let p = predict(&model, &x).unwrap();
        let acc = p.viral.iter().zip(&y).filter(|(a, b)| a == b).count() as f64 / y.len() as f64;
        assert!(acc >= 0.95, "accuracy {acc}");
    }

    #[test]
    fn deterministic_given_seed() {
        let (x, y) = xor(4);
        let params = ForestParams {
            n_trees: 10,
            seed: 42,
            ..Default::default()
        };
        let a = train_forest(&x, &y, &params).unwrap();
        let b = train_forest(&x, &y, &params).unwrap();
        assert_eq!(a, b);
        let (probe, _) = xor(99);
        assert_eq!(predict(&a, &probe).unwrap(), predict(&b, &probe).unwrap());
    }

    #[test]
    fn empty_and_mismatched_rows() {
        let (x, y) = xor(1);
        let model = train_forest(&x, &y, &ForestParams { n_trees: 3, ..Default::default() }).unwrap();
        let p = predict(&model, &Matrix::new(2)).unwrap();
        assert!(p.viral.is_empty());
        assert!(predict(&model, &Matrix::from_rows(3, &[[0.0, 0.0, 0.0]])).is_err());
    }

    #[test]
    fn single_tree_returns_its_leaf_class() {
        let (x, y) = xor(2);
        let model = train_forest(&x, &y, &ForestParams { n_trees: 1, ..Default::default() }).unwrap();
        let p = predict(&model, &x).unwrap();
        for i in 0..x.rows {
            assert_eq!(p.viral[i], model.trees[0].predict(x.row(i)));
        }
    }

    #[test]
    fn tied_vote_is_non_viral() {
        let (x, y) = xor(2);
        let mut model =
            train_forest(&x, &y, &ForestParams { n_trees: 10, ..Default::default() }).unwrap();
        let always = |viral: bool| Tree {
            nodes: vec![Node {
                feature: LEAF,
                threshold: 0.0,
                left: 0,
                right: 0,
                counts: if viral { [0, 1] } else { [1, 0] },
            }],
        };
        model.trees = (0..10).map(|i| always(i < 5)).collect();
        let p = predict(&model, &Matrix::from_rows(2, &[[0.0, 0.0]])).unwrap();
        assert!(!p.viral[0]);
        assert_eq!(p.score[0], 0.5);
    }

    #[test]
    fn prediction_ignores_tree_order() {
        let (x, y) = xor(6);
        let model = train_forest(&x, &y, &ForestParams { n_trees: 15, seed: 2, ..Default::default() }).unwrap();
        let mut rev = model.clone();
        rev.trees.reverse();
        assert_eq!(predict(&model, &x).unwrap(), predict(&rev, &x).unwrap());
    }

    #[test]
    fn depth_limit_respected() {
        let (x, y) = xor(7);
        let model = train_forest(
            &x,
            &y,
            &ForestParams { n_trees: 5, max_depth: Some(2), ..Default::default() },
        )
        .unwrap();
        assert!(model.trees.iter().all(|t| t.depth() <= 2));
    }
}

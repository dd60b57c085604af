//! `key=value` configuration overlays. Blank lines and `#` comments are
//! skipped; later lines win.

use viralcast_core::pipeline::PipelineConfig;
use viralcast_core::{Error, Result};

pub const KEYS: &[&str] = &[
    "seed",
    "graph_window",
    "cascade_window",
    "edge_source",
    "allow_rootless",
    "lambda",
    "lambda_semantics",
    "sizes",
    "threshold",
    "th_tr",
    "th_ts",
    "resolution",
    "max_passes",
    "allow_edgeless",
    "folds",
    "repeats",
    "trees",
    "max_depth",
    "min_leaf",
    "mtry",
    "smote_k",
    "smote_ratio",
    "runs",
    "subsample",
    "l1",
    "selection_threshold",
];

pub fn apply_file(cfg: &mut PipelineConfig, text: &str) -> Result<()> {
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::Parameter(format!("config line {}: expected key=value", i + 1))
        })?;
        apply(cfg, k.trim(), v.trim())
            .map_err(|e| Error::Parameter(format!("config line {}: {e}", i + 1)))?;
    }
    Ok(())
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Parameter(format!("`{key}` cannot take value `{v}`")))
}

fn list(key: &str, v: &str) -> Result<Vec<usize>> {
    v.split(',').map(|x| num(key, x.trim())).collect()
}

pub fn apply(cfg: &mut PipelineConfig, key: &str, v: &str) -> Result<()> {
    match key {
        "seed" => cfg.seed = num(key, v)?,
        "graph_window" => cfg.graph_window = v.parse()?,
        "cascade_window" => cfg.cascade_window = v.parse()?,
        "edge_source" => cfg.edge_source = v.parse()?,
        "allow_rootless" => cfg.allow_rootless = num(key, v)?,
        "lambda" => cfg.lambda = num(key, v)?,
        "lambda_semantics" => cfg.lambda_semantics = v.parse()?,
        "sizes" => cfg.sizes = list(key, v)?,
        "threshold" => cfg.threshold = num(key, v)?,
        "th_tr" => cfg.th_tr = list(key, v)?,
        "th_ts" => cfg.th_ts = num(key, v)?,
        "resolution" => cfg.louvain.resolution = num(key, v)?,
        "max_passes" => cfg.louvain.max_passes = num(key, v)?,
        "allow_edgeless" => cfg.louvain.allow_edgeless = num(key, v)?,
        "folds" => cfg.cv.folds = num(key, v)?,
        "repeats" => cfg.cv.repeats = num(key, v)?,
        "trees" => cfg.cv.forest.n_trees = num(key, v)?,
        "max_depth" => cfg.cv.forest.max_depth = Some(num(key, v)?),
        "min_leaf" => cfg.cv.forest.min_leaf = num(key, v)?,
        "mtry" => cfg.cv.forest.features_per_split = Some(num(key, v)?),
        "smote_k" => cfg.cv.smote.k_neighbors = num(key, v)?,
        "smote_ratio" => cfg.cv.smote.ratio = num(key, v)?,
        "runs" => cfg.stability.runs = num(key, v)?,
        "subsample" => cfg.stability.subsample = num(key, v)?,
        "l1" => cfg.stability.l1_strength = num(key, v)?,
        "selection_threshold" => cfg.stability.threshold = num(key, v)?,
        _ => {
            return Err(Error::Parameter(format!(
                "unknown key `{key}`; known keys: {}",
                KEYS.join(", ")
            )))
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overlay_sets_fields_in_order() {
        let mut cfg = PipelineConfig::default();
        apply_file(
            &mut cfg,
            "# sweep\nth_tr = 100,200\nrepeats=3\n\nrepeats=4\nlambda_semantics=absolute\n",
        )
        .unwrap();
        assert_eq!(cfg.th_tr, vec![100, 200]);
        assert_eq!(cfg.cv.repeats, 4);
        assert_eq!(
            cfg.lambda_semantics,
            viralcast_core::cascade::LambdaSemantics::Absolute
        );
    }

    #[test]
    fn every_listed_key_is_accepted() {
        for key in KEYS {
            let v = match *key {
                "graph_window" | "cascade_window" => "1,2",
                "edge_source" => "root",
                "lambda_semantics" => "recency",
                "allow_rootless" | "allow_edgeless" => "true",
                "sizes" | "th_tr" => "10,20",
                "resolution" | "smote_ratio" | "subsample" | "l1" | "selection_threshold" => "0.5",
                _ => "3",
            };
            apply(&mut PipelineConfig::default(), key, v).unwrap();
        }
    }

    #[test]
    fn bad_lines_rejected() {
        let mut cfg = PipelineConfig::default();
        assert!(apply_file(&mut cfg, "nonsense").is_err());
        assert!(apply_file(&mut cfg, "folds=ten").is_err());
        assert!(apply_file(&mut cfg, "colour=red").is_err());
    }
}

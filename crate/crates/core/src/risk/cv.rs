use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{train_gbdt, Hyperparams};
use crate::data::LabeledDataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridCell {
    pub hyper: Hyperparams,
    pub fold_precision: Vec<f64>,
    pub mean_precision: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSearch {
    pub best: Hyperparams,
    pub decision_threshold: f64,
    pub cells: Vec<GridCell>,
}

/// Fraction of predicted positives (score >= `threshold`) that are positive.
/// Zero when nothing is predicted positive.
pub fn precision_at(scores: &[f64], labels: &[bool], threshold: f64) -> f64 {
    let (mut tp, mut fp) = (0usize, 0usize);
    for (&s, &l) in scores.iter().zip(labels) {
        if s >= threshold {
            if l {
                tp += 1;
            } else {
                fp += 1;
            }
        }
    }
    if tp + fp == 0 {
        0.0
    } else {
        tp as f64 / (tp + fp) as f64
    }
}

/// Splits row indices into `k` folds, dealing shuffled positives and then
/// shuffled negatives round-robin so each fold's class counts differ by at
/// most one.
pub fn stratified_folds(labels: &[bool], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::invalid("cross-validation needs at least 2 folds"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i]).collect();
    let mut neg: Vec<usize> = (0..labels.len()).filter(|&i| !labels[i]).collect();
    if pos.len() < 2 || neg.len() < 2 {
        return Err(Error::invalid(
            "each class needs at least 2 rows so every training split sees both classes",
        ));
    }
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let mut folds = vec![Vec::new(); k];
    for (j, i) in pos.iter().chain(&neg).enumerate() {
        folds[j % k].push(*i);
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

/// Scores every grid cell by mean validation precision at a 0.5 decision
/// threshold over stratified folds. Ties go to fewer trees, then shallower
/// trees, then earlier grid position.
pub fn grid_search_cv(
    dataset: &LabeledDataset,
    grid: &[Hyperparams],
    folds: usize,
    seed: u64,
) -> Result<GridSearch> {
    const THRESHOLD: f64 = 0.5;
    if grid.is_empty() {
        return Err(Error::invalid("hyperparameter grid is empty"));
    }
    for h in grid {
        h.validate()?;
    }
    let parts = stratified_folds(&dataset.labels, folds, seed)?;
    let splits: Vec<(LabeledDataset, LabeledDataset)> = (0..folds)
        .map(|f| {
            let train: Vec<usize> = parts
                .iter()
                .enumerate()
                .filter(|(g, _)| *g != f)
                .flat_map(|(_, p)| p.iter().copied())
                .collect();
            (dataset.subset(&train), dataset.subset(&parts[f]))
        })
        .collect();

    let cells = grid
        .par_iter()
        .map(|hyper| {
            let fold_precision = splits
                .iter()
                .map(|(train, valid)| {
                    let model = train_gbdt(train, hyper)?;
                    let scores = model.predict_batch(&valid.rows)?;
                    Ok(precision_at(&scores, &valid.labels, THRESHOLD))
                })
                .collect::<Result<Vec<f64>>>()?;
            let mean_precision = fold_precision.iter().sum::<f64>() / fold_precision.len() as f64;
            Ok(GridCell {
                hyper: *hyper,
                fold_precision,
                mean_precision,
            })
        })
        .collect::<Result<Vec<GridCell>>>()?;

    let mut best = 0;
    for (i, c) in cells.iter().enumerate().skip(1) {
        let b = &cells[best];
        let better = c.mean_precision > b.mean_precision
            || (c.mean_precision == b.mean_precision
                && (c.hyper.n_estimators, c.hyper.max_depth) < (b.hyper.n_estimators, b.hyper.max_depth));
        if better {
            best = i;
        }
    }
    Ok(GridSearch {
        best: cells[best].hyper,
        decision_threshold: THRESHOLD,
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{FeatureSet, WindowPair};
    use rand::Rng;

    fn toy(n: usize, seed: u64) -> LabeledDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random::<f64>(), rng.random::<f64>()]).collect();
        let labels = rows.iter().map(|r| r[0] + 0.3 * rng.random::<f64>() > 0.9).collect();
        LabeledDataset {
            feature_set: FeatureSet::E,
            windows: WindowPair::training("2021-01".parse().unwrap(), 7, 3).unwrap(),
            columns: vec!["a".into(), "b".into()],
            property_ids: (0..n).map(|i| format!("P{i}")).collect(),
            rows,
            labels,
        }
    }

    #[test]
    fn folds_are_stratified_partitions() {
        let ds = toy(237, 3);
        let k = 5;
        let folds = stratified_folds(&ds.labels, k, 11).unwrap();
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        assert_eq!(all, (0..ds.len()).collect::<Vec<_>>());
        let expected = ds.positives() as f64 / k as f64;
        for f in &folds {
            let p = f.iter().filter(|&&i| ds.labels[i]).count() as f64;
            assert!((p - expected).abs() <= 1.0, "{p} vs {expected}");
        }
    }

    #[test]
    fn rejects_too_few_per_class() {
        assert!(stratified_folds(&[true, false, false, false], 2, 0).is_err());
        assert!(stratified_folds(&[true, true, false, false], 1, 0).is_err());
    }

    #[test]
    fn singleton_grid_returns_its_cell() {
        let ds = toy(120, 1);
        let h = Hyperparams {
            n_estimators: 5,
            ..Hyperparams::default()
        };
        let r = grid_search_cv(&ds, &[h], 3, 0).unwrap();
        assert_eq!(r.best, h);
        assert_eq!(r.cells[0].fold_precision.len(), 3);
    }

    #[test]
    fn ties_prefer_fewer_trees_then_shallower() {
        // a constant feature gives identical predictions for every cell
        let mut ds = toy(100, 2);
        for r in &mut ds.rows {
            r.iter_mut().for_each(|v| *v = 0.0);
        }
        let base = Hyperparams {
            learning_rate: 0.1,
            ..Hyperparams::default()
        };
        let grid = [
            Hyperparams { n_estimators: 20, max_depth: 2, ..base },
            Hyperparams { n_estimators: 10, max_depth: 3, ..base },
            Hyperparams { n_estimators: 10, max_depth: 2, ..base },
        ];
        let r = grid_search_cv(&ds, &grid, 2, 0).unwrap();
        assert!(r.cells.windows(2).all(|w| w[0].mean_precision == w[1].mean_precision));
        assert_eq!(r.best, grid[2]);
    }

    #[test]
    fn precision_counts_predicted_positives() {
        assert_eq!(precision_at(&[0.9, 0.6, 0.2], &[true, false, true], 0.5), 0.5);
        assert_eq!(precision_at(&[0.1], &[true], 0.5), 0.0);
    }
}

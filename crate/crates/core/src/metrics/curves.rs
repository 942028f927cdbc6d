use std::path::Path;

use serde::Serialize;

use super::{check_pairs, midranks};
use crate::error::{Error, Result};

/// One operating point. ROC: `x` = FPR, `y` = TPR. PR: `x` = recall,
/// `y` = precision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub threshold: f64,
    pub x: f64,
    pub y: f64,
}

/// Mann-Whitney AUC with midranks for ties.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, neg) = check_pairs(scores, labels)?;
    if pos == 0 || neg == 0 {
        return Err(Error::invalid("ROC AUC needs both classes"));
    }
    let ranks = midranks(scores);
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &l)| l).map(|(r, _)| r).sum();
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Cumulative (threshold, true positives, false positives) at each distinct
/// score, from the highest score down.
fn sweep(scores: &[f64], labels: &[bool]) -> Vec<(f64, usize, usize)> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut out = Vec::new();
    let (mut tp, mut fp) = (0, 0);
    for (k, &i) in idx.iter().enumerate() {
        if labels[i] {
            tp += 1;
        } else {
            fp += 1;
        }
        let last_of_group = idx.get(k + 1).is_none_or(|&j| scores[j] != scores[i]);
        if last_of_group {
            out.push((scores[i], tp, fp));
        }
    }
    out
}

/// ROC points by descending threshold, starting at (0, 0).
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<Vec<CurvePoint>> {
    let (pos, neg) = check_pairs(scores, labels)?;
    if pos == 0 || neg == 0 {
        return Err(Error::invalid("ROC curve needs both classes"));
    }
    let mut pts = vec![CurvePoint {
        threshold: f64::INFINITY,
        x: 0.0,
        y: 0.0,
    }];
    pts.extend(sweep(scores, labels).into_iter().map(|(t, tp, fp)| CurvePoint {
        threshold: t,
        x: fp as f64 / neg as f64,
        y: tp as f64 / pos as f64,
    }));
    Ok(pts)
}

/// Precision-recall points by descending threshold.
pub fn pr_curve(scores: &[f64], labels: &[bool]) -> Result<Vec<CurvePoint>> {
    let (pos, _) = check_pairs(scores, labels)?;
    if pos == 0 {
        return Err(Error::invalid("PR curve needs at least one positive"));
    }
    Ok(sweep(scores, labels)
        .into_iter()
        .map(|(t, tp, fp)| CurvePoint {
            threshold: t,
            x: tp as f64 / pos as f64,
            y: tp as f64 / (tp + fp) as f64,
        })
        .collect())
}

/// Step-wise area under the PR curve: each recall increment is weighted by
/// the precision at the threshold where it occurs.
pub fn pr_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let pts = pr_curve(scores, labels)?;
    let mut prev_recall = 0.0;
    let mut area = 0.0;
    for p in pts {
        area += (p.x - prev_recall) * p.y;
        prev_recall = p.x;
    }
    Ok(area)
}

/// Writes `threshold,x,y` rows with the given axis names.
pub fn write_curve(path: &Path, points: &[CurvePoint], x_name: &str, y_name: &str) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        other => Error::invalid(format!("{}: {other:?}", path.display())),
    })?;
    w.write_record(["threshold", x_name, y_name])?;
    for p in points {
        w.write_record([p.threshold.to_string(), p.x.to_string(), p.y.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

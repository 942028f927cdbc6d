//! Classifier evaluation and policy arithmetic.

mod curves;
mod significance;

pub use curves::{pr_auc, pr_curve, roc_auc, roc_curve, write_curve, CurvePoint};
pub use significance::{auc_variance, bootstrap_pr_test, delong_test, BootstrapResult, DelongResult};

use crate::error::{Error, Result};

pub(crate) fn check_pairs(scores: &[f64], labels: &[bool]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.len() < 2 {
        return Err(Error::invalid("at least 2 scored rows are required"));
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::invalid(format!("non-finite score {s}")));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    Ok((pos, labels.len() - pos))
}

/// Average ranks (1-based) with ties sharing the mean of their positions.
pub(crate) fn midranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Discovered evictions per visited property.
pub fn discovery_rate(discovered: u64, visited: u64) -> Result<f64> {
    if visited == 0 {
        return Err(Error::invalid("discovery rate needs at least one visited property"));
    }
    Ok(discovered as f64 / visited as f64)
}

/// Formats a fraction as a percentage with one decimal. Halves round away
/// from zero; the small relative nudge absorbs binary representation error
/// in inputs like 0.0565.
pub fn format_percent(fraction: f64) -> String {
    let tenths = (fraction * 1000.0 * (1.0 + 1e-12)).round();
    format!("{:.1}%", tenths / 10.0 + 0.0)
}

/// Relative improvement of `primary` over `alternative`.
pub fn lift(primary: f64, alternative: f64) -> Result<f64> {
    if alternative == 0.0 {
        return Err(Error::invalid("lift is undefined against a zero baseline"));
    }
    Ok((primary - alternative) / alternative)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn discovery_rates_from_the_policy_table() {
        let neo = discovery_rate(936, 2299).unwrap();
        assert!((neo - 0.40713).abs() < 1e-5);
        assert_eq!(format_percent(neo), "40.7%");
        assert_eq!(format_percent(discovery_rate(731, 13122).unwrap()), "5.6%");
        assert_eq!(discovery_rate(0, 100).unwrap(), 0.0);
        assert!(discovery_rate(1, 0).is_err());
    }

    #[test]
    fn percent_rounds_half_up() {
        assert_eq!(format_percent(0.0565), "5.7%");
        assert_eq!(format_percent(0.0564), "5.6%");
        assert_eq!(format_percent(0.125), "12.5%");
        assert_eq!(format_percent(0.00049), "0.0%");
        assert_eq!(format_percent(0.00051), "0.1%");
        assert_eq!(format_percent(1.0), "100.0%");
        assert_eq!(format_percent(-0.0565), "-5.7%");
        assert_eq!(format_percent(-0.0001), "0.0%");
    }

    #[test]
    fn lift_is_relative() {
        assert!((lift(936.0, 863.0).unwrap() - 73.0 / 863.0).abs() < 1e-15);
        assert!(lift(1.0, 0.0).is_err());
    }

    #[test]
    fn midranks_average_ties() {
        assert_eq!(midranks(&[0.3, 0.1, 0.3, 0.2]), vec![3.5, 1.0, 3.5, 2.0]);
    }
}

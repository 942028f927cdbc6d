use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use super::{check_pairs, midranks, pr_auc, roc_auc};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DelongResult {
    pub auc_a: f64,
    pub auc_b: f64,
    pub var_a: f64,
    pub var_b: f64,
    pub covariance: f64,
    pub z: f64,
    pub p_value: f64,
}

/// Placement values: for each positive, the fraction of negatives it beats
/// (ties count half); for each negative, the fraction of positives that beat
/// it.
fn placements(scores: &[f64], labels: &[bool]) -> (Vec<f64>, Vec<f64>) {
    let all = midranks(scores);
    let pos: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| l).map(|(s, _)| *s).collect();
    let neg: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| !l).map(|(s, _)| *s).collect();
    let rp = midranks(&pos);
    let rn = midranks(&neg);
    let (m, n) = (pos.len() as f64, neg.len() as f64);
    let (mut v10, mut v01) = (Vec::with_capacity(pos.len()), Vec::with_capacity(neg.len()));
    let (mut ip, mut ineg) = (0, 0);
    for (k, &l) in labels.iter().enumerate() {
        if l {
            v10.push((all[k] - rp[ip]) / n);
            ip += 1;
        } else {
            v01.push(1.0 - (all[k] - rn[ineg]) / m);
            ineg += 1;
        }
    }
    (v10, v01)
}

fn covariance(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (n - 1.0)
}

fn both_classes(scores: &[f64], labels: &[bool]) -> Result<(usize, usize)> {
    let (pos, neg) = check_pairs(scores, labels)?;
    if pos < 2 || neg < 2 {
        return Err(Error::invalid("variance estimates need at least 2 rows of each class"));
    }
    Ok((pos, neg))
}

/// DeLong variance of a single ROC AUC.
pub fn auc_variance(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, neg) = both_classes(scores, labels)?;
    let (v10, v01) = placements(scores, labels);
    Ok(covariance(&v10, &v10) / pos as f64 + covariance(&v01, &v01) / neg as f64)
}

/// Two-sided DeLong test for two correlated ROC AUCs on the same labels.
/// A non-positive variance of the difference yields `z = 0`, `p = 1`.
pub fn delong_test(scores_a: &[f64], scores_b: &[f64], labels: &[bool]) -> Result<DelongResult> {
    let (pos, neg) = both_classes(scores_a, labels)?;
    both_classes(scores_b, labels)?;
    let (a10, a01) = placements(scores_a, labels);
    let (b10, b01) = placements(scores_b, labels);
    let (m, n) = (pos as f64, neg as f64);
    let var_a = covariance(&a10, &a10) / m + covariance(&a01, &a01) / n;
    let var_b = covariance(&b10, &b10) / m + covariance(&b01, &b01) / n;
    let cov = covariance(&a10, &b10) / m + covariance(&a01, &b01) / n;
    let auc_a = roc_auc(scores_a, labels)?;
    let auc_b = roc_auc(scores_b, labels)?;
    let var_diff = var_a + var_b - 2.0 * cov;
    let (z, p_value) = if var_diff <= 1e-12 * (var_a + var_b) || var_diff <= 0.0 {
        (0.0, 1.0)
    } else {
        let z = (auc_a - auc_b) / var_diff.sqrt();
        let normal = Normal::standard();
        (z, (2.0 * normal.cdf(-z.abs())).min(1.0))
    };
    Ok(DelongResult {
        auc_a,
        auc_b,
        var_a,
        var_b,
        covariance: cov,
        z,
        p_value,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BootstrapResult {
    pub pr_auc_a: f64,
    pub pr_auc_b: f64,
    pub iterations: usize,
    pub p_value: f64,
}

/// Stratified paired bootstrap of the PR AUC difference. The p-value is
/// twice the share of resamples whose difference does not keep the observed
/// sign, capped at 1.
pub fn bootstrap_pr_test(
    scores_a: &[f64],
    scores_b: &[f64],
    labels: &[bool],
    iterations: usize,
    seed: u64,
) -> Result<BootstrapResult> {
    if iterations < 100 {
        return Err(Error::invalid(format!(
            "bootstrap needs at least 100 iterations, got {iterations}"
        )));
    }
    if scores_a.len() != scores_b.len() {
        return Err(Error::invalid("score vectors differ in length"));
    }
    both_classes(scores_a, labels)?;
    both_classes(scores_b, labels)?;
    let pr_auc_a = pr_auc(scores_a, labels)?;
    let pr_auc_b = pr_auc(scores_b, labels)?;
    let observed = pr_auc_a - pr_auc_b;
    if observed == 0.0 {
        return Ok(BootstrapResult {
            pr_auc_a,
            pr_auc_b,
            iterations,
            p_value: 1.0,
        });
    }
    let pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i]).collect();
    let neg: Vec<usize> = (0..labels.len()).filter(|&i| !labels[i]).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = labels.len();
    let (mut ra, mut rb, mut rl) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    let mut flipped = 0usize;
    for _ in 0..iterations {
        ra.clear();
        rb.clear();
        rl.clear();
        for class in [&pos, &neg] {
            for _ in 0..class.len() {
                let i = class[rng.random_range(0..class.len())];
                ra.push(scores_a[i]);
                rb.push(scores_b[i]);
                rl.push(labels[i]);
            }
        }
        let d = pr_auc(&ra, &rl)? - pr_auc(&rb, &rl)?;
        if d * observed.signum() <= 0.0 {
            flipped += 1;
        }
    }
    Ok(BootstrapResult {
        pr_auc_a,
        pr_auc_b,
        iterations,
        p_value: (2.0 * flipped as f64 / iterations as f64).min(1.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal as Gauss};

    fn labels(n: usize, rng: &mut ChaCha8Rng) -> Vec<bool> {
        (0..n).map(|_| rng.random::<f64>() < 0.3).collect()
    }

    #[test]
    fn identical_scores_give_p_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let l = labels(100, &mut rng);
        let s: Vec<f64> = (0..100).map(|_| rng.random()).collect();
        let r = delong_test(&s, &s, &l).unwrap();
        assert_eq!(r.auc_a, r.auc_b);
        assert_eq!(r.p_value, 1.0);
        assert_eq!(r.auc_a, roc_auc(&s, &l).unwrap());
        assert_eq!(bootstrap_pr_test(&s, &s, &l, 200, 1).unwrap().p_value, 1.0);
    }

    #[test]
    fn swapping_arguments_negates_z() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let l = labels(300, &mut rng);
        let a: Vec<f64> = l.iter().map(|&y| f64::from(u8::from(y)) * 0.3 + rng.random::<f64>()).collect();
        let b: Vec<f64> = (0..300).map(|_| rng.random()).collect();
        let ab = delong_test(&a, &b, &l).unwrap();
        let ba = delong_test(&b, &a, &l).unwrap();
        assert!((ab.z + ba.z).abs() < 1e-12);
        assert!((ab.p_value - ba.p_value).abs() < 1e-12);
        assert!(ab.p_value < 0.05);
    }

    #[test]
    fn null_rejection_rate_near_nominal() {
        let mut rejected = 0;
        for seed in 0..400 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let l = labels(500, &mut rng);
            let a: Vec<f64> = (0..500).map(|_| rng.random()).collect();
            let b: Vec<f64> = (0..500).map(|_| rng.random()).collect();
            if delong_test(&a, &b, &l).unwrap().p_value < 0.05 {
                rejected += 1;
            }
        }
        let rate = rejected as f64 / 400.0;
        assert!((0.02..=0.09).contains(&rate), "rejection rate {rate}");
    }

    #[test]
    fn single_auc_variance_matches_bootstrap() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let noise = Gauss::new(0.0, 1.0).unwrap();
        let l = labels(300, &mut rng);
        let s: Vec<f64> = l.iter().map(|&y| if y { 0.8 } else { 0.0 } + noise.sample(&mut rng)).collect();
        let analytic = auc_variance(&s, &l).unwrap();
        let pos: Vec<usize> = (0..300).filter(|&i| l[i]).collect();
        let neg: Vec<usize> = (0..300).filter(|&i| !l[i]).collect();
        let mut aucs = Vec::new();
        for _ in 0..2000 {
            let (mut rs, mut rl) = (Vec::new(), Vec::new());
            for class in [&pos, &neg] {
                for _ in 0..class.len() {
                    let i = class[rng.random_range(0..class.len())];
                    rs.push(s[i]);
                    rl.push(l[i]);
                }
            }
            aucs.push(roc_auc(&rs, &rl).unwrap());
        }
        let mean = aucs.iter().sum::<f64>() / aucs.len() as f64;
        let boot = aucs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (aucs.len() - 1) as f64;
        assert!((analytic - boot).abs() / boot < 0.2, "{analytic} vs {boot}");
    }

    #[test]
    fn bootstrap_detects_strong_difference_and_is_seeded() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let l = labels(500, &mut rng);
        let good: Vec<f64> = l.iter().map(|&y| if y { 0.6 } else { 0.0 } + 0.4 * rng.random::<f64>()).collect();
        let random: Vec<f64> = (0..500).map(|_| rng.random()).collect();
        let r1 = bootstrap_pr_test(&good, &random, &l, 2000, 7).unwrap();
        let r2 = bootstrap_pr_test(&good, &random, &l, 2000, 7).unwrap();
        assert!(r1.p_value < 0.01);
        assert_eq!(r1, r2);
        assert!(bootstrap_pr_test(&good, &random, &l, 99, 7).is_err());
    }
}

//! Ranking metrics over candidate scores.
//!
//! Both metrics process tied scores as one block, so the result does not
//! depend on the order of tied items.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `(true positives, false positives)` after each tie block, sweeping from
/// the highest score down.
fn block_counts(scores: &[f64], labels: &[bool]) -> Vec<(usize, usize)> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = Vec::new();
    let (mut tp, mut fp) = (0, 0);
    let mut k = 0;
    while k < order.len() {
        let s = scores[order[k]];
        while k < order.len() && scores[order[k]] == s {
            if labels[order[k]] {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        points.push((tp, fp));
    }
    points
}

fn check_lengths(scores: &[f64], labels: &[bool]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: scores.len(),
            got: labels.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Config("NaN score".into()));
    }
    Ok(())
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half.
pub fn auc_roc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_lengths(scores, labels)?;
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::DegenerateLabels);
    }
    // Sweeping blocks from the top: each positive in a block beats every
    // negative below it and ties the negatives inside the block.
    let mut wins = 0.0;
    let (mut prev_tp, mut prev_fp) = (0, 0);
    for (tp, fp) in block_counts(scores, labels) {
        let (dp, dn) = (tp - prev_tp, fp - prev_fp);
        let below = neg - fp;
        wins += dp as f64 * (below as f64 + 0.5 * dn as f64);
        prev_tp = tp;
        prev_fp = fp;
    }
    Ok(wins / (pos as f64 * neg as f64))
}

/// Area under the precision-recall curve. Between consecutive block
/// endpoints the curve follows the straight line in (TP, FP) space, which
/// gives the Davis–Goadrich precision interpolation; each piece is
/// integrated exactly.
pub fn auc_pr(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_lengths(scores, labels)?;
    let pos = labels.iter().filter(|&&l| l).count();
    if pos == 0 {
        return Err(Error::NoPositives);
    }
    let mut area = 0.0;
    let (mut tp0, mut fp0) = (0usize, 0usize);
    for (tp1, fp1) in block_counts(scores, labels) {
        let dtp = (tp1 - tp0) as f64;
        if dtp > 0.0 {
            let a = tp0 as f64;
            let c = (tp0 + fp0) as f64;
            let d = ((tp1 + fp1) - (tp0 + fp0)) as f64;
            // ∫₀¹ (a + dtp·t) / (c + d·t) dt
            let integral = if c == 0.0 {
                dtp / d
            } else {
                dtp / d + (a * d - dtp * c) / (d * d) * ((c + d) / c).ln()
            };
            area += dtp / pos as f64 * integral;
        }
        tp0 = tp1;
        fp0 = fp1;
    }
    Ok(area)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub category: String,
    pub method: String,
    pub auc_roc: f64,
    pub auc_pr: f64,
    pub n_candidates: usize,
    pub n_positives: usize,
}

impl EvalReport {
    pub const HEADER: &'static str = "category\tmethod\tauc_roc\tauc_pr\tn_candidates\tn_positives";

    pub fn write_row<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "{}\t{}\t{:.6}\t{:.6}\t{}\t{}",
            self.category, self.method, self.auc_roc, self.auc_pr, self.n_candidates, self.n_positives
        )
    }
}

/// Scores every candidate against the realized positives.
pub fn evaluate_category(
    category: &str,
    method: &str,
    scores: &BTreeMap<String, f64>,
    candidates: &BTreeSet<String>,
    positives: &BTreeSet<String>,
) -> Result<EvalReport> {
    let mut s = Vec::with_capacity(candidates.len());
    let mut l = Vec::with_capacity(candidates.len());
    for c in candidates {
        let score = scores
            .get(c)
            .ok_or_else(|| Error::Config(format!("no score for candidate {c}")))?;
        s.push(*score);
        l.push(positives.contains(c));
    }
    Ok(EvalReport {
        category: category.to_string(),
        method: method.to_string(),
        auc_roc: auc_roc(&s, &l)?,
        auc_pr: auc_pr(&s, &l)?,
        n_candidates: candidates.len(),
        n_positives: l.iter().filter(|&&x| x).count(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn roc_examples() {
        assert_eq!(auc_roc(&[0.9, 0.8, 0.2, 0.1], &[true, true, false, false]).unwrap(), 1.0);
        assert_eq!(auc_roc(&[0.5; 6], &[true, false, true, false, false, false]).unwrap(), 0.5);
        assert_eq!(auc_roc(&[0.9, 0.8, 0.7, 0.1], &[true, false, true, false]).unwrap(), 0.75);
        assert!(matches!(auc_roc(&[0.1, 0.2], &[true, true]), Err(Error::DegenerateLabels)));
    }

    #[test]
    fn pr_examples() {
        assert_eq!(auc_pr(&[0.9, 0.8, 0.2, 0.1], &[true, true, false, false]).unwrap(), 1.0);
        let labels = [true, false, false, false, true];
        assert!((auc_pr(&[0.3; 5], &labels).unwrap() - 0.4).abs() < 1e-15);
        assert!(matches!(auc_pr(&[0.1, 0.2], &[false, false]), Err(Error::NoPositives)));
        // (1 positive at top, then one negative, then a positive):
        // precision 1 over recall [0, ½], then the step block (1,1)→(2,1):
        // ∫ (1+t)/(2+t) dt = 1 − ln(3/2).
        let v = auc_pr(&[0.9, 0.8, 0.7], &[true, false, true]).unwrap();
        let want = 0.5 + 0.5 * (1.0 - (1.5f64).ln());
        assert!((v - want).abs() < 1e-14);
    }

    #[test]
    fn evaluate_requires_scores() {
        let scores: BTreeMap<String, f64> = [("a".to_string(), 0.9), ("b".to_string(), 0.1)].into();
        let cands: BTreeSet<String> = ["a".to_string(), "b".to_string()].into();
        let pos: BTreeSet<String> = ["a".to_string()].into();
        let r = evaluate_category("Fraud", "lp-fixed", &scores, &cands, &pos).unwrap();
        assert_eq!((r.auc_roc, r.auc_pr, r.n_candidates, r.n_positives), (1.0, 1.0, 2, 1));
        let more: BTreeSet<String> = ["a".to_string(), "c".to_string()].into();
        assert!(evaluate_category("Fraud", "lp-fixed", &scores, &more, &pos).is_err());
    }

    fn scored_labels() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
        (2usize..40).prop_flat_map(|n| {
            (
                proptest::collection::vec((0u8..8).prop_map(|v| v as f64 / 8.0), n),
                proptest::collection::vec(any::<bool>(), n),
            )
        })
    }

    proptest! {
        #[test]
        fn invariant_under_monotone_transform((s, l) in scored_labels()) {
            prop_assume!(l.iter().any(|&x| x) && l.iter().any(|&x| !x));
            let t: Vec<f64> = s.iter().map(|v| (3.0 * v).exp() - 7.0).collect();
            prop_assert!((auc_roc(&s, &l).unwrap() - auc_roc(&t, &l).unwrap()).abs() < 1e-12);
            prop_assert!((auc_pr(&s, &l).unwrap() - auc_pr(&t, &l).unwrap()).abs() < 1e-12);
            let v = auc_pr(&s, &l).unwrap();
            prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
        }

        #[test]
        fn reversed_scores_complement_roc(l in proptest::collection::vec(any::<bool>(), 2..40)) {
            prop_assume!(l.iter().any(|&x| x) && l.iter().any(|&x| !x));
            let s: Vec<f64> = (0..l.len()).map(|i| i as f64).collect();
            let r: Vec<f64> = s.iter().map(|v| -v).collect();
            prop_assert!((auc_roc(&s, &l).unwrap() + auc_roc(&r, &l).unwrap() - 1.0).abs() < 1e-12);
        }
    }
}

//! Ranking metrics for multi-label tagging.

use std::cmp::Ordering;

use crate::error::{Error, Result};

fn check(scores: &[f64], labels: &[bool]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidConfig(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidConfig("NaN score".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    Ok((n_pos, labels.len() - n_pos))
}

/// Indices sorted by descending score.
fn order_desc(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(Ordering::Equal));
    idx
}

/// Area under the ROC curve as the Mann-Whitney statistic, ties counted
/// half.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (n_pos, n_neg) = check(scores, labels)?;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::DegenerateLabels(format!("{n_pos} positives, {n_neg} negatives")));
    }
    // Walk tie groups from the bottom: every positive beats the negatives
    // strictly below it and half-beats the ones in its own group.
    let mut idx = order_desc(scores);
    idx.reverse();
    let mut neg_below = 0u64;
    let mut wins2 = 0u64; // twice the win count, so ties stay integral
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        let (mut p, mut n) = (0u64, 0u64);
        while j < idx.len() && scores[idx[j]] == scores[idx[i]] {
            if labels[idx[j]] {
                p += 1;
            } else {
                n += 1;
            }
            j += 1;
        }
        wins2 += p * (2 * neg_below + n);
        neg_below += n;
        i = j;
    }
    Ok(wins2 as f64 / (2.0 * n_pos as f64 * n_neg as f64))
}

/// Average precision with tied scores entering the ranking together.
pub fn pr_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (n_pos, _) = check(scores, labels)?;
    if n_pos == 0 {
        return Err(Error::DegenerateLabels("no positives".into()));
    }
    let idx = order_desc(scores);
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut ap = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        let tp_before = tp;
        while j < idx.len() && scores[idx[j]] == scores[idx[i]] {
            tp += labels[idx[j]] as usize;
            j += 1;
        }
        seen = j;
        ap += (tp - tp_before) as f64 / n_pos as f64 * (tp as f64 / seen as f64);
        i = j;
    }
    debug_assert_eq!(seen, idx.len());
    Ok(ap)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TagMetrics {
    pub n_pos: usize,
    pub n_neg: usize,
    /// `None` when the tag has a single class in the split.
    pub roc_auc: Option<f64>,
    pub pr_auc: Option<f64>,
}

impl TagMetrics {
    pub fn is_degenerate(&self) -> bool {
        self.n_pos == 0 || self.n_neg == 0
    }
}

/// Per-tag metrics for row-major `[n_examples][n_tags]` scores and labels.
/// Single-class tags are flagged rather than rejected.
pub fn per_tag(scores: &[Vec<f64>], labels: &[Vec<bool>]) -> Result<Vec<TagMetrics>> {
    if scores.len() != labels.len() || scores.is_empty() {
        return Err(Error::InvalidConfig("score/label row count".into()));
    }
    let n_tags = labels[0].len();
    if scores.iter().any(|r| r.len() != n_tags) || labels.iter().any(|r| r.len() != n_tags) {
        return Err(Error::InvalidConfig("ragged score or label rows".into()));
    }
    (0..n_tags)
        .map(|t| {
            let s: Vec<f64> = scores.iter().map(|r| r[t]).collect();
            let l: Vec<bool> = labels.iter().map(|r| r[t]).collect();
            let (n_pos, n_neg) = check(&s, &l)?;
            let ok = n_pos > 0 && n_neg > 0;
            Ok(TagMetrics {
                n_pos,
                n_neg,
                roc_auc: if ok { Some(roc_auc(&s, &l)?) } else { None },
                pr_auc: if ok { Some(pr_auc(&s, &l)?) } else { None },
            })
        })
        .collect()
}

/// Arithmetic means of ROC-AUC and PR-AUC over non-degenerate tags.
pub fn macro_average(tags: &[TagMetrics]) -> Option<(f64, f64)> {
    let valid: Vec<&TagMetrics> = tags.iter().filter(|t| !t.is_degenerate()).collect();
    if valid.is_empty() {
        return None;
    }
    let n = valid.len() as f64;
    let roc = valid.iter().map(|t| t.roc_auc.unwrap()).sum::<f64>() / n;
    let pr = valid.iter().map(|t| t.pr_auc.unwrap()).sum::<f64>() / n;
    Some((roc, pr))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_examples() {
        let l = [false, false, true, true];
        assert!((roc_auc(&[0.1, 0.4, 0.35, 0.8], &l).unwrap() - 0.75).abs() < 1e-12);
        assert_eq!(roc_auc(&[0.1, 0.2, 0.3, 0.4], &l).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.5; 4], &l).unwrap(), 0.5);

        let ap = pr_auc(&[0.9, 0.8, 0.7], &[true, false, true]).unwrap();
        assert!((ap - (0.5 + 2.0 / 3.0 * 0.5)).abs() < 1e-12);
        assert_eq!(pr_auc(&[0.3, 0.1, 0.2], &[true; 3]).unwrap(), 1.0);
        assert_eq!(pr_auc(&[0.4, 0.3, 0.2, 0.1], &[false, false, false, true]).unwrap(), 0.25);
    }

    #[test]
    fn degenerate_labels_error() {
        assert!(matches!(roc_auc(&[0.1, 0.2], &[true, true]), Err(Error::DegenerateLabels(_))));
        assert!(matches!(pr_auc(&[0.1, 0.2], &[false, false]), Err(Error::DegenerateLabels(_))));
        assert!(roc_auc(&[f64::NAN, 0.2], &[true, false]).is_err());
    }

    #[test]
    fn macro_skips_single_class_tags() {
        let scores = vec![vec![0.9, 0.1], vec![0.2, 0.3]];
        let labels = vec![vec![true, false], vec![false, false]];
        let tags = per_tag(&scores, &labels).unwrap();
        assert!(tags[1].is_degenerate() && tags[1].roc_auc.is_none());
        assert_eq!(macro_average(&tags), Some((1.0, 1.0)));
    }
}

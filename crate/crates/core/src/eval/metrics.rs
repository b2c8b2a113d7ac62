use crate::error::{Error, Result};

fn check_lengths(scores: &[f64], labels: &[bool]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::Dimension {
            op: "metric",
            left: (scores.len(), 1),
            right: (labels.len(), 1),
        });
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::NonFinite(format!("score {i} is {}", scores[i])));
    }
    Ok(())
}

/// Area under the ROC curve from the rank-sum statistic; tied scores
/// receive average ranks, which credits tied pairs one half.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_lengths(scores, labels)?;
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric(format!(
            "AUC needs both classes ({pos} positive, {neg} negative)"
        )));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += idx[i..=j].iter().filter(|&&k| labels[k]).count() as f64 * avg;
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Counts at a probability threshold; `score >= threshold` predicts defective.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

pub fn confusion(scores: &[f64], labels: &[bool], threshold: f64) -> Result<Confusion> {
    check_lengths(scores, labels)?;
    let mut c = Confusion::default();
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= threshold, l) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

impl Confusion {
    /// Mean of TPR and TNR. A class with no members contributes a rate of 0.
    pub fn balanced_accuracy(&self) -> f64 {
        let rate = |hit: usize, miss: usize| {
            if hit + miss == 0 {
                0.0
            } else {
                hit as f64 / (hit + miss) as f64
            }
        };
        (rate(self.tp, self.fn_) + rate(self.tn, self.fp)) / 2.0
    }

    /// Matthews correlation and whether the denominator vanished (in which
    /// case the value is 0).
    pub fn mcc(&self) -> (f64, bool) {
        let (tp, fp, tn, fn_) = (self.tp as f64, self.fp as f64, self.tn as f64, self.fn_ as f64);
        let denom = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
        if denom == 0.0 {
            return (0.0, true);
        }
        ((tp * tn - fp * fn_) / denom.sqrt(), false)
    }
}

pub fn balanced_accuracy(scores: &[f64], labels: &[bool], threshold: f64) -> Result<f64> {
    Ok(confusion(scores, labels, threshold)?.balanced_accuracy())
}

/// MCC value and the degenerate-denominator flag.
pub fn mcc(scores: &[f64], labels: &[bool], threshold: f64) -> Result<(f64, bool)> {
    Ok(confusion(scores, labels, threshold)?.mcc())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auc_cases() {
        assert_eq!(auc(&[0.9, 0.1], &[true, false]).unwrap(), 1.0);
        assert_eq!(auc(&[0.3, 0.3], &[true, false]).unwrap(), 0.5);
        assert_eq!(auc(&[0.8, 0.6, 0.4, 0.7], &[true, false, false, true]).unwrap(), 1.0);
        assert!(matches!(auc(&[0.1, 0.2], &[true, true]), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn auc_monotone_invariant() {
        let s = [0.1, 0.4, 0.35, 0.8, 0.4, 0.05];
        let l = [false, true, false, true, false, true];
        let t: Vec<f64> = s.iter().map(|x: &f64| (3.0 * x).exp()).collect();
        assert_eq!(auc(&s, &l).unwrap(), auc(&t, &l).unwrap());
    }

    #[test]
    fn threshold_metrics() {
        let l = [true, false, false, true];
        assert_eq!(balanced_accuracy(&[0.9, 0.1, 0.2, 0.7], &l, 0.5).unwrap(), 1.0);
        assert_eq!(mcc(&[0.9, 0.1, 0.2, 0.7], &l, 0.5).unwrap(), (1.0, false));
        let s = [0.9, 0.2, 0.8, 0.3];
        let c = confusion(&s, &l, 0.5).unwrap();
        assert_eq!(c, Confusion { tp: 1, fp: 1, tn: 1, fn_: 1 });
        assert_eq!(c.balanced_accuracy(), 0.5);
        assert_eq!(c.mcc(), (0.0, false));
        assert_eq!(balanced_accuracy(&[0.1, 0.1], &[true, false], 0.5).unwrap(), 0.5);
        assert_eq!(mcc(&[0.1, 0.1], &[true, false], 0.5).unwrap(), (0.0, true));
    }

    #[test]
    fn mcc_flip_symmetry() {
        let s = [0.9, 0.6, 0.2, 0.7, 0.1];
        let l = [true, false, false, true, true];
        let fs: Vec<f64> = s.iter().map(|x| 1.0 - x).collect();
        let fl: Vec<bool> = l.iter().map(|x| !x).collect();
        let a = mcc(&s, &l, 0.5).unwrap().0;
        let b = mcc(&fs, &fl, 0.5000001).unwrap().0;
        assert!((a - b).abs() < 1e-12);
    }
}

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};

use crate::corpus::PreparedFile;
use crate::error::{Error, Result};
use crate::model::PredictionRecord;

/// How lines of a release are joined into one inspection order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum RankingOrder {
    /// Files by probability, then lines by score within each file.
    #[default]
    FileFirst,
    /// All lines by `probability * line score`.
    Product,
}

impl RankingOrder {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "file-first" => Some(RankingOrder::FileFirst),
            "product" => Some(RankingOrder::Product),
            _ => None,
        }
    }
}

/// One line in the release inspection order.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedLine {
    pub file_id: String,
    pub line_number: u32,
    /// Score used for ordering; `None` for ground-truth lines the model did
    /// not score (inspected after the file's scored lines).
    pub score: Option<f64>,
    pub defective: bool,
    /// 1-based position in the inspection order.
    pub loc_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReleaseRanking {
    pub lines: Vec<RankedLine>,
    pub total_loc: usize,
    pub total_defective: usize,
}

fn desc(a: f64, b: f64) -> Ordering {
    b.total_cmp(&a)
}

/// Joins per-file predictions with ground truth into one inspection order.
///
/// Files are inspected by probability descending (ties: `file_id`
/// ascending) and lines by score descending (ties: line number ascending).
/// Unscored ground-truth lines follow their file's scored lines in line
/// order; files without a prediction come last, by `file_id`.
pub fn rank_release_lines(
    records: &[PredictionRecord],
    truth: &[PreparedFile],
    order: RankingOrder,
) -> Result<ReleaseRanking> {
    let by_id: HashMap<&str, &PreparedFile> = truth.iter().map(|f| (f.file_id.as_str(), f)).collect();
    if by_id.len() != truth.len() {
        return Err(Error::Data("ground truth lists a file twice".into()));
    }
    let mut seen_files = HashSet::new();
    // (prob, file, scored lines, unscored lines)
    let mut groups: Vec<(f64, &PreparedFile, Vec<(u32, f64)>, Vec<u32>)> = Vec::new();
    for r in records {
        let file = by_id.get(r.file_id.as_str()).ok_or_else(|| {
            Error::Data(format!("predicted file `{}` is not in the ground truth", r.file_id))
        })?;
        if !seen_files.insert(r.file_id.as_str()) {
            return Err(Error::Data(format!("file `{}` predicted twice", r.file_id)));
        }
        let known: HashSet<u32> = file.lines.iter().map(|l| l.line_number).collect();
        let mut scored_set = HashSet::new();
        for &(ln, s) in &r.lines {
            if !known.contains(&ln) {
                return Err(Error::Data(format!(
                    "predicted line ({}, {ln}) is not in the ground truth",
                    r.file_id
                )));
            }
            if !scored_set.insert(ln) {
                return Err(Error::Data(format!("line ({}, {ln}) predicted twice", r.file_id)));
            }
            if !s.is_finite() {
                return Err(Error::NonFinite(format!("score of line ({}, {ln})", r.file_id)));
            }
        }
        let mut scored = r.lines.clone();
        scored.sort_by(|a, b| desc(a.1, b.1).then(a.0.cmp(&b.0)));
        let unscored = file
            .lines
            .iter()
            .map(|l| l.line_number)
            .filter(|ln| !scored_set.contains(ln))
            .collect();
        groups.push((r.prob, file, scored, unscored));
    }
    let mut missing: Vec<&PreparedFile> = truth
        .iter()
        .filter(|f| !seen_files.contains(f.file_id.as_str()) && !f.is_empty())
        .collect();
    missing.sort_by(|a, b| a.file_id.cmp(&b.file_id));

    let labels: HashMap<(&str, u32), bool> = truth
        .iter()
        .flat_map(|f| f.lines.iter().map(move |l| ((f.file_id.as_str(), l.line_number), l.label)))
        .collect();
    let mut out: Vec<RankedLine> = Vec::new();
    let mut push = |file: &PreparedFile, ln: u32, score: Option<f64>| {
        out.push(RankedLine {
            file_id: file.file_id.clone(),
            line_number: ln,
            score,
            defective: labels[&(file.file_id.as_str(), ln)],
            loc_index: 0,
        });
    };

    match order {
        RankingOrder::FileFirst => {
            groups.sort_by(|a, b| {
                desc(a.0, b.0)
                    .then(a.1.file_id.cmp(&b.1.file_id))
            });
            for (_, file, scored, unscored) in &groups {
                for &(ln, s) in scored {
                    push(file, ln, Some(s));
                }
                for &ln in unscored {
                    push(file, ln, None);
                }
            }
        }
        RankingOrder::Product => {
            let mut all: Vec<(f64, &PreparedFile, u32)> = Vec::new();
            let mut tail: Vec<(&PreparedFile, u32)> = Vec::new();
            for (p, file, scored, unscored) in &groups {
                all.extend(scored.iter().map(|&(ln, s)| (*p * s, *file, ln)));
                tail.extend(unscored.iter().map(|&ln| (*file, ln)));
            }
            all.sort_by(|a, b| {
                desc(a.0, b.0)
                    .then(a.1.file_id.cmp(&b.1.file_id))
                    .then(a.2.cmp(&b.2))
            });
            tail.sort_by(|a, b| a.0.file_id.cmp(&b.0.file_id).then(a.1.cmp(&b.1)));
            for (s, file, ln) in all {
                push(file, ln, Some(s));
            }
            for (file, ln) in tail {
                push(file, ln, None);
            }
        }
    }
    for file in missing {
        for l in &file.lines {
            push(file, l.line_number, None);
        }
    }
    for (i, l) in out.iter_mut().enumerate() {
        l.loc_index = i + 1;
    }
    let total_defective = out.iter().filter(|l| l.defective).count();
    Ok(ReleaseRanking {
        total_loc: out.len(),
        total_defective,
        lines: out,
    })
}

/// `ceil(fraction * total)`, tolerant of representation error in `fraction`.
pub fn budget(fraction: f64, total: usize) -> usize {
    let raw = fraction * total as f64;
    let r = raw.round();
    if (raw - r).abs() < 1e-9 {
        r as usize
    } else {
        raw.ceil() as usize
    }
}

impl ReleaseRanking {
    fn require_defectives(&self, metric: &str) -> Result<()> {
        if self.total_defective == 0 {
            return Err(Error::UndefinedMetric(format!("{metric} needs at least one defective line")));
        }
        Ok(())
    }

    /// Share of defective lines found within the first `fraction` of LOC.
    pub fn recall_at_loc(&self, fraction: f64) -> Result<f64> {
        self.require_defectives("recall at a LOC budget")?;
        let cut = budget(fraction, self.total_loc);
        let found = self.lines.iter().take(cut).filter(|l| l.defective).count();
        Ok(found as f64 / self.total_defective as f64)
    }

    /// Share of LOC inspected until `fraction` of the defective lines are found.
    pub fn effort_at_recall(&self, fraction: f64) -> Result<f64> {
        self.require_defectives("effort at a recall level")?;
        let target = budget(fraction, self.total_defective).max(1);
        let pos = self
            .lines
            .iter()
            .filter(|l| l.defective)
            .nth(target - 1)
            .map(|l| l.loc_index)
            .expect("target does not exceed the defective count");
        Ok(pos as f64 / self.total_loc as f64)
    }
}

/// For every defective line that was scored, its 1-based rank within its
/// file divided by the number of scored lines of that file.
pub fn defective_rank_percentiles(records: &[PredictionRecord], truth: &[PreparedFile]) -> Result<Vec<f64>> {
    let by_id: HashMap<&str, &PreparedFile> = truth.iter().map(|f| (f.file_id.as_str(), f)).collect();
    let mut out = Vec::new();
    for r in records {
        let file = by_id.get(r.file_id.as_str()).ok_or_else(|| {
            Error::Data(format!("predicted file `{}` is not in the ground truth", r.file_id))
        })?;
        let defective: HashSet<u32> = file.lines.iter().filter(|l| l.label).map(|l| l.line_number).collect();
        let mut ranked = r.lines.clone();
        ranked.sort_by(|a, b| desc(a.1, b.1).then(a.0.cmp(&b.0)));
        let n = ranked.len() as f64;
        for (i, (ln, _)) in ranked.iter().enumerate() {
            if defective.contains(ln) {
                out.push((i + 1) as f64 / n);
            }
        }
    }
    Ok(out)
}

pub fn recall_at_top20_loc(ranking: &ReleaseRanking) -> Result<f64> {
    ranking.recall_at_loc(0.2)
}

pub fn effort_at_top20_recall(ranking: &ReleaseRanking) -> Result<f64> {
    ranking.effort_at_recall(0.2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::PreparedLine;

    fn file(id: &str, labels: &[bool]) -> PreparedFile {
        PreparedFile {
            file_id: id.into(),
            file_label: labels.contains(&true),
            lines: labels
                .iter()
                .enumerate()
                .map(|(i, &label)| PreparedLine {
                    line_number: i as u32 + 1,
                    tokens: vec!["x".into()],
                    label,
                })
                .collect(),
        }
    }

    fn record(id: &str, prob: f64, scores: &[f64]) -> PredictionRecord {
        PredictionRecord {
            file_id: id.into(),
            prob,
            lines: scores.iter().enumerate().map(|(i, &s)| (i as u32 + 1, s)).collect(),
        }
    }

    #[test]
    fn file_first_order() {
        let truth = [file("a", &[false, true]), file("b", &[true, false])];
        let recs = [record("b", 0.1, &[0.3, 0.7]), record("a", 0.9, &[0.2, 0.8])];
        let r = rank_release_lines(&recs, &truth, RankingOrder::FileFirst).unwrap();
        let order: Vec<(&str, u32)> = r.lines.iter().map(|l| (l.file_id.as_str(), l.line_number)).collect();
        assert_eq!(order, [("a", 2), ("a", 1), ("b", 2), ("b", 1)]);
        assert_eq!(r.lines[3].loc_index, 4);
    }

    #[test]
    fn product_order() {
        let truth = [file("a", &[false, true]), file("b", &[true, false])];
        let recs = [record("a", 0.5, &[0.2, 0.8]), record("b", 0.25, &[1.0, 0.1])];
        let r = rank_release_lines(&recs, &truth, RankingOrder::Product).unwrap();
        let order: Vec<(&str, u32)> = r.lines.iter().map(|l| (l.file_id.as_str(), l.line_number)).collect();
        assert_eq!(order, [("a", 2), ("b", 1), ("a", 1), ("b", 2)]);
    }

    #[test]
    fn unknown_and_duplicate_lines_rejected() {
        let truth = [file("a", &[false, true])];
        let bad = [record("a", 0.5, &[0.1, 0.2, 0.3])];
        assert!(rank_release_lines(&bad, &truth, RankingOrder::FileFirst).is_err());
        let dup = [PredictionRecord { file_id: "a".into(), prob: 0.5, lines: vec![(1, 0.1), (1, 0.2)] }];
        assert!(rank_release_lines(&dup, &truth, RankingOrder::FileFirst).is_err());
        let unknown = [record("zz", 0.5, &[0.1])];
        assert!(rank_release_lines(&unknown, &truth, RankingOrder::FileFirst).is_err());
    }

    #[test]
    fn unscored_lines_follow_their_file() {
        let truth = [file("a", &[true, false, true])];
        let recs = [PredictionRecord { file_id: "a".into(), prob: 0.5, lines: vec![(2, 0.9)] }];
        let r = rank_release_lines(&recs, &truth, RankingOrder::FileFirst).unwrap();
        let order: Vec<u32> = r.lines.iter().map(|l| l.line_number).collect();
        assert_eq!(order, [2, 1, 3]);
        assert_eq!(r.lines[1].score, None);
    }

    #[test]
    fn top20_hand_cases() {
        // 10 lines, defectives at positions 2 and 9
        let mut labels = [false; 10];
        labels[1] = true;
        labels[8] = true;
        let truth = [file("a", &labels)];
        let scores: Vec<f64> = (0..10).map(|i| 1.0 - i as f64 / 10.0).collect();
        let r = rank_release_lines(&[record("a", 0.5, &scores)], &truth, RankingOrder::FileFirst).unwrap();
        assert_eq!(recall_at_top20_loc(&r).unwrap(), 0.5);
        assert_eq!(effort_at_top20_recall(&r).unwrap(), 0.2);

        // 100 lines, 10 defective, 2nd defective at position 30
        let mut labels = [false; 100];
        for p in [5, 30, 40, 50, 60, 70, 80, 90, 95, 100] {
            labels[p - 1] = true;
        }
        let truth = [file("b", &labels)];
        let scores: Vec<f64> = (0..100).map(|i| 1.0 - i as f64 / 100.0).collect();
        let r = rank_release_lines(&[record("b", 0.5, &scores)], &truth, RankingOrder::FileFirst).unwrap();
        assert_eq!(effort_at_top20_recall(&r).unwrap(), 0.30);

        let truth = [file("c", &[false, false])];
        let r = rank_release_lines(&[record("c", 0.5, &[0.1, 0.2])], &truth, RankingOrder::FileFirst).unwrap();
        assert!(matches!(recall_at_top20_loc(&r), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn budget_is_ceiling() {
        assert_eq!(budget(0.2, 10), 2);
        assert_eq!(budget(0.2, 11), 3);
        assert_eq!(budget(0.2, 1), 1);
        assert_eq!(budget(0.2, 35), 7);
        for n in 0..5000 {
            assert_eq!(budget(0.2, n), n.div_ceil(5));
        }
    }
}

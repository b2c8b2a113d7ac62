//! File-level and effort-aware line-level metrics, release ranking, and
//! Scott-Knott ESD method comparison.
//!
//! Aggregate results are a CSV with header `task,method,metric,value`, one
//! row per measurement.

mod metrics;
mod ranking;
mod skesd;

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::corpus::PreparedFile;
use crate::error::{Error, Result};
use crate::model::PredictionRecord;

pub use metrics::{auc, balanced_accuracy, confusion, mcc, Confusion};
pub use ranking::{
    budget, defective_rank_percentiles, effort_at_top20_recall, rank_release_lines, recall_at_top20_loc, RankedLine, RankingOrder, ReleaseRanking,
};
pub use skesd::{cohens_d, scott_knott_esd, shapiro_wilk, SkEsdResult, ALPHA, NEGLIGIBLE_D};

/// Probability threshold for BA and MCC.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// All five metrics of one release, with the counts behind them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub task: String,
    pub method: String,
    pub auc: f64,
    pub ba: f64,
    pub mcc: f64,
    /// MCC denominator was zero; `mcc` is 0 by convention.
    pub mcc_degenerate: bool,
    pub recall_top20_loc: f64,
    pub effort_top20_recall: f64,
    pub threshold: f64,
    pub files: usize,
    pub defective_files: usize,
    pub lines: usize,
    pub defective_lines: usize,
    /// Effective configuration, `key=value`.
    #[serde(default)]
    pub config: BTreeMap<String, String>,
}

/// Scores a release's predictions against its ground truth.
pub fn evaluate_release(
    task: &str,
    method: &str,
    records: &[PredictionRecord],
    truth: &[PreparedFile],
    threshold: f64,
    order: RankingOrder,
) -> Result<MetricReport> {
    let labels_by_id: BTreeMap<&str, bool> = truth.iter().map(|f| (f.file_id.as_str(), f.file_label)).collect();
    let mut probs = Vec::with_capacity(records.len());
    let mut labels = Vec::with_capacity(records.len());
    for r in records {
        let label = labels_by_id.get(r.file_id.as_str()).ok_or_else(|| {
            Error::Data(format!("predicted file `{}` is not in the ground truth", r.file_id))
        })?;
        probs.push(r.prob);
        labels.push(*label);
    }
    let c = confusion(&probs, &labels, threshold)?;
    let (mcc, mcc_degenerate) = c.mcc();
    let ranking = rank_release_lines(records, truth, order)?;
    Ok(MetricReport {
        task: task.to_string(),
        method: method.to_string(),
        auc: auc(&probs, &labels)?,
        ba: c.balanced_accuracy(),
        mcc,
        mcc_degenerate,
        recall_top20_loc: recall_at_top20_loc(&ranking)?,
        effort_top20_recall: effort_at_top20_recall(&ranking)?,
        threshold,
        files: records.len(),
        defective_files: labels.iter().filter(|&&l| l).count(),
        lines: ranking.total_loc,
        defective_lines: ranking.total_defective,
        config: BTreeMap::new(),
    })
}

impl MetricReport {
    /// `(metric, value)` pairs as written to the aggregate CSV.
    pub fn metric_values(&self) -> [(&'static str, f64); 5] {
        [
            ("auc", self.auc),
            ("ba", self.ba),
            ("mcc", self.mcc),
            ("recall_top20_loc", self.recall_top20_loc),
            ("effort_top20_recall", self.effort_top20_recall),
        ]
    }
}

/// Whether larger values of a metric are better.
pub fn higher_is_better(metric: &str) -> bool {
    !metric.starts_with("effort")
}

/// One row of the aggregate CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub task: String,
    pub method: String,
    pub metric: String,
    pub value: f64,
}

pub fn write_aggregate<W: Write>(rows: &[AggregateRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_aggregate<R: Read>(input: R) -> Result<Vec<AggregateRow>> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut rows = Vec::new();
    for (i, r) in rdr.deserialize().enumerate() {
        rows.push(r.map_err(|e| Error::Parse {
            row: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(rows)
}

/// Per-method observations of `metric`, ordered by task name. Every method
/// must have exactly one value for every task.
pub fn observations(rows: &[AggregateRow], metric: &str) -> Result<BTreeMap<String, Vec<f64>>> {
    let mut table: BTreeMap<&str, BTreeMap<&str, f64>> = BTreeMap::new();
    let mut tasks = std::collections::BTreeSet::new();
    for r in rows.iter().filter(|r| r.metric == metric) {
        tasks.insert(r.task.as_str());
        if table.entry(&r.method).or_default().insert(&r.task, r.value).is_some() {
            return Err(Error::Data(format!(
                "duplicate value for task `{}`, method `{}`, metric `{metric}`",
                r.task, r.method
            )));
        }
    }
    if table.is_empty() {
        return Err(Error::Data(format!("no rows for metric `{metric}`")));
    }
    table
        .into_iter()
        .map(|(method, by_task)| {
            let values = tasks
                .iter()
                .map(|t| {
                    by_task.get(t).copied().ok_or_else(|| {
                        Error::Data(format!("method `{method}` has no `{metric}` value for task `{t}`"))
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok((method.to_string(), values))
        })
        .collect()
}

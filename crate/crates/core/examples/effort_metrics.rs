//! Computes file-level and effort-aware metrics on a hand-built release.
//!
//! ```text
//! cargo run --example effort_metrics
//! ```

use bafline::corpus::{PreparedFile, PreparedLine};
use bafline::eval::{evaluate_release, rank_release_lines, RankingOrder};
use bafline::model::PredictionRecord;

fn file(id: &str, label: bool, defective: &[u32], n: u32) -> PreparedFile {
    PreparedFile {
        file_id: id.into(),
        file_label: label,
        lines: (1..=n)
            .map(|ln| PreparedLine { line_number: ln, tokens: vec!["x".into()], label: defective.contains(&ln) })
            .collect(),
    }
}

fn main() -> bafline::Result<()> {
    let truth = vec![file("A", true, &[3], 4), file("B", false, &[], 3), file("C", true, &[1, 2], 3)];
    let records = vec![
        PredictionRecord { file_id: "A".into(), prob: 0.9, lines: vec![(3, 0.8), (1, 0.1), (2, 0.05), (4, 0.01)] },
        PredictionRecord { file_id: "B".into(), prob: 0.6, lines: vec![(1, 0.5), (2, 0.2), (3, 0.1)] },
        PredictionRecord { file_id: "C".into(), prob: 0.4, lines: vec![(2, 0.7), (3, 0.2), (1, 0.1)] },
    ];
    for order in [RankingOrder::FileFirst, RankingOrder::Product] {
        let ranking = rank_release_lines(&records, &truth, order)?;
        let seq: Vec<String> = ranking
            .lines
            .iter()
            .map(|l| format!("{}{}{}", l.file_id, l.line_number, if l.defective { "*" } else { "" }))
            .collect();
        let r = evaluate_release("demo", "hand", &records, &truth, 0.5, order)?;
        println!("{order:?}: {}", seq.join(" "));
        println!(
            "  AUC {:.3}  BA {:.3}  MCC {:.3}  Recall@Top20%LOC {:.3}  Effort@Top20%Recall {:.3}",
            r.auc, r.ba, r.mcc, r.recall_top20_loc, r.effort_top20_recall
        );
    }
    Ok(())
}

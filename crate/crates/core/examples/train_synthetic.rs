//! Trains the default model on a generated corpus and reports every metric
//! on a held-out release.
//!
//! ```text
//! cargo run --release --example train_synthetic -- [seed] [--no-bafn] [--files N] [--epochs N]
//! ```

use std::time::Instant;

use bafline::corpus::prepare_dataset;
use bafline::eval::{defective_rank_percentiles, evaluate_release, RankingOrder, DEFAULT_THRESHOLD};
use bafline::model::{predict_release, train, ModelConfig};
use bafline::synth::{generate_release, SynthConfig};

fn main() -> bafline::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let flag_value = |name: &str| {
        args.iter()
            .position(|a| a == name)
            .and_then(|i| args.get(i + 1))
            .and_then(|v| v.parse::<usize>().ok())
    };
    let seed: u64 = args.first().and_then(|s| s.parse().ok()).unwrap_or(0);
    let files = flag_value("--files").unwrap_or(300);

    let mut cfg = ModelConfig {
        seed,
        no_bafn: args.iter().any(|a| a == "--no-bafn"),
        ..Default::default()
    };
    if let Some(e) = flag_value("--epochs") {
        cfg.epochs = e;
    }
    let release = |offset: u64, tag: &str| {
        let synth = SynthConfig { files, seed: seed * 3 + offset, ..Default::default() };
        prepare_dataset(&generate_release(&synth, tag), cfg.max_line_tokens).0
    };
    let (train_set, val_set, test_set) = (release(0, "train"), release(1, "val"), release(2, "test"));

    let start = Instant::now();
    let checkpoint = train(&cfg, &train_set.files, &val_set.files, None)?;
    let records = predict_release(&checkpoint, &test_set.files, None)?;
    let elapsed = start.elapsed();

    let report = evaluate_release("synthetic", "bafline", &records, &test_set.files, DEFAULT_THRESHOLD, RankingOrder::FileFirst)?;
    let mut pct = defective_rank_percentiles(&records, &test_set.files)?;
    pct.sort_by(f64::total_cmp);
    let median = pct[pct.len() / 2];

    println!("best epoch           {}", checkpoint.log.best_epoch);
    println!("AUC                  {:.4}", report.auc);
    println!("BA                   {:.4}", report.ba);
    println!("MCC                  {:.4}", report.mcc);
    println!("Recall@Top20%LOC     {:.4}", report.recall_top20_loc);
    println!("Effort@Top20%Recall  {:.4}", report.effort_top20_recall);
    println!("median percentile    {median:.4}");
    println!("train + predict      {:.1}s", elapsed.as_secs_f64());
    Ok(())
}

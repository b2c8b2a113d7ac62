//! Trains a small model, then prints the line ranking of the riskiest
//! defective file next to its ground truth (`*` marks defective lines).
//!
//! ```text
//! cargo run --release --example line_ranking
//! ```

use bafline::corpus::prepare_dataset;
use bafline::model::{predict_release, train, ModelConfig};
use bafline::synth::{generate_release, SynthConfig};

fn main() -> bafline::Result<()> {
    let release = |seed, tag| {
        let cfg = SynthConfig { files: 120, seed, ..Default::default() };
        prepare_dataset(&generate_release(&cfg, tag), 75).0.files
    };
    let (train_set, val_set, test) = (release(1, "train"), release(2, "val"), release(3, "test"));
    let cfg = ModelConfig { embed_dim: 32, hidden: 32, k: 96, epochs: 6, ..Default::default() };
    let checkpoint = train(&cfg, &train_set, &val_set, None)?;
    let mut records = predict_release(&checkpoint, &test, None)?;
    records.sort_by(|a, b| b.prob.total_cmp(&a.prob));

    let truth = |id: &str| test.iter().find(|f| f.file_id == id).expect("predicted file exists");
    let (pos, top) = records
        .iter()
        .enumerate()
        .find(|(_, r)| truth(&r.file_id).file_label)
        .expect("test release has a defective file");
    let file = truth(&top.file_id);
    println!("{}  p(defective) = {:.3}  (file rank {} of {})", top.file_id, top.prob, pos + 1, records.len());
    for (rank, (ln, score)) in top.lines.iter().take(8).enumerate() {
        let line = file.lines.iter().find(|l| l.line_number == *ln).expect("scored line exists");
        let mark = if line.label { "*" } else { " " };
        println!("{:>3}. {mark} line {ln:>3}  {score:>10.4}  {}", rank + 1, line.tokens.join(" "));
    }
    Ok(())
}

//! Trains for one epoch, saves and reloads the checkpoint, and confirms the
//! reloaded model predicts identically.
//!
//! ```text
//! cargo run --release --example checkpoint_roundtrip
//! ```

use bafline::corpus::prepare_dataset;
use bafline::model::{load_checkpoint, predict_release, save_checkpoint, train, ModelConfig};
use bafline::synth::{generate_release, SynthConfig};

fn main() -> bafline::Result<()> {
    let synth = SynthConfig { files: 30, seed: 7, ..Default::default() };
    let files = prepare_dataset(&generate_release(&synth, "r"), 75).0.files;
    let cfg = ModelConfig { embed_dim: 16, hidden: 8, k: 24, epochs: 1, ..Default::default() };
    let checkpoint = train(&cfg, &files, &files, None)?;

    let path = std::env::temp_dir().join("bafline-example.ckpt");
    save_checkpoint(&checkpoint, &path)?;
    let loaded = load_checkpoint(&path)?;
    let bytes = std::fs::read(&path)?;
    println!("{} bytes, {} parameter blocks", bytes.len(), loaded.params.named().len());
    println!("bitwise identical on re-save: {}", loaded.to_bytes() == bytes);
    println!(
        "identical predictions: {}",
        predict_release(&loaded, &files, None)? == predict_release(&checkpoint, &files, None)?
    );
    std::fs::remove_file(&path)?;
    Ok(())
}

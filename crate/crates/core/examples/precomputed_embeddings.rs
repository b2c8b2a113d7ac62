//! Trains on externally produced line vectors instead of the built-in bag
//! encoder, and shows the coverage check rejecting an incomplete file.
//!
//! ```text
//! cargo run --release --example precomputed_embeddings
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use bafline::corpus::{prepare_dataset, PreparedFile};
use bafline::encoder::{EncoderKind, PrecomputedEmbeddings};
use bafline::eval::{evaluate_release, RankingOrder};
use bafline::model::{predict_release, train, ModelConfig};
use bafline::synth::{generate_release, SynthConfig};

const DIM: usize = 12;

/// Stand-in for an external encoder: noise, plus a signal on marker lines.
fn embed(files: &[PreparedFile], rng: &mut ChaCha8Rng, out: &mut PrecomputedEmbeddings) -> bafline::Result<()> {
    for f in files {
        for l in &f.lines {
            let mut v: Vec<f64> = (0..DIM).map(|_| rng.gen_range(-0.5..0.5)).collect();
            if l.tokens.iter().any(|t| t == "unsafeReleaseHook") {
                v[0] += 2.0;
            }
            out.insert(&f.file_id, l.line_number, v)?;
        }
    }
    Ok(())
}

fn main() -> bafline::Result<()> {
    let release = |seed, tag| {
        let cfg = SynthConfig { files: 60, seed, ..Default::default() };
        prepare_dataset(&generate_release(&cfg, tag), 75).0.files
    };
    let (train_set, val_set, test) = (release(10, "train"), release(11, "val"), release(12, "test"));
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut emb = PrecomputedEmbeddings::new(DIM);
    for set in [&train_set, &val_set, &test] {
        embed(set, &mut rng, &mut emb)?;
    }
    println!("{} vectors cover {} lines", emb.len(), emb.validate_coverage(train_set.iter().chain(&val_set).chain(&test))?);

    let cfg = ModelConfig { encoder: EncoderKind::Precomputed, embed_dim: DIM, hidden: 16, k: 48, epochs: 6, ..Default::default() };
    let checkpoint = train(&cfg, &train_set, &val_set, Some(&emb))?;
    let records = predict_release(&checkpoint, &test, Some(&emb))?;
    let r = evaluate_release("precomputed", "bafline", &records, &test, 0.5, RankingOrder::FileFirst)?;
    println!("AUC {:.3}  Recall@Top20%LOC {:.3}", r.auc, r.recall_top20_loc);

    let mut partial = PrecomputedEmbeddings::new(DIM);
    embed(&test[1..], &mut rng, &mut partial)?;
    match partial.validate_coverage(&test) {
        Err(e) => println!("incomplete file rejected: {e}"),
        Ok(_) => println!("unexpectedly complete"),
    }
    Ok(())
}

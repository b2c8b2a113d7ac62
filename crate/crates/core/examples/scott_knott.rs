//! Ranks four methods measured on ten tasks with Scott-Knott ESD.
//!
//! ```text
//! cargo run --example scott_knott
//! ```

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use bafline::eval::scott_knott_esd;

fn main() -> bafline::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut methods = BTreeMap::new();
    for (name, mean) in [("full", 0.79), ("no_bafn", 0.74), ("no_bigru", 0.78), ("baseline", 0.62)] {
        let values: Vec<f64> = (0..10).map(|_| mean + rng.gen_range(-0.03..0.03)).collect();
        methods.insert(name.to_string(), values);
    }
    let result = scott_knott_esd(&methods, true)?;
    for (i, cluster) in result.clusters.iter().enumerate() {
        println!("rank {}: {}", i + 1, cluster.join(", "));
    }
    println!("adjacent effect sizes: {:?}", result.effect_sizes);
    println!("log-transformed: {}", result.log_transformed);
    Ok(())
}

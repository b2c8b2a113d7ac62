//! Runs the finite-difference verification suite and prints the worst
//! relative error of each group.
//!
//! ```text
//! cargo run --release --example gradcheck
//! ```

use std::collections::BTreeMap;

use bafline::verify::{run_suite, TOLERANCE};

fn main() -> bafline::Result<()> {
    let results = run_suite(0)?;
    let mut worst: BTreeMap<&str, (f64, &str)> = BTreeMap::new();
    for r in &results {
        let e = worst.entry(r.group).or_insert((0.0, ""));
        if r.report.max_rel_error >= e.0 {
            *e = (r.report.max_rel_error, &r.name);
        }
    }
    for (group, (err, name)) in &worst {
        println!("{group:<10} worst {err:.2e}  ({name})");
    }
    let failed = results.iter().filter(|r| !r.passed()).count();
    println!("{} checks, {failed} above {TOLERANCE:e}", results.len());
    Ok(())
}

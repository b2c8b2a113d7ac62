//! Dense 64-bit matrices, a reverse-mode tape, Adam, and a finite-difference
//! gradient checker.

mod adam;
mod array;
mod gradcheck;
mod tape;

pub use adam::AdamState;
pub use array::Array2;
pub use gradcheck::{gradient_check, GradCheckReport};
pub use tape::{sigmoid, weighted_bce_value, Gradients, Tape, Var, BCE_EPS};

use rand::Rng;

/// Inverted dropout mask: kept entries are scaled by `1 / (1 - rate)`.
pub fn dropout_mask<R: Rng>(rows: usize, cols: usize, rate: f64, rng: &mut R) -> Array2 {
    let keep = 1.0 / (1.0 - rate);
    let mut mask = Array2::zeros(rows, cols);
    for x in mask.data_mut() {
        if rng.gen::<f64>() >= rate {
            *x = keep;
        }
    }
    mask
}

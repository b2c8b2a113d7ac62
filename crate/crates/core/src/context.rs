//! Bidirectional GRU producing one context vector per code line.
//!
//! Gate convention (reset applied before the recurrent product):
//!
//! ```text
//! z  = sigmoid(x·W_z + h·R_z + b_z)
//! r  = sigmoid(x·W_r + h·R_r + b_r)
//! h~ = tanh(x·W_h + (r∘h)·R_h + b_h)
//! h' = (1 - z)∘h + z∘h~
//! ```

use rand::Rng;

use crate::error::{Error, Result};
use crate::numcore::{Array2, Tape, Var};

/// Weights of one GRU direction, generic over storage (`Array2` for the
/// parameter set, `Var` once registered on a tape).
#[derive(Debug, Clone, PartialEq)]
pub struct GruWeights<T> {
    pub w_z: T,
    pub w_r: T,
    pub w_h: T,
    pub r_z: T,
    pub r_r: T,
    pub r_h: T,
    pub b_z: T,
    pub b_r: T,
    pub b_h: T,
}

/// Field names in storage order.
pub const GRU_FIELDS: [&str; 9] = ["W_z", "W_r", "W_h", "R_z", "R_r", "R_h", "b_z", "b_r", "b_h"];

impl<T> GruWeights<T> {
    pub fn to_vec(&self) -> Vec<&T> {
        vec![
            &self.w_z, &self.w_r, &self.w_h, &self.r_z, &self.r_r, &self.r_h, &self.b_z,
            &self.b_r, &self.b_h,
        ]
    }

    pub fn from_vec(mut v: Vec<T>) -> Option<Self> {
        if v.len() != 9 {
            return None;
        }
        let mut it = v.drain(..);
        let mut next = || it.next().unwrap();
        Some(GruWeights {
            w_z: next(),
            w_r: next(),
            w_h: next(),
            r_z: next(),
            r_r: next(),
            r_h: next(),
            b_z: next(),
            b_r: next(),
            b_h: next(),
        })
    }

    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> GruWeights<U> {
        GruWeights {
            w_z: f(&self.w_z),
            w_r: f(&self.w_r),
            w_h: f(&self.w_h),
            r_z: f(&self.r_z),
            r_r: f(&self.r_r),
            r_h: f(&self.r_h),
            b_z: f(&self.b_z),
            b_r: f(&self.b_r),
            b_h: f(&self.b_h),
        }
    }
}

impl GruWeights<Array2> {
    /// Input matrices uniform in ±0.08, recurrent matrices uniform in
    /// ±1/√u, zero biases.
    pub fn init<R: Rng>(input_dim: usize, hidden: usize, rng: &mut R) -> Self {
        let rec = 1.0 / (hidden as f64).sqrt();
        GruWeights {
            w_z: Array2::uniform(input_dim, hidden, 0.08, rng),
            w_r: Array2::uniform(input_dim, hidden, 0.08, rng),
            w_h: Array2::uniform(input_dim, hidden, 0.08, rng),
            r_z: Array2::uniform(hidden, hidden, rec, rng),
            r_r: Array2::uniform(hidden, hidden, rec, rng),
            r_h: Array2::uniform(hidden, hidden, rec, rng),
            b_z: Array2::zeros(1, hidden),
            b_r: Array2::zeros(1, hidden),
            b_h: Array2::zeros(1, hidden),
        }
    }

    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        GruWeights {
            w_z: Array2::zeros(input_dim, hidden),
            w_r: Array2::zeros(input_dim, hidden),
            w_h: Array2::zeros(input_dim, hidden),
            r_z: Array2::zeros(hidden, hidden),
            r_r: Array2::zeros(hidden, hidden),
            r_h: Array2::zeros(hidden, hidden),
            b_z: Array2::zeros(1, hidden),
            b_r: Array2::zeros(1, hidden),
            b_h: Array2::zeros(1, hidden),
        }
    }

    pub fn hidden(&self) -> usize {
        self.r_z.rows()
    }

    pub fn register(&self, tape: &mut Tape) -> GruWeights<Var> {
        self.map(|a| tape.leaf(a.clone()))
    }
}

fn step(
    tape: &mut Tape,
    xw: [Var; 3],
    h_prev: Var,
    w: &GruWeights<Var>,
) -> Result<Var> {
    let [xw_z, xw_r, xw_h] = xw;
    let gate = |tape: &mut Tape, xw: Var, rec: Var, b: Var| -> Result<Var> {
        let hr = tape.matmul(h_prev, rec)?;
        let s = tape.add(xw, hr)?;
        let s = tape.add(s, b)?;
        Ok(tape.sigmoid(s))
    };
    let z = gate(tape, xw_z, w.r_z, w.b_z)?;
    let r = gate(tape, xw_r, w.r_r, w.b_r)?;
    let rh = tape.mul(r, h_prev)?;
    let rhr = tape.matmul(rh, w.r_h)?;
    let cand = tape.add(xw_h, rhr)?;
    let cand = tape.add(cand, w.b_h)?;
    let cand = tape.tanh(cand);
    let keep = tape.one_minus(z);
    let old = tape.mul(keep, h_prev)?;
    let new = tape.mul(z, cand)?;
    tape.add(old, new)
}

/// One GRU step: `x` is `1 x d`, `h_prev` is `1 x u`.
pub fn gru_cell(tape: &mut Tape, x: Var, h_prev: Var, w: &GruWeights<Var>) -> Result<Var> {
    let u = tape.value(w.r_z).rows();
    if tape.value(h_prev).shape() != (1, u) {
        return Err(Error::Dimension {
            op: "gru_cell",
            left: tape.value(h_prev).shape(),
            right: (1, u),
        });
    }
    let xw = [
        tape.matmul(x, w.w_z)?,
        tape.matmul(x, w.w_r)?,
        tape.matmul(x, w.w_h)?,
    ];
    step(tape, xw, h_prev, w)
}

fn run_direction(
    tape: &mut Tape,
    lines: Var,
    w: &GruWeights<Var>,
    reverse: bool,
) -> Result<Var> {
    let n = tape.value(lines).rows();
    let u = tape.value(w.r_z).rows();
    // Input projections for all time steps at once.
    let proj = [
        tape.matmul(lines, w.w_z)?,
        tape.matmul(lines, w.w_r)?,
        tape.matmul(lines, w.w_h)?,
    ];
    let mut h = tape.leaf(Array2::zeros(1, u));
    let mut states = vec![h; n];
    let order: Vec<usize> = if reverse {
        (0..n).rev().collect()
    } else {
        (0..n).collect()
    };
    for i in order {
        let xw = [
            tape.slice_rows(proj[0], i, 1)?,
            tape.slice_rows(proj[1], i, 1)?,
            tape.slice_rows(proj[2], i, 1)?,
        ];
        h = step(tape, xw, h, w)?;
        states[i] = h;
    }
    tape.concat_rows(&states)
}

/// Runs the forward and backward GRUs over an `n x d` line matrix and
/// returns the `n x 2u` context matrix; row `i` is `[forward_i, backward_i]`.
pub fn bigru_forward(
    tape: &mut Tape,
    lines: Var,
    forward: &GruWeights<Var>,
    backward: &GruWeights<Var>,
) -> Result<Var> {
    let (n, d) = tape.value(lines).shape();
    if n == 0 {
        return Err(Error::Data("bigru_forward needs at least one line".into()));
    }
    for w in [forward, backward] {
        let wd = tape.value(w.w_z).rows();
        if wd != d {
            return Err(Error::Dimension {
                op: "bigru_forward",
                left: (n, d),
                right: tape.value(w.w_z).shape(),
            });
        }
    }
    let fwd = run_direction(tape, lines, forward, false)?;
    let bwd = run_direction(tape, lines, backward, true)?;
    tape.concat_cols(&[fwd, bwd])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::{gradient_check, sigmoid};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn zero_input_zero_state_stays_zero() {
        let mut r = rng(1);
        let w = GruWeights::init(2, 3, &mut r);
        let mut t = Tape::new();
        let wv = w.register(&mut t);
        let x = t.leaf(Array2::zeros(1, 2));
        let h0 = t.leaf(Array2::zeros(1, 3));
        let h = gru_cell(&mut t, x, h0, &wv).unwrap();
        assert_eq!(t.value(h), &Array2::zeros(1, 3));
    }

    #[test]
    fn saturated_update_gate_passes_candidate() {
        let mut w = GruWeights::zeros(1, 1);
        w.b_z = Array2::scalar(50.0);
        w.b_h = Array2::scalar(0.3);
        let mut t = Tape::new();
        let wv = w.register(&mut t);
        let x = t.leaf(Array2::scalar(0.7));
        let h0 = t.leaf(Array2::scalar(-0.4));
        let h = gru_cell(&mut t, x, h0, &wv).unwrap();
        assert!((t.scalar(h) - 0.3f64.tanh()).abs() < 1e-12);
    }

    /// Scalar-loop evaluation of one GRU step, independent of the tape.
    fn cell_oracle(x: &[f64], h: &[f64], w: &GruWeights<Array2>) -> Vec<f64> {
        let u = h.len();
        let lin = |m: &Array2, v: &[f64], j: usize| -> f64 { (0..v.len()).map(|i| v[i] * m.get(i, j)).sum() };
        let z: Vec<f64> = (0..u).map(|j| sigmoid(lin(&w.w_z, x, j) + lin(&w.r_z, h, j) + w.b_z.get(0, j))).collect();
        let r: Vec<f64> = (0..u).map(|j| sigmoid(lin(&w.w_r, x, j) + lin(&w.r_r, h, j) + w.b_r.get(0, j))).collect();
        let rh: Vec<f64> = (0..u).map(|j| r[j] * h[j]).collect();
        let c: Vec<f64> = (0..u).map(|j| (lin(&w.w_h, x, j) + lin(&w.r_h, &rh, j) + w.b_h.get(0, j)).tanh()).collect();
        (0..u).map(|j| (1.0 - z[j]) * h[j] + z[j] * c[j]).collect()
    }

    #[test]
    fn cell_matches_scalar_oracle() {
        let mut r = rng(7);
        let mut w = GruWeights::init(2, 3, &mut r);
        w.b_z = Array2::uniform(1, 3, 0.5, &mut r);
        w.b_r = Array2::uniform(1, 3, 0.5, &mut r);
        w.b_h = Array2::uniform(1, 3, 0.5, &mut r);
        let x = Array2::uniform(1, 2, 1.0, &mut r);
        let h = Array2::uniform(1, 3, 1.0, &mut r);
        let mut t = Tape::new();
        let wv = w.register(&mut t);
        let (xv, hv) = (t.leaf(x.clone()), t.leaf(h.clone()));
        let out = gru_cell(&mut t, xv, hv, &wv).unwrap();
        let expect = cell_oracle(x.data(), h.data(), &w);
        for (a, b) in t.value(out).data().iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    fn run_bigru(seq: &Array2, f: &GruWeights<Array2>, b: &GruWeights<Array2>) -> Array2 {
        let mut t = Tape::new();
        let (fv, bv) = (f.register(&mut t), b.register(&mut t));
        let x = t.leaf(seq.clone());
        let hc = bigru_forward(&mut t, x, &fv, &bv).unwrap();
        t.value(hc).clone()
    }

    #[test]
    fn single_line_is_one_step_each_way() {
        let mut r = rng(3);
        let (f, b) = (GruWeights::init(4, 5, &mut r), GruWeights::init(4, 5, &mut r));
        let x = Array2::uniform(1, 4, 1.0, &mut r);
        let hc = run_bigru(&x, &f, &b);
        assert_eq!(hc.shape(), (1, 10));
        let zero = vec![0.0; 5];
        assert_eq!(&hc.row(0)[..5], cell_oracle(x.data(), &zero, &f).as_slice());
        assert_eq!(&hc.row(0)[5..], cell_oracle(x.data(), &zero, &b).as_slice());
    }

    #[test]
    fn default_width_shape() {
        let mut r = rng(4);
        let (f, b) = (GruWeights::init(8, 64, &mut r), GruWeights::init(8, 64, &mut r));
        let hc = run_bigru(&Array2::uniform(3, 8, 1.0, &mut r), &f, &b);
        assert_eq!(hc.shape(), (3, 128));
    }

    #[test]
    fn reversal_swaps_directions() {
        let mut r = rng(5);
        let (f, b) = (GruWeights::init(3, 4, &mut r), GruWeights::init(3, 4, &mut r));
        let seq = Array2::uniform(5, 3, 1.0, &mut r);
        let rows: Vec<Vec<f64>> = (0..5).rev().map(|i| seq.row(i).to_vec()).collect();
        let rev = Array2::from_rows(&rows).unwrap();
        // Swap the weights too, so the reversed run's forward half uses the
        // original backward weights.
        let orig = run_bigru(&seq, &f, &b);
        let flipped = run_bigru(&rev, &b, &f);
        for i in 0..5 {
            assert_eq!(&flipped.row(i)[..4], &orig.row(4 - i)[4..]);
        }
    }

    #[test]
    fn zero_network_gives_zero_context() {
        let z = GruWeights::zeros(3, 4);
        let hc = run_bigru(&Array2::zeros(6, 3), &z, &z);
        assert_eq!(hc, Array2::zeros(6, 8));
    }

    #[test]
    fn empty_sequence_errors() {
        let z = GruWeights::zeros(3, 4);
        let mut t = Tape::new();
        let zv = z.register(&mut t);
        let x = t.leaf(Array2::zeros(0, 3));
        assert!(bigru_forward(&mut t, x, &zv, &zv).is_err());
    }

    #[test]
    fn four_step_gradient() {
        let mut r = rng(9);
        let f = GruWeights::init(2, 3, &mut r);
        let b = GruWeights::init(2, 3, &mut r);
        let x = Array2::uniform(4, 2, 1.0, &mut r);
        let mut params: Vec<Array2> = vec![x];
        params.extend(f.to_vec().into_iter().cloned());
        params.extend(b.to_vec().into_iter().cloned());
        let report = gradient_check(
            |t, v| {
                let fw = GruWeights::from_vec(v[1..10].to_vec()).unwrap();
                let bw = GruWeights::from_vec(v[10..19].to_vec()).unwrap();
                let hc = bigru_forward(t, v[0], &fw, &bw)?;
                let sq = t.mul(hc, hc)?;
                Ok(t.sum(sq))
            },
            &params,
            1e-5,
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-5, "{report:?}");
    }
}

//! Bilinear attention fusion of line embeddings with line contexts.
//!
//! Rows are lines throughout. For a head with weight vector `q`:
//!
//! ```text
//! P   = relu(H_l · U)            θ x k
//! Q   = relu(H_c · M)            θ x k
//! A   = (P ∘ (1·q)) · Qᵀ         θ x θ
//! f'' = colsum(P ∘ (A · Q))      1 x k   (f''[c] = Σ_ij P_ic A_ij Q_jc)
//! f'  = SumPool(f'', s)          1 x k/s
//! ```
//!
//! `U` and `M` are shared across heads and between interaction and pooling;
//! each extra head costs one `q`. The final feature is the elementwise sum of
//! the per-head pooled vectors, and line risk is the diagonal of the
//! head-averaged map.

use std::cmp::Ordering;

use rand::Rng;

use crate::error::{Error, Result};
use crate::numcore::{Array2, Tape, Var};

/// BAFN weights, generic over storage like [`crate::context::GruWeights`].
#[derive(Debug, Clone, PartialEq)]
pub struct BafnWeights<T> {
    /// `d x k`, projects line embeddings.
    pub u: T,
    /// `d' x k`, projects line contexts.
    pub m: T,
    /// One `1 x k` vector per head.
    pub q: Vec<T>,
}

impl BafnWeights<Array2> {
    /// Xavier-uniform `U` and `M`; `q` uniform in `[0, 2/√k]`.
    pub fn init<R: Rng>(line_dim: usize, context_dim: usize, k: usize, heads: usize, rng: &mut R) -> Self {
        let xavier = |fan_in: usize, fan_out: usize| (6.0 / (fan_in + fan_out) as f64).sqrt();
        let u = Array2::uniform(line_dim, k, xavier(line_dim, k), rng);
        let m = Array2::uniform(context_dim, k, xavier(context_dim, k), rng);
        let qb = 1.0 / (k as f64).sqrt();
        let q = (0..heads)
            .map(|_| Array2::uniform(1, k, qb, rng).map(|x| x + qb))
            .collect();
        BafnWeights { u, m, q }
    }

    pub fn register(&self, tape: &mut Tape) -> BafnWeights<Var> {
        BafnWeights {
            u: tape.leaf(self.u.clone()),
            m: tape.leaf(self.m.clone()),
            q: self.q.iter().map(|q| tape.leaf(q.clone())).collect(),
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.u.len() + self.m.len() + self.q.iter().map(Array2::len).sum::<usize>()
    }
}

/// Shared projections of one file.
#[derive(Debug, Clone, Copy)]
pub struct Projections {
    /// `relu(H_l U)`, masked rows zeroed.
    pub p: Var,
    /// `relu(H_c M)`, masked rows zeroed.
    pub q: Var,
    /// `H_l U` before the activation, masked rows zeroed.
    pub p_raw: Var,
    /// `H_c M` before the activation, masked rows zeroed.
    pub q_raw: Var,
}

fn check_rows(tape: &Tape, h_l: Var, h_c: Var, mask: Option<&[bool]>) -> Result<()> {
    let (l, c) = (tape.value(h_l), tape.value(h_c));
    if l.rows() != c.rows() {
        return Err(Error::Dimension {
            op: "bilinear_interaction",
            left: l.shape(),
            right: c.shape(),
        });
    }
    if let Some(m) = mask {
        if m.len() != l.rows() {
            return Err(Error::Dimension {
                op: "bilinear_interaction mask",
                left: l.shape(),
                right: (m.len(), 1),
            });
        }
    }
    Ok(())
}

/// Computes `P` and `Q` (and their pre-activation forms) once per file.
pub fn project(
    tape: &mut Tape,
    h_l: Var,
    h_c: Var,
    w: &BafnWeights<Var>,
    mask: Option<&[bool]>,
) -> Result<Projections> {
    check_rows(tape, h_l, h_c, mask)?;
    let mut p_raw = tape.matmul(h_l, w.u)?;
    let mut q_raw = tape.matmul(h_c, w.m)?;
    if let Some(m) = mask.filter(|m| m.iter().any(|k| !k)) {
        p_raw = tape.mask_rows(p_raw, m)?;
        q_raw = tape.mask_rows(q_raw, m)?;
    }
    let p = tape.relu(p_raw);
    let q = tape.relu(q_raw);
    Ok(Projections { p, q, p_raw, q_raw })
}

/// Interaction map of one head from precomputed projections.
pub fn interaction_map(tape: &mut Tape, proj: &Projections, q_head: Var) -> Result<Var> {
    let n = tape.value(proj.p).rows();
    let k = tape.value(proj.p).cols();
    if tape.value(q_head).shape() != (1, k) {
        return Err(Error::Dimension {
            op: "interaction_map",
            left: (n, k),
            right: tape.value(q_head).shape(),
        });
    }
    let qb = tape.broadcast_rows(q_head, n)?;
    let weighted = tape.mul(proj.p, qb)?;
    let qt = tape.transpose(proj.q);
    tape.matmul(weighted, qt)
}

/// `A = (relu(H_l U) ∘ (1·q)) · relu(H_c M)ᵀ` for head `head`, with masked
/// rows and columns zero.
pub fn bilinear_interaction(
    tape: &mut Tape,
    h_l: Var,
    h_c: Var,
    w: &BafnWeights<Var>,
    head: usize,
    mask: Option<&[bool]>,
) -> Result<Var> {
    let q_head = *w
        .q
        .get(head)
        .ok_or_else(|| Error::Config(format!("head {head} out of range ({} heads)", w.q.len())))?;
    let proj = project(tape, h_l, h_c, w, mask)?;
    interaction_map(tape, &proj, q_head)
}

/// Per-channel bilinear form through `A`: `f''[c] = Σ_ij left_ic A_ij right_jc`.
///
/// With `activated` the shared ReLU projections are used on both sides;
/// otherwise the pre-activation projections are.
pub fn bilinear_pooling(tape: &mut Tape, proj: &Projections, a: Var, activated: bool) -> Result<Var> {
    let (left, right) = if activated {
        (proj.p, proj.q)
    } else {
        (proj.p_raw, proj.q_raw)
    };
    let ar = tape.matmul(a, right)?;
    let prod = tape.mul(left, ar)?;
    Ok(tape.sum_rows(prod))
}

/// Elementwise sum of the two pooled head vectors.
pub fn fuse_heads(tape: &mut Tape, first: Var, second: Var) -> Result<Var> {
    tape.add(first, second)
}

/// Output of the fusion block for one file.
#[derive(Debug, Clone)]
pub struct BafnOutput {
    /// Fused `1 x k/s` feature.
    pub feature: Var,
    /// One `θ x θ` interaction map per head.
    pub maps: Vec<Var>,
}

/// Runs every head, pools, and fuses.
pub fn bafn_forward(
    tape: &mut Tape,
    h_l: Var,
    h_c: Var,
    w: &BafnWeights<Var>,
    stride: usize,
    activated_pooling: bool,
    mask: Option<&[bool]>,
) -> Result<BafnOutput> {
    if w.q.is_empty() {
        return Err(Error::Config("BAFN needs at least one head".into()));
    }
    let proj = project(tape, h_l, h_c, w, mask)?;
    let mut maps = Vec::with_capacity(w.q.len());
    let mut feature: Option<Var> = None;
    for &q_head in &w.q {
        let a = interaction_map(tape, &proj, q_head)?;
        let pooled = bilinear_pooling(tape, &proj, a, activated_pooling)?;
        let pooled = tape.sum_pool_1d(pooled, stride)?;
        feature = Some(match feature {
            None => pooled,
            Some(acc) => fuse_heads(tape, acc, pooled)?,
        });
        maps.push(a);
    }
    Ok(BafnOutput {
        feature: feature.expect("at least one head"),
        maps,
    })
}

/// Averages per-head maps into a single map.
pub fn consolidate_heads(maps: &[&Array2]) -> Result<Array2> {
    let first = maps
        .first()
        .ok_or_else(|| Error::Data("no attention maps to consolidate".into()))?;
    let mut out = (*first).clone();
    for m in &maps[1..] {
        if m.shape() != out.shape() {
            return Err(Error::Dimension {
                op: "consolidate_heads",
                left: out.shape(),
                right: m.shape(),
            });
        }
        out.add_assign(m);
    }
    out.scale_assign(1.0 / maps.len() as f64);
    Ok(out)
}

/// Orders `(line_number, score)` pairs by descending score, ties by
/// ascending line number.
pub fn rank_lines(scored: &mut [(u32, f64)]) {
    scored.sort_by(|a, b| match b.1.total_cmp(&a.1) {
        Ordering::Equal => a.0.cmp(&b.0),
        o => o,
    });
}

/// Diagonal risk scores of a consolidated map, masked lines excluded,
/// ranked highest first.
pub fn line_scores(map: &Array2, mask: Option<&[bool]>, line_numbers: &[u32]) -> Result<Vec<(u32, f64)>> {
    if map.rows() != map.cols() || map.rows() != line_numbers.len() {
        return Err(Error::Dimension {
            op: "line_scores",
            left: map.shape(),
            right: (line_numbers.len(), line_numbers.len()),
        });
    }
    let mut scored: Vec<(u32, f64)> = line_numbers
        .iter()
        .enumerate()
        .filter(|(i, _)| mask.is_none_or(|m| m[*i]))
        .map(|(i, &ln)| (ln, map.get(i, i)))
        .collect();
    rank_lines(&mut scored);
    Ok(scored)
}

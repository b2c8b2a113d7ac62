//! Finite-difference verification of every differentiable building block.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bafn::{bafn_forward, BafnWeights};
use crate::context::{bigru_forward, GruWeights};
use crate::error::Result;
use crate::model::{forward_graph, FileInput, LineInput, ModelConfig, ParamSet};
use crate::numcore::{gradient_check, Array2, GradCheckReport, Tape, Var};

/// Finite-difference step.
pub const STEP: f64 = 1e-6;
/// Largest relative error accepted by the suite.
pub const TOLERANCE: f64 = 1e-4;

/// One checked graph.
#[derive(Debug, Clone)]
pub struct CheckResult {
    pub group: &'static str,
    pub name: String,
    pub report: GradCheckReport,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.report.max_rel_error < TOLERANCE
    }
}

/// Values in `±[0.1, 1]`, away from the ReLU kink.
fn away_from_zero<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Array2 {
    let data = (0..rows * cols)
        .map(|_| {
            let m = rng.gen_range(0.1..1.0);
            if rng.gen_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Array2::from_vec(rows, cols, data).expect("finite")
}

/// Reduces `out` to a scalar through a fixed random weighting so that every
/// output entry contributes a distinct coefficient.
fn weighted_sum(tape: &mut Tape, out: Var, weights: &Array2) -> Result<Var> {
    let prod = tape.mul_const(out, weights.clone())?;
    Ok(tape.sum(prod))
}

type Graph = Box<dyn Fn(&mut Tape, &[Var]) -> Result<Var>>;

fn primitive<R: Rng>(name: &str, rng: &mut R) -> (Graph, Vec<Array2>) {
    let a = away_from_zero(3, 4, rng);
    let b = away_from_zero(3, 4, rng);
    let sq = away_from_zero(3, 3, rng);
    let row = away_from_zero(1, 4, rng);
    let w34 = away_from_zero(3, 4, rng);
    let w33 = away_from_zero(3, 3, rng);
    let w14 = away_from_zero(1, 4, rng);
    let w13 = away_from_zero(1, 3, rng);
    let w64 = away_from_zero(6, 4, rng);
    let w38 = away_from_zero(3, 8, rng);
    let w24 = away_from_zero(2, 4, rng);
    let w32 = away_from_zero(3, 2, rng);
    let w12 = away_from_zero(1, 2, rng);
    let w43 = away_from_zero(4, 3, rng);
    let b43 = away_from_zero(4, 3, rng);
    let c = away_from_zero(3, 4, rng);
    let c2 = away_from_zero(3, 4, rng);

    let unary = |f: fn(&mut Tape, Var) -> Result<Var>, w: Array2| -> Graph {
        Box::new(move |t: &mut Tape, v: &[Var]| {
            let o = f(t, v[0])?;
            weighted_sum(t, o, &w)
        })
    };
    match name {
        "matmul" => (
            Box::new(move |t, v| {
                let o = t.matmul(v[0], v[1])?;
                weighted_sum(t, o, &w33)
            }),
            vec![a, b43],
        ),
        "transpose" => (unary(|t, x| Ok(t.transpose(x)), w43), vec![a]),
        "add" => (
            Box::new(move |t, v| {
                let o = t.add(v[0], v[1])?;
                weighted_sum(t, o, &w34)
            }),
            vec![a, b],
        ),
        "sub" => (
            Box::new(move |t, v| {
                let o = t.sub(v[0], v[1])?;
                weighted_sum(t, o, &w34)
            }),
            vec![a, b],
        ),
        "mul" => (
            Box::new(move |t, v| {
                let o = t.mul(v[0], v[1])?;
                weighted_sum(t, o, &w34)
            }),
            vec![a, b],
        ),
        "mul_const" => (
            Box::new(move |t, v| {
                let o = t.mul_const(v[0], c.clone())?;
                weighted_sum(t, o, &w34)
            }),
            vec![a],
        ),
        "scale" => (unary(|t, x| Ok(t.scale(x, -1.7)), w34), vec![a]),
        "add_scalar" => (unary(|t, x| Ok(t.add_scalar(x, 0.3)), w34), vec![a]),
        "one_minus" => (unary(|t, x| Ok(t.one_minus(x)), w34), vec![a]),
        "add_row" => (
            Box::new(move |t, v| {
                let o = t.add_row(v[0], v[1])?;
                weighted_sum(t, o, &w34)
            }),
            vec![a, row],
        ),
        "broadcast_rows" => (unary(|t, x| t.broadcast_rows(x, 3), w34), vec![row]),
        "relu" => (unary(|t, x| Ok(t.relu(x)), w34), vec![a]),
        "sigmoid" => (unary(|t, x| Ok(t.sigmoid(x)), w34), vec![a]),
        "tanh" => (unary(|t, x| Ok(t.tanh(x)), w34), vec![a]),
        "concat_cols" => (
            Box::new(move |t, v| {
                let o = t.concat_cols(&[v[0], v[1]])?;
                weighted_sum(t, o, &w38)
            }),
            vec![a, b],
        ),
        "concat_rows" => (
            Box::new(move |t, v| {
                let o = t.concat_rows(&[v[0], v[1]])?;
                weighted_sum(t, o, &w64)
            }),
            vec![a, b],
        ),
        "slice_rows" => (unary(|t, x| t.slice_rows(x, 1, 2), w24), vec![a]),
        "slice_cols" => (unary(|t, x| t.slice_cols(x, 1, 2), w32), vec![a]),
        "diag" => (unary(|t, x| t.diag(x), w13), vec![sq]),
        "mask_rows" => (unary(|t, x| t.mask_rows(x, &[true, false, true]), w34), vec![a]),
        "mask_cols" => (unary(|t, x| t.mask_cols(x, &[false, true, true, false]), w34), vec![a]),
        "sum" => (
            Box::new(|t, v| {
                let s = t.sum(v[0]);
                Ok(t.scale(s, 0.7))
            }),
            vec![a],
        ),
        "mean" => (
            Box::new(|t, v| {
                let s = t.mean(v[0]);
                Ok(t.scale(s, 0.7))
            }),
            vec![a],
        ),
        "sum_rows" => (unary(|t, x| Ok(t.sum_rows(x)), w14), vec![a]),
        "mean_rows" => (unary(|t, x| Ok(t.mean_rows(x)), w14), vec![a]),
        "sum_pool_1d" => (unary(|t, x| t.sum_pool_1d(x, 2), w12), vec![row]),
        "layer_norm" => (unary(|t, x| Ok(t.layer_norm(x, 1e-5)), w34), vec![a]),
        "weighted_bce" => (
            Box::new(|t, v| {
                let s = t.sum(v[0]);
                let p = t.sigmoid(s);
                t.weighted_bce(p, 1.0, 3.0)
            }),
            vec![row],
        ),
        "embed_mean" => (
            Box::new(move |t, v| {
                let o = t.embed_mean(v[0], vec![vec![0, 2], vec![1], vec![3, 3, 0]])?;
                weighted_sum(t, o, &w33)
            }),
            vec![away_from_zero(4, 3, rng)],
        ),
        "matmul_chain" => (
            Box::new(move |t, v| {
                let ab = t.matmul(v[0], v[1])?;
                let abt = t.transpose(ab);
                let o = t.matmul(abt, v[0])?;
                weighted_sum(t, o, &c2)
            }),
            vec![a, away_from_zero(4, 3, rng)],
        ),
        other => panic!("unknown primitive {other}"),
    }
}

/// Names of the primitive graphs in the suite.
pub const PRIMITIVES: [&str; 30] = [
    "matmul",
    "transpose",
    "add",
    "sub",
    "mul",
    "mul_const",
    "scale",
    "add_scalar",
    "one_minus",
    "add_row",
    "broadcast_rows",
    "relu",
    "sigmoid",
    "tanh",
    "concat_cols",
    "concat_rows",
    "slice_rows",
    "slice_cols",
    "diag",
    "mask_rows",
    "mask_cols",
    "sum",
    "mean",
    "sum_rows",
    "mean_rows",
    "sum_pool_1d",
    "layer_norm",
    "weighted_bce",
    "embed_mean",
    "matmul_chain",
];

pub fn check_primitives(seed: u64) -> Result<Vec<CheckResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    PRIMITIVES
        .iter()
        .map(|&name| {
            let (graph, params) = primitive(name, &mut rng);
            Ok(CheckResult {
                group: "primitive",
                name: name.to_string(),
                report: gradient_check(graph, &params, STEP)?,
            })
        })
        .collect()
}

/// Bi-GRU over four time steps.
pub fn check_bigru(seed: u64) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (d, u, steps) = (3, 2, 4);
    let fwd = GruWeights::init(d, u, &mut rng);
    let bwd = GruWeights::init(d, u, &mut rng);
    let x = away_from_zero(steps, d, &mut rng);
    let w = away_from_zero(steps, 2 * u, &mut rng);
    // Non-zero biases so their gradients are exercised away from init.
    let fwd = fwd.map(|a| a.map(|v| v + 0.05));
    let bwd = bwd.map(|a| a.map(|v| v - 0.05));
    let mut params = vec![x];
    params.extend(fwd.to_vec().into_iter().cloned());
    params.extend(bwd.to_vec().into_iter().cloned());
    let graph = move |t: &mut Tape, v: &[Var]| {
        let f = GruWeights::from_vec(v[1..10].to_vec()).expect("nine blocks");
        let b = GruWeights::from_vec(v[10..19].to_vec()).expect("nine blocks");
        let h = bigru_forward(t, v[0], &f, &b)?;
        weighted_sum(t, h, &w)
    };
    Ok(CheckResult {
        group: "bigru",
        name: format!("{steps}-step Bi-GRU"),
        report: gradient_check(graph, &params, STEP)?,
    })
}

/// Both fusion heads with one masked line, for each pooling variant.
pub fn check_bafn(seed: u64) -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    for activated in [true, false] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, d, dc, k) = (4, 3, 4, 6);
        let w = BafnWeights::init(d, dc, k, 2, &mut rng);
        let h_l = away_from_zero(n, d, &mut rng);
        let h_c = away_from_zero(n, dc, &mut rng);
        let coef = away_from_zero(1, k / 2, &mut rng);
        let mut params = vec![h_l, h_c, w.u.clone(), w.m.clone()];
        params.extend(w.q.iter().cloned());
        let graph = move |t: &mut Tape, v: &[Var]| {
            let weights = BafnWeights {
                u: v[2],
                m: v[3],
                q: vec![v[4], v[5]],
            };
            let mask = [true, true, false, true];
            let o = bafn_forward(t, v[0], v[1], &weights, 2, activated, Some(&mask))?;
            let f = weighted_sum(t, o.feature, &coef)?;
            let a0 = t.sum(o.maps[0]);
            let a1 = t.sum(o.maps[1]);
            let maps = t.add(a0, a1)?;
            let maps = t.scale(maps, 0.1);
            t.add(f, maps)
        };
        out.push(CheckResult {
            group: "bafn",
            name: format!("two heads, masked, pooling_activation={activated}"),
            report: gradient_check(graph, &params, STEP)?,
        });
    }
    Ok(out)
}

/// Weighted BCE of the full model on a three-line file, for every
/// architecture variant.
pub fn check_full_model(seed: u64) -> Result<Vec<CheckResult>> {
    let base = ModelConfig {
        embed_dim: 4,
        hidden: 3,
        k: 6,
        stride: 3,
        dropout: 0.0,
        ..Default::default()
    };
    let variants = [
        ("full model", base.clone()),
        ("without layer norm", ModelConfig { layer_norm: false, ..base.clone() }),
        ("no_bigru", ModelConfig { no_bigru: true, hidden: 2, ..base.clone() }),
        ("no_bafn", ModelConfig { no_bafn: true, ..base.clone() }),
    ];
    let input = FileInput {
        file_id: "three-lines".into(),
        label: true,
        line_numbers: vec![1, 2, 4],
        lines: LineInput::Tokens(vec![vec![1, 2], vec![3], vec![0, 4, 2]]),
        truncated: 0,
    };
    let mut out = Vec::new();
    for (name, cfg) in variants {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::init(&cfg, 5, &mut rng);
        params.w0 = away_from_zero(params.w0.rows(), 1, &mut rng);
        let layout = params.clone();
        let flat: Vec<Array2> = params.values().into_iter().cloned().collect();
        let cfg2 = cfg.clone();
        let input = input.clone();
        let graph = move |t: &mut Tape, v: &[Var]| {
            let pv = layout.with_values(v.to_vec())?;
            let g = forward_graph::<ChaCha8Rng>(t, &pv, &cfg2, &input, None)?;
            t.weighted_bce(g.prob, 1.0, 2.5)
        };
        out.push(CheckResult {
            group: "model",
            name: name.to_string(),
            report: gradient_check(graph, &flat, STEP)?,
        });
    }
    Ok(out)
}

/// The whole suite, in a fixed order.
pub fn run_suite(seed: u64) -> Result<Vec<CheckResult>> {
    let mut all = check_primitives(seed)?;
    all.push(check_bigru(seed)?);
    all.extend(check_bafn(seed)?);
    all.extend(check_full_model(seed)?);
    Ok(all)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn primitives_pass() {
        for r in check_primitives(11).unwrap() {
            assert!(r.passed(), "{}: {:?}", r.name, r.report);
            assert!(r.report.checked > 0);
        }
    }

    #[test]
    fn composite_graphs_pass() {
        let mut all = vec![check_bigru(5).unwrap()];
        all.extend(check_bafn(5).unwrap());
        all.extend(check_full_model(5).unwrap());
        for r in &all {
            println!("{} / {}: {:.3e} over {}", r.group, r.name, r.report.max_rel_error, r.report.checked);
            assert!(r.passed(), "{}: {:?}", r.name, r.report);
        }
    }
}

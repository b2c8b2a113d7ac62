use rand::Rng;

use crate::bafn::{bafn_forward, consolidate_heads, line_scores, rank_lines};
use crate::context::bigru_forward;
use crate::corpus::PreparedFile;
use crate::encoder::{PrecomputedEmbeddings, Vocab};
use crate::error::{Error, Result};
use crate::numcore::{dropout_mask, Array2, Tape, Var};

use super::config::ModelConfig;
use super::params::ParamSet;

const LAYER_NORM_EPS: f64 = 1e-5;

/// Line inputs of one file after encoding lookups.
#[derive(Debug, Clone, PartialEq)]
pub enum LineInput {
    /// Vocabulary ids per line (bag encoder).
    Tokens(Vec<Vec<usize>>),
    /// Fixed `n x d` line vectors (precomputed encoder).
    Vectors(Array2),
}

/// A file ready for the model.
#[derive(Debug, Clone, PartialEq)]
pub struct FileInput {
    pub file_id: String,
    pub label: bool,
    pub line_numbers: Vec<u32>,
    pub lines: LineInput,
    /// Lines dropped by the `max_lines` cap.
    pub truncated: usize,
}

/// Where line vectors come from.
#[derive(Debug, Clone, Copy)]
pub enum LineSource<'a> {
    Vocab(&'a Vocab),
    Precomputed(&'a PrecomputedEmbeddings),
}

impl FileInput {
    pub fn len(&self) -> usize {
        self.line_numbers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.line_numbers.is_empty()
    }

    /// Encodes a prepared file; `max_lines == 0` keeps every line.
    pub fn from_prepared(file: &PreparedFile, source: LineSource<'_>, max_lines: usize) -> Result<Self> {
        let keep = if max_lines == 0 {
            file.lines.len()
        } else {
            file.lines.len().min(max_lines)
        };
        let kept = &file.lines[..keep];
        let lines = match source {
            LineSource::Vocab(v) => LineInput::Tokens(kept.iter().map(|l| v.encode(&l.tokens)).collect()),
            LineSource::Precomputed(p) => {
                let mut data = Vec::with_capacity(keep * p.dim());
                for l in kept {
                    data.extend_from_slice(p.get(&file.file_id, l.line_number)?);
                }
                LineInput::Vectors(Array2::from_vec(keep, p.dim(), data)?)
            }
        };
        Ok(FileInput {
            file_id: file.file_id.clone(),
            label: file.file_label,
            line_numbers: kept.iter().map(|l| l.line_number).collect(),
            lines,
            truncated: file.lines.len() - keep,
        })
    }
}

/// Nodes of one forward pass.
#[derive(Debug)]
pub struct ForwardPass {
    pub tape: Tape,
    pub params: ParamSet<Var>,
    pub prob: Var,
    pub context: Var,
    /// Per-head interaction maps (empty with `no_bafn`).
    pub maps: Vec<Var>,
}

impl ForwardPass {
    pub fn probability(&self) -> f64 {
        self.tape.scalar(self.prob)
    }

    /// Ranked `(line_number, score)`; diagonal of the head-averaged map, or
    /// the L2 norm of each context row with `no_bafn`.
    pub fn line_scores(&self, line_numbers: &[u32]) -> Result<Vec<(u32, f64)>> {
        if self.maps.is_empty() {
            let ctx = self.tape.value(self.context);
            let mut scored: Vec<(u32, f64)> = line_numbers
                .iter()
                .enumerate()
                .map(|(i, &ln)| (ln, ctx.row(i).iter().map(|x| x * x).sum::<f64>().sqrt()))
                .collect();
            rank_lines(&mut scored);
            return Ok(scored);
        }
        let maps: Vec<&Array2> = self.maps.iter().map(|&m| self.tape.value(m)).collect();
        let single = consolidate_heads(&maps)?;
        line_scores(&single, None, line_numbers)
    }
}

/// Runs encoder, context, fusion, and prediction layer on one file.
/// Dropout on the fused feature is active only when `dropout_rng` is given.
pub fn forward_file<R: Rng>(
    params: &ParamSet<Array2>,
    cfg: &ModelConfig,
    input: &FileInput,
    dropout_rng: Option<&mut R>,
) -> Result<ForwardPass> {
    let mut tape = Tape::new();
    let pv = params.register(&mut tape);
    let out = forward_graph(&mut tape, &pv, cfg, input, dropout_rng)?;
    Ok(ForwardPass {
        tape,
        params: pv,
        prob: out.prob,
        context: out.context,
        maps: out.maps,
    })
}

/// Output nodes of [`forward_graph`].
#[derive(Debug, Clone)]
pub struct GraphOutput {
    pub prob: Var,
    pub context: Var,
    pub maps: Vec<Var>,
}

/// Builds the forward graph on `tape` from already registered parameters.
pub fn forward_graph<R: Rng>(
    tape: &mut Tape,
    pv: &ParamSet<Var>,
    cfg: &ModelConfig,
    input: &FileInput,
    dropout_rng: Option<&mut R>,
) -> Result<GraphOutput> {
    if input.is_empty() {
        return Err(Error::Data(format!("file `{}` has no lines", input.file_id)));
    }
    let h_l = match (&input.lines, pv.embedding) {
        (LineInput::Tokens(ids), Some(table)) => tape.embed_mean(table, ids.clone())?,
        (LineInput::Vectors(v), None) => {
            if v.cols() != cfg.embed_dim {
                return Err(Error::Config(format!(
                    "line vectors are {} wide but the model expects {}",
                    v.cols(),
                    cfg.embed_dim
                )));
            }
            tape.leaf(v.clone())
        }
        _ => {
            return Err(Error::Config(
                "line input kind does not match the model's encoder".into(),
            ))
        }
    };

    let mut h_c = match (&pv.gru, pv.bypass) {
        (Some((fwd, bwd)), _) => bigru_forward(tape, h_l, fwd, bwd)?,
        (None, Some(bypass)) => tape.matmul(h_l, bypass)?,
        (None, None) => return Err(Error::Config("model has neither GRU nor bypass".into())),
    };
    if cfg.layer_norm {
        h_c = tape.layer_norm(h_c, LAYER_NORM_EPS);
    }

    let (mut feature, maps) = match (&pv.bafn, pv.pool_proj) {
        (Some(w), _) => {
            let out = bafn_forward(tape, h_l, h_c, w, cfg.stride, cfg.pooling_activation, None)?;
            (out.feature, out.maps)
        }
        (None, Some(proj)) => {
            let pooled = tape.mean_rows(h_c);
            (tape.matmul(pooled, proj)?, Vec::new())
        }
        (None, None) => return Err(Error::Config("model has neither BAFN nor pooling map".into())),
    };

    if let Some(rng) = dropout_rng {
        if cfg.dropout > 0.0 {
            let v = tape.value(feature);
            let mask = dropout_mask(v.rows(), v.cols(), cfg.dropout, rng);
            feature = tape.mul_const(feature, mask)?;
        }
    }

    let logit = tape.matmul(feature, pv.w0)?;
    let logit = tape.add(logit, pv.b0)?;
    let prob = tape.sigmoid(logit);
    Ok(GraphOutput {
        prob,
        context: h_c,
        maps,
    })
}

use std::io::{BufRead, Write};

use log::warn;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::PreparedFile;
use crate::encoder::{EncoderKind, PrecomputedEmbeddings};
use crate::error::{Error, Result};

use super::checkpoint::ModelCheckpoint;
use super::forward::{forward_file, FileInput, LineSource};

/// Model output for one file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub file_id: String,
    pub prob: f64,
    /// `(line_number, score)`, ranked most risky first.
    pub lines: Vec<(u32, f64)>,
}

/// Predictions for every non-empty file of a release, in input order.
/// Dropout is off, so the result is deterministic.
pub fn predict_release(
    checkpoint: &ModelCheckpoint,
    files: &[PreparedFile],
    precomputed: Option<&PrecomputedEmbeddings>,
) -> Result<Vec<PredictionRecord>> {
    let cfg = &checkpoint.config;
    let source = match (cfg.encoder, &checkpoint.vocab, precomputed) {
        (EncoderKind::Bag, Some(v), _) => LineSource::Vocab(v),
        (EncoderKind::Bag, None, _) => {
            return Err(Error::Checkpoint("bag-encoder checkpoint carries no vocabulary".into()))
        }
        (EncoderKind::Precomputed, _, Some(p)) => {
            if p.dim() != cfg.embed_dim {
                return Err(Error::Config(format!(
                    "precomputed vectors are {}-dimensional but the checkpoint expects {}",
                    p.dim(),
                    cfg.embed_dim
                )));
            }
            LineSource::Precomputed(p)
        }
        (EncoderKind::Precomputed, _, None) => {
            return Err(Error::Config("checkpoint uses precomputed line vectors; none given".into()))
        }
    };
    let mut inputs = Vec::with_capacity(files.len());
    for f in files {
        if f.is_empty() {
            warn!("file `{}` has no non-blank lines; omitted from predictions", f.file_id);
            continue;
        }
        inputs.push(FileInput::from_prepared(f, source, cfg.max_lines)?);
    }
    inputs
        .par_iter()
        .map(|input| {
            let fp = forward_file::<ChaCha8Rng>(&checkpoint.params, cfg, input, None)?;
            let prob = fp.probability();
            if !prob.is_finite() {
                return Err(Error::NonFinite(format!("probability of `{}`", input.file_id)));
            }
            Ok(PredictionRecord {
                file_id: input.file_id.clone(),
                prob,
                lines: fp.line_scores(&input.line_numbers)?,
            })
        })
        .collect()
}

/// First line of a prediction report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportHeader {
    pub format: String,
    pub seed: u64,
    pub config: Vec<(String, String)>,
}

pub const REPORT_FORMAT: &str = "bafline-predictions v1";

impl ReportHeader {
    pub fn for_checkpoint(checkpoint: &ModelCheckpoint) -> Self {
        ReportHeader {
            format: REPORT_FORMAT.to_string(),
            seed: checkpoint.config.seed,
            config: checkpoint
                .config
                .entries()
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
        }
    }
}

/// Writes the header object and then one JSON object per file.
pub fn write_predictions<W: Write>(mut out: W, header: &ReportHeader, records: &[PredictionRecord]) -> Result<()> {
    serde_json::to_writer(&mut out, header)?;
    out.write_all(b"\n")?;
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a report written by [`write_predictions`]. A report without the
/// header line is accepted as well.
pub fn read_predictions<R: BufRead>(input: R) -> Result<(Option<ReportHeader>, Vec<PredictionRecord>)> {
    let mut header = None;
    let mut records = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if i == 0 {
            if let Ok(h) = serde_json::from_str::<ReportHeader>(&line) {
                header = Some(h);
                continue;
            }
        }
        let rec: PredictionRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            row: i + 1,
            message: e.to_string(),
        })?;
        records.push(rec);
    }
    Ok((header, records))
}

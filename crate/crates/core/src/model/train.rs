use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::corpus::PreparedFile;
use crate::encoder::{build_vocab, EncoderKind, PrecomputedEmbeddings};
use crate::error::{Error, Result};
use crate::eval::auc;
use crate::numcore::{weighted_bce_value, AdamState, Array2};

use super::checkpoint::ModelCheckpoint;
use super::config::ModelConfig;
use super::forward::{forward_file, FileInput, LineSource};
use super::params::ParamSet;

/// Loss and validation AUC of one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_auc: f64,
    /// Mean weighted BCE over validation files.
    pub val_loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were kept; 0 if none recorded.
    pub best_epoch: usize,
}

/// `#clean / #defective`, applied to the positive BCE term.
pub fn pos_weight(labels: impl IntoIterator<Item = bool>) -> Result<f64> {
    let (mut pos, mut neg) = (0usize, 0usize);
    for l in labels {
        if l {
            pos += 1;
        } else {
            neg += 1;
        }
    }
    if pos == 0 || neg == 0 {
        return Err(Error::Data(format!(
            "training release needs both classes (defective {pos}, clean {neg})"
        )));
    }
    Ok(neg as f64 / pos as f64)
}

/// Deterministic per-(epoch, item) stream seed.
pub(crate) fn derive_seed(seed: u64, epoch: u64, item: u64) -> u64 {
    let mut z = seed
        ^ epoch.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ item.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Encodes non-empty files, logging the ones skipped.
pub fn encode_files(files: &[PreparedFile], source: LineSource<'_>, max_lines: usize) -> Result<Vec<FileInput>> {
    let mut out = Vec::with_capacity(files.len());
    for f in files {
        if f.is_empty() {
            warn!("file `{}` has no non-blank lines; skipped", f.file_id);
            continue;
        }
        let input = FileInput::from_prepared(f, source, max_lines)?;
        if input.truncated > 0 {
            warn!("file `{}`: {} lines beyond max_lines not modelled", f.file_id, input.truncated);
        }
        out.push(input);
    }
    Ok(out)
}

/// Loss and flattened gradients of one file.
fn file_gradient(
    params: &ParamSet<Array2>,
    cfg: &ModelConfig,
    input: &FileInput,
    pos_weight: f64,
    seed: u64,
) -> Result<(f64, Vec<Array2>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fp = forward_file(params, cfg, input, Some(&mut rng))?;
    let label = if input.label { 1.0 } else { 0.0 };
    let loss = fp.tape.weighted_bce(fp.prob, label, pos_weight)?;
    let value = fp.tape.scalar(loss);
    let mut grads = fp.tape.backward(loss)?;
    let flat = params
        .values()
        .into_iter()
        .zip(fp.params.values())
        .map(|(p, &var)| grads.take(var).unwrap_or_else(|| Array2::zeros(p.rows(), p.cols())))
        .collect();
    Ok((value, flat))
}

/// Probabilities for every input, in order, without dropout.
pub fn predict_probabilities(params: &ParamSet<Array2>, cfg: &ModelConfig, inputs: &[FileInput]) -> Result<Vec<f64>> {
    inputs
        .par_iter()
        .map(|f| forward_file::<ChaCha8Rng>(params, cfg, f, None).map(|fp| fp.probability()))
        .collect()
}

/// Trains on `train_files`, selecting the epoch with the highest validation
/// AUC (ties go to the lower validation loss). The bag encoder's vocabulary
/// is built from `train_files` only.
pub fn train(
    cfg: &ModelConfig,
    train_files: &[PreparedFile],
    validation_files: &[PreparedFile],
    precomputed: Option<&PrecomputedEmbeddings>,
) -> Result<ModelCheckpoint> {
    cfg.validate()?;
    let vocab = match cfg.encoder {
        EncoderKind::Bag => Some(build_vocab(train_files, cfg.min_frequency)?),
        EncoderKind::Precomputed => None,
    };
    let source = match (&vocab, precomputed) {
        (Some(v), _) => LineSource::Vocab(v),
        (None, Some(p)) => {
            if p.dim() != cfg.embed_dim {
                return Err(Error::Config(format!(
                    "precomputed vectors are {}-dimensional but embed_dim is {}",
                    p.dim(),
                    cfg.embed_dim
                )));
            }
            LineSource::Precomputed(p)
        }
        (None, None) => {
            return Err(Error::Config("precomputed encoder selected but no embedding file given".into()))
        }
    };
    let train_inputs = encode_files(train_files, source, cfg.max_lines)?;
    let val_inputs = encode_files(validation_files, source, cfg.max_lines)?;
    let weight = pos_weight(train_inputs.iter().map(|f| f.label))?;
    let val_labels: Vec<bool> = val_inputs.iter().map(|f| f.label).collect();
    if !val_labels.contains(&true) || !val_labels.contains(&false) {
        return Err(Error::Data("validation release needs both classes to compute AUC".into()));
    }

    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = ParamSet::init(cfg, vocab.as_ref().map_or(0, |v| v.len()), &mut init_rng);
    let mut adam = AdamState::new(cfg.learning_rate, params.values().into_iter().map(Array2::shape));
    let mut best = params.clone();
    let mut log = TrainingLog::default();
    let mut best_score = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    info!(
        "training on {} files ({} parameters, pos_weight {weight:.3})",
        train_inputs.len(),
        params.parameter_count()
    );

    let mut order: Vec<usize> = (0..train_inputs.len()).collect();
    for epoch in 1..=cfg.epochs {
        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, epoch as u64, u64::MAX));
        order.sort_unstable();
        order.shuffle(&mut shuffle_rng);

        let mut epoch_loss = 0.0;
        for (batch_no, batch) in order.chunks(cfg.batch_size).enumerate() {
            let results: Vec<(f64, Vec<Array2>)> = batch
                .par_iter()
                .map(|&i| {
                    let seed = derive_seed(cfg.seed, epoch as u64, i as u64);
                    file_gradient(&params, cfg, &train_inputs[i], weight, seed)
                })
                .collect::<Result<_>>()?;

            let mut total: Option<Vec<Array2>> = None;
            let mut batch_loss = 0.0;
            for (loss, grads) in results {
                batch_loss += loss;
                match &mut total {
                    None => total = Some(grads),
                    Some(acc) => acc.iter_mut().zip(&grads).for_each(|(a, g)| a.add_assign(g)),
                }
            }
            if !batch_loss.is_finite() {
                return Err(Error::NonFinite(format!("loss at epoch {epoch}, batch {}", batch_no + 1)));
            }
            let mut grads = total.expect("batches are non-empty");
            let scale = 1.0 / batch.len() as f64;
            grads.iter_mut().for_each(|g| g.scale_assign(scale));
            if let Some(bad) = grads.iter().position(|g| !g.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "gradient of parameter block {bad} at epoch {epoch}, batch {}",
                    batch_no + 1
                )));
            }
            let mut slots: Vec<&mut Array2> = Vec::new();
            collect_mut(&mut params, &mut slots);
            adam.step(&mut slots, &grads)?;
            epoch_loss += batch_loss;
        }
        let train_loss = epoch_loss / train_inputs.len() as f64;

        let probs = predict_probabilities(&params, cfg, &val_inputs)?;
        let val_auc = auc(&probs, &val_labels)?;
        let val_loss = probs
            .iter()
            .zip(&val_labels)
            .map(|(&p, &y)| weighted_bce_value(p, if y { 1.0 } else { 0.0 }, weight))
            .sum::<f64>()
            / probs.len() as f64;
        info!("epoch {epoch}: loss {train_loss:.5}, validation AUC {val_auc:.4}, validation loss {val_loss:.5}");
        // AUC first; lower validation loss breaks ties.
        if (val_auc, -val_loss) > best_score {
            best_score = (val_auc, -val_loss);
            best = params.clone();
            log.best_epoch = epoch;
        }
        log.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_auc,
            val_loss,
        });
    }

    Ok(ModelCheckpoint {
        config: cfg.clone(),
        vocab,
        params: best,
        log,
    })
}

/// Mutable references to every block, in storage order.
fn collect_mut<'a>(p: &'a mut ParamSet<Array2>, out: &mut Vec<&'a mut Array2>) {
    if let Some(e) = p.embedding.as_mut() {
        out.push(e);
    }
    if let Some((f, b)) = p.gru.as_mut() {
        for w in [f, b] {
            out.extend([
                &mut w.w_z, &mut w.w_r, &mut w.w_h, &mut w.r_z, &mut w.r_r, &mut w.r_h,
                &mut w.b_z, &mut w.b_r, &mut w.b_h,
            ]);
        }
    }
    if let Some(x) = p.bypass.as_mut() {
        out.push(x);
    }
    if let Some(b) = p.bafn.as_mut() {
        out.push(&mut b.u);
        out.push(&mut b.m);
        out.extend(b.q.iter_mut());
    }
    if let Some(x) = p.pool_proj.as_mut() {
        out.push(x);
    }
    out.push(&mut p.w0);
    out.push(&mut p.b0);
}

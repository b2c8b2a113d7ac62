//! Versioned binary checkpoint container.
//!
//! ```text
//! magic    8 bytes   "BAFLNDP\0"
//! version  u32 LE
//! config   u32 LE length + UTF-8 `key=value` lines
//! vocab    u32 LE length + UTF-8 tokens, one per line (empty if none)
//! log      u32 LE length + UTF-8 `epoch\tloss\tauc\tval_loss` lines, then `best_epoch=N`
//! blocks   u32 LE count, then per block:
//!          u32 LE name length + UTF-8 name, u64 LE rows, u64 LE cols,
//!          rows*cols f64 LE values (row-major)
//! ```
//!
//! Trailing bytes are rejected, as is any truncation.

use std::fmt::Write as _;
use std::path::Path;

use crate::encoder::Vocab;
use crate::error::{Error, Result};
use crate::numcore::Array2;

use super::config::ModelConfig;
use super::params::ParamSet;
use super::train::{EpochRecord, TrainingLog};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"BAFLNDP\0";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Trained parameters with everything needed to reuse them.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint {
    pub config: ModelConfig,
    pub vocab: Option<Vocab>,
    pub params: ParamSet<Array2>,
    pub log: TrainingLog,
}

fn push_text(buf: &mut Vec<u8>, text: &str) {
    buf.extend_from_slice(&(text.len() as u32).to_le_bytes());
    buf.extend_from_slice(text.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Checkpoint(format!("truncated while reading {what} at byte {}", self.pos))
        })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn text(&mut self, what: &str) -> Result<&'a str> {
        let n = self.u32(what)? as usize;
        std::str::from_utf8(self.take(n, what)?)
            .map_err(|_| Error::Checkpoint(format!("{what} is not valid UTF-8")))
    }
}

impl TrainingLog {
    fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.epochs {
            let _ = writeln!(out, "{}\t{}\t{}\t{}", e.epoch, e.train_loss, e.val_auc, e.val_loss);
        }
        let _ = writeln!(out, "best_epoch={}", self.best_epoch);
        out
    }

    fn from_text(text: &str) -> Result<Self> {
        let bad = |l: &str| Error::Checkpoint(format!("malformed training log line {l:?}"));
        let mut log = TrainingLog::default();
        for line in text.lines() {
            if let Some(b) = line.strip_prefix("best_epoch=") {
                log.best_epoch = b.parse().map_err(|_| bad(line))?;
                continue;
            }
            let parts: Vec<&str> = line.split('\t').collect();
            let [e, l, a, v] = parts[..] else { return Err(bad(line)) };
            log.epochs.push(EpochRecord {
                epoch: e.parse().map_err(|_| bad(line))?,
                train_loss: l.parse().map_err(|_| bad(line))?,
                val_auc: a.parse().map_err(|_| bad(line))?,
                val_loss: v.parse().map_err(|_| bad(line))?,
            });
        }
        Ok(log)
    }
}

impl ModelCheckpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(CHECKPOINT_MAGIC);
        buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        push_text(&mut buf, &self.config.to_text());
        push_text(&mut buf, &self.vocab.as_ref().map(Vocab::to_text).unwrap_or_default());
        push_text(&mut buf, &self.log.to_text());
        let named = self.params.named();
        buf.extend_from_slice(&(named.len() as u32).to_le_bytes());
        for (name, a) in named {
            push_text(&mut buf, &name);
            buf.extend_from_slice(&(a.rows() as u64).to_le_bytes());
            buf.extend_from_slice(&(a.cols() as u64).to_le_bytes());
            for v in a.data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8, "magic")? != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
        }
        let version = r.u32("version")?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {version} (expected {CHECKPOINT_VERSION})"
            )));
        }
        let config = ModelConfig::from_text(r.text("config")?)?;
        config.validate()?;
        let vocab_text = r.text("vocab")?;
        let vocab = if vocab_text.is_empty() {
            None
        } else {
            Some(Vocab::from_text(vocab_text)?)
        };
        let log = TrainingLog::from_text(r.text("training log")?)?;
        let count = r.u32("block count")? as usize;
        let mut names = Vec::with_capacity(count);
        let mut values = Vec::with_capacity(count);
        for _ in 0..count {
            let name = r.text("block name")?.to_string();
            let rows = r.u64("block rows")? as usize;
            let cols = r.u64("block cols")? as usize;
            let n = rows.checked_mul(cols).filter(|n| n.checked_mul(8).is_some()).ok_or_else(|| {
                Error::Checkpoint(format!("block `{name}` has an absurd shape {rows}x{cols}"))
            })?;
            let raw = r.take(n * 8, &format!("block `{name}`"))?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            values.push(
                Array2::from_vec(rows, cols, data)
                    .map_err(|e| Error::Checkpoint(format!("block `{name}`: {e}")))?,
            );
            names.push(name);
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes after the last block",
                bytes.len() - r.pos
            )));
        }

        let vocab_size = vocab.as_ref().map_or(0, Vocab::len);
        let mut probe = rand::rngs::mock::StepRng::new(0, 0);
        let template = ParamSet::init(&config, vocab_size, &mut probe);
        let expected: Vec<String> = template.named().into_iter().map(|n| n.0).collect();
        if names != expected {
            return Err(Error::Checkpoint(format!(
                "parameter blocks {names:?} do not match the configuration's layout {expected:?}"
            )));
        }
        let params = template.with_values(values)?;
        params.check_shapes(&config, vocab_size)?;
        Ok(ModelCheckpoint {
            config,
            vocab,
            params,
            log,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// Rejects a checkpoint whose ablation switches differ from the ones
    /// requested.
    pub fn ensure_ablation(&self, no_bigru: bool, no_bafn: bool) -> Result<()> {
        if self.config.no_bigru != no_bigru || self.config.no_bafn != no_bafn {
            return Err(Error::Checkpoint(format!(
                "checkpoint was trained with no_bigru={}, no_bafn={} but no_bigru={no_bigru}, no_bafn={no_bafn} was requested",
                self.config.no_bigru, self.config.no_bafn
            )));
        }
        Ok(())
    }
}

pub fn save_checkpoint(checkpoint: &ModelCheckpoint, path: impl AsRef<Path>) -> Result<()> {
    checkpoint.save(path)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ModelCheckpoint> {
    ModelCheckpoint::load(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{PreparedFile, PreparedLine};
    use crate::encoder::build_vocab;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample(cfg: &ModelConfig) -> ModelCheckpoint {
        let file = PreparedFile {
            file_id: "a".into(),
            file_label: true,
            lines: vec![PreparedLine { line_number: 1, tokens: vec!["x".into(), "x".into(), "y".into(), "y".into()], label: true }],
        };
        let vocab = build_vocab([&file], 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        ModelCheckpoint {
            config: cfg.clone(),
            params: ParamSet::init(cfg, vocab.len(), &mut rng),
            vocab: Some(vocab),
            log: TrainingLog {
                epochs: vec![EpochRecord { epoch: 1, train_loss: 0.1 + 0.2, val_auc: 0.75, val_loss: 1e-300 }],
                best_epoch: 1,
            },
        }
    }

    fn tiny() -> ModelConfig {
        ModelConfig { embed_dim: 3, hidden: 2, k: 6, stride: 3, ..Default::default() }
    }

    #[test]
    fn bytes_round_trip_exactly() {
        let c = sample(&tiny());
        let bytes = c.to_bytes();
        let back = ModelCheckpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn every_truncation_rejected() {
        let bytes = sample(&tiny()).to_bytes();
        for cut in [0, 7, 8, 11, 20, bytes.len() / 2, bytes.len() - 1] {
            let err = ModelCheckpoint::from_bytes(&bytes[..cut]).unwrap_err();
            assert!(matches!(err, Error::Checkpoint(_)), "cut {cut}: {err}");
        }
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(ModelCheckpoint::from_bytes(&extra).unwrap_err().to_string().contains("trailing"));
    }

    #[test]
    fn version_checked() {
        let mut bytes = sample(&tiny()).to_bytes();
        bytes[8] = 9;
        assert!(ModelCheckpoint::from_bytes(&bytes).unwrap_err().to_string().contains("version 9"));
    }

    #[test]
    fn ablation_flags_must_match() {
        let c = sample(&ModelConfig { no_bafn: true, ..tiny() });
        let back = ModelCheckpoint::from_bytes(&c.to_bytes()).unwrap();
        back.ensure_ablation(false, true).unwrap();
        assert!(back.ensure_ablation(false, false).is_err());
    }
}

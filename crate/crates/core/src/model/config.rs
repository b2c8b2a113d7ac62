use std::fmt::Write as _;

use crate::encoder::{EncoderKind, LineEncoderSpec};
use crate::error::{Error, Result};

/// Hyperparameters and ablation switches.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub encoder: EncoderKind,
    /// Line embedding width `d`.
    pub embed_dim: usize,
    pub min_frequency: usize,
    /// GRU hidden size `u`; contexts are `2u` wide.
    pub hidden: usize,
    /// Bilinear projection width `k`.
    pub k: usize,
    /// Sum-pooling stride `s`; the fused feature is `k/s` wide.
    pub stride: usize,
    pub heads: usize,
    pub dropout: f64,
    pub layer_norm: bool,
    /// Apply the ReLU projections inside the pooling form (otherwise the
    /// pre-activation projections are used there).
    pub pooling_activation: bool,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub max_line_tokens: usize,
    /// 0 means unlimited.
    pub max_lines: usize,
    pub no_bigru: bool,
    pub no_bafn: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            encoder: EncoderKind::Bag,
            embed_dim: 64,
            min_frequency: 2,
            hidden: 64,
            k: 768,
            stride: 3,
            heads: 2,
            dropout: 0.2,
            layer_norm: true,
            pooling_activation: true,
            batch_size: 16,
            learning_rate: 0.001,
            epochs: 10,
            seed: 0,
            max_line_tokens: 75,
            max_lines: 0,
            no_bigru: false,
            no_bafn: false,
        }
    }
}

/// Every recognised key, in canonical order.
pub const CONFIG_KEYS: [&str; 18] = [
    "encoder",
    "embed_dim",
    "min_frequency",
    "hidden",
    "k",
    "stride",
    "heads",
    "dropout",
    "layer_norm",
    "pooling_activation",
    "batch_size",
    "learning_rate",
    "epochs",
    "seed",
    "max_line_tokens",
    "max_lines",
    "no_bigru",
    "no_bafn",
];

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("`{key}` has an invalid value {value:?}")))
}

fn parse_flag(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("`{key}` expects true/false, got {value:?}"))),
    }
}

impl ModelConfig {
    /// Width of the context matrix.
    pub fn context_dim(&self) -> usize {
        2 * self.hidden
    }

    /// Width of the fused file feature.
    pub fn feature_dim(&self) -> usize {
        self.k / self.stride.max(1)
    }

    pub fn encoder_spec(&self) -> LineEncoderSpec {
        LineEncoderSpec {
            kind: self.encoder,
            dim: self.embed_dim,
            trainable: self.encoder == EncoderKind::Bag,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder_spec().validate()?;
        let positive = [
            ("hidden", self.hidden),
            ("k", self.k),
            ("stride", self.stride),
            ("batch_size", self.batch_size),
            ("epochs", self.epochs),
            ("max_line_tokens", self.max_line_tokens),
            ("min_frequency", self.min_frequency),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("`{name}` must be at least 1")));
            }
        }
        if !self.k.is_multiple_of(self.stride) {
            return Err(Error::Config(format!(
                "k ({}) must be divisible by the pooling stride ({})",
                self.k, self.stride
            )));
        }
        if !(1..=2).contains(&self.heads) {
            return Err(Error::Config(format!("heads must be 1 or 2, got {}", self.heads)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout must be in [0, 1), got {}", self.dropout)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate < 1.0) {
            return Err(Error::Config(format!(
                "learning_rate must be in (0, 1), got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }

    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "encoder" => {
                self.encoder = EncoderKind::parse(value)
                    .ok_or_else(|| Error::Config(format!("unknown encoder {value:?}")))?
            }
            "embed_dim" => self.embed_dim = parse_num(key, value)?,
            "min_frequency" => self.min_frequency = parse_num(key, value)?,
            "hidden" => self.hidden = parse_num(key, value)?,
            "k" => self.k = parse_num(key, value)?,
            "stride" => self.stride = parse_num(key, value)?,
            "heads" => self.heads = parse_num(key, value)?,
            "dropout" => self.dropout = parse_num(key, value)?,
            "layer_norm" => self.layer_norm = parse_flag(key, value)?,
            "pooling_activation" => self.pooling_activation = parse_flag(key, value)?,
            "batch_size" => self.batch_size = parse_num(key, value)?,
            "learning_rate" => self.learning_rate = parse_num(key, value)?,
            "epochs" => self.epochs = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "max_line_tokens" => self.max_line_tokens = parse_num(key, value)?,
            "max_lines" => self.max_lines = parse_num(key, value)?,
            "no_bigru" => self.no_bigru = parse_flag(key, value)?,
            "no_bafn" => self.no_bafn = parse_flag(key, value)?,
            other => return Err(Error::Config(format!("unknown configuration key `{other}`"))),
        }
        Ok(())
    }

    /// Flat `key=value` lines in canonical order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }

    pub fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("encoder", self.encoder.name().to_string()),
            ("embed_dim", self.embed_dim.to_string()),
            ("min_frequency", self.min_frequency.to_string()),
            ("hidden", self.hidden.to_string()),
            ("k", self.k.to_string()),
            ("stride", self.stride.to_string()),
            ("heads", self.heads.to_string()),
            ("dropout", self.dropout.to_string()),
            ("layer_norm", self.layer_norm.to_string()),
            ("pooling_activation", self.pooling_activation.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("learning_rate", self.learning_rate.to_string()),
            ("epochs", self.epochs.to_string()),
            ("seed", self.seed.to_string()),
            ("max_line_tokens", self.max_line_tokens.to_string()),
            ("max_lines", self.max_lines.to_string()),
            ("no_bigru", self.no_bigru.to_string()),
            ("no_bafn", self.no_bafn.to_string()),
        ]
    }

    /// Applies `key=value` lines on top of `self`. Blank lines and `#`
    /// comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key=value, got {line:?}", i + 1))
            })?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = ModelConfig::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let c = ModelConfig::default();
        c.validate().unwrap();
        assert_eq!(c.feature_dim(), 256);
        assert_eq!(c.context_dim(), 128);
    }

    #[test]
    fn stride_must_divide_k() {
        let c = ModelConfig { k: 10, stride: 3, ..Default::default() };
        assert!(matches!(c.validate(), Err(Error::Config(m)) if m.contains("divisible")));
    }

    #[test]
    fn text_round_trip() {
        let c = ModelConfig {
            dropout: 0.35,
            no_bafn: true,
            seed: 99,
            learning_rate: 3e-4,
            ..Default::default()
        };
        assert_eq!(ModelConfig::from_text(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(ModelConfig::from_text("lr=0.1").is_err());
        assert!(ModelConfig::from_text("epochs=ten").is_err());
    }

    #[test]
    fn comments_and_overrides() {
        let c = ModelConfig::from_text("# demo\nepochs = 3\nno_bigru=on\n").unwrap();
        assert_eq!(c.epochs, 3);
        assert!(c.no_bigru);
    }
}

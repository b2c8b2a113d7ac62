use rand::Rng;

use crate::bafn::BafnWeights;
use crate::context::{GruWeights, GRU_FIELDS};
use crate::encoder::EncoderKind;
use crate::error::{Error, Result};
use crate::numcore::{Array2, Tape, Var};

use super::config::ModelConfig;

/// All learnable parameters, generic over storage: `Array2` for the model
/// itself, `Var` once registered on a tape. Optional parts depend on the
/// encoder kind and ablation switches.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet<T> {
    /// `|V| x d` token table (bag encoder only).
    pub embedding: Option<T>,
    /// Forward and backward GRU (absent with `no_bigru`).
    pub gru: Option<(GruWeights<T>, GruWeights<T>)>,
    /// `d x 2u` identity-initialised map replacing the GRU (`no_bigru`).
    pub bypass: Option<T>,
    pub bafn: Option<BafnWeights<T>>,
    /// `2u x k/s` map from mean-pooled contexts (`no_bafn`).
    pub pool_proj: Option<T>,
    /// `k/s x 1` prediction weights.
    pub w0: T,
    /// `1 x 1` prediction bias.
    pub b0: T,
}

impl<T> ParamSet<T> {
    /// `(name, value)` pairs in storage order.
    pub fn named(&self) -> Vec<(String, &T)> {
        let mut out = Vec::new();
        if let Some(e) = &self.embedding {
            out.push(("embedding".to_string(), e));
        }
        if let Some((f, b)) = &self.gru {
            for (dir, w) in [("fwd", f), ("bwd", b)] {
                for (field, v) in GRU_FIELDS.iter().zip(w.to_vec()) {
                    out.push((format!("gru.{dir}.{field}"), v));
                }
            }
        }
        if let Some(p) = &self.bypass {
            out.push(("bypass".to_string(), p));
        }
        if let Some(b) = &self.bafn {
            out.push(("bafn.U".to_string(), &b.u));
            out.push(("bafn.M".to_string(), &b.m));
            for (i, q) in b.q.iter().enumerate() {
                out.push((format!("bafn.q{}", i + 1), q));
            }
        }
        if let Some(p) = &self.pool_proj {
            out.push(("pool_proj".to_string(), p));
        }
        out.push(("head.W0".to_string(), &self.w0));
        out.push(("head.b0".to_string(), &self.b0));
        out
    }

    pub fn values(&self) -> Vec<&T> {
        self.named().into_iter().map(|(_, v)| v).collect()
    }

    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> ParamSet<U> {
        ParamSet {
            embedding: self.embedding.as_ref().map(&mut f),
            gru: self.gru.as_ref().map(|(a, b)| (a.map(&mut f), b.map(&mut f))),
            bypass: self.bypass.as_ref().map(&mut f),
            bafn: self.bafn.as_ref().map(|b| BafnWeights {
                u: f(&b.u),
                m: f(&b.m),
                q: b.q.iter().map(&mut f).collect(),
            }),
            pool_proj: self.pool_proj.as_ref().map(&mut f),
            w0: f(&self.w0),
            b0: f(&self.b0),
        }
    }

    /// Rebuilds a set with this set's layout from values in storage order.
    pub fn with_values<U>(&self, values: Vec<U>) -> Result<ParamSet<U>> {
        let expected = self.named().len();
        if values.len() != expected {
            return Err(Error::Checkpoint(format!(
                "expected {expected} parameter blocks, found {}",
                values.len()
            )));
        }
        let mut it = values.into_iter();
        Ok(self.map(|_| it.next().expect("length checked")))
    }
}

impl ParamSet<Array2> {
    /// Fresh parameters for `cfg`, deterministic in `rng`.
    pub fn init<R: Rng>(cfg: &ModelConfig, vocab_size: usize, rng: &mut R) -> Self {
        let d = cfg.embed_dim;
        let dc = cfg.context_dim();
        let embedding = (cfg.encoder == EncoderKind::Bag)
            .then(|| Array2::uniform(vocab_size, d, 0.05, rng));
        let (gru, bypass) = if cfg.no_bigru {
            (None, Some(Array2::identity(d, dc)))
        } else {
            (
                Some((GruWeights::init(d, cfg.hidden, rng), GruWeights::init(d, cfg.hidden, rng))),
                None,
            )
        };
        let (bafn, pool_proj) = if cfg.no_bafn {
            let bound = (6.0 / (dc + cfg.feature_dim()) as f64).sqrt();
            (None, Some(Array2::uniform(dc, cfg.feature_dim(), bound, rng)))
        } else {
            (Some(BafnWeights::init(d, dc, cfg.k, cfg.heads, rng)), None)
        };
        let f = cfg.feature_dim();
        let w0 = Array2::uniform(f, 1, (6.0 / (f + 1) as f64).sqrt(), rng);
        ParamSet {
            embedding,
            gru,
            bypass,
            bafn,
            pool_proj,
            w0,
            b0: Array2::zeros(1, 1),
        }
    }

    pub fn register(&self, tape: &mut Tape) -> ParamSet<Var> {
        self.map(|a| tape.leaf(a.clone()))
    }

    pub fn parameter_count(&self) -> usize {
        self.values().iter().map(|a| a.len()).sum()
    }

    /// Checks that every block has the shape `cfg` implies.
    pub fn check_shapes(&self, cfg: &ModelConfig, vocab_size: usize) -> Result<()> {
        let mut probe_rng = rand::rngs::mock::StepRng::new(0, 0);
        let reference = ParamSet::init(cfg, vocab_size, &mut probe_rng);
        let ours = self.named();
        let theirs = reference.named();
        if ours.len() != theirs.len() {
            return Err(Error::Checkpoint(format!(
                "parameter layout has {} blocks but the configuration implies {}",
                ours.len(),
                theirs.len()
            )));
        }
        for ((name, a), (ref_name, b)) in ours.iter().zip(&theirs) {
            if name != ref_name || a.shape() != b.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter `{name}` {:?} does not match expected `{ref_name}` {:?}",
                    a.shape(),
                    b.shape()
                )));
            }
        }
        Ok(())
    }
}

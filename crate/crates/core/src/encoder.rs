//! Per-line embeddings: a trainable mean-of-tokens table, or externally
//! computed vectors loaded from disk.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::corpus::{PreparedFile, NUM_TOKEN, STR_TOKEN};
use crate::error::{Error, Result};
use crate::numcore::{Tape, Var};

pub const PAD_TOKEN: &str = "<pad>";
pub const OOV_TOKEN: &str = "<oov>";
pub const PAD: usize = 0;
pub const OOV: usize = 1;

/// Token-to-index map with four reserved entries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        let reserved = [PAD_TOKEN, OOV_TOKEN, STR_TOKEN, NUM_TOKEN];
        if tokens.len() < 4 || tokens[..4].iter().zip(reserved).any(|(a, b)| a != b) {
            return Err(Error::Schema("vocab must start with <pad>, <oov>, <str>, <num>".into()));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() || t.contains(char::is_whitespace) {
                return Err(Error::Schema(format!("invalid vocab token {t:?}")));
            }
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Schema(format!("duplicate vocab token {t:?}")));
            }
        }
        Ok(Vocab { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Index of `token`, or the out-of-vocabulary index.
    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(OOV)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    /// One token per line, in index order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for t in &self.tokens {
            let _ = writeln!(out, "{t}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::from_tokens(text.lines().map(str::to_string).collect())
    }
}

/// Builds a vocabulary from training files. Tokens seen fewer than
/// `min_frequency` times map to `<oov>`; kept tokens are indexed in
/// lexicographic order after the reserved entries.
pub fn build_vocab<'a>(
    files: impl IntoIterator<Item = &'a PreparedFile>,
    min_frequency: usize,
) -> Result<Vocab> {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    let mut total = 0usize;
    for f in files {
        for line in &f.lines {
            for t in &line.tokens {
                *counts.entry(t.as_str()).or_default() += 1;
                total += 1;
            }
        }
    }
    if total == 0 {
        return Err(Error::Data("cannot build a vocabulary from an empty corpus".into()));
    }
    let reserved = [PAD_TOKEN, OOV_TOKEN, STR_TOKEN, NUM_TOKEN];
    let mut kept: Vec<&str> = counts
        .into_iter()
        .filter(|(t, c)| *c >= min_frequency && !reserved.contains(t))
        .map(|(t, _)| t)
        .collect();
    kept.sort_unstable();
    let tokens = reserved
        .iter()
        .copied()
        .chain(kept)
        .map(str::to_string)
        .collect();
    Vocab::from_tokens(tokens)
}

/// Mean of the embedding rows of one line's tokens, as a `1 x d` node.
pub fn encode_line_bag(tape: &mut Tape, table: Var, token_ids: &[usize]) -> Result<Var> {
    tape.embed_mean(table, vec![token_ids.to_vec()])
}

/// All lines of a file at once: an `n x d` node.
pub fn encode_lines_bag(tape: &mut Tape, table: Var, lines: Vec<Vec<usize>>) -> Result<Var> {
    tape.embed_mean(table, lines)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncoderKind {
    Bag,
    Precomputed,
}

impl EncoderKind {
    pub fn name(self) -> &'static str {
        match self {
            EncoderKind::Bag => "bag",
            EncoderKind::Precomputed => "precomputed",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "bag" => Some(EncoderKind::Bag),
            "precomputed" => Some(EncoderKind::Precomputed),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LineEncoderSpec {
    pub kind: EncoderKind,
    pub dim: usize,
    pub trainable: bool,
}

impl LineEncoderSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        if self.kind == EncoderKind::Precomputed && self.trainable {
            return Err(Error::Config("precomputed embeddings cannot be trainable".into()));
        }
        Ok(())
    }
}

/// Externally computed line vectors keyed by `(file_id, line_number)`.
///
/// File layout: a `#dim=<d>` header, then one
/// `<file_id>\t<line_number>\t<d space-separated floats>` record per line.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecomputedEmbeddings {
    dim: usize,
    vectors: HashMap<(String, u32), Vec<f64>>,
}

impl PrecomputedEmbeddings {
    pub fn new(dim: usize) -> Self {
        PrecomputedEmbeddings {
            dim,
            vectors: HashMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn insert(&mut self, file_id: &str, line_number: u32, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::Dimension {
                op: "precomputed_insert",
                left: (1, self.dim),
                right: (1, vector.len()),
            });
        }
        self.vectors.insert((file_id.to_string(), line_number), vector);
        Ok(())
    }

    pub fn get(&self, file_id: &str, line_number: u32) -> Result<&[f64]> {
        self.vectors
            .get(&(file_id.to_string(), line_number))
            .map(Vec::as_slice)
            .ok_or_else(|| Error::MissingEmbedding {
                file_id: file_id.to_string(),
                line_number,
            })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let dim = match lines.next() {
            Some((_, h)) => h
                .strip_prefix("#dim=")
                .and_then(|d| d.trim().parse::<usize>().ok())
                .filter(|&d| d > 0)
                .ok_or_else(|| Error::Schema(format!("embedding file header must be `#dim=<d>`, got {h:?}")))?,
            None => return Err(Error::Schema("embedding file is empty".into())),
        };
        let mut out = Self::new(dim);
        for (i, line) in lines {
            let row = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.splitn(3, '\t');
            let (Some(file_id), Some(num), Some(values)) = (parts.next(), parts.next(), parts.next()) else {
                return Err(Error::Parse {
                    row,
                    message: "expected `<file_id>\\t<line_number>\\t<floats>`".into(),
                });
            };
            let line_number: u32 = num.parse().map_err(|_| Error::Parse {
                row,
                message: format!("bad line number {num:?}"),
            })?;
            let vector = values
                .split_whitespace()
                .map(|v| v.parse::<f64>().ok().filter(|x| x.is_finite()))
                .collect::<Option<Vec<f64>>>()
                .ok_or_else(|| Error::Parse {
                    row,
                    message: "vector contains a non-numeric or non-finite value".into(),
                })?;
            if vector.len() != dim {
                return Err(Error::Parse {
                    row,
                    message: format!("expected {dim} values, found {}", vector.len()),
                });
            }
            out.vectors.insert((file_id.to_string(), line_number), vector);
        }
        Ok(out)
    }

    /// Serializes with keys in sorted order.
    pub fn to_text(&self) -> String {
        let mut keys: Vec<&(String, u32)> = self.vectors.keys().collect();
        keys.sort();
        let mut out = format!("#dim={}\n", self.dim);
        for key in keys {
            let v = &self.vectors[key];
            let joined: Vec<String> = v.iter().map(|x| x.to_string()).collect();
            let _ = writeln!(out, "{}\t{}\t{}", key.0, key.1, joined.join(" "));
        }
        out
    }

    /// Checks that every line of every non-empty file has a vector. Returns
    /// the number of lines covered.
    pub fn validate_coverage<'a>(&self, files: impl IntoIterator<Item = &'a PreparedFile>) -> Result<usize> {
        let mut covered = 0;
        for f in files {
            for l in &f.lines {
                self.get(&f.file_id, l.line_number)?;
                covered += 1;
            }
        }
        Ok(covered)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::PreparedLine;
    use crate::numcore::{gradient_check, Array2};

    fn file(id: &str, lines: &[&[&str]]) -> PreparedFile {
        PreparedFile {
            file_id: id.into(),
            file_label: false,
            lines: lines
                .iter()
                .enumerate()
                .map(|(i, toks)| PreparedLine {
                    line_number: i as u32 + 1,
                    tokens: toks.iter().map(|t| t.to_string()).collect(),
                    label: false,
                })
                .collect(),
        }
    }

    #[test]
    fn frequency_threshold() {
        let f = file("A", &[&["a", "a", "a"], &["a", "a", "b"]]);
        let v = build_vocab([&f], 2).unwrap();
        assert_ne!(v.id("a"), OOV);
        assert_eq!(v.id("b"), OOV);
        let all = build_vocab([&f], 1).unwrap();
        assert_ne!(all.id("b"), OOV);
        assert_eq!(all.len(), 6);
    }

    #[test]
    fn reserved_indices() {
        let f = file("A", &[&["<str>", "<num>", "x"]]);
        let v = build_vocab([&f], 1).unwrap();
        assert_eq!((v.id("<pad>"), v.id("<oov>"), v.id("<str>"), v.id("<num>")), (0, 1, 2, 3));
        assert_eq!(v.id("x"), 4);
    }

    #[test]
    fn unseen_validation_token_is_oov() {
        let train = file("T", &[&["common", "train_only"], &["common", "train_only"]]);
        let valid = file("V", &[&["common", "valid_only"]]);
        let v = build_vocab([&train], 2).unwrap();
        let ids = v.encode(&valid.lines[0].tokens);
        assert_ne!(ids[0], OOV);
        assert_eq!(ids[1], OOV);
    }

    #[test]
    fn empty_corpus_errors() {
        assert!(build_vocab([&file("A", &[])], 1).is_err());
    }

    #[test]
    fn vocab_text_round_trip() {
        let f = file("A", &[&["b", "a", "c"]]);
        let v = build_vocab([&f], 1).unwrap();
        assert_eq!(Vocab::from_text(&v.to_text()).unwrap(), v);
    }

    fn table() -> Array2 {
        Array2::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 7.0]]).unwrap()
    }

    #[test]
    fn bag_single_and_pair() {
        let mut t = Tape::new();
        let e = t.leaf(table());
        let one = encode_line_bag(&mut t, e, &[2]).unwrap();
        assert_eq!(t.value(one).data(), &[5.0, 7.0]);
        let two = encode_line_bag(&mut t, e, &[0, 1]).unwrap();
        assert_eq!(t.value(two).data(), &[2.0, 3.0]);
    }

    #[test]
    fn bag_permutation_invariant() {
        let mut t = Tape::new();
        let e = t.leaf(table());
        let a = encode_line_bag(&mut t, e, &[0, 1, 2, 2]).unwrap();
        let b = encode_line_bag(&mut t, e, &[2, 0, 2, 1]).unwrap();
        assert_eq!(t.value(a), t.value(b));
    }

    #[test]
    fn bag_gradient_for_repeated_token() {
        let mut t = Tape::new();
        let e = t.leaf(table());
        let v = encode_line_bag(&mut t, e, &[1, 0, 1, 2]).unwrap();
        let s = t.sum(v);
        let g = t.backward(s).unwrap();
        assert_eq!(g.get(e).unwrap().row(1), &[0.5, 0.5]);
        let report = gradient_check(
            |t, p| {
                let v = encode_line_bag(t, p[0], &[1, 0, 1, 2])?;
                Ok(t.sum(v))
            },
            &[table()],
            1e-5,
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-9);
    }

    #[test]
    fn precomputed_round_trip_and_missing() {
        let text = "#dim=3\nA\t1\t0.1 0.2 0.3\nA\t2\t-1 0 1e-3\nB\t5\t1 2 3\n";
        let p = PrecomputedEmbeddings::from_text(text).unwrap();
        assert_eq!((p.dim(), p.len()), (3, 3));
        assert_eq!(p.get("A", 2).unwrap(), &[-1.0, 0.0, 1e-3]);
        let err = p.get("B", 4).unwrap_err().to_string();
        assert!(err.contains("`B`") && err.contains('4'), "{err}");
        let again = PrecomputedEmbeddings::from_text(&p.to_text()).unwrap();
        assert_eq!(again, p);
    }

    #[test]
    fn precomputed_rejects_wrong_width() {
        assert!(PrecomputedEmbeddings::from_text("#dim=2\nA\t1\t1 2 3\n").is_err());
        assert!(PrecomputedEmbeddings::from_text("dim=2\n").is_err());
    }

    #[test]
    fn spec_validation() {
        let bad = LineEncoderSpec { kind: EncoderKind::Precomputed, dim: 768, trainable: true };
        assert!(bad.validate().is_err());
        let zero = LineEncoderSpec { kind: EncoderKind::Bag, dim: 0, trainable: true };
        assert!(zero.validate().is_err());
    }
}

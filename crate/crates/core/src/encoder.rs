//! Text → ball encoders.
//!
//! [`ReferenceEncoder`] mean-pools trainable token rows, applies a shared
//! affine map and projects into the ball. [`ExternalEmbeddings`] serves
//! vectors computed elsewhere, keyed by the SHA-256 of the verbalization.

use std::collections::{BTreeSet, HashMap};

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geometry::{self, raw, BallSpec, GeometryError, PoincarePoint};
use crate::normalize::DefinitionMap;
use crate::ontology::{Concept, LabelMap};
use crate::verbalize::{verbalize, VerbalizeError};

pub const OOV_TOKEN: &str = "<unk>";
pub const OOV_INDEX: usize = 0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EncodeError {
    #[error("parameter shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("no external embedding for {text:?} (key {key})")]
    MissingEmbedding { text: String, key: String },
    #[error("line {line}: expected {expected} values, found {found}")]
    EmbeddingDimension {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: {message}")]
    EmbeddingSyntax { line: usize, message: String },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbedError {
    #[error(transparent)]
    Verbalize(#[from] VerbalizeError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
}

/// Lowercased maximal runs of alphanumeric characters.
pub fn tokenize(s: &str) -> Vec<String> {
    s.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Dense token indices; index 0 is the out-of-vocabulary bucket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct TokenVocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for TokenVocab {
    fn from(tokens: Vec<String>) -> Self {
        let index = tokens.iter().cloned().enumerate().map(|(i, t)| (t, i)).collect();
        TokenVocab { tokens, index }
    }
}

impl From<TokenVocab> for Vec<String> {
    fn from(v: TokenVocab) -> Self {
        v.tokens
    }
}

impl TokenVocab {
    /// Sorted vocabulary of every token in `texts`, after the OOV entry.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut set = BTreeSet::new();
        for t in texts {
            set.extend(tokenize(t));
        }
        let mut tokens = vec![OOV_TOKEN.to_string()];
        tokens.extend(set.into_iter().filter(|t| t != OOV_TOKEN));
        TokenVocab::from(tokens)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn ids(&self, text: &str) -> Vec<usize> {
        tokenize(text)
            .iter()
            .map(|t| self.get(t).unwrap_or(OOV_INDEX))
            .collect()
    }
}

/// Token table plus the shared affine output map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    pub d_tok: usize,
    pub dim: usize,
    /// `vocab × d_tok`, row-major.
    pub token_table: Vec<f64>,
    /// `d_tok × dim`, row-major.
    pub out_weight: Vec<f64>,
    pub out_bias: Vec<f64>,
}

impl EncoderParams {
    pub fn zeros(vocab_len: usize, d_tok: usize, dim: usize) -> Self {
        EncoderParams {
            d_tok,
            dim,
            token_table: vec![0.0; vocab_len * d_tok],
            out_weight: vec![0.0; d_tok * dim],
            out_bias: vec![0.0; dim],
        }
    }

    /// Every entry uniform in `[-range, range]`, bias included.
    pub fn init<R: Rng>(vocab_len: usize, d_tok: usize, dim: usize, range: f64, rng: &mut R) -> Self {
        let mut p = EncoderParams::zeros(vocab_len, d_tok, dim);
        for v in p
            .token_table
            .iter_mut()
            .chain(p.out_weight.iter_mut())
            .chain(p.out_bias.iter_mut())
        {
            *v = rng.gen_range(-range..=range);
        }
        p
    }

    pub fn zeros_like(&self) -> Self {
        EncoderParams::zeros(self.vocab_len(), self.d_tok, self.dim)
    }

    pub fn vocab_len(&self) -> usize {
        self.token_table.len().checked_div(self.d_tok).unwrap_or(0)
    }

    pub fn check(&self, vocab_len: usize, spec: &BallSpec) -> Result<(), EncodeError> {
        if self.dim != spec.dim {
            return Err(EncodeError::Shape(format!(
                "output dimension {} but ball dimension {}",
                self.dim, spec.dim
            )));
        }
        if self.token_table.len() != vocab_len * self.d_tok
            || self.out_weight.len() != self.d_tok * self.dim
            || self.out_bias.len() != self.dim
        {
            return Err(EncodeError::Shape(format!(
                "expected table {}×{}, weight {}×{}, bias {}",
                vocab_len, self.d_tok, self.d_tok, self.dim, self.dim
            )));
        }
        Ok(())
    }

    pub fn row(&self, token: usize) -> &[f64] {
        &self.token_table[token * self.d_tok..(token + 1) * self.d_tok]
    }

    /// Mean of the token rows; zero for an empty list.
    pub fn pool(&self, ids: &[usize]) -> Vec<f64> {
        let mut h = vec![0.0; self.d_tok];
        if ids.is_empty() {
            return h;
        }
        for &id in ids {
            for (acc, v) in h.iter_mut().zip(self.row(id)) {
                *acc += v;
            }
        }
        let inv = 1.0 / ids.len() as f64;
        h.iter_mut().for_each(|v| *v *= inv);
        h
    }

    pub fn affine(&self, h: &[f64]) -> Vec<f64> {
        let mut z = self.out_bias.clone();
        for (i, &hi) in h.iter().enumerate() {
            let row = &self.out_weight[i * self.dim..(i + 1) * self.dim];
            for (zj, wij) in z.iter_mut().zip(row) {
                *zj += hi * wij;
            }
        }
        z
    }

    /// Pre-projection vector for a token list.
    pub fn raw_vector(&self, ids: &[usize]) -> Vec<f64> {
        self.affine(&self.pool(ids))
    }

    /// Accumulates into `grad` the gradient of a loss whose derivative with
    /// respect to the encoded point of `ids` is `d_point`.
    pub fn backward(&self, ids: &[usize], spec: &BallSpec, d_point: &[f64], grad: &mut EncoderParams) {
        let h = self.pool(ids);
        let z = self.affine(&h);
        let dz = raw::project_backward(&z, spec, d_point);
        for (b, d) in grad.out_bias.iter_mut().zip(&dz) {
            *b += d;
        }
        let mut dh = vec![0.0; self.d_tok];
        for i in 0..self.d_tok {
            let row = &self.out_weight[i * self.dim..(i + 1) * self.dim];
            let grow = &mut grad.out_weight[i * self.dim..(i + 1) * self.dim];
            let mut acc = 0.0;
            for j in 0..self.dim {
                grow[j] += h[i] * dz[j];
                acc += row[j] * dz[j];
            }
            dh[i] = acc;
        }
        if ids.is_empty() {
            return;
        }
        let inv = 1.0 / ids.len() as f64;
        for &id in ids {
            let grow = &mut grad.token_table[id * self.d_tok..(id + 1) * self.d_tok];
            for (g, d) in grow.iter_mut().zip(&dh) {
                *g += d * inv;
            }
        }
    }

    pub fn slices_mut(&mut self) -> [&mut Vec<f64>; 3] {
        [&mut self.token_table, &mut self.out_weight, &mut self.out_bias]
    }

    pub fn slices(&self) -> [&Vec<f64>; 3] {
        [&self.token_table, &self.out_weight, &self.out_bias]
    }
}

/// Anything that can place a verbalization in the ball.
pub trait TextEncoder {
    fn ball(&self) -> BallSpec;
    fn encode_text(&self, text: &str) -> Result<PoincarePoint, EncodeError>;
}

/// Pooled token table + affine map + projection.
pub fn encode(s: &str, p: &EncoderParams, vocab: &TokenVocab, spec: BallSpec) -> Result<PoincarePoint, EncodeError> {
    p.check(vocab.len(), &spec)?;
    let z = p.raw_vector(&vocab.ids(s));
    Ok(geometry::project_to_ball(&z, spec)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceEncoder {
    pub ball: BallSpec,
    pub vocab: TokenVocab,
    pub params: EncoderParams,
}

impl TextEncoder for ReferenceEncoder {
    fn ball(&self) -> BallSpec {
        self.ball
    }

    fn encode_text(&self, text: &str) -> Result<PoincarePoint, EncodeError> {
        encode(text, &self.params, &self.vocab, self.ball)
    }
}

pub fn verbalization_key(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Fixed vectors looked up by [`verbalization_key`] and projected into the ball.
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalEmbeddings {
    ball: BallSpec,
    vectors: HashMap<String, Vec<f64>>,
}

impl ExternalEmbeddings {
    pub fn new(ball: BallSpec) -> Self {
        ExternalEmbeddings {
            ball,
            vectors: HashMap::new(),
        }
    }

    pub fn insert_text(&mut self, text: &str, v: Vec<f64>) {
        self.vectors.insert(verbalization_key(text), v);
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

/// Reads `key<TAB>v1<TAB>v2...` lines (values may also be space-separated).
pub fn load_external_embeddings(source: &str, ball: BallSpec) -> Result<ExternalEmbeddings, EncodeError> {
    let mut out = ExternalEmbeddings::new(ball);
    for (idx, raw_line) in source.lines().enumerate() {
        let line = idx + 1;
        if raw_line.trim().is_empty() || raw_line.trim_start().starts_with('#') {
            continue;
        }
        let (key, rest) = raw_line.split_once('\t').ok_or_else(|| EncodeError::EmbeddingSyntax {
            line,
            message: "expected `key<TAB>values`".into(),
        })?;
        let values = rest
            .split(['\t', ' '])
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<f64>().map_err(|_| EncodeError::EmbeddingSyntax {
                    line,
                    message: format!("not a number: {s:?}"),
                })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        if values.len() != ball.dim {
            return Err(EncodeError::EmbeddingDimension {
                line,
                expected: ball.dim,
                found: values.len(),
            });
        }
        out.vectors.insert(key.trim().to_string(), values);
    }
    Ok(out)
}

impl TextEncoder for ExternalEmbeddings {
    fn ball(&self) -> BallSpec {
        self.ball
    }

    fn encode_text(&self, text: &str) -> Result<PoincarePoint, EncodeError> {
        let key = verbalization_key(text);
        let v = self.vectors.get(&key).ok_or_else(|| EncodeError::MissingEmbedding {
            text: text.to_string(),
            key: key.clone(),
        })?;
        Ok(geometry::project_to_ball(v, self.ball)?)
    }
}

/// `⟦C⟧ = encode(V(C))`.
pub fn embed_concept<E: TextEncoder + ?Sized>(
    c: &Concept,
    labels: &LabelMap,
    defs: &DefinitionMap,
    encoder: &E,
) -> Result<PoincarePoint, EmbedError> {
    let text = verbalize(c, labels, defs)?;
    Ok(encoder.encode_text(&text)?)
}

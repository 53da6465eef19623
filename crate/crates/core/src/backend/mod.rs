//! The scoring contract consumed by every probe, plus the toy masked LM.
//!
//! A backend offers up to two products: a probability distribution over the
//! vocabulary at masked positions (behavioral probes) and per-layer token
//! vectors `f^0..f^L` (structural probes). Backends advertise which of the two
//! they support through [`Capabilities`].

mod model;
mod schedule;
mod train;

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::{Error, Result};

pub use model::{ParamLayout, TensorEntry, ToyMlm, ToyMlmConfig};
pub use schedule::{default_checkpoint_schedule, uniform_checkpoint_schedule};
pub use train::{
    gradient_check, heldout_loss, pretrain_toy, CheckpointSink, GradCheck, GradCheckOptions, LossRecord, MemorySink,
    PretrainOutcome, TrainState, TrainingBatch, TrainingExample,
};

pub type TokenId = u32;

pub const MASK_TOKEN: &str = "[MASK]";
pub const PAD_TOKEN: &str = "[PAD]";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: BTreeMap<String, TokenId>,
    mask_id: TokenId,
    pad_id: TokenId,
}

impl Vocabulary {
    /// Build from an ordered token list; ids are list positions. The list must
    /// contain `[MASK]` and `[PAD]`.
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        let mut index = BTreeMap::new();
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(Error::Data(alloc::format!(
                    "vocabulary entry {i} `{t}` is empty or contains whitespace"
                )));
            }
            if index.insert(t.clone(), i as TokenId).is_some() {
                return Err(Error::Data(alloc::format!("duplicate vocabulary token `{t}`")));
            }
        }
        let find = |name: &str| {
            index
                .get(name)
                .copied()
                .ok_or_else(|| Error::Data(alloc::format!("vocabulary lacks `{name}`")))
        };
        let mask_id = find(MASK_TOKEN)?;
        let pad_id = find(PAD_TOKEN)?;
        Ok(Vocabulary {
            tokens,
            index,
            mask_id,
            pad_id,
        })
    }

    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn mask_id(&self) -> TokenId {
        self.mask_id
    }

    pub fn pad_id(&self) -> TokenId {
        self.pad_id
    }

    pub fn is_special(&self, id: TokenId) -> bool {
        id == self.mask_id || id == self.pad_id
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    /// Map a token sequence to ids; the first unknown token is reported.
    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Result<Vec<TokenId>> {
        tokens
            .iter()
            .map(|t| {
                self.id(t.as_ref())
                    .ok_or_else(|| Error::OutOfVocabulary(t.as_ref().to_string()))
            })
            .collect()
    }
}

/// Probabilities over the vocabulary at one masked position.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedDistribution {
    pub position: usize,
    pub probs: Vec<f64>,
}

impl MaskedDistribution {
    pub fn prob(&self, id: TokenId) -> f64 {
        self.probs[id as usize]
    }

    pub fn argmax(&self) -> TokenId {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best as TokenId
    }
}

/// Token vectors for layers `0..=L`; layer 0 is the plain embedding lookup.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerRepresentations {
    n_layers: usize,
    seq_len: usize,
    width: usize,
    data: Vec<f64>,
}

impl LayerRepresentations {
    /// `data` holds `n_layers` blocks of `seq_len × width` values.
    pub fn new(n_layers: usize, seq_len: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if n_layers == 0 || data.len() != n_layers * seq_len * width {
            return Err(Error::ContractViolation(alloc::format!(
                "representation buffer of {} values does not match {n_layers}×{seq_len}×{width}",
                data.len()
            )));
        }
        Ok(LayerRepresentations {
            n_layers,
            seq_len,
            width,
            data,
        })
    }

    /// Number of layers including layer 0 (that is, `L + 1`).
    pub fn n_layers(&self) -> usize {
        self.n_layers
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn layer(&self, l: usize) -> &[f64] {
        let n = self.seq_len * self.width;
        &self.data[l * n..(l + 1) * n]
    }

    pub fn vector(&self, l: usize, position: usize) -> &[f64] {
        let start = (l * self.seq_len + position) * self.width;
        &self.data[start..start + self.width]
    }

    pub fn scaled(&self, c: f64) -> Self {
        LayerRepresentations {
            data: self.data.iter().map(|v| v * c).collect(),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Capabilities {
    /// Supports `score_masked`.
    pub masked_lm: bool,
    /// Number of representation layers returned by `encode` (`L + 1`).
    pub n_layers: usize,
    pub width: usize,
    pub max_seq_len: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedQuery {
    pub tokens: Vec<TokenId>,
    pub positions: Vec<usize>,
}

pub trait Backend: Sync {
    fn vocab(&self) -> &Vocabulary;

    fn capabilities(&self) -> Capabilities;

    /// One distribution per masked position, in the order given. Every
    /// position must hold the mask id.
    fn score_masked(&self, tokens: &[TokenId], positions: &[usize]) -> Result<Vec<MaskedDistribution>>;

    /// Batched form of [`Backend::score_masked`]; must return exactly what
    /// per-query calls would.
    fn score_masked_batch(&self, queries: &[MaskedQuery]) -> Result<Vec<Vec<MaskedDistribution>>> {
        queries
            .iter()
            .map(|q| self.score_masked(&q.tokens, &q.positions))
            .collect()
    }

    fn encode(&self, tokens: &[TokenId]) -> Result<LayerRepresentations>;

    /// Digest of all state that affects outputs.
    fn state_digest(&self) -> [u8; 32];
}

/// Shared precondition check for `score_masked` implementations.
pub fn check_masked_query(
    vocab: &Vocabulary,
    max_seq_len: usize,
    tokens: &[TokenId],
    positions: &[usize],
) -> Result<()> {
    if tokens.len() > max_seq_len {
        return Err(Error::Index {
            index: tokens.len(),
            len: max_seq_len,
        });
    }
    if let Some(&t) = tokens.iter().find(|&&t| t as usize >= vocab.size()) {
        return Err(Error::Index {
            index: t as usize,
            len: vocab.size(),
        });
    }
    for &p in positions {
        if p >= tokens.len() {
            return Err(Error::Index {
                index: p,
                len: tokens.len(),
            });
        }
        if tokens[p] != vocab.mask_id() {
            return Err(Error::ContractViolation(alloc::format!(
                "position {p} does not hold the mask token"
            )));
        }
    }
    Ok(())
}

pub(crate) fn digest_f64s(chunks: &[&[f64]]) -> [u8; 32] {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    for chunk in chunks {
        h.update((chunk.len() as u64).to_le_bytes());
        for v in *chunk {
            h.update(v.to_le_bytes());
        }
    }
    h.finalize().into()
}

#![allow(dead_code)]

use std::sync::OnceLock;

use probetime_core::backend::{
    check_masked_query, pretrain_toy, uniform_checkpoint_schedule, Backend, Capabilities, LayerRepresentations,
    LossRecord, MaskedDistribution, MemorySink, TokenId, ToyMlm, ToyMlmConfig, Vocabulary,
};
use probetime_core::synth::{gen_corpus, gen_probe_suites, ProbeSuites, SynthLanguageConfig};
use probetime_core::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

pub fn vocab_of(n: usize) -> Vocabulary {
    let mut tokens = vec!["[PAD]".to_string(), "[MASK]".to_string()];
    tokens.extend((0..n).map(|i| format!("w{i}")));
    Vocabulary::new(tokens).unwrap()
}

/// Every masked position gets the uniform distribution.
pub struct UniformStub {
    pub vocab: Vocabulary,
}

impl Backend for UniformStub {
    fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }
    fn capabilities(&self) -> Capabilities {
        Capabilities {
            masked_lm: true,
            n_layers: 0,
            width: 0,
            max_seq_len: 64,
        }
    }
    fn score_masked(&self, tokens: &[TokenId], positions: &[usize]) -> Result<Vec<MaskedDistribution>> {
        check_masked_query(&self.vocab, 64, tokens, positions)?;
        let v = self.vocab.size();
        Ok(positions
            .iter()
            .map(|&p| MaskedDistribution {
                position: p,
                probs: vec![1.0 / v as f64; v],
            })
            .collect())
    }
    fn encode(&self, _: &[TokenId]) -> Result<LayerRepresentations> {
        Err(Error::Capability("stub".into()))
    }
    fn state_digest(&self) -> [u8; 32] {
        [0; 32]
    }
}

fn hash(words: &[u64]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for w in words {
        for b in w.to_le_bytes() {
            h = (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

/// Context-dependent pseudo-random distributions, optionally scaled.
pub struct HashStub {
    pub vocab: Vocabulary,
    pub salt: u64,
    /// Multiply every probability by this factor (mass moves to `[PAD]`).
    pub scale: f64,
}

impl Backend for HashStub {
    fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }
    fn capabilities(&self) -> Capabilities {
        Capabilities {
            masked_lm: true,
            n_layers: 0,
            width: 0,
            max_seq_len: 64,
        }
    }
    fn score_masked(&self, tokens: &[TokenId], positions: &[usize]) -> Result<Vec<MaskedDistribution>> {
        check_masked_query(&self.vocab, 64, tokens, positions)?;
        let v = self.vocab.size();
        let ctx: Vec<u64> = std::iter::once(self.salt)
            .chain(tokens.iter().map(|&t| u64::from(t)))
            .collect();
        Ok(positions
            .iter()
            .map(|&p| {
                let mut probs: Vec<f64> = (0..v)
                    .map(|t| {
                        let h = hash(&[hash(&ctx), p as u64, t as u64]);
                        self.scale * (1.0 + (h % 1000) as f64) / (4.0 * v as f64 * 1000.0)
                    })
                    .collect();
                let pad = self.vocab.pad_id() as usize;
                probs[pad] = 0.0;
                probs[pad] = 1.0 - probs.iter().sum::<f64>();
                MaskedDistribution { position: p, probs }
            })
            .collect())
    }
    fn encode(&self, _: &[TokenId]) -> Result<LayerRepresentations> {
        Err(Error::Capability("stub".into()))
    }
    fn state_digest(&self) -> [u8; 32] {
        [0; 32]
    }
}

/// Representation-only backend returning a fixed vector per type and layer.
pub struct TableStub {
    pub vocab: Vocabulary,
    pub n_layers: usize,
    pub width: usize,
    /// `table[l][t]` is the layer-`l` vector of token `t`.
    pub table: Vec<Vec<Vec<f64>>>,
}

impl TableStub {
    pub fn random(vocab: Vocabulary, n_layers: usize, width: usize, seed: u64) -> Self {
        let mut r = rng(seed);
        let table = (0..n_layers)
            .map(|_| {
                (0..vocab.size())
                    .map(|_| (0..width).map(|_| r.random_range(-1.0..1.0)).collect())
                    .collect()
            })
            .collect();
        TableStub {
            vocab,
            n_layers,
            width,
            table,
        }
    }
}

impl Backend for TableStub {
    fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }
    fn capabilities(&self) -> Capabilities {
        Capabilities {
            masked_lm: false,
            n_layers: self.n_layers,
            width: self.width,
            max_seq_len: 64,
        }
    }
    fn score_masked(&self, _: &[TokenId], _: &[usize]) -> Result<Vec<MaskedDistribution>> {
        Err(Error::Capability("stub".into()))
    }
    fn encode(&self, tokens: &[TokenId]) -> Result<LayerRepresentations> {
        let mut data = Vec::new();
        for l in 0..self.n_layers {
            for &t in tokens {
                data.extend_from_slice(&self.table[l][t as usize]);
            }
        }
        LayerRepresentations::new(self.n_layers, tokens.len(), self.width, data)
    }
    fn state_digest(&self) -> [u8; 32] {
        let mut out = [0u8; 32];
        let flat: Vec<u64> = self.table.iter().flatten().flatten().map(|v| v.to_bits()).collect();
        out[..8].copy_from_slice(&hash(&flat).to_le_bytes());
        out
    }
}

pub struct Trained {
    pub synth: SynthLanguageConfig,
    pub suites: ProbeSuites,
    pub vocab: Vocabulary,
    pub config: ToyMlmConfig,
    pub initial: ToyMlm,
    pub model: ToyMlm,
    /// Loss log of the run; held-out losses appear at step 0 and the final step.
    pub losses: Vec<LossRecord>,
}

/// A briefly trained toy model on a small dense corpus, shared per test binary.
pub fn trained() -> &'static Trained {
    static CELL: OnceLock<Trained> = OnceLock::new();
    CELL.get_or_init(|| {
        let synth = SynthLanguageConfig {
            sentence_count: 4000,
            ..SynthLanguageConfig::dense(11)
        };
        let corpus = gen_corpus(&synth).unwrap();
        let suites = gen_probe_suites(&synth, &corpus).unwrap();
        let vocab = Vocabulary::new(corpus.vocabulary.clone()).unwrap();
        let ids: Vec<Vec<TokenId>> = corpus.sentences.iter().map(|s| vocab.encode(s).unwrap()).collect();
        let mut config = ToyMlmConfig::toy(vocab.size());
        config.total_steps = 800;
        config.warmup_steps = 50;
        config.checkpoint_schedule = uniform_checkpoint_schedule(800, 800);
        let mut sink = MemorySink::default();
        pretrain_toy(&config, &vocab, &ids, &mut sink, None).unwrap();
        let initial = sink.checkpoints[0].model(&config, &vocab).unwrap();
        let model = sink.checkpoints.last().unwrap().model(&config, &vocab).unwrap();
        Trained {
            synth,
            suites,
            vocab,
            config,
            initial,
            model,
            losses: sink.losses,
        }
    })
}

//! Reference points that give probe scores a scale: chance level,
//! representation-only backends (random vectors, static embeddings), and
//! reference checkpoints evaluated through the ordinary path.

use alloc::collections::BTreeMap;
use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::backend::{
    digest_f64s, Backend, Capabilities, LayerRepresentations, MaskedDistribution, TokenId, ToyMlm, ToyMlmConfig,
    Vocabulary,
};
use crate::probes::structural::ProbeHyper;
use crate::probes::{evaluate_task, Score, SuiteData, TaskData};
use crate::rng::{derive, stream};
use crate::series::{ProbeFamily, ProbeTaskSpec, RunRecord, Step};
use crate::{Error, Result};

/// Run tag given to records of the reference checkpoint.
pub const REFERENCE_RUN_TAG: &str = "reference";
/// Untrained-model trials averaged into the random-initialization baseline.
pub const RANDOM_INIT_TRIALS: usize = 3;
/// Random-vector width when none is configured.
pub const DEFAULT_RANDOM_VECTOR_DIM: usize = 300;
/// Half-width of the cube random vectors are drawn from.
pub const RANDOM_VECTOR_RANGE: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    RandomGuess,
    RandomVector,
    StaticEmbedding,
    ReferenceCheckpoint,
    /// Step-0 models of several seeds, averaged.
    RandomInit,
}

impl BaselineKind {
    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::RandomGuess => "random_guess",
            BaselineKind::RandomVector => "random_vector",
            BaselineKind::StaticEmbedding => "static_embedding",
            BaselineKind::ReferenceCheckpoint => "reference_checkpoint",
            BaselineKind::RandomInit => "random_init",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Static embedding table file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<String>,
    /// Reference checkpoint directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<String>,
    /// Number of seeds for `random_init`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineSpec {
    pub kind: BaselineKind,
    #[serde(default)]
    pub params: BaselineParams,
}

impl BaselineSpec {
    pub fn new(kind: BaselineKind) -> Self {
        BaselineSpec {
            kind,
            params: BaselineParams::default(),
        }
    }

    /// Label used as the run tag of this baseline's records.
    pub fn run_tag(&self) -> String {
        match self.kind {
            BaselineKind::ReferenceCheckpoint => REFERENCE_RUN_TAG.to_string(),
            k => alloc::format!("baseline:{}", k.name()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.params;
        match self.kind {
            BaselineKind::StaticEmbedding if p.table.is_none() => {
                Err(Error::config("table", "static_embedding baseline needs a table file"))
            }
            BaselineKind::ReferenceCheckpoint if p.checkpoint.is_none() => Err(Error::config(
                "checkpoint",
                "reference_checkpoint baseline needs a checkpoint",
            )),
            BaselineKind::RandomVector if p.dim == Some(0) => Err(Error::config("dim", "must be positive")),
            BaselineKind::RandomInit if p.trials == Some(0) => Err(Error::config("trials", "must be positive")),
            _ => Ok(()),
        }
    }
}

/// Expected accuracy of guessing uniformly at random.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomGuess {
    pub value: f64,
    /// Set when the figure is the `k / V` approximation for a full-vocabulary pool.
    pub approximate: bool,
}

fn mean(xs: impl Iterator<Item = f64>) -> Result<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for x in xs {
        sum += x;
        n += 1;
    }
    if n == 0 {
        return Err(Error::NoData("no items to average over".into()));
    }
    Ok(sum / n as f64)
}

fn label_count<'a>(labels: impl Iterator<Item = &'a String>) -> usize {
    labels.collect::<BTreeSet<_>>().len()
}

/// Mean over items of `1 / #choices`. A minimal-pair item with `b` bad
/// sentences has `1 + b` choices; structural tasks use the training label set.
/// Cloze items with a full-vocabulary pool give `k / V`, flagged approximate.
/// Span F1 has no chance level of this form and is rejected.
pub fn random_guess_accuracy(spec: &ProbeTaskSpec, data: &TaskData, vocab_size: usize) -> Result<RandomGuess> {
    let exact = |value| {
        Ok(RandomGuess {
            value,
            approximate: false,
        })
    };
    match data {
        TaskData::MinimalPairs(items) => exact(mean(items.iter().map(|i| 1.0 / (1 + i.bads.len()) as f64))?),
        TaskData::MultiChoice(items) => exact(mean(items.iter().map(|i| 1.0 / i.choices.len() as f64))?),
        TaskData::Cloze(items) => {
            let k = spec.k() as f64;
            let mut approximate = false;
            let value = mean(items.iter().map(|i| match &i.candidates {
                Some(c) => (k / c.len() as f64).min(1.0),
                None => {
                    approximate = true;
                    (k / vocab_size as f64).min(1.0)
                }
            }))?;
            Ok(RandomGuess { value, approximate })
        }
        TaskData::TokenLabels(splits) => {
            if spec.family == ProbeFamily::Segmentation {
                return Err(Error::Capability("no random-guess level is defined for span F1".into()));
            }
            let n = label_count(splits.train.iter().flat_map(|s| s.labels.iter()));
            if n == 0 {
                return Err(Error::NoData("empty training label set".into()));
            }
            exact(1.0 / n as f64)
        }
        TaskData::Arcs(splits) => {
            let n = match spec.family {
                ProbeFamily::ArcPred => 2,
                _ => label_count(splits.train.iter().flat_map(|s| s.arcs.iter().map(|a| &a.label))),
            };
            if n == 0 {
                return Err(Error::NoData("empty training label set".into()));
            }
            exact(1.0 / n as f64)
        }
    }
}

fn check_ids(vocab: &Vocabulary, tokens: &[TokenId]) -> Result<()> {
    match tokens.iter().find(|&&t| t as usize >= vocab.size()) {
        Some(&t) => Err(Error::Index {
            index: t as usize,
            len: vocab.size(),
        }),
        None => Ok(()),
    }
}

/// A single representation layer taken from a per-type lookup table.
#[derive(Debug, Clone, PartialEq)]
pub struct LookupBackend {
    vocab: Vocabulary,
    width: usize,
    /// Row-major `V × width`.
    table: Vec<f64>,
    missing: Vec<String>,
}

impl LookupBackend {
    fn from_rows(vocab: Vocabulary, width: usize, table: Vec<f64>, missing: Vec<String>) -> Self {
        LookupBackend {
            vocab,
            width,
            table,
            missing,
        }
    }

    pub fn row(&self, id: TokenId) -> &[f64] {
        &self.table[id as usize * self.width..(id as usize + 1) * self.width]
    }

    /// Vocabulary tokens that had no table entry and map to the zero vector.
    pub fn missing(&self) -> &[String] {
        &self.missing
    }
}

impl Backend for LookupBackend {
    fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            masked_lm: false,
            n_layers: 1,
            width: self.width,
            max_seq_len: usize::MAX,
        }
    }

    fn score_masked(&self, _: &[TokenId], _: &[usize]) -> Result<Vec<MaskedDistribution>> {
        Err(Error::Capability(
            "a lookup-table backend has no masked-token distribution".into(),
        ))
    }

    fn encode(&self, tokens: &[TokenId]) -> Result<LayerRepresentations> {
        check_ids(&self.vocab, tokens)?;
        let data = tokens.iter().flat_map(|&t| self.row(t).iter().copied()).collect();
        LayerRepresentations::new(1, tokens.len(), self.width, data)
    }

    fn state_digest(&self) -> [u8; 32] {
        digest_f64s(&[&self.table])
    }
}

/// Every type mapped to a fixed vector drawn uniformly from `[-2, 2]^d`.
pub fn random_vector_backend(vocab: &Vocabulary, d: usize, seed: u64) -> Result<LookupBackend> {
    if d == 0 {
        return Err(Error::config("dim", "must be positive"));
    }
    let dist =
        Uniform::new_inclusive(-RANDOM_VECTOR_RANGE, RANDOM_VECTOR_RANGE).map_err(|e| Error::Data(e.to_string()))?;
    let mut rng = stream(seed, "random-vectors", &[]);
    let table = (0..vocab.size() * d).map(|_| dist.sample(&mut rng)).collect();
    Ok(LookupBackend::from_rows(vocab.clone(), d, table, Vec::new()))
}

/// Layer 0 is a lookup in `table`; vocabulary tokens without an entry get the
/// zero vector and are listed by [`LookupBackend::missing`].
pub fn static_embedding_backend(vocab: &Vocabulary, table: &BTreeMap<String, Vec<f64>>) -> Result<LookupBackend> {
    let width = match table.values().next() {
        Some(v) if !v.is_empty() => v.len(),
        _ => return Err(Error::Data("static embedding table is empty".into())),
    };
    if let Some((w, _)) = table.iter().find(|(_, v)| v.len() != width) {
        return Err(Error::Data(alloc::format!(
            "embedding for `{w}` does not have width {width}"
        )));
    }
    let mut rows = Vec::with_capacity(vocab.size() * width);
    let mut missing = Vec::new();
    for (id, token) in vocab.tokens().iter().enumerate() {
        match table.get(token) {
            Some(v) => rows.extend_from_slice(v),
            None => {
                rows.extend(core::iter::repeat_n(0.0, width));
                if !vocab.is_special(id as TokenId) {
                    missing.push(token.clone());
                }
            }
        }
    }
    Ok(LookupBackend::from_rows(vocab.clone(), width, rows, missing))
}

/// Evaluate every task on a reference backend; records are tagged
/// [`REFERENCE_RUN_TAG`] and labeled with the checkpoint's own step.
pub fn reference_eval(
    suite: &SuiteData,
    backend: &dyn Backend,
    step: Step,
    hyper: &ProbeHyper,
) -> Result<Vec<RunRecord>> {
    suite
        .tasks
        .iter()
        .map(|(spec, data)| {
            let score = evaluate_task(spec, data, backend, hyper)?;
            Ok(RunRecord {
                run_tag: REFERENCE_RUN_TAG.into(),
                record: score.into_record(&spec.task_id, step)?,
            })
        })
        .collect()
}

/// Mean score of `trials` untrained toy models that share `config` except for
/// the seed; trial `i` is seeded from `(seed, i)`. Item counts come from the
/// first trial, which sees the same data as every other.
pub fn random_init_eval(
    spec: &ProbeTaskSpec,
    data: &TaskData,
    config: &ToyMlmConfig,
    vocab: &Vocabulary,
    trials: usize,
    hyper: &ProbeHyper,
) -> Result<Score> {
    if trials == 0 {
        return Err(Error::config("trials", "must be positive"));
    }
    let mut scores = Vec::with_capacity(trials);
    for i in 0..trials {
        let config = ToyMlmConfig {
            seed: derive(config.seed, "random-init", &[i as u64]),
            ..config.clone()
        };
        let model = ToyMlm::initialized(config, vocab.clone())?;
        scores.push(evaluate_task(spec, data, &model, hyper)?);
    }
    Ok(Score {
        value: scores.iter().map(|s| s.value).sum::<f64>() / trials as f64,
        ..scores[0]
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probes::{MinimalPairItem, MultiChoiceItem};
    use crate::series::Metric;
    use alloc::vec;

    fn vocab() -> Vocabulary {
        Vocabulary::new(["[PAD]", "[MASK]", "a", "b"].iter().map(|s| s.to_string()).collect()).unwrap()
    }

    #[test]
    fn random_vectors_are_bounded_and_deterministic() {
        let v = vocab();
        let a = random_vector_backend(&v, 50, 7).unwrap();
        assert_eq!(a, random_vector_backend(&v, 50, 7).unwrap());
        assert_ne!(a, random_vector_backend(&v, 50, 8).unwrap());
        assert!(a.table.iter().all(|x| (-2.0..=2.0).contains(x)));
        assert!(random_vector_backend(&v, 0, 7).is_err());
        let reps = a.encode(&[3, 2]).unwrap();
        assert_eq!(reps.n_layers(), 1);
        assert_eq!(reps.vector(0, 0), a.row(3));
        assert!(matches!(a.encode(&[9]), Err(Error::Index { .. })));
        assert!(matches!(a.score_masked(&[1], &[0]), Err(Error::Capability(_))));
    }

    #[test]
    fn static_table_lookup_and_missing_words() {
        let table: BTreeMap<String, Vec<f64>> = [("a".to_string(), vec![1.0, 2.0])].into_iter().collect();
        let b = static_embedding_backend(&vocab(), &table).unwrap();
        assert_eq!(b.encode(&[2, 3]).unwrap().layer(0), &[1.0, 2.0, 0.0, 0.0]);
        assert_eq!(b.missing(), &["b".to_string()]);
        let ragged: BTreeMap<String, Vec<f64>> = [("a".to_string(), vec![1.0]), ("b".to_string(), vec![1.0, 2.0])]
            .into_iter()
            .collect();
        assert!(static_embedding_backend(&vocab(), &ragged).is_err());
    }

    #[test]
    fn random_guess_levels() {
        let mp = |bads: usize| MinimalPairItem {
            id: "x".into(),
            good: vec!["a".into()],
            bads: (0..bads).map(|i| vec![alloc::format!("b{i}")]).collect(),
        };
        let spec = ProbeTaskSpec::new("mp", ProbeFamily::MinimalPair, "mp.jsonl", Metric::Accuracy);
        let g = random_guess_accuracy(&spec, &TaskData::MinimalPairs(vec![mp(1), mp(1)]), 10).unwrap();
        assert_eq!(
            g,
            RandomGuess {
                value: 0.5,
                approximate: false
            }
        );
        let mc = |n: usize| MultiChoiceItem {
            id: "m".into(),
            tokens: vec!["[MASK]".into()],
            choices: (0..n).map(|i| i.to_string()).collect(),
            answer_index: 0,
        };
        let spec = ProbeTaskSpec::new("mc", ProbeFamily::Multichoice, "mc.jsonl", Metric::Accuracy);
        let g = random_guess_accuracy(&spec, &TaskData::MultiChoice(vec![mc(4), mc(4)]), 10).unwrap();
        assert_eq!(g.value, 0.25);
    }

    #[test]
    fn spec_validation() {
        assert!(BaselineSpec::new(BaselineKind::StaticEmbedding).validate().is_err());
        assert!(BaselineSpec::new(BaselineKind::ReferenceCheckpoint).validate().is_err());
        assert!(BaselineSpec::new(BaselineKind::RandomGuess).validate().is_ok());
        assert_eq!(
            BaselineSpec::new(BaselineKind::RandomVector).run_tag(),
            "baseline:random_vector"
        );
    }
}

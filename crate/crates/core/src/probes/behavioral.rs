//! Probes that read the masked-token distribution directly.
//!
//! Items that cannot be scored (unknown tokens, sequences longer than the
//! backend accepts) are skipped and counted; every evaluator satisfies
//! `n_items + n_skipped == items.len()`.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use super::{ClozeItem, MinimalPairItem, MultiChoiceItem, Score};
use crate::backend::{Backend, MaskedQuery, TokenId};
use crate::{Error, Result};

/// Floor applied before taking logs so scores stay finite.
pub const PROB_FLOOR: f64 = 1e-30;

fn require_masked_lm(backend: &dyn Backend) -> Result<()> {
    if backend.capabilities().masked_lm {
        Ok(())
    } else {
        Err(Error::Capability(
            "behavioral probes need a backend that scores masked tokens".into(),
        ))
    }
}

/// Encode a token sequence, turning unscorable input into the skip signal.
fn encode_scorable<S: AsRef<str>>(backend: &dyn Backend, tokens: &[S]) -> Result<Vec<TokenId>> {
    let max = backend.capabilities().max_seq_len;
    if tokens.len() > max {
        return Err(Error::OutOfVocabulary(alloc::format!(
            "sequence of {} tokens exceeds the backend limit of {max}",
            tokens.len()
        )));
    }
    backend.vocab().encode(tokens)
}

fn pll_ids(backend: &dyn Backend, ids: &[TokenId]) -> Result<f64> {
    let mask = backend.vocab().mask_id();
    let queries: Vec<MaskedQuery> = (0..ids.len())
        .map(|i| {
            let mut tokens = ids.to_vec();
            tokens[i] = mask;
            MaskedQuery {
                tokens,
                positions: alloc::vec![i],
            }
        })
        .collect();
    let dists = backend.score_masked_batch(&queries)?;
    let total: f64 = dists
        .iter()
        .zip(ids)
        .map(|(d, &w)| d[0].prob(w).max(PROB_FLOOR).ln())
        .sum();
    Ok(total / ids.len() as f64)
}

/// Pseudo-log-likelihood: mean over positions of `log P(w_i | sentence with i masked)`.
///
/// Unknown tokens yield [`Error::OutOfVocabulary`], the skip signal.
pub fn pll_score<S: AsRef<str>>(sentence: &[S], backend: &dyn Backend) -> Result<f64> {
    require_masked_lm(backend)?;
    if sentence.is_empty() {
        return Err(Error::Data("cannot score an empty sentence".into()));
    }
    let ids = encode_scorable(backend, sentence)?;
    pll_ids(backend, &ids)
}

fn skip_or<T>(r: Result<T>) -> Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::OutOfVocabulary(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Accuracy where an item counts only if the good sentence strictly outscores
/// every bad sentence. Ties are incorrect.
pub fn eval_minimal_pairs(items: &[MinimalPairItem], backend: &dyn Backend) -> Result<Score> {
    require_masked_lm(backend)?;
    let (mut correct, mut scored) = (0, 0);
    for item in items {
        item.validate()?;
        let outcome = skip_or((|| {
            let good = pll_score(&item.good, backend)?;
            let mut wins = true;
            for bad in &item.bads {
                wins &= good > pll_score(bad, backend)?;
            }
            Ok(wins)
        })())?;
        if let Some(wins) = outcome {
            scored += 1;
            correct += usize::from(wins);
        }
    }
    Score::from_counts(correct, scored, items.len() - scored)
}

/// Rank of `answer` in `pool` under `probs`: one plus the number of other pool
/// tokens whose probability is at least the answer's. Ties rank against the answer.
pub fn pool_rank(probs: &[f64], answer: TokenId, pool: &[TokenId]) -> usize {
    let p = probs[answer as usize];
    1 + pool.iter().filter(|&&t| t != answer && probs[t as usize] >= p).count()
}

/// Precision@k. The ranking pool is the item's candidate list when present,
/// otherwise every non-special vocabulary token. Candidates outside the
/// vocabulary are dropped from the pool; an unknown answer skips the item.
pub fn eval_cloze(items: &[ClozeItem], backend: &dyn Backend, k: usize) -> Result<Score> {
    require_masked_lm(backend)?;
    if k == 0 {
        return Err(Error::config("k", "must be at least 1"));
    }
    let vocab = backend.vocab();
    let full_pool: Vec<TokenId> = (0..vocab.size() as TokenId).filter(|&t| !vocab.is_special(t)).collect();
    let (mut correct, mut scored) = (0, 0);
    for item in items {
        let position = item.mask_position()?;
        item.validate()?;
        let Some(answer) = vocab.id(&item.answer) else { continue };
        let Some(ids) = skip_or(encode_scorable(backend, &item.tokens))? else {
            continue;
        };
        let dist = backend.score_masked(&ids, &[position])?;
        let probs = &dist[0].probs;
        let rank = match &item.candidates {
            Some(c) => {
                let pool: Vec<TokenId> = c.iter().filter_map(|t| vocab.id(t)).collect();
                pool_rank(probs, answer, &pool)
            }
            None => pool_rank(probs, answer, &full_pool),
        };
        scored += 1;
        correct += usize::from(rank <= k);
    }
    Score::from_counts(correct, scored, items.len() - scored)
}

/// Index of the highest raw probability among `choices`; the lowest index wins ties.
pub fn choose(probs: &[f64], choices: &[TokenId]) -> usize {
    let mut best = 0;
    for (i, &c) in choices.iter().enumerate() {
        if probs[c as usize] > probs[choices[best] as usize] {
            best = i;
        }
    }
    best
}

/// Accuracy of the argmax choice at the mask slot, using unrenormalized probabilities.
pub fn eval_multichoice(items: &[MultiChoiceItem], backend: &dyn Backend) -> Result<Score> {
    require_masked_lm(backend)?;
    let vocab = backend.vocab();
    let (mut correct, mut scored) = (0, 0);
    for item in items {
        item.validate()?;
        let position = item.mask_position()?;
        let Some(choices) = skip_or(vocab.encode(&item.choices))? else {
            continue;
        };
        let Some(ids) = skip_or(encode_scorable(backend, &item.tokens))? else {
            continue;
        };
        let dist = backend.score_masked(&ids, &[position])?;
        scored += 1;
        correct += usize::from(choose(&dist[0].probs, &choices) == item.answer_index);
    }
    Score::from_counts(correct, scored, items.len() - scored)
}

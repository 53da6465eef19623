//! BIO decoding and labeled span F1.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Half-open token range `[start, end)` with its type.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub label: String,
}

enum Bio<'a> {
    Outside,
    Begin(&'a str),
    Inside(&'a str),
}

fn parse(tag: &str) -> Result<Bio<'_>> {
    if tag == "O" {
        return Ok(Bio::Outside);
    }
    match (tag.strip_prefix("B-"), tag.strip_prefix("I-")) {
        (Some(t), _) if !t.is_empty() => Ok(Bio::Begin(t)),
        (_, Some(t)) if !t.is_empty() => Ok(Bio::Inside(t)),
        _ => Err(Error::Data(alloc::format!("`{tag}` is not a BIO tag"))),
    }
}

/// Decode tags into spans. An `I-X` that does not continue an open `X` span
/// opens a new span.
pub fn bio_spans<S: AsRef<str>>(tags: &[S]) -> Result<Vec<Span>> {
    let mut spans = Vec::new();
    let mut open: Option<Span> = None;
    for (i, tag) in tags.iter().enumerate() {
        let continues = match parse(tag.as_ref())? {
            Bio::Outside => {
                spans.extend(open.take());
                continue;
            }
            Bio::Inside(t) => open.as_ref().is_some_and(|s| s.label == t).then_some(t),
            Bio::Begin(_) => None,
        };
        if continues.is_some() {
            if let Some(s) = open.as_mut() {
                s.end = i + 1;
            }
        } else {
            spans.extend(open.take());
            let label = match parse(tag.as_ref())? {
                Bio::Begin(t) | Bio::Inside(t) => t,
                Bio::Outside => unreachable!(),
            };
            open = Some(Span {
                start: i,
                end: i + 1,
                label: label.into(),
            });
        }
    }
    spans.extend(open);
    Ok(spans)
}

/// Micro-averaged counts over a corpus: (matched, predicted, gold).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SpanCounts {
    pub matched: usize,
    pub predicted: usize,
    pub gold: usize,
}

impl SpanCounts {
    /// `2PR / (P + R)`, defined as 0 when `P + R = 0`.
    pub fn f1(&self) -> f64 {
        if self.matched == 0 {
            return 0.0;
        }
        let p = self.matched as f64 / self.predicted as f64;
        let r = self.matched as f64 / self.gold as f64;
        2.0 * p * r / (p + r)
    }
}

pub fn span_counts<S: AsRef<str>, T: AsRef<str>>(gold: &[Vec<S>], pred: &[Vec<T>]) -> Result<SpanCounts> {
    if gold.len() != pred.len() {
        return Err(Error::ContractViolation(alloc::format!(
            "{} gold sentences but {} predicted",
            gold.len(),
            pred.len()
        )));
    }
    let mut c = SpanCounts::default();
    for (g, p) in gold.iter().zip(pred) {
        if g.len() != p.len() {
            return Err(Error::ContractViolation("tag sequence lengths differ".into()));
        }
        let gs: BTreeSet<Span> = bio_spans(g)?.into_iter().collect();
        let ps: BTreeSet<Span> = bio_spans(p)?.into_iter().collect();
        c.matched += gs.intersection(&ps).count();
        c.gold += gs.len();
        c.predicted += ps.len();
    }
    Ok(c)
}

pub fn span_f1<S: AsRef<str>, T: AsRef<str>>(gold: &[Vec<S>], pred: &[Vec<T>]) -> Result<f64> {
    span_counts(gold, pred).map(|c| c.f1())
}

//! Probe datasets and evaluators.
//!
//! Behavioral probes ([`behavioral`]) use the model's masked-token
//! distribution directly. Structural probes ([`structural`]) train a linear
//! classifier over a scalar mix of frozen layer representations.

pub mod behavioral;
pub mod spans;
pub mod structural;
mod suite;

use alloc::string::String;
use alloc::vec::Vec;

use crate::backend::MASK_TOKEN;
use crate::{Error, Result};

pub use suite::{evaluate_task, SuiteData, TaskData};

/// Outcome of one evaluator run before it is tied to a task and checkpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Score {
    pub value: f64,
    /// Items that were scored.
    pub n_items: usize,
    pub n_skipped: usize,
}

impl Score {
    pub(crate) fn from_counts(correct: usize, scored: usize, skipped: usize) -> Result<Self> {
        if scored == 0 {
            return Err(Error::NoData(alloc::format!("all {skipped} items were skipped")));
        }
        Ok(Score {
            value: correct as f64 / scored as f64,
            n_items: scored,
            n_skipped: skipped,
        })
    }

    pub fn into_record(self, task_id: &str, step: crate::series::Step) -> Result<crate::series::EvalRecord> {
        crate::series::EvalRecord::new(task_id, step, self.value, self.n_items, self.n_skipped)
    }
}

/// Sentence-set comparison: the good sentence must outscore every bad one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MinimalPairItem {
    pub id: String,
    pub good: Vec<String>,
    pub bads: Vec<Vec<String>>,
}

impl MinimalPairItem {
    pub fn validate(&self) -> Result<()> {
        if self.good.is_empty() || self.bads.is_empty() || self.bads.iter().any(Vec::is_empty) {
            return Err(Error::Data(alloc::format!(
                "minimal pair `{}` has an empty sentence or no bad sentences",
                self.id
            )));
        }
        if self.bads.contains(&self.good) {
            return Err(Error::Data(alloc::format!(
                "minimal pair `{}` repeats the good sentence among the bads",
                self.id
            )));
        }
        Ok(())
    }
}

/// Fill-in-the-blank query with a single-token answer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClozeItem {
    pub id: String,
    pub tokens: Vec<String>,
    pub answer: String,
    pub candidates: Option<Vec<String>>,
}

fn single_mask(id: &str, tokens: &[String]) -> Result<usize> {
    let mut slots = tokens.iter().enumerate().filter(|(_, t)| *t == MASK_TOKEN);
    match (slots.next(), slots.next()) {
        (Some((i, _)), None) => Ok(i),
        _ => Err(Error::Data(alloc::format!(
            "item `{id}` must contain exactly one {MASK_TOKEN} slot"
        ))),
    }
}

impl ClozeItem {
    pub fn mask_position(&self) -> Result<usize> {
        single_mask(&self.id, &self.tokens)
    }

    pub fn validate(&self) -> Result<()> {
        self.mask_position()?;
        if let Some(c) = &self.candidates {
            if !c.contains(&self.answer) {
                return Err(Error::Data(alloc::format!(
                    "cloze `{}`: answer `{}` missing from candidates",
                    self.id,
                    self.answer
                )));
            }
        }
        Ok(())
    }
}

/// Mask filling restricted to 2–5 choices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiChoiceItem {
    pub id: String,
    pub tokens: Vec<String>,
    pub choices: Vec<String>,
    pub answer_index: usize,
}

impl MultiChoiceItem {
    pub fn mask_position(&self) -> Result<usize> {
        single_mask(&self.id, &self.tokens)
    }

    pub fn validate(&self) -> Result<()> {
        self.mask_position()?;
        if !(2..=5).contains(&self.choices.len()) || self.answer_index >= self.choices.len() {
            return Err(Error::Data(alloc::format!(
                "multichoice `{}` needs 2-5 choices and a valid answer index",
                self.id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenLabelSentence {
    pub tokens: Vec<String>,
    pub labels: Vec<String>,
}

impl TokenLabelSentence {
    pub fn validate(&self) -> Result<()> {
        if self.tokens.len() != self.labels.len() {
            return Err(Error::Data(alloc::format!(
                "{} tokens but {} labels",
                self.tokens.len(),
                self.labels.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Arc {
    pub head: usize,
    pub dep: usize,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArcSentence {
    pub tokens: Vec<String>,
    pub arcs: Vec<Arc>,
}

impl ArcSentence {
    pub fn validate(&self) -> Result<()> {
        let n = self.tokens.len();
        let mut seen = alloc::collections::BTreeSet::new();
        for a in &self.arcs {
            if a.head >= n || a.dep >= n {
                return Err(Error::Data(alloc::format!(
                    "arc ({}, {}) out of range for {n} tokens",
                    a.head,
                    a.dep
                )));
            }
            if a.head == a.dep {
                return Err(Error::Data(alloc::format!("self-arc at {}", a.head)));
            }
            if !seen.insert((a.head, a.dep)) {
                return Err(Error::Data(alloc::format!("duplicate arc ({}, {})", a.head, a.dep)));
            }
        }
        Ok(())
    }
}

/// Train/dev/test partition of a structural probe dataset.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Splits<T> {
    pub train: Vec<T>,
    pub dev: Vec<T>,
    pub test: Vec<T>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    fn s(words: &str) -> Vec<String> {
        words.split_whitespace().map(ToString::to_string).collect()
    }

    #[test]
    fn item_validation() {
        let mp = MinimalPairItem {
            id: "1".into(),
            good: s("a b"),
            bads: vec![s("a b")],
        };
        assert!(mp.validate().is_err());
        let cz = ClozeItem {
            id: "c".into(),
            tokens: s("a [MASK] [MASK]"),
            answer: "b".into(),
            candidates: None,
        };
        assert!(cz.validate().is_err());
        let cz = ClozeItem {
            id: "c".into(),
            tokens: s("a [MASK]"),
            answer: "b".into(),
            candidates: Some(s("c d")),
        };
        assert!(cz.validate().is_err());
        let mc = MultiChoiceItem {
            id: "m".into(),
            tokens: s("a [MASK]"),
            choices: s("x"),
            answer_index: 0,
        };
        assert!(mc.validate().is_err());
        let arc = ArcSentence {
            tokens: s("a b"),
            arcs: vec![Arc {
                head: 0,
                dep: 0,
                label: "x".into(),
            }],
        };
        assert!(arc.validate().is_err());
        let arc = ArcSentence {
            tokens: s("a b"),
            arcs: vec![
                Arc {
                    head: 0,
                    dep: 1,
                    label: "x".into(),
                },
                Arc {
                    head: 0,
                    dep: 1,
                    label: "y".into(),
                },
            ],
        };
        assert!(arc.validate().is_err());
    }
}

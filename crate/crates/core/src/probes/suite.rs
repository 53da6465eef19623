use alloc::string::String;
use alloc::vec::Vec;

use super::behavioral::{eval_cloze, eval_minimal_pairs, eval_multichoice};
use super::structural::{
    extract_arcs, extract_token_labels, train_probe, ArcMode, FeatureSet, ProbeHyper, StructuralMetric,
};
use super::{ArcSentence, ClozeItem, MinimalPairItem, MultiChoiceItem, Score, Splits, TokenLabelSentence};
use crate::backend::Backend;
use crate::series::{ProbeFamily, ProbeTaskSpec};
use crate::{Error, Result};

/// Loaded dataset for one task. Structural families carry train/dev/test.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TaskData {
    MinimalPairs(Vec<MinimalPairItem>),
    Cloze(Vec<ClozeItem>),
    MultiChoice(Vec<MultiChoiceItem>),
    TokenLabels(Splits<TokenLabelSentence>),
    Arcs(Splits<ArcSentence>),
}

impl TaskData {
    fn accepts(&self, family: ProbeFamily) -> bool {
        matches!(
            (self, family),
            (TaskData::MinimalPairs(_), ProbeFamily::MinimalPair)
                | (TaskData::Cloze(_), ProbeFamily::Cloze)
                | (TaskData::MultiChoice(_), ProbeFamily::Multichoice)
                | (
                    TaskData::TokenLabels(_),
                    ProbeFamily::TokenLabel | ProbeFamily::Segmentation
                )
                | (TaskData::Arcs(_), ProbeFamily::ArcPred | ProbeFamily::ArcClass)
        )
    }
}

/// Task specifications paired with their datasets.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SuiteData {
    pub tasks: Vec<(ProbeTaskSpec, TaskData)>,
    pub hyper: ProbeHyper,
}

impl SuiteData {
    pub fn task(&self, task_id: &str) -> Option<&(ProbeTaskSpec, TaskData)> {
        self.tasks.iter().find(|(s, _)| s.task_id == task_id)
    }

    pub fn task_ids(&self) -> Vec<String> {
        self.tasks.iter().map(|(s, _)| s.task_id.clone()).collect()
    }
}

/// Run one task against one backend. Structural tasks train a fresh probe on
/// the train split, select the epoch on dev and report the test split.
pub fn evaluate_task(
    spec: &ProbeTaskSpec,
    data: &TaskData,
    backend: &dyn Backend,
    hyper: &ProbeHyper,
) -> Result<Score> {
    spec.validate()?;
    if !data.accepts(spec.family) {
        return Err(Error::ContractViolation(alloc::format!(
            "task `{}` of family {} was given a mismatched dataset",
            spec.task_id,
            spec.family.name()
        )));
    }
    let structural = |extract: &dyn Fn(usize) -> Result<FeatureSet>, metric| -> Result<Score> {
        if backend.capabilities().n_layers == 0 {
            return Err(Error::Capability("structural probes need layer representations".into()));
        }
        let (train, dev, test) = (extract(0)?, extract(1)?, extract(2)?);
        let (probe, _) = train_probe(&train, &dev, metric, hyper)?;
        if test.is_empty() {
            return Err(Error::NoData(alloc::format!(
                "task `{}` has no scorable test data",
                spec.task_id
            )));
        }
        Ok(Score {
            value: super::structural::evaluate(&probe, &test, metric)?,
            n_items: test.n_sentences(),
            n_skipped: test.n_skipped,
        })
    };
    match data {
        TaskData::MinimalPairs(items) => eval_minimal_pairs(items, backend),
        TaskData::Cloze(items) => eval_cloze(items, backend, spec.k()),
        TaskData::MultiChoice(items) => eval_multichoice(items, backend),
        TaskData::TokenLabels(splits) => {
            let metric = if spec.family == ProbeFamily::Segmentation {
                for s in splits.train.iter().chain(&splits.dev).chain(&splits.test) {
                    super::spans::bio_spans(&s.labels)?;
                }
                StructuralMetric::SpanF1
            } else {
                StructuralMetric::Accuracy
            };
            let parts = [&splits.train, &splits.dev, &splits.test];
            structural(&|i| extract_token_labels(backend, parts[i]), metric)
        }
        TaskData::Arcs(splits) => {
            let mode = if spec.family == ProbeFamily::ArcPred {
                ArcMode::Pred
            } else {
                ArcMode::Class
            };
            let seed = spec.params.negative_sampling_seed.unwrap_or(0);
            let parts = [&splits.train, &splits.dev, &splits.test];
            structural(
                &|i| {
                    extract_arcs(
                        backend,
                        parts[i],
                        mode,
                        crate::rng::derive(seed, "arc-split", &[i as u64]),
                    )
                },
                StructuralMetric::Accuracy,
            )
        }
    }
}

//! Shared data model: checkpoints, probe task descriptors, evaluation records
//! and the per-task score series that every dynamics metric consumes.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Parameter-update count. Never epochs.
pub type Step = u64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointRef {
    pub step: Step,
    /// Opaque storage reference, resolved by whoever loads the checkpoint.
    pub locator: String,
    pub run_tag: String,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeFamily {
    MinimalPair,
    Cloze,
    Multichoice,
    TokenLabel,
    Segmentation,
    ArcPred,
    ArcClass,
}

impl ProbeFamily {
    pub fn name(self) -> &'static str {
        match self {
            ProbeFamily::MinimalPair => "minimal_pair",
            ProbeFamily::Cloze => "cloze",
            ProbeFamily::Multichoice => "multichoice",
            ProbeFamily::TokenLabel => "token_label",
            ProbeFamily::Segmentation => "segmentation",
            ProbeFamily::ArcPred => "arc_pred",
            ProbeFamily::ArcClass => "arc_class",
        }
    }

    /// Behavioral families query the model's masked-token distribution;
    /// the rest train a classifier on frozen representations.
    pub fn is_behavioral(self) -> bool {
        matches!(
            self,
            ProbeFamily::MinimalPair | ProbeFamily::Cloze | ProbeFamily::Multichoice
        )
    }
}

impl fmt::Display for ProbeFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Accuracy,
    PrecisionAtK,
    SpanF1,
}

impl Metric {
    /// Inclusive range of valid values. All supported metrics are proportions.
    pub fn range(self) -> (f64, f64) {
        (0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskParams {
    /// Cutoff for precision@k.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    /// Seed for arc-prediction negative sampling.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub negative_sampling_seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeTaskSpec {
    pub task_id: String,
    pub family: ProbeFamily,
    /// Behavioral families: path of one JSONL file. Structural families: a
    /// prefix `P` resolved to `P.train.jsonl`, `P.dev.jsonl`, `P.test.jsonl`.
    pub dataset: String,
    pub metric: Metric,
    #[serde(default)]
    pub params: TaskParams,
    /// Grouping used for per-package mean curves; defaults to the family name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub package: Option<String>,
}

impl ProbeTaskSpec {
    pub fn new(task_id: &str, family: ProbeFamily, dataset: &str, metric: Metric) -> Self {
        ProbeTaskSpec {
            task_id: task_id.into(),
            family,
            dataset: dataset.into(),
            metric,
            params: TaskParams::default(),
            package: None,
        }
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.params.k = Some(k);
        self
    }

    pub fn package_name(&self) -> &str {
        self.package.as_deref().unwrap_or(self.family.name())
    }

    pub fn k(&self) -> usize {
        self.params.k.unwrap_or(1)
    }

    pub fn validate(&self) -> Result<()> {
        let compatible = match self.metric {
            Metric::PrecisionAtK => self.family == ProbeFamily::Cloze,
            Metric::SpanF1 => self.family == ProbeFamily::Segmentation,
            Metric::Accuracy => !matches!(self.family, ProbeFamily::Cloze | ProbeFamily::Segmentation),
        };
        if !compatible {
            return Err(Error::config(
                "metric",
                alloc::format!(
                    "task `{}`: metric {:?} is not defined for family {}",
                    self.task_id,
                    self.metric,
                    self.family
                ),
            ));
        }
        if self.params.k == Some(0) {
            return Err(Error::config("k", "k must be at least 1"));
        }
        if self.task_id.is_empty() {
            return Err(Error::config("task_id", "empty task id"));
        }
        Ok(())
    }
}

/// One task evaluated at one checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub task_id: String,
    pub checkpoint_step: Step,
    pub metric_value: f64,
    pub n_items: usize,
    pub n_skipped: usize,
}

impl EvalRecord {
    pub fn new(
        task_id: &str,
        checkpoint_step: Step,
        metric_value: f64,
        n_items: usize,
        n_skipped: usize,
    ) -> Result<Self> {
        if n_items == 0 {
            return Err(Error::NoData(alloc::format!(
                "task `{task_id}`: every item was skipped ({n_skipped})"
            )));
        }
        let (lo, hi) = Metric::Accuracy.range();
        if !(lo..=hi).contains(&metric_value) {
            return Err(Error::ContractViolation(alloc::format!(
                "task `{task_id}`: metric value {metric_value} outside [{lo}, {hi}]"
            )));
        }
        Ok(EvalRecord {
            task_id: task_id.into(),
            checkpoint_step,
            metric_value,
            n_items,
            n_skipped,
        })
    }
}

/// A record tagged with the run (corpus/domain, or baseline) it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_tag: String,
    pub record: EvalRecord,
}

/// Ordered `(step, value)` points of one task over a run.
///
/// Steps are strictly increasing and the list is never empty; construction
/// rejects violations instead of repairing them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSeries {
    task_id: String,
    run_tag: String,
    points: Vec<(Step, f64)>,
    #[serde(default, skip_serializing_if = "core::ops::Not::not")]
    smoothed: bool,
}

impl ScoreSeries {
    pub fn new(task_id: &str, run_tag: &str, points: Vec<(Step, f64)>) -> Result<Self> {
        Self::build(task_id, run_tag, points, false)
    }

    pub(crate) fn build(task_id: &str, run_tag: &str, points: Vec<(Step, f64)>, smoothed: bool) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::NoData(alloc::format!("series `{task_id}` has no points")));
        }
        for w in points.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::ContractViolation(alloc::format!(
                    "series `{task_id}`: steps not strictly increasing at {} -> {}",
                    w[0].0,
                    w[1].0
                )));
            }
        }
        if let Some((s, v)) = points.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::ContractViolation(alloc::format!(
                "series `{task_id}`: non-finite value {v} at step {s}"
            )));
        }
        Ok(ScoreSeries {
            task_id: task_id.into(),
            run_tag: run_tag.into(),
            points,
            smoothed,
        })
    }

    pub fn task_id(&self) -> &str {
        &self.task_id
    }

    pub fn run_tag(&self) -> &str {
        &self.run_tag
    }

    pub fn points(&self) -> &[(Step, f64)] {
        &self.points
    }

    pub fn steps(&self) -> impl Iterator<Item = Step> + '_ {
        self.points.iter().map(|p| p.0)
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.1)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// True for the output of EMA smoothing; raw-only metrics reject it.
    pub fn is_smoothed(&self) -> bool {
        self.smoothed
    }

    pub fn value_at(&self, step: Step) -> Option<f64> {
        self.points
            .binary_search_by_key(&step, |p| p.0)
            .ok()
            .map(|i| self.points[i].1)
    }

    /// Copy with every value transformed; keeps the step axis and flags.
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::build(
            &self.task_id,
            &self.run_tag,
            self.points.iter().map(|&(s, v)| (s, f(v))).collect(),
            self.smoothed,
        )
    }
}

/// Sort one task's records into a series.
pub fn assemble_series(records: &[EvalRecord], task_id: &str, run_tag: &str) -> Result<ScoreSeries> {
    if records.is_empty() {
        return Err(Error::NoData(alloc::format!("no records for task `{task_id}`")));
    }
    if let Some(r) = records.iter().find(|r| r.task_id != task_id) {
        return Err(Error::ContractViolation(alloc::format!(
            "record for task `{}` mixed into series `{task_id}`",
            r.task_id
        )));
    }
    let mut seen = BTreeSet::new();
    for r in records {
        if !seen.insert(r.checkpoint_step) {
            return Err(Error::DuplicateCheckpoint {
                task_id: task_id.to_string(),
                step: r.checkpoint_step,
            });
        }
    }
    let mut points: Vec<(Step, f64)> = records.iter().map(|r| (r.checkpoint_step, r.metric_value)).collect();
    points.sort_by_key(|p| p.0);
    ScoreSeries::new(task_id, run_tag, points)
}

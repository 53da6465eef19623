//! `probe`: evaluate every task on every checkpoint and every baseline.
//!
//! Each finished (run_tag, task, step) evaluation is appended to the ledger
//! `done.jsonl`; reruns skip ledger entries, so the command is idempotent.
//! `records.csv` is rebuilt from the ledger after every run, sorted by
//! (run_tag, task_id, step). Capability mismatches are recorded as skips.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use probetime_core::backend::{ToyMlm, ToyMlmConfig, Vocabulary};
use probetime_core::baselines::{
    random_guess_accuracy, random_init_eval, random_vector_backend, static_embedding_backend, BaselineKind,
    LookupBackend, DEFAULT_RANDOM_VECTOR_DIM, RANDOM_INIT_TRIALS, REFERENCE_RUN_TAG,
};
use probetime_core::probes::structural::ProbeHyper;
use probetime_core::probes::{evaluate_task, Score, Splits, TaskData};
use probetime_core::series::{EvalRecord, ProbeFamily, ProbeTaskSpec, RunRecord, Step};
use probetime_core::Error as CoreError;
use serde::{Deserialize, Serialize};

use super::pretrain::{load_vocab, model_config};
use super::{fresh_dir, read};
use crate::checkpoint::{self, write_atomic};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult, IoContext};
use crate::formats;

pub const LEDGER: &str = "done.jsonl";
pub const RECORDS: &str = "records.csv";
pub const WORKERS_ENV: &str = "PROBETIME_WORKERS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub run_tag: String,
    pub task_id: String,
    pub step: Step,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_items: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_skipped: Option<usize>,
    /// The value is an approximation (random guess over a full vocabulary).
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub approximate: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl LedgerEntry {
    fn key(&self) -> (String, String, Step) {
        (self.run_tag.clone(), self.task_id.clone(), self.step)
    }

    pub fn record(&self) -> Option<RunRecord> {
        let record = EvalRecord::new(&self.task_id, self.step, self.value?, self.n_items?, self.n_skipped?).ok()?;
        Some(RunRecord {
            run_tag: self.run_tag.clone(),
            record,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ProbeSummary {
    pub evaluated: usize,
    pub skipped: usize,
    pub already_done: usize,
    pub failures: Vec<String>,
}

fn core_at(path: &Path) -> impl Fn(CoreError) -> CliError + '_ {
    move |e| CliError::core(path.display().to_string(), e)
}

fn read_splits<T>(dir: &Path, parse: fn(&str) -> probetime_core::Result<Vec<T>>) -> CliResult<Splits<T>> {
    let part = |name: &str| -> CliResult<Vec<T>> {
        let path = dir.join(format!("{name}.jsonl"));
        parse(&read(&path)?).map_err(core_at(&path))
    };
    Ok(Splits {
        train: part("train")?,
        dev: part("dev")?,
        test: part("test")?,
    })
}

/// Load a task's dataset. Structural datasets are directories holding
/// `train.jsonl`, `dev.jsonl` and `test.jsonl`.
pub fn load_task_data(spec: &ProbeTaskSpec) -> CliResult<TaskData> {
    let path = PathBuf::from(&spec.dataset);
    Ok(match spec.family {
        ProbeFamily::MinimalPair => {
            TaskData::MinimalPairs(formats::read_minimal_pairs(&read(&path)?).map_err(core_at(&path))?)
        }
        ProbeFamily::Cloze => TaskData::Cloze(formats::read_cloze(&read(&path)?).map_err(core_at(&path))?),
        ProbeFamily::Multichoice => {
            TaskData::MultiChoice(formats::read_multichoice(&read(&path)?).map_err(core_at(&path))?)
        }
        ProbeFamily::TokenLabel | ProbeFamily::Segmentation => {
            TaskData::TokenLabels(read_splits(&path, formats::read_token_labels)?)
        }
        ProbeFamily::ArcPred | ProbeFamily::ArcClass => TaskData::Arcs(read_splits(&path, formats::read_arcs)?),
    })
}

fn dataset_size(data: &TaskData) -> usize {
    match data {
        TaskData::MinimalPairs(i) => i.len(),
        TaskData::Cloze(i) => i.len(),
        TaskData::MultiChoice(i) => i.len(),
        TaskData::TokenLabels(s) => s.test.len(),
        TaskData::Arcs(s) => s.test.len(),
    }
}

/// Something that produces one score per task.
enum Source {
    Checkpoint { run_tag: String, step: Step, dir: PathBuf },
    RandomGuess,
    Lookup { run_tag: String, backend: LookupBackend },
    RandomInit { trials: usize },
}

impl Source {
    fn key(&self) -> (String, Step) {
        let baseline = |k: BaselineKind| format!("baseline:{}", k.name());
        match self {
            Source::Checkpoint { run_tag, step, .. } => (run_tag.clone(), *step),
            Source::RandomGuess => (baseline(BaselineKind::RandomGuess), 0),
            Source::Lookup { run_tag, .. } => (run_tag.clone(), 0),
            Source::RandomInit { .. } => (baseline(BaselineKind::RandomInit), 0),
        }
    }
}

struct Context<'a> {
    vocab: &'a Vocabulary,
    model_config: &'a ToyMlmConfig,
    hyper: &'a ProbeHyper,
}

fn sources(cfg: &RunConfig, ckpt_root: &Path, vocab: &Vocabulary) -> CliResult<Vec<Source>> {
    let mut out = Vec::new();
    for (run_tag, run_dir) in checkpoint::list_runs(ckpt_root)? {
        for (step, dir) in checkpoint::list_checkpoints(&run_dir)? {
            out.push(Source::Checkpoint {
                run_tag: run_tag.clone(),
                step,
                dir,
            });
        }
    }
    for b in &cfg.baselines {
        let p = &b.params;
        out.push(match b.kind {
            BaselineKind::RandomGuess => Source::RandomGuess,
            BaselineKind::RandomVector => {
                let backend = random_vector_backend(
                    vocab,
                    p.dim.unwrap_or(DEFAULT_RANDOM_VECTOR_DIM),
                    p.seed.unwrap_or(cfg.seed),
                )
                .map_err(|e| CliError::core("baselines", e))?;
                Source::Lookup {
                    run_tag: b.run_tag(),
                    backend,
                }
            }
            BaselineKind::StaticEmbedding => {
                let path = PathBuf::from(p.table.as_deref().expect("validated"));
                let table = formats::read_static_table(&read(&path)?).map_err(core_at(&path))?;
                let backend = static_embedding_backend(vocab, &table).map_err(core_at(&path))?;
                Source::Lookup {
                    run_tag: b.run_tag(),
                    backend,
                }
            }
            BaselineKind::ReferenceCheckpoint => {
                let dir = PathBuf::from(p.checkpoint.as_deref().expect("validated"));
                let step = checkpoint::read_manifest(&dir)?.step;
                Source::Checkpoint {
                    run_tag: REFERENCE_RUN_TAG.into(),
                    step,
                    dir,
                }
            }
            BaselineKind::RandomInit => Source::RandomInit {
                trials: p.trials.unwrap_or(RANDOM_INIT_TRIALS),
            },
        });
    }
    Ok(out)
}

/// Worker count from `PROBETIME_WORKERS`, else the machine's parallelism.
pub fn worker_count() -> CliResult<usize> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(CliError::config(
                WORKERS_ENV,
                format!("`{v}` is not a positive integer"),
            )),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

pub fn read_ledger(path: &Path) -> CliResult<Vec<LedgerEntry>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = read(path)?;
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    let mut out = Vec::new();
    for (i, line) in lines.iter().enumerate() {
        match serde_json::from_str(line) {
            Ok(e) => out.push(e),
            // A torn final line is what an interrupted append leaves behind.
            Err(_) if i + 1 == lines.len() && !text.ends_with('\n') => {}
            Err(e) => {
                let err = CoreError::Parse {
                    line: i + 1,
                    field: "json".into(),
                    message: e.to_string(),
                };
                return Err(core_at(path)(err));
            }
        }
    }
    Ok(out)
}

fn evaluate(
    source: &Source,
    model: Option<&ToyMlm>,
    spec: &ProbeTaskSpec,
    data: &TaskData,
    ctx: &Context,
) -> probetime_core::Result<(Score, bool)> {
    let plain = |s: Score| (s, false);
    match source {
        Source::Checkpoint { .. } => evaluate_task(spec, data, model.expect("checkpoint loaded"), ctx.hyper).map(plain),
        Source::Lookup { backend, .. } => evaluate_task(spec, data, backend, ctx.hyper).map(plain),
        Source::RandomInit { trials } => {
            random_init_eval(spec, data, ctx.model_config, ctx.vocab, *trials, ctx.hyper).map(plain)
        }
        Source::RandomGuess => {
            let g = random_guess_accuracy(spec, data, ctx.vocab.size())?;
            Ok((
                Score {
                    value: g.value,
                    n_items: dataset_size(data),
                    n_skipped: 0,
                },
                g.approximate,
            ))
        }
    }
}

pub fn cmd_probe(cfg: &RunConfig, ckpt_root: &Path, results: &Path, force: bool) -> CliResult<ProbeSummary> {
    let workers = worker_count()?;
    let vocab = load_vocab(cfg)?;
    let model_config = model_config(cfg, &vocab)?;
    let tasks: Vec<(ProbeTaskSpec, TaskData)> = cfg
        .suites
        .iter()
        .map(|s| Ok((s.clone(), load_task_data(s)?)))
        .collect::<CliResult<_>>()?;
    if !ckpt_root.is_dir() {
        return Err(CliError::io(
            ckpt_root,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no checkpoint directory"),
        ));
    }
    let sources = sources(cfg, ckpt_root, &vocab)?;

    if force {
        fresh_dir(results, true)?;
    }
    fs::create_dir_all(results).at(results)?;
    let ledger_path = results.join(LEDGER);
    let done: BTreeSet<(String, String, Step)> = read_ledger(&ledger_path)?.iter().map(LedgerEntry::key).collect();

    let mut pending = Vec::new();
    let mut summary = ProbeSummary::default();
    for (si, source) in sources.iter().enumerate() {
        let (run_tag, step) = source.key();
        for (ti, (spec, _)) in tasks.iter().enumerate() {
            if done.contains(&(run_tag.clone(), spec.task_id.clone(), step)) {
                summary.already_done += 1;
            } else {
                pending.push((si, ti));
            }
        }
    }

    let ledger = Mutex::new(
        fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&ledger_path)
            .at(&ledger_path)?,
    );
    let summary = Mutex::new(summary);
    let next = AtomicUsize::new(0);
    let ctx = Context {
        vocab: &vocab,
        model_config: &model_config,
        hyper: &cfg.probe,
    };
    let worker = || -> CliResult<()> {
        let mut loaded: Option<(usize, ToyMlm)> = None;
        loop {
            let Some(&(si, ti)) = pending.get(next.fetch_add(1, Ordering::SeqCst)) else {
                return Ok(());
            };
            let source = &sources[si];
            if let Source::Checkpoint { dir, .. } = source {
                if loaded.as_ref().is_none_or(|(i, _)| *i != si) {
                    loaded = Some((si, checkpoint::load_model(dir)?));
                }
            }
            let (spec, data) = &tasks[ti];
            let (run_tag, step) = source.key();
            let model = loaded.as_ref().filter(|(i, _)| *i == si).map(|(_, m)| m);
            let mut entry = LedgerEntry {
                run_tag,
                task_id: spec.task_id.clone(),
                step,
                status: Status::Ok,
                value: None,
                n_items: None,
                n_skipped: None,
                approximate: false,
                reason: None,
            };
            match evaluate(source, model, spec, data, &ctx) {
                Ok((score, approximate)) => {
                    entry.value = Some(score.value);
                    entry.n_items = Some(score.n_items);
                    entry.n_skipped = Some(score.n_skipped);
                    entry.approximate = approximate;
                }
                Err(CoreError::Capability(reason)) => {
                    entry.status = Status::Skipped;
                    entry.reason = Some(reason);
                }
                Err(e) => {
                    let msg = format!("{} / {} / step {}: {e}", entry.run_tag, entry.task_id, entry.step);
                    summary.lock().expect("summary lock").failures.push(msg);
                    continue;
                }
            }
            let line = serde_json::to_string(&entry).expect("ledger entries serialize") + "\n";
            let mut file = ledger.lock().expect("ledger lock");
            file.write_all(line.as_bytes())
                .and_then(|_| file.flush())
                .at(&ledger_path)?;
            drop(file);
            let mut s = summary.lock().expect("summary lock");
            match entry.status {
                Status::Ok => s.evaluated += 1,
                Status::Skipped => s.skipped += 1,
            }
        }
    };
    let n = workers.min(pending.len()).max(1);
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..n).map(|_| scope.spawn(worker)).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("probe worker panicked"))
            .collect::<CliResult<Vec<()>>>()
    })?;

    write_records(results)?;
    let mut summary = summary.into_inner().expect("summary lock");
    summary.failures.sort();
    if !summary.failures.is_empty() {
        return Err(CliError::Evaluation(format!(
            "{} evaluation(s) failed:\n  {}",
            summary.failures.len(),
            summary.failures.join("\n  ")
        )));
    }
    Ok(summary)
}

/// Rebuild `records.csv` from the ledger in canonical order.
pub fn write_records(results: &Path) -> CliResult<Vec<RunRecord>> {
    let mut seen = BTreeSet::new();
    let mut records: Vec<RunRecord> = read_ledger(&results.join(LEDGER))?
        .iter()
        .filter(|e| seen.insert(e.key()))
        .filter_map(LedgerEntry::record)
        .collect();
    records.sort_by(|a, b| {
        (&a.run_tag, &a.record.task_id, a.record.checkpoint_step).cmp(&(
            &b.run_tag,
            &b.record.task_id,
            b.record.checkpoint_step,
        ))
    });
    write_atomic(&results.join(RECORDS), formats::write_records(&records).as_bytes())?;
    Ok(records)
}

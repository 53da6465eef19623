//! TOML run configuration. Unknown keys are rejected and errors name the key.
//!
//! ```toml
//! seed = 0
//! output_dir = "runs/dense"
//!
//! [synth]
//! preset = "dense"        # or "sparse"; any generator field may follow
//!
//! [backend]
//! preset = "toy"
//! run_tag = "dense"
//! total_steps = 5000      # any toy-model field may follow
//!
//! [[suites]]
//! task_id = "agreement"
//! family = "minimal_pair"
//! dataset = "probes/minimal_pairs.jsonl"
//! metric = "accuracy"
//!
//! [[baselines]]
//! kind = "random_guess"
//!
//! [analysis]
//! x_list = [90.0, 95.0, 97.0]
//! ```
//!
//! Relative `output_dir` resolves against the config file's directory.
//! Dataset, corpus, vocabulary and static-table paths resolve against the data
//! directory `<output_dir>/data`; reference checkpoints against
//! `<output_dir>/checkpoints`.

use std::path::{Path, PathBuf};

use probetime_core::backend::{uniform_checkpoint_schedule, ToyMlmConfig};
use probetime_core::baselines::{BaselineKind, BaselineSpec, REFERENCE_RUN_TAG};
use probetime_core::dynamics::AnalysisConfig;
use probetime_core::probes::structural::ProbeHyper;
use probetime_core::series::{Metric, ProbeFamily, ProbeTaskSpec};
use probetime_core::synth::SynthLanguageConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult, IoContext};

/// Checkpoints per run when `total_steps` is overridden without a schedule.
const DEFAULT_CHECKPOINT_INTERVALS: u64 = 20;
pub const DEFAULT_RUN_TAG: &str = "toy";

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    seed: u64,
    #[serde(default)]
    output_dir: Option<PathBuf>,
    #[serde(default)]
    synth: toml::Table,
    #[serde(default)]
    backend: toml::Table,
    #[serde(default)]
    suites: Option<Vec<ProbeTaskSpec>>,
    #[serde(default)]
    baselines: Option<Vec<BaselineSpec>>,
    #[serde(default)]
    analysis: AnalysisConfig,
    #[serde(default)]
    probe: Option<toml::Table>,
}

/// Fully resolved configuration with every default applied.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub synth: SynthLanguageConfig,
    pub run_tag: String,
    /// Toy-model settings; `vocab_size` is filled from the vocabulary file.
    pub backend: ToyMlmConfig,
    pub corpus: PathBuf,
    pub vocab: PathBuf,
    pub suites: Vec<ProbeTaskSpec>,
    pub baselines: Vec<BaselineSpec>,
    pub analysis: AnalysisConfig,
    pub probe: ProbeHyper,
}

/// The layout under an output directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn data(&self) -> PathBuf {
        self.root.join("data")
    }
    pub fn checkpoints(&self) -> PathBuf {
        self.root.join("checkpoints")
    }
    pub fn results(&self) -> PathBuf {
        self.root.join("results")
    }
    pub fn analysis(&self) -> PathBuf {
        self.root.join("analysis")
    }
}

/// Key named in the first backtick pair of a serde message, if any.
fn quoted_key(message: &str) -> Option<&str> {
    let start = message.find('`')? + 1;
    let len = message[start..].find('`')?;
    Some(&message[start..start + len])
}

fn de_error(section: &str, message: &str) -> CliError {
    let key = quoted_key(message).unwrap_or(section);
    let key = if section.is_empty() || key == section {
        key.to_string()
    } else {
        format!("{section}.{key}")
    };
    CliError::config(&key, message.lines().next().unwrap_or(message).trim())
}

/// Deserialize `preset` with the section's keys laid over it.
fn overlay<T: Serialize + DeserializeOwned>(section: &str, preset: &T, table: &toml::Table) -> CliResult<T> {
    let base = toml::Table::try_from(preset).expect("presets serialize to tables");
    let apply = |keys: &mut dyn Iterator<Item = (&String, &toml::Value)>| -> Result<T, toml::de::Error> {
        let mut t = base.clone();
        t.extend(keys.map(|(k, v)| (k.clone(), v.clone())));
        toml::Value::Table(t).try_into()
    };
    if let Some(k) = table.keys().find(|k| !base.contains_key(*k)) {
        return Err(CliError::config(&format!("{section}.{k}"), "unknown key"));
    }
    apply(&mut table.iter()).map_err(|e| {
        // Type errors do not always name the field; find the key that fails alone.
        match table.iter().find(|kv| apply(&mut std::iter::once(*kv)).is_err()) {
            Some((k, _)) => CliError::config(&format!("{section}.{k}"), e.message()),
            None => de_error(section, e.message()),
        }
    })
}

fn take_str(section: &str, table: &mut toml::Table, key: &str) -> CliResult<Option<String>> {
    match table.remove(key) {
        None => Ok(None),
        Some(toml::Value::String(s)) => Ok(Some(s)),
        Some(_) => Err(CliError::config(&format!("{section}.{key}"), "must be a string")),
    }
}

fn reject_seed(section: &str, table: &toml::Table) -> CliResult<()> {
    if table.contains_key("seed") {
        return Err(CliError::config(
            &format!("{section}.seed"),
            "the seed is set once, at the top level",
        ));
    }
    Ok(())
}

/// Tasks over the generator's own probe files.
pub fn default_suites(seed: u64) -> Vec<ProbeTaskSpec> {
    let task = |id: &str, family, dataset: &str, metric, package: &str| ProbeTaskSpec {
        package: Some(package.into()),
        ..ProbeTaskSpec::new(id, family, dataset, metric)
    };
    let mut arc_pred = task(
        "arc_pred",
        ProbeFamily::ArcPred,
        "probes/arcs",
        Metric::Accuracy,
        "structure",
    );
    arc_pred.params.negative_sampling_seed = Some(seed);
    vec![
        task(
            "agreement",
            ProbeFamily::MinimalPair,
            "probes/minimal_pairs.jsonl",
            Metric::Accuracy,
            "syntax",
        ),
        task(
            "facts",
            ProbeFamily::Cloze,
            "probes/cloze.jsonl",
            Metric::PrecisionAtK,
            "knowledge",
        )
        .with_k(1),
        task(
            "ordering",
            ProbeFamily::Multichoice,
            "probes/multichoice.jsonl",
            Metric::Accuracy,
            "reasoning",
        ),
        task(
            "pos",
            ProbeFamily::TokenLabel,
            "probes/pos",
            Metric::Accuracy,
            "structure",
        ),
        task(
            "chunk",
            ProbeFamily::Segmentation,
            "probes/chunk",
            Metric::SpanF1,
            "structure",
        ),
        arc_pred,
        task(
            "arc_class",
            ProbeFamily::ArcClass,
            "probes/arcs",
            Metric::Accuracy,
            "structure",
        ),
    ]
}

pub fn default_baselines() -> Vec<BaselineSpec> {
    [
        BaselineKind::RandomGuess,
        BaselineKind::RandomVector,
        BaselineKind::RandomInit,
    ]
    .into_iter()
    .map(BaselineSpec::new)
    .collect()
}

impl RunConfig {
    /// Parse a config document. `base_dir` anchors a relative `output_dir`;
    /// `seed` and `out` override the file.
    pub fn parse(text: &str, base_dir: &Path, seed: Option<u64>, out: Option<&Path>) -> CliResult<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| de_error("", e.message()))?;
        let seed = seed.unwrap_or(raw.seed);
        let output_dir = match (out, raw.output_dir) {
            (Some(o), _) => o.to_path_buf(),
            (None, Some(o)) => base_dir.join(o),
            (None, None) => {
                return Err(CliError::config(
                    "output_dir",
                    "missing; set it in the config or pass --out",
                ))
            }
        };
        let layout = Layout {
            root: output_dir.clone(),
        };

        let mut synth_table = raw.synth;
        reject_seed("synth", &synth_table)?;
        let preset = match take_str("synth", &mut synth_table, "preset")?.as_deref() {
            None | Some("dense") => SynthLanguageConfig::dense(seed),
            Some("sparse") => SynthLanguageConfig::sparse(seed),
            Some(p) => {
                return Err(CliError::config(
                    "synth.preset",
                    format!("unknown preset `{p}` (dense, sparse)"),
                ))
            }
        };
        let synth: SynthLanguageConfig = overlay("synth", &preset, &synth_table)?;
        synth.validate().map_err(|e| CliError::core("synth", e))?;

        let mut backend_table = raw.backend;
        reject_seed("backend", &backend_table)?;
        if backend_table.contains_key("vocab_size") {
            return Err(CliError::config("backend.vocab_size", "taken from the vocabulary file"));
        }
        match take_str("backend", &mut backend_table, "preset")?.as_deref() {
            None | Some("toy") => {}
            Some(p) => {
                return Err(CliError::config(
                    "backend.preset",
                    format!("unknown preset `{p}` (toy)"),
                ))
            }
        }
        let run_tag = take_str("backend", &mut backend_table, "run_tag")?.unwrap_or_else(|| DEFAULT_RUN_TAG.into());
        if run_tag.is_empty() || run_tag.starts_with('.') || run_tag.contains(['/', '\\', ':']) {
            return Err(CliError::config(
                "backend.run_tag",
                "must be a plain directory name without `:`",
            ));
        }
        if run_tag == REFERENCE_RUN_TAG {
            return Err(CliError::config(
                "backend.run_tag",
                "is reserved for the reference checkpoint",
            ));
        }
        let data = layout.data();
        let corpus =
            data.join(take_str("backend", &mut backend_table, "corpus")?.unwrap_or_else(|| "corpus.txt".into()));
        let vocab = data.join(take_str("backend", &mut backend_table, "vocab")?.unwrap_or_else(|| "vocab.txt".into()));
        let every = match backend_table.remove("checkpoint_every") {
            None => None,
            Some(toml::Value::Integer(n)) if n > 0 => Some(n as u64),
            Some(_) => {
                return Err(CliError::config(
                    "backend.checkpoint_every",
                    "must be a positive integer",
                ))
            }
        };
        if every.is_some() && backend_table.contains_key("checkpoint_schedule") {
            return Err(CliError::config(
                "backend.checkpoint_every",
                "conflicts with checkpoint_schedule",
            ));
        }
        let explicit_schedule = backend_table.contains_key("checkpoint_schedule");
        let mut backend: ToyMlmConfig = overlay("backend", &ToyMlmConfig::toy(1), &backend_table)?;
        backend.seed = seed;
        if !explicit_schedule && (every.is_some() || backend_table.contains_key("total_steps")) {
            let every = every.unwrap_or((backend.total_steps / DEFAULT_CHECKPOINT_INTERVALS).max(1));
            backend.checkpoint_schedule = uniform_checkpoint_schedule(backend.total_steps, every);
        }
        backend.validate().map_err(|e| CliError::core("backend", e))?;

        let mut suites = raw.suites.unwrap_or_else(|| default_suites(seed));
        for s in &mut suites {
            s.validate().map_err(|e| CliError::core("suites", e))?;
            s.dataset = data.join(&s.dataset).display().to_string();
        }
        let mut ids: Vec<&str> = suites.iter().map(|s| s.task_id.as_str()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(CliError::config("suites", format!("task_id `{}` appears twice", w[0])));
        }

        let mut baselines = raw.baselines.unwrap_or_else(default_baselines);
        for b in &mut baselines {
            b.validate().map_err(|e| CliError::core("baselines", e))?;
            if let Some(t) = &b.params.table {
                b.params.table = Some(data.join(t).display().to_string());
            }
            if let Some(c) = &b.params.checkpoint {
                b.params.checkpoint = Some(layout.checkpoints().join(c).display().to_string());
            }
        }

        raw.analysis.validate().map_err(|e| CliError::core("analysis", e))?;
        let probe_table = raw.probe.unwrap_or_default();
        reject_seed("probe", &probe_table)?;
        let mut probe: ProbeHyper = overlay("probe", &ProbeHyper::default(), &probe_table)?;
        probe.seed = seed;

        Ok(RunConfig {
            seed,
            output_dir,
            synth,
            run_tag,
            backend,
            corpus,
            vocab,
            suites,
            baselines,
            analysis: raw.analysis,
            probe,
        })
    }

    pub fn load(path: &Path, seed: Option<u64>, out: Option<&Path>) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).at(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base, seed, out)
    }

    pub fn layout(&self) -> Layout {
        Layout {
            root: self.output_dir.clone(),
        }
    }
}

//! `synth`: generate the synthetic corpus, vocabulary, gold facts and probe
//! suites into `<out>/data`.

use std::path::Path;

use probetime_core::probes::Splits;
use probetime_core::synth::{gen_corpus, gen_probe_suites, OverlapStats, SynthLanguageConfig};
use serde::Serialize;

use super::{fresh_dir, to_json, write};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::formats;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitCounts {
    pub train: usize,
    pub dev: usize,
    pub test: usize,
}

impl SplitCounts {
    fn of<T>(s: &Splits<T>) -> Self {
        SplitCounts {
            train: s.train.len(),
            dev: s.dev.len(),
            test: s.test.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthCounts {
    pub vocabulary: usize,
    pub sentences: usize,
    pub fact_sentences: usize,
    pub compare_sentences: usize,
    pub facts: usize,
    pub minimal_pairs: usize,
    pub cloze: usize,
    pub multichoice: usize,
    pub token_labels: SplitCounts,
    pub segmentation: SplitCounts,
    pub arcs: SplitCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthManifest {
    pub seed: u64,
    pub config: SynthLanguageConfig,
    pub counts: SynthCounts,
    pub overlap: OverlapStats,
    pub warnings: Vec<String>,
}

fn write_splits<T>(dir: &Path, splits: &Splits<T>, encode: impl Fn(&[T]) -> String) -> CliResult<()> {
    for (name, part) in [("train", &splits.train), ("dev", &splits.dev), ("test", &splits.test)] {
        write(&dir.join(format!("{name}.jsonl")), encode(part))?;
    }
    Ok(())
}

pub fn cmd_synth(cfg: &RunConfig, force: bool) -> CliResult<SynthManifest> {
    let dir = cfg.layout().data();
    let corpus = gen_corpus(&cfg.synth).map_err(|e| CliError::core("synth", e))?;
    let suites = gen_probe_suites(&cfg.synth, &corpus).map_err(|e| CliError::core("synth", e))?;
    fresh_dir(&dir, force)?;

    write(&dir.join("corpus.txt"), formats::write_corpus(&corpus.sentences))?;
    write(&dir.join("vocab.txt"), formats::write_vocab(&corpus.vocabulary))?;
    let facts: String = corpus
        .facts
        .iter()
        .map(|f| serde_json::to_string(f).expect("facts serialize") + "\n")
        .collect();
    write(&dir.join("facts.jsonl"), facts)?;
    let probes = dir.join("probes");
    write(
        &probes.join("minimal_pairs.jsonl"),
        formats::write_minimal_pairs(&suites.minimal_pairs),
    )?;
    write(&probes.join("cloze.jsonl"), formats::write_cloze(&suites.cloze))?;
    write(
        &probes.join("multichoice.jsonl"),
        formats::write_multichoice(&suites.multichoice),
    )?;
    write_splits(&probes.join("pos"), &suites.token_labels, formats::write_token_labels)?;
    write_splits(&probes.join("chunk"), &suites.segmentation, formats::write_token_labels)?;
    write_splits(&probes.join("arcs"), &suites.arcs, formats::write_arcs)?;

    let manifest = SynthManifest {
        seed: cfg.seed,
        config: cfg.synth.clone(),
        counts: SynthCounts {
            vocabulary: corpus.vocabulary.len(),
            sentences: corpus.sentences.len(),
            fact_sentences: corpus.fact_sentences,
            compare_sentences: corpus.compare_sentences,
            facts: corpus.facts.len(),
            minimal_pairs: suites.minimal_pairs.len(),
            cloze: suites.cloze.len(),
            multichoice: suites.multichoice.len(),
            token_labels: SplitCounts::of(&suites.token_labels),
            segmentation: SplitCounts::of(&suites.segmentation),
            arcs: SplitCounts::of(&suites.arcs),
        },
        overlap: suites.overlap,
        warnings: suites.warnings,
    };
    write(&dir.join(MANIFEST), to_json(&manifest))?;
    Ok(manifest)
}

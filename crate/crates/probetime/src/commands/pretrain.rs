//! `pretrain`: train the toy model on the corpus, saving the checkpoint tree
//! and the loss log under `<out>/checkpoints/<run_tag>`.

use std::fs;

use probetime_core::backend::{pretrain_toy, TokenId, ToyMlmConfig, TrainState, Vocabulary};
use serde::Serialize;

use super::{read, write};
use crate::checkpoint::{self, DirSink, LOSS_HEADER, LOSS_LOG, VOCAB};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult, IoContext};
use crate::formats;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PretrainSummary {
    pub run_tag: String,
    /// Checkpoints written by this invocation.
    pub checkpoints_written: usize,
    /// Step the run resumed from, if any.
    pub resumed_from: Option<u64>,
    pub final_heldout_loss: Option<f64>,
}

pub fn load_vocab(cfg: &RunConfig) -> CliResult<Vocabulary> {
    let text = read(&cfg.vocab)?;
    let path = cfg.vocab.display().to_string();
    let tokens = formats::read_vocab(&text).map_err(|e| CliError::core(&path, e))?;
    Vocabulary::new(tokens).map_err(|e| CliError::core(&path, e))
}

/// The configured toy model sized to the vocabulary.
pub fn model_config(cfg: &RunConfig, vocab: &Vocabulary) -> CliResult<ToyMlmConfig> {
    let config = ToyMlmConfig {
        vocab_size: vocab.size(),
        ..cfg.backend.clone()
    };
    config.validate().map_err(|e| CliError::core("backend", e))?;
    Ok(config)
}

/// Keep the loss log's header and rows up to `step`.
fn truncate_loss_log(path: &std::path::Path, step: u64) -> CliResult<()> {
    let text = read(path)?;
    let mut kept = String::from(LOSS_HEADER);
    kept.push('\n');
    for line in text.lines().skip(1) {
        let row_step = line.split(',').next().and_then(|s| s.parse::<u64>().ok());
        if row_step.is_some_and(|s| s <= step) {
            kept.push_str(line);
            kept.push('\n');
        }
    }
    checkpoint::write_atomic(path, kept.as_bytes())
}

pub fn cmd_pretrain(cfg: &RunConfig, force: bool, resume: bool) -> CliResult<PretrainSummary> {
    let vocab = load_vocab(cfg)?;
    let config = model_config(cfg, &vocab)?;
    let corpus_text = read(&cfg.corpus)?;
    let corpus_path = cfg.corpus.display().to_string();
    let ids: Vec<Vec<TokenId>> = formats::read_corpus(&corpus_text)
        .iter()
        .map(|s| vocab.encode(s))
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::core(&corpus_path, e))?;

    let run_dir = cfg.layout().checkpoints().join(&cfg.run_tag);
    let existing = run_dir.exists() && fs::read_dir(&run_dir).at(&run_dir)?.next().is_some();
    let mut state: Option<TrainState> = None;
    if existing && resume {
        let saved = checkpoint::read_vocab(&run_dir)?;
        if saved != vocab {
            return Err(CliError::config(
                "backend.vocab",
                "vocabulary differs from the run being resumed",
            ));
        }
        if let Some((_, dir)) = checkpoint::list_checkpoints(&run_dir)?.pop() {
            let (manifest, s) = checkpoint::load_state(&dir)?;
            if manifest.config != config {
                return Err(CliError::config(
                    "backend",
                    "settings differ from the run being resumed",
                ));
            }
            state = Some(s);
        }
    } else if existing && !force {
        return Err(CliError::guard(
            &run_dir,
            "run already has checkpoints (pass --resume or --force)",
        ));
    } else if existing {
        fs::remove_dir_all(&run_dir).at(&run_dir)?;
    }
    // Step 0 is re-derived from the seed, so resuming there is a fresh start.
    let state = state.filter(|s| s.step > 0);
    let loss_path = run_dir.join(LOSS_LOG);
    match &state {
        Some(s) => truncate_loss_log(&loss_path, s.step)?,
        None => {
            write(&run_dir.join(VOCAB), formats::write_vocab(vocab.tokens()))?;
            write(&loss_path, format!("{LOSS_HEADER}\n"))?;
        }
    }
    let resumed_from = state.as_ref().map(|s| s.step);
    let mut sink = DirSink::new(&run_dir, &cfg.run_tag, &config)?;
    let outcome = pretrain_toy(&config, &vocab, &ids, &mut sink, state).map_err(|e| CliError::core("pretrain", e))?;
    Ok(PretrainSummary {
        run_tag: cfg.run_tag.clone(),
        checkpoints_written: outcome.checkpoints.len(),
        resumed_from,
        final_heldout_loss: outcome.losses.iter().rev().find_map(|r| r.heldout_loss),
    })
}

//! On-disk checkpoint tree: `<root>/<run_tag>/step_<N>/{manifest.json, weights.bin}`.
//!
//! Each run directory also holds `vocab.txt` and the loss log `loss.csv`.
//! `weights.bin` stores parameters, then Adam first moments, then Adam second
//! moments, each as little-endian f64. Saving the same state twice yields
//! identical bytes.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use probetime_core::backend::{
    CheckpointSink, LossRecord, ParamLayout, TensorEntry, ToyMlm, ToyMlmConfig, TrainState, Vocabulary,
};
use probetime_core::series::CheckpointRef;
use probetime_core::Error as CoreError;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult, IoContext};
use crate::formats;

pub const MANIFEST: &str = "manifest.json";
pub const WEIGHTS: &str = "weights.bin";
pub const VOCAB: &str = "vocab.txt";
pub const LOSS_LOG: &str = "loss.csv";
pub const LOSS_HEADER: &str = "step,train_loss,heldout_loss";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointManifest {
    pub format_version: u32,
    pub run_tag: String,
    pub step: u64,
    pub seed: u64,
    pub config: ToyMlmConfig,
    /// Parameter tensors in storage order.
    pub tensors: Vec<TensorEntry>,
    pub n_params: usize,
    /// SHA-256 of `weights.bin`.
    pub weights_sha256: String,
}

pub fn step_dir(run_dir: &Path, step: u64) -> PathBuf {
    run_dir.join(format!("step_{step}"))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn encode_weights(state: &TrainState) -> Vec<u8> {
    [&state.params, &state.adam_m, &state.adam_v]
        .iter()
        .flat_map(|v| v.iter().flat_map(|x| x.to_le_bytes()))
        .collect()
}

/// Write `bytes` to `path` through a sibling temporary file so readers never
/// see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let tmp = path.with_extension("partial");
    fs::write(&tmp, bytes).at(&tmp)?;
    fs::rename(&tmp, path).at(path)
}

/// Save one checkpoint. The step directory appears only once complete.
pub fn save_checkpoint(run_dir: &Path, run_tag: &str, config: &ToyMlmConfig, state: &TrainState) -> CliResult<PathBuf> {
    let weights = encode_weights(state);
    let manifest = CheckpointManifest {
        format_version: FORMAT_VERSION,
        run_tag: run_tag.into(),
        step: state.step,
        seed: config.seed,
        config: config.clone(),
        tensors: ParamLayout::new(config).entries().to_vec(),
        n_params: state.params.len(),
        weights_sha256: hex(&Sha256::digest(&weights)),
    };
    let dir = step_dir(run_dir, state.step);
    let tmp = run_dir.join(format!(".step_{}.partial", state.step));
    if tmp.exists() {
        fs::remove_dir_all(&tmp).at(&tmp)?;
    }
    fs::create_dir_all(&tmp).at(&tmp)?;
    fs::write(tmp.join(WEIGHTS), &weights).at(&tmp)?;
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    fs::write(tmp.join(MANIFEST), json).at(&tmp)?;
    if dir.exists() {
        fs::remove_dir_all(&dir).at(&dir)?;
    }
    fs::rename(&tmp, &dir).at(&dir)?;
    Ok(dir)
}

fn corrupt(path: &Path, message: impl Into<String>) -> CliError {
    CliError::core(path.display().to_string(), CoreError::Data(message.into()))
}

pub fn read_manifest(dir: &Path) -> CliResult<CheckpointManifest> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).at(&path)?;
    serde_json::from_str(&text).map_err(|e| corrupt(&path, e.to_string()))
}

/// Load a checkpoint's full training state, verifying the weight digest.
pub fn load_state(dir: &Path) -> CliResult<(CheckpointManifest, TrainState)> {
    let manifest = read_manifest(dir)?;
    let path = dir.join(WEIGHTS);
    let bytes = fs::read(&path).at(&path)?;
    if hex(&Sha256::digest(&bytes)) != manifest.weights_sha256 {
        return Err(corrupt(&path, "weights do not match the manifest digest"));
    }
    let n = manifest.n_params;
    if bytes.len() != 3 * n * 8 {
        return Err(corrupt(
            &path,
            format!("expected {} bytes for {n} parameters", 3 * n * 8),
        ));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let state = TrainState {
        step: manifest.step,
        params: values[..n].to_vec(),
        adam_m: values[n..2 * n].to_vec(),
        adam_v: values[2 * n..].to_vec(),
    };
    Ok((manifest, state))
}

pub fn read_vocab(run_dir: &Path) -> CliResult<Vocabulary> {
    let path = run_dir.join(VOCAB);
    let text = fs::read_to_string(&path).at(&path)?;
    let tokens = formats::read_vocab(&text).map_err(|e| CliError::core(path.display().to_string(), e))?;
    Vocabulary::new(tokens).map_err(|e| CliError::core(path.display().to_string(), e))
}

/// Load a step directory as a scoring backend.
pub fn load_model(dir: &Path) -> CliResult<ToyMlm> {
    let (manifest, state) = load_state(dir)?;
    let run_dir = dir
        .parent()
        .ok_or_else(|| corrupt(dir, "checkpoint has no run directory"))?;
    let vocab = read_vocab(run_dir)?;
    state
        .model(&manifest.config, &vocab)
        .map_err(|e| CliError::core(dir.display().to_string(), e))
}

/// Completed checkpoints of one run, by ascending step.
pub fn list_checkpoints(run_dir: &Path) -> CliResult<Vec<(u64, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(run_dir).at(run_dir)? {
        let path = entry.at(run_dir)?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if let Some(step) = name.strip_prefix("step_").and_then(|s| s.parse::<u64>().ok()) {
            if path.join(MANIFEST).is_file() {
                out.push((step, path));
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Run directories (those holding a vocabulary) under a checkpoint root, by run tag.
pub fn list_runs(root: &Path) -> CliResult<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(root).at(root)? {
        let path = entry.at(root)?.path();
        if path.join(VOCAB).is_file() {
            if let Some(name) = path.file_name().and_then(|n| n.to_str()) {
                out.push((name.to_string(), path));
            }
        }
    }
    out.sort();
    Ok(out)
}

fn opt(v: Option<f64>) -> String {
    v.map(formats::format_value).unwrap_or_default()
}

pub fn loss_line(r: &LossRecord) -> String {
    format!("{},{},{}\n", r.step, opt(r.train_loss), opt(r.heldout_loss))
}

/// Writes checkpoints and loss lines of one run as training proceeds.
pub struct DirSink {
    pub run_dir: PathBuf,
    pub run_tag: String,
    pub config: ToyMlmConfig,
    loss_log: fs::File,
}

impl DirSink {
    /// Opens the loss log for appending; the caller has already prepared it.
    pub fn new(run_dir: &Path, run_tag: &str, config: &ToyMlmConfig) -> CliResult<Self> {
        let path = run_dir.join(LOSS_LOG);
        let loss_log = fs::OpenOptions::new().append(true).create(true).open(&path).at(&path)?;
        Ok(DirSink {
            run_dir: run_dir.into(),
            run_tag: run_tag.into(),
            config: config.clone(),
            loss_log,
        })
    }
}

fn to_core(e: CliError) -> CoreError {
    CoreError::Data(e.to_string())
}

impl CheckpointSink for DirSink {
    fn save(&mut self, state: &TrainState) -> probetime_core::Result<CheckpointRef> {
        let dir = save_checkpoint(&self.run_dir, &self.run_tag, &self.config, state).map_err(to_core)?;
        Ok(CheckpointRef {
            step: state.step,
            locator: dir.display().to_string(),
            run_tag: self.run_tag.clone(),
            seed: self.config.seed,
        })
    }

    fn log(&mut self, record: &LossRecord) -> probetime_core::Result<()> {
        let path = self.run_dir.join(LOSS_LOG);
        self.loss_log
            .write_all(loss_line(record).as_bytes())
            .and_then(|_| self.loss_log.flush())
            .map_err(|e| to_core(CliError::io(&path, e)))
    }
}

//! Pretraining loop for the toy masked LM: static masking, Adam with warmup
//! and polynomial decay, checkpoint emission, and a finite-difference
//! gradient checker.
//!
//! Every random choice (split, example order, mask patterns, dropout) comes
//! from a stream keyed by `(seed, purpose, indices)`, so the batch for any
//! update step can be rebuilt directly. That is what makes `--resume`
//! bit-identical to an uninterrupted run.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::seq::SliceRandom;
use rand::Rng;

use super::model::{forward, loss_and_grad, Packed, ParamLayout};
use super::{Backend, TokenId, ToyMlm, ToyMlmConfig, Vocabulary};
use crate::rng::stream;
use crate::series::CheckpointRef;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    /// Updates applied so far.
    pub step: u64,
    pub params: Vec<f64>,
    pub adam_m: Vec<f64>,
    pub adam_v: Vec<f64>,
}

impl TrainState {
    pub fn fresh(params: Vec<f64>) -> Self {
        let n = params.len();
        TrainState {
            step: 0,
            params,
            adam_m: vec![0.0; n],
            adam_v: vec![0.0; n],
        }
    }

    pub fn model(&self, config: &ToyMlmConfig, vocab: &Vocabulary) -> Result<ToyMlm> {
        ToyMlm::from_params(config.clone(), vocab.clone(), self.params.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub step: u64,
    /// Loss of the batch used for update `step`.
    pub train_loss: Option<f64>,
    /// Masked-token loss on the held-out split after `step` updates.
    pub heldout_loss: Option<f64>,
}

/// Receives checkpoints and loss log lines as training proceeds.
pub trait CheckpointSink {
    fn save(&mut self, state: &TrainState) -> Result<CheckpointRef>;
    fn log(&mut self, record: &LossRecord) -> Result<()>;
}

/// Keeps everything in memory.
#[derive(Debug, Default)]
pub struct MemorySink {
    pub run_tag: String,
    pub seed: u64,
    pub checkpoints: Vec<TrainState>,
    pub losses: Vec<LossRecord>,
}

impl CheckpointSink for MemorySink {
    fn save(&mut self, state: &TrainState) -> Result<CheckpointRef> {
        self.checkpoints.push(state.clone());
        Ok(CheckpointRef {
            step: state.step,
            locator: alloc::format!("memory:{}", self.checkpoints.len() - 1),
            run_tag: self.run_tag.clone(),
            seed: self.seed,
        })
    }

    fn log(&mut self, record: &LossRecord) -> Result<()> {
        self.losses.push(*record);
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainOutcome {
    pub checkpoints: Vec<CheckpointRef>,
    pub losses: Vec<LossRecord>,
    pub n_train: usize,
    pub n_heldout: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingExample {
    pub input: Vec<TokenId>,
    /// `(position, original token)` for every selected position.
    pub targets: Vec<(usize, TokenId)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TrainingBatch {
    pub examples: Vec<TrainingExample>,
}

impl TrainingBatch {
    fn packed(&self) -> Packed {
        Packed::from_seqs(self.examples.iter().map(|e| (e.input.as_slice(), e.targets.as_slice())))
    }
}

impl ToyMlm {
    /// Mean masked-token cross-entropy of a batch (no dropout) and its
    /// gradient with respect to every parameter.
    pub fn batch_loss_and_grad(&self, batch: &TrainingBatch) -> Result<(f64, Vec<f64>)> {
        for e in &batch.examples {
            check_example(self, e)?;
        }
        Ok(loss_and_grad(
            self.config().dims(),
            self.layout(),
            self.params(),
            &batch.packed(),
            None,
        ))
    }
}

fn check_example(model: &ToyMlm, e: &TrainingExample) -> Result<()> {
    let cfg = model.config();
    if e.input.len() > cfg.max_seq_len {
        return Err(Error::Index {
            index: e.input.len(),
            len: cfg.max_seq_len,
        });
    }
    for &t in e.input.iter().chain(e.targets.iter().map(|(_, t)| t)) {
        if t as usize >= cfg.vocab_size {
            return Err(Error::Index {
                index: t as usize,
                len: cfg.vocab_size,
            });
        }
    }
    if let Some(&(p, _)) = e.targets.iter().find(|(p, _)| *p >= e.input.len()) {
        return Err(Error::Index {
            index: p,
            len: e.input.len(),
        });
    }
    Ok(())
}

/// Select `max(1, round(n·rate))` positions; 80% become the mask token, 10% a
/// random non-special token, 10% stay unchanged.
fn mask_example(
    seq: &[TokenId],
    vocab: &Vocabulary,
    rate: f64,
    rng: &mut impl Rng,
    always_mask: bool,
) -> TrainingExample {
    let n = seq.len();
    let count = ((n as f64 * rate).round() as usize).clamp(1, n);
    let mut order: Vec<usize> = (0..n).collect();
    let mut chosen = order.partial_shuffle(rng, count).0.to_vec();
    chosen.sort_unstable();
    let mut input = seq.to_vec();
    let mut targets = Vec::with_capacity(count);
    for p in chosen {
        targets.push((p, seq[p]));
        let r: f64 = rng.random();
        if always_mask || r < 0.8 {
            input[p] = vocab.mask_id();
        } else if r < 0.9 {
            input[p] = loop {
                let t = rng.random_range(0..vocab.size()) as TokenId;
                if !vocab.is_special(t) {
                    break t;
                }
            };
        }
    }
    TrainingExample { input, targets }
}

fn lr_at(cfg: &ToyMlmConfig, step: u64) -> f64 {
    if cfg.warmup_steps > 0 && step <= cfg.warmup_steps {
        return cfg.peak_lr * step as f64 / cfg.warmup_steps as f64;
    }
    if cfg.total_steps <= cfg.warmup_steps {
        return 0.0;
    }
    let remaining = (cfg.total_steps - step.min(cfg.total_steps)) as f64 / (cfg.total_steps - cfg.warmup_steps) as f64;
    cfg.peak_lr * remaining.powf(cfg.lr_decay_power)
}

struct Data<'a> {
    cfg: &'a ToyMlmConfig,
    vocab: &'a Vocabulary,
    train: Vec<&'a [TokenId]>,
    heldout: Vec<TrainingExample>,
    epoch_order: Option<(u64, Vec<usize>)>,
}

impl<'a> Data<'a> {
    fn new(cfg: &'a ToyMlmConfig, vocab: &'a Vocabulary, corpus: &'a [Vec<TokenId>]) -> Result<Self> {
        let seqs: Vec<&[TokenId]> = corpus
            .iter()
            .filter(|s| !s.is_empty())
            .map(|s| &s[..s.len().min(cfg.max_seq_len)])
            .collect();
        if seqs.is_empty() {
            return Err(Error::NoData("training corpus is empty".into()));
        }
        if let Some(&t) = seqs
            .iter()
            .flat_map(|s| s.iter())
            .find(|&&t| t as usize >= vocab.size())
        {
            return Err(Error::Index {
                index: t as usize,
                len: vocab.size(),
            });
        }
        let mut order: Vec<usize> = (0..seqs.len()).collect();
        order.shuffle(&mut stream(cfg.seed, "split", &[]));
        let n_held = (seqs.len() as f64 * cfg.heldout_fraction) as usize;
        // With too little data to spare, the held-out loss is measured on the
        // training sentences themselves.
        let (held_idx, train_idx) = if n_held == 0 || n_held == seqs.len() {
            (order.clone(), order)
        } else {
            let (h, t) = order.split_at(n_held);
            (h.to_vec(), t.to_vec())
        };
        let heldout = held_idx
            .iter()
            .map(|&i| {
                let mut rng = stream(cfg.seed, "heldout", &[i as u64]);
                mask_example(seqs[i], vocab, cfg.mask_rate, &mut rng, true)
            })
            .collect();
        Ok(Data {
            cfg,
            vocab,
            train: train_idx.iter().map(|&i| seqs[i]).collect(),
            heldout,
            epoch_order: None,
        })
    }

    fn example(&mut self, global: u64) -> TrainingExample {
        let n = self.train.len() as u64;
        let epoch = global / n;
        if self.epoch_order.as_ref().map(|(e, _)| *e) != Some(epoch) {
            let mut order: Vec<usize> = (0..self.train.len()).collect();
            order.shuffle(&mut stream(self.cfg.seed, "order", &[epoch]));
            self.epoch_order = Some((epoch, order));
        }
        let idx = self.epoch_order.as_ref().expect("just set").1[(global % n) as usize];
        let pattern = epoch % self.cfg.mask_dupe_factor;
        let mut rng = stream(self.cfg.seed, "mask", &[idx as u64, pattern]);
        mask_example(self.train[idx], self.vocab, self.cfg.mask_rate, &mut rng, false)
    }

    /// The batch consumed by update `step` (1-based).
    fn batch(&mut self, step: u64) -> TrainingBatch {
        let b = self.cfg.batch_size as u64;
        TrainingBatch {
            examples: ((step - 1) * b..step * b).map(|g| self.example(g)).collect(),
        }
    }
}

/// Mean masked-token cross-entropy over examples, evaluated in chunks.
fn mean_loss(model: &ToyMlm, examples: &[TrainingExample]) -> f64 {
    let cfg = model.config();
    let mut total = 0.0;
    let mut count = 0usize;
    for chunk in examples.chunks(256) {
        let packed = Packed::from_seqs(chunk.iter().map(|e| (e.input.as_slice(), e.targets.as_slice())));
        let fw = forward(cfg.dims(), model.layout(), model.params(), &packed, None);
        for (row, &(_, gold)) in fw_logit_rows(&fw, cfg.vocab_size).zip(&packed.targets) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            total += lse - row[gold as usize];
            count += 1;
        }
    }
    if count == 0 {
        0.0
    } else {
        total / count as f64
    }
}

fn fw_logit_rows(fw: &super::model::Forward, v: usize) -> core::slice::ChunksExact<'_, f64> {
    fw.logits().chunks_exact(v)
}

/// Masked-token loss of `model` on `sentences`, each with every selected
/// position replaced by the mask token; mask patterns come from `seed`.
pub fn heldout_loss(model: &ToyMlm, sentences: &[Vec<TokenId>], seed: u64) -> f64 {
    let cfg = model.config();
    let examples: Vec<TrainingExample> = sentences
        .iter()
        .enumerate()
        .filter(|(_, s)| !s.is_empty())
        .map(|(i, s)| {
            let s = &s[..s.len().min(cfg.max_seq_len)];
            mask_example(
                s,
                model.vocab(),
                cfg.mask_rate,
                &mut stream(seed, "heldout", &[i as u64]),
                true,
            )
        })
        .collect();
    mean_loss(model, &examples)
}

/// Train the toy model, handing a checkpoint to `sink` at every scheduled
/// step (including step 0 when starting fresh).
///
/// Passing `resume` continues from a saved state; the result is identical to
/// an uninterrupted run with the same config and corpus.
pub fn pretrain_toy(
    config: &ToyMlmConfig,
    vocab: &Vocabulary,
    corpus: &[Vec<TokenId>],
    sink: &mut dyn CheckpointSink,
    resume: Option<TrainState>,
) -> Result<PretrainOutcome> {
    config.validate()?;
    if vocab.size() != config.vocab_size {
        return Err(Error::config(
            "vocab_size",
            alloc::format!("config says {} but vocabulary has {}", config.vocab_size, vocab.size()),
        ));
    }
    let mut data = Data::new(config, vocab, corpus)?;
    let layout = ParamLayout::new(config);
    let mut state = match resume {
        Some(s) => {
            if s.params.len() != layout.total() || s.adam_m.len() != layout.total() || s.adam_v.len() != layout.total()
            {
                return Err(Error::ContractViolation("resume state does not match config".into()));
            }
            if s.step > config.total_steps {
                return Err(Error::config("total_steps", "resume state is past total_steps"));
            }
            s
        }
        None => TrainState::fresh(layout.init(config.init_std, &mut stream(config.seed, "init", &[]))),
    };
    let mut outcome = PretrainOutcome {
        checkpoints: Vec::new(),
        losses: Vec::new(),
        n_train: data.train.len(),
        n_heldout: data.heldout.len(),
    };
    let dims = config.dims();
    let evaluate = |state: &TrainState, heldout: &[TrainingExample]| -> Result<f64> {
        Ok(mean_loss(&state.model(config, vocab)?, heldout))
    };

    if state.step == 0 && config.checkpoint_schedule.contains(&0) {
        let rec = LossRecord {
            step: 0,
            train_loss: None,
            heldout_loss: Some(evaluate(&state, &data.heldout)?),
        };
        sink.log(&rec)?;
        outcome.losses.push(rec);
        outcome.checkpoints.push(sink.save(&state)?);
    }

    let (b1, b2) = (config.adam_beta1, config.adam_beta2);
    while state.step < config.total_steps {
        let step = state.step + 1;
        let batch = data.batch(step);
        let packed = batch.packed();
        let mut drop_rng = stream(config.seed, "dropout", &[step]);
        let dropout = (config.dropout > 0.0).then_some((config.dropout, &mut drop_rng));
        let (loss, grad) = loss_and_grad(dims, &layout, &state.params, &packed, dropout);

        let lr = lr_at(config, step);
        let c1 = 1.0 - b1.powi(step as i32);
        let c2 = 1.0 - b2.powi(step as i32);
        for e in layout.entries() {
            let range = e.offset..e.offset + e.len;
            let decay = if e.decay { lr * config.weight_decay } else { 0.0 };
            for i in range {
                let g = grad[i];
                let m = b1 * state.adam_m[i] + (1.0 - b1) * g;
                let v = b2 * state.adam_v[i] + (1.0 - b2) * g * g;
                state.adam_m[i] = m;
                state.adam_v[i] = v;
                let p = state.params[i] * (1.0 - decay);
                state.params[i] = p - lr * (m / c1) / ((v / c2).sqrt() + config.adam_eps);
            }
        }
        state.step = step;

        let log_train = config.log_every > 0 && step % config.log_every == 0;
        let scheduled = config.checkpoint_schedule.binary_search(&step).is_ok();
        if log_train || scheduled {
            let rec = LossRecord {
                step,
                train_loss: log_train.then_some(loss),
                heldout_loss: if scheduled {
                    Some(evaluate(&state, &data.heldout)?)
                } else {
                    None
                },
            };
            sink.log(&rec)?;
            outcome.losses.push(rec);
        }
        if scheduled {
            outcome.checkpoints.push(sink.save(&state)?);
        }
    }
    Ok(outcome)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckOptions {
    /// Central-difference half step.
    pub h: f64,
    pub samples_per_tensor: usize,
    /// Parameters whose analytic gradient is smaller than this are not
    /// sampled: their relative error is dominated by floating-point noise.
    pub grad_floor: f64,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            h: 1e-5,
            samples_per_tensor: 6,
            grad_floor: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    /// max |analytic − numeric| / (|analytic| + 1e-8) over checked parameters.
    pub max_rel_error: f64,
    pub checked: usize,
    pub loss: f64,
    /// `(parameter index, analytic, numeric)` for every checked parameter.
    pub samples: Vec<(usize, f64, f64)>,
}

/// Compare analytic gradients with central finite differences at the
/// parameters of a freshly initialized model (dropout masks held fixed).
pub fn gradient_check(config: &ToyMlmConfig, batch: &TrainingBatch, opts: &GradCheckOptions) -> Result<GradCheck> {
    config.validate()?;
    let layout = ParamLayout::new(config);
    let params = layout.init(config.init_std, &mut stream(config.seed, "init", &[]));
    let dims = config.dims();
    let packed = batch.packed();
    let run = |p: &[f64]| {
        let mut rng = stream(opts.seed, "gradcheck-dropout", &[]);
        let dropout = (config.dropout > 0.0).then_some((config.dropout, &mut rng));
        loss_and_grad(dims, &layout, p, &packed, dropout)
    };
    let (loss, grad) = run(&params);
    let mut pick = stream(opts.seed, "gradcheck-pick", &[]);
    let mut samples = Vec::new();
    let mut max_rel: f64 = 0.0;
    let mut probe = params.clone();
    for e in layout.entries() {
        let mut candidates: Vec<usize> = (e.offset..e.offset + e.len)
            .filter(|&i| grad[i].abs() >= opts.grad_floor)
            .collect();
        candidates.shuffle(&mut pick);
        for &i in candidates.iter().take(opts.samples_per_tensor) {
            probe[i] = params[i] + opts.h;
            let plus = run(&probe).0;
            probe[i] = params[i] - opts.h;
            let minus = run(&probe).0;
            probe[i] = params[i];
            let numeric = (plus - minus) / (2.0 * opts.h);
            let rel = (grad[i] - numeric).abs() / (grad[i].abs() + 1e-8);
            max_rel = max_rel.max(rel);
            samples.push((i, grad[i], numeric));
        }
    }
    Ok(GradCheck {
        max_rel_error: max_rel,
        checked: samples.len(),
        loss,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{MASK_TOKEN, PAD_TOKEN};
    use alloc::string::ToString;

    fn vocab(words: &[&str]) -> Vocabulary {
        let mut t = vec![PAD_TOKEN.to_string(), MASK_TOKEN.to_string()];
        t.extend(words.iter().map(|w| w.to_string()));
        Vocabulary::new(t).unwrap()
    }

    fn tiny_config(v: usize) -> ToyMlmConfig {
        ToyMlmConfig {
            d_model: 8,
            n_layers: 1,
            n_heads: 2,
            ffn_dim: 16,
            max_seq_len: 8,
            init_std: 0.5,
            total_steps: 10,
            checkpoint_schedule: vec![0, 10],
            ..ToyMlmConfig::toy(v)
        }
    }

    fn tiny_batch(v: &Vocabulary) -> TrainingBatch {
        let mut rng = stream(3, "batch", &[]);
        let seqs: [&[TokenId]; 3] = [&[2, 3, 4, 5, 6], &[7, 8, 9, 10, 11, 2], &[4, 4, 5]];
        TrainingBatch {
            examples: seqs.iter().map(|s| mask_example(s, v, 0.4, &mut rng, false)).collect(),
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let v = vocab(&["a", "b", "c", "d", "e", "f", "g", "h", "i", "j"]);
        let cfg = tiny_config(v.size());
        let check = gradient_check(&cfg, &tiny_batch(&v), &GradCheckOptions::default()).unwrap();
        assert!(check.checked > 50, "checked {}", check.checked);
        assert!(check.max_rel_error <= 1e-4, "max rel error {}", check.max_rel_error);
    }

    #[test]
    fn gradients_match_with_dropout_and_two_layers() {
        let v = vocab(&["a", "b", "c", "d", "e", "f", "g", "h", "i", "j"]);
        let cfg = ToyMlmConfig {
            dropout: 0.2,
            n_layers: 2,
            ..tiny_config(v.size())
        };
        let check = gradient_check(&cfg, &tiny_batch(&v), &GradCheckOptions::default()).unwrap();
        assert!(check.max_rel_error <= 1e-4, "max rel error {}", check.max_rel_error);
    }

    #[test]
    fn finite_difference_step_sweep_is_smooth() {
        let v = vocab(&["a", "b", "c", "d", "e", "f", "g", "h", "i", "j"]);
        let cfg = tiny_config(v.size());
        let batch = tiny_batch(&v);
        let a = gradient_check(&cfg, &batch, &GradCheckOptions::default()).unwrap();
        let b = gradient_check(
            &cfg,
            &batch,
            &GradCheckOptions {
                h: 2e-5,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(a.checked, b.checked);
        for (x, y) in a.samples.iter().zip(&b.samples) {
            assert_eq!(x.0, y.0);
            assert!((x.2 - y.2).abs() <= 1e-6 * (1.0 + x.1.abs()), "{x:?} vs {y:?}");
        }
        assert!(b.max_rel_error <= 1e-4);
    }

    #[test]
    fn empty_targets_give_zero_loss_and_gradient() {
        let v = vocab(&["a", "b"]);
        let cfg = tiny_config(v.size());
        let model = ToyMlm::initialized(cfg, v.clone()).unwrap();
        let batch = TrainingBatch {
            examples: vec![TrainingExample {
                input: vec![v.pad_id(); 5],
                targets: vec![],
            }],
        };
        let (loss, grad) = model.batch_loss_and_grad(&batch).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn masking_is_static_and_follows_the_rate() {
        let v = vocab(&["a", "b", "c", "d", "e", "f", "g", "h"]);
        let seq: Vec<TokenId> = (2..10).collect();
        let a = mask_example(&seq, &v, 0.15, &mut stream(1, "mask", &[4, 0]), false);
        let b = mask_example(&seq, &v, 0.15, &mut stream(1, "mask", &[4, 0]), false);
        assert_eq!(a, b);
        assert_eq!(a.targets.len(), 1);
        let mut replaced = [0usize; 3];
        for i in 0..4000u64 {
            let e = mask_example(&seq, &v, 0.25, &mut stream(9, "mask", &[i]), false);
            assert_eq!(e.targets.len(), 2);
            for &(p, gold) in &e.targets {
                assert_eq!(seq[p], gold);
                let slot = if e.input[p] == v.mask_id() {
                    0
                } else if e.input[p] == gold {
                    2
                } else {
                    1
                };
                replaced[slot] += 1;
            }
        }
        let frac = replaced[0] as f64 / 8000.0;
        assert!((frac - 0.8).abs() < 0.03, "mask fraction {frac}");
    }

    #[test]
    fn learning_rate_schedule_shape() {
        let cfg = ToyMlmConfig {
            total_steps: 100,
            warmup_steps: 10,
            peak_lr: 1.0,
            checkpoint_schedule: vec![0, 100],
            ..ToyMlmConfig::toy(10)
        };
        assert_eq!(lr_at(&cfg, 5), 0.5);
        assert_eq!(lr_at(&cfg, 10), 1.0);
        assert!((lr_at(&cfg, 55) - 0.5).abs() < 1e-12);
        assert_eq!(lr_at(&cfg, 100), 0.0);
    }

    #[test]
    fn overfit_single_sentence_recovers_middle_token() {
        let v = vocab(&["a", "b", "c"]);
        let cfg = ToyMlmConfig {
            d_model: 16,
            n_layers: 1,
            n_heads: 2,
            ffn_dim: 32,
            max_seq_len: 4,
            batch_size: 4,
            total_steps: 500,
            warmup_steps: 20,
            peak_lr: 5e-3,
            checkpoint_schedule: vec![0, 500],
            ..ToyMlmConfig::toy(5)
        };
        let corpus = vec![v.encode(&["a", "b", "c"]).unwrap()];
        let mut sink = MemorySink::default();
        let out = pretrain_toy(&cfg, &v, &corpus, &mut sink, None).unwrap();
        assert_eq!(out.checkpoints.len(), 2);
        let model = sink.checkpoints.last().unwrap().model(&cfg, &v).unwrap();
        let m = v.mask_id();
        let dist = model.score_masked(&[2, m, 4], &[1]).unwrap();
        assert_eq!(dist[0].argmax(), v.id("b").unwrap());
    }

    fn small_run_config(v: usize) -> ToyMlmConfig {
        ToyMlmConfig {
            d_model: 16,
            n_layers: 1,
            n_heads: 2,
            ffn_dim: 32,
            max_seq_len: 6,
            batch_size: 8,
            total_steps: 60,
            warmup_steps: 10,
            log_every: 20,
            checkpoint_schedule: vec![0, 30, 60],
            dropout: 0.1,
            heldout_fraction: 0.2,
            ..ToyMlmConfig::toy(v)
        }
    }

    fn small_corpus(v: &Vocabulary) -> Vec<Vec<TokenId>> {
        let words = ["a", "b", "c", "d", "e"];
        (0..40)
            .map(|i| {
                let s: Vec<&str> = (0..4).map(|j| words[(i * 7 + j * 3 + i / 5) % 5]).collect();
                v.encode(&s).unwrap()
            })
            .collect()
    }

    #[test]
    fn schedule_contract_and_determinism() {
        let v = vocab(&["a", "b", "c", "d", "e"]);
        let cfg = small_run_config(v.size());
        let corpus = small_corpus(&v);
        let mut s1 = MemorySink::default();
        let o1 = pretrain_toy(&cfg, &v, &corpus, &mut s1, None).unwrap();
        let steps: Vec<u64> = o1.checkpoints.iter().map(|c| c.step).collect();
        assert_eq!(steps, vec![0, 30, 60]);
        let logged: Vec<u64> = o1.losses.iter().map(|r| r.step).collect();
        assert_eq!(logged, vec![0, 20, 30, 40, 60]);

        let mut s2 = MemorySink::default();
        pretrain_toy(&cfg, &v, &corpus, &mut s2, None).unwrap();
        assert_eq!(s1.checkpoints, s2.checkpoints);
        let bits =
            |s: &MemorySink| -> Vec<Option<u64>> { s.losses.iter().map(|r| r.train_loss.map(f64::to_bits)).collect() };
        assert_eq!(bits(&s1), bits(&s2));
    }

    #[test]
    fn resume_matches_uninterrupted_run() {
        let v = vocab(&["a", "b", "c", "d", "e"]);
        let cfg = small_run_config(v.size());
        let corpus = small_corpus(&v);
        let mut full = MemorySink::default();
        pretrain_toy(&cfg, &v, &corpus, &mut full, None).unwrap();
        let mid = full.checkpoints[1].clone();
        assert_eq!(mid.step, 30);
        let mut rest = MemorySink::default();
        pretrain_toy(&cfg, &v, &corpus, &mut rest, Some(mid)).unwrap();
        assert_eq!(rest.checkpoints.len(), 1);
        assert_eq!(rest.checkpoints[0], full.checkpoints[2]);
    }

    #[test]
    fn errors() {
        let v = vocab(&["a"]);
        let cfg = small_run_config(v.size());
        let mut sink = MemorySink::default();
        assert!(matches!(
            pretrain_toy(&cfg, &v, &[], &mut sink, None),
            Err(Error::NoData(_))
        ));
        let bad = ToyMlmConfig {
            checkpoint_schedule: vec![0, 61],
            ..cfg
        };
        assert!(matches!(
            pretrain_toy(&bad, &v, &[vec![2]], &mut sink, None),
            Err(Error::Config { .. })
        ));
    }
}

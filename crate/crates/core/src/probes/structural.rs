//! Linear probes over a learned scalar mix of frozen layer representations.
//!
//! Representations are extracted once per sentence; only the mix weights, the
//! mix scale and the linear classifier are trained. Pairwise tasks feed the
//! concatenation `[f(head); f(dep)]`, and because the mix is linear the
//! concatenation is formed per layer before mixing.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use super::spans::span_counts;
use super::{ArcSentence, Score, TokenLabelSentence};
use crate::backend::{Backend, LayerRepresentations};
use crate::rng::stream;
use crate::{Error, Result};

pub const ARC: &str = "arc";
pub const NO_ARC: &str = "no_arc";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarMix {
    pub raw_weights: Vec<f64>,
    pub scale: f64,
    /// Softmax-normalize `raw_weights`; when false they are used as given.
    pub normalize: bool,
}

impl ScalarMix {
    /// Uniform mix over `n_layers` with unit scale.
    pub fn new(n_layers: usize, normalize: bool) -> Self {
        ScalarMix {
            raw_weights: alloc::vec![if normalize { 0.0 } else { 1.0 / n_layers as f64 }; n_layers],
            scale: 1.0,
            normalize,
        }
    }

    pub fn weights(&self) -> Vec<f64> {
        if !self.normalize {
            return self.raw_weights.clone();
        }
        let m = self.raw_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = self.raw_weights.iter().map(|a| (a - m).exp()).collect();
        let z: f64 = e.iter().sum();
        e.into_iter().map(|v| v / z).collect()
    }
}

/// `γ · Σ_ℓ w_ℓ f^ℓ(position)`.
pub fn mix(layers: &LayerRepresentations, position: usize, scalar_mix: &ScalarMix) -> Result<Vec<f64>> {
    if position >= layers.seq_len() {
        return Err(Error::Index {
            index: position,
            len: layers.seq_len(),
        });
    }
    if scalar_mix.raw_weights.len() != layers.n_layers() {
        return Err(Error::ContractViolation(alloc::format!(
            "mix has {} weights for {} layers",
            scalar_mix.raw_weights.len(),
            layers.n_layers()
        )));
    }
    let mut out = alloc::vec![0.0; layers.width()];
    for (l, w) in scalar_mix.weights().into_iter().enumerate() {
        for (o, v) in out.iter_mut().zip(layers.vector(l, position)) {
            *o += w * v;
        }
    }
    out.iter_mut().for_each(|o| *o *= scalar_mix.scale);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearProbeModel {
    /// Row-major `input_width × n_labels`.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub scalar_mix: ScalarMix,
    pub label_set: Vec<String>,
    pub input_width: usize,
}

impl LinearProbeModel {
    pub fn new(n_layers: usize, input_width: usize, label_set: Vec<String>, normalize_mix: bool) -> Self {
        let n = label_set.len();
        LinearProbeModel {
            weight: alloc::vec![0.0; input_width * n],
            bias: alloc::vec![0.0; n],
            scalar_mix: ScalarMix::new(n_layers, normalize_mix),
            label_set,
            input_width,
        }
    }

    fn n_labels(&self) -> usize {
        self.label_set.len()
    }

    fn mixed(&self, feature: &[f64], n_layers: usize) -> Vec<f64> {
        let w = self.scalar_mix.weights();
        let mut x = alloc::vec![0.0; self.input_width];
        for l in 0..n_layers {
            let block = &feature[l * self.input_width..(l + 1) * self.input_width];
            for (xi, f) in x.iter_mut().zip(block) {
                *xi += w[l] * f;
            }
        }
        x
    }

    fn logits(&self, x_unscaled: &[f64]) -> Vec<f64> {
        let mut z = self.bias.clone();
        let g = self.scalar_mix.scale;
        for (i, &xi) in x_unscaled.iter().enumerate() {
            let row = &self.weight[i * self.n_labels()..(i + 1) * self.n_labels()];
            for (zj, wij) in z.iter_mut().zip(row) {
                *zj += g * xi * wij;
            }
        }
        z
    }

    /// Argmax label index; the lowest index wins ties.
    fn predict(&self, feature: &[f64], n_layers: usize) -> usize {
        let z = self.logits(&self.mixed(feature, n_layers));
        let mut best = 0;
        for (j, &v) in z.iter().enumerate() {
            if v > z[best] {
                best = j;
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeHyper {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub normalize_mix: bool,
}

impl Default for ProbeHyper {
    fn default() -> Self {
        ProbeHyper {
            epochs: 10,
            learning_rate: 1e-3,
            batch_size: 32,
            seed: 0,
            normalize_mix: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArcMode {
    /// Binary arc / no-arc over gold arcs plus sampled negatives.
    Pred,
    /// Arc label over gold arcs only.
    Class,
}

/// Which quantity selects the epoch and is reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StructuralMetric {
    Accuracy,
    SpanF1,
}

/// Frozen features for one split: every example is `n_layers` blocks of
/// `input_width` values.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub n_layers: usize,
    pub input_width: usize,
    features: Vec<f64>,
    gold: Vec<String>,
    /// Example count per scored sentence, in order.
    sentence_sizes: Vec<usize>,
    pub n_skipped: usize,
}

impl FeatureSet {
    pub fn len(&self) -> usize {
        self.gold.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gold.is_empty()
    }

    pub fn n_sentences(&self) -> usize {
        self.sentence_sizes.len()
    }

    fn feature(&self, i: usize) -> &[f64] {
        let n = self.n_layers * self.input_width;
        &self.features[i * n..(i + 1) * n]
    }
}

struct Builder {
    n_layers: usize,
    width: usize,
    set: FeatureSet,
}

impl Builder {
    fn new(backend: &dyn Backend, pairwise: bool) -> Self {
        let caps = backend.capabilities();
        let input_width = caps.width * if pairwise { 2 } else { 1 };
        Builder {
            n_layers: caps.n_layers,
            width: caps.width,
            set: FeatureSet {
                n_layers: caps.n_layers,
                input_width,
                features: Vec::new(),
                gold: Vec::new(),
                sentence_sizes: Vec::new(),
                n_skipped: 0,
            },
        }
    }

    /// Encode a sentence, or `None` when it must be skipped.
    fn encode(&mut self, backend: &dyn Backend, tokens: &[String]) -> Result<Option<LayerRepresentations>> {
        if tokens.is_empty() || tokens.len() > backend.capabilities().max_seq_len {
            self.set.n_skipped += 1;
            return Ok(None);
        }
        let ids = match backend.vocab().encode(tokens) {
            Ok(ids) => ids,
            Err(Error::OutOfVocabulary(_)) => {
                self.set.n_skipped += 1;
                return Ok(None);
            }
            Err(e) => return Err(e),
        };
        let reps = backend.encode(&ids)?;
        if reps.n_layers() != self.n_layers || reps.width() != self.width || reps.seq_len() != tokens.len() {
            return Err(Error::ContractViolation(
                "backend representations disagree with its advertised capabilities".into(),
            ));
        }
        Ok(Some(reps))
    }

    fn push(&mut self, reps: &LayerRepresentations, positions: &[usize], label: &str) {
        for l in 0..self.n_layers {
            for &p in positions {
                self.set.features.extend_from_slice(reps.vector(l, p));
            }
        }
        self.set.gold.push(label.into());
    }
}

pub fn extract_token_labels(backend: &dyn Backend, data: &[TokenLabelSentence]) -> Result<FeatureSet> {
    let mut b = Builder::new(backend, false);
    for sentence in data {
        sentence.validate()?;
        let Some(reps) = b.encode(backend, &sentence.tokens)? else {
            continue;
        };
        for (p, label) in sentence.labels.iter().enumerate() {
            b.push(&reps, &[p], label);
        }
        b.set.sentence_sizes.push(sentence.tokens.len());
    }
    Ok(b.set)
}

/// Candidate ordered pairs for arc prediction: every gold arc plus, per
/// sentence, negatives drawn uniformly without replacement from the non-arc
/// ordered pairs, one per gold arc while any remain.
pub fn arc_candidates(sentence: &ArcSentence, seed: u64, sentence_index: usize) -> Vec<(usize, usize, &'static str)> {
    let n = sentence.tokens.len();
    let gold: BTreeSet<(usize, usize)> = sentence.arcs.iter().map(|a| (a.head, a.dep)).collect();
    let mut out: Vec<(usize, usize, &'static str)> = sentence.arcs.iter().map(|a| (a.head, a.dep, ARC)).collect();
    let non_arcs: Vec<(usize, usize)> = (0..n)
        .flat_map(|h| (0..n).map(move |d| (h, d)))
        .filter(|&(h, d)| h != d && !gold.contains(&(h, d)))
        .collect();
    let take = gold.len().min(non_arcs.len());
    let mut rng = stream(seed, "arc-negatives", &[sentence_index as u64]);
    let mut picked: Vec<usize> = index::sample(&mut rng, non_arcs.len(), take).into_vec();
    picked.sort_unstable();
    out.extend(picked.into_iter().map(|i| (non_arcs[i].0, non_arcs[i].1, NO_ARC)));
    out
}

pub fn extract_arcs(
    backend: &dyn Backend,
    data: &[ArcSentence],
    mode: ArcMode,
    negative_seed: u64,
) -> Result<FeatureSet> {
    let mut b = Builder::new(backend, true);
    for (i, sentence) in data.iter().enumerate() {
        sentence.validate()?;
        if mode == ArcMode::Pred && sentence.tokens.len() < 2 {
            b.set.n_skipped += 1;
            continue;
        }
        let Some(reps) = b.encode(backend, &sentence.tokens)? else {
            continue;
        };
        let examples: Vec<(usize, usize, String)> = match mode {
            ArcMode::Pred => arc_candidates(sentence, negative_seed, i)
                .into_iter()
                .map(|(h, d, l)| (h, d, l.to_string()))
                .collect(),
            ArcMode::Class => sentence.arcs.iter().map(|a| (a.head, a.dep, a.label.clone())).collect(),
        };
        for (h, d, label) in &examples {
            b.push(&reps, &[*h, *d], label);
        }
        b.set.sentence_sizes.push(examples.len());
    }
    Ok(b.set)
}

fn predictions(probe: &LinearProbeModel, data: &FeatureSet) -> Vec<usize> {
    (0..data.len())
        .map(|i| probe.predict(data.feature(i), data.n_layers))
        .collect()
}

/// Metric value of a probe on a feature set.
pub fn evaluate(probe: &LinearProbeModel, data: &FeatureSet, metric: StructuralMetric) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::NoData("no examples to evaluate".into()));
    }
    check_shape(probe, data)?;
    let pred = predictions(probe, data);
    match metric {
        StructuralMetric::Accuracy => {
            let correct = pred
                .iter()
                .zip(&data.gold)
                .filter(|(&p, g)| probe.label_set[p] == **g)
                .count();
            Ok(correct as f64 / data.len() as f64)
        }
        StructuralMetric::SpanF1 => {
            let (mut gold, mut predicted) = (Vec::new(), Vec::new());
            let mut at = 0;
            for &n in &data.sentence_sizes {
                gold.push(data.gold[at..at + n].to_vec());
                predicted.push(
                    pred[at..at + n]
                        .iter()
                        .map(|&p| probe.label_set[p].clone())
                        .collect::<Vec<_>>(),
                );
                at += n;
            }
            Ok(span_counts(&gold, &predicted)?.f1())
        }
    }
}

fn check_shape(probe: &LinearProbeModel, data: &FeatureSet) -> Result<()> {
    if probe.input_width != data.input_width || probe.scalar_mix.raw_weights.len() != data.n_layers {
        return Err(Error::ContractViolation(alloc::format!(
            "probe expects {} layers of width {}, data has {} of width {}",
            probe.scalar_mix.raw_weights.len(),
            probe.input_width,
            data.n_layers,
            data.input_width
        )));
    }
    Ok(())
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn step(&mut self, params: &mut [&mut f64], grads: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for (i, p) in params.iter_mut().enumerate() {
            let g = grads[i];
            self.m[i] = Self::B1 * self.m[i] + (1.0 - Self::B1) * g;
            self.v[i] = Self::B2 * self.v[i] + (1.0 - Self::B2) * g * g;
            **p -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
        }
    }
}

/// Mean cross-entropy gradient over `batch`, laid out as
/// `[weight, bias, raw_weights, scale]`.
fn batch_gradient(probe: &LinearProbeModel, data: &FeatureSet, labels: &[usize], batch: &[usize]) -> Vec<f64> {
    let (n_in, n_out, n_layers) = (probe.input_width, probe.n_labels(), data.n_layers);
    let mut grad = alloc::vec![0.0; n_in * n_out + n_out + n_layers + 1];
    let w = probe.scalar_mix.weights();
    let g = probe.scalar_mix.scale;
    let inv = 1.0 / batch.len() as f64;
    let mut dw_mix = alloc::vec![0.0; n_layers];
    for &i in batch {
        let f = data.feature(i);
        let x = probe.mixed(f, n_layers);
        let z = probe.logits(&x);
        let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
        let s: f64 = e.iter().sum();
        let dz: Vec<f64> = e
            .iter()
            .enumerate()
            .map(|(j, v)| (v / s - f64::from(u8::from(j == labels[i]))) * inv)
            .collect();
        // z = b + g · Wᵀx
        let mut dx = alloc::vec![0.0; n_in];
        for a in 0..n_in {
            let row = &probe.weight[a * n_out..(a + 1) * n_out];
            let grow = &mut grad[a * n_out..(a + 1) * n_out];
            for j in 0..n_out {
                grow[j] += g * x[a] * dz[j];
                dx[a] += row[j] * dz[j];
            }
        }
        for j in 0..n_out {
            grad[n_in * n_out + j] += dz[j];
        }
        grad[n_in * n_out + n_out + n_layers] += dx.iter().zip(&x).map(|(d, v)| d * v).sum::<f64>();
        for (l, dwl) in dw_mix.iter_mut().enumerate() {
            let block = &f[l * n_in..(l + 1) * n_in];
            *dwl += g * dx.iter().zip(block).map(|(d, v)| d * v).sum::<f64>();
        }
    }
    let mix_grad = &mut grad[n_in * n_out + n_out..n_in * n_out + n_out + n_layers];
    if probe.scalar_mix.normalize {
        let inner: f64 = w.iter().zip(&dw_mix).map(|(a, b)| a * b).sum();
        for l in 0..n_layers {
            mix_grad[l] = w[l] * (dw_mix[l] - inner);
        }
    } else {
        mix_grad.copy_from_slice(&dw_mix);
    }
    grad
}

fn params_mut(probe: &mut LinearProbeModel) -> Vec<&mut f64> {
    probe
        .weight
        .iter_mut()
        .chain(probe.bias.iter_mut())
        .chain(probe.scalar_mix.raw_weights.iter_mut())
        .chain(core::iter::once(&mut probe.scalar_mix.scale))
        .collect()
}

/// Train with mini-batch Adam on cross-entropy and return the epoch whose
/// dev metric is highest (earliest on ties) with that metric value. With zero
/// epochs the initial probe is returned.
///
/// The label set is the sorted set of training labels; dev labels outside it
/// can never be predicted and so count as errors.
pub fn train_probe(
    train: &FeatureSet,
    dev: &FeatureSet,
    metric: StructuralMetric,
    hyper: &ProbeHyper,
) -> Result<(LinearProbeModel, f64)> {
    if train.is_empty() {
        return Err(Error::NoData("no training examples for the probe".into()));
    }
    if hyper.batch_size == 0 {
        return Err(Error::config("batch_size", "must be positive"));
    }
    let label_set: Vec<String> = train
        .gold
        .iter()
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let labels: Vec<usize> = train
        .gold
        .iter()
        .map(|g| label_set.binary_search(g).expect("label from the training set"))
        .collect();
    let mut probe = LinearProbeModel::new(train.n_layers, train.input_width, label_set, hyper.normalize_mix);
    check_shape(&probe, dev)?;
    let n_params = params_mut(&mut probe).len();
    let mut adam = Adam {
        m: alloc::vec![0.0; n_params],
        v: alloc::vec![0.0; n_params],
        t: 0,
    };
    let mut best: Option<(LinearProbeModel, f64)> = None;
    if hyper.epochs == 0 {
        let score = evaluate(&probe, dev, metric)?;
        return Ok((probe, score));
    }
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 0..hyper.epochs {
        let mut rng = stream(hyper.seed, "probe-shuffle", &[epoch as u64]);
        order.shuffle(&mut rng);
        for batch in order.chunks(hyper.batch_size) {
            let grad = batch_gradient(&probe, train, &labels, batch);
            adam.step(&mut params_mut(&mut probe), &grad, hyper.learning_rate);
        }
        let score = evaluate(&probe, dev, metric)?;
        if best.as_ref().is_none_or(|(_, s)| score > *s) {
            best = Some((probe.clone(), score));
        }
    }
    Ok(best.expect("at least one epoch"))
}

fn score_of(probe: &LinearProbeModel, data: &FeatureSet, metric: StructuralMetric) -> Result<Score> {
    let value = evaluate(probe, data, metric)?;
    Ok(Score {
        value,
        n_items: data.n_sentences(),
        n_skipped: data.n_skipped,
    })
}

/// Token accuracy over every position of every scored sentence.
pub fn eval_token_labeling(
    probe: &LinearProbeModel,
    data: &[TokenLabelSentence],
    backend: &dyn Backend,
) -> Result<Score> {
    score_of(probe, &extract_token_labels(backend, data)?, StructuralMetric::Accuracy)
}

/// Micro labeled span F1 of the decoded BIO predictions.
pub fn eval_segmentation(
    probe: &LinearProbeModel,
    data: &[TokenLabelSentence],
    backend: &dyn Backend,
) -> Result<Score> {
    let set = extract_token_labels(backend, data)?;
    for s in data {
        super::spans::bio_spans(&s.labels)?;
    }
    score_of(probe, &set, StructuralMetric::SpanF1)
}

/// Accuracy over arc candidates (balanced for `Pred`, gold arcs for `Class`).
pub fn eval_arcs(
    probe: &LinearProbeModel,
    data: &[ArcSentence],
    backend: &dyn Backend,
    mode: ArcMode,
    negative_seed: u64,
) -> Result<Score> {
    score_of(
        probe,
        &extract_arcs(backend, data, mode, negative_seed)?,
        StructuralMetric::Accuracy,
    )
}

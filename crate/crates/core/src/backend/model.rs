//! Pre-norm transformer encoder with learned positions and a tied output
//! projection, trained with masked-token cross-entropy.
//!
//! Parameters live in one flat `Vec<f64>` described by a [`ParamLayout`], so
//! the optimizer, checkpoint files and the finite-difference checker can treat
//! them uniformly. Linear layers run on all tokens of a batch packed into one
//! matrix; attention runs per sequence, so batches need no padding.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{
    check_masked_query, digest_f64s, Backend, Capabilities, LayerRepresentations, MaskedDistribution, MaskedQuery,
    TokenId, Vocabulary,
};
use crate::linalg::{matmul, matmul_nt, matmul_tn};
use crate::{Error, Result};

const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyMlmConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub ffn_dim: usize,
    pub max_seq_len: usize,
    /// Fraction of tokens selected for prediction in each example.
    pub mask_rate: f64,
    /// Number of distinct static mask patterns per example; epoch `e` uses
    /// pattern `e mod mask_dupe_factor`.
    pub mask_dupe_factor: u64,
    pub batch_size: usize,
    pub total_steps: u64,
    pub warmup_steps: u64,
    pub peak_lr: f64,
    /// Exponent of the polynomial decay after warmup (1 = linear).
    pub lr_decay_power: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub init_std: f64,
    pub seed: u64,
    pub checkpoint_schedule: Vec<u64>,
    /// Training loss is logged every `log_every` updates (0 disables).
    pub log_every: u64,
    /// Fraction of the corpus held out for evaluation loss.
    pub heldout_fraction: f64,
}

impl ToyMlmConfig {
    /// Desk-scale preset used for end-to-end runs.
    pub fn toy(vocab_size: usize) -> Self {
        ToyMlmConfig {
            vocab_size,
            d_model: 64,
            n_layers: 2,
            n_heads: 2,
            ffn_dim: 128,
            max_seq_len: 12,
            mask_rate: 0.15,
            mask_dupe_factor: 10,
            batch_size: 32,
            total_steps: 5000,
            warmup_steps: 250,
            peak_lr: 2e-3,
            lr_decay_power: 1.0,
            adam_beta1: 0.9,
            adam_beta2: 0.98,
            adam_eps: 1e-6,
            weight_decay: 0.01,
            dropout: 0.0,
            init_std: 0.02,
            seed: 0,
            checkpoint_schedule: super::uniform_checkpoint_schedule(5000, 250),
            log_every: 50,
            heldout_fraction: 0.05,
        }
    }

    /// Full-scale RoBERTa-base pretraining setup (1M updates, batch 256).
    /// Recorded for reference; far too large to run on the toy trainer.
    pub fn roberta_base() -> Self {
        ToyMlmConfig {
            vocab_size: 50265,
            d_model: 768,
            n_layers: 12,
            n_heads: 12,
            ffn_dim: 3072,
            max_seq_len: 512,
            mask_rate: 0.15,
            mask_dupe_factor: 1,
            batch_size: 256,
            total_steps: 1_000_000,
            warmup_steps: 10_000,
            peak_lr: 5e-4,
            lr_decay_power: 1.0,
            adam_beta1: 0.9,
            adam_beta2: 0.98,
            adam_eps: 1e-6,
            weight_decay: 0.01,
            dropout: 0.1,
            init_std: 0.02,
            seed: 0,
            checkpoint_schedule: super::default_checkpoint_schedule(1_000_000),
            log_every: 100,
            heldout_fraction: 0.01,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("vocab_size", self.vocab_size),
            ("d_model", self.d_model),
            ("n_heads", self.n_heads),
            ("ffn_dim", self.ffn_dim),
            ("max_seq_len", self.max_seq_len),
            ("batch_size", self.batch_size),
        ];
        for (key, v) in positive {
            if v == 0 {
                return Err(Error::config(key, "must be positive"));
            }
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::config("n_heads", "d_model must be divisible by n_heads"));
        }
        if !(self.mask_rate > 0.0 && self.mask_rate < 1.0) {
            return Err(Error::config("mask_rate", "must lie in (0, 1)"));
        }
        if self.mask_dupe_factor == 0 {
            return Err(Error::config("mask_dupe_factor", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config("dropout", "must lie in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.heldout_fraction) {
            return Err(Error::config("heldout_fraction", "must lie in [0, 1)"));
        }
        if !self.peak_lr.is_finite() || self.peak_lr <= 0.0 {
            return Err(Error::config("peak_lr", "must be positive"));
        }
        let s = &self.checkpoint_schedule;
        if let Some(&bad) = s.iter().find(|&&x| x > self.total_steps) {
            return Err(Error::config(
                "checkpoint_schedule",
                alloc::format!("step {bad} exceeds total_steps {}", self.total_steps),
            ));
        }
        if s.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config("checkpoint_schedule", "must be strictly increasing"));
        }
        if s.first() != Some(&0) || s.last() != Some(&self.total_steps) {
            return Err(Error::config("checkpoint_schedule", "must contain 0 and total_steps"));
        }
        Ok(())
    }

    pub(crate) fn dims(&self) -> Dims {
        Dims {
            v: self.vocab_size,
            d: self.d_model,
            heads: self.n_heads,
            dh: self.d_model / self.n_heads,
            f: self.ffn_dim,
            layers: self.n_layers,
            max_len: self.max_seq_len,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Dims {
    pub v: usize,
    pub d: usize,
    pub heads: usize,
    pub dh: usize,
    pub f: usize,
    pub layers: usize,
    pub max_len: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub len: usize,
    /// Subject to weight decay (matrices only).
    pub decay: bool,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct LayerOffsets {
    ln1_g: usize,
    ln1_b: usize,
    wq: usize,
    bq: usize,
    wk: usize,
    bk: usize,
    wv: usize,
    bv: usize,
    wo: usize,
    bo: usize,
    ln2_g: usize,
    ln2_b: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

#[derive(Debug, Clone)]
pub struct ParamLayout {
    entries: Vec<TensorEntry>,
    total: usize,
    tok_emb: usize,
    pos_emb: usize,
    layers: Vec<LayerOffsets>,
    lnf_g: usize,
    lnf_b: usize,
    out_bias: usize,
}

impl ParamLayout {
    pub fn new(config: &ToyMlmConfig) -> Self {
        let dm = config.dims();
        let mut entries = Vec::new();
        let mut total = 0;
        let mut push = |name: String, shape: Vec<usize>| {
            let len = shape.iter().product();
            let offset = total;
            total += len;
            let decay = shape.len() == 2;
            entries.push(TensorEntry {
                name,
                shape,
                offset,
                len,
                decay,
            });
            offset
        };
        let tok_emb = push("tok_emb".into(), vec![dm.v, dm.d]);
        let pos_emb = push("pos_emb".into(), vec![dm.max_len, dm.d]);
        let mut layers = Vec::new();
        for l in 0..dm.layers {
            let p = |s: &str| alloc::format!("layers.{l}.{s}");
            layers.push(LayerOffsets {
                ln1_g: push(p("ln1.g"), vec![dm.d]),
                ln1_b: push(p("ln1.b"), vec![dm.d]),
                wq: push(p("attn.wq"), vec![dm.d, dm.d]),
                bq: push(p("attn.bq"), vec![dm.d]),
                wk: push(p("attn.wk"), vec![dm.d, dm.d]),
                bk: push(p("attn.bk"), vec![dm.d]),
                wv: push(p("attn.wv"), vec![dm.d, dm.d]),
                bv: push(p("attn.bv"), vec![dm.d]),
                wo: push(p("attn.wo"), vec![dm.d, dm.d]),
                bo: push(p("attn.bo"), vec![dm.d]),
                ln2_g: push(p("ln2.g"), vec![dm.d]),
                ln2_b: push(p("ln2.b"), vec![dm.d]),
                w1: push(p("ffn.w1"), vec![dm.d, dm.f]),
                b1: push(p("ffn.b1"), vec![dm.f]),
                w2: push(p("ffn.w2"), vec![dm.f, dm.d]),
                b2: push(p("ffn.b2"), vec![dm.d]),
            });
        }
        let lnf_g = push("ln_f.g".into(), vec![dm.d]);
        let lnf_b = push("ln_f.b".into(), vec![dm.d]);
        let out_bias = push("out_bias".into(), vec![dm.v]);
        ParamLayout {
            entries,
            total,
            tok_emb,
            pos_emb,
            layers,
            lnf_g,
            lnf_b,
            out_bias,
        }
    }

    pub fn entries(&self) -> &[TensorEntry] {
        &self.entries
    }

    pub fn total(&self) -> usize {
        self.total
    }

    /// Parameters drawn from N(0, init_std²) for matrices, zero biases, unit
    /// layer-norm gains.
    pub(crate) fn init(&self, std: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut params = vec![0.0; self.total];
        let normal = Normal::new(0.0, std).expect("finite init std");
        for e in &self.entries {
            let slot = &mut params[e.offset..e.offset + e.len];
            if e.shape.len() == 2 {
                slot.iter_mut().for_each(|p| *p = normal.sample(rng));
            } else if e.name.ends_with(".g") {
                slot.fill(1.0);
            }
        }
        params
    }
}

/// Sequences packed row-wise; `starts` has one more entry than sequences.
pub(crate) struct Packed {
    pub tokens: Vec<TokenId>,
    pub starts: Vec<usize>,
    /// Packed row and gold token of every prediction target.
    pub targets: Vec<(usize, TokenId)>,
}

impl Packed {
    pub fn from_seqs<'a>(seqs: impl IntoIterator<Item = (&'a [TokenId], &'a [(usize, TokenId)])>) -> Self {
        let mut tokens = Vec::new();
        let mut starts = vec![0];
        let mut targets = Vec::new();
        for (seq, tg) in seqs {
            let base = tokens.len();
            tokens.extend_from_slice(seq);
            targets.extend(tg.iter().map(|&(p, t)| (base + p, t)));
            starts.push(tokens.len());
        }
        Packed {
            tokens,
            starts,
            targets,
        }
    }

    fn n_rows(&self) -> usize {
        self.tokens.len()
    }

    fn seqs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.starts.windows(2).map(|w| (w[0], w[1] - w[0]))
    }
}

struct LayerCache {
    x_in: Vec<f64>,
    xhat1: Vec<f64>,
    rstd1: Vec<f64>,
    a1: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    probs: Vec<f64>,
    ctx: Vec<f64>,
    drop1: Option<Vec<f64>>,
    xhat2: Vec<f64>,
    rstd2: Vec<f64>,
    a2: Vec<f64>,
    u: Vec<f64>,
    g: Vec<f64>,
    drop2: Option<Vec<f64>>,
}

pub(crate) struct Forward {
    layers: Vec<LayerCache>,
    /// Output of the last block (T×d).
    x_out: Vec<f64>,
    /// Final layer norm on target rows.
    zhat: Vec<f64>,
    zrstd: Vec<f64>,
    z: Vec<f64>,
    /// Target-row logits (M×V).
    logits: Vec<f64>,
}

fn rows_add_bias(x: &mut [f64], bias: &[f64]) {
    for row in x.chunks_exact_mut(bias.len()) {
        row.iter_mut().zip(bias).for_each(|(a, b)| *a += b);
    }
}

fn col_sums_into(x: &[f64], width: usize, out: &mut [f64]) {
    for row in x.chunks_exact(width) {
        out.iter_mut().zip(row).for_each(|(o, v)| *o += v);
    }
}

fn layer_norm(x: &[f64], d: usize, g: &[f64], b: &[f64], out: &mut [f64], xhat: &mut [f64], rstd: &mut [f64]) {
    for (r, row) in x.chunks_exact(d).enumerate() {
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let rs = 1.0 / (var + LN_EPS).sqrt();
        rstd[r] = rs;
        for j in 0..d {
            let h = (row[j] - mean) * rs;
            xhat[r * d + j] = h;
            out[r * d + j] = h * g[j] + b[j];
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn layer_norm_backward(
    dy: &[f64],
    xhat: &[f64],
    rstd: &[f64],
    g: &[f64],
    d: usize,
    dx: &mut [f64],
    dg: &mut [f64],
    db: &mut [f64],
) {
    let mut dxhat = vec![0.0; d];
    for (r, dyr) in dy.chunks_exact(d).enumerate() {
        let xh = &xhat[r * d..(r + 1) * d];
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        for j in 0..d {
            dxhat[j] = dyr[j] * g[j];
            m1 += dxhat[j];
            m2 += dxhat[j] * xh[j];
            dg[j] += dyr[j] * xh[j];
            db[j] += dyr[j];
        }
        m1 /= d as f64;
        m2 /= d as f64;
        let rs = rstd[r];
        for j in 0..d {
            dx[r * d + j] += rs * (dxhat[j] - m1 - xh[j] * m2);
        }
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

fn gelu(u: f64) -> f64 {
    0.5 * u * (1.0 + (GELU_C * (u + GELU_A * u * u * u)).tanh())
}

fn gelu_grad(u: f64) -> f64 {
    let t = (GELU_C * (u + GELU_A * u * u * u)).tanh();
    0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * u * u)
}

fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    row.iter_mut().for_each(|v| *v /= sum);
}

fn dropout_mask(n: usize, rate: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let keep = 1.0 / (1.0 - rate);
    (0..n)
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
        .collect()
}

fn attn_offsets(packed: &Packed, heads: usize) -> (Vec<usize>, usize) {
    let mut offs = Vec::with_capacity(packed.starts.len());
    let mut total = 0;
    for (_, n) in packed.seqs() {
        offs.push(total);
        total += heads * n * n;
    }
    (offs, total)
}

pub(crate) fn forward(
    dm: Dims,
    lay: &ParamLayout,
    params: &[f64],
    packed: &Packed,
    mut dropout: Option<(f64, &mut ChaCha8Rng)>,
) -> Forward {
    let d = dm.d;
    let t = packed.n_rows();
    let p = |off: usize, len: usize| &params[off..off + len];

    let mut x = vec![0.0; t * d];
    for (s, n) in packed.seqs() {
        for i in 0..n {
            let tok = packed.tokens[s + i] as usize;
            let e = p(lay.tok_emb + tok * d, d);
            let pe = p(lay.pos_emb + i * d, d);
            for j in 0..d {
                x[(s + i) * d + j] = e[j] + pe[j];
            }
        }
    }

    let (aoffs, atotal) = attn_offsets(packed, dm.heads);
    let scale = 1.0 / (dm.dh as f64).sqrt();
    let mut caches = Vec::with_capacity(dm.layers);
    for lo in &lay.layers {
        let x_in = x;
        let mut xhat1 = vec![0.0; t * d];
        let mut rstd1 = vec![0.0; t];
        let mut a1 = vec![0.0; t * d];
        layer_norm(
            &x_in,
            d,
            p(lo.ln1_g, d),
            p(lo.ln1_b, d),
            &mut a1,
            &mut xhat1,
            &mut rstd1,
        );

        let mut q = vec![0.0; t * d];
        let mut k = vec![0.0; t * d];
        let mut v = vec![0.0; t * d];
        for (w, b, out) in [(lo.wq, lo.bq, &mut q), (lo.wk, lo.bk, &mut k), (lo.wv, lo.bv, &mut v)] {
            matmul(t, d, d, &a1, p(w, d * d), out, false);
            rows_add_bias(out, p(b, d));
        }

        let mut probs = vec![0.0; atotal];
        let mut ctx = vec![0.0; t * d];
        for (si, (s, n)) in packed.seqs().enumerate() {
            for h in 0..dm.heads {
                let c0 = h * dm.dh;
                let base = aoffs[si] + h * n * n;
                for i in 0..n {
                    let qi = &q[(s + i) * d + c0..(s + i) * d + c0 + dm.dh];
                    let row = &mut probs[base + i * n..base + (i + 1) * n];
                    for (j, r) in row.iter_mut().enumerate() {
                        let kj = &k[(s + j) * d + c0..(s + j) * d + c0 + dm.dh];
                        *r = scale * crate::linalg::dot(qi, kj);
                    }
                    softmax_in_place(row);
                    for j in 0..n {
                        let pij = row[j];
                        for e in 0..dm.dh {
                            ctx[(s + i) * d + c0 + e] += pij * v[(s + j) * d + c0 + e];
                        }
                    }
                }
            }
        }

        let mut ao = vec![0.0; t * d];
        matmul(t, d, d, &ctx, p(lo.wo, d * d), &mut ao, false);
        rows_add_bias(&mut ao, p(lo.bo, d));
        let drop1 = dropout
            .as_mut()
            .filter(|(r, _)| *r > 0.0)
            .map(|(r, rng)| dropout_mask(t * d, *r, rng));
        let mut hres = x_in.clone();
        match &drop1 {
            Some(m) => hres.iter_mut().zip(&ao).zip(m).for_each(|((h, a), m)| *h += a * m),
            None => hres.iter_mut().zip(&ao).for_each(|(h, a)| *h += a),
        }

        let mut xhat2 = vec![0.0; t * d];
        let mut rstd2 = vec![0.0; t];
        let mut a2 = vec![0.0; t * d];
        layer_norm(
            &hres,
            d,
            p(lo.ln2_g, d),
            p(lo.ln2_b, d),
            &mut a2,
            &mut xhat2,
            &mut rstd2,
        );
        let mut u = vec![0.0; t * dm.f];
        matmul(t, d, dm.f, &a2, p(lo.w1, d * dm.f), &mut u, false);
        rows_add_bias(&mut u, p(lo.b1, dm.f));
        let g: Vec<f64> = u.iter().map(|&z| gelu(z)).collect();
        let mut o = vec![0.0; t * d];
        matmul(t, dm.f, d, &g, p(lo.w2, dm.f * d), &mut o, false);
        rows_add_bias(&mut o, p(lo.b2, d));
        let drop2 = dropout
            .as_mut()
            .filter(|(r, _)| *r > 0.0)
            .map(|(r, rng)| dropout_mask(t * d, *r, rng));
        let mut out = hres;
        match &drop2 {
            Some(m) => out.iter_mut().zip(&o).zip(m).for_each(|((h, a), m)| *h += a * m),
            None => out.iter_mut().zip(&o).for_each(|(h, a)| *h += a),
        }

        caches.push(LayerCache {
            x_in,
            xhat1,
            rstd1,
            a1,
            q,
            k,
            v,
            probs,
            ctx,
            drop1,
            xhat2,
            rstd2,
            a2,
            u,
            g,
            drop2,
        });
        x = out;
    }

    let m = packed.targets.len();
    let mut y = vec![0.0; m * d];
    for (r, &(row, _)) in packed.targets.iter().enumerate() {
        y[r * d..(r + 1) * d].copy_from_slice(&x[row * d..(row + 1) * d]);
    }
    let mut zhat = vec![0.0; m * d];
    let mut zrstd = vec![0.0; m];
    let mut z = vec![0.0; m * d];
    layer_norm(&y, d, p(lay.lnf_g, d), p(lay.lnf_b, d), &mut z, &mut zhat, &mut zrstd);
    let mut logits = vec![0.0; m * dm.v];
    matmul_nt(m, d, dm.v, &z, p(lay.tok_emb, dm.v * d), &mut logits, false);
    rows_add_bias(&mut logits, p(lay.out_bias, dm.v));

    Forward {
        layers: caches,
        x_out: x,
        zhat,
        zrstd,
        z,
        logits,
    }
}

impl Forward {
    pub(crate) fn logits(&self) -> &[f64] {
        &self.logits
    }
}

/// Mean masked-token cross-entropy and its gradient. With no targets the loss
/// is 0 and the gradient is exactly zero.
pub(crate) fn loss_and_grad(
    dm: Dims,
    lay: &ParamLayout,
    params: &[f64],
    packed: &Packed,
    dropout: Option<(f64, &mut ChaCha8Rng)>,
) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; lay.total];
    let m = packed.targets.len();
    if m == 0 {
        return (0.0, grad);
    }
    let fw = forward(dm, lay, params, packed, dropout);
    let (d, v, t) = (dm.d, dm.v, packed.n_rows());
    let p = |off: usize, len: usize| &params[off..off + len];

    let mut dlogits = fw.logits;
    let mut loss = 0.0;
    for (r, &(_, gold)) in packed.targets.iter().enumerate() {
        let row = &mut dlogits[r * v..(r + 1) * v];
        softmax_in_place(row);
        loss -= row[gold as usize].max(1e-300).ln();
        row[gold as usize] -= 1.0;
        row.iter_mut().for_each(|x| *x /= m as f64);
    }
    loss /= m as f64;

    col_sums_into(&dlogits, v, &mut grad[lay.out_bias..lay.out_bias + v]);
    matmul_tn(
        v,
        m,
        d,
        &dlogits,
        &fw.z,
        &mut grad[lay.tok_emb..lay.tok_emb + v * d],
        true,
    );
    let mut dz = vec![0.0; m * d];
    matmul(m, v, d, &dlogits, p(lay.tok_emb, v * d), &mut dz, false);
    let mut dy = vec![0.0; m * d];
    {
        let (dg, db) = two_slices(&mut grad, lay.lnf_g, lay.lnf_b, d);
        layer_norm_backward(&dz, &fw.zhat, &fw.zrstd, p(lay.lnf_g, d), d, &mut dy, dg, db);
    }
    let mut dx = vec![0.0; t * d];
    for (r, &(row, _)) in packed.targets.iter().enumerate() {
        for j in 0..d {
            dx[row * d + j] += dy[r * d + j];
        }
    }
    drop(fw.x_out);

    let (aoffs, _) = attn_offsets(packed, dm.heads);
    let scale = 1.0 / (dm.dh as f64).sqrt();
    for (lo, c) in lay.layers.iter().zip(&fw.layers).rev() {
        // out = h + drop2 ⊙ o
        let mut dout = dx;
        let mut do_ = dout.clone();
        if let Some(mk) = &c.drop2 {
            do_.iter_mut().zip(mk).for_each(|(a, m)| *a *= m);
        }
        col_sums_into(&do_, d, &mut grad[lo.b2..lo.b2 + d]);
        matmul_tn(dm.f, t, d, &c.g, &do_, &mut grad[lo.w2..lo.w2 + dm.f * d], true);
        let mut du = vec![0.0; t * dm.f];
        matmul_nt(t, d, dm.f, &do_, p(lo.w2, dm.f * d), &mut du, false);
        du.iter_mut().zip(&c.u).for_each(|(a, &u)| *a *= gelu_grad(u));
        col_sums_into(&du, dm.f, &mut grad[lo.b1..lo.b1 + dm.f]);
        matmul_tn(d, t, dm.f, &c.a2, &du, &mut grad[lo.w1..lo.w1 + d * dm.f], true);
        let mut da2 = vec![0.0; t * d];
        matmul_nt(t, dm.f, d, &du, p(lo.w1, d * dm.f), &mut da2, false);
        {
            let (dg, db) = two_slices(&mut grad, lo.ln2_g, lo.ln2_b, d);
            layer_norm_backward(&da2, &c.xhat2, &c.rstd2, p(lo.ln2_g, d), d, &mut dout, dg, db);
        }
        // h = x_in + drop1 ⊙ ao
        let dh = dout;
        let mut dao = dh.clone();
        if let Some(mk) = &c.drop1 {
            dao.iter_mut().zip(mk).for_each(|(a, m)| *a *= m);
        }
        col_sums_into(&dao, d, &mut grad[lo.bo..lo.bo + d]);
        matmul_tn(d, t, d, &c.ctx, &dao, &mut grad[lo.wo..lo.wo + d * d], true);
        let mut dctx = vec![0.0; t * d];
        matmul_nt(t, d, d, &dao, p(lo.wo, d * d), &mut dctx, false);

        let mut dq = vec![0.0; t * d];
        let mut dk = vec![0.0; t * d];
        let mut dv = vec![0.0; t * d];
        for (si, (s, n)) in packed.seqs().enumerate() {
            let mut dp = vec![0.0; n];
            for h in 0..dm.heads {
                let c0 = h * dm.dh;
                let base = aoffs[si] + h * n * n;
                for i in 0..n {
                    let pr = &c.probs[base + i * n..base + (i + 1) * n];
                    let dci = &dctx[(s + i) * d + c0..(s + i) * d + c0 + dm.dh];
                    let mut rowdot = 0.0;
                    for j in 0..n {
                        let vj = &c.v[(s + j) * d + c0..(s + j) * d + c0 + dm.dh];
                        dp[j] = crate::linalg::dot(dci, vj);
                        rowdot += pr[j] * dp[j];
                        for e in 0..dm.dh {
                            dv[(s + j) * d + c0 + e] += pr[j] * dci[e];
                        }
                    }
                    for j in 0..n {
                        let ds = pr[j] * (dp[j] - rowdot) * scale;
                        if ds == 0.0 {
                            continue;
                        }
                        for e in 0..dm.dh {
                            dq[(s + i) * d + c0 + e] += ds * c.k[(s + j) * d + c0 + e];
                            dk[(s + j) * d + c0 + e] += ds * c.q[(s + i) * d + c0 + e];
                        }
                    }
                }
            }
        }
        let mut da1 = vec![0.0; t * d];
        for (w, b, dproj) in [(lo.wq, lo.bq, &dq), (lo.wk, lo.bk, &dk), (lo.wv, lo.bv, &dv)] {
            col_sums_into(dproj, d, &mut grad[b..b + d]);
            matmul_tn(d, t, d, &c.a1, dproj, &mut grad[w..w + d * d], true);
            matmul_nt(t, d, d, dproj, p(w, d * d), &mut da1, true);
        }
        let mut dx_in = dh;
        {
            let (dg, db) = two_slices(&mut grad, lo.ln1_g, lo.ln1_b, d);
            layer_norm_backward(&da1, &c.xhat1, &c.rstd1, p(lo.ln1_g, d), d, &mut dx_in, dg, db);
        }
        dx = dx_in;
    }

    for (s, n) in packed.seqs() {
        for i in 0..n {
            let tok = packed.tokens[s + i] as usize;
            for j in 0..d {
                let g = dx[(s + i) * d + j];
                grad[lay.tok_emb + tok * d + j] += g;
                grad[lay.pos_emb + i * d + j] += g;
            }
        }
    }
    (loss, grad)
}

/// Disjoint mutable views of two equally sized tensors, `a` before `b`.
fn two_slices(buf: &mut [f64], a: usize, b: usize, len: usize) -> (&mut [f64], &mut [f64]) {
    debug_assert!(a + len <= b);
    let (lo, hi) = buf.split_at_mut(b);
    (&mut lo[a..a + len], &mut hi[..len])
}

/// A loaded toy checkpoint: immutable, safe to share across scoring threads.
#[derive(Debug, Clone)]
pub struct ToyMlm {
    config: ToyMlmConfig,
    vocab: Vocabulary,
    layout: ParamLayout,
    params: Vec<f64>,
}

impl ToyMlm {
    pub fn from_params(config: ToyMlmConfig, vocab: Vocabulary, params: Vec<f64>) -> Result<Self> {
        config.validate()?;
        if vocab.size() != config.vocab_size {
            return Err(Error::config(
                "vocab_size",
                alloc::format!("config says {} but vocabulary has {}", config.vocab_size, vocab.size()),
            ));
        }
        let layout = ParamLayout::new(&config);
        if params.len() != layout.total() {
            return Err(Error::ContractViolation(alloc::format!(
                "expected {} parameters, got {}",
                layout.total(),
                params.len()
            )));
        }
        Ok(ToyMlm {
            config,
            vocab,
            layout,
            params,
        })
    }

    /// Randomly initialized model, seeded by `config.seed`.
    pub fn initialized(config: ToyMlmConfig, vocab: Vocabulary) -> Result<Self> {
        let layout = ParamLayout::new(&config);
        let mut rng = crate::rng::stream(config.seed, "init", &[]);
        let params = layout.init(config.init_std, &mut rng);
        Self::from_params(config, vocab, params)
    }

    /// Every parameter zero, including layer-norm gains.
    pub fn zeroed(config: ToyMlmConfig, vocab: Vocabulary) -> Result<Self> {
        let total = ParamLayout::new(&config).total();
        Self::from_params(config, vocab, vec![0.0; total])
    }

    pub fn config(&self) -> &ToyMlmConfig {
        &self.config
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn into_params(self) -> Vec<f64> {
        self.params
    }

    /// Row `t` of the token embedding table.
    pub fn embedding(&self, t: TokenId) -> &[f64] {
        let d = self.config.d_model;
        &self.params[self.layout.tok_emb + t as usize * d..self.layout.tok_emb + (t as usize + 1) * d]
    }

    fn check_tokens(&self, tokens: &[TokenId]) -> Result<()> {
        if tokens.len() > self.config.max_seq_len {
            return Err(Error::Index {
                index: tokens.len(),
                len: self.config.max_seq_len,
            });
        }
        match tokens.iter().find(|&&t| t as usize >= self.vocab.size()) {
            Some(&t) => Err(Error::Index {
                index: t as usize,
                len: self.vocab.size(),
            }),
            None => Ok(()),
        }
    }
}

impl Backend for ToyMlm {
    fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            masked_lm: true,
            n_layers: self.config.n_layers + 1,
            width: self.config.d_model,
            max_seq_len: self.config.max_seq_len,
        }
    }

    fn score_masked(&self, tokens: &[TokenId], positions: &[usize]) -> Result<Vec<MaskedDistribution>> {
        let q = MaskedQuery {
            tokens: tokens.to_vec(),
            positions: positions.to_vec(),
        };
        Ok(self.score_masked_batch(core::slice::from_ref(&q))?.remove(0))
    }

    fn score_masked_batch(&self, queries: &[MaskedQuery]) -> Result<Vec<Vec<MaskedDistribution>>> {
        for q in queries {
            check_masked_query(&self.vocab, self.config.max_seq_len, &q.tokens, &q.positions)?;
        }
        let targets: Vec<Vec<(usize, TokenId)>> = queries
            .iter()
            .map(|q| q.positions.iter().map(|&p| (p, self.vocab.mask_id())).collect())
            .collect();
        let packed = Packed::from_seqs(
            queries
                .iter()
                .zip(&targets)
                .map(|(q, t)| (q.tokens.as_slice(), t.as_slice())),
        );
        let dm = self.config.dims();
        let fw = forward(dm, &self.layout, &self.params, &packed, None);
        let mut rows = fw.logits.chunks_exact(dm.v);
        Ok(queries
            .iter()
            .map(|q| {
                q.positions
                    .iter()
                    .map(|&position| {
                        let mut probs = rows.next().expect("one logit row per target").to_vec();
                        softmax_in_place(&mut probs);
                        MaskedDistribution { position, probs }
                    })
                    .collect()
            })
            .collect())
    }

    fn encode(&self, tokens: &[TokenId]) -> Result<LayerRepresentations> {
        self.check_tokens(tokens)?;
        let dm = self.config.dims();
        let (d, n) = (dm.d, tokens.len());
        let packed = Packed::from_seqs([(tokens, &[][..])]);
        let fw = forward(dm, &self.layout, &self.params, &packed, None);
        let mut data = Vec::with_capacity((dm.layers + 1) * n * d);
        for &t in tokens {
            data.extend_from_slice(self.embedding(t));
        }
        for c in fw.layers.iter().skip(1) {
            data.extend_from_slice(&c.x_in);
        }
        if dm.layers > 0 {
            data.extend_from_slice(&fw.x_out);
        }
        LayerRepresentations::new(dm.layers + 1, n, d, data)
    }

    fn state_digest(&self) -> [u8; 32] {
        digest_f64s(&[&self.params])
    }
}

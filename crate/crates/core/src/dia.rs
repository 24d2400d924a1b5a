//! Decoding information aggregation: a tiny 1-D convolutional network run
//! along the iteration axis of a failed decode, independently for each bit,
//! producing a refined signed reliability per bit. Also iteration diversity:
//! interleaved slices of one trajectory feed separate models and OSD runs.
//!
//! Per bit the network sees a sequence of trajectory tokens (the channel
//! input followed by the per-iteration posteriors) with two channels: the
//! token value and the channel value. The output is
//! `residual * last_token + mean_t(conv_stack(t))`; with a zeroed final layer
//! and `residual = 1` the model returns the last token unchanged.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adam::{staircase_lr, Adam};
use crate::corpus::FailureRecord;
use crate::error::{Error, Result};
use crate::gf2::CodeSpec;
use crate::osd::{build_workspace, osd_decode, DecodingPath, OsdOutcome, StopHook};
use crate::training::{bit_cross_entropy, bit_cross_entropy_grad};

/// Trainable-parameter ceiling for any model built here.
pub const PARAM_BUDGET: usize = 200;
/// Input channels: token value and channel value.
pub const INPUT_CHANNELS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Tanh,
    Linear,
}

/// One convolution along the token axis with zero "same" padding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvLayer {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub activation: Activation,
    /// `[out][in][tap]`, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvLayer {
    fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    #[inline]
    fn w(&self, o: usize, i: usize, j: usize) -> f64 {
        self.weights[(o * self.in_ch + i) * self.kernel + j]
    }

    /// `input` is `[in_ch][len]`; returns pre-activations and activations.
    fn forward(&self, input: &[f64], len: usize, pre: &mut Vec<f64>, out: &mut Vec<f64>) {
        let pad = self.kernel / 2;
        pre.clear();
        pre.resize(self.out_ch * len, 0.0);
        for o in 0..self.out_ch {
            for t in 0..len {
                let mut acc = self.bias[o];
                for i in 0..self.in_ch {
                    for j in 0..self.kernel {
                        let src = t + j;
                        if src >= pad && src - pad < len {
                            acc += self.w(o, i, j) * input[i * len + src - pad];
                        }
                    }
                }
                pre[o * len + t] = acc;
            }
        }
        out.clear();
        out.extend(pre.iter().map(|&p| match self.activation {
            Activation::Tanh => p.tanh(),
            Activation::Linear => p,
        }));
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiaProvenance {
    pub samples: usize,
    pub steps: usize,
    pub seed: u64,
    pub initial_val_loss: f64,
    pub final_val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiaModel {
    pub layers: Vec<ConvLayer>,
    /// Weight of the last token on the skip path.
    pub residual: f64,
    /// Fixed factor applied to the network inputs (not trained).
    pub input_scale: f64,
    #[serde(default)]
    pub provenance: Option<DiaProvenance>,
}

impl DiaModel {
    /// Builds a model with the given hidden widths (tanh), followed by a
    /// linear single-channel output layer initialised to zero.
    pub fn new(hidden: &[usize], kernel: usize, input_scale: f64, seed: u64) -> Result<Self> {
        if kernel == 0 || kernel % 2 == 0 {
            return Err(Error::InvalidArgument(format!("kernel {kernel} must be odd")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::new();
        let mut in_ch = INPUT_CHANNELS;
        for &out_ch in hidden.iter().chain(std::iter::once(&1)) {
            let last = layers.len() == hidden.len();
            let bound = 1.0 / ((in_ch * kernel) as f64).sqrt();
            let weights = (0..out_ch * in_ch * kernel)
                .map(|_| if last { 0.0 } else { rng.random_range(-bound..bound) })
                .collect();
            layers.push(ConvLayer {
                in_ch,
                out_ch,
                kernel,
                activation: if last { Activation::Linear } else { Activation::Tanh },
                weights,
                bias: vec![0.0; out_ch],
            });
            in_ch = out_ch;
        }
        let model = Self {
            layers,
            residual: 1.0,
            input_scale,
            provenance: None,
        };
        if model.parameter_count() >= PARAM_BUDGET {
            return Err(Error::InvalidArgument(format!(
                "{} parameters exceed the budget of {PARAM_BUDGET}",
                model.parameter_count()
            )));
        }
        Ok(model)
    }

    /// Four convolution layers (2 -> 5 -> 5 -> 4 -> 1, kernel 3).
    pub fn four_layer(input_scale: f64, seed: u64) -> Self {
        Self::new(&[5, 5, 4], 3, input_scale, seed).expect("within budget")
    }

    /// Two narrower layers (2 -> 6 -> 1, kernel 3) for diversity groups.
    pub fn two_layer(input_scale: f64, seed: u64) -> Self {
        Self::new(&[6], 3, input_scale, seed).expect("within budget")
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(ConvLayer::param_count).sum::<usize>() + 1
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.parameter_count());
        for l in &self.layers {
            v.extend_from_slice(&l.weights);
            v.extend_from_slice(&l.bias);
        }
        v.push(self.residual);
        v
    }

    pub fn set_flat(&mut self, v: &[f64]) {
        let mut at = 0;
        for l in &mut self.layers {
            let (a, b) = (l.weights.len(), l.bias.len());
            l.weights.copy_from_slice(&v[at..at + a]);
            l.bias.copy_from_slice(&v[at + a..at + a + b]);
            at += a + b;
        }
        self.residual = v[at];
    }

    pub fn validate(&self) -> Result<()> {
        let mut in_ch = INPUT_CHANNELS;
        for (i, l) in self.layers.iter().enumerate() {
            if l.in_ch != in_ch || l.weights.len() != l.out_ch * l.in_ch * l.kernel || l.bias.len() != l.out_ch {
                return Err(Error::Config(format!("layer {i} has inconsistent shapes")));
            }
            in_ch = l.out_ch;
        }
        if in_ch != 1 || self.layers.is_empty() {
            return Err(Error::Config("model must end in a single channel".into()));
        }
        if !(self.input_scale.is_finite() && self.input_scale > 0.0) {
            return Err(Error::Config(format!("bad input scale {}", self.input_scale)));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Per-bit input sequence `[channel][token]`.
    fn bit_input(&self, tokens: &[&[f64]], y: &[f64], bit: usize, out: &mut Vec<f64>) {
        let len = tokens.len();
        out.clear();
        out.extend(tokens.iter().map(|t| t[bit] * self.input_scale));
        out.extend(std::iter::repeat_n(y[bit] * self.input_scale, len));
    }

    fn forward_bit(&self, input: &[f64], last_token: f64, len: usize, tape: &mut BitTape) -> f64 {
        tape.acts.resize(self.layers.len() + 1, Vec::new());
        tape.pres.resize(self.layers.len(), Vec::new());
        tape.acts[0].clear();
        tape.acts[0].extend_from_slice(input);
        for (li, l) in self.layers.iter().enumerate() {
            let (before, after) = tape.acts.split_at_mut(li + 1);
            l.forward(&before[li], len, &mut tape.pres[li], &mut after[0]);
        }
        let head = tape.acts[self.layers.len()].iter().sum::<f64>() / len as f64;
        self.residual * last_token + head
    }

    /// Accumulates `d out / d params * g` into `grad` (flat layout).
    fn backward_bit(&self, tape: &BitTape, last_token: f64, len: usize, g: f64, grad: &mut [f64], scratch: &mut (Vec<f64>, Vec<f64>)) {
        let offsets: Vec<usize> = self
            .layers
            .iter()
            .scan(0, |at, l| {
                let o = *at;
                *at += l.param_count();
                Some(o)
            })
            .collect();
        *grad.last_mut().expect("residual slot") += g * last_token;
        let (g_out, g_in) = scratch;
        g_out.clear();
        g_out.resize(len, g / len as f64);
        for li in (0..self.layers.len()).rev() {
            let l = &self.layers[li];
            let input = &tape.acts[li];
            let act = &tape.acts[li + 1];
            let pad = l.kernel / 2;
            g_in.clear();
            g_in.resize(l.in_ch * len, 0.0);
            let (gw, rest) = grad[offsets[li]..].split_at_mut(l.weights.len());
            let gb = &mut rest[..l.bias.len()];
            for o in 0..l.out_ch {
                for t in 0..len {
                    let mut gp = g_out[o * len + t];
                    if l.activation == Activation::Tanh {
                        let a = act[o * len + t];
                        gp *= 1.0 - a * a;
                    }
                    if gp == 0.0 {
                        continue;
                    }
                    gb[o] += gp;
                    for i in 0..l.in_ch {
                        for j in 0..l.kernel {
                            let src = t + j;
                            if src >= pad && src - pad < len {
                                let idx = (o * l.in_ch + i) * l.kernel + j;
                                gw[idx] += gp * input[i * len + src - pad];
                                g_in[i * len + src - pad] += gp * l.weights[idx];
                            }
                        }
                    }
                }
            }
            std::mem::swap(g_out, g_in);
        }
    }
}

#[derive(Default)]
struct BitTape {
    acts: Vec<Vec<f64>>,
    pres: Vec<Vec<f64>>,
}

fn check_shapes(tokens: &[&[f64]], y: &[f64]) -> Result<()> {
    if tokens.is_empty() {
        return Err(Error::InvalidArgument("trajectory slice is empty".into()));
    }
    if let Some(t) = tokens.iter().find(|t| t.len() != y.len()) {
        return Err(Error::LengthMismatch {
            expected: y.len(),
            got: t.len(),
        });
    }
    Ok(())
}

/// Refined signed reliabilities for every bit of one failure.
pub fn dia_forward(model: &DiaModel, tokens: &[&[f64]], y: &[f64]) -> Result<Vec<f64>> {
    check_shapes(tokens, y)?;
    let len = tokens.len();
    let last = tokens[len - 1];
    let mut tape = BitTape::default();
    let mut input = Vec::new();
    Ok((0..y.len())
        .map(|bit| {
            model.bit_input(tokens, y, bit, &mut input);
            model.forward_bit(&input, last[bit], len, &mut tape)
        })
        .collect())
}

/// One training example: a token slice, the channel values and the truth.
#[derive(Debug, Clone)]
pub struct DiaSample<'a> {
    pub tokens: Vec<&'a [f64]>,
    pub y: &'a [f64],
    pub truth: &'a [u8],
}

impl<'a> DiaSample<'a> {
    /// The tokens of `record` selected by `slice` (indices into the token list).
    pub fn from_record(record: &'a FailureRecord, slice: &[usize]) -> Result<Self> {
        let all = record.tokens();
        let tokens = slice
            .iter()
            .map(|&i| {
                all.get(i)
                    .copied()
                    .ok_or_else(|| Error::InvalidArgument(format!("token {i} beyond {} recorded", all.len())))
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            tokens,
            y: &record.y,
            truth: &record.truth,
        })
    }
}

/// Mean per-bit cross-entropy of the model on `samples`, and its gradient.
fn sample_loss_grad(model: &DiaModel, s: &DiaSample<'_>, grad: Option<&mut [f64]>) -> f64 {
    let len = s.tokens.len();
    let last = s.tokens[len - 1];
    let mut tape = BitTape::default();
    let mut input = Vec::new();
    let mut scratch = (Vec::new(), Vec::new());
    let mut loss = 0.0;
    let inv = 1.0 / s.y.len() as f64;
    let mut grad = grad;
    for bit in 0..s.y.len() {
        model.bit_input(&s.tokens, s.y, bit, &mut input);
        let out = model.forward_bit(&input, last[bit], len, &mut tape);
        loss += bit_cross_entropy(out, s.truth[bit]) * inv;
        if let Some(g) = grad.as_deref_mut() {
            let gl = bit_cross_entropy_grad(out, s.truth[bit]) * inv;
            model.backward_bit(&tape, last[bit], len, gl, g, &mut scratch);
        }
    }
    loss
}

/// Mean per-bit cross-entropy over a set of samples.
pub fn dia_loss(model: &DiaModel, samples: &[DiaSample<'_>]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let total: f64 = samples
        .par_iter()
        .map(|s| sample_loss_grad(model, s, None))
        .collect::<Vec<_>>()
        .iter()
        .sum();
    total / samples.len() as f64
}

/// Gradient of the mean per-bit loss of one sample (flat layout).
pub fn dia_gradient(model: &DiaModel, sample: &DiaSample<'_>) -> (f64, Vec<f64>) {
    let mut g = vec![0.0; model.parameter_count()];
    let l = sample_loss_grad(model, sample, Some(&mut g));
    (l, g)
}

/// Central finite differences of the sample loss (flat layout).
pub fn dia_finite_difference(model: &DiaModel, sample: &DiaSample<'_>, step: f64) -> Vec<f64> {
    let base = model.to_flat();
    let mut m = model.clone();
    (0..base.len())
        .map(|i| {
            let mut v = base.clone();
            v[i] = base[i] + step;
            m.set_flat(&v);
            let up = sample_loss_grad(&m, sample, None);
            v[i] = base[i] - step;
            m.set_flat(&v);
            let down = sample_loss_grad(&m, sample, None);
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// `1 / rms` of every token value in the samples; a sensible input scale.
pub fn input_scale_for(samples: &[DiaSample<'_>]) -> f64 {
    let (mut sum, mut count) = (0.0, 0usize);
    for s in samples {
        for t in &s.tokens {
            sum += t.iter().map(|v| v * v).sum::<f64>();
            count += t.len();
        }
    }
    if count == 0 || sum == 0.0 {
        1.0
    } else {
        1.0 / (sum / count as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiaTrainConfig {
    pub steps: usize,
    /// Frames per mini-batch.
    pub batch_frames: usize,
    pub learning_rate: f64,
    pub decay_factor: f64,
    pub decay_every: usize,
    pub seed: u64,
    pub val_fraction: f64,
    pub min_samples: usize,
    pub eval_every: usize,
}

impl Default for DiaTrainConfig {
    fn default() -> Self {
        Self {
            steps: 600,
            batch_frames: 32,
            learning_rate: 0.01,
            decay_factor: 0.95,
            decay_every: 500,
            seed: 7,
            val_fraction: 0.1,
            min_samples: 20,
            eval_every: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiaEval {
    pub step: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiaTrainOutcome {
    /// The checkpoint with the lowest validation loss.
    pub model: DiaModel,
    pub initial_val_loss: f64,
    pub best_val_loss: f64,
    pub history: Vec<DiaEval>,
}

/// Trains `model` with Adam on a 90/10 (by default) train/validation split.
pub fn dia_train(samples: &[DiaSample<'_>], model: DiaModel, cfg: &DiaTrainConfig) -> Result<DiaTrainOutcome> {
    model.validate()?;
    if samples.len() < cfg.min_samples.max(2) {
        return Err(Error::InvalidArgument(format!(
            "corpus of {} failures is below the minimum of {}",
            samples.len(),
            cfg.min_samples.max(2)
        )));
    }
    if !(cfg.val_fraction > 0.0 && cfg.val_fraction < 1.0) || cfg.batch_frames == 0 {
        return Err(Error::Config("val_fraction must lie in (0, 1) and batch_frames be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut idx: Vec<usize> = (0..samples.len()).collect();
    idx.shuffle(&mut rng);
    let n_val = ((samples.len() as f64 * cfg.val_fraction).round() as usize).clamp(1, samples.len() - 1);
    let val: Vec<DiaSample<'_>> = idx[..n_val].iter().map(|&i| samples[i].clone()).collect();
    let train: Vec<&DiaSample<'_>> = idx[n_val..].iter().map(|&i| &samples[i]).collect();

    let initial_val_loss = dia_loss(&model, &val);
    let mut best = (initial_val_loss, model.clone());
    let mut current = model;
    let mut theta = current.to_flat();
    let mut opt = Adam::new(theta.len(), cfg.learning_rate);
    let mut history = Vec::new();
    let mut recent = 0.0;
    let mut recent_n = 0usize;

    for step in 0..cfg.steps {
        opt.lr = staircase_lr(cfg.learning_rate, cfg.decay_factor, cfg.decay_every, step);
        let batch: Vec<&DiaSample<'_>> = (0..cfg.batch_frames).map(|_| train[rng.random_range(0..train.len())]).collect();
        let parts: Vec<(f64, Vec<f64>)> = batch.par_iter().map(|s| dia_gradient(&current, s)).collect();
        let scale = 1.0 / parts.len() as f64;
        let mut grad = vec![0.0; theta.len()];
        let mut loss = 0.0;
        for (l, g) in &parts {
            loss += l * scale;
            for (a, b) in grad.iter_mut().zip(g) {
                *a += b * scale;
            }
        }
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Diverged { step });
        }
        opt.step(&mut theta, &grad);
        current.set_flat(&theta);
        recent += loss;
        recent_n += 1;
        if (step + 1) % cfg.eval_every.max(1) == 0 || step + 1 == cfg.steps {
            let val_loss = dia_loss(&current, &val);
            history.push(DiaEval {
                step: step + 1,
                train_loss: recent / recent_n as f64,
                val_loss,
            });
            log::debug!("dia step {}: train {:.5} val {val_loss:.5}", step + 1, recent / recent_n as f64);
            recent = 0.0;
            recent_n = 0;
            if val_loss < best.0 {
                best = (val_loss, current.clone());
            }
        }
    }
    let (best_val_loss, mut model) = best;
    if cfg.steps > 0 {
        model.provenance = Some(DiaProvenance {
            samples: samples.len(),
            steps: cfg.steps,
            seed: cfg.seed,
            initial_val_loss,
            final_val_loss: best_val_loss,
        });
    }
    Ok(DiaTrainOutcome {
        model,
        initial_val_loss,
        best_val_loss,
        history,
    })
}

/// Interleaved split of the trajectory tokens into `group_count` groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiversityConfig {
    pub group_count: usize,
}

impl DiversityConfig {
    pub fn new(group_count: usize) -> Result<Self> {
        if group_count == 0 {
            return Err(Error::Config("diversity needs at least one group".into()));
        }
        Ok(Self { group_count })
    }

    /// Group of each token index.
    pub fn assignment(&self, tokens: usize) -> Vec<usize> {
        (0..tokens).map(|t| t % self.group_count).collect()
    }

    /// Token indices of each group; with one group, every token.
    pub fn groups(&self, tokens: usize) -> Vec<Vec<usize>> {
        (0..self.group_count)
            .map(|g| (g..tokens).step_by(self.group_count).collect())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiversityOutcome {
    pub candidate: Vec<u8>,
    pub score: f64,
    /// TEPs evaluated over all groups.
    pub tep_count: u64,
    pub best_group: usize,
    pub per_group: Vec<OsdOutcome>,
}

/// Runs DIA and OSD once per token slice and keeps the lowest-scoring
/// candidate (earliest slice on ties). `models[g]` serves `slices[g]`; a
/// missing model means the slice's last token is used directly.
#[allow(clippy::too_many_arguments)]
pub fn diversity_decode_slices(
    record: &FailureRecord,
    slices: &[Vec<usize>],
    models: &[Option<&DiaModel>],
    code: &CodeSpec,
    path: &DecodingPath,
    budget: usize,
    hook: Option<StopHook<'_>>,
) -> Result<DiversityOutcome> {
    if slices.is_empty() || slices.len() != models.len() {
        return Err(Error::InvalidArgument(format!(
            "{} slices for {} models",
            slices.len(),
            models.len()
        )));
    }
    let mut per_group = Vec::with_capacity(slices.len());
    for (slice, model) in slices.iter().zip(models) {
        let sample = DiaSample::from_record(record, slice)?;
        check_shapes(&sample.tokens, sample.y)?;
        let rel = match model {
            Some(m) => dia_forward(m, &sample.tokens, sample.y)?,
            None => sample.tokens[sample.tokens.len() - 1].to_vec(),
        };
        let ws = build_workspace(&rel, &record.y, code)?;
        per_group.push(osd_decode(&ws, path, budget, hook)?);
    }
    let (best_group, best) = per_group
        .iter()
        .enumerate()
        .fold((0, &per_group[0]), |acc, (g, o)| if o.score < acc.1.score { (g, o) } else { acc });
    Ok(DiversityOutcome {
        candidate: best.candidate.clone(),
        score: best.score,
        tep_count: per_group.iter().map(|o| o.tep_count).sum(),
        best_group,
        per_group,
    })
}

/// Diversity decode with the interleaved grouping of `cfg`.
pub fn diversity_decode(
    record: &FailureRecord,
    models: &[DiaModel],
    cfg: DiversityConfig,
    code: &CodeSpec,
    path: &DecodingPath,
    budget: usize,
) -> Result<DiversityOutcome> {
    if models.len() != cfg.group_count {
        return Err(Error::Config(format!(
            "{} models for {} groups",
            models.len(),
            cfg.group_count
        )));
    }
    let slices = cfg.groups(record.posteriors.len() + 1);
    let refs: Vec<Option<&DiaModel>> = models.iter().map(Some).collect();
    diversity_decode_slices(record, &slices, &refs, code, path, budget, None)
}

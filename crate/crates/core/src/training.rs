//! Training the weighted min-sum decoders.
//!
//! The loss is the cross-entropy between the ground truth and the posterior of
//! every unrolled iteration, averaged over iterations. Gradients come from a
//! hand-written reverse pass through the unrolled flooding decoder: the min
//! routes its gradient to the edge achieving it (lowest index on ties) and the
//! sign product is held constant.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adam::{staircase_lr, Adam};
use crate::channel::{frame_rng, llr_from_received, snr_to_sigma, transmit};
use crate::decoder::{min_pair, sign, sorted_others, EdgeLayout, Fcn, NmsParameters, Variant};
use crate::error::{Error, Result};
use crate::gf2::CodeSpec;
use crate::decoder::DecodingTrajectory;

/// Numerically stable `ln(1 + e^x)`.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Cross-entropy of one bit given posterior `x`, with `p(bit = 1) = 1 / (1 + e^x)`.
#[inline]
pub fn bit_cross_entropy(x: f64, truth: u8) -> f64 {
    let s = 1.0 - 2.0 * f64::from(truth);
    softplus(-s * x)
}

/// Derivative of [`bit_cross_entropy`] with respect to `x`.
#[inline]
pub fn bit_cross_entropy_grad(x: f64, truth: u8) -> f64 {
    let s = 1.0 - 2.0 * f64::from(truth);
    -s * sigmoid(-s * x)
}

/// Iteration-averaged cross-entropy of a trajectory against the truth.
pub fn multiloss(traj: &DecodingTrajectory, truth: &[u8]) -> Result<f64> {
    if traj.posteriors.is_empty() {
        return Err(Error::InvalidArgument("trajectory has no iterations".into()));
    }
    let mut total = 0.0;
    for post in &traj.posteriors {
        if post.len() != truth.len() {
            return Err(Error::LengthMismatch {
                expected: post.len(),
                got: truth.len(),
            });
        }
        total += post.iter().zip(truth).map(|(&x, &c)| bit_cross_entropy(x, c)).sum::<f64>();
    }
    Ok(total / traj.posteriors.len() as f64)
}

/// What the training decoder is fed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum InputKind {
    /// Raw channel output `y`.
    #[default]
    Raw,
    /// `2y / sigma^2`.
    Llr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub snr_range_db: [f64; 2],
    /// Spacing of the SNR grid samples are drawn from.
    pub snr_step_db: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub decay_factor: f64,
    pub decay_every: usize,
    pub total_steps: usize,
    pub max_iters: usize,
    pub seed: u64,
    #[serde(default)]
    pub input: InputKind,
}

impl Default for TrainingConfig {
    /// Settings for the CCSDS (128,64) code.
    fn default() -> Self {
        Self {
            snr_range_db: [2.2, 3.2],
            snr_step_db: 0.2,
            batch_size: 100,
            learning_rate: 0.01,
            decay_factor: 0.95,
            decay_every: 500,
            total_steps: 1500,
            max_iters: 13,
            seed: 1,
            input: InputKind::Llr,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.learning_rate > 0.0) {
            return bad(format!("learning_rate {} must be positive", self.learning_rate));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return bad(format!("decay_factor {} outside (0, 1]", self.decay_factor));
        }
        if self.batch_size == 0 || self.max_iters == 0 || self.decay_every == 0 {
            return bad("batch_size, max_iters and decay_every must be positive".into());
        }
        if self.snr_range_db[0] > self.snr_range_db[1] || !(self.snr_step_db > 0.0) {
            return bad(format!("bad SNR range {:?} / step {}", self.snr_range_db, self.snr_step_db));
        }
        Ok(())
    }

    /// SNR points from the lower to the upper end of the range.
    pub fn snr_grid(&self) -> Vec<f64> {
        let [lo, hi] = self.snr_range_db;
        let steps = ((hi - lo) / self.snr_step_db + 1e-9).floor() as usize;
        (0..=steps).map(|i| lo + i as f64 * self.snr_step_db).collect()
    }
}

/// Gradient with respect to every weight of the decoder.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamGradient {
    pub zeta1: f64,
    pub zeta2: f64,
    pub zeta3: f64,
    /// Same layout as [`Fcn::to_flat`].
    pub fcn: Vec<f64>,
}

impl ParamGradient {
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = vec![self.zeta1, self.zeta2, self.zeta3];
        v.extend_from_slice(&self.fcn);
        v
    }
}

/// Every weight of `params` as `[zeta1, zeta2, zeta3, fcn...]`.
pub fn full_flat(params: &NmsParameters) -> Vec<f64> {
    let mut v = vec![params.zeta1, params.zeta2, params.zeta3];
    if let Some(f) = &params.fcn {
        v.extend(f.to_flat());
    }
    v
}

pub fn set_full_flat(params: &mut NmsParameters, v: &[f64]) {
    params.zeta1 = v[0];
    params.zeta2 = v[1];
    params.zeta3 = v[2];
    if let Some(f) = params.fcn.as_mut() {
        f.set_flat(&v[3..]);
    }
}

/// The free parameters of a variant, respecting its ties.
pub fn trainable(params: &NmsParameters) -> Vec<f64> {
    match params.variant {
        Variant::Bp | Variant::Ms => Vec::new(),
        Variant::Nms1 => vec![params.zeta3],
        Variant::Nms2 => vec![params.zeta1, params.zeta3],
        Variant::Nms3 => vec![params.zeta1, params.zeta2, params.zeta3],
        Variant::NmsR => {
            let mut v = vec![params.zeta1, params.zeta2];
            v.extend(params.fcn.as_ref().map(Fcn::to_flat).unwrap_or_default());
            v
        }
    }
}

pub fn set_trainable(params: &mut NmsParameters, theta: &[f64]) {
    match params.variant {
        Variant::Bp | Variant::Ms => {}
        Variant::Nms1 => params.zeta3 = theta[0],
        Variant::Nms2 => {
            params.zeta1 = theta[0];
            params.zeta2 = theta[0];
            params.zeta3 = theta[1];
        }
        Variant::Nms3 => {
            params.zeta1 = theta[0];
            params.zeta2 = theta[1];
            params.zeta3 = theta[2];
        }
        Variant::NmsR => {
            params.zeta1 = theta[0];
            params.zeta2 = theta[1];
            if let Some(f) = params.fcn.as_mut() {
                f.set_flat(&theta[2..]);
            }
        }
    }
}

/// Projects a full gradient onto a variant's free parameters.
pub fn project_gradient(variant: Variant, g: &ParamGradient) -> Vec<f64> {
    match variant {
        Variant::Bp | Variant::Ms => Vec::new(),
        Variant::Nms1 => vec![g.zeta3],
        Variant::Nms2 => vec![g.zeta1 + g.zeta2, g.zeta3],
        Variant::Nms3 => vec![g.zeta1, g.zeta2, g.zeta3],
        Variant::NmsR => {
            let mut v = vec![g.zeta1, g.zeta2];
            v.extend_from_slice(&g.fcn);
            v
        }
    }
}

struct Tape {
    v2c: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
}

fn effective_zetas(params: &NmsParameters) -> (f64, f64, f64) {
    match params.variant {
        Variant::Bp | Variant::Ms => (1.0, 1.0, 1.0),
        _ => (params.zeta1, params.zeta2, params.zeta3),
    }
}

fn forward_tape(lay: &EdgeLayout, input: &[f64], params: &NmsParameters, iters: usize) -> Tape {
    let (z1, z2, z3) = effective_zetas(params);
    let e = lay.edges();
    let mut c2v = vec![0.0; e];
    let mut sums = vec![0.0; lay.n];
    let mut tape = Tape {
        v2c: Vec::with_capacity(iters),
        post: Vec::with_capacity(iters),
    };
    let mut order = Vec::new();
    let mut others = Vec::new();
    let mut x = Vec::new();
    for _ in 0..iters {
        let v2c: Vec<f64> = (0..e)
            .map(|edge| {
                let v = lay.edge_var[edge];
                z1 * input[v] + sums[v] - c2v[edge]
            })
            .collect();
        for c in 0..lay.checks() {
            let r = lay.check_edges(c);
            let inc = &v2c[r.clone()];
            let out = &mut c2v[r];
            match &params.fcn {
                Some(fcn) if params.variant == Variant::NmsR => {
                    order.clear();
                    order.extend(0..inc.len());
                    order.sort_by(|&a: &usize, &b: &usize| inc[a].abs().total_cmp(&inc[b].abs()).then(a.cmp(&b)));
                    let total: f64 = inc.iter().map(|&v| sign(v)).product();
                    for i in 0..inc.len() {
                        sorted_others(&order, i, fcn.inputs, &mut others);
                        x.clear();
                        x.extend(others.iter().take(fcn.inputs).map(|&j| inc[j].abs()));
                        out[i] = total * sign(inc[i]) * fcn.forward(&x);
                    }
                }
                _ => {
                    let mp = min_pair(inc);
                    for (i, o) in out.iter_mut().enumerate() {
                        let a = mp.argmin_excluding(i);
                        *o = z3 * mp.sign * sign(inc[i]) * inc[a].abs();
                    }
                }
            }
        }
        lay.var_sums(&c2v, &mut sums);
        tape.post.push(input.iter().zip(&sums).map(|(&l, &s)| z2 * l + s).collect());
        tape.v2c.push(v2c);
    }
    tape
}

/// Loss of a full `iters`-iteration unrolled decode (no early stopping).
pub fn unrolled_loss(lay: &EdgeLayout, input: &[f64], truth: &[u8], params: &NmsParameters, iters: usize) -> f64 {
    let tape = forward_tape(lay, input, params, iters);
    tape.post
        .iter()
        .map(|p| p.iter().zip(truth).map(|(&x, &c)| bit_cross_entropy(x, c)).sum::<f64>())
        .sum::<f64>()
        / iters as f64
}

/// Posteriors of the unrolled decode, for cross-checking against the decoder.
pub fn unrolled_posteriors(lay: &EdgeLayout, input: &[f64], params: &NmsParameters, iters: usize) -> Vec<Vec<f64>> {
    forward_tape(lay, input, params, iters).post
}

/// Loss and its gradient with respect to every decoder weight.
pub fn loss_and_gradient(
    lay: &EdgeLayout,
    input: &[f64],
    truth: &[u8],
    params: &NmsParameters,
    iters: usize,
) -> (f64, ParamGradient) {
    let tape = forward_tape(lay, input, params, iters);
    let (_, _, z3) = effective_zetas(params);
    let inv_t = 1.0 / iters as f64;
    let e = lay.edges();
    let n = lay.n;
    let fcn = params.fcn.as_ref().filter(|_| params.variant == Variant::NmsR);

    let mut grad = ParamGradient {
        fcn: vec![0.0; fcn.map_or(0, Fcn::param_count)],
        ..Default::default()
    };
    let mut loss = 0.0;
    let mut g_next = vec![0.0; e];
    let mut g_cur = vec![0.0; e];
    let mut g_sum = vec![0.0; n];
    let mut order = Vec::new();
    let mut others = Vec::new();
    let mut x = Vec::new();
    let mut pre = Vec::new();

    for t in (0..iters).rev() {
        let post = &tape.post[t];
        for v in 0..n {
            loss += bit_cross_entropy(post[v], truth[v]) * inv_t;
            let gp = bit_cross_entropy_grad(post[v], truth[v]) * inv_t;
            grad.zeta2 += gp * input[v];
            g_sum[v] = gp + lay.var_edge_list(v).iter().map(|&edge| g_next[edge]).sum::<f64>();
        }
        for edge in 0..e {
            grad.zeta1 += g_next[edge] * input[lay.edge_var[edge]];
        }
        g_cur.iter_mut().for_each(|g| *g = 0.0);
        let v2c = &tape.v2c[t];
        for c in 0..lay.checks() {
            let r = lay.check_edges(c);
            let base = r.start;
            let inc = &v2c[r.clone()];
            let g_out = |i: usize| g_sum[lay.edge_var[base + i]] - g_next[base + i];
            match fcn {
                Some(f) => {
                    order.clear();
                    order.extend(0..inc.len());
                    order.sort_by(|&a: &usize, &b: &usize| inc[a].abs().total_cmp(&inc[b].abs()).then(a.cmp(&b)));
                    let total: f64 = inc.iter().map(|&v| sign(v)).product();
                    pre.resize(f.hidden, 0.0);
                    let (nw1, nb1, nw2) = (f.w1.len(), f.b1.len(), f.w2.len());
                    for i in 0..inc.len() {
                        let g = g_out(i);
                        if g == 0.0 {
                            continue;
                        }
                        sorted_others(&order, i, f.inputs, &mut others);
                        x.clear();
                        x.extend(others.iter().take(f.inputs).map(|&j| inc[j].abs()));
                        f.hidden_pre(&x, &mut pre);
                        let gs = g * total * sign(inc[i]);
                        // Input gradient starts with the shortcut on x[0].
                        let mut gx = vec![0.0; f.inputs];
                        gx[0] += f.shortcut;
                        for h in 0..f.hidden {
                            let th = pre[h].tanh();
                            let dpre = f.w2[h] * (1.0 - th * th);
                            grad.fcn[nw1 + nb1 + h] += gs * th;
                            grad.fcn[nw1 + h] += gs * dpre;
                            for j in 0..f.inputs {
                                grad.fcn[h * f.inputs + j] += gs * dpre * x[j];
                                gx[j] += dpre * f.w1[h * f.inputs + j];
                            }
                        }
                        grad.fcn[nw1 + nb1 + nw2] += gs;
                        grad.fcn[nw1 + nb1 + nw2 + 1] += gs * x[0];
                        for (j, &src) in others.iter().take(f.inputs).enumerate() {
                            g_cur[base + src] += gs * gx[j] * sign(inc[src]);
                        }
                    }
                }
                None => {
                    let mp = min_pair(inc);
                    for i in 0..inc.len() {
                        let g = g_out(i);
                        if g == 0.0 {
                            continue;
                        }
                        let a = mp.argmin_excluding(i);
                        let s = mp.sign * sign(inc[i]);
                        grad.zeta3 += g * s * inc[a].abs();
                        g_cur[base + a] += g * z3 * s * sign(inc[a]);
                    }
                }
            }
        }
        std::mem::swap(&mut g_next, &mut g_cur);
    }
    for edge in 0..e {
        grad.zeta1 += g_next[edge] * input[lay.edge_var[edge]];
    }
    (loss, grad)
}

/// Central finite differences of [`unrolled_loss`] over `[zeta1, zeta2,
/// zeta3, fcn...]`. Slow; intended for checking the analytic gradient and as
/// a fallback for tiny networks.
pub fn finite_difference_gradient(
    lay: &EdgeLayout,
    input: &[f64],
    truth: &[u8],
    params: &NmsParameters,
    iters: usize,
    step: f64,
) -> Vec<f64> {
    let base = full_flat(params);
    let mut out = Vec::with_capacity(base.len());
    let mut p = params.clone();
    for i in 0..base.len() {
        let mut v = base.clone();
        v[i] = base[i] + step;
        set_full_flat(&mut p, &v);
        let up = unrolled_loss(lay, input, truth, &p, iters);
        v[i] = base[i] - step;
        set_full_flat(&mut p, &v);
        let down = unrolled_loss(lay, input, truth, &p, iters);
        out.push((up - down) / (2.0 * step));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: usize,
    pub loss: f64,
    pub learning_rate: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: NmsParameters,
    pub log: Vec<LossRecord>,
}

/// One training sample: decoder input and transmitted codeword.
pub fn sample_frame(code: &CodeSpec, cfg: &TrainingConfig, grid: &[f64], step: u64, index: u64) -> Result<(Vec<f64>, Vec<u8>)> {
    let mut rng = frame_rng(cfg.seed, step, index);
    let snr = grid[rng.random_range(0..grid.len())];
    let sigma = snr_to_sigma(snr, code.rate())?;
    let msg: Vec<u8> = (0..code.k).map(|_| rng.random_range(0..2u8)).collect();
    let cw = code.encode(&msg)?;
    let frame = transmit(&cw, sigma, &mut rng);
    let input = match cfg.input {
        InputKind::Raw => frame.received,
        InputKind::Llr => llr_from_received(&frame.received, sigma),
    };
    Ok((input, cw))
}

/// Trains a variant from the all-ones initialisation with Adam.
pub fn train(cfg: &TrainingConfig, code: &CodeSpec, variant: Variant) -> Result<TrainOutcome> {
    cfg.validate()?;
    if !matches!(variant, Variant::Nms1 | Variant::Nms2 | Variant::Nms3 | Variant::NmsR) {
        return Err(Error::InvalidArgument(format!("{variant} has no trainable parameters")));
    }
    let lay = EdgeLayout::new(&code.tanner);
    let grid = cfg.snr_grid();
    let mut params = NmsParameters::initial(variant, code);
    let mut theta = trainable(&params);
    let mut opt = Adam::new(theta.len(), cfg.learning_rate);
    let mut log = Vec::with_capacity(cfg.total_steps);

    for step in 0..cfg.total_steps {
        opt.lr = staircase_lr(cfg.learning_rate, cfg.decay_factor, cfg.decay_every, step);
        let per_sample: Vec<(f64, Vec<f64>)> = (0..cfg.batch_size)
            .into_par_iter()
            .map(|i| {
                let (input, truth) = sample_frame(code, cfg, &grid, step as u64, i as u64)?;
                let (loss, g) = loss_and_gradient(&lay, &input, &truth, &params, cfg.max_iters);
                Ok((loss, project_gradient(variant, &g)))
            })
            .collect::<Result<_>>()?;
        let scale = 1.0 / cfg.batch_size as f64;
        let mut grad = vec![0.0; theta.len()];
        let mut loss = 0.0;
        for (l, g) in &per_sample {
            loss += l * scale;
            for (acc, x) in grad.iter_mut().zip(g) {
                *acc += x * scale;
            }
        }
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Diverged { step });
        }
        opt.step(&mut theta, &grad);
        set_trainable(&mut params, &theta);
        log.push(LossRecord {
            step,
            loss,
            learning_rate: opt.lr,
        });
        if step % 100 == 0 {
            log::debug!("step {step}: loss {loss:.4} theta {:?}", &theta[..theta.len().min(3)]);
        }
    }
    Ok(TrainOutcome { params, log })
}

pub fn write_loss_csv<W: Write>(log: &[LossRecord], mut w: W) -> Result<()> {
    writeln!(w, "step,loss,learning_rate")?;
    for r in log {
        writeln!(w, "{},{:.9},{:.9}", r.step, r.loss, r.learning_rate)?;
    }
    Ok(())
}

//! Flooding belief propagation, min-sum, and the weighted neural min-sum
//! family on the Tanner graph.
//!
//! Messages live in flat per-edge arrays. Edges are numbered check by check,
//! so the messages leaving one check node occupy a contiguous slice.
//!
//! The weighted family scales three quantities: the channel term in
//! variable-to-check messages (`zeta1`), the channel term in the posterior
//! (`zeta2`), and the min-sum check-to-variable message (`zeta3`). NMS-r
//! replaces `zeta3 * min` by a small network over the sorted magnitudes.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::hard_decision;
use crate::error::{Error, Result};
use crate::gf2::{CodeSpec, TannerGraph};

/// Default magnitude bound for BP messages entering the tanh rule.
pub const DEFAULT_BP_CLIP: f64 = 19.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "bp")]
    Bp,
    #[serde(rename = "ms")]
    Ms,
    #[serde(rename = "nms-1")]
    Nms1,
    #[serde(rename = "nms-2")]
    Nms2,
    #[serde(rename = "nms-3")]
    Nms3,
    #[serde(rename = "nms-r")]
    NmsR,
}

impl Variant {
    pub fn is_min_sum(self) -> bool {
        !matches!(self, Variant::Bp)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Bp => "bp",
            Variant::Ms => "ms",
            Variant::Nms1 => "nms-1",
            Variant::Nms2 => "nms-2",
            Variant::Nms3 => "nms-3",
            Variant::NmsR => "nms-r",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "bp" => Variant::Bp,
            "ms" => Variant::Ms,
            "nms-1" | "nms1" => Variant::Nms1,
            "nms-2" | "nms2" => Variant::Nms2,
            "nms-3" | "nms3" => Variant::Nms3,
            "nms-r" | "nmsr" => Variant::NmsR,
            other => return Err(Error::InvalidArgument(format!("unknown decoder variant {other:?}"))),
        })
    }
}

/// Two-layer network replacing `zeta3 * min` in NMS-r.
///
/// `out = shortcut * x[0] + sum_h w2[h] * tanh(w1[h] . x + b1[h]) + b2`, with
/// `x` the ascending magnitudes of the other edges. The shortcut on the
/// smallest magnitude lets the network start out as exactly the plain min.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fcn {
    pub inputs: usize,
    pub hidden: usize,
    /// Row-major `hidden x inputs`.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
    pub shortcut: f64,
}

impl Fcn {
    pub const DEFAULT_HIDDEN: usize = 4;

    /// Network computing exactly `x[0]`, with small random first-layer
    /// weights so every parameter receives gradient.
    pub fn min_init(inputs: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 1.0 / (inputs as f64).sqrt();
        Self {
            inputs,
            hidden,
            w1: (0..inputs * hidden).map(|_| rng.random_range(-bound..bound)).collect(),
            b1: vec![0.0; hidden],
            w2: vec![0.0; hidden],
            b2: 0.0,
            shortcut: 1.0,
        }
    }

    pub fn param_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + 2
    }

    /// Hidden pre-activations for `x`.
    pub fn hidden_pre(&self, x: &[f64], out: &mut [f64]) {
        for (h, o) in out.iter_mut().enumerate().take(self.hidden) {
            let row = &self.w1[h * self.inputs..(h + 1) * self.inputs];
            *o = self.b1[h] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
    }

    pub fn forward(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.inputs);
        let mut out = self.shortcut * x[0] + self.b2;
        for h in 0..self.hidden {
            let row = &self.w1[h * self.inputs..(h + 1) * self.inputs];
            let pre = self.b1[h] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
            out += self.w2[h] * pre.tanh();
        }
        out
    }

    /// Flattened parameters: w1, b1, w2, b2, shortcut.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.param_count());
        v.extend_from_slice(&self.w1);
        v.extend_from_slice(&self.b1);
        v.extend_from_slice(&self.w2);
        v.push(self.b2);
        v.push(self.shortcut);
        v
    }

    pub fn set_flat(&mut self, v: &[f64]) {
        let (a, b, c) = (self.w1.len(), self.b1.len(), self.w2.len());
        self.w1.copy_from_slice(&v[..a]);
        self.b1.copy_from_slice(&v[a..a + b]);
        self.w2.copy_from_slice(&v[a + b..a + b + c]);
        self.b2 = v[a + b + c];
        self.shortcut = v[a + b + c + 1];
    }
}

/// Decoder variant and its weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NmsParameters {
    pub variant: Variant,
    pub zeta1: f64,
    pub zeta2: f64,
    pub zeta3: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fcn: Option<Fcn>,
}

impl NmsParameters {
    pub fn bp() -> Self {
        Self::with(Variant::Bp, 1.0, 1.0, 1.0)
    }

    pub fn ms() -> Self {
        Self::with(Variant::Ms, 1.0, 1.0, 1.0)
    }

    pub fn nms1(zeta3: f64) -> Self {
        Self::with(Variant::Nms1, 1.0, 1.0, zeta3)
    }

    pub fn nms2(zeta12: f64, zeta3: f64) -> Self {
        Self::with(Variant::Nms2, zeta12, zeta12, zeta3)
    }

    pub fn nms3(zeta1: f64, zeta2: f64, zeta3: f64) -> Self {
        Self::with(Variant::Nms3, zeta1, zeta2, zeta3)
    }

    pub fn nms_r(zeta1: f64, zeta2: f64, fcn: Fcn) -> Self {
        Self {
            variant: Variant::NmsR,
            zeta1,
            zeta2,
            zeta3: 1.0,
            fcn: Some(fcn),
        }
    }

    fn with(variant: Variant, zeta1: f64, zeta2: f64, zeta3: f64) -> Self {
        Self {
            variant,
            zeta1,
            zeta2,
            zeta3,
            fcn: None,
        }
    }

    /// All-ones initialisation for a variant. NMS-r gets a min-equivalent
    /// network sized for the code's largest check degree.
    pub fn initial(variant: Variant, code: &CodeSpec) -> Self {
        match variant {
            Variant::Bp => Self::bp(),
            Variant::Ms => Self::ms(),
            Variant::Nms1 => Self::nms1(1.0),
            Variant::Nms2 => Self::nms2(1.0, 1.0),
            Variant::Nms3 => Self::nms3(1.0, 1.0, 1.0),
            Variant::NmsR => {
                let inputs = max_check_degree(&code.tanner).saturating_sub(1).max(1);
                Self::nms_r(1.0, 1.0, Fcn::min_init(inputs, Fcn::DEFAULT_HIDDEN, 0x6e6d73))
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(format!("{}: {msg}", self.variant)));
        let finite = [self.zeta1, self.zeta2, self.zeta3].iter().all(|z| z.is_finite());
        if !finite {
            return bad("non-finite weight");
        }
        match self.variant {
            Variant::Bp | Variant::Ms if (self.zeta1, self.zeta2, self.zeta3) != (1.0, 1.0, 1.0) => {
                bad("weights must all be 1")
            }
            Variant::Nms1 if self.zeta1 != 1.0 || self.zeta2 != 1.0 => bad("zeta1 and zeta2 must be 1"),
            Variant::Nms2 if self.zeta1 != self.zeta2 => bad("zeta1 and zeta2 must be tied"),
            Variant::NmsR if self.fcn.is_none() => bad("missing network weights"),
            _ => Ok(()),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: Self = serde_json::from_str(text)?;
        p.validate()?;
        Ok(p)
    }
}

pub fn max_check_degree(tanner: &TannerGraph) -> usize {
    tanner.check_vars.iter().map(Vec::len).max().unwrap_or(0)
}

/// Per-iteration record of one decode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodingTrajectory {
    /// Posterior values after iterations `1..=t_stop`.
    pub posteriors: Vec<Vec<f64>>,
    pub hard_decisions: Vec<Vec<u8>>,
    /// Decoder input: raw channel values (min-sum family) or LLRs (BP).
    pub input: Vec<f64>,
    pub t_stop: usize,
    pub converged: bool,
    pub max_iters: usize,
}

impl DecodingTrajectory {
    pub fn final_hard(&self) -> &[u8] {
        self.hard_decisions.last().map_or(&[], Vec::as_slice)
    }

    pub fn final_posterior(&self) -> &[f64] {
        self.posteriors.last().map_or(&[], Vec::as_slice)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecoderOptions {
    pub max_iters: usize,
    /// Stop at the first iteration whose hard decision has zero syndrome.
    pub early_stop: bool,
    pub bp_clip: f64,
}

impl DecoderOptions {
    pub fn new(max_iters: usize) -> Self {
        Self {
            max_iters,
            early_stop: true,
            bp_clip: DEFAULT_BP_CLIP,
        }
    }
}

/// Flat edge indexing for a Tanner graph.
#[derive(Debug, Clone)]
pub struct EdgeLayout {
    pub n: usize,
    /// Edges of check `c` are `check_ptr[c]..check_ptr[c + 1]`.
    pub check_ptr: Vec<usize>,
    pub edge_var: Vec<usize>,
    /// Edges of variable `v` are `var_edges[var_ptr[v]..var_ptr[v + 1]]`.
    pub var_ptr: Vec<usize>,
    pub var_edges: Vec<usize>,
    pub max_check_degree: usize,
}

impl EdgeLayout {
    pub fn new(tanner: &TannerGraph) -> Self {
        let n = tanner.var_checks.len();
        let mut check_ptr = vec![0];
        let mut edge_var = Vec::new();
        let mut per_var: Vec<Vec<usize>> = vec![Vec::new(); n];
        for vars in &tanner.check_vars {
            for &v in vars {
                per_var[v].push(edge_var.len());
                edge_var.push(v);
            }
            check_ptr.push(edge_var.len());
        }
        let mut var_ptr = vec![0];
        let mut var_edges = Vec::new();
        for edges in per_var {
            var_edges.extend(edges);
            var_ptr.push(var_edges.len());
        }
        Self {
            n,
            check_ptr,
            edge_var,
            var_ptr,
            var_edges,
            max_check_degree: max_check_degree(tanner),
        }
    }

    #[inline]
    pub fn edges(&self) -> usize {
        self.edge_var.len()
    }

    #[inline]
    pub fn checks(&self) -> usize {
        self.check_ptr.len() - 1
    }

    #[inline]
    pub fn check_edges(&self, c: usize) -> std::ops::Range<usize> {
        self.check_ptr[c]..self.check_ptr[c + 1]
    }

    #[inline]
    pub fn var_edge_list(&self, v: usize) -> &[usize] {
        &self.var_edges[self.var_ptr[v]..self.var_ptr[v + 1]]
    }

    /// Per-variable sums of edge messages.
    pub fn var_sums(&self, msgs: &[f64], out: &mut [f64]) {
        for (v, o) in out.iter_mut().enumerate() {
            *o = self.var_edge_list(v).iter().map(|&e| msgs[e]).sum();
        }
    }

    /// Zero syndrome check on packed-free hard decisions.
    pub fn syndrome_ok(&self, bits: &[u8]) -> bool {
        (0..self.checks()).all(|c| self.check_edges(c).fold(0u8, |acc, e| acc ^ bits[self.edge_var[e]]) == 0)
    }
}

/// Sign with zero counted as positive.
#[inline]
pub(crate) fn sign(x: f64) -> f64 {
    if x < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Min-sum extrinsic statistics of one check node: overall sign product and
/// the two smallest magnitudes, ties resolved to the lowest position.
#[derive(Debug, Clone, Copy)]
pub(crate) struct MinPair {
    pub sign: f64,
    pub min1: f64,
    pub arg1: usize,
    pub min2: f64,
    pub arg2: usize,
}

pub(crate) fn min_pair(incoming: &[f64]) -> MinPair {
    let mut mp = MinPair {
        sign: 1.0,
        min1: f64::INFINITY,
        arg1: 0,
        min2: f64::INFINITY,
        arg2: 0,
    };
    for (i, &x) in incoming.iter().enumerate() {
        mp.sign *= sign(x);
        let a = x.abs();
        if a < mp.min1 {
            mp.min2 = mp.min1;
            mp.arg2 = mp.arg1;
            mp.min1 = a;
            mp.arg1 = i;
        } else if a < mp.min2 {
            mp.min2 = a;
            mp.arg2 = i;
        }
    }
    mp
}

impl MinPair {
    /// Position of the smallest magnitude among all edges except `i`.
    #[inline]
    pub fn argmin_excluding(&self, i: usize) -> usize {
        if i == self.arg1 {
            self.arg2
        } else {
            self.arg1
        }
    }
}

/// Ascending magnitudes of all inputs except position `skip`, padded to
/// `width` by repeating the largest.
pub(crate) fn sorted_others(order: &[usize], skip: usize, width: usize, out: &mut Vec<usize>) {
    out.clear();
    out.extend(order.iter().copied().filter(|&i| i != skip));
    let last = *out.last().expect("degree >= 2");
    while out.len() < width {
        out.push(last);
    }
}

/// Outgoing messages of one check node.
pub fn check_node_update(incoming: &[f64], params: &NmsParameters, bp_clip: f64) -> Result<Vec<f64>> {
    if incoming.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "check degree {} < 2",
            incoming.len()
        )));
    }
    let mut out = vec![0.0; incoming.len()];
    let mut scratch = CheckScratch::default();
    check_update_into(incoming, params, bp_clip, &mut out, &mut scratch);
    Ok(out)
}

#[derive(Default)]
pub(crate) struct CheckScratch {
    order: Vec<usize>,
    others: Vec<usize>,
    x: Vec<f64>,
    prefix: Vec<f64>,
}

fn check_update_into(incoming: &[f64], params: &NmsParameters, bp_clip: f64, out: &mut [f64], s: &mut CheckScratch) {
    match params.variant {
        Variant::Bp => {
            let t: Vec<f64> = incoming
                .iter()
                .map(|&x| (x.clamp(-bp_clip, bp_clip) / 2.0).tanh())
                .collect();
            s.prefix.clear();
            let mut acc = 1.0;
            for &v in &t {
                s.prefix.push(acc);
                acc *= v;
            }
            let mut suffix = 1.0;
            for i in (0..t.len()).rev() {
                let p = s.prefix[i] * suffix;
                out[i] = 2.0 * p.atanh();
                suffix *= t[i];
            }
        }
        Variant::NmsR => {
            let fcn = params.fcn.as_ref().expect("validated NMS-r parameters");
            s.order.clear();
            s.order.extend(0..incoming.len());
            s.order
                .sort_by(|&a, &b| incoming[a].abs().total_cmp(&incoming[b].abs()).then(a.cmp(&b)));
            let total_sign: f64 = incoming.iter().map(|&x| sign(x)).product();
            for i in 0..incoming.len() {
                sorted_others(&s.order, i, fcn.inputs, &mut s.others);
                s.x.clear();
                s.x.extend(s.others.iter().take(fcn.inputs).map(|&j| incoming[j].abs()));
                out[i] = total_sign * sign(incoming[i]) * fcn.forward(&s.x);
            }
        }
        _ => {
            let scale = match params.variant {
                Variant::Ms => 1.0,
                _ => params.zeta3,
            };
            let mp = min_pair(incoming);
            for (i, o) in out.iter_mut().enumerate() {
                let mag = if i == mp.arg1 { mp.min2 } else { mp.min1 };
                *o = scale * mp.sign * sign(incoming[i]) * mag;
            }
        }
    }
}

/// Flooding decoder bound to one code.
#[derive(Debug, Clone)]
pub struct MsaDecoder {
    layout: EdgeLayout,
}

impl MsaDecoder {
    pub fn new(code: &CodeSpec) -> Self {
        Self {
            layout: EdgeLayout::new(&code.tanner),
        }
    }

    pub fn layout(&self) -> &EdgeLayout {
        &self.layout
    }

    pub fn decode(&self, input: &[f64], params: &NmsParameters, opts: &DecoderOptions) -> Result<DecodingTrajectory> {
        let lay = &self.layout;
        if input.len() != lay.n {
            return Err(Error::LengthMismatch {
                expected: lay.n,
                got: input.len(),
            });
        }
        if let Some(i) = input.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        if opts.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be at least 1".into()));
        }
        params.validate()?;
        let (z1, z2) = match params.variant {
            Variant::Bp | Variant::Ms => (1.0, 1.0),
            _ => (params.zeta1, params.zeta2),
        };

        let e = lay.edges();
        let mut c2v = vec![0.0; e];
        let mut v2c = vec![0.0; e];
        let mut sums = vec![0.0; lay.n];
        let mut scratch = CheckScratch::default();
        let mut traj = DecodingTrajectory {
            posteriors: Vec::with_capacity(opts.max_iters),
            hard_decisions: Vec::with_capacity(opts.max_iters),
            input: input.to_vec(),
            t_stop: 0,
            converged: false,
            max_iters: opts.max_iters,
        };

        for t in 1..=opts.max_iters {
            for (edge, msg) in v2c.iter_mut().enumerate() {
                let v = lay.edge_var[edge];
                *msg = z1 * input[v] + sums[v] - c2v[edge];
            }
            for c in 0..lay.checks() {
                let r = lay.check_edges(c);
                check_update_into(&v2c[r.clone()], params, opts.bp_clip, &mut c2v[r], &mut scratch);
            }
            lay.var_sums(&c2v, &mut sums);
            let post: Vec<f64> = input.iter().zip(&sums).map(|(&l, &s)| z2 * l + s).collect();
            let hard: Vec<u8> = post.iter().map(|&x| hard_decision(x)).collect();
            let ok = lay.syndrome_ok(&hard);
            traj.posteriors.push(post);
            traj.hard_decisions.push(hard);
            traj.t_stop = t;
            traj.converged = ok;
            if ok && opts.early_stop {
                break;
            }
        }
        Ok(traj)
    }
}

/// One-shot decode with early stopping.
pub fn decode(input: &[f64], code: &CodeSpec, params: &NmsParameters, max_iters: usize) -> Result<DecodingTrajectory> {
    MsaDecoder::new(code).decode(input, params, &DecoderOptions::new(max_iters))
}

/// True when `bits` has zero syndrome under the code's parity checks.
pub fn syndrome_ok(bits: &[u8], code: &CodeSpec) -> Result<bool> {
    code.syndrome_ok(bits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codes::{ccsds_128_64, hamming_7_4};

    fn close(a: &[f64], b: &[f64]) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12)
    }

    #[test]
    fn min_sum_hand_example() {
        let out = check_node_update(&[2.0, -3.0, 4.0], &NmsParameters::ms(), DEFAULT_BP_CLIP).unwrap();
        assert!(close(&out, &[-3.0, 2.0, -2.0]), "{out:?}");
        let out = check_node_update(&[2.0, -3.0, 4.0], &NmsParameters::nms1(0.5), DEFAULT_BP_CLIP).unwrap();
        assert!(close(&out, &[-1.5, 1.0, -1.0]), "{out:?}");
    }

    #[test]
    fn zero_input_zeroes_other_edges() {
        let out = check_node_update(&[0.0, -3.0, 4.0, 1.0], &NmsParameters::ms(), DEFAULT_BP_CLIP).unwrap();
        assert!(out[1] == 0.0 && out[2] == 0.0 && out[3] == 0.0);
        assert_eq!(out[0].abs(), 1.0);
    }

    #[test]
    fn degree_one_check_is_an_error() {
        assert!(check_node_update(&[1.0], &NmsParameters::ms(), DEFAULT_BP_CLIP).is_err());
    }

    #[test]
    fn fcn_min_init_reproduces_min() {
        let code = ccsds_128_64();
        let r = NmsParameters::initial(Variant::NmsR, &code);
        let incoming = [0.3, -1.2, 2.5, -0.1, 0.9, 1.7, -2.2, 0.4];
        let a = check_node_update(&incoming, &r, DEFAULT_BP_CLIP).unwrap();
        let b = check_node_update(&incoming, &NmsParameters::ms(), DEFAULT_BP_CLIP).unwrap();
        assert!(close(&a, &b));
    }

    #[test]
    fn bp_check_matches_tanh_rule() {
        let inc = [1.2, -0.7, 2.5];
        let out = check_node_update(&inc, &NmsParameters::bp(), DEFAULT_BP_CLIP).unwrap();
        let expect0 = 2.0 * ((-0.7f64 / 2.0).tanh() * (2.5f64 / 2.0).tanh()).atanh();
        assert!((out[0] - expect0).abs() < 1e-12);
        let big = check_node_update(&[1e9, 1e9], &NmsParameters::bp(), DEFAULT_BP_CLIP).unwrap();
        assert!(big.iter().all(|x| x.is_finite() && (x - 19.0).abs() < 1e-6));
    }

    #[test]
    fn noiseless_converges_first_iteration() {
        let code = ccsds_128_64();
        let msg: Vec<u8> = (0..64).map(|i| (i * 7 % 3 == 0) as u8).collect();
        let cw = code.encode(&msg).unwrap();
        let y: Vec<f64> = cw.iter().map(|&c| 1.0 - 2.0 * f64::from(c)).collect();
        let t = decode(&y, &code, &NmsParameters::nms1(0.644), 13).unwrap();
        assert!(t.converged);
        assert_eq!(t.t_stop, 1);
        assert_eq!(t.final_hard(), cw.as_slice());
    }

    #[test]
    fn rejects_bad_input() {
        let code = hamming_7_4();
        let p = NmsParameters::ms();
        assert!(matches!(decode(&[1.0; 6], &code, &p, 5), Err(Error::LengthMismatch { .. })));
        let mut y = [1.0; 7];
        y[3] = f64::NAN;
        assert!(matches!(decode(&y, &code, &p, 5), Err(Error::NonFinite(3))));
    }

    #[test]
    fn syndrome_checks() {
        let code = hamming_7_4();
        let cw = code.encode(&[1, 0, 1, 1]).unwrap();
        assert!(syndrome_ok(&cw, &code).unwrap());
        for i in 0..7 {
            let mut bad = cw.clone();
            bad[i] ^= 1;
            assert!(!syndrome_ok(&bad, &code).unwrap());
        }
        assert!(syndrome_ok(&cw[..6], &code).is_err());
    }

    #[test]
    fn parameter_invariants() {
        assert!(NmsParameters::nms1(0.7).validate().is_ok());
        let mut p = NmsParameters::nms1(0.7);
        p.zeta1 = 0.9;
        assert!(p.validate().is_err());
        let mut p = NmsParameters::nms2(0.9, 0.7);
        p.zeta2 = 1.0;
        assert!(p.validate().is_err());
        let mut p = NmsParameters::nms_r(1.0, 1.0, Fcn::min_init(3, 4, 1));
        p.fcn = None;
        assert!(p.validate().is_err());
    }

    #[test]
    fn params_json_round_trip() {
        let p = NmsParameters::nms_r(0.9, 1.1, Fcn::min_init(7, 4, 3));
        let back = NmsParameters::from_json(&p.to_json().unwrap()).unwrap();
        assert_eq!(p, back);
        let json = NmsParameters::nms1(0.644).to_json().unwrap();
        assert!(json.contains("\"nms-1\"") && !json.contains("fcn"));
    }

    #[test]
    fn variant_names_parse() {
        for v in [Variant::Bp, Variant::Ms, Variant::Nms1, Variant::Nms2, Variant::Nms3, Variant::NmsR] {
            assert_eq!(v.as_str().parse::<Variant>().unwrap(), v);
        }
        assert!("nms-9".parse::<Variant>().is_err());
    }
}

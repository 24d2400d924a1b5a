//! Ordered statistics post-processing on the parity-check matrix.
//!
//! Bits are sorted by ascending reliability, the column-permuted check matrix
//! is reduced to `[I | P]`, and the first `m` (least reliable) positions are
//! re-derived from the remaining `k` via the parity constraints for each test
//! error pattern. MRB-local index 0 is the least reliable MRB position.
//!
//! Test error patterns are grouped into order patterns; a decoding path is a
//! priority-ordered list of order patterns. Two grouping schemes exist: a
//! uniform one (fixed-size chunks of a weight/index-sum ordering) and a
//! dynamic one (per-interval weight triples whose intervals widen with the
//! number of GE column swaps).

use std::collections::{BTreeMap, HashSet};
use std::ops::{ControlFlow, Range};
use std::path::Path;
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::hard_decision;
use crate::error::{Error, Result};
use crate::gf2::{gaussian_eliminate_with, pack_bits, BitMatrix, CodeSpec, GeResult, PivotPolicy};

/// Where candidate scoring takes its hard decisions and weights.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreSource {
    /// Sign and magnitude of the channel output.
    #[default]
    Channel,
    /// Sign and magnitude of the (possibly refined) sorting reliabilities.
    Reliability,
}

/// Per-frame OSD state.
#[derive(Debug, Clone)]
pub struct OsdWorkspace {
    pub n: usize,
    pub k: usize,
    pub m: usize,
    /// Original indices sorted by ascending `|reliability|` (stable).
    pub perm: Vec<usize>,
    pub ge: GeResult,
    /// Original index at each post-GE position: `order[0..m]` is the LRB,
    /// `order[m..n]` the MRB.
    pub order: Vec<usize>,
    pub lrb_indices: Vec<usize>,
    pub mrb_indices: Vec<usize>,
    /// Hard decisions of the reliabilities at the MRB positions.
    pub mrb_hard: Vec<u8>,
    /// Hard decision of the scoring input, original coordinates.
    pub base_hard: Vec<u8>,
    /// Scoring weights, original coordinates.
    pub weights: Vec<f64>,
    words: usize,
    /// Column `j` of `P` packed over the `m` rows, `words` words each.
    p_cols: Vec<u64>,
    /// `P * mrb_hard`.
    lrb0: Vec<u64>,
    lrb_base: Vec<u64>,
    lrb_weights: Vec<f64>,
    /// Score change from flipping each MRB bit.
    mrb_delta: Vec<f64>,
    mrb_score0: f64,
}

pub fn build_workspace(reliabilities: &[f64], original_y: &[f64], code: &CodeSpec) -> Result<OsdWorkspace> {
    build_workspace_with(reliabilities, original_y, code, PivotPolicy::default(), ScoreSource::Channel)
}

pub fn build_workspace_with(
    reliabilities: &[f64],
    original_y: &[f64],
    code: &CodeSpec,
    policy: PivotPolicy,
    source: ScoreSource,
) -> Result<OsdWorkspace> {
    let (n, m, k) = (code.n, code.m, code.k);
    for v in [reliabilities, original_y] {
        if v.len() != n {
            return Err(Error::LengthMismatch { expected: n, got: v.len() });
        }
        if let Some(i) = v.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(i));
        }
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.sort_by(|&a, &b| reliabilities[a].abs().total_cmp(&reliabilities[b].abs()).then(a.cmp(&b)));
    let ge = gaussian_eliminate_with(&code.check_basis.permute_cols(&perm), policy)?;
    let mut order = perm.clone();
    ge.apply_swaps(&mut order);

    let scoring = match source {
        ScoreSource::Channel => original_y,
        ScoreSource::Reliability => reliabilities,
    };
    let base_hard: Vec<u8> = scoring.iter().map(|&x| hard_decision(x)).collect();
    let weights: Vec<f64> = scoring.iter().map(|x| x.abs()).collect();
    let mrb_indices = order[m..].to_vec();
    let lrb_indices = order[..m].to_vec();
    let mrb_hard: Vec<u8> = mrb_indices.iter().map(|&i| hard_decision(reliabilities[i])).collect();

    let words = m.div_ceil(64);
    let mut p_cols = vec![0u64; k * words];
    for r in 0..m {
        for j in 0..k {
            if ge.systematic.get(r, m + j) {
                p_cols[j * words + r / 64] |= 1 << (r % 64);
            }
        }
    }
    let mut lrb0 = vec![0u64; words];
    for (j, &b) in mrb_hard.iter().enumerate() {
        if b == 1 {
            xor_into(&mut lrb0, &p_cols[j * words..(j + 1) * words]);
        }
    }
    let lrb_base = pack_bits(&lrb_indices.iter().map(|&i| base_hard[i]).collect::<Vec<_>>());
    let lrb_weights = lrb_indices.iter().map(|&i| weights[i]).collect();
    let mut mrb_score0 = 0.0;
    let mrb_delta = mrb_indices
        .iter()
        .zip(&mrb_hard)
        .map(|(&i, &b)| {
            if b == base_hard[i] {
                weights[i]
            } else {
                mrb_score0 += weights[i];
                -weights[i]
            }
        })
        .collect();

    Ok(OsdWorkspace {
        n,
        k,
        m,
        perm,
        ge,
        order,
        lrb_indices,
        mrb_indices,
        mrb_hard,
        base_hard,
        weights,
        words,
        p_cols,
        lrb0,
        lrb_base,
        lrb_weights,
        mrb_delta,
        mrb_score0,
    })
}

#[inline]
fn xor_into(dst: &mut [u64], src: &[u64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d ^= s;
    }
}

impl OsdWorkspace {
    pub fn rho_s(&self) -> usize {
        self.ge.rho_s
    }

    fn lrb_word(&self, flips: &[usize], out: &mut Vec<u64>) {
        out.clear();
        out.extend_from_slice(&self.lrb0);
        for &j in flips {
            xor_into(out, &self.p_cols[j * self.words..(j + 1) * self.words]);
        }
    }

    /// Score of the candidate for `flips` without materialising it.
    fn fast_score(&self, flips: &[usize], scratch: &mut Vec<u64>) -> f64 {
        self.lrb_word(flips, scratch);
        let mut s = self.mrb_score0 + flips.iter().map(|&j| self.mrb_delta[j]).sum::<f64>();
        for (w, (word, base)) in scratch.iter().zip(&self.lrb_base).enumerate() {
            let mut diff = word ^ base;
            while diff != 0 {
                s += self.lrb_weights[w * 64 + diff.trailing_zeros() as usize];
                diff &= diff - 1;
            }
        }
        s
    }

    fn candidate_from_flips(&self, flips: &[usize]) -> Vec<u8> {
        let mut lrb = Vec::new();
        self.lrb_word(flips, &mut lrb);
        let mut cand = vec![0u8; self.n];
        for (r, &orig) in self.lrb_indices.iter().enumerate() {
            cand[orig] = ((lrb[r / 64] >> (r % 64)) & 1) as u8;
        }
        for (j, &orig) in self.mrb_indices.iter().enumerate() {
            cand[orig] = self.mrb_hard[j];
        }
        for &j in flips {
            cand[self.mrb_indices[j]] ^= 1;
        }
        cand
    }

    /// MRB-local positions where the MRB hard decision disagrees with `truth`.
    pub fn authentic_error_pattern(&self, truth: &[u8]) -> Vec<usize> {
        self.mrb_indices
            .iter()
            .zip(&self.mrb_hard)
            .enumerate()
            .filter(|(_, (&i, &b))| truth[i] != b)
            .map(|(j, _)| j)
            .collect()
    }
}

/// A set of MRB-local flip positions.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Tep {
    pub flips: Vec<usize>,
}

impl Tep {
    pub fn zero() -> Self {
        Self { flips: Vec::new() }
    }

    /// Validates strictly increasing flips below `k`.
    pub fn new(flips: Vec<usize>, k: usize) -> Result<Self> {
        if flips.windows(2).any(|w| w[0] >= w[1]) || flips.last().is_some_and(|&l| l >= k) {
            return Err(Error::InvalidArgument(format!("bad TEP {flips:?} for k = {k}")));
        }
        Ok(Self { flips })
    }

    pub fn weight(&self) -> usize {
        self.flips.len()
    }
}

/// Re-encodes the MRB hard decision flipped by `tep` into a full codeword in
/// original coordinates.
pub fn complete_candidate(ws: &OsdWorkspace, tep: &Tep) -> Vec<u8> {
    ws.candidate_from_flips(&tep.flips)
}

/// Weighted disagreement between `candidate` and the workspace's hard decision.
pub fn score(ws: &OsdWorkspace, candidate: &[u8]) -> f64 {
    candidate
        .iter()
        .zip(&ws.base_hard)
        .zip(&ws.weights)
        .filter(|((c, b), _)| c != b)
        .map(|(_, w)| w)
        .sum()
}

/// `sum_{i <= p} C(k, i)`: the size of a conventional order-`p` search.
pub fn conventional_tep_count(k: usize, p: usize) -> u128 {
    let mut total = 0u128;
    let mut c = 1u128;
    for i in 0..=p.min(k) {
        total += c;
        c = c * (k - i) as u128 / (i + 1) as u128;
    }
    total
}

// ---------------------------------------------------------------------------
// Fixed-size subset arithmetic

fn min_sum(w: usize, lo: usize) -> usize {
    w * lo + w * w.saturating_sub(1) / 2
}

fn max_sum(w: usize, k: usize) -> usize {
    if w == 0 {
        0
    } else {
        w * (k - 1) - w * (w - 1) / 2
    }
}

/// Whether some `w`-subset of `[lo, k)` sums to `s`. Subset sums of an
/// interval are contiguous, so the range test is exact.
fn feasible(w: usize, s: usize, lo: usize, k: usize) -> bool {
    if w == 0 {
        return s == 0;
    }
    lo + w <= k && s >= min_sum(w, lo) && s <= max_sum(w, k)
}

/// Lexicographically first `out.len()`-subset of `[lo, k)` summing to `s`.
fn fill_first(out: &mut [usize], mut s: usize, mut lo: usize, k: usize) {
    let w = out.len();
    for i in 0..w {
        let rest = w - i - 1;
        let v = lo.max(s.saturating_sub(max_sum(rest, k)));
        debug_assert!(feasible(rest, s - v, v + 1, k));
        out[i] = v;
        s -= v;
        lo = v + 1;
    }
}

/// Advances to the next lexicographic subset with the same size and sum.
fn next_same_sum(f: &mut [usize], k: usize) -> bool {
    let w = f.len();
    if w < 2 {
        return false;
    }
    let mut suffix = f[w - 1];
    for i in (0..w - 1).rev() {
        suffix += f[i];
        let rest = w - i - 1;
        let mut v = f[i] + 1;
        while v < k && v <= suffix {
            let rs = suffix - v;
            if rs < min_sum(rest, v + 1) {
                break;
            }
            if feasible(rest, rs, v + 1, k) {
                f[i] = v;
                fill_first(&mut f[i + 1..], rs, v + 1, k);
                return true;
            }
            v += 1;
        }
    }
    false
}

/// Counts `w`-subsets of `[lo, k)` with sum `s`.
#[derive(Debug, Clone)]
enum SubsetCounter {
    Table { k: usize, smax: usize, data: Vec<u64> },
    Direct { k: usize },
}

const COUNT_TABLE_LIMIT: usize = 1 << 22;

impl SubsetCounter {
    fn new(k: usize, p: usize) -> Self {
        let smax = max_sum(p, k);
        let size = (p + 1) * (k + 1) * (smax + 1);
        if size > COUNT_TABLE_LIMIT {
            return Self::Direct { k };
        }
        let idx = |w: usize, lo: usize, s: usize| (w * (k + 1) + lo) * (smax + 1) + s;
        let mut data = vec![0u64; size];
        data[idx(0, k, 0)] = 1;
        for lo in (0..k).rev() {
            for w in 0..=p {
                for s in 0..=smax {
                    let mut c = data[idx(w, lo + 1, s)];
                    if w > 0 && s >= lo {
                        c = c.saturating_add(data[idx(w - 1, lo + 1, s - lo)]);
                    }
                    data[idx(w, lo, s)] = c;
                }
            }
        }
        Self::Table { k, smax, data }
    }

    fn count(&self, w: usize, s: usize, lo: usize) -> u64 {
        match self {
            Self::Table { k, smax, data } => {
                if s > *smax || lo > *k {
                    0
                } else {
                    data[(w * (k + 1) + lo) * (smax + 1) + s]
                }
            }
            Self::Direct { k } => direct_count(w, s, lo, *k),
        }
    }
}

fn direct_count(w: usize, s: usize, lo: usize, k: usize) -> u64 {
    if !feasible(w, s, lo, k) {
        return 0;
    }
    match w {
        0 | 1 => 1,
        2 => {
            // a in [max(lo, s-(k-1)), (s-1)/2]
            let a_lo = lo.max((s + 1).saturating_sub(k));
            let a_hi = (s - 1) / 2;
            if a_hi >= a_lo {
                (a_hi - a_lo + 1) as u64
            } else {
                0
            }
        }
        _ => {
            let mut total = 0u64;
            let mut a = lo;
            while a < k && min_sum(w, a) <= s {
                total = total.saturating_add(direct_count(w - 1, s - a, a + 1, k));
                a += 1;
            }
            total
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Class {
    weight: usize,
    sum: usize,
    start: u64,
}

/// Default cap on the number of TEPs a uniform scheme may index.
pub const DEFAULT_TEP_CAP: u64 = 1 << 40;

/// The uniform grouping: all TEPs of weight `<= p`, ordered by weight, then
/// index sum, then lexicographically, with the zero TEP alone in pattern 0
/// and every later pattern holding `w_b` consecutive TEPs (the last may be
/// short). Patterns are generated on demand; nothing is materialised.
#[derive(Debug, Clone)]
pub struct UniformScheme {
    pub k: usize,
    pub p: usize,
    pub w_b: usize,
    total: u64,
    classes: Vec<Class>,
    counter: SubsetCounter,
}

/// Builds the uniform scheme for `k` MRB bits, order `p` and block size `w_b`.
pub fn uniform_patterns(k: usize, p: usize, w_b: usize) -> Result<UniformScheme> {
    UniformScheme::with_cap(k, p, w_b, DEFAULT_TEP_CAP)
}

impl UniformScheme {
    pub fn with_cap(k: usize, p: usize, w_b: usize, cap: u64) -> Result<Self> {
        if w_b == 0 {
            return Err(Error::InvalidArgument("w_b must be at least 1".into()));
        }
        if k == 0 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        let p = p.min(k);
        let count = conventional_tep_count(k, p);
        if count > u128::from(cap) {
            return Err(Error::InvalidArgument(format!(
                "{count} TEPs for k = {k}, p = {p} exceed the cap of {cap}"
            )));
        }
        let counter = SubsetCounter::new(k, p);
        let mut classes = vec![Class { weight: 0, sum: 0, start: 0 }];
        let mut start = 1u64;
        for w in 1..=p {
            for s in min_sum(w, 0)..=max_sum(w, k) {
                classes.push(Class { weight: w, sum: s, start });
                start += counter.count(w, s, 0);
            }
        }
        debug_assert_eq!(u128::from(start), count);
        Ok(Self {
            k,
            p,
            w_b,
            total: start,
            classes,
            counter,
        })
    }

    pub fn total_teps(&self) -> u64 {
        self.total
    }

    pub fn pattern_count(&self) -> u64 {
        1 + (self.total - 1).div_ceil(self.w_b as u64)
    }

    /// Ordinal range of the TEPs in pattern `index`.
    pub fn pattern_range(&self, index: u64) -> Range<u64> {
        if index == 0 {
            return 0..1;
        }
        let start = 1 + (index - 1) * self.w_b as u64;
        start.min(self.total)..(start + self.w_b as u64).min(self.total)
    }

    /// Ordinal of a TEP in the global ordering, if its weight is within `p`.
    pub fn rank(&self, flips: &[usize]) -> Option<u64> {
        let w = flips.len();
        if w > self.p || flips.iter().any(|&f| f >= self.k) || flips.windows(2).any(|x| x[0] >= x[1]) {
            return None;
        }
        if w == 0 {
            return Some(0);
        }
        let s: usize = flips.iter().sum();
        let class = self.classes.iter().find(|c| c.weight == w && c.sum == s)?;
        let mut r = class.start;
        let (mut lo, mut rem) = (0, s);
        for (pos, &f) in flips.iter().enumerate() {
            let rest = w - pos - 1;
            for a in lo..f {
                if a > rem {
                    break;
                }
                r += self.counter.count(rest, rem - a, a + 1);
            }
            rem -= f;
            lo = f + 1;
        }
        Some(r)
    }

    /// The TEP at a global ordinal.
    pub fn unrank(&self, ordinal: u64) -> Vec<usize> {
        assert!(ordinal < self.total, "ordinal {ordinal} out of range");
        let ci = self.classes.partition_point(|c| c.start <= ordinal) - 1;
        let class = self.classes[ci];
        let mut r = ordinal - class.start;
        let w = class.weight;
        let mut out = Vec::with_capacity(w);
        let (mut lo, mut rem) = (0, class.sum);
        for pos in 0..w {
            let rest = w - pos - 1;
            let mut a = lo;
            loop {
                let c = if a <= rem { self.counter.count(rest, rem - a, a + 1) } else { 0 };
                if r < c {
                    break;
                }
                r -= c;
                a += 1;
            }
            out.push(a);
            rem -= a;
            lo = a + 1;
        }
        out
    }

    /// Pattern index holding `flips`, or `None` beyond order `p`.
    pub fn pattern_of(&self, flips: &[usize]) -> Option<u64> {
        self.rank(flips).map(|r| if r == 0 { 0 } else { 1 + (r - 1) / self.w_b as u64 })
    }

    /// Streams the TEPs of pattern `index` in order.
    pub fn for_each_tep(&self, index: u64, mut f: impl FnMut(&[usize]) -> ControlFlow<()>) -> ControlFlow<()> {
        let range = self.pattern_range(index);
        if range.is_empty() {
            return ControlFlow::Continue(());
        }
        let mut cur = self.unrank(range.start);
        let mut ci = self.classes.partition_point(|c| c.start <= range.start) - 1;
        for ordinal in range.clone() {
            f(&cur)?;
            if ordinal + 1 == range.end {
                break;
            }
            if !next_same_sum(&mut cur, self.k) {
                ci += 1;
                let c = self.classes[ci];
                cur.resize(c.weight, 0);
                fill_first(&mut cur, c.sum, 0, self.k);
            }
        }
        ControlFlow::Continue(())
    }

    /// All TEPs of a pattern, materialised.
    pub fn pattern_teps(&self, index: u64) -> Vec<Tep> {
        let mut out = Vec::new();
        let _ = self.for_each_tep(index, |f| {
            out.push(Tep { flips: f.to_vec() });
            ControlFlow::Continue(())
        });
        out
    }
}

// ---------------------------------------------------------------------------
// Dynamic scheme

/// Right end of the third interval for a given third-interval weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct D3Entry {
    pub xi3: usize,
    pub d3: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DynamicConfig {
    /// Per-interval weight caps.
    pub xi_max: [usize; 3],
    /// Overall weight cap.
    pub p: usize,
    /// Base width of the first interval.
    pub d0: usize,
    /// Third-interval end per weight; weights not listed extend to `k`.
    #[serde(default)]
    pub d3_rule: Vec<D3Entry>,
}

impl DynamicConfig {
    /// Settings for the CCSDS (128,64) code.
    pub fn ccsds_128_64() -> Self {
        Self {
            xi_max: [2, 1, 1],
            p: 3,
            d0: 12,
            d3_rule: (0..=3).map(|xi3| D3Entry { xi3, d3: 24 }).collect(),
        }
    }

    /// The overall cap `p` bounds each pattern's total weight; the
    /// per-interval caps may sum beyond it.
    pub fn validate(&self) -> Result<()> {
        if self.p == 0 || self.xi_max.iter().all(|&x| x == 0) {
            return Err(Error::Config(format!(
                "weight caps {:?} with p = {} admit only the zero pattern",
                self.xi_max, self.p
            )));
        }
        Ok(())
    }

    fn d3(&self, xi3: usize, k: usize) -> usize {
        self.d3_rule
            .iter()
            .find(|e| e.xi3 == xi3)
            .map_or(k, |e| e.d3.min(k))
    }

    /// The three index intervals for a frame with `rho_s` swaps and the
    /// given third-interval weight.
    pub fn intervals(&self, rho_s: usize, k: usize, xi3: usize) -> [Range<usize>; 3] {
        let d1 = (self.d0 + rho_s.min(5)).min(k);
        let d2 = (d1 + (2 * rho_s).min(10)).min(k);
        let d3 = self.d3(xi3, k).max(d2);
        [0..d1, d1..d2, d2..d3]
    }

    /// Weight triple of an authentic error pattern, or `None` when it lies
    /// beyond the third interval or exceeds `p`.
    pub fn categorize(&self, flips: &[usize], rho_s: usize, k: usize) -> Option<[usize; 3]> {
        if flips.len() > self.p {
            return None;
        }
        let [a, b, _] = self.intervals(rho_s, k, 0);
        let mut xi = [0usize; 3];
        for &f in flips {
            let slot = if a.contains(&f) {
                0
            } else if b.contains(&f) {
                1
            } else {
                2
            };
            xi[slot] += 1;
        }
        let third = &self.intervals(rho_s, k, xi[2])[2];
        flips.iter().filter(|&&f| f >= third.start).all(|f| third.contains(f)).then_some(xi)
    }

    /// Whether a triple is admissible under the caps and has room in its
    /// intervals for this frame.
    pub fn qualifies(&self, xi: [usize; 3], rho_s: usize, k: usize) -> bool {
        let iv = self.intervals(rho_s, k, xi[2]);
        xi.iter().sum::<usize>() <= self.p
            && (0..3).all(|j| xi[j] <= self.xi_max[j] && xi[j] <= iv[j].len())
    }
}

/// All admissible triples for a frame, in natural order: total weight, then
/// weight concentrated towards the first interval.
pub fn dynamic_patterns(rho_s: usize, k: usize, cfg: &DynamicConfig) -> Vec<[usize; 3]> {
    let mut out = Vec::new();
    for a in 0..=cfg.xi_max[0] {
        for b in 0..=cfg.xi_max[1] {
            for c in 0..=cfg.xi_max[2] {
                if cfg.qualifies([a, b, c], rho_s, k) {
                    out.push([a, b, c]);
                }
            }
        }
    }
    out.sort_by_key(|xi| (xi.iter().sum::<usize>(), std::cmp::Reverse(xi[0]), std::cmp::Reverse(xi[1])));
    out
}

/// Calls `f` for every `r`-subset of `range` in lexicographic order,
/// appended to `prefix`.
fn for_each_combination(
    range: Range<usize>,
    r: usize,
    prefix: &mut Vec<usize>,
    f: &mut dyn FnMut(&mut Vec<usize>) -> ControlFlow<()>,
) -> ControlFlow<()> {
    if r == 0 {
        return f(prefix);
    }
    let end = range.end;
    for v in range.start..end.saturating_sub(r - 1) {
        prefix.push(v);
        let res = for_each_combination(v + 1..end, r - 1, prefix, f);
        prefix.pop();
        res?;
    }
    ControlFlow::Continue(())
}

/// Streams the TEPs of a dynamic pattern.
pub fn for_each_dynamic_tep(
    xi: [usize; 3],
    rho_s: usize,
    k: usize,
    cfg: &DynamicConfig,
    mut f: impl FnMut(&[usize]) -> ControlFlow<()>,
) -> ControlFlow<()> {
    let iv = cfg.intervals(rho_s, k, xi[2]);
    let mut buf = Vec::with_capacity(xi.iter().sum());
    for_each_combination(iv[0].clone(), xi[0], &mut buf, &mut |b1| {
        for_each_combination(iv[1].clone(), xi[1], b1, &mut |b2| {
            for_each_combination(iv[2].clone(), xi[2], b2, &mut |b3| f(b3))
        })
    })
}

// ---------------------------------------------------------------------------
// Decoding paths

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OrderPattern {
    /// Index into the uniform scheme's chunking.
    Uniform(u64),
    /// Per-interval weights.
    Dynamic([usize; 3]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PathScheme {
    Uniform { p: usize, w_b: usize },
    Dynamic(DynamicConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathEntry {
    pub pattern: OrderPattern,
    pub hits: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhoPath {
    pub rho_s: usize,
    pub samples: u64,
    pub patterns: Vec<PathEntry>,
}

pub const PATH_FORMAT_VERSION: u32 = 1;

/// Priority-ordered order patterns plus calibration provenance. Patterns not
/// listed follow the listed ones in natural order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecodingPath {
    pub version: u32,
    pub code: String,
    pub k: usize,
    pub scheme: PathScheme,
    pub snr_db: Option<f64>,
    pub samples: u64,
    /// Failures whose authentic pattern no order pattern covers.
    #[serde(default)]
    pub uncovered: u64,
    pub patterns: Vec<PathEntry>,
    /// Dynamic scheme only: per-swap-count priorities.
    #[serde(default)]
    pub by_rho: Vec<RhoPath>,
    #[serde(skip)]
    uniform: OnceLock<UniformScheme>,
}

impl PartialEq for DecodingPath {
    fn eq(&self, o: &Self) -> bool {
        self.version == o.version
            && self.code == o.code
            && self.k == o.k
            && self.scheme == o.scheme
            && self.snr_db == o.snr_db
            && self.samples == o.samples
            && self.uncovered == o.uncovered
            && self.patterns == o.patterns
            && self.by_rho == o.by_rho
    }
}

impl DecodingPath {
    fn bare(code: &str, k: usize, scheme: PathScheme) -> Self {
        Self {
            version: PATH_FORMAT_VERSION,
            code: code.to_string(),
            k,
            scheme,
            snr_db: None,
            samples: 0,
            uncovered: 0,
            patterns: Vec::new(),
            by_rho: Vec::new(),
            uniform: OnceLock::new(),
        }
    }

    /// Uncalibrated uniform path: patterns in natural order.
    pub fn uniform(code: &str, k: usize, p: usize, w_b: usize) -> Result<Self> {
        let path = Self::bare(code, k, PathScheme::Uniform { p, w_b });
        path.uniform_scheme()?;
        Ok(path)
    }

    /// Uncalibrated dynamic path: admissible triples in natural order.
    pub fn dynamic(code: &str, k: usize, cfg: DynamicConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self::bare(code, k, PathScheme::Dynamic(cfg)))
    }

    /// The uniform scheme backing this path, built on first use.
    pub fn uniform_scheme(&self) -> Result<&UniformScheme> {
        let PathScheme::Uniform { p, w_b } = self.scheme else {
            return Err(Error::InvalidArgument("not a uniform path".into()));
        };
        if let Some(s) = self.uniform.get() {
            return Ok(s);
        }
        let s = uniform_patterns(self.k, p, w_b)?;
        Ok(self.uniform.get_or_init(|| s))
    }

    /// The ranked list for a frame with `rho_s` swaps.
    pub fn ranked(&self, rho_s: usize) -> &[PathEntry] {
        self.by_rho
            .iter()
            .find(|r| r.rho_s == rho_s)
            .map_or(self.patterns.as_slice(), |r| r.patterns.as_slice())
    }

    /// Visits up to `budget` patterns for this frame in priority order,
    /// skipping patterns that do not qualify.
    pub fn for_each_pattern(&self, rho_s: usize, budget: usize, mut f: impl FnMut(&OrderPattern) -> ControlFlow<()>) -> Result<()> {
        let mut visited = 0usize;
        let mut seen = HashSet::new();
        let mut visit = |p: &OrderPattern, visited: &mut usize| -> ControlFlow<()> {
            if *visited >= budget {
                return ControlFlow::Break(());
            }
            *visited += 1;
            f(p)
        };
        match &self.scheme {
            PathScheme::Uniform { .. } => {
                let scheme = self.uniform_scheme()?;
                for e in self.ranked(rho_s) {
                    if let OrderPattern::Uniform(i) = e.pattern {
                        if i < scheme.pattern_count() && seen.insert(e.pattern.clone()) && visit(&e.pattern, &mut visited).is_break() {
                            return Ok(());
                        }
                    }
                }
                for i in 0..scheme.pattern_count() {
                    let p = OrderPattern::Uniform(i);
                    if !seen.contains(&p) && visit(&p, &mut visited).is_break() {
                        return Ok(());
                    }
                }
            }
            PathScheme::Dynamic(cfg) => {
                for e in self.ranked(rho_s) {
                    if let OrderPattern::Dynamic(xi) = e.pattern {
                        if cfg.qualifies(xi, rho_s, self.k) && seen.insert(e.pattern.clone()) && visit(&e.pattern, &mut visited).is_break() {
                            return Ok(());
                        }
                    }
                }
                for xi in dynamic_patterns(rho_s, self.k, cfg) {
                    let p = OrderPattern::Dynamic(xi);
                    if !seen.contains(&p) && visit(&p, &mut visited).is_break() {
                        return Ok(());
                    }
                }
            }
        }
        Ok(())
    }

    /// Streams the TEPs of one pattern for a frame with `rho_s` swaps.
    pub fn for_each_tep(&self, pattern: &OrderPattern, rho_s: usize, f: impl FnMut(&[usize]) -> ControlFlow<()>) -> Result<ControlFlow<()>> {
        Ok(match (&self.scheme, pattern) {
            (PathScheme::Uniform { .. }, OrderPattern::Uniform(i)) => self.uniform_scheme()?.for_each_tep(*i, f),
            (PathScheme::Dynamic(cfg), OrderPattern::Dynamic(xi)) => for_each_dynamic_tep(*xi, rho_s, self.k, cfg, f),
            _ => return Err(Error::InvalidArgument(format!("pattern {pattern:?} does not match the path scheme"))),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let path: Self = serde_json::from_str(text)?;
        if path.version != PATH_FORMAT_VERSION {
            return Err(Error::Config(format!("unsupported path format version {}", path.version)));
        }
        if let PathScheme::Dynamic(cfg) = &path.scheme {
            cfg.validate()?;
        }
        Ok(path)
    }

    pub fn save(&self, file: &Path) -> Result<()> {
        std::fs::write(file, self.to_json()?)?;
        Ok(())
    }

    pub fn load(file: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(file)?)
    }
}

/// One decoding failure used for calibration.
#[derive(Debug, Clone)]
pub struct CalibrationSample<'a> {
    /// Sorting reliabilities (raw `y` or a refined estimate).
    pub reliabilities: &'a [f64],
    pub y: &'a [f64],
    pub truth: &'a [u8],
}

/// Order pattern covering a frame's authentic error pattern, with its swap count.
pub fn classify(ws: &OsdWorkspace, truth: &[u8], path: &DecodingPath) -> Result<Option<OrderPattern>> {
    let aep = ws.authentic_error_pattern(truth);
    Ok(match &path.scheme {
        PathScheme::Uniform { .. } => path.uniform_scheme()?.pattern_of(&aep).map(OrderPattern::Uniform),
        PathScheme::Dynamic(cfg) => cfg.categorize(&aep, ws.rho_s(), ws.k).map(OrderPattern::Dynamic),
    })
}

fn rank_counts(counts: BTreeMap<OrderPattern, u64>) -> Vec<PathEntry> {
    let mut v: Vec<PathEntry> = counts.into_iter().map(|(pattern, hits)| PathEntry { pattern, hits }).collect();
    // Stable sort keeps the BTreeMap's lexicographic order among ties.
    v.sort_by(|a, b| b.hits.cmp(&a.hits));
    v
}

/// Ranks order patterns by how many failures' authentic error patterns they
/// cover. The dynamic scheme additionally keeps one ranking per swap count.
pub fn calibrate_priorities(
    samples: &[CalibrationSample<'_>],
    code: &CodeSpec,
    template: &DecodingPath,
    snr_db: Option<f64>,
) -> Result<DecodingPath> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("calibration needs at least one failure".into()));
    }
    if template.k != code.k {
        return Err(Error::LengthMismatch { expected: code.k, got: template.k });
    }
    let classified: Vec<(usize, Option<OrderPattern>)> = samples
        .par_iter()
        .map(|s| {
            if s.truth.len() != code.n {
                return Err(Error::LengthMismatch { expected: code.n, got: s.truth.len() });
            }
            let ws = build_workspace(s.reliabilities, s.y, code)?;
            Ok((ws.rho_s(), classify(&ws, s.truth, template)?))
        })
        .collect::<Result<_>>()?;

    let mut pooled = BTreeMap::new();
    let mut per_rho: BTreeMap<usize, (u64, BTreeMap<OrderPattern, u64>)> = BTreeMap::new();
    let mut uncovered = 0;
    for (rho, pat) in classified {
        let bucket = per_rho.entry(rho).or_default();
        bucket.0 += 1;
        match pat {
            Some(p) => {
                *pooled.entry(p.clone()).or_insert(0) += 1;
                *bucket.1.entry(p).or_insert(0) += 1;
            }
            None => uncovered += 1,
        }
    }
    let mut out = template.clone();
    out.snr_db = snr_db;
    out.samples = samples.len() as u64;
    out.uncovered = uncovered;
    out.patterns = rank_counts(pooled);
    out.by_rho = match template.scheme {
        PathScheme::Dynamic(_) => per_rho
            .into_iter()
            .map(|(rho_s, (samples, counts))| RhoPath {
                rho_s,
                samples,
                patterns: rank_counts(counts),
            })
            .collect(),
        PathScheme::Uniform { .. } => Vec::new(),
    };
    Ok(out)
}

/// Progress reported to the early-stop hook after each order pattern.
#[derive(Debug, Clone, Copy)]
pub struct HookState<'a> {
    pub patterns_visited: usize,
    pub tep_count: u64,
    pub best_score: f64,
    pub best_flips: &'a [usize],
}

/// Optional early-stop predicate; returning `true` ends the search.
pub type StopHook<'a> = &'a (dyn Fn(&HookState<'_>) -> bool + Sync);

#[derive(Debug, Clone, PartialEq)]
pub struct OsdOutcome {
    pub candidate: Vec<u8>,
    pub score: f64,
    pub tep_count: u64,
    pub patterns_visited: usize,
    pub best_tep: Tep,
    /// Column swaps of the frame's Gaussian elimination.
    pub rho_s: usize,
}

/// Searches up to `budget` order patterns of `path` and returns the
/// lowest-scoring candidate (earliest on ties).
pub fn osd_decode(ws: &OsdWorkspace, path: &DecodingPath, budget: usize, hook: Option<StopHook<'_>>) -> Result<OsdOutcome> {
    if path.k != ws.k {
        return Err(Error::LengthMismatch { expected: ws.k, got: path.k });
    }
    let mut best = (f64::INFINITY, Vec::new());
    let mut tep_count = 0u64;
    let mut visited = 0usize;
    let mut scratch = Vec::with_capacity(ws.words);
    let rho = ws.rho_s();
    let mut inner_err = None;
    path.for_each_pattern(rho, budget.max(1), |pattern| {
        let r = path.for_each_tep(pattern, rho, |flips| {
            tep_count += 1;
            let s = ws.fast_score(flips, &mut scratch);
            if s < best.0 {
                best.0 = s;
                best.1.clear();
                best.1.extend_from_slice(flips);
            }
            ControlFlow::Continue(())
        });
        if let Err(e) = r {
            inner_err = Some(e);
            return ControlFlow::Break(());
        }
        visited += 1;
        match hook {
            Some(h) if h(&HookState {
                patterns_visited: visited,
                tep_count,
                best_score: best.0,
                best_flips: &best.1,
            }) => ControlFlow::Break(()),
            _ => ControlFlow::Continue(()),
        }
    })?;
    if let Some(e) = inner_err {
        return Err(e);
    }
    if tep_count == 0 {
        return Err(Error::InvalidArgument("decoding path produced no TEPs".into()));
    }
    let candidate = ws.candidate_from_flips(&best.1);
    Ok(OsdOutcome {
        score: score(ws, &candidate),
        candidate,
        tep_count,
        patterns_visited: visited,
        best_tep: Tep { flips: best.1 },
        rho_s: rho,
    })
}

/// Convenience wrapper: build the workspace and decode.
pub fn osd_decode_frame(
    reliabilities: &[f64],
    y: &[f64],
    code: &CodeSpec,
    path: &DecodingPath,
    budget: usize,
) -> Result<(OsdWorkspace, OsdOutcome)> {
    let ws = build_workspace(reliabilities, y, code)?;
    let out = osd_decode(&ws, path, budget, None)?;
    Ok((ws, out))
}

/// Checks a candidate against the systematic matrix of a workspace; used by
/// tests and debugging.
pub fn systematic_syndrome_ok(ws: &OsdWorkspace, candidate: &[u8]) -> bool {
    let permuted: Vec<u8> = ws.order.iter().map(|&i| candidate[i]).collect();
    let sys: &BitMatrix = &ws.ge.systematic;
    sys.mul_bits(&permuted).map(|s| s.iter().all(|&b| b == 0)).unwrap_or(false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{frame_rng, transmit};
    use crate::codes::{ccsds_128_64, hamming_7_4};

    fn binom(n: u64, r: u64) -> u64 {
        (0..r).fold(1u64, |acc, i| acc * (n - i) / (i + 1))
    }

    #[test]
    fn conventional_counts() {
        assert_eq!(conventional_tep_count(64, 3), 43_745);
        assert_eq!(conventional_tep_count(192, 3), 1_179_809);
        assert_eq!(conventional_tep_count(880, 3), 113_579_401);
        assert_eq!(conventional_tep_count(4, 4), 16);
        assert_eq!(conventional_tep_count(64, 3), (0..=3).map(|i| u128::from(binom(64, i))).sum());
    }

    #[test]
    fn uniform_scheme_shape() {
        let s = uniform_patterns(64, 3, 32).unwrap();
        assert_eq!(s.total_teps(), 43_745);
        assert_eq!(s.pattern_count(), 1368);
        assert_eq!(s.pattern_teps(0), vec![Tep::zero()]);
        // Weight-1 TEPs fill exactly patterns 1 and 2.
        let p1 = s.pattern_teps(1);
        let p2 = s.pattern_teps(2);
        assert!(p1.iter().chain(&p2).all(|t| t.weight() == 1));
        assert_eq!(p1.len() + p2.len(), 64);
        assert!(s.pattern_teps(3).iter().all(|t| t.weight() == 2));
        assert!(uniform_patterns(64, 3, 0).is_err());
        assert!(UniformScheme::with_cap(64, 3, 32, 1000).is_err());
    }

    #[test]
    fn uniform_ordering_by_weight_then_sum_then_lex() {
        let s = uniform_patterns(10, 3, 7).unwrap();
        let all: Vec<Vec<usize>> = (0..s.pattern_count())
            .flat_map(|i| s.pattern_teps(i))
            .map(|t| t.flips)
            .collect();
        let mut expected: Vec<Vec<usize>> = (0u32..1 << 10)
            .filter(|m| m.count_ones() <= 3)
            .map(|m| (0..10).filter(|b| m >> b & 1 == 1).collect())
            .collect();
        expected.sort_by_key(|f: &Vec<usize>| (f.len(), f.iter().sum::<usize>(), f.clone()));
        assert_eq!(all, expected);
        for (i, f) in expected.iter().enumerate() {
            assert_eq!(s.rank(f), Some(i as u64));
            assert_eq!(&s.unrank(i as u64), f);
        }
        assert_eq!(s.rank(&[0, 1, 2, 3]), None);
    }

    #[test]
    fn direct_counter_agrees_with_table() {
        let t = SubsetCounter::new(30, 4);
        assert!(matches!(t, SubsetCounter::Table { .. }));
        for w in 0..=4 {
            for s in 0..120 {
                for lo in [0, 3, 17, 29, 30] {
                    assert_eq!(t.count(w, s, lo), direct_count(w, s, lo, 30), "w={w} s={s} lo={lo}");
                }
            }
        }
    }

    #[test]
    fn large_uniform_scheme_is_lazy() {
        let s = uniform_patterns(880, 3, 32).unwrap();
        assert_eq!(s.total_teps(), 113_579_401);
        let last = s.pattern_count() - 1;
        let teps = s.pattern_teps(last);
        assert_eq!(teps.last().unwrap().flips, vec![877, 878, 879]);
        let mid = s.pattern_teps(1_000_000);
        assert_eq!(mid.len(), 32);
        for t in &mid {
            assert_eq!(s.pattern_of(&t.flips), Some(1_000_000));
        }
    }

    #[test]
    fn dynamic_intervals_and_paths() {
        let cfg = DynamicConfig::ccsds_128_64();
        assert_eq!(cfg.intervals(3, 64, 0), [0..15, 15..21, 21..24]);
        assert_eq!(cfg.intervals(0, 64, 0), [0..12, 12..12, 12..24]);
        assert_eq!(cfg.intervals(9, 64, 1), [0..17, 17..27, 27..27]);
        let p0 = dynamic_patterns(0, 64, &cfg);
        assert!(p0.iter().all(|xi| xi[1] == 0));
        assert_eq!(&dynamic_patterns(3, 64, &cfg)[..4], &[[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]]);
        assert_eq!(cfg.categorize(&[2, 16], 3, 64), Some([1, 1, 0]));
        assert_eq!(cfg.categorize(&[2, 16, 30, 40], 3, 64), None);
        let limited = DynamicConfig {
            d3_rule: vec![D3Entry { xi3: 1, d3: 30 }],
            ..cfg.clone()
        };
        assert_eq!(limited.categorize(&[31], 3, 64), None);
        assert_eq!(limited.categorize(&[29], 3, 64), Some([0, 0, 1]));
        assert!(DynamicConfig { xi_max: [0, 0, 0], ..cfg.clone() }.validate().is_err());
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn dynamic_teps_respect_intervals() {
        let cfg = DynamicConfig::ccsds_128_64();
        let iv = cfg.intervals(2, 64, 1);
        let mut n = 0;
        let _ = for_each_dynamic_tep([1, 1, 1], 2, 64, &cfg, |f| {
            assert!(iv[0].contains(&f[0]) && iv[1].contains(&f[1]) && iv[2].contains(&f[2]));
            n += 1;
            ControlFlow::Continue(())
        });
        assert_eq!(n, iv[0].len() * iv[1].len() * iv[2].len());
        let mut m = 0;
        let _ = for_each_dynamic_tep([2, 0, 0], 2, 64, &cfg, |_| {
            m += 1;
            ControlFlow::Continue(())
        });
        assert_eq!(m as u64, binom(iv[0].len() as u64, 2));
    }

    #[test]
    fn noiseless_zero_tep_recovers_codeword() {
        let code = ccsds_128_64();
        let msg: Vec<u8> = (0..64).map(|i| (i % 3 == 0) as u8).collect();
        let cw = code.encode(&msg).unwrap();
        let f = transmit(&cw, 0.0, &mut frame_rng(0, 0, 0));
        let ws = build_workspace(&f.received, &f.received, &code).unwrap();
        assert_eq!(complete_candidate(&ws, &Tep::zero()), cw);
        let path = DecodingPath::uniform("ccsds", 64, 3, 32).unwrap();
        let out = osd_decode(&ws, &path, 1, None).unwrap();
        assert_eq!((out.tep_count, out.score), (1, 0.0));
        assert_eq!(out.candidate, cw);
    }

    #[test]
    fn candidates_are_codewords_and_scores_agree() {
        let code = ccsds_128_64();
        let path = DecodingPath::uniform("ccsds", 64, 3, 32).unwrap();
        let scheme = path.uniform_scheme().unwrap();
        for frame in 0..20 {
            let f = transmit(&vec![0; 128], 0.8, &mut frame_rng(4, 0, frame));
            let ws = build_workspace(&f.received, &f.received, &code).unwrap();
            let mut scratch = Vec::new();
            for i in [0, 1, 5, 400, 1367] {
                for t in scheme.pattern_teps(i) {
                    let c = complete_candidate(&ws, &t);
                    assert!(code.syndrome_ok(&c).unwrap());
                    assert!(systematic_syndrome_ok(&ws, &c));
                    assert!((score(&ws, &c) - ws.fast_score(&t.flips, &mut scratch)).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn exhaustive_order_three_visits_every_tep() {
        let code = ccsds_128_64();
        let f = transmit(&vec![0; 128], 0.8, &mut frame_rng(1, 1, 1));
        let ws = build_workspace(&f.received, &f.received, &code).unwrap();
        let path = DecodingPath::uniform("ccsds", 64, 3, 32).unwrap();
        let out = osd_decode(&ws, &path, usize::MAX, None).unwrap();
        assert_eq!(out.tep_count, 43_745);
        assert_eq!(out.patterns_visited, 1368);
        let stop = |s: &HookState<'_>| s.patterns_visited >= 2;
        let early = osd_decode(&ws, &path, usize::MAX, Some(&stop)).unwrap();
        assert_eq!(early.tep_count, 33);
    }

    #[test]
    fn hamming_full_order_spans_codebook() {
        let code = hamming_7_4();
        let f = transmit(&[0; 7], 0.9, &mut frame_rng(2, 0, 0));
        let ws = build_workspace(&f.received, &f.received, &code).unwrap();
        let s = uniform_patterns(4, 4, 1).unwrap();
        let mut words: Vec<Vec<u8>> = (0..s.pattern_count())
            .flat_map(|i| s.pattern_teps(i))
            .map(|t| complete_candidate(&ws, &t))
            .collect();
        words.sort();
        words.dedup();
        assert_eq!(words.len(), 16);
        assert!(words.iter().all(|w| code.syndrome_ok(w).unwrap()));
    }

    #[test]
    fn score_examples() {
        let code = hamming_7_4();
        let y = [0.5, -1.0, 0.2, 0.9, -0.3, 1.1, 0.7];
        let ws = build_workspace(&y, &y, &code).unwrap();
        assert_eq!(score(&ws, &ws.base_hard.clone()), 0.0);
        let mut c = ws.base_hard.clone();
        c[3] ^= 1;
        assert!((score(&ws, &c) - 0.9).abs() < 1e-12);
    }

    #[test]
    fn ties_sort_stably() {
        let code = hamming_7_4();
        let y = [1.0, -1.0, 1.0, 0.5, -0.5, 1.0, 1.0];
        let ws = build_workspace(&y, &y, &code).unwrap();
        assert_eq!(ws.perm, vec![3, 4, 0, 1, 2, 5, 6]);
    }

    #[test]
    fn calibration_ranks_by_frequency() {
        let code = hamming_7_4();
        let template = DecodingPath::uniform("hamming", 4, 4, 1).unwrap();
        let scheme = template.uniform_scheme().unwrap();
        // Frames with a known MRB error: flip the truth at chosen MRB positions.
        let y = [0.1, -0.2, 0.3, 0.9, -1.1, 1.3, 0.7];
        let ws = build_workspace(&y, &y, &code).unwrap();
        let mut truths = Vec::new();
        for (flip, reps) in [(None, 50), (Some(2usize), 30), (Some(0), 20)] {
            let mut t = ws.mrb_hard.clone();
            if let Some(j) = flip {
                t[j] ^= 1;
            }
            let mut tep = Tep::zero();
            tep.flips = ws
                .mrb_hard
                .iter()
                .zip(&t)
                .enumerate()
                .filter(|(_, (a, b))| a != b)
                .map(|(j, _)| j)
                .collect();
            let cw = complete_candidate(&ws, &tep);
            for _ in 0..reps {
                truths.push(cw.clone());
            }
        }
        let samples: Vec<_> = truths
            .iter()
            .map(|t| CalibrationSample { reliabilities: &y, y: &y, truth: t })
            .collect();
        let path = calibrate_priorities(&samples, &code, &template, Some(2.0)).unwrap();
        let expect: Vec<PathEntry> = [(vec![], 50), (vec![2], 30), (vec![0], 20)]
            .into_iter()
            .map(|(f, hits)| PathEntry {
                pattern: OrderPattern::Uniform(scheme.pattern_of(&f).unwrap()),
                hits,
            })
            .collect();
        assert_eq!(path.patterns, expect);
        assert_eq!(path.samples, 100);
        let back = DecodingPath::from_json(&path.to_json().unwrap()).unwrap();
        assert_eq!(back, path);
        assert!(calibrate_priorities(&[], &code, &template, None).is_err());
    }
}

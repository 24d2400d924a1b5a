//! Binary linear algebra over GF(2).
//!
//! Matrices are stored row-major with each row packed into `u64` words. This
//! keeps Gaussian elimination and syndrome checks, which dominate the setup
//! cost of ordered statistics decoding, down to a handful of word XORs.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const WORD: usize = 64;

#[inline]
fn words_for(bits: usize) -> usize {
    bits.div_ceil(WORD)
}

/// Dense bit-packed binary matrix.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitMatrix {
    rows: usize,
    cols: usize,
    stride: usize,
    data: Vec<u64>,
}

impl std::fmt::Debug for BitMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "BitMatrix {}x{}", self.rows, self.cols)?;
        for r in 0..self.rows {
            let line: String = (0..self.cols)
                .map(|c| if self.get(r, c) { '1' } else { '0' })
                .collect();
            writeln!(f, "  {line}")?;
        }
        Ok(())
    }
}

impl BitMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        let stride = words_for(cols);
        Self {
            rows,
            cols,
            stride,
            data: vec![0; rows * stride],
        }
    }

    pub fn identity(size: usize) -> Self {
        let mut m = Self::zeros(size, size);
        for i in 0..size {
            m.set(i, i, true);
        }
        m
    }

    /// Builds a matrix from rows of 0/1 values. All rows must share a length.
    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut m = Self::zeros(rows.len(), cols);
        for (r, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(Error::LengthMismatch {
                    expected: cols,
                    got: row.len(),
                });
            }
            for (c, &b) in row.iter().enumerate() {
                if b != 0 {
                    m.set(r, c, true);
                }
            }
        }
        Ok(m)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Number of `u64` words per packed row.
    #[inline]
    pub fn stride(&self) -> usize {
        self.stride
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> bool {
        debug_assert!(r < self.rows && c < self.cols);
        (self.data[r * self.stride + c / WORD] >> (c % WORD)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: bool) {
        debug_assert!(r < self.rows && c < self.cols);
        let w = &mut self.data[r * self.stride + c / WORD];
        let mask = 1u64 << (c % WORD);
        if v {
            *w |= mask;
        } else {
            *w &= !mask;
        }
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[u64] {
        &self.data[r * self.stride..(r + 1) * self.stride]
    }

    /// `row[dst] ^= row[src]`.
    #[inline]
    pub fn xor_row_into(&mut self, src: usize, dst: usize) {
        debug_assert_ne!(src, dst);
        let s = self.stride;
        let (a, b) = if src < dst {
            let (lo, hi) = self.data.split_at_mut(dst * s);
            (&lo[src * s..(src + 1) * s], &mut hi[..s])
        } else {
            let (lo, hi) = self.data.split_at_mut(src * s);
            (&hi[..s] as &[u64], &mut lo[dst * s..(dst + 1) * s])
        };
        for (d, x) in b.iter_mut().zip(a) {
            *d ^= *x;
        }
    }

    pub fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        let s = self.stride;
        for w in 0..s {
            self.data.swap(a * s + w, b * s + w);
        }
    }

    pub fn swap_cols(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for r in 0..self.rows {
            let va = self.get(r, a);
            let vb = self.get(r, b);
            if va != vb {
                self.set(r, a, vb);
                self.set(r, b, va);
            }
        }
    }

    pub fn row_is_zero(&self, r: usize) -> bool {
        self.row(r).iter().all(|&w| w == 0)
    }

    pub fn row_weight(&self, r: usize) -> usize {
        self.row(r).iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Column indices of the set bits in row `r`.
    pub fn row_support(&self, r: usize) -> Vec<usize> {
        let mut out = Vec::new();
        for (wi, &w) in self.row(r).iter().enumerate() {
            let mut bits = w;
            while bits != 0 {
                let b = bits.trailing_zeros() as usize;
                out.push(wi * WORD + b);
                bits &= bits - 1;
            }
        }
        out
    }

    /// New matrix whose column `j` is column `order[j]` of `self`.
    pub fn permute_cols(&self, order: &[usize]) -> Self {
        assert_eq!(order.len(), self.cols);
        let mut out = Self::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            for (j, &src) in order.iter().enumerate() {
                if self.get(r, src) {
                    out.set(r, j, true);
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in self.row_support(r) {
                t.set(c, r, true);
            }
        }
        t
    }

    /// Product `self * other` over GF(2).
    pub fn mul(&self, other: &BitMatrix) -> Result<BitMatrix> {
        if self.cols != other.rows {
            return Err(Error::LengthMismatch {
                expected: self.cols,
                got: other.rows,
            });
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in self.row_support(r) {
                let (src, dst) = (other.row(k), r * out.stride);
                for (w, &x) in src.iter().enumerate() {
                    out.data[dst + w] ^= x;
                }
            }
        }
        Ok(out)
    }

    /// `self * bits^T` as a vector of 0/1 values, one per row.
    pub fn mul_bits(&self, bits: &[u8]) -> Result<Vec<u8>> {
        if bits.len() != self.cols {
            return Err(Error::LengthMismatch {
                expected: self.cols,
                got: bits.len(),
            });
        }
        let packed = pack_bits(bits);
        Ok((0..self.rows)
            .map(|r| parity_and(self.row(r), &packed))
            .collect())
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&w| w == 0)
    }

    pub fn to_rows(&self) -> Vec<Vec<u8>> {
        (0..self.rows)
            .map(|r| (0..self.cols).map(|c| self.get(r, c) as u8).collect())
            .collect()
    }

    /// Rank over GF(2).
    pub fn rank(&self) -> usize {
        row_reduce(self).1.len()
    }
}

/// Packs 0/1 values into words, least significant bit first.
pub fn pack_bits(bits: &[u8]) -> Vec<u64> {
    let mut out = vec![0u64; words_for(bits.len())];
    for (i, &b) in bits.iter().enumerate() {
        if b != 0 {
            out[i / WORD] |= 1 << (i % WORD);
        }
    }
    out
}

pub fn unpack_bits(words: &[u64], len: usize) -> Vec<u8> {
    (0..len)
        .map(|i| ((words[i / WORD] >> (i % WORD)) & 1) as u8)
        .collect()
}

/// Parity of the bitwise AND of two packed words.
#[inline]
pub fn parity_and(a: &[u64], b: &[u64]) -> u8 {
    let ones: u32 = a.iter().zip(b).map(|(x, y)| (x & y).count_ones()).sum();
    (ones & 1) as u8
}

/// Reduced row echelon form. Returns the reduced matrix (zero rows at the
/// bottom) and the pivot column of each nonzero row.
pub fn row_reduce(h: &BitMatrix) -> (BitMatrix, Vec<usize>) {
    let mut a = h.clone();
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..a.cols() {
        if r == a.rows() {
            break;
        }
        let Some(p) = (r..a.rows()).find(|&i| a.get(i, c)) else {
            continue;
        };
        a.swap_rows(r, p);
        for i in 0..a.rows() {
            if i != r && a.get(i, c) {
                a.xor_row_into(r, i);
            }
        }
        pivots.push(c);
        r += 1;
    }
    (a, pivots)
}

/// Adjacency lists of the Tanner graph induced by a parity-check matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TannerGraph {
    /// For every check node, its variable nodes in ascending order.
    pub check_vars: Vec<Vec<usize>>,
    /// For every variable node, its check nodes in ascending order.
    pub var_checks: Vec<Vec<usize>>,
}

impl TannerGraph {
    pub fn from_matrix(h: &BitMatrix) -> Self {
        let check_vars: Vec<Vec<usize>> = (0..h.rows()).map(|r| h.row_support(r)).collect();
        let mut var_checks = vec![Vec::new(); h.cols()];
        for (c, vars) in check_vars.iter().enumerate() {
            for &v in vars {
                var_checks[v].push(c);
            }
        }
        Self {
            check_vars,
            var_checks,
        }
    }

    pub fn edge_count(&self) -> usize {
        self.check_vars.iter().map(Vec::len).sum()
    }
}

/// One binary linear code: parity-check matrix, generator and Tanner graph.
#[derive(Debug, Clone)]
pub struct CodeSpec {
    pub name: String,
    pub n: usize,
    pub k: usize,
    /// `n - k`, the rank of `h`. Equals `h.rows()` unless `h` has redundant rows.
    pub m: usize,
    pub h: BitMatrix,
    pub g: BitMatrix,
    pub tanner: TannerGraph,
    /// Linearly independent rows spanning the row space of `h` (`m` rows).
    pub check_basis: BitMatrix,
}

impl CodeSpec {
    pub fn from_parity_check(name: impl Into<String>, h: BitMatrix) -> Result<Self> {
        if let Some(r) = (0..h.rows()).find(|&r| h.row_is_zero(r)) {
            return Err(Error::Degenerate(format!("row {r} of h is all zero")));
        }
        let (reduced, pivots) = row_reduce(&h);
        let g = generator_from_reduced(&reduced, &pivots)?;
        let rank = pivots.len();
        if rank < h.rows() {
            log::warn!(
                "parity-check matrix has {} redundant rows; using k = {}",
                h.rows() - rank,
                h.cols() - rank
            );
        }
        let mut basis = BitMatrix::zeros(rank, h.cols());
        for r in 0..rank {
            for c in reduced.row_support(r) {
                basis.set(r, c, true);
            }
        }
        Ok(Self {
            name: name.into(),
            n: h.cols(),
            k: h.cols() - rank,
            m: rank,
            tanner: TannerGraph::from_matrix(&h),
            g,
            h,
            check_basis: basis,
        })
    }

    pub fn rate(&self) -> f64 {
        self.k as f64 / self.n as f64
    }

    /// `msg * G` over GF(2).
    pub fn encode(&self, msg: &[u8]) -> Result<Vec<u8>> {
        encode(msg, self)
    }

    /// True when `bits` satisfies every parity check of `h`.
    pub fn syndrome_ok(&self, bits: &[u8]) -> Result<bool> {
        if bits.len() != self.n {
            return Err(Error::LengthMismatch {
                expected: self.n,
                got: bits.len(),
            });
        }
        Ok(self
            .tanner
            .check_vars
            .iter()
            .all(|vars| vars.iter().fold(0u8, |acc, &v| acc ^ bits[v]) == 0))
    }
}

/// Derives a full-rank generator `g` with `g * h^T = 0`, aligned with the
/// column order of `h`. A rank-deficient `h` yields `k = n - rank(h)` rows.
pub fn derive_generator(h: &BitMatrix) -> Result<BitMatrix> {
    let (reduced, pivots) = row_reduce(h);
    if pivots.len() < h.rows() {
        log::warn!(
            "derive_generator: rank {} < {} rows, k adjusted to {}",
            pivots.len(),
            h.rows(),
            h.cols() - pivots.len()
        );
    }
    generator_from_reduced(&reduced, &pivots)
}

fn generator_from_reduced(reduced: &BitMatrix, pivots: &[usize]) -> Result<BitMatrix> {
    if pivots.is_empty() {
        return Err(Error::Degenerate("h is all zero".into()));
    }
    let n = reduced.cols();
    let mut is_pivot = vec![false; n];
    for &p in pivots {
        is_pivot[p] = true;
    }
    let free: Vec<usize> = (0..n).filter(|&c| !is_pivot[c]).collect();
    if free.is_empty() {
        return Err(Error::Degenerate("h has full column rank; code is trivial".into()));
    }
    let mut g = BitMatrix::zeros(free.len(), n);
    for (row, &f) in free.iter().enumerate() {
        g.set(row, f, true);
        for (i, &p) in pivots.iter().enumerate() {
            if reduced.get(i, f) {
                g.set(row, p, true);
            }
        }
    }
    Ok(g)
}

pub fn encode(msg: &[u8], code: &CodeSpec) -> Result<Vec<u8>> {
    if msg.len() != code.k {
        return Err(Error::LengthMismatch {
            expected: code.k,
            got: msg.len(),
        });
    }
    let mut acc = vec![0u64; code.g.stride()];
    for (i, &b) in msg.iter().enumerate() {
        if b != 0 {
            for (a, &w) in acc.iter_mut().zip(code.g.row(i)) {
                *a ^= w;
            }
        }
    }
    Ok(unpack_bits(&acc, code.n))
}

/// Parses a parity-check matrix in MacKay's alist format.
///
/// Layout: `n m`, `max_col_deg max_row_deg`, the `n` column degrees, the `m`
/// row degrees, then one line of 1-based row indices per column followed by
/// one line of 1-based column indices per row. Trailing zero padding after a
/// line's declared entries is accepted.
pub fn parse_alist(text: &str) -> Result<BitMatrix> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let mut next_line = |what: &str| -> Result<(usize, Vec<usize>)> {
        let (no, line) = lines.next().ok_or_else(|| Error::Parse {
            line: 0,
            msg: format!("unexpected end of input while reading {what}"),
        })?;
        let nums = line
            .split_whitespace()
            .map(|t| {
                t.parse::<usize>().map_err(|_| Error::Parse {
                    line: no,
                    msg: format!("invalid integer {t:?} in {what}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((no, nums))
    };

    let (no, header) = next_line("header")?;
    let [n, m] = header[..] else {
        return Err(Error::Parse {
            line: no,
            msg: "header must be `n m`".into(),
        });
    };
    if n == 0 || m == 0 {
        return Err(Error::Parse {
            line: no,
            msg: "zero dimension".into(),
        });
    }
    let (no, maxdeg) = next_line("max degrees")?;
    let [max_col, max_row] = maxdeg[..] else {
        return Err(Error::Parse {
            line: no,
            msg: "max-degree line must hold two values".into(),
        });
    };
    let (no, col_deg) = next_line("column degrees")?;
    if col_deg.len() != n {
        return Err(Error::Parse {
            line: no,
            msg: format!("expected {n} column degrees, found {}", col_deg.len()),
        });
    }
    if let Some(&d) = col_deg.iter().find(|&&d| d > max_col) {
        return Err(Error::Parse {
            line: no,
            msg: format!("column degree {d} exceeds declared maximum {max_col}"),
        });
    }
    let (no, row_deg) = next_line("row degrees")?;
    if row_deg.len() != m {
        return Err(Error::Parse {
            line: no,
            msg: format!("expected {m} row degrees, found {}", row_deg.len()),
        });
    }
    if let Some(&d) = row_deg.iter().find(|&&d| d > max_row) {
        return Err(Error::Parse {
            line: no,
            msg: format!("row degree {d} exceeds declared maximum {max_row}"),
        });
    }

    let read_entries = |no: usize, entries: &[usize], deg: usize, bound: usize| -> Result<Vec<usize>> {
        if entries.len() < deg {
            return Err(Error::Parse {
                line: no,
                msg: format!("expected {deg} entries, found {}", entries.len()),
            });
        }
        let (used, pad) = entries.split_at(deg);
        if pad.iter().any(|&p| p != 0) {
            return Err(Error::Parse {
                line: no,
                msg: format!("more than {deg} nonzero entries"),
            });
        }
        used.iter()
            .map(|&idx| {
                if idx == 0 || idx > bound {
                    Err(Error::Parse {
                        line: no,
                        msg: format!("index {idx} out of range [1, {bound}]"),
                    })
                } else {
                    Ok(idx - 1)
                }
            })
            .collect()
    };

    let mut from_cols = BitMatrix::zeros(m, n);
    for (c, &deg) in col_deg.iter().enumerate() {
        let (no, entries) = next_line("column index list")?;
        for r in read_entries(no, &entries, deg, m)? {
            if from_cols.get(r, c) {
                return Err(Error::Parse {
                    line: no,
                    msg: format!("duplicate row index {}", r + 1),
                });
            }
            from_cols.set(r, c, true);
        }
    }
    let mut from_rows = BitMatrix::zeros(m, n);
    for (r, &deg) in row_deg.iter().enumerate() {
        let (no, entries) = next_line("row index list")?;
        for c in read_entries(no, &entries, deg, n)? {
            if from_rows.get(r, c) {
                return Err(Error::Parse {
                    line: no,
                    msg: format!("duplicate column index {}", c + 1),
                });
            }
            from_rows.set(r, c, true);
            if !from_cols.get(r, c) {
                return Err(Error::Parse {
                    line: no,
                    msg: format!(
                        "entry ({}, {}) missing from the column lists",
                        r + 1,
                        c + 1
                    ),
                });
            }
        }
    }
    if from_rows != from_cols {
        return Err(Error::Parse {
            line: 0,
            msg: "column and row index lists describe different matrices".into(),
        });
    }
    Ok(from_rows)
}

/// Writes `h` in alist format with zero padding.
pub fn to_alist(h: &BitMatrix) -> String {
    let (m, n) = (h.rows(), h.cols());
    let t = h.transpose();
    let cols: Vec<Vec<usize>> = (0..n).map(|c| t.row_support(c)).collect();
    let rows: Vec<Vec<usize>> = (0..m).map(|r| h.row_support(r)).collect();
    let max_col = cols.iter().map(Vec::len).max().unwrap_or(0);
    let max_row = rows.iter().map(Vec::len).max().unwrap_or(0);
    let mut s = String::new();
    let _ = writeln!(s, "{n} {m}");
    let _ = writeln!(s, "{max_col} {max_row}");
    let join = |v: Vec<String>| v.join(" ");
    let _ = writeln!(s, "{}", join(cols.iter().map(|c| c.len().to_string()).collect()));
    let _ = writeln!(s, "{}", join(rows.iter().map(|r| r.len().to_string()).collect()));
    for (list, width) in cols.iter().map(|c| (c, max_col)).chain(rows.iter().map(|r| (r, max_row))) {
        let mut items: Vec<String> = list.iter().map(|i| (i + 1).to_string()).collect();
        items.resize(width, "0".into());
        let _ = writeln!(s, "{}", join(items));
    }
    s
}

/// Parses a dense matrix: one row per line of `0`/`1` characters, optionally
/// separated by whitespace. Lines starting with `#` are ignored.
pub fn parse_dense(text: &str) -> Result<BitMatrix> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .chars()
            .filter(|c| !c.is_whitespace())
            .map(|c| match c {
                '0' => Ok(0u8),
                '1' => Ok(1u8),
                other => Err(Error::Parse {
                    line: i + 1,
                    msg: format!("unexpected character {other:?}"),
                }),
            })
            .collect::<Result<Vec<u8>>>()?;
        if let Some(first) = rows.first().map(Vec::len) {
            if first != row.len() {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: format!("row has {} columns, expected {first}", row.len()),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            line: 0,
            msg: "empty matrix".into(),
        });
    }
    BitMatrix::from_rows(&rows)
}

/// Where Gaussian elimination looks for a replacement pivot column.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PivotPolicy {
    /// Try the remaining leading columns first; only when none of them can
    /// pivot, swap in the nearest column at or beyond the boundary.
    #[default]
    LazyNearest,
    /// Swap in the nearest column beyond the boundary as soon as the
    /// diagonal column cannot pivot.
    EagerNearest,
}

/// Systematic reduction of a (column-permuted) parity-check matrix.
#[derive(Debug, Clone)]
pub struct GeResult {
    /// `m x n`, identity in the first `m` columns.
    pub systematic: BitMatrix,
    /// Column swaps `(i, j)`, `i < j`, in the order they were applied.
    pub swaps: Vec<(usize, usize)>,
    /// Swaps that moved a column across the `m` boundary.
    pub rho_s: usize,
    /// Accumulated row operations: `transform * swapped(h1) = systematic`.
    pub transform: BitMatrix,
}

impl GeResult {
    /// Applies the recorded swaps to a column labelling.
    pub fn apply_swaps<T>(&self, cols: &mut [T]) {
        for &(i, j) in &self.swaps {
            cols.swap(i, j);
        }
    }

    /// Undoes the recorded swaps on a column labelling.
    pub fn undo_swaps<T>(&self, cols: &mut [T]) {
        for &(i, j) in self.swaps.iter().rev() {
            cols.swap(i, j);
        }
    }
}

pub fn gaussian_eliminate(h1: &BitMatrix) -> Result<GeResult> {
    gaussian_eliminate_with(h1, PivotPolicy::default())
}

/// Reduces `h1` (m x n, rank m) so that its first `m` columns become the
/// identity, swapping columns when a diagonal position cannot be pivoted.
pub fn gaussian_eliminate_with(h1: &BitMatrix, policy: PivotPolicy) -> Result<GeResult> {
    let (m, n) = (h1.rows(), h1.cols());
    if m > n {
        return Err(Error::InvalidArgument(format!(
            "matrix has more rows ({m}) than columns ({n})"
        )));
    }
    let mut a = h1.clone();
    let mut t = BitMatrix::identity(m);
    let mut swaps = Vec::new();
    let mut rho_s = 0;

    let pivot_row = |a: &BitMatrix, col: usize, from: usize| (from..m).find(|&r| a.get(r, col));

    for i in 0..m {
        let mut row = pivot_row(&a, i, i);
        if row.is_none() {
            let inner = match policy {
                PivotPolicy::LazyNearest => (i + 1..m).find_map(|j| pivot_row(&a, j, i).map(|r| (j, r))),
                PivotPolicy::EagerNearest => None,
            };
            let found = inner.or_else(|| (m..n).find_map(|j| pivot_row(&a, j, i).map(|r| (j, r))));
            let Some((j, r)) = found else {
                return Err(Error::RankDeficient { rank: i, needed: m });
            };
            a.swap_cols(i, j);
            swaps.push((i, j));
            if j >= m {
                rho_s += 1;
            }
            row = Some(r);
        }
        let r = row.expect("pivot located");
        a.swap_rows(i, r);
        t.swap_rows(i, r);
        for other in 0..m {
            if other != i && a.get(other, i) {
                a.xor_row_into(i, other);
                t.xor_row_into(i, other);
            }
        }
    }
    Ok(GeResult {
        systematic: a,
        swaps,
        rho_s,
        transform: t,
    })
}

//! Codes shipped with the toolkit and code loading by name or path.

use std::path::Path;

use crate::error::{Error, Result};
use crate::gf2::{parse_alist, parse_dense, BitMatrix, CodeSpec};

pub const CCSDS_128_64_ALIST: &str = include_str!("../codes/ccsds_128_64.alist");
pub const HAMMING_7_4_ALIST: &str = include_str!("../codes/hamming_7_4.alist");

/// Names accepted by [`load_code`] in place of a file path.
pub const BUILTIN_NAMES: &[&str] = &["ccsds-128-64", "hamming-7-4"];

/// Block description of the CCSDS (128,64) parity-check matrix: 4 x 8 blocks
/// of 16 x 16 circulants. `None` is the zero block; each entry lists the
/// shift amounts summed in that block (0 is the identity).
const CCSDS_128_64_BLOCKS: [[&[usize]; 8]; 4] = [
    [&[0, 7], &[2], &[14], &[6], &[], &[0], &[13], &[0]],
    [&[6], &[0, 15], &[0], &[1], &[0], &[], &[0], &[7]],
    [&[4], &[1], &[0, 15], &[14], &[11], &[0], &[], &[3]],
    [&[0], &[1], &[9], &[0, 13], &[14], &[1], &[0], &[]],
];

/// Builds a quasi-cyclic matrix from circulant shift lists. Block row `r`
/// with shift `s` has ones at `(r, (r + s) mod size)`.
pub fn quasi_cyclic(size: usize, blocks: &[Vec<Vec<usize>>]) -> BitMatrix {
    let rows = blocks.len() * size;
    let cols = blocks.first().map_or(0, Vec::len) * size;
    let mut h = BitMatrix::zeros(rows, cols);
    for (bi, block_row) in blocks.iter().enumerate() {
        for (bj, shifts) in block_row.iter().enumerate() {
            for &s in shifts {
                for r in 0..size {
                    let (row, col) = (bi * size + r, bj * size + (r + s) % size);
                    h.set(row, col, !h.get(row, col));
                }
            }
        }
    }
    h
}

pub fn ccsds_128_64_matrix() -> BitMatrix {
    let blocks: Vec<Vec<Vec<usize>>> = CCSDS_128_64_BLOCKS
        .iter()
        .map(|row| row.iter().map(|s| s.to_vec()).collect())
        .collect();
    quasi_cyclic(16, &blocks)
}

pub fn ccsds_128_64() -> CodeSpec {
    CodeSpec::from_parity_check("ccsds-128-64", parse_alist(CCSDS_128_64_ALIST).expect("shipped alist"))
        .expect("shipped code is valid")
}

pub fn hamming_7_4() -> CodeSpec {
    CodeSpec::from_parity_check("hamming-7-4", parse_alist(HAMMING_7_4_ALIST).expect("shipped alist"))
        .expect("shipped code is valid")
}

pub fn builtin(name: &str) -> Option<CodeSpec> {
    match name {
        "ccsds-128-64" => Some(ccsds_128_64()),
        "hamming-7-4" => Some(hamming_7_4()),
        _ => None,
    }
}

/// Loads a code by builtin name, or from an alist file (any extension other
/// than `.txt`/`.dense`, which are read as dense 0/1 matrices).
pub fn load_code(spec: &str) -> Result<CodeSpec> {
    if let Some(code) = builtin(spec) {
        return Ok(code);
    }
    let path = Path::new(spec);
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read code file {spec}: {e}")))?;
    let dense = matches!(path.extension().and_then(|e| e.to_str()), Some("txt" | "dense"));
    let h = if dense { parse_dense(&text)? } else { parse_alist(&text)? };
    let name = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or(spec)
        .to_string();
    CodeSpec::from_parity_check(name, h)
}

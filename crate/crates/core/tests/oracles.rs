//! Independent brute-force oracles: exact marginals for BP on a cycle-free
//! code, and maximum-likelihood decoding for full-order OSD.

use nmsosd::channel::{frame_rng, transmit};
use nmsosd::codes::hamming_7_4;
use nmsosd::decoder::{DecoderOptions, MsaDecoder, NmsParameters};
use nmsosd::gf2::{BitMatrix, CodeSpec};
use nmsosd::osd::{build_workspace, osd_decode, DecodingPath};
use rand::Rng;

fn all_codewords(code: &CodeSpec) -> Vec<Vec<u8>> {
    (0..1u32 << code.k)
        .map(|m| {
            let msg: Vec<u8> = (0..code.k).map(|i| ((m >> i) & 1) as u8).collect();
            code.encode(&msg).unwrap()
        })
        .collect()
}

/// Chain of three checks sharing one variable each: a tree.
fn tree_code() -> CodeSpec {
    let rows = [[0usize, 1, 2], [2, 3, 4], [4, 5, 6]];
    let dense: Vec<Vec<u8>> = rows
        .iter()
        .map(|r| (0..7).map(|c| u8::from(r.contains(&c))).collect())
        .collect();
    CodeSpec::from_parity_check("tree", BitMatrix::from_rows(&dense).unwrap()).unwrap()
}

#[test]
fn bp_on_a_tree_gives_exact_marginals() {
    let code = tree_code();
    let words = all_codewords(&code);
    assert_eq!(words.len(), 16);
    let dec = MsaDecoder::new(&code);
    let opts = DecoderOptions {
        early_stop: false,
        ..DecoderOptions::new(6)
    };
    let mut rng = frame_rng(11, 0, 0);
    for _ in 0..200 {
        let llr: Vec<f64> = (0..7).map(|_| rng.random_range(-4.0..4.0)).collect();
        // log P(c_i = 0 | y) - log P(c_i = 1 | y), summing codeword likelihoods.
        let exact: Vec<f64> = (0..7)
            .map(|i| {
                let (mut p0, mut p1) = (0.0, 0.0);
                for w in &words {
                    let l: f64 = w.iter().zip(&llr).map(|(&c, &l)| if c == 0 { l / 2.0 } else { -l / 2.0 }).sum();
                    if w[i] == 0 {
                        p0 += l.exp();
                    } else {
                        p1 += l.exp();
                    }
                }
                (p0 / p1).ln()
            })
            .collect();
        let traj = dec.decode(&llr, &NmsParameters::bp(), &opts).unwrap();
        for (got, want) in traj.final_posterior().iter().zip(&exact) {
            assert!((got - want).abs() < 1e-9 * (1.0 + want.abs()), "{got} vs {want}");
        }
    }
}

fn random_code(n: usize, k: usize, seed: u64) -> CodeSpec {
    let mut rng = frame_rng(seed, 1, 0);
    loop {
        let dense: Vec<Vec<u8>> = (0..n - k)
            .map(|_| (0..n).map(|_| rng.random_range(0..2u8)).collect())
            .collect();
        if let Ok(c) = CodeSpec::from_parity_check("random", BitMatrix::from_rows(&dense).unwrap()) {
            if c.k == k {
                return c;
            }
        }
    }
}

/// Index of the codeword closest to `y` in Euclidean distance.
fn ml_decode(words: &[Vec<u8>], y: &[f64]) -> usize {
    let dist = |w: &Vec<u8>| -> f64 {
        w.iter()
            .zip(y)
            .map(|(&c, &v)| (v - (1.0 - 2.0 * f64::from(c))).powi(2))
            .sum()
    };
    (0..words.len())
        .min_by(|&a, &b| dist(&words[a]).total_cmp(&dist(&words[b])))
        .unwrap()
}

fn check_full_order_osd_is_ml(code: &CodeSpec, frames: u64) -> usize {
    let words = all_codewords(code);
    let path = DecodingPath::uniform(&code.name, code.k, code.k, 8).unwrap();
    let mut agree = 0;
    for f in 0..frames {
        let mut rng = frame_rng(99, 0, f);
        let cw = &words[rng.random_range(0..words.len())];
        let y = transmit(cw, 1.0, &mut rng).received;
        let ws = build_workspace(&y, &y, code).unwrap();
        let out = osd_decode(&ws, &path, usize::MAX, None).unwrap();
        assert_eq!(out.tep_count, 1 << code.k);
        if out.candidate == words[ml_decode(&words, &y)] {
            agree += 1;
        }
    }
    agree
}

#[test]
fn exhaustive_osd_is_ml_on_hamming() {
    assert_eq!(check_full_order_osd_is_ml(&hamming_7_4(), 300), 300);
}

#[test]
fn exhaustive_osd_is_ml_on_random_code() {
    let code = random_code(16, 8, 5);
    assert_eq!(check_full_order_osd_is_ml(&code, 200), 200);
}

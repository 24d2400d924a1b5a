//! BPSK over AWGN: modulation, noise, LLRs and Eb/N0 bookkeeping.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// LLR magnitudes are capped here so a noiseless channel stays finite.
pub const LLR_CAP: f64 = 1e6;

/// Noise standard deviation for a given Eb/N0 and code rate.
pub fn snr_to_sigma(ebn0_db: f64, rate: f64) -> Result<f64> {
    if !(rate > 0.0 && rate < 1.0) {
        return Err(Error::InvalidArgument(format!("code rate {rate} outside (0, 1)")));
    }
    Ok(1.0 / (2.0 * rate * 10f64.powf(ebn0_db / 10.0)).sqrt())
}

/// Hard decision on a soft value: positive means bit 0.
#[inline]
pub fn hard_decision(x: f64) -> u8 {
    u8::from(x <= 0.0)
}

pub fn hard_decisions(xs: &[f64]) -> Vec<u8> {
    xs.iter().map(|&x| hard_decision(x)).collect()
}

/// One transmitted and received block.
#[derive(Debug, Clone)]
pub struct ChannelFrame {
    pub codeword: Vec<u8>,
    /// `1 - 2c`.
    pub symbols: Vec<f64>,
    pub received: Vec<f64>,
    pub sigma: f64,
    /// `2y / sigma^2`, capped at [`LLR_CAP`].
    pub llr: Vec<f64>,
}

pub fn llr_from_received(received: &[f64], sigma: f64) -> Vec<f64> {
    let scale = 2.0 / (sigma * sigma);
    received
        .iter()
        .map(|&y| {
            if sigma == 0.0 {
                if y > 0.0 { LLR_CAP } else { -LLR_CAP }
            } else {
                (scale * y).clamp(-LLR_CAP, LLR_CAP)
            }
        })
        .collect()
}

pub fn transmit<R: Rng + ?Sized>(codeword: &[u8], sigma: f64, rng: &mut R) -> ChannelFrame {
    let symbols: Vec<f64> = codeword.iter().map(|&c| 1.0 - 2.0 * f64::from(c)).collect();
    let received: Vec<f64> = symbols
        .iter()
        .map(|&s| {
            let z: f64 = rng.sample(StandardNormal);
            s + sigma * z
        })
        .collect();
    let llr = llr_from_received(&received, sigma);
    ChannelFrame {
        codeword: codeword.to_vec(),
        symbols,
        received,
        sigma,
        llr,
    }
}

/// Decoder input for the min-sum family: the raw channel output. These
/// decoders are positively homogeneous in their input, so `sigma` is never
/// needed.
pub fn channel_invariant_input(frame: &ChannelFrame) -> &[f64] {
    &frame.received
}

/// Counter-based per-frame random source. Every `(master, stream, index)`
/// triple maps to an independent ChaCha stream, so frames can be generated in
/// any order or on any worker and still agree.
pub fn frame_rng(master: u64, stream: u64, index: u64) -> ChaCha8Rng {
    let mut seed = [0u8; 32];
    seed[..8].copy_from_slice(&master.to_le_bytes());
    seed[8..16].copy_from_slice(&stream.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(index);
    rng
}

//! Failure corpus: first-stage decoding failures with their full iteration
//! trajectories and ground truth, in a compact little-endian binary file.
//!
//! Layout: magic `NMSF`, format version (u32), `n` (u32), iteration count
//! `T` (u32), then records of `snr_db` (f64), frame index (u64), `n` truth
//! bytes, `n` channel values (f64) and `T * n` posteriors (f64).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::decoder::DecodingTrajectory;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"NMSF";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct FailureRecord {
    pub snr_db: f64,
    pub frame: u64,
    pub truth: Vec<u8>,
    /// Decoder input (raw channel output).
    pub y: Vec<f64>,
    /// Posterior after each iteration, `T` entries.
    pub posteriors: Vec<Vec<f64>>,
}

impl FailureRecord {
    pub fn from_trajectory(snr_db: f64, frame: u64, truth: Vec<u8>, traj: &DecodingTrajectory) -> Self {
        Self {
            snr_db,
            frame,
            truth,
            y: traj.input.clone(),
            posteriors: traj.posteriors.clone(),
        }
    }

    /// Trajectory tokens: the channel input followed by every posterior.
    pub fn tokens(&self) -> Vec<&[f64]> {
        std::iter::once(self.y.as_slice())
            .chain(self.posteriors.iter().map(Vec::as_slice))
            .collect()
    }

    pub fn final_posterior(&self) -> &[f64] {
        self.posteriors.last().map_or(&self.y, Vec::as_slice)
    }
}

/// Streaming writer; records must share `n` and `T`.
pub struct CorpusWriter<W: Write> {
    out: W,
    n: usize,
    iters: usize,
    written: u64,
}

impl CorpusWriter<BufWriter<File>> {
    pub fn create(path: &Path, n: usize, iters: usize) -> Result<Self> {
        Self::new(BufWriter::new(File::create(path)?), n, iters)
    }
}

impl<W: Write> CorpusWriter<W> {
    pub fn new(mut out: W, n: usize, iters: usize) -> Result<Self> {
        out.write_all(MAGIC)?;
        out.write_u32::<LittleEndian>(VERSION)?;
        out.write_u32::<LittleEndian>(to_u32(n)?)?;
        out.write_u32::<LittleEndian>(to_u32(iters)?)?;
        Ok(Self { out, n, iters, written: 0 })
    }

    pub fn write(&mut self, r: &FailureRecord) -> Result<()> {
        if r.truth.len() != self.n || r.y.len() != self.n {
            return Err(Error::LengthMismatch {
                expected: self.n,
                got: r.truth.len().min(r.y.len()),
            });
        }
        if r.posteriors.len() != self.iters || r.posteriors.iter().any(|p| p.len() != self.n) {
            return Err(Error::InvalidArgument(format!(
                "record has {} posteriors, corpus expects {} of length {}",
                r.posteriors.len(),
                self.iters,
                self.n
            )));
        }
        let w = &mut self.out;
        w.write_f64::<LittleEndian>(r.snr_db)?;
        w.write_u64::<LittleEndian>(r.frame)?;
        w.write_all(&r.truth)?;
        for &v in r.y.iter().chain(r.posteriors.iter().flatten()) {
            w.write_f64::<LittleEndian>(v)?;
        }
        self.written += 1;
        Ok(())
    }

    pub fn written(&self) -> u64 {
        self.written
    }

    pub fn finish(mut self) -> Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

fn to_u32(v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::InvalidArgument(format!("{v} does not fit the corpus header")))
}

pub fn read_corpus_from<R: Read>(mut input: R) -> Result<Vec<FailureRecord>> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Config("not a failure corpus (bad magic)".into()));
    }
    let version = input.read_u32::<LittleEndian>()?;
    if version != VERSION {
        return Err(Error::Config(format!("unsupported corpus version {version}")));
    }
    let n = input.read_u32::<LittleEndian>()? as usize;
    let iters = input.read_u32::<LittleEndian>()? as usize;
    let mut out = Vec::new();
    loop {
        let snr_db = match input.read_f64::<LittleEndian>() {
            Ok(v) => v,
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(e.into()),
        };
        let frame = input.read_u64::<LittleEndian>()?;
        let mut truth = vec![0u8; n];
        input.read_exact(&mut truth)?;
        let mut read_vec = || -> Result<Vec<f64>> {
            let mut v = vec![0.0; n];
            input.read_f64_into::<LittleEndian>(&mut v)?;
            Ok(v)
        };
        let y = read_vec()?;
        let posteriors = (0..iters).map(|_| read_vec()).collect::<Result<_>>()?;
        out.push(FailureRecord {
            snr_db,
            frame,
            truth,
            y,
            posteriors,
        });
    }
    Ok(out)
}

pub fn read_corpus(path: &Path) -> Result<Vec<FailureRecord>> {
    read_corpus_from(BufReader::new(File::open(path)?))
}

pub fn write_corpus(path: &Path, records: &[FailureRecord]) -> Result<()> {
    let (n, iters) = records.first().map_or((0, 0), |r| (r.y.len(), r.posteriors.len()));
    let mut w = CorpusWriter::create(path, n, iters)?;
    for r in records {
        w.write(r)?;
    }
    w.finish()?;
    Ok(())
}

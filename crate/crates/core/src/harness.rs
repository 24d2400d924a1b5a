//! Monte-Carlo experiments: FER/BER sweeps of the hybrid pipeline, failure
//! capture, and result persistence.
//!
//! Frames are simulated in fixed-size chunks. Frame `i` at SNR index `s`
//! draws all its randomness from `frame_rng(seed, s, i)`, chunk results are
//! merged in frame order and the stop rule is checked only between chunks,
//! so results do not depend on the number of worker threads.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{frame_rng, llr_from_received, snr_to_sigma, transmit};
use crate::codes::load_code;
use crate::corpus::FailureRecord;
use crate::decoder::{DecoderOptions, MsaDecoder, NmsParameters, Variant};
use crate::dia::{
    dia_forward, dia_train, diversity_decode_slices, input_scale_for, DiaModel, DiaSample, DiaTrainConfig, DiaTrainOutcome,
    DiversityConfig,
};
use crate::error::{Error, Result};
use crate::gf2::CodeSpec;
use crate::osd::{build_workspace, calibrate_priorities, osd_decode, CalibrationSample, DecodingPath, DynamicConfig, HookState, OsdOutcome, StopHook};
use crate::training::InputKind;

/// Stop rule per SNR point: whichever limit is reached first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StopRule {
    pub max_frames: u64,
    pub min_frame_errors: u64,
}

impl Default for StopRule {
    fn default() -> Self {
        Self {
            max_frames: 1_000_000,
            min_frame_errors: 300,
        }
    }
}

/// Which sorting reliabilities OSD uses when no DIA model is configured.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReliabilitySource {
    /// The decoder input.
    #[default]
    Channel,
    /// The last posterior of the failed decode.
    FinalPosterior,
}

/// The post-processing stage applied to first-stage failures.
#[derive(Debug, Clone)]
pub struct OsdStage {
    pub path: DecodingPath,
    /// Order patterns visited per OSD run.
    pub budget: usize,
    /// One DIA model per diversity group; empty disables DIA.
    pub models: Vec<DiaModel>,
    pub reliability: ReliabilitySource,
    /// Early-stop threshold on the best score; `None` disables the hook.
    pub stop_below: Option<f64>,
}

/// A fully resolved decoding chain.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub code: CodeSpec,
    pub params: NmsParameters,
    pub max_iters: usize,
    pub input: InputKind,
    pub osd: Option<OsdStage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub snr_db: Vec<f64>,
    pub seed: u64,
    pub stop: StopRule,
    pub chunk_frames: u64,
    /// Transmit the all-zero codeword instead of random messages.
    pub all_zero: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            snr_db: Vec::new(),
            seed: 1,
            stop: StopRule::default(),
            chunk_frames: 256,
            all_zero: false,
        }
    }
}

/// Statistics of one SNR point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnrRecord {
    pub snr_db: f64,
    pub frames: u64,
    pub bit_errors: u64,
    pub frame_errors: u64,
    pub fer: f64,
    pub ber: f64,
    pub fer_ci_low: f64,
    pub fer_ci_high: f64,
    pub nms_converged: u64,
    /// Converged to a codeword other than the transmitted one.
    pub nms_undetected: u64,
    pub osd_invoked: u64,
    pub osd_rescued: u64,
    pub tep_mean: f64,
    pub tep_std: f64,
    pub rho_mean: f64,
    pub rho_std: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub code: String,
    pub variant: Variant,
    pub osd: bool,
    pub diversity_groups: usize,
    pub hook_enabled: bool,
    pub records: Vec<SnrRecord>,
}

/// Wilson score interval at 95 % confidence.
pub fn wilson_interval(successes: u64, trials: u64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054_f64;
    let n = trials as f64;
    let p = successes as f64 / n;
    let denom = 1.0 + z * z / n;
    let centre = (p + z * z / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    let lo = if successes == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if successes == trials { 1.0 } else { (centre + half).min(1.0) };
    (lo, hi)
}

#[derive(Debug, Clone, Copy, Default)]
struct FrameOutcome {
    bit_errors: u64,
    frame_error: bool,
    converged: bool,
    undetected: bool,
    osd: Option<(bool, u64, usize)>,
}

struct Frame {
    codeword: Vec<u8>,
    input: Vec<f64>,
}

fn make_frame(code: &CodeSpec, sigma: f64, input: InputKind, all_zero: bool, seed: u64, stream: u64, index: u64) -> Result<Frame> {
    let mut rng = frame_rng(seed, stream, index);
    let codeword = if all_zero {
        vec![0; code.n]
    } else {
        let msg: Vec<u8> = (0..code.k).map(|_| rng.random_range(0..2u8)).collect();
        code.encode(&msg)?
    };
    let f = transmit(&codeword, sigma, &mut rng);
    let input = match input {
        InputKind::Raw => f.received,
        InputKind::Llr => llr_from_received(&f.received, sigma),
    };
    Ok(Frame { codeword, input })
}

impl Pipeline {
    /// First-stage decoder only.
    pub fn nms_only(code: CodeSpec, params: NmsParameters, max_iters: usize) -> Self {
        Self {
            code,
            params,
            max_iters,
            input: InputKind::Raw,
            osd: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be at least 1".into()));
        }
        if let Some(o) = &self.osd {
            if o.budget == 0 {
                return Err(Error::Config("OSD budget must be at least 1".into()));
            }
            if o.path.k != self.code.k {
                return Err(Error::Config(format!(
                    "decoding path built for k = {}, code has k = {}",
                    o.path.k, self.code.k
                )));
            }
        }
        Ok(())
    }

    /// Post-processes one failure. Returns the OSD outcome.
    pub fn post_process(&self, record: &FailureRecord) -> Result<Option<OsdOutcome>> {
        let Some(stage) = &self.osd else {
            return Ok(None);
        };
        let stop = stage.stop_below.map(|t| move |s: &HookState<'_>| s.best_score <= t);
        let hook: Option<StopHook<'_>> = stop.as_ref().map(|f| f as StopHook<'_>);
        if stage.models.is_empty() {
            let rel = match stage.reliability {
                ReliabilitySource::Channel => &record.y,
                ReliabilitySource::FinalPosterior => record.final_posterior(),
            };
            let ws = build_workspace(rel, &record.y, &self.code)?;
            return osd_decode(&ws, &stage.path, stage.budget, hook).map(Some);
        }
        let groups = DiversityConfig::new(stage.models.len())?;
        let slices = groups.groups(record.posteriors.len() + 1);
        let refs: Vec<Option<&DiaModel>> = stage.models.iter().map(Some).collect();
        let out = diversity_decode_slices(record, &slices, &refs, &self.code, &stage.path, stage.budget, hook)?;
        let mut best = out.per_group[out.best_group].clone();
        best.tep_count = out.tep_count;
        Ok(Some(best))
    }

    fn run_frame(&self, dec: &MsaDecoder, opts: &DecoderOptions, sigma: f64, snr: f64, sweep: &SweepOptions, stream: u64, index: u64) -> Result<FrameOutcome> {
        let frame = make_frame(&self.code, sigma, self.input, sweep.all_zero, sweep.seed, stream, index)?;
        let traj = dec.decode(&frame.input, &self.params, opts)?;
        let mut out = FrameOutcome {
            converged: traj.converged,
            ..Default::default()
        };
        let decided = if traj.converged || self.osd.is_none() {
            out.undetected = traj.converged && traj.final_hard() != frame.codeword.as_slice();
            traj.final_hard().to_vec()
        } else {
            let record = FailureRecord::from_trajectory(snr, index, frame.codeword.clone(), &traj);
            let o = self.post_process(&record)?.expect("OSD configured");
            let rescued = o.candidate == frame.codeword;
            out.osd = Some((rescued, o.tep_count, o.rho_s));
            o.candidate
        };
        out.bit_errors = decided.iter().zip(&frame.codeword).filter(|(a, b)| a != b).count() as u64;
        out.frame_error = out.bit_errors > 0;
        Ok(out)
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

fn frame_error_context(e: Error, frame: u64, snr_db: f64, seed: u64) -> Error {
    Error::Frame {
        frame,
        snr_db,
        seed,
        source: Box::new(e),
    }
}

/// Simulates every SNR point of `sweep` through `pipeline`.
pub fn run_pipeline(pipeline: &Pipeline, sweep: &SweepOptions) -> Result<SweepResult> {
    pipeline.validate()?;
    if sweep.snr_db.is_empty() {
        return Err(Error::Config("SNR grid is empty".into()));
    }
    if sweep.stop.min_frame_errors == 0 || sweep.stop.max_frames == 0 || sweep.chunk_frames == 0 {
        return Err(Error::Config("stop rule and chunk size must be positive".into()));
    }
    let dec = MsaDecoder::new(&pipeline.code);
    let mut opts = DecoderOptions::new(pipeline.max_iters);
    opts.early_stop = true;
    let mut records = Vec::with_capacity(sweep.snr_db.len());
    for (si, &snr) in sweep.snr_db.iter().enumerate() {
        let started = Instant::now();
        let sigma = snr_to_sigma(snr, pipeline.code.rate())?;
        let mut outcomes: Vec<FrameOutcome> = Vec::new();
        let mut frame_errors = 0u64;
        while (outcomes.len() as u64) < sweep.stop.max_frames && frame_errors < sweep.stop.min_frame_errors {
            let start = outcomes.len() as u64;
            let end = (start + sweep.chunk_frames).min(sweep.stop.max_frames);
            let chunk: Vec<FrameOutcome> = (start..end)
                .into_par_iter()
                .map(|i| {
                    pipeline
                        .run_frame(&dec, &opts, sigma, snr, sweep, si as u64, i)
                        .map_err(|e| frame_error_context(e, i, snr, sweep.seed))
                })
                .collect::<Result<_>>()?;
            frame_errors += chunk.iter().filter(|o| o.frame_error).count() as u64;
            outcomes.extend(chunk);
        }
        let frames = outcomes.len() as u64;
        let bit_errors: u64 = outcomes.iter().map(|o| o.bit_errors).sum();
        let teps: Vec<f64> = outcomes.iter().filter_map(|o| o.osd.map(|x| x.1 as f64)).collect();
        let rhos: Vec<f64> = outcomes.iter().filter_map(|o| o.osd.map(|x| x.2 as f64)).collect();
        let (tep_mean, tep_std) = mean_std(&teps);
        let (rho_mean, rho_std) = mean_std(&rhos);
        let (lo, hi) = wilson_interval(frame_errors, frames);
        records.push(SnrRecord {
            snr_db: snr,
            frames,
            bit_errors,
            frame_errors,
            fer: frame_errors as f64 / frames as f64,
            ber: bit_errors as f64 / (frames * pipeline.code.n as u64) as f64,
            fer_ci_low: lo,
            fer_ci_high: hi,
            nms_converged: outcomes.iter().filter(|o| o.converged).count() as u64,
            nms_undetected: outcomes.iter().filter(|o| o.undetected).count() as u64,
            osd_invoked: teps.len() as u64,
            osd_rescued: outcomes.iter().filter(|o| matches!(o.osd, Some((true, _, _)))).count() as u64,
            tep_mean,
            tep_std,
            rho_mean,
            rho_std,
            wall_seconds: started.elapsed().as_secs_f64(),
        });
        log::info!("{snr} dB: {frame_errors} errors in {frames} frames");
    }
    Ok(SweepResult {
        code: pipeline.code.name.clone(),
        variant: pipeline.params.variant,
        osd: pipeline.osd.is_some(),
        diversity_groups: pipeline.osd.as_ref().map_or(0, |o| o.models.len().max(1)),
        hook_enabled: pipeline.osd.as_ref().is_some_and(|o| o.stop_below.is_some()),
        records,
    })
}

/// Runs `f` on a dedicated pool of `workers` threads (or the global pool).
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w.max(1))
                .build()
                .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Simulates frames at one SNR until `count` first-stage failures are
/// collected (in frame order), or fails after `max_frames`. Returns the
/// failures and the number of frames simulated.
pub fn capture_failures(pipeline: &Pipeline, snr_db: f64, count: usize, seed: u64, max_frames: u64) -> Result<(Vec<FailureRecord>, u64)> {
    let mut out = Vec::with_capacity(count);
    let frames = capture_failures_with(pipeline, snr_db, count, seed, max_frames, |r| {
        out.push(r);
        Ok(())
    })?;
    Ok((out, frames))
}

/// Like [`capture_failures`], but hands each failure to `sink` in frame
/// order as soon as its chunk completes (e.g. a [`crate::corpus::CorpusWriter`]).
pub fn capture_failures_with(
    pipeline: &Pipeline,
    snr_db: f64,
    count: usize,
    seed: u64,
    max_frames: u64,
    mut sink: impl FnMut(FailureRecord) -> Result<()>,
) -> Result<u64> {
    pipeline.params.validate()?;
    let sigma = snr_to_sigma(snr_db, pipeline.code.rate())?;
    let dec = MsaDecoder::new(&pipeline.code);
    let opts = DecoderOptions::new(pipeline.max_iters);
    let chunk = 1024u64;
    let mut collected = 0usize;
    let mut frames = 0u64;
    while collected < count {
        if frames >= max_frames {
            return Err(Error::Timeout {
                frames,
                collected,
                wanted: count,
            });
        }
        let end = (frames + chunk).min(max_frames);
        let found: Vec<Option<FailureRecord>> = (frames..end)
            .into_par_iter()
            .map(|i| -> Result<Option<FailureRecord>> {
                let f = make_frame(&pipeline.code, sigma, pipeline.input, false, seed, 0, i)
                    .map_err(|e| frame_error_context(e, i, snr_db, seed))?;
                let t = dec
                    .decode(&f.input, &pipeline.params, &opts)
                    .map_err(|e| frame_error_context(e, i, snr_db, seed))?;
                Ok((!t.converged).then(|| FailureRecord::from_trajectory(snr_db, i, f.codeword, &t)))
            })
            .collect::<Result<_>>()?;
        let chunk_start = frames;
        frames = end;
        for (offset, r) in found.into_iter().enumerate() {
            if let Some(r) = r {
                sink(r)?;
                collected += 1;
                if collected == count {
                    frames = chunk_start + offset as u64 + 1;
                    break;
                }
            }
        }
    }
    Ok(frames)
}

/// DIA network shape.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiaArch {
    /// Four convolution layers; the single-group default.
    #[default]
    FourLayer,
    /// Two convolution layers, used per group under diversity.
    TwoLayer,
}

/// Trains one DIA model per diversity group on a failure corpus.
pub fn train_dia_models(records: &[FailureRecord], groups: usize, arch: DiaArch, cfg: &DiaTrainConfig) -> Result<Vec<DiaTrainOutcome>> {
    let first = records
        .first()
        .ok_or_else(|| Error::InvalidArgument("DIA training needs a non-empty corpus".into()))?;
    let slices = DiversityConfig::new(groups)?.groups(first.posteriors.len() + 1);
    slices
        .iter()
        .enumerate()
        .map(|(g, slice)| {
            let samples = records
                .iter()
                .map(|r| DiaSample::from_record(r, slice))
                .collect::<Result<Vec<_>>>()?;
            let scale = input_scale_for(&samples);
            let seed = cfg.seed.wrapping_add(g as u64);
            let model = match arch {
                DiaArch::FourLayer => DiaModel::four_layer(scale, seed),
                DiaArch::TwoLayer => DiaModel::two_layer(scale, seed),
            };
            let out = dia_train(&samples, model, &DiaTrainConfig { seed, ..cfg.clone() })?;
            log::info!(
                "group {g}: validation loss {:.4} -> {:.4}",
                out.initial_val_loss,
                out.best_val_loss
            );
            Ok(out)
        })
        .collect()
}

impl Pipeline {
    /// Reliabilities that order the first OSD run of a failure: the first
    /// group's DIA output when models are configured, otherwise the
    /// configured source.
    pub fn sorting_reliabilities(&self, record: &FailureRecord) -> Result<Vec<f64>> {
        let stage = self
            .osd
            .as_ref()
            .ok_or_else(|| Error::Config("no OSD stage configured".into()))?;
        if let Some(model) = stage.models.first() {
            let slice = &DiversityConfig::new(stage.models.len())?.groups(record.posteriors.len() + 1)[0];
            let sample = DiaSample::from_record(record, slice)?;
            return dia_forward(model, &sample.tokens, sample.y);
        }
        Ok(match stage.reliability {
            ReliabilitySource::Channel => record.y.clone(),
            ReliabilitySource::FinalPosterior => record.final_posterior().to_vec(),
        })
    }

    /// Ranks the configured path's order patterns on a failure corpus.
    pub fn calibrate(&self, records: &[FailureRecord]) -> Result<DecodingPath> {
        let stage = self
            .osd
            .as_ref()
            .ok_or_else(|| Error::Config("no OSD stage configured".into()))?;
        let rel = records
            .par_iter()
            .map(|r| self.sorting_reliabilities(r))
            .collect::<Result<Vec<_>>>()?;
        let samples: Vec<CalibrationSample<'_>> = records
            .iter()
            .zip(&rel)
            .map(|(r, rel)| CalibrationSample {
                reliabilities: rel,
                y: &r.y,
                truth: &r.truth,
            })
            .collect();
        calibrate_priorities(&samples, &self.code, &stage.path, records.first().map(|r| r.snr_db))
    }

    /// GE swap count of every failure under the configured ordering.
    pub fn swap_counts(&self, records: &[FailureRecord]) -> Result<Vec<usize>> {
        records
            .par_iter()
            .map(|r| Ok(build_workspace(&self.sorting_reliabilities(r)?, &r.y, &self.code)?.rho_s()))
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Declarative configuration

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecoderSection {
    pub variant: Variant,
    /// Trained parameter file; when absent the inline values (or the
    /// all-ones initialisation) are used.
    #[serde(default)]
    pub params: Option<PathBuf>,
    #[serde(default)]
    pub zeta1: Option<f64>,
    #[serde(default)]
    pub zeta2: Option<f64>,
    #[serde(default)]
    pub zeta3: Option<f64>,
    pub max_iters: usize,
    #[serde(default)]
    pub input: InputKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeKind {
    Uniform,
    Dynamic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OsdSection {
    /// Calibrated path file; overrides `scheme` when present.
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default = "default_scheme")]
    pub scheme: SchemeKind,
    pub budget: usize,
    #[serde(default = "default_p")]
    pub p: usize,
    #[serde(default = "default_wb")]
    pub w_b: usize,
    #[serde(default)]
    pub dynamic: Option<DynamicConfig>,
    #[serde(default)]
    pub reliability: ReliabilitySource,
    #[serde(default)]
    pub stop_below: Option<f64>,
}

fn default_scheme() -> SchemeKind {
    SchemeKind::Uniform
}
fn default_p() -> usize {
    3
}
fn default_wb() -> usize {
    32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiaSection {
    /// One model file per diversity group.
    pub models: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    #[serde(default = "default_name")]
    pub name: String,
}

fn default_name() -> String {
    "sweep".into()
}

/// The declarative experiment file (TOML).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Builtin code name or alist path.
    pub code: String,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub snr_db: Vec<f64>,
    pub decoder: DecoderSection,
    #[serde(default)]
    pub osd: Option<OsdSection>,
    #[serde(default)]
    pub dia: Option<DiaSection>,
    #[serde(default)]
    pub stop: StopRule,
    #[serde(default = "default_chunk")]
    pub chunk_frames: u64,
    #[serde(default)]
    pub all_zero: bool,
    #[serde(default)]
    pub output: Option<OutputSection>,
}

fn default_seed() -> u64 {
    1
}
fn default_chunk() -> u64 {
    256
}

impl ExperimentConfig {
    /// Parses TOML; relative paths are resolved against `base_dir`.
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base_dir.join(&*p);
            }
        };
        if let Some(p) = cfg.decoder.params.as_mut() {
            fix(p);
        }
        if let Some(p) = cfg.osd.as_mut().and_then(|o| o.path.as_mut()) {
            fix(p);
        }
        if let Some(d) = cfg.dia.as_mut() {
            d.models.iter_mut().for_each(fix);
        }
        if let Some(o) = cfg.output.as_mut() {
            fix(&mut o.dir);
        }
        if !cfg.code.contains('/') && !crate::codes::BUILTIN_NAMES.contains(&cfg.code.as_str()) {
            cfg.code = base_dir.join(&cfg.code).to_string_lossy().into_owned();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.snr_db.is_empty() {
            return Err(Error::Config("snr_db must not be empty".into()));
        }
        if self.stop.min_frame_errors < 1 || self.stop.max_frames < 1 {
            return Err(Error::Config("stop rule limits must be at least 1".into()));
        }
        if self.dia.is_some() && self.osd.is_none() {
            return Err(Error::Config("a [dia] section needs an [osd] section".into()));
        }
        let mut files: Vec<&PathBuf> = Vec::new();
        files.extend(self.decoder.params.iter());
        files.extend(self.osd.iter().filter_map(|o| o.path.as_ref()));
        files.extend(self.dia.iter().flat_map(|d| d.models.iter()));
        if let Some(missing) = files.into_iter().find(|p| !p.is_file()) {
            return Err(Error::Config(format!("file not found: {}", missing.display())));
        }
        Ok(())
    }

    /// Loads every referenced artifact.
    pub fn resolve(&self) -> Result<Pipeline> {
        let code = load_code(&self.code)?;
        let d = &self.decoder;
        let mut params = match &d.params {
            Some(p) => NmsParameters::from_json(&std::fs::read_to_string(p)?)?,
            None => NmsParameters::initial(d.variant, &code),
        };
        if params.variant != d.variant {
            return Err(Error::Config(format!(
                "parameter file holds {} but the decoder is {}",
                params.variant, d.variant
            )));
        }
        if let Some(z) = d.zeta1 {
            params.zeta1 = z;
        }
        if let Some(z) = d.zeta2 {
            params.zeta2 = z;
        }
        if let Some(z) = d.zeta3 {
            params.zeta3 = z;
        }
        params.validate().map_err(|e| Error::Config(e.to_string()))?;
        let osd = match &self.osd {
            None => None,
            Some(o) => {
                let path = match (&o.path, o.scheme) {
                    (Some(p), _) => DecodingPath::load(p)?,
                    (None, SchemeKind::Uniform) => DecodingPath::uniform(&code.name, code.k, o.p, o.w_b)?,
                    (None, SchemeKind::Dynamic) => DecodingPath::dynamic(
                        &code.name,
                        code.k,
                        o.dynamic.clone().ok_or_else(|| Error::Config("dynamic scheme needs [osd.dynamic]".into()))?,
                    )?,
                };
                let models = self
                    .dia
                    .iter()
                    .flat_map(|d| d.models.iter())
                    .map(|p| DiaModel::load(p))
                    .collect::<Result<_>>()?;
                Some(OsdStage {
                    path,
                    budget: o.budget,
                    models,
                    reliability: o.reliability,
                    stop_below: o.stop_below,
                })
            }
        };
        let pipeline = Pipeline {
            code,
            params,
            max_iters: d.max_iters,
            input: d.input,
            osd,
        };
        pipeline.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(pipeline)
    }

    pub fn sweep_options(&self) -> SweepOptions {
        SweepOptions {
            snr_db: self.snr_db.clone(),
            seed: self.seed,
            stop: self.stop,
            chunk_frames: self.chunk_frames,
            all_zero: self.all_zero,
        }
    }
}

/// Resolves a configuration and runs its sweep.
pub fn run_sweep(config: &ExperimentConfig) -> Result<SweepResult> {
    let pipeline = config.resolve()?;
    run_pipeline(&pipeline, &config.sweep_options())
}

// ---------------------------------------------------------------------------
// Reporting

/// Columns of the per-SNR CSV, in order.
pub const CSV_COLUMNS: &[&str] = &[
    "snr_db",
    "frames",
    "frame_errors",
    "bit_errors",
    "fer",
    "ber",
    "fer_ci_low",
    "fer_ci_high",
    "nms_converged",
    "nms_undetected",
    "osd_invoked",
    "osd_rescued",
    "tep_mean",
    "tep_std",
    "rho_mean",
    "rho_std",
];

/// Per-SNR CSV. Wall-clock time is left out so that identical runs produce
/// identical bytes.
pub fn write_csv<W: Write>(result: &SweepResult, mut w: W) -> Result<()> {
    writeln!(w, "{}", CSV_COLUMNS.join(","))?;
    for r in &result.records {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.snr_db,
            r.frames,
            r.frame_errors,
            r.bit_errors,
            r.fer,
            r.ber,
            r.fer_ci_low,
            r.fer_ci_high,
            r.nms_converged,
            r.nms_undetected,
            r.osd_invoked,
            r.osd_rescued,
            r.tep_mean,
            r.tep_std,
            r.rho_mean,
            r.rho_std
        )?;
    }
    Ok(())
}

pub fn csv_string(result: &SweepResult) -> String {
    let mut buf = Vec::new();
    write_csv(result, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("ascii")
}

pub fn config_hash(config_text: &str) -> String {
    hex::encode(Sha256::digest(config_text.as_bytes()))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Summary {
    pub tool: String,
    pub version: String,
    pub git_revision: Option<String>,
    pub config_sha256: String,
    /// Without the early-stop hook, TEP counts are upper bounds of what a
    /// stopping criterion would need.
    pub tep_counts_are_upper_bounds: bool,
    pub result: SweepResult,
}

fn git_revision() -> Option<String> {
    let out = std::process::Command::new("git").args(["rev-parse", "--short", "HEAD"]).output().ok()?;
    out.status
        .success()
        .then(|| String::from_utf8_lossy(&out.stdout).trim().to_string())
        .filter(|s| !s.is_empty())
}

/// Writes `<name>.csv`, `<name>.json` and `<name>_fer.dat`/`<name>_ber.dat`
/// plot data into `dir`. Returns the written paths.
pub fn report(result: &SweepResult, dir: &Path, name: &str, config_text: &str) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let csv = dir.join(format!("{name}.csv"));
    write_csv(result, std::io::BufWriter::new(std::fs::File::create(&csv)?))?;
    let json = dir.join(format!("{name}.json"));
    let summary = Summary {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        git_revision: git_revision(),
        config_sha256: config_hash(config_text),
        tep_counts_are_upper_bounds: !result.hook_enabled,
        result: result.clone(),
    };
    std::fs::write(&json, serde_json::to_string_pretty(&summary)?)?;
    let mut paths = vec![csv, json];
    for (suffix, pick) in [("fer", (|r: &SnrRecord| r.fer) as fn(&SnrRecord) -> f64), ("ber", |r: &SnrRecord| r.ber)] {
        let p = dir.join(format!("{name}_{suffix}.dat"));
        let mut w = std::io::BufWriter::new(std::fs::File::create(&p)?);
        writeln!(w, "# snr_db {suffix}")?;
        for r in &result.records {
            writeln!(w, "{} {}", r.snr_db, pick(r))?;
        }
        w.flush()?;
        paths.push(p);
    }
    Ok(paths)
}

/// Reads a summary written by [`report`].
pub fn load_summary(path: &Path) -> Result<Summary> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codes::{ccsds_128_64, hamming_7_4};

    fn tiny_sweep() -> SweepOptions {
        SweepOptions {
            snr_db: vec![1.0, 3.0, 5.0],
            stop: StopRule {
                max_frames: 400,
                min_frame_errors: 20,
            },
            chunk_frames: 64,
            ..Default::default()
        }
    }

    #[test]
    fn wilson_bounds() {
        let (lo, hi) = wilson_interval(30, 100);
        assert!(lo < 0.3 && hi > 0.3 && lo > 0.2 && hi < 0.4);
        assert_eq!(wilson_interval(0, 0), (0.0, 1.0));
        assert_eq!(wilson_interval(0, 50).0, 0.0);
    }

    #[test]
    fn noiseless_sweep_has_no_errors() {
        let p = Pipeline {
            osd: Some(OsdStage {
                path: DecodingPath::uniform("h", 4, 2, 4).unwrap(),
                budget: 2,
                models: vec![],
                reliability: ReliabilitySource::Channel,
                stop_below: None,
            }),
            ..Pipeline::nms_only(hamming_7_4(), NmsParameters::nms1(0.8), 5)
        };
        let r = run_pipeline(
            &p,
            &SweepOptions {
                snr_db: vec![300.0],
                stop: StopRule {
                    max_frames: 500,
                    min_frame_errors: 1,
                },
                ..Default::default()
            },
        )
        .unwrap();
        let rec = &r.records[0];
        assert_eq!((rec.frames, rec.frame_errors, rec.osd_invoked), (500, 0, 0));
    }

    #[test]
    fn conservation_and_monotone_snr() {
        let p = Pipeline {
            osd: Some(OsdStage {
                path: DecodingPath::uniform("c", 64, 3, 32).unwrap(),
                budget: 3,
                models: vec![],
                reliability: ReliabilitySource::Channel,
                stop_below: None,
            }),
            ..Pipeline::nms_only(ccsds_128_64(), NmsParameters::nms1(0.7), 8)
        };
        let r = run_pipeline(&p, &tiny_sweep()).unwrap();
        assert_eq!(r.records.len(), 3);
        for rec in &r.records {
            assert_eq!(rec.frames, rec.nms_converged + rec.osd_invoked);
            assert_eq!(rec.frame_errors, rec.osd_invoked - rec.osd_rescued + rec.nms_undetected);
            assert!((rec.fer - rec.frame_errors as f64 / rec.frames as f64).abs() < 1e-15);
        }
        let csv = csv_string(&r);
        assert_eq!(csv.lines().count(), 4);
        let snrs: Vec<f64> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
        assert!(snrs.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn empty_result_gives_header_only() {
        let r = SweepResult {
            code: "x".into(),
            variant: Variant::Ms,
            osd: false,
            diversity_groups: 0,
            hook_enabled: false,
            records: vec![],
        };
        assert_eq!(csv_string(&r), format!("{}\n", CSV_COLUMNS.join(",")));
    }

    #[test]
    fn capture_times_out_when_nothing_fails() {
        let p = Pipeline::nms_only(hamming_7_4(), NmsParameters::nms1(0.8), 5);
        match capture_failures(&p, 300.0, 1, 1, 3000) {
            Err(Error::Timeout { frames, collected, .. }) => assert_eq!((frames, collected), (3000, 0)),
            other => panic!("expected timeout, got {other:?}"),
        }
    }

    #[test]
    fn captured_failures_replay_as_failures() {
        let code = ccsds_128_64();
        let p = Pipeline::nms_only(code.clone(), NmsParameters::nms1(0.644), 13);
        let (recs, frames) = capture_failures(&p, 2.2, 40, 3, 100_000).unwrap();
        assert_eq!(recs.len(), 40);
        assert_eq!(frames, recs.last().unwrap().frame + 1);
        let dec = MsaDecoder::new(&code);
        for r in &recs {
            let t = dec.decode(&r.y, &p.params, &DecoderOptions::new(13)).unwrap();
            assert!(!t.converged);
            assert_eq!(t.posteriors, r.posteriors);
        }
    }

    #[test]
    fn config_parsing() {
        let dir = tempfile::tempdir().unwrap();
        let text = r#"
            code = "ccsds-128-64"
            snr_db = [2.2, 2.4]
            [decoder]
            variant = "nms-1"
            zeta3 = 0.644
            max_iters = 13
            [osd]
            budget = 30
            [stop]
            max_frames = 1000
            min_frame_errors = 10
        "#;
        let cfg = ExperimentConfig::from_toml(text, dir.path()).unwrap();
        let p = cfg.resolve().unwrap();
        assert_eq!(p.params.zeta3, 0.644);
        assert_eq!(p.osd.as_ref().unwrap().budget, 30);
        assert!(ExperimentConfig::from_toml(&text.replace("[2.2, 2.4]", "[]"), dir.path()).is_err());
        assert!(ExperimentConfig::from_toml(&text.replace("budget = 30", "budget = 30\nbogus = 1"), dir.path()).is_err());
        let missing = text.replace("zeta3 = 0.644", "params = \"nope.json\"");
        assert!(matches!(ExperimentConfig::from_toml(&missing, dir.path()), Err(Error::Config(_))));
    }

    #[test]
    fn report_writes_all_files() {
        let p = Pipeline::nms_only(hamming_7_4(), NmsParameters::ms(), 5);
        let r = run_pipeline(&p, &tiny_sweep()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let files = report(&r, dir.path(), "t", "cfg").unwrap();
        assert_eq!(files.len(), 4);
        let s = load_summary(&files[1]).unwrap();
        assert_eq!(s.config_sha256, config_hash("cfg"));
        assert_eq!(s.result, r);
        assert!(s.tep_counts_are_upper_bounds);
    }
}

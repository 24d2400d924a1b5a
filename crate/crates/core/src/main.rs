//! Command-line front end.
//!
//! Exit codes: 0 success, 1 configuration or usage error, 2 runtime error.
//! `NMSOSD_WORKERS` sets the worker thread count.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use nmsosd::codes::load_code;
use nmsosd::corpus::{read_corpus, CorpusWriter};
use nmsosd::decoder::Variant;
use nmsosd::dia::DiaTrainConfig;
use nmsosd::harness::{
    capture_failures_with, load_summary, report, run_pipeline, train_dia_models, with_workers, write_csv, DiaArch,
    ExperimentConfig,
};
use nmsosd::training::{train, write_loss_csv, InputKind, TrainingConfig};
use nmsosd::Error;

#[derive(Parser)]
#[command(name = "nmsosd", version, about = "Hybrid neural min-sum / OSD decoding experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the weights of an NMS variant and write them as JSON.
    TrainNms {
        /// Builtin code name or alist file.
        #[arg(long, default_value = "ccsds-128-64")]
        code: String,
        #[arg(long, default_value = "nms-1")]
        variant: Variant,
        #[arg(long)]
        out: PathBuf,
        /// Optional per-step loss log (CSV).
        #[arg(long)]
        loss_csv: Option<PathBuf>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, num_args = 2, value_names = ["LOW", "HIGH"])]
        snr_range: Option<Vec<f64>>,
        #[arg(long)]
        max_iters: Option<usize>,
        /// Feed raw channel values instead of LLRs during training.
        #[arg(long)]
        raw_input: bool,
    },
    /// Collect first-stage decoding failures into a corpus file.
    CaptureFailures {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        snr: f64,
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 10_000_000)]
        max_frames: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one DIA model per diversity group on a failure corpus.
    TrainDia {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 1)]
        groups: usize,
        /// Defaults to four layers for one group, two layers otherwise.
        #[arg(long, value_parser = parse_arch)]
        arch: Option<DiaArch>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Models are written as `<PREFIX>_g<i>.json`.
        #[arg(long)]
        out_prefix: PathBuf,
    },
    /// Rank the order patterns of the configured path on a failure corpus.
    CalibratePath {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the configured FER/BER sweep and write its report.
    Sweep {
        #[arg(long)]
        config: PathBuf,
    },
    /// Regenerate CSV and plot data from a JSON summary.
    Report {
        #[arg(long)]
        summary: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value = "report")]
        name: String,
    },
}

fn parse_arch(s: &str) -> Result<DiaArch, String> {
    match s {
        "four-layer" | "4" => Ok(DiaArch::FourLayer),
        "two-layer" | "2" => Ok(DiaArch::TwoLayer),
        _ => Err(format!("unknown architecture '{s}' (four-layer or two-layer)")),
    }
}

fn workers() -> Result<Option<usize>, Error> {
    match std::env::var("NMSOSD_WORKERS") {
        Err(_) => Ok(None),
        Ok(v) => v
            .parse::<usize>()
            .ok()
            .filter(|&w| w > 0)
            .map(Some)
            .ok_or_else(|| Error::Config(format!("NMSOSD_WORKERS must be a positive integer, got '{v}'"))),
    }
}

fn is_config_error(e: &Error) -> bool {
    matches!(e, Error::Config(_) | Error::Parse { .. } | Error::InvalidArgument(_))
}

fn run(cmd: Command) -> Result<(), Error> {
    let workers = workers()?;
    match cmd {
        Command::TrainNms {
            code,
            variant,
            out,
            loss_csv,
            steps,
            seed,
            snr_range,
            max_iters,
            raw_input,
        } => {
            let code = load_code(&code)?;
            let mut cfg = TrainingConfig::default();
            if let Some(s) = steps {
                cfg.total_steps = s;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(r) = snr_range {
                cfg.snr_range_db = [r[0], r[1]];
            }
            if let Some(t) = max_iters {
                cfg.max_iters = t;
            }
            if raw_input {
                cfg.input = InputKind::Raw;
            }
            let outcome = with_workers(workers, || train(&cfg, &code, variant))??;
            std::fs::write(&out, outcome.params.to_json()?)?;
            if let Some(p) = loss_csv {
                write_loss_csv(&outcome.log, std::io::BufWriter::new(std::fs::File::create(p)?))?;
            }
            println!("{}", outcome.params.to_json()?);
        }
        Command::CaptureFailures {
            config,
            snr,
            count,
            max_frames,
            out,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let pipeline = cfg.resolve()?;
            let mut writer = CorpusWriter::create(&out, pipeline.code.n, pipeline.max_iters)?;
            let frames = with_workers(workers, || {
                capture_failures_with(&pipeline, snr, count, cfg.seed, max_frames, |r| writer.write(&r))
            })??;
            writer.finish()?;
            println!("captured {count} failures in {frames} frames");
        }
        Command::TrainDia {
            corpus,
            groups,
            arch,
            steps,
            seed,
            out_prefix,
        } => {
            let records = read_corpus(&corpus)?;
            let arch = arch.unwrap_or(if groups == 1 { DiaArch::FourLayer } else { DiaArch::TwoLayer });
            let mut cfg = DiaTrainConfig::default();
            if let Some(s) = steps {
                cfg.steps = s;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let outcomes = with_workers(workers, || train_dia_models(&records, groups, arch, &cfg))??;
            for (g, o) in outcomes.iter().enumerate() {
                let path = PathBuf::from(format!("{}_g{g}.json", out_prefix.display()));
                o.model.save(&path)?;
                println!(
                    "{}: validation loss {:.4} -> {:.4}",
                    path.display(),
                    o.initial_val_loss,
                    o.best_val_loss
                );
            }
        }
        Command::CalibratePath { config, corpus, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let pipeline = cfg.resolve()?;
            let records = read_corpus(&corpus)?;
            let path = with_workers(workers, || pipeline.calibrate(&records))??;
            path.save(&out)?;
            println!("calibrated on {} failures ({} uncovered)", path.samples, path.uncovered);
        }
        Command::Sweep { config } => {
            let text = std::fs::read_to_string(&config)
                .map_err(|e| Error::Config(format!("{}: {e}", config.display())))?;
            let cfg = ExperimentConfig::from_toml(&text, config.parent().unwrap_or(Path::new(".")))?;
            let pipeline = cfg.resolve()?;
            let result = with_workers(workers, || run_pipeline(&pipeline, &cfg.sweep_options()))??;
            match &cfg.output {
                Some(o) => {
                    for p in report(&result, &o.dir, &o.name, &text)? {
                        println!("wrote {}", p.display());
                    }
                }
                None => write_csv(&result, std::io::stdout().lock())?,
            }
        }
        Command::Report { summary, out_dir, name } => {
            let s = load_summary(&summary)?;
            let text = serde_json::to_string(&s.result)?;
            for p in report(&s.result, &out_dir, &name, &text)? {
                println!("wrote {}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if is_config_error(&e) { 1 } else { 2 })
        }
    }
}

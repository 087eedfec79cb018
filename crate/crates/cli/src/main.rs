//! `shadecal`: batch pipeline from chart images to shade predictions.
//!
//! Subcommands: `mask`, `calibrate`, `extract`, `train`, `loocv`, `predict`,
//! `synth`. Every run echoes its fully resolved configuration to stdout and
//! into its output files; all file writes are atomic (temp + rename).
//!
//! Exit codes: 0 success, 1 input/parse error, 2 domain error (empty
//! mask/region, short dataset), 3 quality gate (calibration outlier).

mod commands;
mod config;
mod synth_cmd;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use shadecal::Error as CoreError;

#[derive(Parser)]
#[command(name = "shadecal", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Detect skin pixels and write a 1-bit mask PNG plus a mean-RGB sidecar.
    Mask {
        /// Input RGB image (PNG or JPEG).
        #[arg(long)]
        image: PathBuf,
        /// Output mask PNG; the sidecar lands at `<out>.json`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a calibration profile from a chart image and evaluate it in ΔE76.
    Calibrate {
        #[arg(long)]
        image: PathBuf,
        /// Chart annotation JSON (patch rectangles + gray patch ids).
        #[arg(long)]
        annotation: PathBuf,
        /// Reference table CSV (`patch_id,X,Y,Z`).
        #[arg(long)]
        references: PathBuf,
        /// Output profile JSON; the evaluation report lands at `<out>.report.json`.
        #[arg(long)]
        out: PathBuf,
        /// Mask sidecar JSON whose mean RGB anchors the skin-toned patch set.
        #[arg(long, value_name = "SIDECAR")]
        skin_centroid_from: Option<PathBuf>,
        /// Skin centroid given directly as `R,G,B` device values.
        #[arg(long, conflicts_with = "skin_centroid_from", value_name = "R,G,B")]
        skin_centroid: Option<String>,
        /// Reference white as `X,Y,Z`.
        #[arg(long, default_value = "96.42,100,82.52", value_name = "X,Y,Z")]
        white_point: String,
    },
    /// Calibrate an image and append region colors to a regions CSV.
    Extract {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        profile: PathBuf,
        /// Regions CSV to append to (created when missing).
        #[arg(long)]
        out: PathBuf,
        /// Role of the extracted region.
        #[arg(long)]
        role: String,
        /// Subject id; defaults to the `subject_<id>_...` file-name convention.
        #[arg(long)]
        subject: Option<String>,
        /// Foundation shade code (required for foundation roles).
        #[arg(long)]
        shade: Option<String>,
        /// Source image identifier; defaults to the image file stem.
        #[arg(long)]
        source_id: Option<String>,
        /// Rectangle `x,y,w,h` to average.
        #[arg(long, value_name = "X,Y,W,H")]
        rect: Option<String>,
        /// Region annotation JSON; extracts one region per shade entry.
        #[arg(long, conflicts_with_all = ["rect", "mask"])]
        annotation: Option<PathBuf>,
        /// Use the skin-detection mask as the region.
        #[arg(long, conflicts_with = "rect")]
        mask: bool,
        #[arg(long, default_value = "96.42,100,82.52", value_name = "X,Y,Z")]
        white_point: String,
    },
    /// Train a predictor and write the model JSON.
    Train {
        /// Sample CSV (`subject_id,shade,skin_L,...`).
        #[arg(long, conflicts_with = "regions")]
        dataset: Option<PathBuf>,
        /// Regions CSV to assemble into samples first.
        #[arg(long)]
        regions: Option<PathBuf>,
        /// Model kind: `linear` or `svr`.
        #[arg(long)]
        model: String,
        #[arg(long, default_value_t = 1.0)]
        svr_c: f64,
        #[arg(long, default_value_t = 0.1)]
        svr_eps: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Leave-one-out cross-validation; writes a report JSON and residuals CSV.
    Loocv {
        #[arg(long, conflicts_with = "regions")]
        dataset: Option<PathBuf>,
        #[arg(long)]
        regions: Option<PathBuf>,
        /// Model kind: `linear`, `svr`, or `mean`.
        #[arg(long)]
        model: String,
        #[arg(long, default_value_t = 1.0)]
        svr_c: f64,
        #[arg(long, default_value_t = 0.1)]
        svr_eps: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict a with-foundation Lab triple from a 6-vector input.
    Predict {
        #[arg(long)]
        model: PathBuf,
        /// `skin_L,skin_a,skin_b,fnd_L,fnd_a,fnd_b`
        #[arg(long, value_name = "6 VALUES")]
        input: String,
    },
    /// Generate ground-truth-known synthetic bundles.
    Synth {
        #[command(subcommand)]
        kind: SynthKind,
    },
}

#[derive(Subcommand)]
enum SynthKind {
    /// Chart bundle: image, annotation, reference table, camera truth.
    Chart {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        outdir: PathBuf,
        /// Additive Gaussian noise in device counts.
        #[arg(long, default_value_t = 0.0)]
        noise_sigma: f64,
        /// Override encode gammas: one value or `R,G,B`.
        #[arg(long)]
        gamma: Option<String>,
    },
    /// Prediction dataset CSV with affine-mixing ground truth.
    Dataset {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        outdir: PathBuf,
        #[arg(long, default_value_t = 19)]
        subjects: usize,
        #[arg(long, default_value_t = 63)]
        rows: usize,
        /// Gaussian noise on the mixed targets, in Lab units.
        #[arg(long, default_value_t = 0.5)]
        noise_sigma: f64,
    },
    /// Full bundle: chart, swatch and subject images, extraction manifest.
    Pipeline {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        outdir: PathBuf,
        #[arg(long, default_value_t = 19)]
        subjects: usize,
        #[arg(long, default_value_t = 63)]
        rows: usize,
        #[arg(long, default_value_t = 0.5)]
        noise_sigma: f64,
    },
}

/// An error carrying the process exit code.
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        Self { code: 1, message: message.into() }
    }

    pub fn domain(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }

    pub fn quality_gate(message: impl Into<String>) -> Self {
        Self { code: 3, message: message.into() }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        let code = match &e {
            CoreError::EmptyRegion(_) | CoreError::UnpairedSample { .. } | CoreError::FitFailed(_) => 2,
            _ => 1,
        };
        CliError { code, message: e.to_string() }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Mask { image, out } => commands::mask(image, out),
        Command::Calibrate {
            image,
            annotation,
            references,
            out,
            skin_centroid_from,
            skin_centroid,
            white_point,
        } => commands::calibrate(
            image,
            annotation,
            references,
            out,
            skin_centroid_from,
            skin_centroid,
            &white_point,
        ),
        Command::Extract {
            image,
            profile,
            out,
            role,
            subject,
            shade,
            source_id,
            rect,
            annotation,
            mask,
            white_point,
        } => commands::extract(commands::ExtractArgs {
            image,
            profile,
            out,
            role,
            subject,
            shade,
            source_id,
            rect,
            annotation,
            mask,
            white_point,
        }),
        Command::Train { dataset, regions, model, svr_c, svr_eps, out } => {
            commands::train(dataset, regions, &model, svr_c, svr_eps, out)
        }
        Command::Loocv { dataset, regions, model, svr_c, svr_eps, out } => {
            commands::loocv(dataset, regions, &model, svr_c, svr_eps, out)
        }
        Command::Predict { model, input } => commands::predict(model, &input),
        Command::Synth { kind } => match kind {
            SynthKind::Chart { seed, outdir, noise_sigma, gamma } => {
                synth_cmd::chart(seed, outdir, noise_sigma, gamma.as_deref())
            }
            SynthKind::Dataset { seed, outdir, subjects, rows, noise_sigma } => {
                synth_cmd::dataset(seed, outdir, subjects, rows, noise_sigma)
            }
            SynthKind::Pipeline { seed, outdir, subjects, rows, noise_sigma } => {
                synth_cmd::pipeline(seed, outdir, subjects, rows, noise_sigma)
            }
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

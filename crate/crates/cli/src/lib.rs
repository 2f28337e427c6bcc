//! `de`: generate scenes, encode and decode field stacks, evaluate losses
//! and metrics, benchmark decoding and render skeleton overlays.
//!
//! Exit codes: 0 success, 1 usage error, 2 malformed input, 3 internal
//! error. `de-gen`, `de-loss` and `de-eval` are shorthands for the matching
//! subcommands.

mod commands;
mod config;
mod error;

use std::ffi::OsString;
use std::panic::{self, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "de", version, about = "Double-embedding multi-person pose toolkit")]
pub struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// `coco`, `mpii` or a skeleton JSON file.
    #[arg(long, global = true, value_name = "NAME|FILE")]
    pub skeleton: Option<String>,
    /// Worker threads for batch work (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OnOff {
    On,
    Off,
}

impl OnOff {
    pub fn get(self) -> bool {
        self == OnOff::On
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Trace {
    Hierarchical,
    Basic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Metric {
    Oks,
    Pckh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Pairs {
    Cross,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum JitterTarget {
    Level2,
    All,
}

#[derive(Debug, Args)]
pub struct EncodeFlags {
    /// Gaussian spread of confidence maps.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Regression disk radius.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Input pixels per grid pixel.
    #[arg(long)]
    pub stride: Option<f64>,
}

#[derive(Debug, Args)]
pub struct DecodeFlags {
    /// Mutual refinement after assembly.
    #[arg(long, value_enum, num_args = 0..=1, default_missing_value = "on")]
    pub mrm: Option<OnOff>,
    /// Regression disk radius; also the default match radius.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Gaussian spread the stack was encoded with (recorded in the config,
    /// decoding itself does not depend on it).
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub peak_threshold: Option<f64>,
    #[arg(long)]
    pub match_radius: Option<f64>,
    /// Retry failed hierarchical hops through the center channel.
    #[arg(long, value_enum, num_args = 0..=1, default_missing_value = "on")]
    pub fallback: Option<OnOff>,
    #[arg(long, value_enum)]
    pub trace: Option<Trace>,
    #[arg(long)]
    pub tag_threshold: Option<f64>,
    #[arg(long)]
    pub mrm_threshold: Option<f64>,
    #[arg(long)]
    pub max_persons: Option<usize>,
    /// Input pixels per grid pixel.
    #[arg(long)]
    pub stride: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic scenes as JSON.
    Gen {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Persons per scene.
        #[arg(long, default_value_t = 1)]
        n: usize,
        /// Number of scenes (seeds `seed..seed+count`); more than one
        /// writes a JSON array.
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long, default_value_t = 256)]
        width: usize,
        #[arg(long, default_value_t = 256)]
        height: usize,
        #[arg(long)]
        min_separation: Option<f64>,
        #[arg(long)]
        drop_prob: Option<f64>,
        #[arg(long)]
        scale_min: Option<f64>,
        #[arg(long)]
        scale_max: Option<f64>,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Encode a scene into a DEFS field stack.
    Encode {
        /// Scene JSON (`-` or absent for stdin).
        input: Option<PathBuf>,
        #[command(flatten)]
        enc: EncodeFlags,
        /// Skip the parent-to-child channels used by refinement.
        #[arg(long)]
        no_reverse: bool,
        /// Gaussian jitter (pixels) applied to confidence peaks.
        #[arg(long)]
        jitter: Option<f64>,
        #[arg(long, value_enum)]
        jitter_target: Option<JitterTarget>,
        /// Lower jittered peaks to the clean map's value at their new spot.
        #[arg(long, value_enum)]
        attenuate: Option<OnOff>,
        /// Displacement noise proportional to vector length.
        #[arg(long)]
        disp_noise: Option<f64>,
        #[arg(long)]
        noise_seed: Option<u64>,
        /// Output file (stdout when absent). With several scenes in the
        /// input, a directory receiving `<image_id>.defs`.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Decode DEFS stacks into COCO-style keypoint results.
    Decode {
        /// DEFS files (`-` or none for stdin), decoded in parallel and
        /// reported in input order.
        inputs: Vec<PathBuf>,
        #[command(flatten)]
        dec: DecodeFlags,
        /// Image id of the first input; later inputs count up from it.
        #[arg(long, default_value_t = 0)]
        image_id: u64,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Refine decoded poses against a field stack.
    Refine {
        /// COCO-style results JSON.
        poses: PathBuf,
        stack: PathBuf,
        #[arg(long)]
        mrm_threshold: Option<f64>,
        #[arg(long)]
        stride: Option<f64>,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Loss breakdown between a predicted and a ground-truth stack.
    Loss {
        pred: PathBuf,
        gt: PathBuf,
        /// Ground-truth scene; without it persons are recovered by decoding
        /// the ground-truth stack.
        #[arg(long)]
        scene: Option<PathBuf>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        sigma_tag: Option<f64>,
        #[arg(long, value_enum)]
        push: Option<Pairs>,
        /// Restrict the displacement loss to ground-truth disks.
        #[arg(long, value_enum)]
        d_mask: Option<OnOff>,
        #[command(flatten)]
        enc: EncodeFlags,
    },
    /// Evaluate COCO-style results against ground-truth scenes.
    Eval {
        preds: PathBuf,
        gts: PathBuf,
        #[arg(long, value_enum, default_value = "oks")]
        metric: Metric,
        /// PCKh threshold factor.
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Decode throughput on generated scenes.
    Bench {
        #[arg(long, default_value_t = 32)]
        images: usize,
        #[arg(long, default_value_t = 4)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 256)]
        size: usize,
        #[command(flatten)]
        dec: DecodeFlags,
    },
    /// Draw skeletons from a scene or results file as a PPM image.
    Render {
        input: PathBuf,
        /// Field stack whose confidence maps form the background.
        #[arg(long)]
        stack: Option<PathBuf>,
        /// Only draw results with this image id.
        #[arg(long)]
        image_id: Option<u64>,
        #[arg(long)]
        width: Option<usize>,
        #[arg(long)]
        height: Option<usize>,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

/// Runs the CLI on the process arguments. With `subcommand` set, the
/// arguments are parsed as if they followed `de <subcommand>`.
pub fn main_with(subcommand: Option<&str>) -> ExitCode {
    let mut args: Vec<OsString> = std::env::args_os().collect();
    if let Some(sub) = subcommand {
        args.splice(0..args.len().min(1), [OsString::from("de"), OsString::from(sub)]);
    }
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    panic::set_hook(Box::new(|info| eprintln!("internal error: {info}")));
    match panic::catch_unwind(AssertUnwindSafe(|| commands::run(cli))) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("de: {e}");
            e.exit_code()
        }
        Err(_) => CliError::Internal("panic".into()).exit_code(),
    }
}

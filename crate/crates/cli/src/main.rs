//! `selanchor`: batch tools for rotated-box targets, decoding, and
//! evaluation.
//!
//! Results go to standard output, diagnostics to standard error. Exit
//! status is 0 on success, 1 for input or parse errors, and 2 when a
//! parameter violates its allowed range.

mod commands;
mod error;
mod inputs;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use selanchor::decode::{DEFAULT_NMS_IOU, DEFAULT_T_A};
use selanchor::formats::GtFormat;
use selanchor::targets::DEFAULT_K;

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "selanchor",
    version,
    about = "Rotated-box target generation, decoding, and evaluation"
)]
struct Cli {
    /// Worker threads for per-image work (0 uses every core).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Precision, recall, and F-measure of detections against ground truth.
    Evaluate(EvaluateArgs),
    /// Recall of the top-N proposals per image at several IoU levels.
    ProposalRecall(RecallArgs),
    /// Location, orientation, and shape target maps for every image.
    Labelgen(LabelgenArgs),
    /// Proposals from serialized prediction maps.
    Decode(DecodeArgs),
    /// Polygon NMS over a detection file.
    Nms(NmsArgs),
    /// Exact and sampled IoU of two inline boxes.
    Iou(IouArgs),
    /// Rewrites a ground-truth file in another format.
    Convert(ConvertArgs),
}

fn parse_format(s: &str) -> Result<GtFormat, String> {
    s.parse().map_err(|e: selanchor::Error| e.to_string())
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Detection file, one `image_id cx cy w h theta score` line per box.
    #[arg(long)]
    detections: PathBuf,
    /// Directory of ground-truth files, one per image.
    #[arg(long)]
    gt: PathBuf,
    #[arg(long, value_parser = parse_format, default_value = "icdar15")]
    gt_format: GtFormat,
    /// Matching thresholds; one table row each.
    #[arg(long, value_delimiter = ',', default_value = "0.5")]
    iou_threshold: Vec<f64>,
    /// Machine-readable report with four decimals.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RecallArgs {
    /// Proposal file in the detection format.
    #[arg(long)]
    proposals: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[arg(long, value_parser = parse_format, default_value = "icdar15")]
    gt_format: GtFormat,
    #[arg(long, value_delimiter = ',', default_value = "50,100,300")]
    top_n: Vec<usize>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct LabelgenArgs {
    #[arg(long)]
    gt: PathBuf,
    #[arg(long, value_parser = parse_format, default_value = "icdar15")]
    gt_format: GtFormat,
    /// Image size as `WxH`, shared by every image.
    #[arg(long, value_parser = inputs::parse_size)]
    image_size: (u32, u32),
    /// Shrink scales of the positive region.
    #[arg(long, value_delimiter = ',', num_args = 1, default_value = "0.4,0.5")]
    sigma: Vec<f64>,
    #[arg(long, default_value_t = DEFAULT_K)]
    k: f64,
    #[arg(long, value_delimiter = ',', default_value = "4,8,16,32")]
    strides: Vec<u32>,
    #[arg(long, value_delimiter = ',', default_value = "8,16,32,64")]
    scales: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,4")]
    ratios: Vec<f64>,
    /// Extra ratios sampled on strides 4 and 8.
    #[arg(long, value_delimiter = ',', default_value = "3,5,7")]
    long_ratios: Vec<f64>,
    /// Directory receiving `<image>_s<stride>.satm` files.
    #[arg(long)]
    output: PathBuf,
    /// Also write the matching ideal prediction maps as `.sapm` files.
    #[arg(long)]
    ideal: bool,
}

#[derive(Debug, Args)]
struct DecodeArgs {
    /// A `.sapm` file or a directory of them, named `<image>_s<stride>.sapm`.
    #[arg(long)]
    maps: PathBuf,
    #[arg(long, default_value_t = DEFAULT_T_A)]
    t_a: f64,
    /// Keep at most this many proposals per image, best first.
    #[arg(long)]
    top_n: Option<usize>,
    /// Apply polygon NMS per image.
    #[arg(long)]
    nms: bool,
    #[arg(long, default_value_t = DEFAULT_NMS_IOU)]
    nms_iou: f64,
    /// Detection file to write.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct NmsArgs {
    #[arg(long)]
    detections: PathBuf,
    #[arg(long, default_value_t = DEFAULT_NMS_IOU)]
    nms_iou: f64,
    /// Write here instead of standard output.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct IouArgs {
    /// First box as `cx,cy,w,h,theta`.
    #[arg(allow_hyphen_values = true)]
    a: String,
    /// Second box as `cx,cy,w,h,theta`.
    #[arg(allow_hyphen_values = true)]
    b: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Monte-Carlo samples for the sampled estimate.
    #[arg(long, default_value_t = 1_000_000)]
    samples: usize,
}

#[derive(Debug, Args)]
struct ConvertArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_parser = parse_format)]
    gt_format: GtFormat,
    #[arg(long, value_parser = parse_format)]
    to_format: GtFormat,
    #[arg(long)]
    output: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
        .map_err(|e| CliError::Invariant(format!("cannot start {} worker threads: {e}", cli.threads)))?;

    match cli.command {
        Command::Evaluate(a) => {
            commands::evaluate::evaluate(&a.detections, &a.gt, a.gt_format, &a.iou_threshold, a.output.as_deref())
        }
        Command::ProposalRecall(a) => {
            commands::evaluate::proposal_recall(&a.proposals, &a.gt, a.gt_format, &a.top_n, a.output.as_deref())
        }
        Command::Labelgen(a) => {
            let [s1, s2] = a.sigma[..] else {
                return Err(CliError::Invariant(format!(
                    "--sigma takes two values, got {}",
                    a.sigma.len()
                )));
            };
            commands::labelgen::labelgen(&commands::labelgen::LabelgenConfig {
                gt: a.gt,
                gt_format: a.gt_format,
                image_size: a.image_size,
                sigma: (s1, s2),
                k: a.k,
                strides: a.strides,
                scales: a.scales,
                ratios: a.ratios,
                long_ratios: a.long_ratios,
                output: a.output,
                ideal: a.ideal,
            })
        }
        Command::Decode(a) => commands::decode::decode(&a.maps, a.t_a, a.top_n, a.nms.then_some(a.nms_iou), &a.output),
        Command::Nms(a) => commands::utils::nms(&a.detections, a.nms_iou, a.output.as_deref()),
        Command::Iou(a) => commands::utils::iou(&a.a, &a.b, a.samples, a.seed),
        Command::Convert(a) => commands::utils::convert(&a.input, a.gt_format, a.to_format, a.output.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // help and version requests are not failures
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            if let CliError::Parse(lines) = &err {
                for l in lines {
                    eprintln!("{l}");
                }
            }
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

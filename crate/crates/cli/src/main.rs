//! `emseg`: command-line front end for patching, reconstruction, test-time
//! augmentation, post-processing, evaluation and search-space sampling.

mod commands;
mod failure;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use failure::Failure;

#[derive(Parser, Debug)]
#[command(name = "emseg", version, about = "Patch-based EM segmentation tooling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Text,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum EvalMode {
    PerPatch,
    MosaicImage,
    Overlap50Image,
    FullImage,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Unit {
    Slice,
    Volume,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum ReconMode {
    Mosaic,
    Overlap50,
    Blend,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum OverlapArg {
    None,
    Half,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum FootprintArg {
    Slice,
    Cube,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum OrderArg {
    /// Threshold, then filter the labels.
    BinarizeFirst,
    /// Filter the probabilities, then threshold.
    FilterFirst,
    /// Filter the probabilities and write them unthresholded.
    Probabilities,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Score a prediction against ground truth and print an IoU report.
    Eval {
        /// Prediction EMVOL file, or a patch directory for the patch modes.
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        #[arg(long, value_enum, default_value = "full-image")]
        mode: EvalMode,
        /// Patch layout JSON; defaults to `layout.json` inside the patch directory.
        #[arg(long)]
        layout: Option<PathBuf>,
        /// Score each z-slice separately (2D) or the whole volume (3D).
        #[arg(long, value_enum, default_value = "slice")]
        unit: Unit,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rebuild a full volume from a patch directory.
    Reconstruct {
        #[arg(long)]
        patches_dir: PathBuf,
        #[arg(long)]
        layout: Option<PathBuf>,
        #[arg(long, value_enum)]
        mode: ReconMode,
        #[arg(long)]
        out: PathBuf,
        /// Print the largest absolute difference to this volume.
        #[arg(long)]
        compare: Option<PathBuf>,
    },
    /// Average an external predictor over the flip/rotation group.
    Tta {
        #[arg(long = "in")]
        input: PathBuf,
        /// Shell command; the input and output EMVOL paths are appended.
        #[arg(long)]
        cmd: String,
        #[arg(long, value_parser = clap::value_parser!(u8).range(2..=3))]
        dim: u8,
        #[arg(long)]
        out: PathBuf,
        /// Per-branch limit in seconds.
        #[arg(long, default_value_t = 3600)]
        timeout: u64,
    },
    /// Median filter along z.
    Medianz {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        window: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        #[arg(long, value_enum, default_value = "binarize-first")]
        order: OrderArg,
    },
    /// IoU of the dilated and eroded ground truth against itself.
    PerturbGt {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, default_value_t = 1)]
        radius: usize,
        #[arg(long, value_enum, default_value = "slice")]
        footprint: FootprintArg,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
    /// Cut a volume (and its labels) into patches.
    Extract {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        gt: Option<PathBuf>,
        /// Patch shape, e.g. `256x256` or `80x80x80`.
        #[arg(long)]
        patch: String,
        #[arg(long, value_enum, default_value = "none")]
        overlap: OverlapArg,
        /// Drop patches whose label foreground fraction is below this value.
        #[arg(long)]
        discard_fg: Option<f64>,
        /// Sample patch centers with this foreground mass instead of tiling.
        #[arg(long)]
        prob_fg: Option<f64>,
        /// Number of sampled patches (with `--prob-fg`).
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Draw one configuration from a search-space file, or list the grid.
    SampleConfig {
        #[arg(long)]
        space: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Print every grid point as one JSON object per line.
        #[arg(long)]
        grid: bool,
        /// Refuse grids with more points than this.
        #[arg(long, default_value_t = 1_000_000)]
        max_points: u128,
        /// Output format of a single draw.
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Check that every value of a configuration lies in a search space.
    CheckConfig {
        #[arg(long)]
        space: PathBuf,
        #[arg(long)]
        config: PathBuf,
    },
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("EMSEG_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::usage("InvalidThreads", format!("EMSEG_THREADS must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::usage("InvalidThreads", e.to_string()))
}

fn run(cli: Cli) -> Result<(), Failure> {
    configure_threads()?;
    match cli.command {
        Command::Eval {
            pred,
            gt,
            threshold,
            mode,
            layout,
            unit,
            format,
            out,
        } => commands::eval(&pred, &gt, threshold, mode, layout.as_deref(), unit, format, out.as_deref()),
        Command::Reconstruct {
            patches_dir,
            layout,
            mode,
            out,
            compare,
        } => commands::reconstruct(&patches_dir, layout.as_deref(), mode, &out, compare.as_deref()),
        Command::Tta {
            input,
            cmd,
            dim,
            out,
            timeout,
        } => commands::tta(&input, &cmd, dim, &out, timeout),
        Command::Medianz {
            input,
            window,
            out,
            threshold,
            order,
        } => commands::medianz(&input, window, &out, threshold, order),
        Command::PerturbGt {
            gt,
            radius,
            footprint,
            format,
        } => commands::perturb_gt(&gt, radius, footprint, format),
        Command::Extract {
            input,
            gt,
            patch,
            overlap,
            discard_fg,
            prob_fg,
            n,
            seed,
            out_dir,
        } => commands::extract(&commands::ExtractArgs {
            input,
            gt,
            patch,
            overlap,
            discard_fg,
            prob_fg,
            n,
            seed,
            out_dir,
        }),
        Command::SampleConfig {
            space,
            seed,
            grid,
            max_points,
            format,
        } => commands::sample_config(&space, seed, grid.then_some(max_points), format),
        Command::CheckConfig { space, config } => commands::check_config(&space, &config),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error[{}]: {}", f.name, f.message);
            ExitCode::from(f.code)
        }
    }
}

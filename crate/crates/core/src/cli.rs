//! `hgprune` command-line front end.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 2 | usage or invalid configuration |
//! | 3 | I/O failure or unreadable input file |
//! | 4 | points do not match the stream's encoder-side points |
//! | 5 | corrupt bitstream |
//! | 6 | verification failed |

use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::codec::{decode_grid, encode_with_mask, PrunedBitstream, QuantParams};
use crate::error::Error;
use crate::grid::{BoundingBox, GridConfig, PointSet};
use crate::io::{load_grid, load_points, save_grid, save_points, ReportFormat, RunReport};
use crate::prune::{compute_validity, ValidityMask};
use crate::synth::{random_grid, SynthSpec};
use crate::verify::verify_decoded;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_POSITION_MISMATCH: i32 = 4;
pub const EXIT_CORRUPTION: i32 = 5;
pub const EXIT_VERIFY_FAILED: i32 = 6;

pub const DEFAULT_LEVELS: usize = 8;
pub const DEFAULT_BASE_RESOLUTION: u32 = 16;
pub const DEFAULT_MAX_RESOLUTION: u32 = 512;
pub const DEFAULT_TABLE_SIZE: u32 = 1 << 13;
pub const DEFAULT_FEATURE_DIM: usize = 2;
pub const DEFAULT_QUANT_STEP: f64 = 1.0 / 256.0;

#[derive(Debug, Parser)]
#[command(name = "hgprune", version, about = "Prune and code hash-grid features for fixed query points")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Prune a grid against a point set and write the bitstream.
    Encode(EncodeArgs),
    /// Rebuild a full grid from a bitstream and the same point set.
    Decode(DecodeArgs),
    /// Check that a bitstream decodes to an inference-equivalent grid.
    Verify(VerifyArgs),
    /// Report per-level valid ratios for a point set.
    Stats(StatsArgs),
    /// Generate a clustered synthetic point set (and optionally a grid).
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    #[arg(long)]
    pub points: PathBuf,
    #[arg(long)]
    pub grid: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// TOML file; only `bbox` and `quant_step` are read here.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, conflicts_with = "raw")]
    pub quant_step: Option<f64>,
    /// Store valid features as raw f32 instead of entropy coding them.
    #[arg(long)]
    pub raw: bool,
    #[arg(long, value_enum, default_value = "text")]
    pub report: ReportFormat,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    #[arg(long)]
    pub stream: PathBuf,
    #[arg(long)]
    pub points: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub grid: PathBuf,
    #[arg(long)]
    pub points: PathBuf,
    #[arg(long)]
    pub stream: PathBuf,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub points: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "text")]
    pub report: ReportFormat,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub dims: usize,
    #[arg(long, default_value_t = 1000)]
    pub count: usize,
    #[arg(long, default_value_t = 1)]
    pub clusters: usize,
    /// Cluster standard deviation as a fraction of the box extent.
    #[arg(long, default_value_t = 0.05)]
    pub std: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write a grid with seeded uniform features in [-1, 1].
    #[arg(long)]
    pub grid: Option<PathBuf>,
    /// Grid shape and bounding box; defaults apply to missing fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Bounding box section of a config file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxConfig {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

/// Config file contents. Every field is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub levels: Option<usize>,
    pub base_resolution: Option<u32>,
    pub max_resolution: Option<u32>,
    /// Explicit per-level resolutions; overrides the geometric fields.
    pub resolutions: Option<Vec<u32>>,
    pub table_size: Option<u32>,
    pub feature_dim: Option<usize>,
    pub primes: Option<Vec<u32>>,
    pub quant_step: Option<f64>,
    pub bbox: Option<BoxConfig>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::new(EXIT_IO, format!("{}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| CliError::new(EXIT_USAGE, format!("{}: {e}", path.display())))
    }

    pub fn grid_config(&self, dims: usize) -> crate::Result<GridConfig> {
        let table_size = self.table_size.unwrap_or(DEFAULT_TABLE_SIZE);
        let feature_dim = self.feature_dim.unwrap_or(DEFAULT_FEATURE_DIM);
        let config = match &self.resolutions {
            Some(r) => GridConfig::new(dims, r.clone(), table_size, feature_dim)?,
            None => GridConfig::geometric(
                dims,
                self.levels.unwrap_or(DEFAULT_LEVELS),
                self.base_resolution.unwrap_or(DEFAULT_BASE_RESOLUTION),
                self.max_resolution.unwrap_or(DEFAULT_MAX_RESOLUTION),
                table_size,
                feature_dim,
            )?,
        };
        match &self.primes {
            Some(p) => config.with_primes(p),
            None => Ok(config),
        }
    }

    /// Configured box, or the points' extent with zero-width axes widened by
    /// half a unit each way.
    pub fn bbox_for(&self, points: &PointSet) -> crate::Result<BoundingBox> {
        if let Some(b) = &self.bbox {
            return BoundingBox::new(&b.min, &b.max);
        }
        BoundingBox::enclosing_padded(points, 0.5)
    }
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn new(code: i32, message: impl Into<String>) -> Self {
        CliError {
            code,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

fn input_error(path: &Path, e: Error) -> CliError {
    let code = match e {
        Error::Config(_) | Error::DegenerateBox { .. } | Error::QuantStep(_) => EXIT_USAGE,
        _ => EXIT_IO,
    };
    CliError::new(code, format!("{}: {e}", path.display()))
}

fn usage(e: Error) -> CliError {
    CliError::new(EXIT_USAGE, e.to_string())
}

fn stream_error(e: Error) -> CliError {
    let code = match e {
        Error::PositionMismatch { .. }
        | Error::OutOfBounds { .. }
        | Error::DimensionMismatch { .. } => EXIT_POSITION_MISMATCH,
        Error::Io(_) => EXIT_IO,
        ref e if e.is_corruption() => EXIT_CORRUPTION,
        _ => EXIT_USAGE,
    };
    CliError::new(code, e.to_string())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::new(EXIT_IO, format!("{}: {e}", path.display())))
}

fn read_stream(path: &Path) -> Result<PrunedBitstream, CliError> {
    let bytes =
        fs::read(path).map_err(|e| CliError::new(EXIT_IO, format!("{}: {e}", path.display())))?;
    PrunedBitstream::from_bytes(&bytes).map_err(stream_error)
}

fn load_config(path: Option<&Path>) -> Result<ConfigFile, CliError> {
    path.map(ConfigFile::load).transpose().map(Option::unwrap_or_default)
}

/// Encodes and returns the report; the stream is written to `args.out`.
pub fn cmd_encode(args: &EncodeArgs) -> Result<RunReport, CliError> {
    let file = load_config(args.config.as_deref())?;
    let points = load_points(&args.points).map_err(|e| input_error(&args.points, e))?;
    let grid = load_grid(&args.grid).map_err(|e| input_error(&args.grid, e))?;
    let params = if args.raw {
        QuantParams::raw()
    } else {
        let step = args
            .quant_step
            .or(file.quant_step)
            .unwrap_or(DEFAULT_QUANT_STEP);
        QuantParams::quantized(step).map_err(usage)?
    };
    let bbox = file.bbox_for(&points).map_err(usage)?;
    let config = grid.config();
    let mask = compute_validity(&points, config, &bbox).map_err(usage)?;
    let pruned = encode_with_mask(&grid, &mask, &bbox, params).map_err(usage)?;
    let unpruned =
        encode_with_mask(&grid, &ValidityMask::full(config), &bbox, params).map_err(usage)?;
    let sizes = |s: &PrunedBitstream| -> Vec<u64> {
        (0..config.levels()).map(|l| s.payload(l).len() as u64).collect()
    };
    let report = RunReport::new(config, &mask, &sizes(&unpruned), &sizes(&pruned))
        .map_err(usage)?
        .with_stream_sizes(unpruned.encoded_len() as u64, pruned.encoded_len() as u64);
    write_file(&args.out, &pruned.to_bytes())?;
    Ok(report)
}

pub fn cmd_decode(args: &DecodeArgs) -> Result<(), CliError> {
    let stream = read_stream(&args.stream)?;
    let points = load_points(&args.points).map_err(|e| input_error(&args.points, e))?;
    let grid = decode_grid(&stream, &points).map_err(stream_error)?;
    save_grid(&grid, &args.out).map_err(|e| input_error(&args.out, e))
}

/// Returns the maximum absolute deviation on success.
pub fn cmd_verify(args: &VerifyArgs) -> Result<f64, CliError> {
    let stream = read_stream(&args.stream)?;
    let points = load_points(&args.points).map_err(|e| input_error(&args.points, e))?;
    let original = load_grid(&args.grid).map_err(|e| input_error(&args.grid, e))?;
    let header = stream.header();
    if original.config() != &header.config {
        return Err(CliError::new(
            EXIT_VERIFY_FAILED,
            "FAIL: grid config differs from the stream header",
        ));
    }
    let decoded = decode_grid(&stream, &points).map_err(stream_error)?;
    let outcome = verify_decoded(&original, &decoded, &points, &header.bbox, &header.quant)
        .map_err(stream_error)?;
    match outcome.failure {
        None => Ok(outcome.max_abs_deviation),
        Some(f) => Err(CliError::new(
            EXIT_VERIFY_FAILED,
            format!(
                "FAIL: {f}; max abs deviation {:e}",
                outcome.max_abs_deviation
            ),
        )),
    }
}

pub fn cmd_stats(args: &StatsArgs) -> Result<RunReport, CliError> {
    let file = load_config(args.config.as_deref())?;
    let points = load_points(&args.points).map_err(|e| input_error(&args.points, e))?;
    let config = file.grid_config(points.dims()).map_err(usage)?;
    let bbox = file.bbox_for(&points).map_err(usage)?;
    let mask = compute_validity(&points, &config, &bbox).map_err(usage)?;
    RunReport::from_storage(&config, &mask).map_err(usage)
}

pub fn cmd_synth(args: &SynthArgs) -> Result<(), CliError> {
    let file = load_config(args.config.as_deref())?;
    let bbox = match &file.bbox {
        Some(b) => BoundingBox::new(&b.min, &b.max).map_err(usage)?,
        None => BoundingBox::new(&vec![0.0; args.dims], &vec![1.0; args.dims]).map_err(usage)?,
    };
    let spec = SynthSpec {
        dims: args.dims,
        n_points: args.count,
        n_clusters: args.clusters,
        cluster_std: args.std,
        seed: args.seed,
        bbox,
    };
    let points = spec.generate().map_err(usage)?;
    save_points(&points, &args.out).map_err(|e| input_error(&args.out, e))?;
    if let Some(path) = &args.grid {
        let config = file.grid_config(args.dims).map_err(usage)?;
        save_grid(&random_grid(&config, args.seed), path).map_err(|e| input_error(path, e))?;
    }
    Ok(())
}

/// Parses `args` and runs the selected command, returning the exit code.
pub fn run<I, T>(args: I, stdout: &mut impl Write, stderr: &mut impl Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = if e.use_stderr() {
                write!(stderr, "{e}")
            } else {
                write!(stdout, "{e}")
            };
            return code;
        }
    };
    let result = match &cli.command {
        Command::Encode(a) => cmd_encode(a).map(|r| r.render(a.report)),
        Command::Decode(a) => cmd_decode(a).map(|()| String::new()),
        Command::Verify(a) => cmd_verify(a).map(|d| format!("PASS: max abs deviation {d}\n")),
        Command::Stats(a) => cmd_stats(a).map(|r| r.render(a.report)),
        Command::Synth(a) => cmd_synth(a).map(|()| String::new()),
    };
    match result {
        Ok(text) => {
            let _ = stdout.write_all(text.as_bytes());
            EXIT_OK
        }
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.code
        }
    }
}

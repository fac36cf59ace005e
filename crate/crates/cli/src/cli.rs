//! Argument parsing and the subcommands.

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use illumap::bench::{
    illuminant_pair, param_sweep, run_benchmark, write_synthetic_manifest, Blend, Manifest,
    SynthConfig,
};
use illumap::{Confidence, Error, EstimatorId, IllusionSpec, Mode};

use crate::ops::{self, EstimateOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_NO_INPUT: i32 = 2;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_DATA: i32 = 65;

#[derive(Debug, Parser)]
#[command(
    name = "illumap",
    version,
    about = "Pixel-wise illuminant estimation, illusions and benchmarks"
)]
pub struct Cli {
    /// Suppress progress messages on stderr.
    #[arg(short, long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate the illuminant field of an image and correct it.
    Estimate(EstimateArgs),
    /// Render a color-assimilation stimulus, optionally processing it.
    Illusion(IllusionArgs),
    /// Score the estimator over a dataset manifest.
    Benchmark(BenchmarkArgs),
    /// Mean pixel-wise error over a grid of block sizes and sigmas.
    Sweep(SweepArgs),
    /// Write a synthetic two-illuminant dataset and its manifest.
    Synth(SynthArgs),
    /// Serve the HTTP API (and optionally a static UI bundle).
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// Estimator, e.g. gray-world, white-patch, shades-of-gray:p=6, gray-edge:p=6,sigma=1.
    #[arg(long, default_value = "gray-world")]
    pub algo: EstimatorId,
    /// Block side in pixels.
    #[arg(long, default_value_t = illumap::spatial::DEFAULT_BETA)]
    pub block: usize,
    /// Interpolation sigma in pixels.
    #[arg(long, default_value_t = illumap::spatial::DEFAULT_SIGMA)]
    pub sigma: f64,
    /// off | whiteness
    #[arg(long, default_value = "off")]
    pub confidence: Confidence,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long = "in", value_name = "PNG")]
    pub input: PathBuf,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// pixelwise | global
    #[arg(long, default_value = "pixelwise")]
    pub mode: Mode,
    /// Input is sRGB-encoded; the corrected image is written as 8-bit sRGB.
    #[arg(long)]
    pub srgb: bool,
    #[arg(long, value_name = "PNG")]
    pub out_field: Option<PathBuf>,
    #[arg(long, value_name = "PNG")]
    pub out_corrected: Option<PathBuf>,
    /// Metadata JSON; printed to stdout when no output is requested.
    #[arg(long, value_name = "JSON")]
    pub out_meta: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IllusionArgs {
    /// Spec JSON; the default stripe grating when omitted.
    #[arg(long, value_name = "JSON")]
    pub spec: Option<PathBuf>,
    #[arg(long, value_name = "PNG")]
    pub out: PathBuf,
    /// Paint everything but the targets in the background color.
    #[arg(long)]
    pub target_only: bool,
    /// Write 8-bit sRGB images instead of 16-bit linear.
    #[arg(long)]
    pub srgb: bool,
    /// Also write the effective spec.
    #[arg(long, value_name = "JSON")]
    pub emit_spec: Option<PathBuf>,
    /// Run the pixel-wise pipeline on the stimulus and report target shifts.
    #[arg(long)]
    pub process: bool,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// Shift report (default: <out>_shift.json).
    #[arg(long, value_name = "JSON")]
    pub report: Option<PathBuf>,
    /// Corrected stimulus (default: <out>_corrected.png).
    #[arg(long, value_name = "PNG")]
    pub out_corrected: Option<PathBuf>,
    /// Rendered estimates (default: <out>_estimates.png).
    #[arg(long, value_name = "PNG")]
    pub out_estimates: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    #[arg(long, value_name = "JSON")]
    pub manifest: PathBuf,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    #[arg(long, default_value = "pixelwise")]
    pub mode: Mode,
    /// Report JSON; printed to stdout when omitted.
    #[arg(long, value_name = "JSON")]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, value_name = "JSON")]
    pub manifest: PathBuf,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "4,8,12,16,20,24,28,32,48"
    )]
    pub betas: Vec<usize>,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "2,4,8,12,16,20,24,28,32,48"
    )]
    pub sigmas: Vec<f64>,
    #[arg(long, default_value = "gray-world")]
    pub algo: EstimatorId,
    /// CSV; printed to stdout when omitted.
    #[arg(long, value_name = "CSV")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BlendArg {
    HalfSplit,
    LinearRamp,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_name = "DIR")]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub count: u64,
    /// Seed of the first scene; scene i uses seed + i.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 256)]
    pub size: usize,
    #[arg(long, value_enum, default_value = "half-split")]
    pub blend: BlendArg,
    /// Minimum angle between the two illuminants, degrees.
    #[arg(long, default_value_t = 20.0)]
    pub min_angle: f64,
    #[arg(long, default_value_t = 40.0)]
    pub max_angle: f64,
    #[arg(long, default_value = "synthetic")]
    pub name: String,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// Directory with the built UI bundle.
    #[arg(long = "static", value_name = "DIR")]
    pub static_dir: Option<PathBuf>,
    /// Largest accepted image side.
    #[arg(long, default_value_t = crate::serve::DEFAULT_MAX_SIDE)]
    pub max_side: usize,
    /// Seconds a result artifact stays downloadable.
    #[arg(long, default_value_t = 600)]
    pub artifact_ttl: u64,
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn new(code: i32, message: impl Into<String>) -> Self {
        Self {
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

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Config(_) => EXIT_USAGE,
            Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => {
                EXIT_NO_INPUT
            }
            Error::Format(_) | Error::Schema { .. } | Error::DegenerateSpec(_) => EXIT_DATA,
            _ => EXIT_FAILURE,
        };
        CliError::new(code, e.to_string())
    }
}

type CliResult<T = ()> = std::result::Result<T, CliError>;

fn usage(e: Error) -> CliError {
    CliError::new(EXIT_USAGE, e.to_string())
}

fn read_input(path: &Path) -> CliResult<Vec<u8>> {
    std::fs::read(path).map_err(|e| {
        CliError::new(
            EXIT_NO_INPUT,
            format!("cannot read {}: {e}", path.display()),
        )
    })
}

fn write_output(path: &Path, bytes: &[u8]) -> CliResult {
    std::fs::write(path, bytes).map_err(|e| {
        CliError::new(
            EXIT_FAILURE,
            format!("cannot write {}: {e}", path.display()),
        )
    })
}

fn to_json<T: serde::Serialize>(value: &T) -> Vec<u8> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    text.into_bytes()
}

/// `<dir>/<stem><suffix>` next to `path`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

impl PipelineArgs {
    fn options(&self, mode: Mode, srgb: bool) -> CliResult<EstimateOptions> {
        let opts = EstimateOptions {
            beta: self.block,
            sigma: self.sigma,
            estimator: self.algo,
            confidence: self.confidence,
            mode,
            srgb,
        };
        opts.validate().map_err(usage)?;
        Ok(opts)
    }
}

struct Log {
    quiet: bool,
}

impl Log {
    fn info(&self, msg: impl fmt::Display) {
        if !self.quiet {
            eprintln!("{msg}");
        }
    }
}

fn cmd_estimate(args: &EstimateArgs, log: &Log) -> CliResult {
    let opts = args.pipeline.options(args.mode, args.srgb)?;
    let bytes = read_input(&args.input)?;
    let out = ops::estimate_png(&bytes, &opts)?;
    let meta_json = to_json(&out.meta);
    let requested =
        args.out_field.is_some() || args.out_corrected.is_some() || args.out_meta.is_some();
    if let Some(path) = &args.out_field {
        match &out.field_png {
            Some(png) => write_output(path, png)?,
            None => log.info("global mode produces no field; --out-field ignored"),
        }
    }
    if let Some(path) = &args.out_corrected {
        write_output(path, &out.corrected_png)?;
    }
    if let Some(path) = &args.out_meta {
        write_output(path, &meta_json)?;
    }
    if !requested {
        print!("{}", String::from_utf8_lossy(&meta_json));
    }
    let g = out.meta.global_estimate;
    log.info(format_args!(
        "global estimate ({:.4}, {:.4}, {:.4}); {} degenerate blocks",
        g[0], g[1], g[2], out.meta.flags.degenerate_blocks
    ));
    Ok(())
}

fn load_spec(path: Option<&Path>) -> CliResult<IllusionSpec> {
    match path {
        None => Ok(IllusionSpec::default()),
        Some(p) => {
            let bytes = read_input(p)?;
            let text = String::from_utf8(bytes)
                .map_err(|_| CliError::new(EXIT_DATA, format!("{} is not UTF-8", p.display())))?;
            Ok(ops::parse_spec(&text)?)
        }
    }
}

fn cmd_illusion(args: &IllusionArgs, log: &Log) -> CliResult {
    let spec = load_spec(args.spec.as_deref())?;
    let opts = if args.process {
        Some(args.pipeline.options(Mode::Pixelwise, args.srgb)?)
    } else {
        None
    };
    write_output(
        &args.out,
        &ops::render_illusion(&spec, args.target_only, args.srgb)?,
    )?;
    if let Some(path) = &args.emit_spec {
        write_output(path, &to_json(&spec))?;
    }
    let Some(opts) = opts else {
        return Ok(());
    };
    let out = ops::run_illusion(&spec, &opts)?;
    let corrected = args
        .out_corrected
        .clone()
        .unwrap_or_else(|| sibling(&args.out, "_corrected.png"));
    let estimates = args
        .out_estimates
        .clone()
        .unwrap_or_else(|| sibling(&args.out, "_estimates.png"));
    let report = args
        .report
        .clone()
        .unwrap_or_else(|| sibling(&args.out, "_shift.json"));
    write_output(&corrected, &out.corrected_png)?;
    write_output(&estimates, &out.estimates_png)?;
    write_output(&report, &to_json(&out.shift))?;
    log.info(format_args!(
        "{} target regions, mean shift {:.3} deg, min {:.3} deg",
        out.shift.regions.len(),
        out.shift.mean_delta,
        out.shift.min_delta
    ));
    Ok(())
}

fn load_manifest(path: &Path) -> CliResult<Manifest> {
    if !path.exists() {
        return Err(CliError::new(
            EXIT_NO_INPUT,
            format!("manifest {} not found", path.display()),
        ));
    }
    Ok(Manifest::load(path)?)
}

fn cmd_benchmark(args: &BenchmarkArgs, log: &Log) -> CliResult {
    let opts = args.pipeline.options(args.mode, false)?;
    let manifest = load_manifest(&args.manifest)?;
    let report = run_benchmark(&manifest, &opts.params(), args.mode)?;
    match &args.report {
        Some(path) => write_output(path, &to_json(&report))?,
        None => print!("{}", String::from_utf8_lossy(&to_json(&report))),
    }
    for e in report.entries.iter().filter(|e| e.error.is_some()) {
        log.info(format_args!(
            "skipped {}: {}",
            e.image.display(),
            e.error.as_deref().unwrap_or("")
        ));
    }
    let a = report.aggregate;
    log.info(format_args!(
        "{} entries: mean {:.3}, median {:.3}, best25 {:.3}, worst25 {:.3}, max {:.3} deg",
        a.count, a.mean, a.median, a.best25_mean, a.worst25_mean, a.max
    ));
    Ok(())
}

fn cmd_sweep(args: &SweepArgs, log: &Log) -> CliResult {
    if let Some(b) = args.betas.iter().find(|b| **b < 2) {
        return Err(CliError::new(
            EXIT_USAGE,
            format!("block sizes must be >= 2, got {b}"),
        ));
    }
    if let Some(s) = args.sigmas.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
        return Err(CliError::new(
            EXIT_USAGE,
            format!("sigmas must be positive, got {s}"),
        ));
    }
    let manifest = load_manifest(&args.manifest)?;
    log.info(format_args!(
        "sweeping {}x{} cells over {} entries",
        args.betas.len(),
        args.sigmas.len(),
        manifest.entries.len()
    ));
    let grid = param_sweep(&manifest, &args.betas, &args.sigmas, args.algo)?;
    match &args.out {
        Some(path) => grid.save_csv(path)?,
        None => grid.write_csv(std::io::stdout())?,
    }
    Ok(())
}

fn cmd_synth(args: &SynthArgs, log: &Log) -> CliResult {
    if args.count == 0 || args.size < 2 {
        return Err(CliError::new(
            EXIT_USAGE,
            "--count must be >= 1 and --size >= 2",
        ));
    }
    let blend = match args.blend {
        BlendArg::HalfSplit => Blend::HalfSplit,
        BlendArg::LinearRamp => Blend::LinearRamp,
    };
    let scenes = (0..args.count)
        .map(|i| {
            let seed = args.seed + i;
            let (a, b) = illuminant_pair(seed, args.min_angle, args.max_angle).map_err(usage)?;
            Ok((
                seed,
                SynthConfig {
                    width: args.size,
                    height: args.size,
                    illuminants: [a, b],
                    blend,
                    ..SynthConfig::default()
                },
            ))
        })
        .collect::<CliResult<Vec<_>>>()?;
    let path = write_synthetic_manifest(&args.out_dir, &args.name, &scenes)?;
    log.info(format_args!("wrote {} scenes", scenes.len()));
    println!("{}", path.display());
    Ok(())
}

fn cmd_serve(args: &ServeArgs, log: &Log) -> CliResult {
    if let Some(dir) = &args.static_dir {
        if !dir.is_dir() {
            return Err(CliError::new(
                EXIT_NO_INPUT,
                format!("static directory {} not found", dir.display()),
            ));
        }
    }
    let config = crate::serve::ServeConfig {
        max_side: args.max_side,
        artifact_ttl: std::time::Duration::from_secs(args.artifact_ttl),
        static_dir: args.static_dir.clone(),
    };
    let addr = format!("{}:{}", args.host, args.port);
    let runtime =
        tokio::runtime::Runtime::new().map_err(|e| CliError::new(EXIT_FAILURE, e.to_string()))?;
    runtime
        .block_on(async {
            let listener = tokio::net::TcpListener::bind(&addr).await?;
            log.info(format_args!(
                "listening on http://{}",
                listener.local_addr()?
            ));
            crate::serve::serve(listener, config).await
        })
        .map_err(|e| CliError::new(EXIT_FAILURE, format!("server error: {e}")))
}

pub fn run(cli: &Cli) -> CliResult {
    let log = Log { quiet: cli.quiet };
    match &cli.command {
        Command::Estimate(a) => cmd_estimate(a, &log),
        Command::Illusion(a) => cmd_illusion(a, &log),
        Command::Benchmark(a) => cmd_benchmark(a, &log),
        Command::Sweep(a) => cmd_sweep(a, &log),
        Command::Synth(a) => cmd_synth(a, &log),
        Command::Serve(a) => cmd_serve(a, &log),
    }
}

/// Parse `args` (including the program name) and run; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}

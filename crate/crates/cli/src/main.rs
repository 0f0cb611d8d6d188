//! `spadsim`: scene generation, SPAD stream simulation, accumulation,
//! flux reconstruction, HDR fusion, a modeled conventional camera, image
//! metrics, and exposure-sweep experiments.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on data errors.
//! Diagnostics go to stderr; data goes to files or stdout.

mod config;
mod sweep;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use spadsim_core::bitstream::{
    accumulate, equivalent_exposure, to_intensity, CountImage, FrameAccumulator, SbsReader,
    StreamHeader,
};
use spadsim_core::metrics::{self, IntensityImage, Provenance, ReportEntry};
use spadsim_core::photon::SensorConfig;
use spadsim_core::pnm;
use spadsim_core::reconstruction::{estimate_flux_image, hdr_fuse, ExposureEntry, ExposureStack};
use spadsim_core::simulator::{
    generate_scene, simulate_conventional, simulate_spad, ConventionalCameraConfig, SceneSpec,
};

/// Environment variable supplying the default output directory for
/// sweeps when neither `--out-dir` nor the config names one.
const OUT_DIR_ENV: &str = "SPADSIM_OUT_DIR";

#[derive(Parser)]
#[command(
    name = "spadsim",
    version,
    about = "Single-photon camera simulation and reconstruction toolchain"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a parametric scene into a flux map (PFM).
    Scene(SceneArgs),
    /// Sample a SPAD binary frame stream (.sbs) from a flux map.
    Simulate(SimulateArgs),
    /// Integrate binary frames into an n-bit intensity image (PGM).
    Accumulate(AccumulateArgs),
    /// Reconstruct a flux map (PFM) from a stream by per-pixel MLE.
    Estimate(EstimateArgs),
    /// Fuse multiple streams of different exposures into an HDR flux map.
    Hdr(HdrArgs),
    /// Expose a flux map through the conventional camera model (PGM).
    Conventional(ConventionalArgs),
    /// Compute image-quality metrics, optionally against a reference.
    Metrics(MetricsArgs),
    /// Run an (illumination x exposure x camera) metrics sweep to CSV.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct SceneArgs {
    /// Scene spec: inline JSON (starts with '{') or a path to a JSON file.
    #[arg(long)]
    spec: String,
    #[arg(long)]
    width: u32,
    #[arg(long)]
    height: u32,
    /// Output flux map (PFM).
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// Input flux map (PFM).
    #[arg(long)]
    flux: PathBuf,
    /// Effective photon detection efficiency.
    #[arg(long, default_value_t = 0.5)]
    eta: f64,
    /// Dark count rate in counts/s/pixel.
    #[arg(long, default_value_t = 100.0)]
    dark_rate: f64,
    /// Binary frame exposure in seconds.
    #[arg(long)]
    tau_bin: f64,
    /// Number of binary frames.
    #[arg(long)]
    frames: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output stream (.sbs).
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct AccumulateArgs {
    /// Input stream (.sbs).
    #[arg(long)]
    stream: PathBuf,
    /// First frame of the accumulation window.
    #[arg(long, default_value_t = 0)]
    first: u32,
    /// Frames to accumulate (defaults to the rest of the stream).
    #[arg(long)]
    frames: Option<u32>,
    #[arg(long, default_value_t = 8)]
    bit_depth: u8,
    /// Output intensity image (PGM).
    #[arg(short, long)]
    output: PathBuf,
    /// Exposure-label sidecar (defaults to the output path with .json).
    #[arg(long)]
    sidecar: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    /// Input stream (.sbs); all frames are accumulated.
    #[arg(long)]
    stream: PathBuf,
    /// Output flux map (PFM).
    #[arg(short, long)]
    output: PathBuf,
    /// Optional saturation mask (PGM, 0 = estimated, 1 = saturated).
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Optional JSON sidecar with estimation statistics.
    #[arg(long)]
    stats: Option<PathBuf>,
}

#[derive(Args)]
struct HdrArgs {
    /// Input streams, one per exposure (repeat the flag).
    #[arg(long = "stream", required = true)]
    streams: Vec<PathBuf>,
    /// Output fused flux map (PFM).
    #[arg(short, long)]
    output: PathBuf,
    /// Optional mask image (PGM codes: 0 valid, 1 saturated, 2
    /// underflow, 3 unconverged).
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Optional JSON sidecar with dynamic range and solver statistics.
    #[arg(long)]
    stats: Option<PathBuf>,
}

#[derive(Args)]
struct ConventionalArgs {
    /// Input flux map (PFM).
    #[arg(long)]
    flux: PathBuf,
    /// Exposure time in seconds.
    #[arg(long)]
    exposure: f64,
    #[arg(long, default_value_t = 0.7)]
    eta_c: f64,
    #[arg(long, default_value_t = 10_000.0)]
    full_well: f64,
    #[arg(long, default_value_t = 2.5)]
    read_noise: f64,
    #[arg(long, default_value_t = 8)]
    bit_depth: u8,
    /// Optics throughput multiplier relative to the SPAD path.
    #[arg(long, default_value_t = 1.0)]
    optics_scale: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output intensity image (PGM).
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct MetricsArgs {
    /// Input images (PGM); repeat the flag for a batch.
    #[arg(long = "input", required = true)]
    inputs: Vec<PathBuf>,
    /// Full-reference image (PGM) enabling MS-SSIM and PSNR.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Exposure label recorded in every report.
    #[arg(long)]
    exposure_s: Option<f64>,
    /// Free-form configuration label recorded in every report.
    #[arg(long)]
    configuration: Option<String>,
    /// Output JSON report (stdout when omitted).
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Dotted-path overrides, e.g. --set sensor.eta=0.25
    #[arg(long = "set")]
    sets: Vec<String>,
    /// Output directory (falls back to the config, then $SPADSIM_OUT_DIR,
    /// then the current directory).
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Scene(args) => cmd_scene(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Accumulate(args) => cmd_accumulate(args),
        Command::Estimate(args) => cmd_estimate(args),
        Command::Hdr(args) => cmd_hdr(args),
        Command::Conventional(args) => cmd_conventional(args),
        Command::Metrics(args) => cmd_metrics(args),
        Command::Sweep(args) => cmd_sweep(args),
    }
}

fn parse_scene_spec(spec: &str) -> Result<SceneSpec> {
    let text = if spec.trim_start().starts_with('{') {
        spec.to_string()
    } else {
        std::fs::read_to_string(spec).with_context(|| format!("cannot read scene spec {spec}"))?
    };
    serde_json::from_str(&text).context("scene spec is not valid JSON for any known kind")
}

fn cmd_scene(args: SceneArgs) -> Result<()> {
    let spec = parse_scene_spec(&args.spec)?;
    let map = generate_scene(&spec, args.width, args.height)?;
    pnm::write_pfm(&map, &args.output)
        .with_context(|| format!("cannot write {}", args.output.display()))?;
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let flux = pnm::read_pfm(&args.flux)
        .with_context(|| format!("cannot read flux map {}", args.flux.display()))?;
    let sensor = SensorConfig::new(
        args.eta,
        args.dark_rate,
        args.tau_bin,
        flux.width(),
        flux.height(),
    )?;
    let stream = simulate_spad(&flux, &sensor, args.frames, args.seed)?;
    spadsim_core::bitstream::write_stream(&stream, &args.output)
        .with_context(|| format!("cannot write {}", args.output.display()))?;
    Ok(())
}

fn cmd_accumulate(args: AccumulateArgs) -> Result<()> {
    let stream = spadsim_core::bitstream::read_stream(&args.stream)
        .with_context(|| format!("cannot read stream {}", args.stream.display()))?;
    let available = stream.header().frame_count;
    let count = match args.frames {
        Some(count) => count,
        None => available.saturating_sub(args.first),
    };
    let counts = accumulate(&stream, args.first, count)?;
    let image = to_intensity(&counts, args.bit_depth)?;

    let tau_bin = stream.header().tau_bin;
    let sidecar = json!({
        "frames": count,
        "first_frame": args.first,
        "bit_depth": args.bit_depth,
        "tau_bin_s": tau_bin,
        "total_exposure_s": f64::from(count) * tau_bin,
        "equivalent_exposure_s": equivalent_exposure(args.bit_depth, tau_bin),
    });

    pnm::write_pgm(&image, &args.output)
        .with_context(|| format!("cannot write {}", args.output.display()))?;
    let sidecar_path = args
        .sidecar
        .unwrap_or_else(|| args.output.with_extension("json"));
    write_json(&sidecar_path, &sidecar)?;
    Ok(())
}

/// Stream-accumulate every frame of an `.sbs` file without loading the
/// whole payload.
fn accumulate_whole_stream(path: &Path) -> Result<(StreamHeader, CountImage)> {
    let mut reader =
        SbsReader::open(path).with_context(|| format!("cannot read stream {}", path.display()))?;
    let header = reader.header().clone();
    let mut acc = FrameAccumulator::new(header.width, header.height);
    let mut frame = vec![0u8; header.frame_size()];
    while reader
        .read_frame(&mut frame)
        .with_context(|| format!("while reading {}", path.display()))?
    {
        acc.add_packed(&frame)?;
    }
    reader.finish()?;
    Ok((header, acc.finish()))
}

fn cmd_estimate(args: EstimateArgs) -> Result<()> {
    let (header, counts) = accumulate_whole_stream(&args.stream)?;
    let estimate = estimate_flux_image(&counts, &header.sensor_config())?;

    pnm::write_pfm(&estimate.flux, &args.output)
        .with_context(|| format!("cannot write {}", args.output.display()))?;
    if let Some(mask_path) = &args.mask {
        let mask = IntensityImage::new(
            header.width,
            header.height,
            8,
            estimate.saturated.iter().map(|&s| u16::from(s)).collect(),
        )?;
        pnm::write_pgm(&mask, mask_path)
            .with_context(|| format!("cannot write {}", mask_path.display()))?;
    }
    if let Some(stats_path) = &args.stats {
        let saturated = estimate.saturated.iter().filter(|&&s| s).count();
        let stats = json!({
            "width": header.width,
            "height": header.height,
            "n_frames": header.frame_count,
            "tau_bin_s": header.tau_bin,
            "eta": header.eta,
            "dark_rate": header.dark_rate,
            "saturated_pixels": saturated,
        });
        write_json(stats_path, &stats)?;
    }
    Ok(())
}

fn cmd_hdr(args: HdrArgs) -> Result<()> {
    let mut entries = Vec::new();
    let mut shared: Option<StreamHeader> = None;
    for path in &args.streams {
        let (header, counts) = accumulate_whole_stream(path)?;
        if let Some(first) = &shared {
            if header.width != first.width || header.height != first.height {
                bail!(
                    "stream {} is {}x{}, expected {}x{}",
                    path.display(),
                    header.width,
                    header.height,
                    first.width,
                    first.height
                );
            }
            if header.eta != first.eta || header.dark_rate != first.dark_rate {
                bail!(
                    "stream {} has eta/dark_rate {}/{}, expected {}/{} (stacks share sensitivity)",
                    path.display(),
                    header.eta,
                    header.dark_rate,
                    first.eta,
                    first.dark_rate
                );
            }
        } else {
            shared = Some(header.clone());
        }
        entries.push(ExposureEntry {
            counts,
            tau_bin: header.tau_bin,
        });
    }
    let shared = shared.expect("clap enforces at least one stream");
    let stack = ExposureStack::new(entries, shared.eta, shared.dark_rate)?;
    let result = hdr_fuse(&stack)?;

    pnm::write_pfm(&result.flux, &args.output)
        .with_context(|| format!("cannot write {}", args.output.display()))?;
    if let Some(mask_path) = &args.mask {
        let mask = IntensityImage::new(
            shared.width,
            shared.height,
            8,
            result.flags.iter().map(|&f| f as u16).collect(),
        )?;
        pnm::write_pgm(&mask, mask_path)
            .with_context(|| format!("cannot write {}", mask_path.display()))?;
    }
    if let Some(stats_path) = &args.stats {
        let stats = json!({
            "dynamic_range_db": result.dynamic_range_db,
            "pixels": {
                "valid": result.stats.valid,
                "saturated": result.stats.saturated,
                "underflow": result.stats.underflow,
                "unconverged": result.stats.unconverged,
            },
            "solver": {
                "max_iterations": result.stats.max_iterations,
                "total_iterations": result.stats.total_iterations,
            },
            "exposures": stack
                .entries()
                .iter()
                .map(|e| json!({"tau_bin_s": e.tau_bin, "n_frames": e.counts.n_frames()}))
                .collect::<Vec<_>>(),
        });
        write_json(stats_path, &stats)?;
    }
    if result.stats.unconverged > 0 {
        eprintln!(
            "warning: {} pixels did not converge and are flagged in the mask",
            result.stats.unconverged
        );
    }
    Ok(())
}

fn cmd_conventional(args: ConventionalArgs) -> Result<()> {
    let flux = pnm::read_pfm(&args.flux)
        .with_context(|| format!("cannot read flux map {}", args.flux.display()))?;
    let ccfg = ConventionalCameraConfig {
        eta_c: args.eta_c,
        full_well: args.full_well,
        read_noise: args.read_noise,
        bit_depth: args.bit_depth,
    };
    let image = simulate_conventional(&flux, &ccfg, args.exposure, args.optics_scale, args.seed)?;
    pnm::write_pgm(&image, &args.output)
        .with_context(|| format!("cannot write {}", args.output.display()))?;
    Ok(())
}

fn cmd_metrics(args: MetricsArgs) -> Result<()> {
    let reference = match &args.reference {
        Some(path) => Some(
            pnm::read_pgm(path)
                .with_context(|| format!("cannot read reference {}", path.display()))?,
        ),
        None => None,
    };

    let entries: Vec<ReportEntry> = args
        .inputs
        .iter()
        .map(|path| {
            let source = path.display().to_string();
            let provenance = Provenance {
                source: source.clone(),
                exposure_s: args.exposure_s,
                configuration: args.configuration.clone(),
            };
            let result = pnm::read_pgm(path)
                .map_err(anyhow::Error::from)
                .and_then(|img| {
                    metrics::report(&img, reference.as_ref(), provenance).map_err(Into::into)
                });
            match result {
                Ok(report) => ReportEntry::Ok(report),
                Err(err) => ReportEntry::Error {
                    source,
                    error: format!("{err:#}"),
                },
            }
        })
        .collect();

    let mut text = serde_json::to_string_pretty(&entries)?;
    text.push('\n');
    match &args.output {
        Some(path) => std::fs::write(path, text)
            .with_context(|| format!("cannot write {}", path.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let config = config::load_run_config(&args.config, &args.sets)?;
    let out_dir = args
        .out_dir
        .or_else(|| config.output_dir.clone())
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    let csv_path = sweep::run_sweep(&config, &out_dir)?;
    eprintln!("wrote {}", csv_path.display());
    Ok(())
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

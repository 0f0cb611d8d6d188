//! Exposure-sweep experiments: a (illumination × exposure × camera-model)
//! grid of metric rows, written as CSV in deterministic grid order.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rayon::prelude::*;
use spadsim_core::bitstream::{accumulate, binary_exposure_for, to_intensity};
use spadsim_core::metrics::{self, IntensityImage};
use spadsim_core::rng::derive_seed;
use spadsim_core::simulator::{generate_scene, simulate_conventional, simulate_spad, FluxMap};

use crate::config::RunConfig;

pub const SWEEP_CSV_HEADER: &str =
    "illumination,exposure_s,camera,contrast,entropy_bits,sharpness,ms_ssim,psnr_db,note";

/// Sentinel for cells where a model produced no usable image (uniformly
/// dark or uniformly saturated).
const FAILED_CELL: &str = "x";

struct Cell {
    index: u64,
    illumination: usize,
    exposure: f64,
    spad: bool,
}

/// Run the whole grid and write `sweep.csv` under `out_dir`.
pub fn run_sweep(config: &RunConfig, out_dir: &Path) -> Result<PathBuf> {
    let base_scene = generate_scene(
        &config.scene,
        config.sensor.width,
        config.sensor.height,
    )
    .context("scene generation failed")?;

    // one scaled map and ground-truth reference per illumination level
    let mut scaled: Vec<FluxMap> = Vec::new();
    let mut references: Vec<Option<IntensityImage>> = Vec::new();
    for level in &config.sweep.illuminations {
        let map = base_scene
            .scaled(level.flux_scale)
            .with_context(|| format!("illumination {:?} scale invalid", level.label))?;
        let reference = if map.max_flux() > 0.0 {
            Some(IntensityImage::from_flux_map(&map, map.max_flux(), 8)?)
        } else {
            None
        };
        scaled.push(map);
        references.push(reference);
    }

    let mut cells = Vec::new();
    let mut index = 0u64;
    for (ill, _) in config.sweep.illuminations.iter().enumerate() {
        for &exposure in &config.sweep.exposures_s {
            for &spad in &[false, true] {
                cells.push(Cell {
                    index,
                    illumination: ill,
                    exposure,
                    spad,
                });
                index += 1;
            }
        }
    }

    let rows: Vec<String> = cells
        .par_iter()
        .map(|cell| {
            run_cell(
                config,
                cell,
                &scaled[cell.illumination],
                references[cell.illumination].as_ref(),
            )
        })
        .collect();

    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("cannot create output directory {}", out_dir.display()))?;
    let csv_path = out_dir.join("sweep.csv");
    let mut text = String::from(SWEEP_CSV_HEADER);
    text.push('\n');
    for row in rows {
        text.push_str(&row);
        text.push('\n');
    }
    std::fs::write(&csv_path, text)
        .with_context(|| format!("cannot write {}", csv_path.display()))?;
    Ok(csv_path)
}

fn run_cell(
    config: &RunConfig,
    cell: &Cell,
    flux: &FluxMap,
    reference: Option<&IntensityImage>,
) -> String {
    let label = &config.sweep.illuminations[cell.illumination].label;
    let camera = if cell.spad { "spad" } else { "conventional" };
    let prefix = format!(
        "{},{},{camera}",
        csv_field(label),
        format_float(cell.exposure)
    );
    match cell_image(config, cell, flux) {
        Ok(image) => {
            if is_unusable(&image) {
                format!("{prefix},{FAILED_CELL},{FAILED_CELL},{FAILED_CELL},{FAILED_CELL},{FAILED_CELL},")
            } else {
                match metric_columns(&image, reference) {
                    Ok(columns) => format!("{prefix},{columns},"),
                    Err(err) => format!(
                        "{prefix},{FAILED_CELL},{FAILED_CELL},{FAILED_CELL},{FAILED_CELL},{FAILED_CELL},{}",
                        csv_field(&format!("error: {err}"))
                    ),
                }
            }
        }
        Err(err) => format!(
            "{prefix},{FAILED_CELL},{FAILED_CELL},{FAILED_CELL},{FAILED_CELL},{FAILED_CELL},{}",
            csv_field(&format!("error: {err}"))
        ),
    }
}

fn cell_image(config: &RunConfig, cell: &Cell, flux: &FluxMap) -> Result<IntensityImage> {
    let seed = derive_seed(config.seed, cell.index);
    if cell.spad {
        let depth = config.sweep.spad_bit_depth;
        let n_frames = 1u32 << depth;
        let tau_bin = binary_exposure_for(depth, cell.exposure);
        let sensor = config.sensor.sensor_config(Some(tau_bin))?;
        let stream = simulate_spad(flux, &sensor, n_frames, seed)?;
        let counts = accumulate(&stream, 0, n_frames)?;
        Ok(to_intensity(&counts, depth)?)
    } else {
        Ok(simulate_conventional(
            flux,
            &config.conventional,
            cell.exposure,
            1.0,
            seed,
        )?)
    }
}

/// A cell image is unusable when it carries no information at all:
/// uniformly dark or uniformly saturated.
fn is_unusable(image: &IntensityImage) -> bool {
    let max = image.max_sample();
    image.samples().iter().all(|&s| s == 0) || image.samples().iter().all(|&s| s == max)
}

fn metric_columns(image: &IntensityImage, reference: Option<&IntensityImage>) -> Result<String> {
    let contrast = metrics::rms_contrast(image)?;
    let entropy = metrics::entropy(image)?;
    let sharpness = metrics::sharpness(image)?;
    let (ms, db) = match reference {
        Some(reference) => {
            let ms = metrics::ms_ssim(image, reference)?;
            let db = metrics::psnr(image, reference)?;
            (format_float(ms.value), format_db(db))
        }
        None => (String::new(), String::new()),
    };
    Ok(format!(
        "{},{},{},{ms},{db}",
        format_float(contrast),
        format_float(entropy),
        format_float(sharpness)
    ))
}

fn format_float(v: f64) -> String {
    format!("{v}")
}

fn format_db(v: f64) -> String {
    if v.is_infinite() {
        "inf".to_string()
    } else {
        format_float(v)
    }
}

/// Minimal RFC 4180 quoting: only fields containing separators or quotes
/// are wrapped.
fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

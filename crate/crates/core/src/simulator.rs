//! Forward models: synthetic flux maps, Monte-Carlo SPAD binary streams,
//! and a modeled conventional camera for side-by-side comparisons.
//!
//! Both simulators draw from the counter-based generator in [`crate::rng`]
//! keyed on `(seed, frame, pixel)` (SPAD) or per-pixel streams
//! (conventional), so output is bit-identical for a given seed regardless
//! of thread count or evaluation order.

use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bitstream::{row_stride, BitplaneStream, StreamHeader};
use crate::metrics::IntensityImage;
use crate::photon::{expected_detections, PhotonError, SensorConfig};
use crate::rng;

#[derive(Debug, Error)]
pub enum SimulatorError {
    #[error("flux map dimensions {0}x{1} do not match sensor {2}x{3}")]
    DimensionMismatch(u32, u32, u32, u32),
    #[error("flux value {value} at pixel {index} is not finite and nonnegative")]
    InvalidFluxValue { index: usize, value: f64 },
    #[error("flux buffer has {got} entries, expected {expected}")]
    FluxCountMismatch { got: usize, expected: usize },
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("frame count must be at least 1")]
    ZeroFrames,
    #[error("invalid conventional camera config: {0}")]
    InvalidConventionalConfig(String),
    #[error("exposure must be finite and positive, got {0}")]
    InvalidExposure(f64),
    #[error("optics scale must be finite and positive, got {0}")]
    InvalidOpticsScale(f64),
    #[error(transparent)]
    Photon(#[from] PhotonError),
}

/// Per-pixel ground-truth photon flux φ in photons/second.
#[derive(Debug, Clone, PartialEq)]
pub struct FluxMap {
    width: u32,
    height: u32,
    flux: Vec<f64>,
}

impl FluxMap {
    pub fn new(width: u32, height: u32, flux: Vec<f64>) -> Result<Self, SimulatorError> {
        let expected = width as usize * height as usize;
        if flux.len() != expected {
            return Err(SimulatorError::FluxCountMismatch {
                got: flux.len(),
                expected,
            });
        }
        if let Some((index, &value)) = flux
            .iter()
            .enumerate()
            .find(|(_, &v)| !(v.is_finite() && v >= 0.0))
        {
            return Err(SimulatorError::InvalidFluxValue { index, value });
        }
        Ok(Self {
            width,
            height,
            flux,
        })
    }

    pub fn constant(width: u32, height: u32, phi: f64) -> Result<Self, SimulatorError> {
        Self::new(width, height, vec![phi; width as usize * height as usize])
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.flux
    }

    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.flux[(y * self.width + x) as usize]
    }

    pub fn max_flux(&self) -> f64 {
        self.flux.iter().copied().fold(0.0, f64::max)
    }

    /// Scale every pixel by a nonnegative factor.
    pub fn scaled(&self, factor: f64) -> Result<Self, SimulatorError> {
        Self::new(
            self.width,
            self.height,
            self.flux.iter().map(|&v| v * factor).collect(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum GradientAxis {
    #[default]
    X,
    Y,
}

/// Parametric test scenes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SceneSpec {
    /// Constant flux everywhere.
    Uniform { flux: f64 },
    /// Linear ramp from `min_flux` to `max_flux` along an axis.
    Gradient {
        min_flux: f64,
        max_flux: f64,
        #[serde(default)]
        axis: GradientAxis,
    },
    /// Alternating cells; `period` is the full spatial period in pixels
    /// (two cells), so period 2 alternates every pixel.
    Checkerboard {
        period: u32,
        low_flux: f64,
        high_flux: f64,
    },
    /// Left half at `min_flux`, right half at `min_flux × ratio`; spans
    /// the dynamic range the HDR pipeline is meant to cover.
    HdrStep {
        min_flux: f64,
        #[serde(default = "default_hdr_ratio")]
        ratio: f64,
    },
    /// Filled disk on a background.
    Disk {
        center_x: f64,
        center_y: f64,
        radius: f64,
        inside_flux: f64,
        outside_flux: f64,
    },
}

fn default_hdr_ratio() -> f64 {
    1e5
}

/// Render a scene spec into a deterministic flux map.
pub fn generate_scene(spec: &SceneSpec, width: u32, height: u32) -> Result<FluxMap, SimulatorError> {
    if width == 0 || height == 0 {
        return Err(SimulatorError::InvalidScene(format!(
            "scene must be at least 1x1, got {width}x{height}"
        )));
    }
    let finite_nonneg = |name: &str, v: f64| -> Result<(), SimulatorError> {
        if v.is_finite() && v >= 0.0 {
            Ok(())
        } else {
            Err(SimulatorError::InvalidScene(format!(
                "{name} must be finite and nonnegative, got {v}"
            )))
        }
    };
    let n = width as usize * height as usize;
    let flux = match spec {
        SceneSpec::Uniform { flux } => {
            finite_nonneg("flux", *flux)?;
            vec![*flux; n]
        }
        SceneSpec::Gradient {
            min_flux,
            max_flux,
            axis,
        } => {
            finite_nonneg("min_flux", *min_flux)?;
            finite_nonneg("max_flux", *max_flux)?;
            let mut flux = Vec::with_capacity(n);
            for y in 0..height {
                for x in 0..width {
                    let (pos, span) = match axis {
                        GradientAxis::X => (x, width),
                        GradientAxis::Y => (y, height),
                    };
                    let t = if span > 1 {
                        f64::from(pos) / f64::from(span - 1)
                    } else {
                        0.0
                    };
                    flux.push(min_flux + (max_flux - min_flux) * t);
                }
            }
            flux
        }
        SceneSpec::Checkerboard {
            period,
            low_flux,
            high_flux,
        } => {
            finite_nonneg("low_flux", *low_flux)?;
            finite_nonneg("high_flux", *high_flux)?;
            if *period < 2 || period % 2 != 0 {
                return Err(SimulatorError::InvalidScene(format!(
                    "checkerboard period must be even and at least 2, got {period}"
                )));
            }
            let cell = period / 2;
            let mut flux = Vec::with_capacity(n);
            for y in 0..height {
                for x in 0..width {
                    let parity = (x / cell + y / cell) % 2;
                    flux.push(if parity == 0 { *low_flux } else { *high_flux });
                }
            }
            flux
        }
        SceneSpec::HdrStep { min_flux, ratio } => {
            finite_nonneg("min_flux", *min_flux)?;
            if !(ratio.is_finite() && *ratio > 0.0) {
                return Err(SimulatorError::InvalidScene(format!(
                    "hdr-step ratio must be finite and positive, got {ratio}"
                )));
            }
            if width < 2 {
                return Err(SimulatorError::InvalidScene(
                    "hdr-step needs at least 2 columns".into(),
                ));
            }
            let high = min_flux * ratio;
            finite_nonneg("min_flux × ratio", high)?;
            let mut flux = Vec::with_capacity(n);
            for _ in 0..height {
                for x in 0..width {
                    flux.push(if x < width / 2 { *min_flux } else { high });
                }
            }
            flux
        }
        SceneSpec::Disk {
            center_x,
            center_y,
            radius,
            inside_flux,
            outside_flux,
        } => {
            finite_nonneg("inside_flux", *inside_flux)?;
            finite_nonneg("outside_flux", *outside_flux)?;
            if !(radius.is_finite() && *radius > 0.0) {
                return Err(SimulatorError::InvalidScene(format!(
                    "disk radius must be positive, got {radius}"
                )));
            }
            if !(0.0..=f64::from(width)).contains(center_x)
                || !(0.0..=f64::from(height)).contains(center_y)
            {
                return Err(SimulatorError::InvalidScene(format!(
                    "disk center ({center_x}, {center_y}) outside {width}x{height} image"
                )));
            }
            let r2 = radius * radius;
            let mut flux = Vec::with_capacity(n);
            for y in 0..height {
                for x in 0..width {
                    let dx = f64::from(x) + 0.5 - center_x;
                    let dy = f64::from(y) + 0.5 - center_y;
                    flux.push(if dx * dx + dy * dy <= r2 {
                        *inside_flux
                    } else {
                        *outside_flux
                    });
                }
            }
            flux
        }
    };
    FluxMap::new(width, height, flux)
}

/// Sample a SPAD binary frame stream from a flux map.
///
/// Each pixel of each frame is an independent Bernoulli draw with
/// p = 1 − e^(−(φη + r_d)τ). The variate for (frame f, pixel q) is the
/// Philox4x32-10 output keyed on the seed with counter
/// `[q_lo, q_hi, f, 0]` (see [`crate::rng`]), so the stream bytes depend
/// only on the arguments, never on scheduling.
pub fn simulate_spad(
    flux: &FluxMap,
    cfg: &SensorConfig,
    n_frames: u32,
    seed: u64,
) -> Result<BitplaneStream, SimulatorError> {
    cfg.validate()?;
    if flux.width != cfg.width || flux.height != cfg.height {
        return Err(SimulatorError::DimensionMismatch(
            flux.width, flux.height, cfg.width, cfg.height,
        ));
    }
    if n_frames == 0 {
        return Err(SimulatorError::ZeroFrames);
    }

    let p_detect: Vec<f64> = flux
        .flux
        .iter()
        .map(|&phi| expected_detections(phi, cfg).map(|s| s.p_detect))
        .collect::<Result<_, _>>()?;

    let width = cfg.width as usize;
    let height = cfg.height as usize;
    let stride = row_stride(cfg.width);
    let frame_size = stride * height;

    let mut payload = vec![0u8; frame_size * n_frames as usize];
    payload
        .par_chunks_mut(frame_size)
        .enumerate()
        .for_each(|(frame, bits)| {
            let frame = frame as u32;
            for y in 0..height {
                let row = &mut bits[y * stride..(y + 1) * stride];
                for x in 0..width {
                    let pixel = (y * width + x) as u64;
                    if rng::spad_uniform(seed, frame, pixel) < p_detect[pixel as usize] {
                        row[x / 8] |= 0x80 >> (x % 8);
                    }
                }
            }
        });

    let header = StreamHeader {
        width: cfg.width,
        height: cfg.height,
        frame_count: n_frames,
        tau_bin: cfg.tau_bin,
        eta: cfg.eta,
        dark_rate: cfg.dark_rate,
        rng_seed: seed,
    };
    Ok(BitplaneStream::new(header, payload).expect("simulated payload matches header"))
}

/// Idealized conventional (CCD/CMOS-style) camera model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConventionalCameraConfig {
    /// Quantum efficiency in (0, 1].
    pub eta_c: f64,
    /// Full-well capacity in electrons.
    pub full_well: f64,
    /// RMS read noise in electrons.
    pub read_noise: f64,
    /// Output bit depth.
    pub bit_depth: u8,
}

impl Default for ConventionalCameraConfig {
    fn default() -> Self {
        Self {
            eta_c: 0.7,
            full_well: 10_000.0,
            read_noise: 2.5,
            bit_depth: 8,
        }
    }
}

impl ConventionalCameraConfig {
    pub fn validate(&self) -> Result<(), SimulatorError> {
        if !(self.eta_c > 0.0 && self.eta_c <= 1.0) {
            return Err(SimulatorError::InvalidConventionalConfig(format!(
                "eta_c must be in (0, 1], got {}",
                self.eta_c
            )));
        }
        if !(self.full_well > 0.0 && self.full_well.is_finite()) {
            return Err(SimulatorError::InvalidConventionalConfig(format!(
                "full_well must be finite and positive, got {}",
                self.full_well
            )));
        }
        if !(self.read_noise >= 0.0 && self.read_noise.is_finite()) {
            return Err(SimulatorError::InvalidConventionalConfig(format!(
                "read_noise must be finite and nonnegative, got {}",
                self.read_noise
            )));
        }
        if !(1..=16).contains(&self.bit_depth) {
            return Err(SimulatorError::InvalidConventionalConfig(format!(
                "bit_depth must be in 1..=16, got {}",
                self.bit_depth
            )));
        }
        Ok(())
    }
}

/// Expose a flux map through the conventional camera model.
///
/// Per pixel: electrons = clamp(Poisson(φ·s·η_c·T) + Normal(0, read_noise),
/// 0, full_well), then DN = floor(electrons × (2^d − 1)/full_well).
/// `optics_scale` (s) is a throughput multiplier for matching optics
/// between camera models; 1.0 means matched. Sampling uses one
/// counter-based stream per pixel, so the image is reproducible under any
/// parallel schedule.
pub fn simulate_conventional(
    flux: &FluxMap,
    ccfg: &ConventionalCameraConfig,
    exposure: f64,
    optics_scale: f64,
    seed: u64,
) -> Result<IntensityImage, SimulatorError> {
    ccfg.validate()?;
    if !(exposure > 0.0 && exposure.is_finite()) {
        return Err(SimulatorError::InvalidExposure(exposure));
    }
    if !(optics_scale > 0.0 && optics_scale.is_finite()) {
        return Err(SimulatorError::InvalidOpticsScale(optics_scale));
    }

    let max_code = (1u32 << ccfg.bit_depth) - 1;
    let noise = if ccfg.read_noise > 0.0 {
        Some(Normal::new(0.0, ccfg.read_noise).expect("validated read noise"))
    } else {
        None
    };

    let samples: Vec<u16> = flux
        .flux
        .par_iter()
        .enumerate()
        .map(|(pixel, &phi)| {
            let mut stream = rng::PixelStream::new(seed, pixel as u64);
            let mean_e = phi * optics_scale * ccfg.eta_c * exposure;
            let signal = if mean_e > 0.0 {
                Poisson::new(mean_e).expect("positive finite mean").sample(&mut stream)
            } else {
                0.0
            };
            let read = noise.map_or(0.0, |n| n.sample(&mut stream));
            let electrons = (signal + read).clamp(0.0, ccfg.full_well);
            // multiply before dividing so a full well maps exactly to the
            // top code
            let dn = (electrons * f64::from(max_code) / ccfg.full_well).floor();
            (dn as u32).min(max_code) as u16
        })
        .collect();

    Ok(
        IntensityImage::new(flux.width, flux.height, ccfg.bit_depth, samples)
            .expect("quantized samples are in range"),
    )
}

//! Image quality metrics: RMS contrast, entropy, variance-of-Laplacian
//! sharpness, MS-SSIM, and PSNR, computed on integer-sampled monochrome
//! images with a declared bit depth.
//!
//! Contrast and sharpness are defined on the normalized [0, 1] view
//! (sample / (2^d − 1)); entropy on the raw gray-level histogram. The
//! absolute contrast/sharpness scale therefore depends on this
//! normalization choice and is not comparable across differently
//! normalized toolchains. Entropy is reported in raw bits, bounded by the
//! declared bit depth.

mod ms_ssim;

pub use ms_ssim::MsSsim;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::simulator::FluxMap;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("image has no pixels")]
    EmptyImage,
    #[error("bit depth must be in 1..=16, got {0}")]
    InvalidBitDepth(u8),
    #[error("sample {value} exceeds maximum {max} for bit depth {bit_depth}")]
    SampleOutOfRange { value: u16, max: u16, bit_depth: u8 },
    #[error("sample buffer has {got} entries, expected {expected}")]
    SampleCountMismatch { got: usize, expected: usize },
    #[error("image dimensions {0}x{1} and {2}x{3} differ")]
    DimensionMismatch(u32, u32, u32, u32),
    #[error("image {0}x{1} is smaller than the {2}x{2} kernel")]
    TooSmall(u32, u32, u32),
    #[error("flux scale must be positive and finite, got {0}")]
    InvalidFluxScale(f64),
}

/// Integer-sampled monochrome image with a declared bit depth.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntensityImage {
    width: u32,
    height: u32,
    bit_depth: u8,
    samples: Vec<u16>,
}

impl IntensityImage {
    pub fn new(
        width: u32,
        height: u32,
        bit_depth: u8,
        samples: Vec<u16>,
    ) -> Result<Self, MetricsError> {
        if !(1..=16).contains(&bit_depth) {
            return Err(MetricsError::InvalidBitDepth(bit_depth));
        }
        let expected = width as usize * height as usize;
        if samples.len() != expected {
            return Err(MetricsError::SampleCountMismatch {
                got: samples.len(),
                expected,
            });
        }
        let max = Self::max_code(bit_depth);
        if let Some(&value) = samples.iter().find(|&&s| s > max) {
            return Err(MetricsError::SampleOutOfRange {
                value,
                max,
                bit_depth,
            });
        }
        Ok(Self {
            width,
            height,
            bit_depth,
            samples,
        })
    }

    pub fn constant(width: u32, height: u32, bit_depth: u8, value: u16) -> Result<Self, MetricsError> {
        let n = width as usize * height as usize;
        Self::new(width, height, bit_depth, vec![value; n])
    }

    /// Render a flux map to intensities, mapping `full_scale_flux` to the
    /// top code with clamping. Used to build metric references from
    /// ground truth.
    pub fn from_flux_map(
        map: &FluxMap,
        full_scale_flux: f64,
        bit_depth: u8,
    ) -> Result<Self, MetricsError> {
        if !(full_scale_flux > 0.0 && full_scale_flux.is_finite()) {
            return Err(MetricsError::InvalidFluxScale(full_scale_flux));
        }
        if !(1..=16).contains(&bit_depth) {
            return Err(MetricsError::InvalidBitDepth(bit_depth));
        }
        let max = f64::from(Self::max_code(bit_depth));
        let samples = map
            .as_slice()
            .iter()
            .map(|&phi| ((phi / full_scale_flux * max).round()).clamp(0.0, max) as u16)
            .collect();
        Self::new(map.width(), map.height(), bit_depth, samples)
    }

    fn max_code(bit_depth: u8) -> u16 {
        (((1u32 << bit_depth) - 1) & 0xFFFF) as u16
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn bit_depth(&self) -> u8 {
        self.bit_depth
    }

    /// Top code value, 2^d − 1.
    pub fn max_sample(&self) -> u16 {
        Self::max_code(self.bit_depth)
    }

    pub fn samples(&self) -> &[u16] {
        &self.samples
    }

    pub fn get(&self, x: u32, y: u32) -> u16 {
        self.samples[(y * self.width + x) as usize]
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Normalized [0, 1] view: sample / (2^d − 1).
    pub fn normalized(&self) -> Vec<f64> {
        let max = f64::from(self.max_sample());
        self.samples.iter().map(|&s| f64::from(s) / max).collect()
    }

    pub fn transposed(&self) -> Self {
        let mut samples = vec![0u16; self.samples.len()];
        for y in 0..self.height {
            for x in 0..self.width {
                samples[(x * self.height + y) as usize] = self.get(x, y);
            }
        }
        Self {
            width: self.height,
            height: self.width,
            bit_depth: self.bit_depth,
            samples,
        }
    }

    pub fn rotated_180(&self) -> Self {
        let mut samples = self.samples.clone();
        samples.reverse();
        Self {
            width: self.width,
            height: self.height,
            bit_depth: self.bit_depth,
            samples,
        }
    }
}

fn require_nonempty(img: &IntensityImage) -> Result<(), MetricsError> {
    if img.is_empty() {
        Err(MetricsError::EmptyImage)
    } else {
        Ok(())
    }
}

fn require_same_size(a: &IntensityImage, b: &IntensityImage) -> Result<(), MetricsError> {
    if a.width != b.width || a.height != b.height {
        return Err(MetricsError::DimensionMismatch(
            a.width, a.height, b.width, b.height,
        ));
    }
    Ok(())
}

/// Gray-level histogram over the full 2^d code range.
fn histogram(img: &IntensityImage) -> Vec<u64> {
    let mut bins = vec![0u64; usize::from(img.max_sample()) + 1];
    for &s in &img.samples {
        bins[usize::from(s)] += 1;
    }
    bins
}

/// RMS contrast: population standard deviation of the normalized view.
///
/// Computed from the gray-level histogram, so the result is independent
/// of pixel order (exact under transposition and rotation).
pub fn rms_contrast(img: &IntensityImage) -> Result<f64, MetricsError> {
    require_nonempty(img)?;
    let bins = histogram(img);
    let n = img.samples.len() as f64;
    let max = f64::from(img.max_sample());
    let mut mean = 0.0;
    for (code, &count) in bins.iter().enumerate() {
        if count > 0 {
            mean += (code as f64 / max) * (count as f64 / n);
        }
    }
    let mut var = 0.0;
    for (code, &count) in bins.iter().enumerate() {
        if count > 0 {
            let d = code as f64 / max - mean;
            var += d * d * (count as f64 / n);
        }
    }
    Ok(var.sqrt())
}

/// Shannon entropy (bits) of the gray-level histogram over 2^d bins.
pub fn entropy(img: &IntensityImage) -> Result<f64, MetricsError> {
    require_nonempty(img)?;
    let bins = histogram(img);
    let n = img.samples.len() as f64;
    let mut bits = 0.0;
    for &count in &bins {
        if count > 0 {
            let p = count as f64 / n;
            bits -= p * p.log2();
        }
    }
    Ok(bits)
}

/// Variance of the 3×3 Laplacian response on the normalized view,
/// interior pixels only (no padding).
///
/// Kernel: [[0, 1, 0], [1, −4, 1], [0, 1, 0]]. Zero on constant and
/// affine images, which the Laplacian annihilates.
pub fn sharpness(img: &IntensityImage) -> Result<f64, MetricsError> {
    if img.width < 3 || img.height < 3 {
        return Err(MetricsError::TooSmall(img.width, img.height, 3));
    }
    let w = img.width as usize;
    let h = img.height as usize;
    let v = img.normalized();
    let mut responses = Vec::with_capacity((w - 2) * (h - 2));
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            // grouped so the value is invariant under transpose/rotation
            let vertical = v[(y - 1) * w + x] + v[(y + 1) * w + x];
            let horizontal = v[y * w + x - 1] + v[y * w + x + 1];
            responses.push((vertical + horizontal) - 4.0 * v[y * w + x]);
        }
    }
    let n = responses.len() as f64;
    let mean = responses.iter().sum::<f64>() / n;
    let var = responses.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    Ok(var)
}

/// Multi-scale SSIM between a test image and a reference, both on their
/// normalized [0, 1] views: the standard 5-scale construction with an
/// 11×11 Gaussian window (σ = 1.5), dyadic 2×2-mean downsampling, and
/// scale weights (0.0448, 0.2856, 0.3001, 0.2363, 0.1333). Images too
/// small for five scales use the largest feasible count with
/// renormalized weights; the result records how many were used.
pub fn ms_ssim(test: &IntensityImage, reference: &IntensityImage) -> Result<MsSsim, MetricsError> {
    require_same_size(test, reference)?;
    ms_ssim::ms_ssim(test, reference)
}

/// Peak signal-to-noise ratio, 10·log10(1/MSE) on normalized views.
/// Identical images yield `+inf`.
pub fn psnr(test: &IntensityImage, reference: &IntensityImage) -> Result<f64, MetricsError> {
    require_same_size(test, reference)?;
    require_nonempty(test)?;
    let a = test.normalized();
    let b = reference.normalized();
    let mse = a
        .iter()
        .zip(&b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.len() as f64;
    if mse == 0.0 {
        Ok(f64::INFINITY)
    } else {
        Ok(10.0 * (1.0 / mse).log10())
    }
}

/// Where an image came from, carried into reports verbatim.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct Provenance {
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exposure_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub configuration: Option<String>,
}

/// One image's metrics, serialized with a stable field order.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MetricsReport {
    pub schema_version: u32,
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exposure_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub configuration: Option<String>,
    pub width: u32,
    pub height: u32,
    pub bit_depth: u8,
    pub contrast: f64,
    pub entropy_bits: f64,
    pub sharpness: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ms_ssim: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ms_ssim_scales: Option<u8>,
    #[serde(default, with = "infinite_db", skip_serializing_if = "Option::is_none")]
    pub psnr_db: Option<f64>,
}

pub const METRICS_SCHEMA_VERSION: u32 = 1;

/// A batch entry: either a report or a per-file error. Batches never
/// abort on one bad input.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum ReportEntry {
    Ok(MetricsReport),
    Error { source: String, error: String },
}

/// Compute every applicable metric for one image. Reference-based metrics
/// (MS-SSIM, PSNR) are included only when a reference is supplied.
pub fn report(
    img: &IntensityImage,
    reference: Option<&IntensityImage>,
    provenance: Provenance,
) -> Result<MetricsReport, MetricsError> {
    let (ms, scales, db) = match reference {
        Some(reference) => {
            let ms = ms_ssim(img, reference)?;
            (Some(ms.value), Some(ms.scales), Some(psnr(img, reference)?))
        }
        None => (None, None, None),
    };
    Ok(MetricsReport {
        schema_version: METRICS_SCHEMA_VERSION,
        source: provenance.source,
        exposure_s: provenance.exposure_s,
        configuration: provenance.configuration,
        width: img.width,
        height: img.height,
        bit_depth: img.bit_depth,
        contrast: rms_contrast(img)?,
        entropy_bits: entropy(img)?,
        sharpness: sharpness(img)?,
        ms_ssim: ms,
        ms_ssim_scales: scales,
        psnr_db: db,
    })
}

/// JSON cannot carry IEEE infinities; identical-image PSNR serializes as
/// the string "inf" and parses back to `f64::INFINITY`.
mod infinite_db {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(value: &Option<f64>, ser: S) -> Result<S::Ok, S::Error> {
        match value {
            None => ser.serialize_none(),
            Some(v) if v.is_infinite() => "inf".serialize(ser),
            Some(v) => v.serialize(ser),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Option<f64>, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Text(String),
        }
        match Option::<Raw>::deserialize(de)? {
            None => Ok(None),
            Some(Raw::Number(v)) => Ok(Some(v)),
            Some(Raw::Text(s)) if s == "inf" => Ok(Some(f64::INFINITY)),
            Some(Raw::Text(s)) => Err(serde::de::Error::custom(format!(
                "expected a number or \"inf\", got {s:?}"
            ))),
        }
    }
}

//! Inverting the forward model: per-pixel MLE flux images from count
//! data, and joint maximum-likelihood fusion of multi-exposure binary
//! stacks into one HDR flux estimate.
//!
//! For a stack of exposures j with counts n_j over N_j frames at binary
//! exposure τ_j, the per-pixel log-likelihood in the total rate
//! ρ = φη + r_d is
//!
//! ```text
//! ℓ(ρ) = Σ_j [ n_j ln(1 − e^(−ρτ_j)) − (N_j − n_j) ρτ_j ]
//! ```
//!
//! which is concave in ρ. The maximizer is found by Newton's method on
//! the score with a sign-maintained bracket and bisection fallback, then
//! transformed back to flux: φ̂ = max(0, (ρ̂ − r_d)/η). Working in ρ keeps
//! η and r_d out of the inner loop and conditions the curvature.
//!
//! Saturated exposures (n_j = N_j) still contribute their likelihood
//! term — it is exactly the information that makes a short saturated
//! exposure a useful lower bound — but are excluded from bracketing,
//! which comes from the shortest unsaturated exposure.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::bitstream::CountImage;
use crate::photon::{mle_flux, PhotonError, SensorConfig};
use crate::simulator::FluxMap;

#[derive(Debug, Error)]
pub enum ReconstructionError {
    #[error("exposure stack is empty")]
    EmptyStack,
    #[error("stack entry {index} is {got_w}x{got_h}, expected {want_w}x{want_h}")]
    StackDimensionMismatch {
        index: usize,
        got_w: u32,
        got_h: u32,
        want_w: u32,
        want_h: u32,
    },
    #[error("stack entry {index} has an invalid binary exposure {tau}")]
    InvalidTau { index: usize, tau: f64 },
    #[error("stack entry {index} has zero frames")]
    ZeroFrames { index: usize },
    #[error("count image {0}x{1} does not match sensor {2}x{3}")]
    SensorDimensionMismatch(u32, u32, u32, u32),
    #[error("invalid sensitivity parameters: {0}")]
    InvalidParameters(String),
    #[error("fewer than 2 valid pixels, dynamic range undefined")]
    NoValidPixels,
    #[error("robust flux minimum is zero, dynamic range unbounded")]
    DegenerateRange,
    #[error(transparent)]
    Photon(#[from] PhotonError),
}

/// Per-pixel MLE flux image plus its saturation mask.
#[derive(Debug, Clone)]
pub struct FluxImageEstimate {
    pub flux: FluxMap,
    /// True where every frame detected (estimate is the n = N − 1 floor).
    pub saturated: Vec<bool>,
}

/// Apply the single-exposure MLE inversion to every pixel of a count
/// image. Saturated pixels are flagged and floored, never infinite.
pub fn estimate_flux_image(
    ci: &CountImage,
    cfg: &SensorConfig,
) -> Result<FluxImageEstimate, ReconstructionError> {
    cfg.validate()?;
    if ci.width() != cfg.width || ci.height() != cfg.height {
        return Err(ReconstructionError::SensorDimensionMismatch(
            ci.width(),
            ci.height(),
            cfg.width,
            cfg.height,
        ));
    }
    let n_frames = u64::from(ci.n_frames());
    let mut flux = Vec::with_capacity(ci.counts().len());
    let mut saturated = Vec::with_capacity(ci.counts().len());
    for &n in ci.counts() {
        let est = mle_flux(u64::from(n), n_frames, cfg)?;
        flux.push(est.phi_hat);
        saturated.push(est.saturated);
    }
    Ok(FluxImageEstimate {
        flux: FluxMap::new(ci.width(), ci.height(), flux)
            .expect("MLE flux values are finite and nonnegative"),
        saturated,
    })
}

/// One exposure of a multi-exposure stack.
#[derive(Debug, Clone)]
pub struct ExposureEntry {
    pub counts: CountImage,
    /// Binary frame exposure τ_j in seconds.
    pub tau_bin: f64,
}

/// Count images of the same scene at different binary exposures, sharing
/// sensitivity parameters.
#[derive(Debug, Clone)]
pub struct ExposureStack {
    entries: Vec<ExposureEntry>,
    eta: f64,
    dark_rate: f64,
    width: u32,
    height: u32,
}

impl ExposureStack {
    pub fn new(
        entries: Vec<ExposureEntry>,
        eta: f64,
        dark_rate: f64,
    ) -> Result<Self, ReconstructionError> {
        let first = entries.first().ok_or(ReconstructionError::EmptyStack)?;
        let (width, height) = (first.counts.width(), first.counts.height());
        for (index, entry) in entries.iter().enumerate() {
            if entry.counts.width() != width || entry.counts.height() != height {
                return Err(ReconstructionError::StackDimensionMismatch {
                    index,
                    got_w: entry.counts.width(),
                    got_h: entry.counts.height(),
                    want_w: width,
                    want_h: height,
                });
            }
            if !(entry.tau_bin > 0.0 && entry.tau_bin.is_finite()) {
                return Err(ReconstructionError::InvalidTau {
                    index,
                    tau: entry.tau_bin,
                });
            }
            if entry.counts.n_frames() == 0 {
                return Err(ReconstructionError::ZeroFrames { index });
            }
        }
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(ReconstructionError::InvalidParameters(format!(
                "eta must be in (0, 1], got {eta}"
            )));
        }
        if !(dark_rate >= 0.0 && dark_rate.is_finite()) {
            return Err(ReconstructionError::InvalidParameters(format!(
                "dark_rate must be finite and nonnegative, got {dark_rate}"
            )));
        }
        Ok(Self {
            entries,
            eta,
            dark_rate,
            width,
            height,
        })
    }

    pub fn entries(&self) -> &[ExposureEntry] {
        &self.entries
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn dark_rate(&self) -> f64 {
        self.dark_rate
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }
}

/// Classification of one fused pixel. The variants are mutually
/// exclusive by construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[repr(u8)]
pub enum PixelFlag {
    /// Converged maximum-likelihood estimate.
    Valid = 0,
    /// Every frame of every exposure detected; flux is a lower bound.
    Saturated = 1,
    /// No detections in any exposure; flux is 0.
    Underflow = 2,
    /// Solver did not converge; flux value is not meaningful.
    Unconverged = 3,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct SolverStats {
    pub valid: usize,
    pub saturated: usize,
    pub underflow: usize,
    pub unconverged: usize,
    pub max_iterations: u32,
    pub total_iterations: u64,
}

/// Joint maximum-likelihood HDR fusion result.
#[derive(Debug, Clone)]
pub struct HdrResult {
    pub flux: FluxMap,
    /// Per-pixel classification, same layout as the flux map.
    pub flags: Vec<PixelFlag>,
    /// 20·log10(p99.9/p0.1) over valid pixels; `None` when undefined.
    pub dynamic_range_db: Option<f64>,
    pub stats: SolverStats,
}

impl HdrResult {
    pub fn saturated_mask(&self) -> impl Iterator<Item = bool> + '_ {
        self.flags.iter().map(|&f| f == PixelFlag::Saturated)
    }

    pub fn underflow_mask(&self) -> impl Iterator<Item = bool> + '_ {
        self.flags.iter().map(|&f| f == PixelFlag::Underflow)
    }

    pub fn is_valid(&self, pixel: usize) -> bool {
        self.flags[pixel] == PixelFlag::Valid
    }
}

/// Per-pixel observation view into a stack.
struct PixelObs<'a> {
    entries: &'a [ExposureEntry],
    pixel: usize,
}

impl PixelObs<'_> {
    fn iter(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        // (n, N, tau)
        self.entries.iter().map(move |e| {
            (
                f64::from(e.counts.counts()[self.pixel]),
                f64::from(e.counts.n_frames()),
                e.tau_bin,
            )
        })
    }

    /// dℓ/dρ = Σ τ (n/(e^(ρτ) − 1) − (N − n))
    fn score(&self, rho: f64) -> f64 {
        self.iter()
            .map(|(n, nf, tau)| tau * (n / (rho * tau).exp_m1() - (nf - n)))
            .sum()
    }

    /// d²ℓ/dρ² = −Σ n τ² / ((e^(ρτ) − 1)(1 − e^(−ρτ))); stays finite as
    /// ρτ grows because the divergent exponentials cancel.
    fn curvature(&self, rho: f64) -> f64 {
        -self
            .iter()
            .map(|(n, _, tau)| {
                let x = rho * tau;
                n * tau * tau / (x.exp_m1() * -(-x).exp_m1())
            })
            .sum::<f64>()
    }

    #[cfg(test)]
    fn log_likelihood(&self, rho: f64) -> f64 {
        self.iter()
            .map(|(n, nf, tau)| {
                let x = rho * tau;
                n * (-(-x).exp_m1()).ln() - (nf - n) * x
            })
            .sum()
    }
}

enum PixelSolve {
    Solved { rho: f64, iterations: u32 },
    Saturated,
    Underflow,
    Unconverged,
}

const MAX_NEWTON_ITERATIONS: u32 = 100;
const RELATIVE_STEP_TOLERANCE: f64 = 1e-10;

fn solve_pixel(obs: &PixelObs<'_>) -> PixelSolve {
    let mut total_detections = 0.0;
    let mut all_saturated = true;
    let mut bracket_rate = 0.0f64; // inverted rate of the shortest unsaturated exposure
    let mut shortest_unsaturated = f64::INFINITY;
    let mut fallback_rate = 0.0f64;
    for (n, nf, tau) in obs.iter() {
        total_detections += n;
        if n < nf {
            all_saturated = false;
            if tau < shortest_unsaturated {
                shortest_unsaturated = tau;
                bracket_rate = -(-n / nf).ln_1p() / tau;
            }
            if n > 0.0 {
                fallback_rate = fallback_rate.max(-(-n / nf).ln_1p() / tau);
            }
        } else {
            // indicative floor for saturated exposures, bracketing fallback only
            fallback_rate = fallback_rate.max((nf + 1.0).ln() / tau);
        }
    }
    if total_detections == 0.0 {
        return PixelSolve::Underflow;
    }
    if all_saturated {
        return PixelSolve::Saturated;
    }

    let mut hi = 10.0 * bracket_rate;
    if hi <= 0.0 {
        // the shortest unsaturated exposure saw nothing; expand from the
        // most informative exposure instead
        hi = 10.0 * fallback_rate;
    }
    let mut lo = 0.0f64; // score → +inf as ρ → 0⁺ when any n > 0
    let mut expansions = 0;
    while obs.score(hi) > 0.0 {
        expansions += 1;
        if expansions > 64 || !hi.is_finite() {
            return PixelSolve::Unconverged;
        }
        lo = hi;
        hi *= 2.0;
    }

    let mut x = if bracket_rate > 0.0 && bracket_rate < hi {
        bracket_rate.max(lo.max(f64::MIN_POSITIVE))
    } else {
        0.5 * (lo + hi)
    };
    if x <= lo || x >= hi {
        x = 0.5 * (lo + hi);
    }

    for iteration in 1..=MAX_NEWTON_ITERATIONS {
        let s = obs.score(x);
        if s == 0.0 {
            return PixelSolve::Solved {
                rho: x,
                iterations: iteration,
            };
        }
        if s > 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let c = obs.curvature(x);
        let mut next = x - s / c;
        if !next.is_finite() || next <= lo || next >= hi {
            next = 0.5 * (lo + hi);
        }
        let step = (next - x).abs();
        x = next;
        if step <= RELATIVE_STEP_TOLERANCE * x.abs() {
            return PixelSolve::Solved {
                rho: x,
                iterations: iteration,
            };
        }
    }
    PixelSolve::Unconverged
}

/// Fuse a multi-exposure stack into one flux estimate per pixel by
/// maximizing the joint Bernoulli likelihood.
///
/// Pixels saturated in every exposure carry the largest single-exposure
/// floor and are flagged; pixels with no detections anywhere are flagged
/// underflow with zero flux; a non-converged solve flags the pixel rather
/// than aborting the image.
pub fn hdr_fuse(stack: &ExposureStack) -> Result<HdrResult, ReconstructionError> {
    let n_pixels = stack.width as usize * stack.height as usize;
    let eta = stack.eta;
    let dark_rate = stack.dark_rate;

    let flux_from_rate = |rho: f64| ((rho - dark_rate) / eta).max(0.0);
    let saturation_floor = |obs: &PixelObs<'_>| {
        obs.iter()
            .map(|(_, nf, tau)| nf.ln() / tau)
            .fold(0.0f64, f64::max)
    };

    let solved: Vec<(f64, PixelFlag, u32)> = (0..n_pixels)
        .into_par_iter()
        .map(|pixel| {
            let obs = PixelObs {
                entries: &stack.entries,
                pixel,
            };
            match solve_pixel(&obs) {
                PixelSolve::Solved { rho, iterations } => {
                    (flux_from_rate(rho), PixelFlag::Valid, iterations)
                }
                PixelSolve::Saturated => {
                    (flux_from_rate(saturation_floor(&obs)), PixelFlag::Saturated, 0)
                }
                PixelSolve::Underflow => (0.0, PixelFlag::Underflow, 0),
                PixelSolve::Unconverged => (0.0, PixelFlag::Unconverged, MAX_NEWTON_ITERATIONS),
            }
        })
        .collect();

    let mut stats = SolverStats::default();
    let mut flux = Vec::with_capacity(n_pixels);
    let mut flags = Vec::with_capacity(n_pixels);
    for (phi, flag, iterations) in solved {
        match flag {
            PixelFlag::Valid => stats.valid += 1,
            PixelFlag::Saturated => stats.saturated += 1,
            PixelFlag::Underflow => stats.underflow += 1,
            PixelFlag::Unconverged => stats.unconverged += 1,
        }
        stats.max_iterations = stats.max_iterations.max(iterations);
        stats.total_iterations += u64::from(iterations);
        flux.push(phi);
        flags.push(flag);
    }

    let flux = FluxMap::new(stack.width, stack.height, flux)
        .expect("fused flux values are finite and nonnegative");
    let mut result = HdrResult {
        flux,
        flags,
        dynamic_range_db: None,
        stats,
    };
    result.dynamic_range_db = dynamic_range_db(&result).ok();
    Ok(result)
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let rank = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let t = rank - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * t
}

/// Robust dynamic range over valid pixels: 20·log10(p99.9 / p0.1).
pub fn dynamic_range_db(result: &HdrResult) -> Result<f64, ReconstructionError> {
    let mut values: Vec<f64> = result
        .flags
        .iter()
        .zip(result.flux.as_slice())
        .filter(|(&flag, _)| flag == PixelFlag::Valid)
        .map(|(_, &phi)| phi)
        .collect();
    if values.len() < 2 {
        return Err(ReconstructionError::NoValidPixels);
    }
    values.sort_by(|a, b| a.partial_cmp(b).expect("flux values are finite"));
    let lo = percentile(&values, 0.1);
    let hi = percentile(&values, 99.9);
    if lo <= 0.0 {
        return Err(ReconstructionError::DegenerateRange);
    }
    Ok(20.0 * (hi / lo).log10())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn uniform_counts(width: u32, height: u32, n: u32, n_frames: u32) -> CountImage {
        CountImage::new(
            width,
            height,
            n_frames,
            vec![n; (width * height) as usize],
        )
        .unwrap()
    }

    fn unit_cfg(width: u32, height: u32) -> SensorConfig {
        SensorConfig::new(1.0, 0.0, 1.0, width, height).unwrap()
    }

    #[test]
    fn zero_counts_give_zero_flux() {
        let ci = uniform_counts(4, 4, 0, 1000);
        let est = estimate_flux_image(&ci, &unit_cfg(4, 4)).unwrap();
        assert!(est.flux.as_slice().iter().all(|&v| v == 0.0));
        assert!(est.saturated.iter().all(|&s| !s));
    }

    #[test]
    fn uniform_counts_match_direct_inversion() {
        let ci = uniform_counts(4, 4, 632, 1000);
        let est = estimate_flux_image(&ci, &unit_cfg(4, 4)).unwrap();
        let expected = -(1.0f64 - 0.632).ln();
        for &v in est.flux.as_slice() {
            assert_relative_eq!(v, expected, max_relative = 1e-14);
        }
    }

    #[test]
    fn full_counts_set_saturation_mask() {
        let ci = uniform_counts(4, 4, 1000, 1000);
        let est = estimate_flux_image(&ci, &unit_cfg(4, 4)).unwrap();
        assert!(est.saturated.iter().all(|&s| s));
    }

    #[test]
    fn single_exposure_fusion_matches_direct_estimate() {
        for &(n, n_frames) in &[(1u32, 1000u32), (137, 1000), (632, 1000), (999, 1000)] {
            let ci = uniform_counts(2, 2, n, n_frames);
            let direct = estimate_flux_image(&ci, &unit_cfg(2, 2)).unwrap();
            let stack = ExposureStack::new(
                vec![ExposureEntry {
                    counts: ci,
                    tau_bin: 1.0,
                }],
                1.0,
                0.0,
            )
            .unwrap();
            let fused = hdr_fuse(&stack).unwrap();
            for (a, b) in fused.flux.as_slice().iter().zip(direct.flux.as_slice()) {
                assert_relative_eq!(a, b, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn fully_saturated_stack_sets_saturated_mask() {
        let stack = ExposureStack::new(
            vec![
                ExposureEntry {
                    counts: uniform_counts(2, 2, 100, 100),
                    tau_bin: 1.0,
                },
                ExposureEntry {
                    counts: uniform_counts(2, 2, 100, 100),
                    tau_bin: 1e-3,
                },
            ],
            1.0,
            0.0,
        )
        .unwrap();
        let fused = hdr_fuse(&stack).unwrap();
        assert!(fused.saturated_mask().all(|s| s));
        assert_eq!(fused.stats.saturated, 4);
        // floor comes from the shortest exposure: ln(100)/1e-3
        let floor = 100.0f64.ln() / 1e-3;
        for &v in fused.flux.as_slice() {
            assert_relative_eq!(v, floor, max_relative = 1e-12);
        }
    }

    #[test]
    fn all_zero_stack_sets_underflow_mask() {
        let stack = ExposureStack::new(
            vec![
                ExposureEntry {
                    counts: uniform_counts(2, 2, 0, 100),
                    tau_bin: 1.0,
                },
                ExposureEntry {
                    counts: uniform_counts(2, 2, 0, 100),
                    tau_bin: 2.0,
                },
            ],
            1.0,
            0.0,
        )
        .unwrap();
        let fused = hdr_fuse(&stack).unwrap();
        assert!(fused.underflow_mask().all(|s| s));
        assert!(fused.flux.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn masks_are_mutually_exclusive() {
        // one saturated pixel, one underflow pixel, two valid
        let counts_a = CountImage::new(2, 2, 10, vec![10, 0, 5, 7]).unwrap();
        let counts_b = CountImage::new(2, 2, 10, vec![10, 0, 9, 2]).unwrap();
        let stack = ExposureStack::new(
            vec![
                ExposureEntry {
                    counts: counts_a,
                    tau_bin: 1.0,
                },
                ExposureEntry {
                    counts: counts_b,
                    tau_bin: 3.0,
                },
            ],
            0.8,
            0.1,
        )
        .unwrap();
        let fused = hdr_fuse(&stack).unwrap();
        assert_eq!(fused.flags[0], PixelFlag::Saturated);
        assert_eq!(fused.flags[1], PixelFlag::Underflow);
        assert_eq!(fused.flags[2], PixelFlag::Valid);
        assert_eq!(fused.flags[3], PixelFlag::Valid);
        assert_eq!(fused.stats.valid, 2);
    }

    #[test]
    fn mixed_saturated_exposure_raises_the_estimate() {
        // short exposure saturated, long exposure partial: the joint MLE
        // must be at least the long exposure's own estimate
        let short = ExposureEntry {
            counts: uniform_counts(1, 1, 100, 100),
            tau_bin: 1e-2,
        };
        let long_entry = ExposureEntry {
            counts: uniform_counts(1, 1, 70, 100),
            tau_bin: 1.0,
        };
        let single = ExposureStack::new(vec![long_entry.clone()], 1.0, 0.0).unwrap();
        let both = ExposureStack::new(vec![short, long_entry], 1.0, 0.0).unwrap();
        let phi_single = hdr_fuse(&single).unwrap().flux.as_slice()[0];
        let phi_both = hdr_fuse(&both).unwrap().flux.as_slice()[0];
        assert!(phi_both > phi_single);
    }

    #[test]
    fn dark_count_correction_clamps_at_zero() {
        let stack = ExposureStack::new(
            vec![ExposureEntry {
                counts: uniform_counts(2, 1, 1, 1000),
                tau_bin: 1.0,
            }],
            1.0,
            10.0, // dark rate far above the observed rate
        )
        .unwrap();
        let fused = hdr_fuse(&stack).unwrap();
        assert!(fused.flux.as_slice().iter().all(|&v| v == 0.0));
        assert!(fused.flags.iter().all(|&f| f == PixelFlag::Valid));
    }

    #[test]
    fn uniform_valid_flux_has_zero_dynamic_range() {
        let stack = ExposureStack::new(
            vec![ExposureEntry {
                counts: uniform_counts(4, 4, 500, 1000),
                tau_bin: 1.0,
            }],
            1.0,
            0.0,
        )
        .unwrap();
        let fused = hdr_fuse(&stack).unwrap();
        let db = fused.dynamic_range_db.unwrap();
        assert!(db.abs() < 1e-9, "db = {db}");
    }

    #[test]
    fn dynamic_range_of_factor_ten_is_twenty_db() {
        // enough pixels that the 0.1/99.9 percentiles sit on the plateaus
        let mut flux = vec![10.0; 1000];
        flux.extend(vec![100.0; 1000]);
        let mut result = HdrResult {
            flux: FluxMap::new(2000, 1, flux).unwrap(),
            flags: vec![PixelFlag::Valid; 2000],
            dynamic_range_db: None,
            stats: SolverStats::default(),
        };
        result.dynamic_range_db = Some(dynamic_range_db(&result).unwrap());
        assert_relative_eq!(result.dynamic_range_db.unwrap(), 20.0, max_relative = 1e-12);

        let mut flux = vec![1e2; 1000];
        flux.extend(vec![1e7; 1000]);
        result.flux = FluxMap::new(2000, 1, flux).unwrap();
        assert_relative_eq!(
            dynamic_range_db(&result).unwrap(),
            100.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn dynamic_range_requires_valid_pixels() {
        let result = HdrResult {
            flux: FluxMap::new(2, 1, vec![1.0, 2.0]).unwrap(),
            flags: vec![PixelFlag::Saturated; 2],
            dynamic_range_db: None,
            stats: SolverStats::default(),
        };
        assert!(matches!(
            dynamic_range_db(&result),
            Err(ReconstructionError::NoValidPixels)
        ));
    }

    #[test]
    fn empty_stack_is_rejected() {
        assert!(matches!(
            ExposureStack::new(Vec::new(), 1.0, 0.0),
            Err(ReconstructionError::EmptyStack)
        ));
    }

    #[test]
    fn mismatched_stack_dimensions_are_rejected() {
        let a = uniform_counts(2, 2, 1, 10);
        let b = uniform_counts(3, 2, 1, 10);
        assert!(matches!(
            ExposureStack::new(
                vec![
                    ExposureEntry {
                        counts: a,
                        tau_bin: 1.0
                    },
                    ExposureEntry {
                        counts: b,
                        tau_bin: 2.0
                    }
                ],
                1.0,
                0.0
            ),
            Err(ReconstructionError::StackDimensionMismatch { .. })
        ));
    }

    #[test]
    fn log_likelihood_is_maximized_at_the_solution() {
        let counts_a = CountImage::new(1, 1, 1000, vec![400]).unwrap();
        let counts_b = CountImage::new(1, 1, 1000, vec![950]).unwrap();
        let entries = vec![
            ExposureEntry {
                counts: counts_a,
                tau_bin: 1e-3,
            },
            ExposureEntry {
                counts: counts_b,
                tau_bin: 5e-3,
            },
        ];
        let stack = ExposureStack::new(entries, 1.0, 0.0).unwrap();
        let fused = hdr_fuse(&stack).unwrap();
        let rho_hat = fused.flux.as_slice()[0]; // eta 1, dark 0
        let obs = PixelObs {
            entries: &stack.entries,
            pixel: 0,
        };
        let ll_hat = obs.log_likelihood(rho_hat);
        for k in 1..100 {
            let rho = rho_hat * (0.5 + 0.01 * k as f64);
            assert!(obs.log_likelihood(rho) <= ll_hat + 1e-9);
        }
    }
}

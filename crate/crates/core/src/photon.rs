//! Closed-form photon statistics of a SPAD pixel.
//!
//! Photon arrivals at a pixel are Poisson with mean `λ = (φη + r_d)τ`,
//! where `φ` is the photon flux (photons/second), `η` the effective
//! detection efficiency (quantum efficiency × fill factor), `r_d` the dark
//! count rate, and `τ` the binary frame exposure. The pixel cannot count
//! past one, so the per-frame detection is Bernoulli with
//! `p = 1 − e^(−λ)`. Everything in this module is the exact algebra of
//! that model: the forward map, its maximum-likelihood inverse, the Fisher
//! information of a binary frame, and the exposure that maximizes it.
//!
//! All functions are pure; there is no shared state.

use std::sync::OnceLock;

use statrs::function::gamma::ln_gamma;
use thiserror::Error;

/// Two-sided 95% normal quantile used by the Wilson score interval.
const WILSON_Z_95: f64 = 1.959963984540054;

#[derive(Debug, Error)]
pub enum PhotonError {
    #[error("photon flux must be finite and nonnegative, got {0}")]
    InvalidFlux(f64),
    #[error("lambda must be finite and nonnegative, got {0}")]
    InvalidLambda(f64),
    #[error("invalid sensor config: {0}")]
    InvalidConfig(String),
    #[error("detection count {n} exceeds frame count {n_frames}")]
    CountExceedsFrames { n: u64, n_frames: u64 },
    #[error("frame count must be at least 1")]
    ZeroFrames,
    #[error("total detection rate must be positive, got {0}")]
    NonPositiveRate(f64),
}

/// Static description of the SPAD sensor.
///
/// `eta` folds quantum efficiency and fill factor into a single effective
/// detection efficiency; they enter the likelihood only as a product.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorConfig {
    /// Effective photon detection efficiency, in (0, 1].
    pub eta: f64,
    /// Dark counts per second per pixel (r_d).
    pub dark_rate: f64,
    /// Binary frame exposure time in seconds (τ).
    pub tau_bin: f64,
    /// Sensor width in pixels.
    pub width: u32,
    /// Sensor height in pixels.
    pub height: u32,
}

impl SensorConfig {
    pub fn new(
        eta: f64,
        dark_rate: f64,
        tau_bin: f64,
        width: u32,
        height: u32,
    ) -> Result<Self, PhotonError> {
        let cfg = Self {
            eta,
            dark_rate,
            tau_bin,
            width,
            height,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), PhotonError> {
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(PhotonError::InvalidConfig(format!(
                "eta must be in (0, 1], got {}",
                self.eta
            )));
        }
        if !(self.dark_rate >= 0.0 && self.dark_rate.is_finite()) {
            return Err(PhotonError::InvalidConfig(format!(
                "dark_rate must be finite and nonnegative, got {}",
                self.dark_rate
            )));
        }
        if !(self.tau_bin > 0.0 && self.tau_bin.is_finite()) {
            return Err(PhotonError::InvalidConfig(format!(
                "tau_bin must be finite and positive, got {}",
                self.tau_bin
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(PhotonError::InvalidConfig(format!(
                "sensor must be at least 1x1, got {}x{}",
                self.width, self.height
            )));
        }
        Ok(())
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }
}

/// Per-frame detection statistics of a pixel at a given flux.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhotonStatistics {
    /// Expected Geiger triggers per frame, λ = (φη + r_d)τ.
    pub lambda: f64,
    /// Per-frame detection probability, 1 − e^(−λ). Strictly below 1 for
    /// finite λ in exact arithmetic; in f64 it rounds to 1.0 once
    /// λ ≳ 37, where e^(−λ) falls under half an ulp of 1.
    pub p_detect: f64,
}

/// Maximum-likelihood flux estimate from `n` detections in `N` frames.
#[derive(Debug, Clone, PartialEq)]
pub struct FluxEstimate {
    /// Estimated photon flux φ̂ in photons/second, clamped at 0 after
    /// dark-count correction.
    pub phi_hat: f64,
    /// Set when every frame detected; `phi_hat` then carries the lower
    /// bound implied by n = N − 1 instead of the divergent MLE.
    pub saturated: bool,
    /// Lower 95% confidence bound (Wilson interval on p̂, mapped through
    /// the rate inversion).
    pub ci_low: f64,
    /// Upper 95% confidence bound; `+inf` when saturated.
    pub ci_high: f64,
    /// Detection count n the estimate was derived from.
    pub n_detections: u64,
    /// Frame count N the estimate was derived from.
    pub n_frames: u64,
}

impl FluxEstimate {
    /// Empirical detection fraction p̂ = n/N.
    pub fn p_hat(&self) -> f64 {
        self.n_detections as f64 / self.n_frames as f64
    }
}

/// Poisson probability mass λ^k e^(−λ)/k!, evaluated in log space.
pub fn poisson_pmf(k: u64, lambda: f64) -> Result<f64, PhotonError> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(PhotonError::InvalidLambda(lambda));
    }
    if lambda == 0.0 {
        return Ok(if k == 0 { 1.0 } else { 0.0 });
    }
    let kf = k as f64;
    Ok((kf * lambda.ln() - lambda - ln_gamma(kf + 1.0)).exp())
}

/// Forward model: expected detections per frame at flux `phi`.
pub fn expected_detections(phi: f64, cfg: &SensorConfig) -> Result<PhotonStatistics, PhotonError> {
    cfg.validate()?;
    if !(phi >= 0.0 && phi.is_finite()) {
        return Err(PhotonError::InvalidFlux(phi));
    }
    let lambda = (phi * cfg.eta + cfg.dark_rate) * cfg.tau_bin;
    Ok(PhotonStatistics {
        lambda,
        p_detect: -(-lambda).exp_m1(),
    })
}

/// Total Geiger rate (φη + r_d) implied by a detection fraction `p`.
///
/// This is the Bernoulli-model inversion λ̂/τ = −ln(1 − p)/τ; it diverges
/// as `p → 1`.
pub fn detection_rate(p: f64, tau_bin: f64) -> f64 {
    -(-p).ln_1p() / tau_bin
}

/// Wilson score interval for a binomial proportion. At p̂ = 0 the lower
/// bound is exactly 0 and at p̂ = 1 the upper is exactly 1; those are set
/// directly rather than left to rounding.
fn wilson_interval(n: u64, n_frames: u64, z: f64) -> (f64, f64) {
    let nf = n_frames as f64;
    let p = n as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = (z / denom) * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
    let low = if n == 0 { 0.0 } else { (center - half).max(0.0) };
    let high = if n == n_frames {
        1.0
    } else {
        (center + half).min(1.0)
    };
    (low, high)
}

/// Maximum-likelihood flux from `n` detections over `n_frames` frames.
///
/// The total rate −ln(1 − n/N)/τ is estimated first, then dark-count
/// corrected: φ̂ = max(0, (rate − r_d)/η). When n = N the MLE diverges;
/// the estimate is flagged `saturated` and floored at the n = N − 1 value
/// so downstream fusion has a usable lower bound.
pub fn mle_flux(n: u64, n_frames: u64, cfg: &SensorConfig) -> Result<FluxEstimate, PhotonError> {
    cfg.validate()?;
    if n_frames == 0 {
        return Err(PhotonError::ZeroFrames);
    }
    if n > n_frames {
        return Err(PhotonError::CountExceedsFrames { n, n_frames });
    }

    let flux_from_p = |p: f64| -> f64 {
        if p >= 1.0 {
            f64::INFINITY
        } else {
            ((detection_rate(p, cfg.tau_bin) - cfg.dark_rate) / cfg.eta).max(0.0)
        }
    };

    let saturated = n == n_frames;
    let phi_hat = if saturated {
        flux_from_p((n_frames - 1) as f64 / n_frames as f64)
    } else {
        flux_from_p(n as f64 / n_frames as f64)
    };

    let (p_low, p_high) = wilson_interval(n, n_frames, WILSON_Z_95);
    let ci_low = flux_from_p(p_low);
    let ci_high = if saturated {
        f64::INFINITY
    } else {
        flux_from_p(p_high)
    };

    Ok(FluxEstimate {
        phi_hat,
        saturated,
        ci_low,
        ci_high,
        n_detections: n,
        n_frames,
    })
}

/// Fisher information about φ carried by one binary frame.
///
/// Degenerate at λ = 0, where the per-frame information grows without
/// bound as λ → 0⁺ and no finite value is meaningful.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FisherInformation {
    Finite(f64),
    Divergent,
}

impl FisherInformation {
    /// Numeric value, `+inf` for the divergent case.
    pub fn value(self) -> f64 {
        match self {
            FisherInformation::Finite(v) => v,
            FisherInformation::Divergent => f64::INFINITY,
        }
    }
}

/// Per-frame Fisher information I(φ) = (ητ)² e^(−λ)/(1 − e^(−λ)).
pub fn fisher_information_per_frame(
    phi: f64,
    cfg: &SensorConfig,
) -> Result<FisherInformation, PhotonError> {
    let stats = expected_detections(phi, cfg)?;
    if stats.lambda == 0.0 {
        return Ok(FisherInformation::Divergent);
    }
    let eta_tau = cfg.eta * cfg.tau_bin;
    // e^(−λ)/(1 − e^(−λ)) = 1/(e^λ − 1)
    Ok(FisherInformation::Finite(
        eta_tau * eta_tau / stats.lambda.exp_m1(),
    ))
}

/// The per-frame expectation λ* that maximizes Fisher information per
/// frame at a fixed frame count, i.e. the argmax of
/// g(λ) = λ² e^(−λ)/(1 − e^(−λ)). Found once by golden-section search on
/// [0.1, 10], where g is unimodal.
pub fn optimal_lambda() -> f64 {
    static LAMBDA_STAR: OnceLock<f64> = OnceLock::new();
    *LAMBDA_STAR.get_or_init(|| {
        let g = |lambda: f64| lambda * lambda / lambda.exp_m1();
        golden_section_max(g, 0.1, 10.0, 1e-12)
    })
}

/// Golden-section maximization of a unimodal function on [lo, hi].
pub(crate) fn golden_section_max(f: impl Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Binary exposure τ* that maximizes per-frame Fisher information for a
/// pixel near `phi_guess`: the τ for which (φη + r_d)τ = λ*.
pub fn optimal_binary_exposure(phi_guess: f64, cfg: &SensorConfig) -> Result<f64, PhotonError> {
    cfg.validate()?;
    if !(phi_guess >= 0.0 && phi_guess.is_finite()) {
        return Err(PhotonError::InvalidFlux(phi_guess));
    }
    let rate = phi_guess * cfg.eta + cfg.dark_rate;
    if rate <= 0.0 {
        return Err(PhotonError::NonPositiveRate(rate));
    }
    Ok(optimal_lambda() / rate)
}

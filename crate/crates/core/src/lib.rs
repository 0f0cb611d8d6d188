//! Simulation and reconstruction toolkit for single-photon (SPAD) cameras.
//!
//! A SPAD pixel reports a single bit per exposure: 1 if at least one photon
//! (or dark count) triggered an avalanche during the binary frame, 0
//! otherwise. This crate models that process end to end:
//!
//! - [`photon`]: closed-form per-pixel statistics — Poisson arrivals,
//!   Bernoulli detection, maximum-likelihood flux inversion, Fisher
//!   information, and exposure optimization.
//! - [`bitstream`]: bit-packed binary frames, the `.sbs` stream container,
//!   and the accumulator that integrates binary frames into n-bit images.
//! - [`simulator`]: synthetic scene generation, Monte-Carlo SPAD stream
//!   sampling, and a modeled conventional camera for comparisons.
//! - [`reconstruction`]: per-pixel MLE flux images and joint
//!   maximum-likelihood HDR fusion of multi-exposure stacks.
//! - [`metrics`]: RMS contrast, entropy, variance-of-Laplacian sharpness,
//!   MS-SSIM, PSNR, and machine-readable reports.
//! - [`pnm`]: PGM (P5) and PFM (Pf) readers/writers used for image and
//!   flux-map interchange.
//!
//! All simulation randomness comes from a counter-based generator
//! ([`rng`]), so output streams are bit-identical regardless of thread
//! count or evaluation order.

pub mod bitstream;
pub mod metrics;
pub mod photon;
pub mod pnm;
pub mod reconstruction;
pub mod rng;
pub mod simulator;

pub use bitstream::{
    accumulate, equivalent_exposure, to_intensity, BinaryFrame, BitplaneStream, CountImage,
    StreamHeader,
};
pub use metrics::{entropy, ms_ssim, psnr, rms_contrast, sharpness, IntensityImage, MetricsReport};
pub use photon::{
    expected_detections, fisher_information_per_frame, mle_flux, optimal_binary_exposure,
    poisson_pmf, FluxEstimate, PhotonStatistics, SensorConfig,
};
pub use reconstruction::{
    dynamic_range_db, estimate_flux_image, hdr_fuse, ExposureEntry, ExposureStack, HdrResult,
};
pub use simulator::{
    generate_scene, simulate_conventional, simulate_spad, ConventionalCameraConfig, FluxMap,
    SceneSpec,
};

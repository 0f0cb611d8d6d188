//! Multi-scale structural similarity.
//!
//! Standard construction: an 11×11 Gaussian window with σ = 1.5 slides
//! over both images (valid positions only); per window the
//! contrast-structure term cs = (2σxy + C2)/(σx² + σy² + C2) is averaged,
//! the images are downsampled by 2×2 means, and the process repeats for
//! up to five scales. At the coarsest scale the luminance term
//! l = (2μxμy + C1)/(μx² + μy² + C1) joins in. The final score is the
//! weighted geometric mean with exponents (0.0448, 0.2856, 0.3001,
//! 0.2363, 0.1333); C1 = 0.01², C2 = 0.03² on the [0, 1] range.
//!
//! Images too small for five dyadic scales use the largest feasible
//! scale count with the leading weights renormalized to sum to one; the
//! result records how many scales were used.

use super::{IntensityImage, MetricsError};

const WINDOW: usize = 11;
const SIGMA: f64 = 1.5;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;
const SCALE_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];

/// MS-SSIM score plus the number of scales it was computed over.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MsSsim {
    /// Similarity in [0, 1]; 1 means identical.
    pub value: f64,
    /// Scales actually used (5 when the image allows it).
    pub scales: u8,
}

struct Plane {
    w: usize,
    h: usize,
    data: Vec<f64>,
}

impl Plane {
    fn from_image(img: &IntensityImage) -> Self {
        Self {
            w: img.width() as usize,
            h: img.height() as usize,
            data: img.normalized(),
        }
    }

    fn downsample_2x2(&self) -> Self {
        let w = self.w / 2;
        let h = self.h / 2;
        let mut data = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                let a = self.data[2 * y * self.w + 2 * x];
                let b = self.data[2 * y * self.w + 2 * x + 1];
                let c = self.data[(2 * y + 1) * self.w + 2 * x];
                let d = self.data[(2 * y + 1) * self.w + 2 * x + 1];
                data.push(0.25 * (a + b + c + d));
            }
        }
        Self { w, h, data }
    }
}

fn gaussian_window() -> ([f64; WINDOW], [f64; WINDOW * WINDOW]) {
    let mut k = [0.0; WINDOW];
    let half = (WINDOW / 2) as f64;
    let mut sum = 0.0;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - half;
        *v = (-d * d / (2.0 * SIGMA * SIGMA)).exp();
        sum += *v;
    }
    for v in &mut k {
        *v /= sum;
    }
    let mut k2 = [0.0; WINDOW * WINDOW];
    for j in 0..WINDOW {
        for i in 0..WINDOW {
            k2[j * WINDOW + i] = k[j] * k[i];
        }
    }
    (k, k2)
}

/// Valid-mode separable Gaussian means of a plane.
fn window_means(p: &Plane, k: &[f64; WINDOW]) -> Plane {
    let ow = p.w - WINDOW + 1;
    let oh = p.h - WINDOW + 1;
    let mut horiz = vec![0.0; ow * p.h];
    for y in 0..p.h {
        for x in 0..ow {
            let mut acc = 0.0;
            for (i, &kv) in k.iter().enumerate() {
                acc += kv * p.data[y * p.w + x + i];
            }
            horiz[y * ow + x] = acc;
        }
    }
    let mut data = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            let mut acc = 0.0;
            for (j, &kv) in k.iter().enumerate() {
                acc += kv * horiz[(y + j) * ow + x];
            }
            data[y * ow + x] = acc;
        }
    }
    Plane { w: ow, h: oh, data }
}

/// Mean contrast-structure over all windows; at the final scale also the
/// mean full SSIM (luminance × cs).
fn scale_scores(x: &Plane, y: &Plane, final_scale: bool) -> (f64, f64) {
    let (k, k2) = gaussian_window();
    let mu_x = window_means(x, &k);
    let mu_y = window_means(y, &k);
    let ow = mu_x.w;
    let oh = mu_x.h;
    let mut cs_sum = 0.0;
    let mut ssim_sum = 0.0;
    for wy in 0..oh {
        for wx in 0..ow {
            let mx = mu_x.data[wy * ow + wx];
            let my = mu_y.data[wy * ow + wx];
            let mut sxx = 0.0;
            let mut syy = 0.0;
            let mut sxy = 0.0;
            for j in 0..WINDOW {
                for i in 0..WINDOW {
                    let wgt = k2[j * WINDOW + i];
                    let dx = x.data[(wy + j) * x.w + wx + i] - mx;
                    let dy = y.data[(wy + j) * y.w + wx + i] - my;
                    sxx += wgt * (dx * dx);
                    syy += wgt * (dy * dy);
                    sxy += wgt * (dx * dy);
                }
            }
            let cs = (2.0 * sxy + C2) / (sxx + syy + C2);
            cs_sum += cs;
            if final_scale {
                let l = (2.0 * (mx * my) + C1) / (mx * mx + my * my + C1);
                ssim_sum += l * cs;
            }
        }
    }
    let n = (ow * oh) as f64;
    (cs_sum / n, ssim_sum / n)
}

/// Largest scale count m ≤ 5 whose coarsest plane still fits the window.
fn feasible_scales(min_dim: usize) -> Option<u8> {
    let mut scales = 0u8;
    for m in 1..=5u8 {
        if (min_dim >> (m - 1)) >= WINDOW {
            scales = m;
        }
    }
    if scales == 0 {
        None
    } else {
        Some(scales)
    }
}

pub(super) fn ms_ssim(
    test: &IntensityImage,
    reference: &IntensityImage,
) -> Result<MsSsim, MetricsError> {
    let min_dim = test.width().min(test.height()) as usize;
    let scales = feasible_scales(min_dim).ok_or(MetricsError::TooSmall(
        test.width(),
        test.height(),
        WINDOW as u32,
    ))?;

    let mut weights = [0.0; 5];
    weights[..scales as usize].copy_from_slice(&SCALE_WEIGHTS[..scales as usize]);
    if scales < 5 {
        let total: f64 = weights[..scales as usize].iter().sum();
        for w in &mut weights[..scales as usize] {
            *w /= total;
        }
    }

    let mut x = Plane::from_image(test);
    let mut y = Plane::from_image(reference);
    let mut value = 1.0;
    for level in 0..scales {
        let final_scale = level == scales - 1;
        let (mean_cs, mean_ssim) = scale_scores(&x, &y, final_scale);
        let factor = if final_scale { mean_ssim } else { mean_cs };
        value *= factor.max(0.0).powf(weights[level as usize]);
        if !final_scale {
            x = x.downsample_2x2();
            y = y.downsample_2x2();
        }
    }
    Ok(MsSsim { value, scales })
}

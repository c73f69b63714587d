//! Image quality metrics: PSNR, SSIM, and both restricted to a region
//! (Canny edges or warping holes).
//!
//! Images are clamped to [0, 1] (linear) before every metric.

use crate::image::Image;

/// Reported PSNR for identical images.
pub const PSNR_CAP: f64 = 99.0;

fn clamp01(v: f32) -> f64 {
    (v as f64).clamp(0.0, 1.0)
}

fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    if mse <= 0.0 {
        return PSNR_CAP;
    }
    (10.0 * (peak * peak / mse).log10()).min(PSNR_CAP)
}

fn same_dims(a: &Image, b: &Image) {
    assert_eq!(
        (a.channels(), a.dims()),
        (b.channels(), b.dims()),
        "metric inputs must match"
    );
}

pub fn psnr(a: &Image, b: &Image, peak: f64) -> f64 {
    same_dims(a, b);
    let se: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (clamp01(x) - clamp01(y)).powi(2))
        .sum();
    psnr_from_mse(se / a.data().len() as f64, peak)
}

/// PSNR over the pixels where `mask` (1 channel) is non-zero.
pub fn psnr_masked(a: &Image, b: &Image, mask: &Image, peak: f64) -> Option<f64> {
    same_dims(a, b);
    let (h, w) = a.dims();
    let mut se = 0.0;
    let mut n = 0usize;
    for y in 0..h {
        for x in 0..w {
            if mask.get(0, y, x) == 0.0 {
                continue;
            }
            for c in 0..a.channels() {
                se += (clamp01(a.get(c, y, x)) - clamp01(b.get(c, y, x))).powi(2);
            }
            n += a.channels();
        }
    }
    (n > 0).then(|| psnr_from_mse(se / n as f64, peak))
}

/// Rec. 601 luma of an RGB image (or the single channel of a grey one).
pub fn luma(img: &Image) -> Vec<f64> {
    let n = img.height() * img.width();
    if img.channels() == 1 {
        return img.plane(0).iter().map(|&v| clamp01(v)).collect();
    }
    (0..n)
        .map(|i| 0.299 * clamp01(img.plane(0)[i]) + 0.587 * clamp01(img.plane(1)[i]) + 0.114 * clamp01(img.plane(2)[i]))
        .collect()
}

fn gaussian_taps() -> [f64; 11] {
    let mut k = [0.0; 11];
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - 5.0;
        *v = (-d * d / (2.0 * 1.5 * 1.5)).exp();
    }
    let s: f64 = k.iter().sum();
    k.map(|v| v / s)
}

/// Separable Gaussian blur with replicated borders.
fn blur(src: &[f64], h: usize, w: usize) -> Vec<f64> {
    let k = gaussian_taps();
    let mut tmp = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = (0..11)
                .map(|i| {
                    let xx = (x as isize + i as isize - 5).clamp(0, w as isize - 1) as usize;
                    k[i] * src[y * w + xx]
                })
                .sum();
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = (0..11)
                .map(|i| {
                    let yy = (y as isize + i as isize - 5).clamp(0, h as isize - 1) as usize;
                    k[i] * tmp[yy * w + x]
                })
                .sum();
        }
    }
    out
}

/// Per-pixel SSIM of the luma planes (11-tap Gaussian, σ = 1.5,
/// `C1 = 0.01²`, `C2 = 0.03²`).
pub fn ssim_map(a: &Image, b: &Image) -> Vec<f64> {
    same_dims(a, b);
    let (h, w) = a.dims();
    let (x, y) = (luma(a), luma(b));
    let prod = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(u, v)| u * v).collect::<Vec<_>>();
    let mx = blur(&x, h, w);
    let my = blur(&y, h, w);
    let sxx = blur(&prod(&x, &x), h, w);
    let syy = blur(&prod(&y, &y), h, w);
    let sxy = blur(&prod(&x, &y), h, w);
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    (0..h * w)
        .map(|i| {
            let (ux, uy) = (mx[i], my[i]);
            let vx = sxx[i] - ux * ux;
            let vy = syy[i] - uy * uy;
            let cxy = sxy[i] - ux * uy;
            ((2.0 * ux * uy + c1) * (2.0 * cxy + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2))
        })
        .collect()
}

pub fn ssim(a: &Image, b: &Image) -> f64 {
    let m = ssim_map(a, b);
    m.iter().sum::<f64>() / m.len() as f64
}

/// Mean SSIM over windows centred in the region.
pub fn ssim_masked(a: &Image, b: &Image, mask: &Image) -> Option<f64> {
    let m = ssim_map(a, b);
    let sel: Vec<f64> = m
        .iter()
        .zip(mask.plane(0))
        .filter(|(_, &k)| k != 0.0)
        .map(|(&v, _)| v)
        .collect();
    (!sel.is_empty()).then(|| sel.iter().sum::<f64>() / sel.len() as f64)
}

/// Canny edge map of an image's luma on the 8-bit scale: Sobel gradients,
/// L1 magnitude, non-maximum suppression and hysteresis between `low`
/// and `high` (8-connected).
pub fn canny(img: &Image, low: f64, high: f64) -> Image {
    let (h, w) = img.dims();
    let y8: Vec<f64> = luma(img).iter().map(|v| (v * 255.0).round()).collect();
    let at = |y: isize, x: isize| -> f64 {
        let yy = y.clamp(0, h as isize - 1) as usize;
        let xx = x.clamp(0, w as isize - 1) as usize;
        y8[yy * w + xx]
    };
    let mut gx = vec![0.0; h * w];
    let mut gy = vec![0.0; h * w];
    let mut mag = vec![0.0; h * w];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let i = y as usize * w + x as usize;
            gx[i] = at(y - 1, x + 1) + 2.0 * at(y, x + 1) + at(y + 1, x + 1)
                - at(y - 1, x - 1)
                - 2.0 * at(y, x - 1)
                - at(y + 1, x - 1);
            gy[i] = at(y + 1, x - 1) + 2.0 * at(y + 1, x) + at(y + 1, x + 1)
                - at(y - 1, x - 1)
                - 2.0 * at(y - 1, x)
                - at(y - 1, x + 1);
            mag[i] = gx[i].abs() + gy[i].abs();
        }
    }
    let m = |y: isize, x: isize| -> f64 {
        if y < 0 || x < 0 || y >= h as isize || x >= w as isize {
            0.0
        } else {
            mag[y as usize * w + x as usize]
        }
    };
    // 0 = suppressed, 1 = weak, 2 = strong.
    let mut class = vec![0u8; h * w];
    let tan22 = (std::f64::consts::PI / 8.0).tan();
    for y in 0..h as isize {
        for x in 0..w as isize {
            let i = y as usize * w + x as usize;
            let v = mag[i];
            if v <= low {
                continue;
            }
            let (ax, ay) = (gx[i].abs(), gy[i].abs());
            let (n1, n2) = if ay <= tan22 * ax {
                (m(y, x - 1), m(y, x + 1))
            } else if ax <= tan22 * ay {
                (m(y - 1, x), m(y + 1, x))
            } else if (gx[i] > 0.0) == (gy[i] > 0.0) {
                (m(y - 1, x - 1), m(y + 1, x + 1))
            } else {
                (m(y - 1, x + 1), m(y + 1, x - 1))
            };
            if v >= n1 && v > n2 {
                class[i] = if v > high { 2 } else { 1 };
            }
        }
    }
    let mut edges = Image::zeros(1, h, w);
    let mut stack: Vec<usize> = (0..h * w).filter(|&i| class[i] == 2).collect();
    for &i in &stack {
        edges.data_mut()[i] = 1.0;
    }
    while let Some(i) = stack.pop() {
        let (y, x) = ((i / w) as isize, (i % w) as isize);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (ny, nx) = (y + dy, x + dx);
                if ny < 0 || nx < 0 || ny >= h as isize || nx >= w as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if class[j] == 1 && edges.data()[j] == 0.0 {
                    edges.data_mut()[j] = 1.0;
                    stack.push(j);
                }
            }
        }
    }
    edges
}

/// Edge thresholds on the 8-bit scale.
pub const CANNY_LOW: f64 = 100.0;
pub const CANNY_HIGH: f64 = 200.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RegionMetrics {
    Value { psnr: f64, ssim: f64 },
    Empty,
}

impl RegionMetrics {
    pub fn psnr(&self) -> Option<f64> {
        match self {
            RegionMetrics::Value { psnr, .. } => Some(*psnr),
            RegionMetrics::Empty => None,
        }
    }

    pub fn ssim(&self) -> Option<f64> {
        match self {
            RegionMetrics::Value { ssim, .. } => Some(*ssim),
            RegionMetrics::Empty => None,
        }
    }
}

pub fn region_metrics(pred: &Image, target: &Image, region: &Image) -> RegionMetrics {
    match (
        psnr_masked(pred, target, region, 1.0),
        ssim_masked(pred, target, region),
    ) {
        (Some(psnr), Some(ssim)) => RegionMetrics::Value { psnr, ssim },
        _ => RegionMetrics::Empty,
    }
}

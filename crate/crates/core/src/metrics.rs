//! PSNR and SSIM on linear `[0, 1]` images, plus the SSIM gradient used by
//! the photometric loss.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::ImageError;
use crate::image::Image;

/// Reported PSNR for identical images.
pub const PSNR_CAP: f64 = 100.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

pub fn mse(a: &Image, b: &Image) -> Result<f64, ImageError> {
    a.check_same_size(b)?;
    let n = a.data.len().max(1) as f64;
    Ok(a.data.iter().zip(&b.data).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n)
}

/// `10 log10(1 / MSE)`, capped at [`PSNR_CAP`].
pub fn psnr(a: &Image, b: &Image) -> Result<f64, ImageError> {
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((-10.0 * m.log10()).min(PSNR_CAP))
}

/// Mean local SSIM over all pixels and channels.
pub fn ssim(a: &Image, b: &Image) -> Result<f64, ImageError> {
    a.check_same_size(b)?;
    let w = SSIM_WINDOW as u32;
    if a.width < w || a.height < w {
        return Err(ImageError::TooSmall { found: a.size(), window: SSIM_WINDOW });
    }
    Ok(ssim_parts(a, b, false).0)
}

/// Mean SSIM and its gradient with respect to `x` (interleaved like the
/// image). Accepts images smaller than the window.
pub fn ssim_with_grad(x: &Image, y: &Image) -> Result<(f64, Vec<f64>), ImageError> {
    x.check_same_size(y)?;
    let (s, g) = ssim_parts(x, y, true);
    Ok((s, g.expect("requested")))
}

fn ssim_parts(x: &Image, y: &Image, want_grad: bool) -> (f64, Option<Vec<f64>>) {
    let (w, h) = (x.width as usize, x.height as usize);
    let npix = w * h;
    let kernel = gaussian_kernel();
    let per_channel: Vec<(f64, Option<Vec<f64>>)> = (0..3)
        .into_par_iter()
        .map(|c| {
            let a = x.channel(c);
            let b = y.channel(c);
            let sq = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(u, v)| u * v).collect::<Vec<_>>();
            let mu_a = blur(&a, w, h, &kernel);
            let mu_b = blur(&b, w, h, &kernel);
            let e_aa = blur(&sq(&a, &a), w, h, &kernel);
            let e_bb = blur(&sq(&b, &b), w, h, &kernel);
            let e_ab = blur(&sq(&a, &b), w, h, &kernel);
            let mut sum = 0.0;
            let (mut d_mu, mut d_aa, mut d_ab) = if want_grad {
                (vec![0.0; npix], vec![0.0; npix], vec![0.0; npix])
            } else {
                (Vec::new(), Vec::new(), Vec::new())
            };
            for i in 0..npix {
                let (ma, mb) = (mu_a[i], mu_b[i]);
                let var_a = e_aa[i] - ma * ma;
                let var_b = e_bb[i] - mb * mb;
                let cov = e_ab[i] - ma * mb;
                let a1 = 2.0 * ma * mb + SSIM_C1;
                let a2 = 2.0 * cov + SSIM_C2;
                let b1 = ma * ma + mb * mb + SSIM_C1;
                let b2 = var_a + var_b + SSIM_C2;
                let den = b1 * b2;
                let s = a1 * a2 / den;
                sum += s;
                if want_grad {
                    d_mu[i] = (2.0 * mb * (a2 - a1) - 2.0 * ma * s * (b2 - b1)) / den;
                    d_aa[i] = -s / b2;
                    // Same value as 2 a1 / den, but cancels exactly against d_aa when x == y.
                    d_ab[i] = if a2 != 0.0 { 2.0 * s / a2 } else { 2.0 * a1 / den };
                }
            }
            if !want_grad {
                return (sum, None);
            }
            // The blur is symmetric, so its adjoint is itself.
            let g_mu = blur(&d_mu, w, h, &kernel);
            let g_aa = blur(&d_aa, w, h, &kernel);
            let g_ab = blur(&d_ab, w, h, &kernel);
            let grad = (0..npix).map(|i| g_mu[i] + 2.0 * a[i] * g_aa[i] + b[i] * g_ab[i]).collect();
            (sum, Some(grad))
        })
        .collect();

    let n = (3 * npix).max(1) as f64;
    let mean = per_channel.iter().map(|(s, _)| s).sum::<f64>() / n;
    if !want_grad {
        return (mean, None);
    }
    let mut grad = vec![0.0; 3 * npix];
    for (c, (_, g)) in per_channel.into_iter().enumerate() {
        for (i, v) in g.expect("requested").into_iter().enumerate() {
            grad[3 * i + c] = v / n;
        }
    }
    (mean, Some(grad))
}

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let r = (SSIM_WINDOW / 2) as f64;
    let mut k = [0.0; SSIM_WINDOW];
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - r;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.map(|v| v / s)
}

/// Separable "same" convolution with zero padding.
fn blur(src: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as isize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0;
            for (j, kv) in k.iter().enumerate() {
                let xx = x as isize + j as isize - r;
                if xx >= 0 && (xx as usize) < w {
                    acc += kv * row[xx as usize];
                }
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for (j, kv) in k.iter().enumerate() {
            let yy = y as isize + j as isize - r;
            if yy < 0 || yy as usize >= h {
                continue;
            }
            let src_row = &tmp[yy as usize * w..(yy as usize + 1) * w];
            let dst = &mut out[y * w..(y + 1) * w];
            for (d, s) in dst.iter_mut().zip(src_row) {
                *d += kv * s;
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameMetrics {
    pub frame: usize,
    pub t: f64,
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub psnr: f64,
    pub ssim: f64,
    pub frames: Vec<FrameMetrics>,
}

impl MetricReport {
    /// Averages per-frame values.
    pub fn from_frames(frames: Vec<FrameMetrics>) -> Self {
        let n = frames.len().max(1) as f64;
        let psnr = frames.iter().map(|f| f.psnr).sum::<f64>() / n;
        let ssim = frames.iter().map(|f| f.ssim).sum::<f64>() / n;
        Self { psnr, ssim, frames }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(rng: &mut ChaCha8Rng, w: u32, h: u32) -> Image {
        Image::from_data(w, h, (0..w * h * 3).map(|_| rng.gen()).collect())
    }

    /// Direct 2D windowed SSIM with explicit zero padding.
    fn ssim_oracle(a: &Image, b: &Image) -> f64 {
        let (w, h) = (a.width as i64, a.height as i64);
        let g1: Vec<f64> = (0..11).map(|i| (-((i - 5) as f64).powi(2) / 4.5).exp()).collect();
        let norm: f64 = g1.iter().sum();
        let mut total = 0.0;
        for c in 0..3 {
            for y in 0..h {
                for x in 0..w {
                    let (mut ma, mut mb, mut aa, mut bb, mut ab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                    for dy in -5..=5i64 {
                        for dx in -5..=5i64 {
                            let (xx, yy) = (x + dx, y + dy);
                            if xx < 0 || yy < 0 || xx >= w || yy >= h {
                                continue;
                            }
                            let wt = g1[(dx + 5) as usize] * g1[(dy + 5) as usize] / (norm * norm);
                            let p = a.pixel(xx as u32, yy as u32)[c];
                            let q = b.pixel(xx as u32, yy as u32)[c];
                            ma += wt * p;
                            mb += wt * q;
                            aa += wt * p * p;
                            bb += wt * q * q;
                            ab += wt * p * q;
                        }
                    }
                    let (va, vb, cv) = (aa - ma * ma, bb - mb * mb, ab - ma * mb);
                    total += (2.0 * ma * mb + 1e-4) * (2.0 * cv + 9e-4)
                        / ((ma * ma + mb * mb + 1e-4) * (va + vb + 9e-4));
                }
            }
        }
        total / (3 * w * h) as f64
    }

    #[test]
    fn psnr_examples() {
        let a = Image::filled(8, 8, [0.3, 0.4, 0.5]);
        assert_eq!(psnr(&a, &a).unwrap(), 100.0);
        let b = Image::filled(8, 8, [0.4, 0.5, 0.6]);
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);
        assert!(psnr(&a, &Image::new(4, 8)).is_err());
    }

    #[test]
    fn psnr_matches_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (a, b) = (random_image(&mut rng, 17, 9), random_image(&mut rng, 17, 9));
        let mut se = 0.0;
        for (x, y) in a.data.iter().zip(&b.data) {
            se += (x - y).powi(2);
        }
        let expect = 10.0 * (1.0 / (se / a.data.len() as f64)).log10();
        assert!((psnr(&a, &b).unwrap() - expect).abs() < 1e-9);
        assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
    }

    #[test]
    fn psnr_decreases_with_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let base = Image::filled(16, 16, [0.5; 3]);
        let noise: Vec<f64> = (0..16 * 16 * 3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut last = f64::INFINITY;
        for amp in [0.01, 0.02, 0.05, 0.1, 0.2] {
            let n = Image::from_data(16, 16, base.data.iter().zip(&noise).map(|(b, e)| b + amp * e).collect());
            let p = psnr(&base, &n).unwrap();
            assert!(p < last);
            last = p;
        }
    }

    #[test]
    fn ssim_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_image(&mut rng, 16, 12);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let half = Image::filled(16, 16, [0.5; 3]);
        let neg = Image::from_data(16, 16, half.data.iter().map(|v| 1.0 - v).collect());
        assert!((ssim(&half, &neg).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(ssim(&Image::new(10, 20), &Image::new(10, 20)), Err(ImageError::TooSmall { .. })));
    }

    #[test]
    fn ssim_matches_reference_and_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (a, b) = (random_image(&mut rng, 23, 14), random_image(&mut rng, 23, 14));
        let s = ssim(&a, &b).unwrap();
        assert!((s - ssim_oracle(&a, &b)).abs() < 1e-6);
        assert!((s - ssim(&b, &a).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn ssim_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (x, y) = (random_image(&mut rng, 8, 8), random_image(&mut rng, 8, 8));
        let (_, g) = ssim_with_grad(&x, &y).unwrap();
        let h = 1e-6;
        for i in (0..x.data.len()).step_by(5) {
            let (mut p, mut q) = (x.clone(), x.clone());
            p.data[i] += h;
            q.data[i] -= h;
            let fd = (ssim_with_grad(&p, &y).unwrap().0 - ssim_with_grad(&q, &y).unwrap().0) / (2.0 * h);
            assert!((fd - g[i]).abs() <= 1e-4 * fd.abs().max(1e-3), "{i}: {fd} vs {}", g[i]);
        }
    }
}

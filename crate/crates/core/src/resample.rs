//! Deterministic resampling and smoothing kernels.

use rayon::prelude::*;

use crate::image::{Image, ImageBuf};

/// Center-crop to the largest square.
pub fn center_crop_square(img: &Image) -> Image {
    let side = img.height().min(img.width());
    let y0 = (img.height() - side) / 2;
    let x0 = (img.width() - side) / 2;
    let mut data = Vec::with_capacity(side * side * img.channels());
    for c in 0..img.channels() {
        let plane = img.plane(c);
        for y in 0..side {
            let row = &plane[(y0 + y) * img.width() + x0..];
            data.extend_from_slice(&row[..side]);
        }
    }
    ImageBuf::new(side, side, img.channels(), data).expect("crop preserves validity")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Filter {
    Bilinear,
    Bicubic,
}

fn cubic_kernel(t: f64) -> f64 {
    // Catmull-Rom (a = -0.5)
    let a = -0.5;
    let t = t.abs();
    if t < 1.0 {
        (a + 2.0) * t * t * t - (a + 3.0) * t * t + 1.0
    } else if t < 2.0 {
        a * t * t * t - 5.0 * a * t * t + 8.0 * a * t - 4.0 * a
    } else {
        0.0
    }
}

/// Separable resize of one plane with edge clamping.
fn resize_plane(
    src: &[f64],
    sh: usize,
    sw: usize,
    dh: usize,
    dw: usize,
    filter: Filter,
) -> Vec<f64> {
    // horizontal pass
    let mut mid = vec![0.0f64; sh * dw];
    let sx = sw as f64 / dw as f64;
    mid.par_chunks_mut(dw).enumerate().for_each(|(y, out_row)| {
        let row = &src[y * sw..(y + 1) * sw];
        for (x, out) in out_row.iter_mut().enumerate() {
            let center = (x as f64 + 0.5) * sx - 0.5;
            *out = sample_1d(row, center, filter);
        }
    });
    // vertical pass
    let mut dst = vec![0.0f64; dh * dw];
    let sy = sh as f64 / dh as f64;
    let mut col = vec![0.0f64; sh];
    for x in 0..dw {
        for y in 0..sh {
            col[y] = mid[y * dw + x];
        }
        for y in 0..dh {
            let center = (y as f64 + 0.5) * sy - 0.5;
            dst[y * dw + x] = sample_1d(&col, center, filter);
        }
    }
    dst
}

fn sample_1d(line: &[f64], center: f64, filter: Filter) -> f64 {
    let n = line.len() as isize;
    let clamp = |i: isize| -> f64 { line[i.clamp(0, n - 1) as usize] };
    match filter {
        Filter::Bilinear => {
            let i0 = center.floor();
            let t = center - i0;
            let i0 = i0 as isize;
            clamp(i0) * (1.0 - t) + clamp(i0 + 1) * t
        }
        Filter::Bicubic => {
            let i0 = center.floor() as isize;
            let t = center - i0 as f64;
            let mut acc = 0.0;
            let mut wsum = 0.0;
            for k in -1..=2isize {
                let w = cubic_kernel(t - k as f64);
                acc += w * clamp(i0 + k);
                wsum += w;
            }
            acc / wsum
        }
    }
}

/// Resize to `dh x dw` with the given filter; intensities are clamped back
/// into `[0, 1]`.
pub fn resize(img: &Image, dh: usize, dw: usize, filter: Filter) -> Image {
    let (sh, sw) = (img.height(), img.width());
    if (sh, sw) == (dh, dw) {
        return img.clone();
    }
    let mut data = Vec::with_capacity(dh * dw * img.channels());
    for c in 0..img.channels() {
        data.extend(resize_plane(img.plane(c), sh, sw, dh, dw, filter));
    }
    let mut out = ImageBuf::new(dh, dw, img.channels(), data).expect("resize preserves validity");
    out.clamp_unit();
    out
}

/// Separable Gaussian blur with kernel radius `ceil(3 sigma)` and edge
/// clamping.
pub fn gaussian_blur(img: &Image, sigma: f64) -> Image {
    if sigma <= 0.0 {
        return img.clone();
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let mut kernel = Vec::with_capacity((2 * radius + 1) as usize);
    for k in -radius..=radius {
        kernel.push((-(k as f64) * (k as f64) / (2.0 * sigma * sigma)).exp());
    }
    let sum: f64 = kernel.iter().sum();
    for v in &mut kernel {
        *v /= sum;
    }

    let (h, w) = (img.height(), img.width());
    let mut out = img.clone();
    for c in 0..img.channels() {
        let src = img.plane(c);
        // horizontal
        let mut mid = vec![0.0f64; h * w];
        mid.par_chunks_mut(w).enumerate().for_each(|(y, out_row)| {
            let row = &src[y * w..(y + 1) * w];
            for (x, o) in out_row.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (ki, &kv) in kernel.iter().enumerate() {
                    let sx = (x as isize + ki as isize - radius).clamp(0, w as isize - 1);
                    acc += kv * row[sx as usize];
                }
                *o = acc;
            }
        });
        // vertical
        let dst = out.plane_mut(c);
        dst.par_chunks_mut(w).enumerate().for_each(|(y, out_row)| {
            for (x, o) in out_row.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (ki, &kv) in kernel.iter().enumerate() {
                    let sy = (y as isize + ki as isize - radius).clamp(0, h as isize - 1);
                    acc += kv * mid[sy as usize * w + x];
                }
                *o = acc;
            }
        });
    }
    out
}

/// 3x3 Gaussian smoothing, the base of the unsharp-mask sharpener.
pub fn gaussian_3x3(img: &Image) -> Image {
    // fixed binomial kernel [1 2 1]/4 in each direction
    let (h, w) = (img.height(), img.width());
    let mut out = img.clone();
    for c in 0..img.channels() {
        let src = img.plane(c);
        let mut mid = vec![0.0f64; h * w];
        for y in 0..h {
            for x in 0..w {
                let xm = x.saturating_sub(1);
                let xp = (x + 1).min(w - 1);
                mid[y * w + x] =
                    0.25 * src[y * w + xm] + 0.5 * src[y * w + x] + 0.25 * src[y * w + xp];
            }
        }
        let dst = out.plane_mut(c);
        for y in 0..h {
            let ym = y.saturating_sub(1);
            let yp = (y + 1).min(h - 1);
            for x in 0..w {
                dst[y * w + x] =
                    0.25 * mid[ym * w + x] + 0.5 * mid[y * w + x] + 0.25 * mid[yp * w + x];
            }
        }
    }
    out
}

//! Approximate JPEG codec: 8x8 blockwise DCT, quantization with the
//! standard tables under the standard quality scaling, dequantization, and
//! inverse DCT. No entropy coding and no chroma subsampling; both are
//! distortion-free or separable, so only the quantization loss is modeled.

use once_cell::sync::Lazy;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::Image;

/// Standard luminance quantization table (row-major).
pub const LUMINANCE_QUANT: [u16; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61, //
    12, 12, 14, 19, 26, 58, 60, 55, //
    14, 13, 16, 24, 40, 57, 69, 56, //
    14, 17, 22, 29, 51, 87, 80, 62, //
    18, 22, 37, 56, 68, 109, 103, 77, //
    24, 35, 55, 64, 81, 104, 113, 92, //
    49, 64, 78, 87, 103, 121, 120, 101, //
    72, 92, 95, 98, 112, 100, 103, 99,
];

/// Standard chrominance quantization table (row-major).
pub const CHROMINANCE_QUANT: [u16; 64] = [
    17, 18, 24, 47, 99, 99, 99, 99, //
    18, 21, 26, 66, 99, 99, 99, 99, //
    24, 26, 56, 99, 99, 99, 99, 99, //
    47, 66, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99,
];

/// Scale a base table by the standard quality mapping:
/// `scale = 5000/q` for `q < 50`, else `200 - 2q`; entries are
/// `clamp((t*scale + 50)/100, 1, 255)` in integer arithmetic.
pub fn scale_quant_table(base: &[u16; 64], quality: u8) -> [u16; 64] {
    let q = quality.clamp(1, 100) as u32;
    let scale = if q < 50 { 5000 / q } else { 200 - 2 * q };
    let mut out = [0u16; 64];
    for (o, &t) in out.iter_mut().zip(base.iter()) {
        *o = (((t as u32 * scale) + 50) / 100).clamp(1, 255) as u16;
    }
    out
}

/// The (luminance, chrominance) tables at a given quality, for audit.
pub fn quant_tables_for_quality(quality: u8) -> ([u16; 64], [u16; 64]) {
    (
        scale_quant_table(&LUMINANCE_QUANT, quality),
        scale_quant_table(&CHROMINANCE_QUANT, quality),
    )
}

/// Orthonormal 8-point DCT-II basis matrix; row k holds the k-th basis
/// vector, so analysis is `B x` and synthesis is `B^T x`.
static DCT8: Lazy<[[f64; 8]; 8]> = Lazy::new(|| {
    let mut b = [[0.0; 8]; 8];
    for (k, row) in b.iter_mut().enumerate() {
        let s = if k == 0 { (1.0f64 / 8.0).sqrt() } else { (2.0f64 / 8.0).sqrt() };
        for (n, v) in row.iter_mut().enumerate() {
            *v = s * (std::f64::consts::PI * k as f64 * (2.0 * n as f64 + 1.0) / 16.0).cos();
        }
    }
    b
});

fn dct8_2d(block: &mut [f64; 64], inverse: bool) {
    let b = &*DCT8;
    let mut tmp = [0.0f64; 64];
    // rows
    for r in 0..8 {
        for k in 0..8 {
            let mut acc = 0.0;
            for n in 0..8 {
                let w = if inverse { b[n][k] } else { b[k][n] };
                acc += w * block[r * 8 + n];
            }
            tmp[r * 8 + k] = acc;
        }
    }
    // columns
    for c in 0..8 {
        for k in 0..8 {
            let mut acc = 0.0;
            for n in 0..8 {
                let w = if inverse { b[n][k] } else { b[k][n] };
                acc += w * tmp[n * 8 + c];
            }
            block[k * 8 + c] = acc;
        }
    }
}

/// Quantization round trip of one level-shifted block.
fn quantize_block(block: &mut [f64; 64], table: &[u16; 64]) {
    dct8_2d(block, false);
    for (v, &t) in block.iter_mut().zip(table.iter()) {
        let t = t as f64;
        *v = (*v / t).round() * t;
    }
    dct8_2d(block, true);
}

/// Deterministic JPEG distortion model. Every channel is treated as a
/// full-resolution luminance-like plane and quantized with the luminance
/// table; edges of non-multiple-of-8 planes are handled by replication
/// padding.
pub fn jpeg_approx(img: &Image, quality: u8) -> Result<Image> {
    if !(1..=100).contains(&quality) {
        return Err(Error::Domain(format!("quality {quality} outside [1, 100]")));
    }
    let table = scale_quant_table(&LUMINANCE_QUANT, quality);
    let (h, w) = (img.height(), img.width());
    let bh = h.div_ceil(8);
    let bw = w.div_ceil(8);

    let mut out = img.clone();
    for ch in 0..img.channels() {
        let src = img.plane(ch);
        let dst = out.plane_mut(ch);
        let results: Vec<(usize, usize, [f64; 64])> = (0..bh * bw)
            .into_par_iter()
            .map(|bi| {
                let (by, bx) = (bi / bw, bi % bw);
                let mut block = [0.0f64; 64];
                for y in 0..8 {
                    let sy = (by * 8 + y).min(h - 1);
                    for x in 0..8 {
                        let sx = (bx * 8 + x).min(w - 1);
                        // level shift into the 8-bit signed domain
                        block[y * 8 + x] = src[sy * w + sx] * 255.0 - 128.0;
                    }
                }
                quantize_block(&mut block, &table);
                (by, bx, block)
            })
            .collect();
        for (by, bx, block) in results {
            for y in 0..8 {
                let sy = by * 8 + y;
                if sy >= h {
                    continue;
                }
                for x in 0..8 {
                    let sx = bx * 8 + x;
                    if sx >= w {
                        continue;
                    }
                    dst[sy * w + sx] = ((block[y * 8 + x] + 128.0) / 255.0).clamp(0.0, 1.0);
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::{psnr, ImageBuf};
    use approx::assert_abs_diff_eq;

    fn textured_image(n: usize) -> Image {
        // smooth gradient plus a mid-frequency ripple
        let mut data = vec![0.0; n * n];
        for y in 0..n {
            for x in 0..n {
                let g = 0.25 + 0.5 * (x as f64 + y as f64) / (2.0 * n as f64);
                let ripple = 0.08 * ((x as f64) * 0.7).sin() * ((y as f64) * 0.45).cos();
                data[y * n + x] = (g + ripple).clamp(0.0, 1.0);
            }
        }
        ImageBuf::new(n, n, 1, data).unwrap()
    }

    #[test]
    fn quality_scaling_reference_points() {
        let t50 = scale_quant_table(&LUMINANCE_QUANT, 50);
        assert_eq!(t50, LUMINANCE_QUANT); // scale = 100 leaves the table as is
        let t100 = scale_quant_table(&LUMINANCE_QUANT, 100);
        assert!(t100.iter().all(|&v| v == 1));
        let t5 = scale_quant_table(&LUMINANCE_QUANT, 5);
        assert_eq!(t5[0], 160); // 16 * 1000 / 100
        assert!(t5.iter().any(|&v| v == 255)); // saturation at the cap
    }

    #[test]
    fn out_of_range_quality_rejected() {
        let img = textured_image(16);
        assert!(jpeg_approx(&img, 0).is_err());
        assert!(jpeg_approx(&img, 101).is_err());
    }

    #[test]
    fn quality_100_on_smooth_gradient_above_40db() {
        let img = textured_image(64);
        let out = jpeg_approx(&img, 100).unwrap();
        let p = psnr(&img, &out).unwrap();
        assert!(p.value() > 40.0, "got {p}");
    }

    #[test]
    fn quality_5_worse_than_quality_50() {
        let img = textured_image(64);
        let p5 = psnr(&img, &jpeg_approx(&img, 5).unwrap()).unwrap();
        let p50 = psnr(&img, &jpeg_approx(&img, 50).unwrap()).unwrap();
        assert!(p5.value() < p50.value(), "q5 {p5} vs q50 {p50}");
    }

    #[test]
    fn constant_image_error_bounded_by_dc_quantizer() {
        // A constant block quantizes only its DC coefficient; the
        // reconstruction error is at most half a DC quantization step,
        // i.e. q_dc / 16 in level-shifted units.
        for quality in [5u8, 30, 75, 100] {
            let table = scale_quant_table(&LUMINANCE_QUANT, quality);
            let bound = table[0] as f64 / 16.0 / 255.0 + 1e-12;
            for &c in &[0.08, 0.37, 0.5, 0.61, 0.94] {
                let img = ImageBuf::new(16, 16, 1, vec![c; 256]).unwrap();
                let out = jpeg_approx(&img, quality).unwrap();
                // output stays constant
                let first = out.data()[0];
                for &v in out.data() {
                    assert_abs_diff_eq!(v, first, epsilon = 1e-9);
                }
                assert!(
                    (first - c).abs() <= bound,
                    "q{quality} c={c}: err {} > bound {bound}",
                    (first - c).abs()
                );
            }
        }
    }

    #[test]
    fn distortion_monotone_in_quality_with_slack() {
        let img = textured_image(64);
        let mut prev = f64::NEG_INFINITY;
        for q in [5u8, 20, 40, 60, 80, 95] {
            let p = psnr(&img, &jpeg_approx(&img, q).unwrap()).unwrap().value();
            assert!(
                p >= prev - 0.5,
                "psnr at q{q} = {p} dropped more than 0.5 dB below {prev}"
            );
            prev = p;
        }
    }

    #[test]
    fn determinism() {
        let img = textured_image(40); // exercises the padding path
        let a = jpeg_approx(&img, 35).unwrap();
        let b = jpeg_approx(&img, 35).unwrap();
        assert_eq!(a.data(), b.data());
    }
}

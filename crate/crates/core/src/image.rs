//! Image container, distortion metrics, and fixed-power watermark scaling.
//!
//! Intensities live in `[0, 1]` after any clamping operation, stored row-major
//! and channel-planar. All pipeline arithmetic runs in double precision.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Raster grid of real-valued intensities, channel-planar.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuf<T> {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<T>,
}

/// The pipeline's concrete image type.
pub type Image = ImageBuf<f64>;

impl<T: Real> ImageBuf<T> {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<T>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::EmptyImage);
        }
        if !(channels == 1 || channels == 3) {
            return Err(Error::ImageFormat(format!(
                "expected 1 or 3 channels, got {channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::DimensionMismatch(format!(
                "data length {} != {}x{}x{}",
                data.len(),
                height,
                width,
                channels
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![T::zero(); height * width * channels],
        }
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: T) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Total number of intensity samples, `D = H*W*C`.
    pub fn num_samples(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// One channel plane, row-major.
    pub fn plane(&self, channel: usize) -> &[T] {
        let n = self.height * self.width;
        &self.data[channel * n..(channel + 1) * n]
    }

    pub fn plane_mut(&mut self, channel: usize) -> &mut [T] {
        let n = self.height * self.width;
        &mut self.data[channel * n..(channel + 1) * n]
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.height == other.height && self.width == other.width && self.channels == other.channels
    }

    /// Clamp every intensity into `[0, 1]`.
    pub fn clamp_unit(&mut self) {
        for v in &mut self.data {
            *v = v.max(T::zero()).min(T::one());
        }
    }
}

/// A quantity in decibels.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Decibels(pub f64);

impl Decibels {
    pub fn value(&self) -> f64 {
        self.0
    }

    pub fn is_infinite(&self) -> bool {
        self.0.is_infinite()
    }
}

impl std::fmt::Display for Decibels {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.0.is_infinite() {
            write!(f, "inf dB")
        } else {
            write!(f, "{:.4} dB", self.0)
        }
    }
}

/// Peak signal-to-noise ratio on the `[0, 1]` intensity scale:
/// `-10 log10(MSE)`. Identical inputs give positive infinity.
pub fn psnr(a: &Image, b: &Image) -> Result<Decibels> {
    if !a.same_shape(b) {
        return Err(Error::DimensionMismatch(format!(
            "{}x{}x{} vs {}x{}x{}",
            a.height, a.width, a.channels, b.height, b.width, b.channels
        )));
    }
    let d = a.num_samples() as f64;
    let mse = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| {
            let e = x - y;
            e * e
        })
        .sum::<f64>()
        / d;
    if mse == 0.0 {
        Ok(Decibels(f64::INFINITY))
    } else {
        Ok(Decibels(-10.0 * mse.log10()))
    }
}

/// Squared Euclidean distance between two same-shaped images.
pub fn l2_distance(a: &Image, b: &Image) -> f64 {
    debug_assert!(a.same_shape(b));
    a.data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| {
            let e = x - y;
            e * e
        })
        .sum::<f64>()
        .sqrt()
}

/// The perturbation norm that yields a given PSNR on a `D`-sample image.
pub fn norm_for_psnr(num_samples: usize, target: Decibels) -> f64 {
    (num_samples as f64).sqrt() * 10f64.powf(-target.0 / 20.0)
}

/// Rescale the watermark signal `stego - host` so the pixel-domain PSNR
/// equals `target` exactly, then clamp to `[0, 1]`.
///
/// Before clamping, `psnr(host, result) == target` by construction.
pub fn scale_to_target_psnr(host: &Image, stego: &Image, target: Decibels) -> Result<Image> {
    let mut out = scale_to_target_psnr_unclamped(host, stego, target)?;
    out.clamp_unit();
    Ok(out)
}

/// Same as [`scale_to_target_psnr`] without the final clamp; the returned
/// image meets the target PSNR exactly.
pub fn scale_to_target_psnr_unclamped(
    host: &Image,
    stego: &Image,
    target: Decibels,
) -> Result<Image> {
    if !host.same_shape(stego) {
        return Err(Error::DimensionMismatch(
            "host and stego shapes differ".into(),
        ));
    }
    let norm2: f64 = host
        .data
        .iter()
        .zip(&stego.data)
        .map(|(&h, &s)| {
            let e = s - h;
            e * e
        })
        .sum();
    if norm2 == 0.0 {
        return Err(Error::ZeroWatermarkSignal);
    }
    let gain = norm_for_psnr(host.num_samples(), target) / norm2.sqrt();
    let data = host
        .data
        .iter()
        .zip(&stego.data)
        .map(|(&h, &s)| h + gain * (s - h))
        .collect();
    Ok(Image {
        height: host.height,
        width: host.width,
        channels: host.channels,
        data,
    })
}

/// Load an 8-bit PNG, PPM, or PGM file; intensities are divided by 255.
pub fn load_image<P: AsRef<Path>>(path: P) -> Result<Image> {
    let path = path.as_ref();
    let dynimg = image::open(path).map_err(|e| match e {
        image::ImageError::IoError(source) => Error::Io {
            path: path.to_path_buf(),
            source,
        },
        other => Error::ImageFormat(other.to_string()),
    })?;
    if dynimg.width() == 0 || dynimg.height() == 0 {
        return Err(Error::EmptyImage);
    }
    use image::DynamicImage::*;
    match dynimg {
        ImageLuma8(img) => {
            let (w, h) = (img.width() as usize, img.height() as usize);
            let data = img.as_raw().iter().map(|&v| v as f64 / 255.0).collect();
            ImageBuf::new(h, w, 1, data)
        }
        // Alpha is dropped; any 8-bit color layout becomes planar RGB.
        d @ (ImageRgb8(_) | ImageRgba8(_) | ImageLumaA8(_)) => {
            let img = d.to_rgb8();
            let (w, h) = (img.width() as usize, img.height() as usize);
            let n = w * h;
            let mut data = vec![0f64; 3 * n];
            for (i, px) in img.pixels().enumerate() {
                data[i] = px.0[0] as f64 / 255.0;
                data[n + i] = px.0[1] as f64 / 255.0;
                data[2 * n + i] = px.0[2] as f64 / 255.0;
            }
            ImageBuf::new(h, w, 3, data)
        }
        other => Err(Error::ImageFormat(format!(
            "unsupported color type {:?} (8-bit gray or RGB only)",
            other.color()
        ))),
    }
}

/// Save as 8-bit PNG, PPM (P6), or PGM (P5) depending on the extension.
/// Intensities are clamped and rounded to `[0, 255]`.
pub fn save_image<P: AsRef<Path>>(img: &Image, path: P) -> Result<()> {
    let path = path.as_ref();
    let quantize = |v: f64| -> u8 { (v.clamp(0.0, 1.0) * 255.0).round() as u8 };
    let (h, w) = (img.height as u32, img.width as u32);
    let res = if img.channels == 1 {
        let buf: Vec<u8> = img.data.iter().map(|&v| quantize(v)).collect();
        image::GrayImage::from_raw(w, h, buf)
            .expect("buffer sized from image")
            .save(path)
    } else {
        let n = img.height * img.width;
        let mut buf = vec![0u8; 3 * n];
        for i in 0..n {
            buf[3 * i] = quantize(img.data[i]);
            buf[3 * i + 1] = quantize(img.data[n + i]);
            buf[3 * i + 2] = quantize(img.data[2 * n + i]);
        }
        image::RgbImage::from_raw(w, h, buf)
            .expect("buffer sized from image")
            .save(path)
    };
    res.map_err(|e| match e {
        image::ImageError::IoError(source) => Error::Io {
            path: path.to_path_buf(),
            source,
        },
        other => Error::ImageFormat(other.to_string()),
    })
}

/// Write the raw-tensor wire format: a 12-byte header of three little-endian
/// u32 (height, width, channels) followed by `H*W*C` f32 little-endian
/// values, channel-planar.
pub fn write_raw_tensor<W: Write>(w: &mut W, img: &Image) -> std::io::Result<()> {
    w.write_all(&(img.height as u32).to_le_bytes())?;
    w.write_all(&(img.width as u32).to_le_bytes())?;
    w.write_all(&(img.channels as u32).to_le_bytes())?;
    let mut buf = Vec::with_capacity(img.data.len() * 4);
    for &v in &img.data {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    w.write_all(&buf)
}

/// Read the raw-tensor wire format written by [`write_raw_tensor`].
pub fn read_raw_tensor<R: Read>(r: &mut R) -> Result<Image> {
    let mut header = [0u8; 12];
    r.read_exact(&mut header).map_err(io_protocol)?;
    let height = u32::from_le_bytes(header[0..4].try_into().unwrap()) as usize;
    let width = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
    let channels = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    if height == 0 || width == 0 {
        return Err(Error::EmptyImage);
    }
    if !(channels == 1 || channels == 3) {
        return Err(Error::Protocol(format!(
            "raw tensor declares {channels} channels"
        )));
    }
    let n = height * width * channels;
    let mut buf = vec![0u8; n * 4];
    r.read_exact(&mut buf).map_err(io_protocol)?;
    let data = buf
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    ImageBuf::new(height, width, channels, data)
}

fn io_protocol(e: std::io::Error) -> Error {
    Error::Protocol(format!("raw tensor read failed: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn gradient_image(h: usize, w: usize, c: usize) -> Image {
        let n = h * w * c;
        let data = (0..n)
            .map(|i| 0.2 + 0.6 * (i as f64) / (n as f64))
            .collect();
        ImageBuf::new(h, w, c, data).unwrap()
    }

    #[test]
    fn normalization_is_by_255() {
        use tempfile::tempdir;
        let dir = tempdir().unwrap();
        let path = dir.path().join("tiny.png");
        let img = image::GrayImage::from_raw(2, 2, vec![0, 255, 128, 64]).unwrap();
        img.save(&path).unwrap();
        let loaded = load_image(&path).unwrap();
        assert_eq!(loaded.data(), &[0.0, 1.0, 128.0 / 255.0, 64.0 / 255.0]);
    }

    #[test]
    fn save_load_roundtrip_identity() {
        use tempfile::tempdir;
        let dir = tempdir().unwrap();
        for (name, c) in [("rt.png", 3), ("rt.ppm", 3), ("rt.pgm", 1)] {
            let path = dir.path().join(name);
            // start from intensities that are exact multiples of 1/255
            let n = 8 * 8 * c;
            let data: Vec<f64> = (0..n).map(|i| ((i * 7) % 256).min(255) as f64 / 255.0).collect();
            let img = ImageBuf::new(8, 8, c, data).unwrap();
            save_image(&img, &path).unwrap();
            let back = load_image(&path).unwrap();
            assert_eq!(img.data(), back.data(), "{name}");
        }
    }

    #[test]
    fn sample_count_matches_dimensions() {
        let img = Image::zeros(1024, 1024, 3);
        assert_eq!(img.num_samples(), 3_145_728);
    }

    #[test]
    fn psnr_identical_is_infinite() {
        let a = gradient_image(4, 4, 3);
        assert!(psnr(&a, &a).unwrap().is_infinite());
    }

    #[test]
    fn psnr_uniform_tenth_is_20db() {
        let a = gradient_image(4, 4, 1);
        let mut b = a.clone();
        for v in b.data_mut() {
            *v += 0.1;
        }
        assert_abs_diff_eq!(psnr(&a, &b).unwrap().value(), 20.0, epsilon = 1e-12);
    }

    #[test]
    fn psnr_42db_from_mse() {
        // MSE = 10^-4.2 corresponds to the 42 dB operating point.
        let a = Image::zeros(10, 10, 1);
        let mut b = a.clone();
        let delta = 10f64.powf(-2.1);
        for v in b.data_mut() {
            *v = delta;
        }
        assert_abs_diff_eq!(psnr(&a, &b).unwrap().value(), 42.0, epsilon = 1e-12);
    }

    #[test]
    fn psnr_dimension_mismatch_errors() {
        let a = Image::zeros(4, 4, 1);
        let b = Image::zeros(4, 5, 1);
        assert!(psnr(&a, &b).is_err());
    }

    #[test]
    fn scaling_hits_target_exactly() {
        let host = gradient_image(16, 16, 3);
        let mut stego = host.clone();
        for (i, v) in stego.data_mut().iter_mut().enumerate() {
            *v += 1e-3 * ((i % 13) as f64 - 6.0);
        }
        let out = scale_to_target_psnr_unclamped(&host, &stego, Decibels(42.0)).unwrap();
        assert_abs_diff_eq!(psnr(&host, &out).unwrap().value(), 42.0, epsilon = 1e-9);
        // per-sample RMS at 42 dB
        let rms = (l2_distance(&host, &out).powi(2) / out.num_samples() as f64).sqrt();
        assert_abs_diff_eq!(rms, 10f64.powf(-2.1), epsilon = 1e-12);
    }

    #[test]
    fn scaling_uniform_signal_20db() {
        let host = gradient_image(8, 8, 1);
        let mut stego = host.clone();
        for v in stego.data_mut() {
            *v += 0.37;
        }
        let out = scale_to_target_psnr_unclamped(&host, &stego, Decibels(20.0)).unwrap();
        for (h, o) in host.data().iter().zip(out.data()) {
            assert_abs_diff_eq!(o - h, 0.1, epsilon = 1e-12);
        }
    }

    #[test]
    fn scaling_zero_signal_errors() {
        let host = gradient_image(4, 4, 1);
        let stego = host.clone();
        assert!(matches!(
            scale_to_target_psnr(&host, &stego, Decibels(42.0)),
            Err(Error::ZeroWatermarkSignal)
        ));
    }

    #[test]
    fn scaling_is_idempotent_in_power() {
        let host = gradient_image(12, 12, 3);
        let mut stego = host.clone();
        for (i, v) in stego.data_mut().iter_mut().enumerate() {
            *v += 5e-4 * (((i * 31) % 17) as f64 - 8.0);
        }
        let once = scale_to_target_psnr_unclamped(&host, &stego, Decibels(42.0)).unwrap();
        let twice = scale_to_target_psnr_unclamped(&host, &once, Decibels(42.0)).unwrap();
        for (a, b) in once.data().iter().zip(twice.data()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
    }

    #[test]
    fn raw_tensor_roundtrip() {
        let img = gradient_image(3, 5, 3);
        let mut buf = Vec::new();
        write_raw_tensor(&mut buf, &img).unwrap();
        assert_eq!(buf.len(), 12 + 3 * 5 * 3 * 4);
        let back = read_raw_tensor(&mut buf.as_slice()).unwrap();
        assert_eq!(back.height(), 3);
        assert_eq!(back.width(), 5);
        assert_eq!(back.channels(), 3);
        for (a, b) in img.data().iter().zip(back.data()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-6); // f32 wire precision
        }
    }
}

//! Benchmark corpus: a directory of raster files, or seeded synthetic
//! textures when no imagery is available.
//!
//! The synthetic generator draws 2-D DCT coefficients under a power-law
//! radial envelope with a smooth near-Nyquist rolloff, the spectral
//! signature of natural photographs that went through resampling. Channels
//! share a luminance field with small chroma offsets. All post-processing
//! is affine so the spectral envelope survives exactly.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::image::{load_image, Image, ImageBuf};
use crate::resample::{center_crop_square, resize, Filter};
use crate::transforms::{idct2d, Grid};

/// Where benchmark images come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CorpusSource {
    /// Every supported raster file in a directory, sorted by file name.
    Directory(PathBuf),
    /// Seeded procedural textures.
    Synthetic { count: usize },
}

/// Deterministic per-item seed derivation (splitmix64 over the run seed).
pub fn derive_seed(run_seed: u64, index: u64) -> u64 {
    let mut z = run_seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Amplitude rolloff that suppresses content near the sampling limit, as
/// resampling pipelines do. Unity below the knee, cosine taper down to
/// `SUPPRESSION_FLOOR` at and beyond the stop band.
pub const ROLLOFF_KNEE: f64 = 0.94;
pub const ROLLOFF_STOP: f64 = 0.975;
pub const SUPPRESSION_FLOOR: f64 = 0.04;

fn band_rolloff(f_rel: f64) -> f64 {
    if f_rel <= ROLLOFF_KNEE {
        1.0
    } else if f_rel >= ROLLOFF_STOP {
        SUPPRESSION_FLOOR
    } else {
        let t = (f_rel - ROLLOFF_KNEE) / (ROLLOFF_STOP - ROLLOFF_KNEE);
        let c = 0.5 * (1.0 + (std::f64::consts::PI * t).cos());
        SUPPRESSION_FLOOR + (1.0 - SUPPRESSION_FLOOR) * c
    }
}

fn spectral_field(rng: &mut ChaCha12Rng, n: usize, exponent: f64) -> Vec<f64> {
    let mut coeffs = Grid::zeros(n, n);
    let f0 = 0.015;
    for u in 0..n {
        for v in 0..n {
            if u == 0 && v == 0 {
                continue;
            }
            let fu = u as f64 / n as f64;
            let fv = v as f64 / n as f64;
            let f = fu.hypot(fv);
            let f_rel = f / std::f64::consts::SQRT_2;
            let amp = (f0 / (f0 + f)).powf(exponent) * band_rolloff(f_rel);
            let g: f64 = StandardNormal.sample(rng);
            coeffs.data[u * n + v] = amp * g;
        }
    }
    idct2d(&coeffs).data
}

/// Fit a field affinely into `[lo, hi]` around mean 0.5 with a target
/// spread; affine only, so no spectral leakage.
fn affine_fit(field: &mut [f64], target_std: f64, lo: f64, hi: f64) {
    let n = field.len() as f64;
    let mean = field.iter().sum::<f64>() / n;
    let var = field.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt().max(1e-12);
    let mut scale = target_std / std;
    // shrink further if the range would overflow [lo, hi]
    let max_dev = field
        .iter()
        .map(|v| (v - mean).abs())
        .fold(0.0f64, f64::max);
    if max_dev * scale > (hi - lo) / 2.0 {
        scale = (hi - lo) / 2.0 / max_dev;
    }
    for v in field.iter_mut() {
        *v = 0.5 + (*v - mean) * scale;
    }
}

/// One seeded synthetic RGB texture of side `size`.
pub fn synthetic_image(seed: u64, size: usize) -> Image {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let exponent = 0.9 + 0.4 * rng.gen::<f64>();
    let target_std = 0.13 + 0.06 * rng.gen::<f64>();
    let mut luma = spectral_field(&mut rng, size, exponent);
    affine_fit(&mut luma, target_std, 0.02, 0.98);
    let mut chroma_a = spectral_field(&mut rng, size, exponent + 0.2);
    affine_fit(&mut chroma_a, target_std * 0.25, 0.0, 1.0);
    let mut chroma_b = spectral_field(&mut rng, size, exponent + 0.2);
    affine_fit(&mut chroma_b, target_std * 0.25, 0.0, 1.0);

    let n = size * size;
    let mut data = vec![0.0f64; 3 * n];
    for i in 0..n {
        let l = luma[i];
        let a = chroma_a[i] - 0.5;
        let b = chroma_b[i] - 0.5;
        data[i] = l + a; // R
        data[n + i] = l - 0.4 * a + 0.6 * b; // G
        data[2 * n + i] = l - b; // B
    }
    // joint affine squeeze into the valid range
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in &data {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if lo < 0.0 || hi > 1.0 {
        let center = 0.5;
        let spread = (hi - center).max(center - lo);
        let scale = 0.48 / spread;
        for v in &mut data {
            *v = center + (*v - center) * scale;
        }
    }
    ImageBuf::new(size, size, 3, data).expect("synthesis is shape-consistent")
}

/// A resolved corpus: lazy item loading plus the preprocessing pipeline
/// (center crop to square, bilinear resize).
pub struct Corpus {
    source: CorpusSource,
    files: Vec<PathBuf>,
    run_seed: u64,
}

impl Corpus {
    pub fn open(source: CorpusSource, run_seed: u64) -> Result<Self> {
        let files = match &source {
            CorpusSource::Directory(dir) => {
                let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
                    .map_err(|e| Error::Corpus(format!("cannot read {}: {e}", dir.display())))?
                    .filter_map(|entry| entry.ok().map(|e| e.path()))
                    .filter(|p| {
                        matches!(
                            p.extension().and_then(|e| e.to_str()),
                            Some("png" | "ppm" | "pgm" | "PNG" | "PPM" | "PGM")
                        )
                    })
                    .collect();
                files.sort();
                if files.is_empty() {
                    return Err(Error::Corpus(format!(
                        "no supported images in {}",
                        dir.display()
                    )));
                }
                files
            }
            CorpusSource::Synthetic { count } => {
                if *count == 0 {
                    return Err(Error::Corpus("empty synthetic corpus".into()));
                }
                Vec::new()
            }
        };
        Ok(Self {
            source,
            files,
            run_seed,
        })
    }

    pub fn len(&self) -> usize {
        match &self.source {
            CorpusSource::Directory(_) => self.files.len(),
            CorpusSource::Synthetic { count } => *count,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Stable identifier of one item (file stem or synthetic index).
    pub fn id(&self, index: usize) -> String {
        match &self.source {
            CorpusSource::Directory(_) => self.files[index]
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| format!("img{index:04}")),
            CorpusSource::Synthetic { .. } => format!("synth{index:04}"),
        }
    }

    /// Load and preprocess one item to `size x size`.
    pub fn load(&self, index: usize, size: usize) -> Result<Image> {
        match &self.source {
            CorpusSource::Directory(_) => {
                let img = load_image(&self.files[index])?;
                let square = center_crop_square(&img);
                Ok(resize(&square, size, size, Filter::Bilinear))
            }
            CorpusSource::Synthetic { .. } => Ok(synthetic_image(
                derive_seed(self.run_seed, index as u64),
                size,
            )),
        }
    }
}

/// Convenience loader used in tests and calibration suites.
pub fn synthetic_corpus(count: usize, size: usize, run_seed: u64) -> Vec<Image> {
    (0..count)
        .map(|i| synthetic_image(derive_seed(run_seed, i as u64), size))
        .collect()
}

#[allow(unused)]
fn ensure_path_unused(_: &Path) {}

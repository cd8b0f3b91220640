//! Low-frequency DCT coefficient mask in zig-zag order.

use super::Grid;
use crate::error::{Error, Result};

/// Zig-zag traversal of an `rows x cols` grid, JPEG convention: diagonals
/// of constant `r + c`, odd diagonals scanned with increasing row index.
pub fn zigzag_order(rows: usize, cols: usize) -> Vec<(usize, usize)> {
    let mut order = Vec::with_capacity(rows * cols);
    for d in 0..rows + cols - 1 {
        let r_min = d.saturating_sub(cols - 1);
        let r_max = d.min(rows - 1);
        if d % 2 == 1 {
            for r in r_min..=r_max {
                order.push((r, d - r));
            }
        } else {
            for r in (r_min..=r_max).rev() {
                order.push((r, d - r));
            }
        }
    }
    order
}

/// Index set of the lowest-frequency 2-D DCT coefficients by zig-zag order.
#[derive(Debug, Clone)]
pub struct FrequencyMask {
    rows: usize,
    cols: usize,
    kept_fraction: f64,
    /// Linear (row-major) indices of the retained coefficients.
    indices: Vec<usize>,
    member: Vec<bool>,
}

impl FrequencyMask {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn kept_fraction(&self) -> f64 {
        self.kept_fraction
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Retained linear indices, lowest zig-zag frequency first.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn contains(&self, linear_index: usize) -> bool {
        self.member[linear_index]
    }

    /// Zero every coefficient outside the mask; idempotent.
    pub fn project(&self, coeffs: &mut Grid<f64>) {
        assert_eq!(coeffs.rows, self.rows);
        assert_eq!(coeffs.cols, self.cols);
        for (i, v) in coeffs.data.iter_mut().enumerate() {
            if !self.member[i] {
                *v = 0.0;
            }
        }
    }
}

/// Retain the `ceil(fraction * rows * cols)` lowest-frequency coefficients
/// in zig-zag order; DC is always retained.
pub fn build_lowfreq_mask(rows: usize, cols: usize, fraction: f64) -> Result<FrequencyMask> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Domain(format!(
            "kept fraction {fraction} outside (0, 1]"
        )));
    }
    let total = rows * cols;
    let keep = ((fraction * total as f64).ceil() as usize).clamp(1, total);
    let order = zigzag_order(rows, cols);
    let mut member = vec![false; total];
    let mut indices = Vec::with_capacity(keep);
    for &(r, c) in order.iter().take(keep) {
        let idx = r * cols + c;
        member[idx] = true;
        indices.push(idx);
    }
    Ok(FrequencyMask {
        rows,
        cols,
        kept_fraction: fraction,
        indices,
        member,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zigzag_matches_jpeg_8x8_table() {
        // Classic JPEG zig-zag: position of each linear index in scan order.
        const ZIG_ZAG: [usize; 64] = [
            0, 1, 5, 6, 14, 15, 27, 28, 2, 4, 7, 13, 16, 26, 29, 42, 3, 8, 12, 17, 25, 30, 41, 43,
            9, 11, 18, 24, 31, 40, 44, 53, 10, 19, 23, 32, 39, 45, 52, 54, 20, 22, 33, 38, 46, 51,
            55, 60, 21, 34, 37, 47, 50, 56, 59, 61, 35, 36, 48, 49, 57, 58, 62, 63,
        ];
        let order = zigzag_order(8, 8);
        for (pos, &(r, c)) in order.iter().enumerate() {
            assert_eq!(ZIG_ZAG[r * 8 + c], pos, "cell ({r},{c})");
        }
    }

    #[test]
    fn full_fraction_keeps_everything() {
        let mask = build_lowfreq_mask(16, 16, 1.0).unwrap();
        assert_eq!(mask.len(), 256);
    }

    #[test]
    fn paper_fraction_on_1024() {
        let mask = build_lowfreq_mask(1024, 1024, 0.0125).unwrap();
        assert_eq!(mask.len(), 13_108);
    }

    #[test]
    fn vanishing_fraction_keeps_dc() {
        let mask = build_lowfreq_mask(64, 64, 1e-9).unwrap();
        assert_eq!(mask.len(), 1);
        assert_eq!(mask.indices()[0], 0);
        assert!(mask.contains(0));
    }

    #[test]
    fn projection_is_idempotent() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(2);
        let mask = build_lowfreq_mask(16, 16, 0.1).unwrap();
        let mut g = Grid::from_data(16, 16, (0..256).map(|_| rng.gen::<f64>()).collect());
        mask.project(&mut g);
        let once = g.clone();
        mask.project(&mut g);
        assert_eq!(once, g);
        let kept = g.data.iter().filter(|v| **v != 0.0).count();
        assert!(kept <= mask.len());
    }

    #[test]
    fn bad_fraction_rejected() {
        assert!(build_lowfreq_mask(8, 8, 0.0).is_err());
        assert!(build_lowfreq_mask(8, 8, 1.5).is_err());
    }
}

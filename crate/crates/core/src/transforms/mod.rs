//! Linear signal-processing substrate: multilevel DWT, 2-D DCT, the
//! low-frequency attack mask, and an approximate JPEG codec.

mod dct;
mod dwt;
mod jpeg;
mod mask;

pub use dct::{dct1d, dct2d, idct1d, idct2d};
pub use dwt::{dwt_forward, dwt_forward_plane, dwt_inverse, dwt_inverse_plane, WaveletPyramid};
pub use jpeg::{jpeg_approx, quant_tables_for_quality, CHROMINANCE_QUANT, LUMINANCE_QUANT};
pub use mask::{build_lowfreq_mask, zigzag_order, FrequencyMask};

use crate::scalar::Real;

/// A rectangular coefficient or sample grid, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Real> Grid<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_data(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn at(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut T {
        &mut self.data[r * self.cols + c]
    }

    pub fn energy(&self) -> T {
        self.data.iter().fold(T::zero(), |s, &v| s + v * v)
    }
}

//! Orthonormal type-II DCT in one and two dimensions.
//!
//! Plans are cached per length in a thread-local planner; results are
//! bitwise deterministic regardless of the calling thread.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use rustdct::{DctPlanner, TransformType2And3};

use super::Grid;

thread_local! {
    static PLANNER: RefCell<DctPlanner<f64>> = RefCell::new(DctPlanner::new());
    static PLANS: RefCell<HashMap<usize, Arc<dyn TransformType2And3<f64>>>> =
        RefCell::new(HashMap::new());
}

fn plan(len: usize) -> Arc<dyn TransformType2And3<f64>> {
    PLANS.with(|plans| {
        let mut plans = plans.borrow_mut();
        plans
            .entry(len)
            .or_insert_with(|| PLANNER.with(|p| p.borrow_mut().plan_dct2(len)))
            .clone()
    })
}

/// In-place orthonormal DCT-II of a single row.
fn dct2_row(buf: &mut [f64]) {
    let n = buf.len();
    let p = plan(n);
    let mut scratch = vec![0.0; p.get_scratch_len()];
    p.process_dct2_with_scratch(buf, &mut scratch);
    let s0 = (1.0 / n as f64).sqrt();
    let s = (2.0 / n as f64).sqrt();
    buf[0] *= s0;
    for v in &mut buf[1..] {
        *v *= s;
    }
}

/// In-place orthonormal inverse (DCT-III with matching scaling).
fn idct2_row(buf: &mut [f64]) {
    let n = buf.len();
    let s0 = (1.0 / n as f64).sqrt();
    let s = (2.0 / n as f64).sqrt();
    buf[0] *= 2.0 * s0;
    for v in &mut buf[1..] {
        *v *= s;
    }
    let p = plan(n);
    let mut scratch = vec![0.0; p.get_scratch_len()];
    p.process_dct3_with_scratch(buf, &mut scratch);
}

/// Orthonormal 1-D DCT-II of an arbitrary-length vector.
pub fn dct1d(data: &[f64]) -> Vec<f64> {
    let mut buf = data.to_vec();
    dct2_row(&mut buf);
    buf
}

/// Inverse of [`dct1d`].
pub fn idct1d(coeffs: &[f64]) -> Vec<f64> {
    let mut buf = coeffs.to_vec();
    idct2_row(&mut buf);
    buf
}

fn transpose(rows: usize, cols: usize, data: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; data.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = data[r * cols + c];
        }
    }
    out
}

/// Orthonormal 2-D DCT-II of a rectangular plane (separable, rows then
/// columns).
pub fn dct2d(plane: &Grid<f64>) -> Grid<f64> {
    let (rows, cols) = (plane.rows, plane.cols);
    let mut data = plane.data.clone();
    for row in data.chunks_mut(cols) {
        dct2_row(row);
    }
    let mut t = transpose(rows, cols, &data);
    for col in t.chunks_mut(rows) {
        dct2_row(col);
    }
    Grid::from_data(rows, cols, transpose(cols, rows, &t))
}

/// Inverse of [`dct2d`]; `idct2d(dct2d(x)) == x` to machine precision.
pub fn idct2d(coeffs: &Grid<f64>) -> Grid<f64> {
    let (rows, cols) = (coeffs.rows, coeffs.cols);
    let mut t = transpose(rows, cols, &coeffs.data);
    for col in t.chunks_mut(rows) {
        idct2_row(col);
    }
    let mut data = transpose(cols, rows, &t);
    for row in data.chunks_mut(cols) {
        idct2_row(row);
    }
    Grid::from_data(rows, cols, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};

    fn random_plane(rows: usize, cols: usize, seed: u64) -> Grid<f64> {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
        Grid::from_data(rows, cols, (0..rows * cols).map(|_| rng.gen::<f64>() - 0.5).collect())
    }

    #[test]
    fn constant_plane_dc_gain() {
        // N x N constant c: only the DC coefficient is nonzero, value c*N.
        let n = 16;
        let c = 0.42;
        let plane = Grid::from_data(n, n, vec![c; n * n]);
        let coeffs = dct2d(&plane);
        assert_abs_diff_eq!(coeffs.at(0, 0), c * n as f64, epsilon = 1e-10);
        for (i, &v) in coeffs.data.iter().enumerate() {
            if i != 0 {
                assert_abs_diff_eq!(v, 0.0, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn roundtrip_identity() {
        let plane = random_plane(48, 80, 4);
        let back = idct2d(&dct2d(&plane));
        let max_err = plane
            .data
            .iter()
            .zip(&back.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(max_err < 1e-9, "max roundtrip error {max_err}");
    }

    #[test]
    fn parseval_energy() {
        let plane = random_plane(64, 64, 5);
        let coeffs = dct2d(&plane);
        let rel = (coeffs.energy() - plane.energy()).abs() / plane.energy();
        assert!(rel < 1e-6, "relative energy error {rel}");
    }

    #[test]
    fn dct_is_linear() {
        let x = random_plane(32, 32, 6);
        let y = random_plane(32, 32, 7);
        let (a, b) = (0.9, 2.3);
        let combo = Grid::from_data(
            32,
            32,
            x.data
                .iter()
                .zip(&y.data)
                .map(|(&xv, &yv)| a * xv + b * yv)
                .collect(),
        );
        let cx = dct2d(&x);
        let cy = dct2d(&y);
        let cc = dct2d(&combo);
        for i in 0..cc.data.len() {
            assert_abs_diff_eq!(cc.data[i], a * cx.data[i] + b * cy.data[i], epsilon = 1e-9);
        }
    }

    #[test]
    fn one_dimensional_roundtrip_and_parseval() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(8);
        let x: Vec<f64> = (0..12289).map(|_| rng.gen::<f64>() - 0.5).collect();
        let c = dct1d(&x);
        let ex: f64 = x.iter().map(|v| v * v).sum();
        let ec: f64 = c.iter().map(|v| v * v).sum();
        assert_abs_diff_eq!(ex, ec, epsilon = 1e-6 * ex);
        let back = idct1d(&c);
        for (a, b) in x.iter().zip(&back) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
    }
}

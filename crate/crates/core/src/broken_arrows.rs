//! Classical wavelet-domain zero-bit watermarking with secret hypercones.
//!
//! The key derives, from a seed, an `M x N_f` pseudo-orthogonal projection
//! basis over the first `N_f` detail-band wavelet coefficients plus `N_c`
//! secret unit cone axes in the subspace. Embedding pushes the host deep
//! inside the nearest cone at a fixed pixel-domain PSNR; detection reports
//! the union-bound p-value of the winning cone.

use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::attacks::AttackRecord;
use crate::error::{Error, Result};
use crate::hypercone::{abs_cosine, cosine_from_pfa, multi_cone_pvalue, PValue};
use crate::image::{norm_for_psnr, psnr, scale_to_target_psnr, Decibels, Image};
use crate::transforms::{dwt_forward_plane, dwt_inverse_plane, Grid, WaveletPyramid};

/// Decomposition depth used by the scheme.
pub const DWT_LEVELS: usize = 3;

/// RGB channel carrying the watermark (green); single-channel images use
/// their only plane.
pub const EMBED_CHANNEL: usize = 1;

/// Subspace and cone-count parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BaParams {
    /// Subspace dimension M.
    pub subspace_dim: usize,
    /// Number of embedding coefficients N_f.
    pub coeff_count: usize,
    /// Number of secret cones N_c.
    pub cone_count: usize,
}

impl BaParams {
    /// Operating point for 1024x1024 images: M = 128, N_f = 60492, N_c = 50.
    pub fn full_scale() -> Self {
        Self {
            subspace_dim: 128,
            coeff_count: 60_492,
            cone_count: 50,
        }
    }

    /// Desk-scale profile for 256x256 images: N_f shrinks by 16, M and N_c
    /// unchanged.
    pub fn small_scale() -> Self {
        Self {
            subspace_dim: 128,
            coeff_count: 3_781,
            cone_count: 50,
        }
    }
}

/// Seed-derived secret key material.
#[derive(Debug, Clone)]
pub struct BaKey {
    seed: u64,
    params: BaParams,
    /// M x N_f, row-major, orthonormal rows.
    basis: Vec<f64>,
    /// N_c unit vectors in R^M.
    cone_axes: Vec<Vec<f64>>,
}

const KEY_MAGIC: &[u8; 4] = b"BAKY";
const KEY_VERSION: u16 = 1;

impl BaKey {
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> BaParams {
        self.params
    }

    pub fn subspace_dim(&self) -> usize {
        self.params.subspace_dim
    }

    pub fn coeff_count(&self) -> usize {
        self.params.coeff_count
    }

    pub fn cone_axes(&self) -> &[Vec<f64>] {
        &self.cone_axes
    }

    pub fn basis_row(&self, i: usize) -> &[f64] {
        let nf = self.params.coeff_count;
        &self.basis[i * nf..(i + 1) * nf]
    }

    /// `basis . coeffs`, an M-vector.
    pub fn project_coeffs(&self, coeffs: &[f64]) -> Vec<f64> {
        let nf = self.params.coeff_count;
        assert_eq!(coeffs.len(), nf);
        (0..self.params.subspace_dim)
            .into_par_iter()
            .map(|i| {
                self.basis[i * nf..(i + 1) * nf]
                    .iter()
                    .zip(coeffs)
                    .map(|(&b, &c)| b * c)
                    .sum()
            })
            .collect()
    }

    /// `basis^T . v`, an N_f-vector (the adjoint of [`Self::project_coeffs`]).
    pub fn backproject(&self, v: &[f64]) -> Vec<f64> {
        let nf = self.params.coeff_count;
        assert_eq!(v.len(), self.params.subspace_dim);
        let mut out = vec![0.0f64; nf];
        const CHUNK: usize = 4096;
        out.par_chunks_mut(CHUNK).enumerate().for_each(|(ci, chunk)| {
            let base = ci * CHUNK;
            for (i, &vi) in v.iter().enumerate() {
                let row = &self.basis[i * nf + base..i * nf + base + chunk.len()];
                for (o, &b) in chunk.iter_mut().zip(row) {
                    *o += vi * b;
                }
            }
        });
        out
    }

    /// Binary key record: magic, version, seed, M, N_f, N_c. Derived
    /// material is recomputed, never stored.
    pub fn write_to<W: std::io::Write>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_all(KEY_MAGIC)?;
        w.write_all(&KEY_VERSION.to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        w.write_all(&(self.params.subspace_dim as u32).to_le_bytes())?;
        w.write_all(&(self.params.coeff_count as u32).to_le_bytes())?;
        w.write_all(&(self.params.cone_count as u32).to_le_bytes())
    }

    pub fn read_from<R: std::io::Read>(r: &mut R) -> Result<Self> {
        let mut buf = [0u8; 4 + 2 + 8 + 4 + 4 + 4];
        r.read_exact(&mut buf)
            .map_err(|e| Error::Protocol(format!("key record truncated: {e}")))?;
        if &buf[0..4] != KEY_MAGIC {
            return Err(Error::Protocol("bad key magic".into()));
        }
        let version = u16::from_le_bytes(buf[4..6].try_into().unwrap());
        if version != KEY_VERSION {
            return Err(Error::Protocol(format!("unsupported key version {version}")));
        }
        let seed = u64::from_le_bytes(buf[6..14].try_into().unwrap());
        let m = u32::from_le_bytes(buf[14..18].try_into().unwrap()) as usize;
        let nf = u32::from_le_bytes(buf[18..22].try_into().unwrap()) as usize;
        let nc = u32::from_le_bytes(buf[22..26].try_into().unwrap()) as usize;
        ba_keygen(
            seed,
            BaParams {
                subspace_dim: m,
                coeff_count: nf,
                cone_count: nc,
            },
        )
    }
}

/// Derive the full key from a seed: Gaussian `M x N_f` draws orthonormalized
/// by Gram-Schmidt (two passes), then `N_c` unit-normalized Gaussian axes
/// from the same stream. Same seed, same key, bit for bit.
pub fn ba_keygen(seed: u64, params: BaParams) -> Result<BaKey> {
    let BaParams {
        subspace_dim: m,
        coeff_count: nf,
        cone_count: nc,
    } = params;
    if m < 2 || nf < m || nc < 1 {
        return Err(Error::Domain(format!(
            "invalid parameters M={m}, N_f={nf}, N_c={nc}"
        )));
    }
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
    let mut basis = vec![0.0f64; m * nf];
    for v in &mut basis {
        *v = StandardNormal.sample(&mut rng);
    }

    const MAX_RETRIES: usize = 8;
    let mut retries = 0;
    let mut row = 0;
    while row < m {
        // classical Gram-Schmidt against all previous rows, two passes
        for _ in 0..2 {
            let (prev, cur_all) = basis.split_at_mut(row * nf);
            let cur = &mut cur_all[..nf];
            let dots: Vec<f64> = (0..row)
                .into_par_iter()
                .map(|j| {
                    prev[j * nf..(j + 1) * nf]
                        .iter()
                        .zip(cur.iter())
                        .map(|(&a, &b)| a * b)
                        .sum()
                })
                .collect();
            const CHUNK: usize = 4096;
            cur.par_chunks_mut(CHUNK).enumerate().for_each(|(ci, chunk)| {
                let base = ci * CHUNK;
                for (j, &d) in dots.iter().enumerate() {
                    let prow = &prev[j * nf + base..j * nf + base + chunk.len()];
                    for (c, &p) in chunk.iter_mut().zip(prow) {
                        *c -= d * p;
                    }
                }
            });
        }
        let cur = &mut basis[row * nf..(row + 1) * nf];
        let norm = cur.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-6 * (nf as f64).sqrt() {
            // numerically rank deficient: redraw this row
            retries += 1;
            if retries > MAX_RETRIES {
                return Err(Error::RankDeficient(MAX_RETRIES));
            }
            for v in cur.iter_mut() {
                *v = StandardNormal.sample(&mut rng);
            }
            continue;
        }
        for v in cur.iter_mut() {
            *v /= norm;
        }
        row += 1;
    }

    let cone_axes = (0..nc)
        .map(|_| {
            let mut axis: Vec<f64> = (0..m).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = axis.iter().map(|v| v * v).sum::<f64>().sqrt();
            for v in &mut axis {
                *v /= norm;
            }
            axis
        })
        .collect();

    Ok(BaKey {
        seed,
        params,
        basis,
        cone_axes,
    })
}

fn embed_plane_index(img: &Image) -> usize {
    if img.channels() == 3 {
        EMBED_CHANNEL
    } else {
        0
    }
}

fn embedding_pyramid(img: &Image) -> Result<WaveletPyramid<f64>> {
    let ch = embed_plane_index(img);
    let plane = Grid::from_data(img.height(), img.width(), img.plane(ch).to_vec());
    dwt_forward_plane(&plane, DWT_LEVELS)
}

/// Extract the subspace vector `r = basis . (first N_f detail coefficients)`.
pub fn ba_project(img: &Image, key: &BaKey) -> Result<Vec<f64>> {
    let pyr = embedding_pyramid(img)?;
    if key.coeff_count() > pyr.detail_count() {
        return Err(Error::DimensionMismatch(format!(
            "N_f = {} exceeds the {} available detail coefficients",
            key.coeff_count(),
            pyr.detail_count()
        )));
    }
    let coeffs = pyr.detail_scan(key.coeff_count());
    Ok(key.project_coeffs(&coeffs))
}

/// Absolute cosines of `r` against every cone axis.
pub fn cone_cosines(r: &[f64], key: &BaKey) -> Vec<f64> {
    key.cone_axes.iter().map(|a| abs_cosine(r, a)).collect()
}

/// Decompose `r` against an oriented axis: returns (oriented axis,
/// parallel component, perpendicular component, perpendicular unit vector).
fn plane_frame(r: &[f64], axis: &[f64]) -> (Vec<f64>, f64, f64, Vec<f64>) {
    let dot: f64 = r.iter().zip(axis).map(|(&a, &b)| a * b).sum();
    let sign = if dot < 0.0 { -1.0 } else { 1.0 };
    let oriented: Vec<f64> = axis.iter().map(|&a| sign * a).collect();
    let r_par = dot.abs();
    let perp: Vec<f64> = r
        .iter()
        .zip(&oriented)
        .map(|(&ri, &ai)| ri - r_par * ai)
        .collect();
    let r_perp = perp.iter().map(|v| v * v).sum::<f64>().sqrt();
    let u = if r_perp > 1e-12 {
        perp.iter().map(|&v| v / r_perp).collect()
    } else {
        // r sits on the axis; build any unit vector orthogonal to it
        let m = oriented.len();
        let (j, _) = oriented
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .unwrap();
        let mut e = vec![0.0; m];
        e[j] = 1.0;
        let d: f64 = e.iter().zip(&oriented).map(|(&a, &b)| a * b).sum();
        let mut u: Vec<f64> = e
            .iter()
            .zip(&oriented)
            .map(|(&ei, &ai)| ei - d * ai)
            .collect();
        let n = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        u.iter_mut().for_each(|v| *v /= n);
        u
    };
    (oriented, r_par, r_perp, u)
}

/// In the 2-plane frame `(axis, u)`: the norm-`rho` push of `r = (r_par,
/// r_perp)` that maximizes the absolute cosine against the axis. Returns
/// the push components `(w_par, w_perp)`.
///
/// With budget at least `r_perp` the push lands on the axis as far from the
/// origin as possible; otherwise it rotates to the tangent point of the
/// radius-`rho` circle.
pub fn optimal_alignment_push(r_par: f64, r_perp: f64, rho: f64) -> (f64, f64) {
    if rho >= r_perp {
        ((rho * rho - r_perp * r_perp).sqrt(), -r_perp)
    } else {
        let norm_r = r_par.hypot(r_perp);
        let theta_r = r_perp.atan2(r_par);
        let theta_t = theta_r - (rho / norm_r).asin();
        let mag = (norm_r * norm_r - rho * rho).sqrt();
        (mag * theta_t.cos() - r_par, mag * theta_t.sin() - r_perp)
    }
}

/// In the same frame: the minimal-norm push moving `r` out to angle
/// `theta_target` (the orthogonal projection onto the cone boundary ray).
/// Returns `(w_par, w_perp)`; the push norm is `||r|| sin(theta_target -
/// theta_r)`.
pub fn boundary_projection_push(r_par: f64, r_perp: f64, theta_target: f64) -> (f64, f64) {
    let norm_r = r_par.hypot(r_perp);
    let theta_r = r_perp.atan2(r_par);
    let mag = norm_r * (theta_target - theta_r).cos();
    (
        mag * theta_target.cos() - r_par,
        mag * theta_target.sin() - r_perp,
    )
}

/// Pixel image of a subspace perturbation: scatter `basis^T w` into the
/// first `N_f` detail positions of a zero pyramid and invert. All channels
/// but the embedding one stay zero.
pub fn subspace_delta_pixels(
    height: usize,
    width: usize,
    channels: usize,
    key: &BaKey,
    w: &[f64],
) -> Result<Image> {
    let delta_coeffs = key.backproject(w);
    let mut delta_pyr = WaveletPyramid::zeros(height, width, DWT_LEVELS)?;
    delta_pyr.add_to_detail_scan(&delta_coeffs);
    let delta_plane = dwt_inverse_plane(&delta_pyr)?;
    let mut out = Image::zeros(height, width, channels);
    let ch = if channels == 3 { EMBED_CHANNEL } else { 0 };
    out.plane_mut(ch).copy_from_slice(&delta_plane.data);
    Ok(out)
}

/// Map a subspace perturbation to the pixel domain and add it to `img`.
pub fn subspace_push_to_pixels(img: &Image, key: &BaKey, w: &[f64]) -> Result<Image> {
    let delta = subspace_delta_pixels(img.height(), img.width(), img.channels(), key, w)?;
    let mut out = img.clone();
    for (o, &d) in out.data_mut().iter_mut().zip(delta.data()) {
        *o += d;
    }
    Ok(out)
}

/// Embed the watermark at a fixed pixel-domain PSNR.
pub fn ba_embed(img: &Image, key: &BaKey, target_psnr: Decibels) -> Result<Image> {
    let r = ba_project(img, key)?;
    let norm_r = r.iter().map(|v| v * v).sum::<f64>().sqrt();
    // basis rows and the DWT are orthonormal, so a subspace push of norm
    // rho lands in pixels with the same norm; the final rescale is a no-op
    // up to clamping.
    let rho = norm_for_psnr(img.num_samples(), target_psnr);

    let w: Vec<f64> = if norm_r == 0.0 {
        // degenerate host: embed straight along the first cone axis
        key.cone_axes[0].iter().map(|&a| rho * a).collect()
    } else {
        let cosines = cone_cosines(&r, key);
        let (winner, _) = crate::hypercone::winning_cone(&cosines);
        let (oriented, r_par, r_perp, u) = plane_frame(&r, &key.cone_axes[winner]);
        let (w_par, w_perp) = optimal_alignment_push(r_par, r_perp, rho);
        oriented
            .iter()
            .zip(&u)
            .map(|(&a, &uu)| w_par * a + w_perp * uu)
            .collect()
    };

    let stego = subspace_push_to_pixels(img, key, &w)?;
    scale_to_target_psnr(img, &stego, target_psnr)
}

/// Union-bound detection p-value over all cones.
pub fn ba_detect(img: &Image, key: &BaKey) -> Result<PValue> {
    let r = ba_project(img, key)?;
    if r.iter().all(|&v| v == 0.0) {
        return Ok(PValue::ONE);
    }
    multi_cone_pvalue(&cone_cosines(&r, key), key.subspace_dim())
}

/// The angle threshold of the detection boundary at level `alpha`:
/// detection holds while the winning-cone angle stays below this value.
pub fn detection_angle(alpha: f64, key: &BaKey) -> Result<f64> {
    let per_cone = alpha / key.params.cone_count as f64;
    Ok(cosine_from_pfa(per_cone, key.subspace_dim())?.acos())
}

/// Angle margin that lands the attack at `p = 10 alpha` instead of exactly
/// on the boundary.
pub fn default_attack_margin(alpha: f64, key: &BaKey) -> Result<f64> {
    let boundary = detection_angle(alpha, key)?;
    let relaxed = detection_angle((10.0 * alpha).min(0.5), key)?;
    Ok(relaxed - boundary)
}

/// Closed-form optimal white-box attack: the minimal-norm subspace push
/// moving the extracted vector to `theta_alpha + margin`, back-projected to
/// pixels. The key is disclosed to the attacker, so no detector queries are
/// spent.
pub fn ba_optimal_attack(
    img_wm: &Image,
    key: &BaKey,
    alpha: f64,
    margin: f64,
) -> Result<AttackRecord> {
    if margin <= 0.0 {
        return Err(Error::Domain(format!("margin {margin} must be positive")));
    }
    if ba_detect(img_wm, key)?.exceeds(alpha) {
        return Err(Error::NotDetected);
    }
    let r = ba_project(img_wm, key)?;
    let cosines = cone_cosines(&r, key);
    let (winner, _) = crate::hypercone::winning_cone(&cosines);
    let theta_target = detection_angle(alpha, key)? + margin;

    let (oriented, r_par, r_perp, u) = plane_frame(&r, &key.cone_axes[winner]);
    let (w_par, w_perp) = boundary_projection_push(r_par, r_perp, theta_target);
    let w: Vec<f64> = oriented
        .iter()
        .zip(&u)
        .map(|(&a, &uu)| w_par * a + w_perp * uu)
        .collect();

    let mut attacked = subspace_push_to_pixels(img_wm, key, &w)?;
    attacked.clamp_unit();
    let final_pvalue = ba_detect(&attacked, key)?;
    Ok(AttackRecord {
        psnr_vs_watermarked: psnr(img_wm, &attacked)?,
        attacked,
        queries_used: 0,
        success: final_pvalue.exceeds(alpha),
        final_pvalue,
        attack_name: "ba-optimal".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn small_params() -> BaParams {
        // tiny subspace so keygen stays fast in unit tests
        BaParams {
            subspace_dim: 16,
            coeff_count: 1200,
            cone_count: 8,
        }
    }

    fn test_image(seed: u64, n: usize) -> Image {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
        // smooth base plus texture so detail bands carry energy
        let mut data = vec![0.0f64; n * n * 3];
        for c in 0..3 {
            for y in 0..n {
                for x in 0..n {
                    let smooth =
                        0.5 + 0.2 * ((x as f64 * 0.05).sin() * (y as f64 * 0.07).cos());
                    let noise: f64 = rng.gen::<f64>() - 0.5;
                    data[c * n * n + y * n + x] = (smooth + 0.1 * noise).clamp(0.05, 0.95);
                }
            }
        }
        crate::image::ImageBuf::new(n, n, 3, data).unwrap()
    }

    #[test]
    fn keygen_is_deterministic() {
        let a = ba_keygen(9, small_params()).unwrap();
        let b = ba_keygen(9, small_params()).unwrap();
        assert_eq!(a.basis, b.basis);
        assert_eq!(a.cone_axes, b.cone_axes);
    }

    #[test]
    fn basis_rows_orthonormal() {
        let key = ba_keygen(3, small_params()).unwrap();
        let m = key.subspace_dim();
        for i in 0..m {
            for j in i..m {
                let dot: f64 = key
                    .basis_row(i)
                    .iter()
                    .zip(key.basis_row(j))
                    .map(|(&a, &b)| a * b)
                    .sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(dot, expect, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn cone_axes_unit_norm() {
        let key = ba_keygen(4, small_params()).unwrap();
        for axis in key.cone_axes() {
            let n: f64 = axis.iter().map(|v| v * v).sum();
            assert_abs_diff_eq!(n, 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn independent_seeds_give_nearly_orthogonal_axes() {
        // E|cos| ~ sqrt(2 / (pi M)) ~ 0.07 for M = 128
        let p = BaParams {
            subspace_dim: 128,
            coeff_count: 256,
            cone_count: 1,
        };
        let mut total = 0.0;
        let mut count = 0;
        for s in 0..10u64 {
            let a = ba_keygen(100 + s, p).unwrap();
            let b = ba_keygen(200 + s, p).unwrap();
            for ax in a.cone_axes() {
                for bx in b.cone_axes() {
                    total += abs_cosine(ax, bx);
                    count += 1;
                }
            }
        }
        let mean = total / count as f64;
        assert!(mean < 0.15, "mean |cos| = {mean}");
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(ba_keygen(
            0,
            BaParams {
                subspace_dim: 1,
                coeff_count: 10,
                cone_count: 1
            }
        )
        .is_err());
        assert!(ba_keygen(
            0,
            BaParams {
                subspace_dim: 8,
                coeff_count: 4,
                cone_count: 1
            }
        )
        .is_err());
    }

    #[test]
    fn key_record_roundtrip() {
        let key = ba_keygen(77, small_params()).unwrap();
        let mut buf = Vec::new();
        key.write_to(&mut buf).unwrap();
        assert_eq!(buf.len(), 26);
        let back = BaKey::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back.seed(), 77);
        assert_eq!(back.basis, key.basis);
    }

    #[test]
    fn constant_image_projects_to_zero() {
        let key = ba_keygen(5, small_params()).unwrap();
        let img = crate::image::ImageBuf::new(64, 64, 3, vec![0.4; 64 * 64 * 3]).unwrap();
        let r = ba_project(&img, &key).unwrap();
        for &v in &r {
            assert_abs_diff_eq!(v, 0.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn projection_is_linear() {
        let key = ba_keygen(6, small_params()).unwrap();
        let x = test_image(1, 64);
        let y = test_image(2, 64);
        let sum = {
            let mut s = x.clone();
            for (a, &b) in s.data_mut().iter_mut().zip(y.data()) {
                *a += b;
            }
            s
        };
        let rx = ba_project(&x, &key).unwrap();
        let ry = ba_project(&y, &key).unwrap();
        let rs = ba_project(&sum, &key).unwrap();
        for i in 0..rx.len() {
            assert_abs_diff_eq!(rs[i], rx[i] + ry[i], epsilon = 1e-9);
        }
    }

    /// Planar grid-search oracle for the embedding push.
    fn grid_best_push(r_par: f64, r_perp: f64, rho: f64, points: usize) -> f64 {
        let mut best = -1.0f64;
        for i in 0..points {
            let psi = 2.0 * std::f64::consts::PI * i as f64 / points as f64;
            let wp = rho * psi.cos();
            let wq = rho * psi.sin();
            let c = (r_par + wp).abs() / (r_par + wp).hypot(r_perp + wq);
            best = best.max(c);
        }
        best
    }

    #[test]
    fn alignment_push_matches_grid_oracle() {
        for &(r_par, r_perp, rho) in &[
            (3.0, 1.0, 0.5),
            (3.0, 1.0, 2.0),
            (0.2, 2.0, 1.0),
            (1.0, 1.0, 5.0),
        ] {
            let (w_par, w_perp) = optimal_alignment_push(r_par, r_perp, rho);
            assert_abs_diff_eq!(w_par.hypot(w_perp), rho, epsilon = 1e-9);
            let cos_closed = (r_par + w_par).abs() / (r_par + w_par).hypot(r_perp + w_perp);
            let cos_grid = grid_best_push(r_par, r_perp, rho, 20_000);
            assert!(
                cos_closed >= cos_grid - 1e-6,
                "closed {cos_closed} below grid {cos_grid} at ({r_par},{r_perp},{rho})"
            );
        }
    }

    /// Grid oracle for the minimal distance to the cone boundary: sample
    /// points along both boundary rays.
    fn grid_boundary_distance(r_par: f64, r_perp: f64, theta: f64, points: usize) -> f64 {
        let norm_r = r_par.hypot(r_perp);
        let mut best = f64::INFINITY;
        for ray in [theta, std::f64::consts::PI - theta] {
            for i in 0..points {
                let t = 2.0 * norm_r * i as f64 / points as f64;
                let d = (t * ray.cos() - r_par).hypot(t * ray.sin() - r_perp);
                best = best.min(d);
            }
        }
        best
    }

    #[test]
    fn boundary_push_matches_grid_oracle() {
        for &(r_par, r_perp, theta) in &[(5.0, 0.3, 1.0), (2.0, 1.0, 1.2), (4.0, 0.0, 0.9)] {
            let (w_par, w_perp) = boundary_projection_push(r_par, r_perp, theta);
            let w_norm = w_par.hypot(w_perp);
            let oracle = grid_boundary_distance(r_par, r_perp, theta, 10_000);
            assert!(
                (w_norm - oracle).abs() <= 0.02 * oracle,
                "closed {w_norm} vs oracle {oracle}"
            );
            // the pushed point lies on the boundary angle
            let ang = (r_perp + w_perp).atan2(r_par + w_par);
            assert_abs_diff_eq!(ang, theta, epsilon = 1e-9);
        }
    }

    #[test]
    fn embed_detect_roundtrip_small() {
        let key = ba_keygen(11, small_params()).unwrap();
        let img = test_image(3, 64);
        let wm = ba_embed(&img, &key, Decibels(38.0)).unwrap();
        let p_wm = ba_detect(&wm, &key).unwrap();
        assert!(
            p_wm.log10_value() < -6.0,
            "embedded image must be detected, got log10 p = {}",
            p_wm.log10_value()
        );
        let p_host = ba_detect(&img, &key).unwrap();
        assert!(
            p_host.log10_value() > -3.0,
            "host should not be detected, got log10 p = {}",
            p_host.log10_value()
        );
        let p = psnr(&img, &wm).unwrap();
        assert!((p.value() - 38.0).abs() < 0.2, "embedding PSNR {p}");
    }

    #[test]
    fn embed_sign_symmetric() {
        // replacing r by -r flips the oriented frame but leaves the
        // achieved |cosine| unchanged
        let key = ba_keygen(12, small_params()).unwrap();
        let img = test_image(4, 64);
        let r = ba_project(&img, &key).unwrap();
        let neg: Vec<f64> = r.iter().map(|v| -v).collect();
        let c_pos = cone_cosines(&r, &key);
        let c_neg = cone_cosines(&neg, &key);
        for (a, b) in c_pos.iter().zip(&c_neg) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn optimal_attack_erases_and_is_minimal() {
        let key = ba_keygen(13, small_params()).unwrap();
        let img = test_image(5, 64);
        let alpha = 1e-6;
        let wm = ba_embed(&img, &key, Decibels(38.0)).unwrap();
        let margin = default_attack_margin(alpha, &key).unwrap();
        let rec = ba_optimal_attack(&wm, &key, alpha, margin).unwrap();
        assert!(rec.success, "p = {}", rec.final_pvalue.log10_value());
        assert!(rec.final_pvalue.exceeds(alpha));

        // halving the perturbation keeps the image detected
        let mut half = wm.clone();
        for (h, (&a, &w)) in half
            .data_mut()
            .iter_mut()
            .zip(rec.attacked.data().iter().zip(wm.data()))
        {
            *h = w + 0.5 * (a - w);
        }
        let p_half = ba_detect(&half, &key).unwrap();
        assert!(
            p_half.detects_at(alpha),
            "half perturbation must stay detected, log10 p = {}",
            p_half.log10_value()
        );
    }

    #[test]
    fn attack_requires_detected_input() {
        let key = ba_keygen(14, small_params()).unwrap();
        let img = test_image(6, 64);
        assert!(matches!(
            ba_optimal_attack(&img, &key, 1e-6, 0.01),
            Err(Error::NotDetected)
        ));
        let wm = ba_embed(&img, &key, Decibels(38.0)).unwrap();
        assert!(ba_optimal_attack(&wm, &key, 1e-6, 0.0).is_err());
    }

    #[test]
    fn embedding_monotone_in_strength() {
        let key = ba_keygen(15, small_params()).unwrap();
        let img = test_image(7, 64);
        let mut prev = f64::INFINITY;
        for target in [30.0, 38.0, 44.0] {
            let wm = ba_embed(&img, &key, Decibels(target)).unwrap();
            let r = ba_project(&wm, &key).unwrap();
            let c = cone_cosines(&r, &key)
                .into_iter()
                .fold(0.0f64, f64::max);
            assert!(
                c <= prev + 1e-9,
                "cosine must not grow with target PSNR: {c} after {prev}"
            );
            prev = c;
        }
    }
}

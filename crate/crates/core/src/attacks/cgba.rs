//! Decision-only black-box attack: geometric boundary walking along
//! semicircular arcs, with every search direction confined to a
//! low-frequency DCT subspace.
//!
//! Initialization finds an undetected point by blurring hard (random
//! low-frequency noise as fallback) and bisecting back toward the
//! watermarked image. Each iteration estimates a boundary normal from two
//! masked probes, then bisects along the arc of shrinking distance for the
//! largest rotation that stays undetected. Accepted iterates can only move
//! closer to the watermarked image.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::attacks::AttackRecord;
use crate::detector::DetectorHandle;
use crate::error::Result;
use crate::image::{Image, ImageBuf};
use crate::resample::gaussian_blur;
use crate::transforms::{idct2d, FrequencyMask, Grid};

#[derive(Debug, Clone)]
pub struct CgbaConfig {
    /// Blur strength of the initialization target.
    pub blur_sigma: f64,
    /// Fallback noise amplitude schedule: `base * 2^t` for t tries.
    pub noise_base_amplitude: f64,
    pub noise_tries: u32,
    /// Bisection steps of the initial boundary search.
    pub init_bisect_steps: u32,
    /// Queries spent estimating the boundary normal each iteration.
    pub normal_queries: u32,
    /// Probe offset for normal estimation, as a fraction of the current
    /// distance to the watermarked image.
    pub probe_step_fraction: f64,
    /// Bisection steps along each semicircular arc.
    pub arc_bisect_steps: u32,
    /// Largest rotation angle attempted on the arc.
    pub arc_cap: f64,
    pub seed: u64,
}

impl Default for CgbaConfig {
    fn default() -> Self {
        Self {
            blur_sigma: 8.0,
            noise_base_amplitude: 0.05,
            noise_tries: 8,
            init_bisect_steps: 10,
            normal_queries: 2,
            probe_step_fraction: 0.1,
            arc_bisect_steps: 8,
            arc_cap: 0.45 * std::f64::consts::PI,
            seed: 0,
        }
    }
}

fn l2(a: &Image, b: &Image) -> f64 {
    crate::image::l2_distance(a, b)
}

/// A unit-norm pixel direction supported on the masked low-frequency DCT
/// coefficients of every channel.
fn masked_unit_direction(
    rng: &mut ChaCha12Rng,
    mask: &FrequencyMask,
    channels: usize,
) -> Vec<f64> {
    let (rows, cols) = (mask.rows(), mask.cols());
    let mut out = Vec::with_capacity(rows * cols * channels);
    for _ in 0..channels {
        let mut coeffs = Grid::zeros(rows, cols);
        for &idx in mask.indices() {
            coeffs.data[idx] = StandardNormal.sample(rng);
        }
        out.extend(idct2d(&coeffs).data);
    }
    let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
    for v in &mut out {
        *v /= norm;
    }
    out
}

fn add_scaled(base: &Image, dir: &[f64], scale: f64) -> Image {
    let mut out = base.clone();
    for (o, &d) in out.data_mut().iter_mut().zip(dir) {
        *o += scale * d;
    }
    out.clamp_unit();
    out
}

fn lerp(a: &Image, b: &Image, t: f64) -> Image {
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| x + t * (y - x))
        .collect();
    ImageBuf::new(a.height(), a.width(), a.channels(), data).expect("same shape")
}

/// [`cgba_attack`] plus the trace of accepted perturbation norms (the
/// initial boundary point first).
pub fn cgba_attack_traced(
    handle: &DetectorHandle,
    img_wm: &Image,
    budget: u64,
    mask: &FrequencyMask,
    cfg: &CgbaConfig,
) -> Result<(AttackRecord, Vec<f64>)> {
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let fail = |handle: &DetectorHandle| -> Result<(AttackRecord, Vec<f64>)> {
        Ok((
            AttackRecord::evaluate(
                "cgba",
                img_wm,
                img_wm.clone(),
                handle.queries_used(),
                handle.detector(),
                handle.alpha(),
            )?,
            Vec::new(),
        ))
    };

    // initialization: a strongly blurred copy, then noisier fallbacks
    let blur = gaussian_blur(img_wm, cfg.blur_sigma);
    let mut far: Option<Image> = None;
    if handle.queries_used() < budget && !handle.decide(&blur)? {
        far = Some(blur.clone());
    } else {
        for t in 0..cfg.noise_tries {
            if handle.queries_used() >= budget {
                break;
            }
            let amp = cfg.noise_base_amplitude * f64::powi(2.0, t as i32);
            let dir = masked_unit_direction(&mut rng, mask, img_wm.channels());
            let scale = amp * (img_wm.num_samples() as f64).sqrt();
            let cand = add_scaled(&blur, &dir, scale);
            if !handle.decide(&cand)? {
                far = Some(cand);
                break;
            }
        }
    }
    let Some(far) = far else {
        return fail(handle);
    };

    // bisect the segment [watermarked, far] down to the boundary
    let mut t_undetected = 1.0f64;
    let mut t_detected = 0.0f64;
    let mut x_boundary = far.clone();
    for _ in 0..cfg.init_bisect_steps {
        if handle.queries_used() >= budget {
            break;
        }
        let mid = 0.5 * (t_undetected + t_detected);
        let cand = lerp(img_wm, &far, mid);
        if handle.decide(&cand)? {
            t_detected = mid;
        } else {
            t_undetected = mid;
            x_boundary = cand;
        }
    }

    let mut radius = l2(img_wm, &x_boundary);
    let mut trace = vec![radius];

    // geometric refinement along shrinking arcs
    let per_iter = cfg.normal_queries as u64 + 1;
    while handle.queries_used() + per_iter <= budget && radius > 1e-9 {
        let d_hat: Vec<f64> = x_boundary
            .data()
            .iter()
            .zip(img_wm.data())
            .map(|(&a, &b)| (a - b) / radius)
            .collect();

        // estimate the boundary normal from masked probes; undetected
        // probes vote along their direction, detected ones against it
        let mut normal = vec![0.0f64; img_wm.num_samples()];
        let probe = cfg.probe_step_fraction * radius;
        for _ in 0..cfg.normal_queries {
            if handle.queries_used() >= budget {
                break;
            }
            let u = masked_unit_direction(&mut rng, mask, img_wm.channels());
            let z = add_scaled(&x_boundary, &u, probe);
            let sign = if handle.decide(&z)? { -1.0 } else { 1.0 };
            for (n, &uv) in normal.iter_mut().zip(&u) {
                *n += sign * uv;
            }
        }
        // tangential component of the normal estimate
        let along: f64 = normal.iter().zip(&d_hat).map(|(&n, &d)| n * d).sum();
        let mut m_hat: Vec<f64> = normal
            .iter()
            .zip(&d_hat)
            .map(|(&n, &d)| n - along * d)
            .collect();
        let m_norm = m_hat.iter().map(|v| v * v).sum::<f64>().sqrt();
        if m_norm < 1e-9 {
            continue;
        }
        for v in &mut m_hat {
            *v /= m_norm;
        }

        // largest undetected rotation on the arc z(phi) = wm + r cos(phi)
        // (cos(phi) d + sin(phi) m); distance shrinks as cos(phi)
        let mut phi_lo = 0.0f64;
        let mut phi_hi = cfg.arc_cap;
        let mut accepted: Option<Image> = None;
        for _ in 0..cfg.arc_bisect_steps {
            if handle.queries_used() >= budget {
                break;
            }
            let phi = 0.5 * (phi_lo + phi_hi);
            let (cp, sp) = (phi.cos(), phi.sin());
            let data: Vec<f64> = img_wm
                .data()
                .iter()
                .zip(d_hat.iter().zip(&m_hat))
                .map(|(&wm, (&d, &m))| wm + radius * cp * (cp * d + sp * m))
                .collect();
            let mut cand =
                ImageBuf::new(img_wm.height(), img_wm.width(), img_wm.channels(), data)
                    .expect("same shape");
            cand.clamp_unit();
            if handle.decide(&cand)? {
                phi_hi = phi;
            } else {
                phi_lo = phi;
                accepted = Some(cand);
            }
        }
        if let Some(better) = accepted {
            // clamping only shrinks the distance further
            radius = l2(img_wm, &better);
            x_boundary = better;
            trace.push(radius);
        }
    }

    let record = AttackRecord::evaluate(
        "cgba",
        img_wm,
        x_boundary,
        handle.queries_used(),
        handle.detector(),
        handle.alpha(),
    )?;
    Ok((record, trace))
}

/// Decision-only black-box erasure; see [`cgba_attack_traced`].
pub fn cgba_attack(
    handle: &DetectorHandle,
    img_wm: &Image,
    budget: u64,
    mask: &FrequencyMask,
    cfg: &CgbaConfig,
) -> Result<AttackRecord> {
    cgba_attack_traced(handle, img_wm, budget, mask, cfg).map(|(rec, _)| rec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapter::{zb_embed, MessageKey, SurrogateDecoder, Whitener};
    use crate::detector::ZbDetector;
    use crate::image::Decibels;
    use crate::transforms::build_lowfreq_mask;
    use rand::Rng;

    fn textured_image(seed: u64, n: usize) -> Image {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut data = vec![0.0f64; n * n * 3];
        for c in 0..3 {
            for y in 0..n {
                for x in 0..n {
                    let s = 0.5
                        + 0.25 * ((x as f64 * 0.11).sin() * (y as f64 * 0.07).cos())
                        + 0.05 * (rng.gen::<f64>() - 0.5);
                    data[c * n * n + y * n + x] = s.clamp(0.02, 0.98);
                }
            }
        }
        ImageBuf::new(n, n, 3, data).unwrap()
    }

    #[test]
    fn norms_shrink_and_budget_holds() {
        let n = 64;
        let dec = SurrogateDecoder::new(5, 16, n, n, 3, None).unwrap();
        let key = MessageKey::random(6, 16).unwrap();
        let det = ZbDetector::new(dec.clone(), Whitener::identity(16), key.clone()).unwrap();
        let img = textured_image(3, n);
        let wm = zb_embed(&dec, &key, &img, Decibels(30.0)).unwrap();
        let mask = build_lowfreq_mask(n, n, 0.0125).unwrap();
        let handle = DetectorHandle::new(&det, 1e-6);
        let budget = 400;
        let (rec, trace) =
            cgba_attack_traced(&handle, &wm, budget, &mask, &CgbaConfig::default()).unwrap();
        assert!(rec.queries_used <= budget, "budget violated: {}", rec.queries_used);
        assert!(!trace.is_empty(), "initialization should find the boundary");
        for w in trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "norm increased: {} -> {}", w[0], w[1]);
        }
        assert!(rec.success, "log10 p = {}", rec.final_pvalue.log10_value());
        // refinement improved on the initial boundary point
        assert!(*trace.last().unwrap() <= trace[0]);
    }

    #[test]
    fn deterministic_given_seed() {
        let n = 32;
        let dec = SurrogateDecoder::new(5, 8, n, n, 3, None).unwrap();
        let key = MessageKey::random(6, 8).unwrap();
        let det = ZbDetector::new(dec.clone(), Whitener::identity(8), key.clone()).unwrap();
        let img = textured_image(4, n);
        let wm = zb_embed(&dec, &key, &img, Decibels(30.0)).unwrap();
        let mask = build_lowfreq_mask(n, n, 0.05).unwrap();
        let cfg = CgbaConfig {
            seed: 99,
            ..CgbaConfig::default()
        };
        let run = |cfg: &CgbaConfig| {
            let handle = DetectorHandle::new(&det, 1e-6);
            cgba_attack(&handle, &wm, 150, &mask, cfg).unwrap()
        };
        let a = run(&cfg);
        let b = run(&cfg);
        assert_eq!(a.attacked.data(), b.attacked.data());
        assert_eq!(a.queries_used, b.queries_used);
    }
}

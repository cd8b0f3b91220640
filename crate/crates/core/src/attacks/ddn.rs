//! White-box boundary projection with decoupled direction and norm updates.
//!
//! Each iteration spends one query on a statistic-plus-gradient probe, steps
//! the perturbation against the gradient of the detection statistic, and
//! rescales it to a norm budget that shrinks while undetected and grows
//! while detected. The smallest successful perturbation wins.

use crate::attacks::AttackRecord;
use crate::detector::DetectorHandle;
use crate::error::{Error, Result};
use crate::image::{norm_for_psnr, Decibels, Image};

#[derive(Debug, Clone)]
pub struct DdnConfig {
    /// Initial perturbation norm, expressed as the norm implied by this
    /// PSNR on the attacked image.
    pub initial_norm_psnr: Decibels,
    /// Multiplicative norm adjustment per iteration.
    pub gamma: f64,
    /// Gradient step length as a fraction of the current norm budget.
    pub step_fraction: f64,
}

impl Default for DdnConfig {
    fn default() -> Self {
        Self {
            initial_norm_psnr: Decibels(42.0),
            gamma: 0.05,
            step_fraction: 0.1,
        }
    }
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Minimal-norm watermark erasure within `budget` statistic/gradient
/// queries. Fails with [`Error::GradientUnavailable`] when the detector
/// exposes no gradient.
pub fn ddn_attack(
    handle: &DetectorHandle,
    img_wm: &Image,
    budget: u64,
    cfg: &DdnConfig,
) -> Result<AttackRecord> {
    if !handle.detector().has_gradient() {
        return Err(Error::GradientUnavailable);
    }
    let alpha = handle.alpha();
    let threshold = handle.detector().threshold(alpha)?;
    let d = img_wm.num_samples();
    let mut epsilon = norm_for_psnr(d, cfg.initial_norm_psnr);

    let mut delta = vec![0.0f64; d];
    let mut best: Option<(f64, Image)> = None;

    while handle.queries_used() < budget {
        // current candidate, kept feasible by clamping
        let mut x = img_wm.clone();
        for (xv, &dv) in x.data_mut().iter_mut().zip(&delta) {
            *xv += dv;
        }
        x.clamp_unit();
        let (statistic, grad) = handle.statistic_with_gradient(&x)?;

        // effective perturbation after clamping
        let effective: Vec<f64> = x
            .data()
            .iter()
            .zip(img_wm.data())
            .map(|(&a, &b)| a - b)
            .collect();
        let norm = l2(&effective);

        if statistic < threshold {
            if best.as_ref().map_or(true, |(bn, _)| norm < *bn) {
                best = Some((norm, x.clone()));
            }
            epsilon = (if norm > 0.0 { norm } else { epsilon }) * (1.0 - cfg.gamma);
        } else {
            epsilon = (if norm > 0.0 { norm.max(epsilon) } else { epsilon }) * (1.0 + cfg.gamma);
        }

        let grad_norm = l2(&grad);
        if grad_norm < 1e-12 {
            break; // flat statistic, nothing to follow
        }
        let step = epsilon * cfg.step_fraction;
        for ((dv, &gv), (&xv, &wv)) in delta
            .iter_mut()
            .zip(&grad)
            .zip(x.data().iter().zip(img_wm.data()))
        {
            // continue from the clamped point
            *dv = (xv - wv) - step * gv / grad_norm;
        }
        let delta_norm = l2(&delta);
        if delta_norm > 0.0 {
            let scale = epsilon / delta_norm;
            for dv in &mut delta {
                *dv *= scale;
            }
        }
    }

    let attacked = match &best {
        Some((_, img)) => img.clone(),
        None => img_wm.clone(),
    };
    AttackRecord::evaluate(
        "ddn",
        img_wm,
        attacked,
        handle.queries_used(),
        handle.detector(),
        alpha,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapter::{MessageKey, SurrogateDecoder, Whitener, zb_embed};
    use crate::detector::{Detector, ZbDetector};
    use crate::image::ImageBuf;
    use rand::{Rng, SeedableRng};

    fn random_image(seed: u64, n: usize) -> Image {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
        let data = (0..n * n * 3)
            .map(|_| 0.25 + 0.5 * rng.gen::<f64>())
            .collect();
        ImageBuf::new(n, n, 3, data).unwrap()
    }

    fn surrogate_setup(n: usize) -> (SurrogateDecoder, MessageKey) {
        (
            SurrogateDecoder::new(17, 16, n, n, 3, None).unwrap(),
            MessageKey::random(18, 16).unwrap(),
        )
    }

    #[test]
    fn zero_budget_fails_with_unchanged_image() {
        let (dec, key) = surrogate_setup(64);
        let det = ZbDetector::new(dec.clone(), Whitener::identity(16), key.clone()).unwrap();
        let img = random_image(1, 64);
        let wm = zb_embed(&dec, &key, &img, Decibels(36.0)).unwrap();
        let handle = DetectorHandle::new(&det, 1e-6);
        let rec = ddn_attack(&handle, &wm, 0, &DdnConfig::default()).unwrap();
        assert!(!rec.success);
        assert_eq!(rec.queries_used, 0);
        assert_eq!(rec.attacked.data(), wm.data());
    }

    #[test]
    fn erases_linear_surrogate_near_optimally() {
        // identity whitener: the minimal pixel distance to the cone
        // boundary has the closed form ||v|| sin(theta* - theta_v)
        let (dec, key) = surrogate_setup(64);
        let det = ZbDetector::new(dec.clone(), Whitener::identity(16), key.clone()).unwrap();
        let alpha = 1e-6;
        for seed in 0..5u64 {
            let img = random_image(10 + seed, 64);
            let wm = zb_embed(&dec, &key, &img, Decibels(34.0)).unwrap();

            let v = dec.decode(&wm).unwrap();
            let norm_v: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let s = crate::hypercone::abs_cosine(&v, key.modulated());
            let theta_v = s.acos();
            let theta_star = det.threshold(alpha).unwrap().acos();
            let analytic = norm_v * (theta_star - theta_v).sin();

            let handle = DetectorHandle::new(&det, alpha);
            let rec = ddn_attack(&handle, &wm, 250, &DdnConfig::default()).unwrap();
            assert!(rec.success, "seed {seed}: attack must succeed");
            assert!(rec.queries_used <= 250);
            let norm = crate::image::l2_distance(&wm, &rec.attacked);
            assert!(
                norm <= 1.1 * analytic,
                "seed {seed}: perturbation {norm} vs analytic minimum {analytic}"
            );
        }
    }
}

//! Oracle-guided gradient attack: fixed-step normalized-gradient updates on
//! a proxy score, with success judged post hoc by the true detector.

use crate::attacks::AttackRecord;
use crate::detector::Detector;
use crate::error::{Error, Result};
use crate::image::Image;

/// A differentiable proxy for the detector's output.
pub trait Oracle: Send + Sync {
    fn label(&self) -> &str;
    fn score(&self, img: &Image) -> Result<f64>;
    fn gradient(&self, img: &Image) -> Result<Vec<f64>>;
}

/// Whether the attack descends or ascends the oracle. The proxy's polarity
/// decides; the default descends a watermark-presence score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OracleDirection {
    #[default]
    Descend,
    Ascend,
}

/// The detection statistic of a detector used as its own oracle
/// (watermark-presence score; descend to erase).
pub struct DetectorStatisticOracle<'a> {
    detector: &'a dyn Detector,
    label: String,
}

impl<'a> DetectorStatisticOracle<'a> {
    pub fn new(detector: &'a dyn Detector) -> Self {
        Self {
            label: format!("stat-oracle[{}]", detector.name()),
            detector,
        }
    }
}

impl Oracle for DetectorStatisticOracle<'_> {
    fn label(&self) -> &str {
        &self.label
    }

    fn score(&self, img: &Image) -> Result<f64> {
        self.detector.statistic(img)
    }

    fn gradient(&self, img: &Image) -> Result<Vec<f64>> {
        self.detector.gradient(img)
    }
}

/// Fixed-step normalized-gradient walk on the oracle for `iterations`
/// steps, clamped back into `[0, 1]` each step. Stops early on a vanishing
/// gradient. Success is evaluated against `eval_detector` afterwards; the
/// oracle itself costs no detector queries.
pub fn oracle_gradient_attack(
    oracle: &dyn Oracle,
    img_wm: &Image,
    iterations: u64,
    step: f64,
    direction: OracleDirection,
    eval_detector: &dyn Detector,
    alpha: f64,
) -> Result<AttackRecord> {
    if step < 0.0 {
        return Err(Error::Domain(format!("step {step} must be nonnegative")));
    }
    let sign = match direction {
        OracleDirection::Descend => -1.0,
        OracleDirection::Ascend => 1.0,
    };
    let mut x = img_wm.clone();
    let mut performed = 0u64;
    if step > 0.0 {
        for _ in 0..iterations {
            let grad = oracle.gradient(&x)?;
            let norm = grad.iter().map(|v| v * v).sum::<f64>().sqrt();
            performed += 1;
            if norm < 1e-12 {
                break; // vanishing gradient, record what we have
            }
            for (xv, &gv) in x.data_mut().iter_mut().zip(&grad) {
                *xv += sign * step * gv / norm;
            }
            x.clamp_unit();
        }
    }
    AttackRecord::evaluate(
        &format!("wmforger[{}]", oracle.label()),
        img_wm,
        x,
        performed,
        eval_detector,
        alpha,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapter::{zb_embed, MessageKey, SurrogateDecoder, Whitener};
    use crate::detector::ZbDetector;
    use crate::image::{Decibels, ImageBuf};
    use rand::{Rng, SeedableRng};

    fn random_image(seed: u64, n: usize) -> Image {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
        let data = (0..n * n * 3)
            .map(|_| 0.2 + 0.6 * rng.gen::<f64>())
            .collect();
        ImageBuf::new(n, n, 3, data).unwrap()
    }

    fn setup(n: usize, dec_seed: u64, key_seed: u64) -> (SurrogateDecoder, MessageKey, ZbDetector) {
        let dec = SurrogateDecoder::new(dec_seed, 16, n, n, 3, None).unwrap();
        let key = MessageKey::random(key_seed, 16).unwrap();
        let det = ZbDetector::new(dec.clone(), Whitener::identity(16), key.clone()).unwrap();
        (dec, key, det)
    }

    #[test]
    fn self_oracle_erases_watermark() {
        let n = 64;
        let (dec, key, det) = setup(n, 50, 51);
        let img = random_image(1, n);
        let wm = zb_embed(&dec, &key, &img, Decibels(36.0)).unwrap();
        let oracle = DetectorStatisticOracle::new(&det);
        // the step is sized for unit-scale images; 250 normalized steps of
        // 1e-3 walk up to a quarter pixel-norm unit
        let rec = oracle_gradient_attack(
            &oracle,
            &wm,
            250,
            1e-3 * (wm.num_samples() as f64).sqrt() / 16.0,
            OracleDirection::Descend,
            &det,
            1e-6,
        )
        .unwrap();
        assert!(rec.queries_used <= 250);
        assert!(rec.success, "log10 p = {}", rec.final_pvalue.log10_value());
    }

    #[test]
    fn no_transfer_between_independent_surrogates() {
        let n = 64;
        let (dec_a, key_a, det_a) = setup(n, 60, 61);
        let (_, _, det_b) = setup(n, 70, 71);
        let img = random_image(2, n);
        let wm = zb_embed(&dec_a, &key_a, &img, Decibels(36.0)).unwrap();
        // attack guided by an UNRELATED detector's statistic
        let oracle = DetectorStatisticOracle::new(&det_b);
        let rec = oracle_gradient_attack(
            &oracle,
            &wm,
            100,
            1e-3,
            OracleDirection::Descend,
            &det_a,
            1e-6,
        )
        .unwrap();
        assert!(!rec.success, "independent projections must not transfer");
    }

    #[test]
    fn zero_step_is_identity_and_failure() {
        let n = 32;
        let (dec, key, det) = setup(n, 80, 81);
        let img = random_image(3, n);
        let wm = zb_embed(&dec, &key, &img, Decibels(30.0)).unwrap();
        let oracle = DetectorStatisticOracle::new(&det);
        let rec = oracle_gradient_attack(
            &oracle,
            &wm,
            50,
            0.0,
            OracleDirection::Descend,
            &det,
            1e-6,
        )
        .unwrap();
        assert_eq!(rec.attacked.data(), wm.data());
        assert!(!rec.success);
    }
}

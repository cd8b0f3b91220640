//! Abstract detector surface shared by all attacks: p-value, raw statistic,
//! optional analytic pixel gradient, and budgeted query accounting.

use std::cell::Cell;

use crate::adapter::{zb_detect, zb_statistic, MessageKey, SurrogateDecoder, Whitener};
use crate::broken_arrows::{
    ba_detect, ba_project, cone_cosines, subspace_delta_pixels, BaKey,
};
use crate::error::{Error, Result};
use crate::hypercone::{cosine_from_pfa, winning_cone, PValue};
use crate::image::Image;

/// Image to p-value scoring interface. The statistic is the winning
/// absolute cosine; `p <= alpha` exactly when `statistic >= threshold(alpha)`.
pub trait Detector: Send + Sync {
    fn name(&self) -> &str;

    /// Subspace dimension M of the underlying hypercone.
    fn subspace_dim(&self) -> usize;

    fn detect(&self, img: &Image) -> Result<PValue>;

    /// Raw detection statistic (absolute cosine of the winning cone).
    fn statistic(&self, img: &Image) -> Result<f64>;

    /// Statistic threshold equivalent to level `alpha`.
    fn threshold(&self, alpha: f64) -> Result<f64>;

    /// Analytic pixel gradient of the statistic.
    fn gradient(&self, img: &Image) -> Result<Vec<f64>> {
        let _ = img;
        Err(Error::GradientUnavailable)
    }

    fn has_gradient(&self) -> bool {
        false
    }
}

/// Broken-Arrows detection under a fixed key.
pub struct BaDetector {
    key: BaKey,
}

impl BaDetector {
    pub fn new(key: BaKey) -> Self {
        Self { key }
    }

    pub fn key(&self) -> &BaKey {
        &self.key
    }
}

impl Detector for BaDetector {
    fn name(&self) -> &str {
        "broken-arrows"
    }

    fn subspace_dim(&self) -> usize {
        self.key.subspace_dim()
    }

    fn detect(&self, img: &Image) -> Result<PValue> {
        ba_detect(img, &self.key)
    }

    fn statistic(&self, img: &Image) -> Result<f64> {
        let r = ba_project(img, &self.key)?;
        let (_, best) = winning_cone(&cone_cosines(&r, &self.key));
        Ok(best)
    }

    fn threshold(&self, alpha: f64) -> Result<f64> {
        cosine_from_pfa(alpha / self.key.params().cone_count as f64, self.subspace_dim())
    }

    fn gradient(&self, img: &Image) -> Result<Vec<f64>> {
        let r = ba_project(img, &self.key)?;
        let norm_r = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm_r == 0.0 {
            return Err(Error::DegenerateHost);
        }
        let cosines = cone_cosines(&r, &self.key);
        let (winner, s) = winning_cone(&cosines);
        let axis = &self.key.cone_axes()[winner];
        let g: f64 = r.iter().zip(axis).map(|(&a, &b)| a * b).sum();
        let sign = if g < 0.0 { -1.0 } else { 1.0 };
        // d s / d r = (sign(g) a - s r_hat) / ||r||
        let grad_r: Vec<f64> = r
            .iter()
            .zip(axis)
            .map(|(&ri, &ai)| (sign * ai - s * ri / norm_r) / norm_r)
            .collect();
        let delta = subspace_delta_pixels(
            img.height(),
            img.width(),
            img.channels(),
            &self.key,
            &grad_r,
        )?;
        Ok(delta.into_data())
    }

    fn has_gradient(&self) -> bool {
        true
    }
}

/// Converted multi-bit detection: surrogate decoder, whitener, message key.
pub struct ZbDetector {
    dec: SurrogateDecoder,
    whitener: Whitener,
    key: MessageKey,
}

impl ZbDetector {
    pub fn new(dec: SurrogateDecoder, whitener: Whitener, key: MessageKey) -> Result<Self> {
        if dec.output_dim() != key.len() || whitener.dim() != key.len() {
            return Err(Error::DimensionMismatch(format!(
                "decoder M = {}, whitener M = {}, key M = {}",
                dec.output_dim(),
                whitener.dim(),
                key.len()
            )));
        }
        Ok(Self { dec, whitener, key })
    }

    pub fn decoder(&self) -> &SurrogateDecoder {
        &self.dec
    }

    pub fn message_key(&self) -> &MessageKey {
        &self.key
    }

    pub fn whitener(&self) -> &Whitener {
        &self.whitener
    }
}

impl Detector for ZbDetector {
    fn name(&self) -> &str {
        "zb-surrogate"
    }

    fn subspace_dim(&self) -> usize {
        self.key.len()
    }

    fn detect(&self, img: &Image) -> Result<PValue> {
        zb_detect(&self.dec, &self.whitener, &self.key, img)
    }

    fn statistic(&self, img: &Image) -> Result<f64> {
        zb_statistic(&self.dec, &self.whitener, &self.key, img)
    }

    fn threshold(&self, alpha: f64) -> Result<f64> {
        cosine_from_pfa(alpha, self.subspace_dim())
    }

    fn gradient(&self, img: &Image) -> Result<Vec<f64>> {
        let raw = self.dec.decode(img)?;
        let v = self.whitener.apply(&raw);
        let norm_v = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm_v == 0.0 {
            return Err(Error::DegenerateHost);
        }
        let k = self.key.modulated();
        let g: f64 = v.iter().zip(k).map(|(&a, &b)| a * b).sum();
        let s = g.abs() / norm_v;
        let sign = if g < 0.0 { -1.0 } else { 1.0 };
        let grad_v: Vec<f64> = v
            .iter()
            .zip(k)
            .map(|(&vi, &ki)| (sign * ki - s * vi / norm_v) / norm_v)
            .collect();
        // chain through the symmetric whitener, the optional tanh, and P^T
        let mut grad_dec = self.whitener.apply_linear(&grad_v);
        if !self.dec.is_linear() {
            let gain = self.dec.tanh_gain().expect("nonlinear mode");
            for (gd, &out) in grad_dec.iter_mut().zip(&raw) {
                // raw = tanh(gain * u): d raw / d u = gain (1 - raw^2)
                *gd *= gain * (1.0 - out * out);
            }
        }
        Ok(self.dec.adjoint(&grad_dec))
    }

    fn has_gradient(&self) -> bool {
        true
    }
}

/// Converted detection through an out-of-process decoder; no gradient.
pub struct ExternalZbDetector {
    dec: std::sync::Arc<crate::sidecar::ExternalDecoder>,
    whitener: Whitener,
    key: MessageKey,
}

impl ExternalZbDetector {
    pub fn new(
        dec: std::sync::Arc<crate::sidecar::ExternalDecoder>,
        whitener: Whitener,
        key: MessageKey,
    ) -> Result<Self> {
        use crate::adapter::DecodeVector;
        if dec.output_dim() != key.len() || whitener.dim() != key.len() {
            return Err(Error::DimensionMismatch(format!(
                "decoder M = {}, whitener M = {}, key M = {}",
                dec.output_dim(),
                whitener.dim(),
                key.len()
            )));
        }
        Ok(Self { dec, whitener, key })
    }
}

impl Detector for ExternalZbDetector {
    fn name(&self) -> &str {
        "zb-external"
    }

    fn subspace_dim(&self) -> usize {
        self.key.len()
    }

    fn detect(&self, img: &Image) -> Result<PValue> {
        zb_detect(self.dec.as_ref(), &self.whitener, &self.key, img)
    }

    fn statistic(&self, img: &Image) -> Result<f64> {
        zb_statistic(self.dec.as_ref(), &self.whitener, &self.key, img)
    }

    fn threshold(&self, alpha: f64) -> Result<f64> {
        cosine_from_pfa(alpha, self.subspace_dim())
    }
}

/// A detector plus query accounting. Every probe increments the counter by
/// its configured cost; post-hoc verification goes through
/// [`DetectorHandle::detector`] and is never counted.
pub struct DetectorHandle<'a> {
    detector: &'a dyn Detector,
    alpha: f64,
    detect_cost: u64,
    gradient_cost: u64,
    queries: Cell<u64>,
}

impl<'a> DetectorHandle<'a> {
    pub fn new(detector: &'a dyn Detector, alpha: f64) -> Self {
        Self {
            detector,
            alpha,
            detect_cost: 1,
            gradient_cost: 1,
            queries: Cell::new(0),
        }
    }

    pub fn with_costs(mut self, detect_cost: u64, gradient_cost: u64) -> Self {
        self.detect_cost = detect_cost;
        self.gradient_cost = gradient_cost;
        self
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn queries_used(&self) -> u64 {
        self.queries.get()
    }

    pub fn detector(&self) -> &dyn Detector {
        self.detector
    }

    fn charge(&self, cost: u64) {
        self.queries.set(self.queries.get() + cost);
    }

    /// Counted yes/no decision at level alpha.
    pub fn decide(&self, img: &Image) -> Result<bool> {
        self.charge(self.detect_cost);
        Ok(self.detector.detect(img)?.detects_at(self.alpha))
    }

    /// Counted white-box probe: statistic and its pixel gradient.
    pub fn statistic_with_gradient(&self, img: &Image) -> Result<(f64, Vec<f64>)> {
        if !self.detector.has_gradient() {
            return Err(Error::GradientUnavailable);
        }
        self.charge(self.gradient_cost);
        Ok((self.detector.statistic(img)?, self.detector.gradient(img)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::broken_arrows::{ba_keygen, BaParams};
    use crate::image::{Decibels, ImageBuf};
    use rand::{Rng, SeedableRng};

    fn random_image(seed: u64, n: usize) -> Image {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
        let data = (0..n * n * 3)
            .map(|_| 0.2 + 0.6 * rng.gen::<f64>())
            .collect();
        ImageBuf::new(n, n, 3, data).unwrap()
    }

    fn relative_gradient_check(det: &dyn Detector, img: &Image, probes: usize, seed: u64) {
        let grad = det.gradient(img).unwrap();
        let grad_norm: f64 = grad.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(
            grad_norm > 1e-8,
            "gradient check needs a non-stationary point"
        );
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
        let h = 1e-5;
        let mut checked = 0;
        let mut attempts = 0;
        while checked < probes {
            attempts += 1;
            assert!(attempts < 100_000, "could not find nonzero gradient components");
            let i = rng.gen_range(0..img.num_samples());
            if grad[i].abs() < 1e-8 {
                continue; // skip near-zero components where relative error is meaningless
            }
            let mut plus = img.clone();
            plus.data_mut()[i] += h;
            let mut minus = img.clone();
            minus.data_mut()[i] -= h;
            let fd = (det.statistic(&plus).unwrap() - det.statistic(&minus).unwrap()) / (2.0 * h);
            let rel = (fd - grad[i]).abs() / grad[i].abs().max(1e-12);
            assert!(
                rel <= 1e-5,
                "component {i}: analytic {} vs fd {fd}, rel {rel}",
                grad[i]
            );
            checked += 1;
        }
    }

    #[test]
    fn ba_gradient_matches_finite_differences() {
        // probe at the unwatermarked host: a freshly embedded image sits at
        // the cosine maximum where the gradient vanishes
        let key = ba_keygen(
            31,
            BaParams {
                subspace_dim: 16,
                coeff_count: 800,
                cone_count: 4,
            },
        )
        .unwrap();
        let img = random_image(8, 64);
        let det = BaDetector::new(key);
        relative_gradient_check(&det, &img, 20, 99);
    }

    #[test]
    fn zb_gradient_matches_finite_differences() {
        let dec = SurrogateDecoder::new(7, 16, 64, 64, 3, None).unwrap();
        let key = MessageKey::random(8, 16).unwrap();
        let det = ZbDetector::new(dec, Whitener::identity(16), key).unwrap();
        let img = random_image(9, 64);
        relative_gradient_check(&det, &img, 20, 100);
    }

    #[test]
    fn zb_gradient_tanh_mode() {
        let dec = SurrogateDecoder::new(7, 16, 64, 64, 3, Some(3.0)).unwrap();
        let key = MessageKey::random(8, 16).unwrap();
        let det = ZbDetector::new(dec, Whitener::identity(16), key).unwrap();
        let img = random_image(10, 64);
        relative_gradient_check(&det, &img, 10, 101);
    }

    #[test]
    fn handle_counts_queries() {
        let dec = SurrogateDecoder::new(7, 16, 64, 64, 3, None).unwrap();
        let key = MessageKey::random(8, 16).unwrap();
        let det = ZbDetector::new(dec, Whitener::identity(16), key).unwrap();
        let img = random_image(11, 64);
        let handle = DetectorHandle::new(&det, 1e-6);
        handle.decide(&img).unwrap();
        handle.decide(&img).unwrap();
        handle.statistic_with_gradient(&img).unwrap();
        assert_eq!(handle.queries_used(), 3);
        let costly = DetectorHandle::new(&det, 1e-6).with_costs(1, 2);
        costly.statistic_with_gradient(&img).unwrap();
        assert_eq!(costly.queries_used(), 2);
        // uncounted post-hoc access
        costly.detector().detect(&img).unwrap();
        assert_eq!(costly.queries_used(), 2);
    }

    #[test]
    fn threshold_matches_detect_decision() {
        let dec = SurrogateDecoder::new(7, 16, 64, 64, 3, None).unwrap();
        let key = MessageKey::random(8, 16).unwrap();
        let det = ZbDetector::new(dec, Whitener::identity(16), key).unwrap();
        let alpha = 1e-3;
        let t = det.threshold(alpha).unwrap();
        for seed in 0..20 {
            let img = random_image(200 + seed, 64);
            let s = det.statistic(&img).unwrap();
            let p = det.detect(&img).unwrap();
            if (s - t).abs() > 1e-3 * t {
                assert_eq!(
                    s >= t,
                    p.detects_at(alpha),
                    "statistic {s} vs threshold {t}, log10 p {}",
                    p.log10_value()
                );
            }
        }
    }
}

//! Blind valuemetric attacks: deterministic pixel-value transformations
//! with no detector access and no oracle feedback.

use crate::attacks::{AttackRecord, Purifier};
use crate::detector::Detector;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::resample::gaussian_3x3;
use crate::transforms::jpeg_approx;

/// One valuemetric operation with its parameter.
#[derive(Debug, Clone)]
pub enum ValuemetricOp {
    /// JPEG round trip at the given quality factor.
    Jpeg { quality: u8 },
    /// Pointwise `x^gamma` on `[0, 1]` intensities; gamma in (0, 10].
    Gamma { gamma: f64 },
    /// Unsharp masking with a 3x3 Gaussian: `x + amount (x - blur(x))`;
    /// amount in [0, 10].
    Sharpen { amount: f64 },
    /// Repeated purification; the step count is chosen blindly.
    Purify { steps: usize },
}

impl ValuemetricOp {
    pub fn label(&self) -> String {
        match self {
            Self::Jpeg { quality } => format!("jpeg-q{quality}"),
            Self::Gamma { gamma } => format!("gamma-{gamma}"),
            Self::Sharpen { amount } => format!("sharpen-{amount}"),
            Self::Purify { steps } => format!("purify-{steps}"),
        }
    }

    /// Apply the operation; `purifier` is only consulted by
    /// [`ValuemetricOp::Purify`].
    pub fn apply(&self, img: &Image, purifier: Option<&dyn Purifier>) -> Result<Image> {
        match *self {
            Self::Jpeg { quality } => jpeg_approx(img, quality),
            Self::Gamma { gamma } => {
                if !(gamma > 0.0 && gamma <= 10.0) {
                    return Err(Error::Domain(format!("gamma {gamma} outside (0, 10]")));
                }
                let mut out = img.clone();
                for v in out.data_mut() {
                    *v = v.clamp(0.0, 1.0).powf(gamma);
                }
                Ok(out)
            }
            Self::Sharpen { amount } => {
                if !(0.0..=10.0).contains(&amount) {
                    return Err(Error::Domain(format!("amount {amount} outside [0, 10]")));
                }
                let blurred = gaussian_3x3(img);
                let mut out = img.clone();
                for (o, &b) in out.data_mut().iter_mut().zip(blurred.data()) {
                    *o += amount * (*o - b);
                }
                out.clamp_unit();
                Ok(out)
            }
            Self::Purify { steps } => {
                let p = purifier
                    .ok_or_else(|| Error::Config("purify operation needs a purifier".into()))?;
                let mut out = img.clone();
                for _ in 0..steps {
                    out = p.apply(&out)?;
                }
                Ok(out)
            }
        }
    }
}

/// Apply a valuemetric operation and score the result; zero queries by
/// definition of the blind scenario.
pub fn valuemetric(
    img_wm: &Image,
    op: &ValuemetricOp,
    purifier: Option<&dyn Purifier>,
    eval_detector: &dyn Detector,
    alpha: f64,
) -> Result<AttackRecord> {
    let attacked = op.apply(img_wm, purifier)?;
    AttackRecord::evaluate(&op.label(), img_wm, attacked, 0, eval_detector, alpha)
}

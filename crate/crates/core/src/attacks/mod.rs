//! Watermark-removal attacks for the four threat scenarios: white-box
//! gradient boundary projection, decision-only black-box search in a
//! low-frequency subspace, oracle-guided removal, and blind valuemetric
//! processing.

mod cgba;
mod ddn;
mod oracle;
mod valuemetric;
mod wis;

pub use cgba::{cgba_attack, cgba_attack_traced, CgbaConfig};
pub use ddn::{ddn_attack, DdnConfig};
pub use oracle::{oracle_gradient_attack, DetectorStatisticOracle, Oracle, OracleDirection};
pub use valuemetric::{valuemetric, ValuemetricOp};
pub use wis::{wis_attack, WisConfig, WisReport};

use crate::detector::Detector;
use crate::error::Result;
use crate::hypercone::PValue;
use crate::image::{psnr, Decibels, Image};
use crate::resample::{resize, Filter};

/// Outcome of one attack on one watermarked image; the atom of every
/// benchmark curve. Distortion is measured against the watermarked image.
#[derive(Debug, Clone)]
pub struct AttackRecord {
    pub attacked: Image,
    pub psnr_vs_watermarked: Decibels,
    pub queries_used: u64,
    /// `p > alpha` under the detector that was attacked.
    pub success: bool,
    pub final_pvalue: PValue,
    pub attack_name: String,
}

impl AttackRecord {
    /// Assemble a record by measuring the attacked image against the true
    /// detector (the defender's measurement; never counted as a query).
    pub fn evaluate(
        name: &str,
        img_wm: &Image,
        attacked: Image,
        queries_used: u64,
        detector: &dyn Detector,
        alpha: f64,
    ) -> Result<Self> {
        let final_pvalue = detector.detect(&attacked)?;
        Ok(Self {
            psnr_vs_watermarked: psnr(img_wm, &attacked)?,
            attacked,
            queries_used,
            success: final_pvalue.exceeds(alpha),
            final_pvalue,
            attack_name: name.to_string(),
        })
    }
}

/// A deterministic image-to-image lossy bottleneck.
pub trait Purifier: Send + Sync {
    fn label(&self) -> &str;
    fn apply(&self, img: &Image) -> Result<Image>;
}

/// Default purifier: bicubic downsample by a factor, bicubic upsample back.
/// Like a VAE reconstruction it systematically removes mid-frequency
/// content while keeping the image plausible.
#[derive(Debug, Clone)]
pub struct DownUpPurifier {
    pub factor: usize,
}

impl Default for DownUpPurifier {
    fn default() -> Self {
        Self { factor: 2 }
    }
}

impl Purifier for DownUpPurifier {
    fn label(&self) -> &str {
        "downup"
    }

    fn apply(&self, img: &Image) -> Result<Image> {
        let (h, w) = (img.height(), img.width());
        let down = resize(
            img,
            (h / self.factor).max(1),
            (w / self.factor).max(1),
            Filter::Bicubic,
        );
        Ok(resize(&down, h, w, Filter::Bicubic))
    }
}

/// Pass-through purifier; useful as a fixed-point control.
#[derive(Debug, Clone, Default)]
pub struct IdentityPurifier;

impl Purifier for IdentityPurifier {
    fn label(&self) -> &str {
        "identity"
    }

    fn apply(&self, img: &Image) -> Result<Image> {
        Ok(img.clone())
    }
}

/// A purifier hosted out of process behind the sidecar protocol.
pub struct SidecarPurifier {
    sidecar: std::sync::Mutex<crate::sidecar::Sidecar>,
    label: String,
}

impl SidecarPurifier {
    pub fn new(sidecar: crate::sidecar::Sidecar, label: impl Into<String>) -> Self {
        Self {
            sidecar: std::sync::Mutex::new(sidecar),
            label: label.into(),
        }
    }
}

impl Purifier for SidecarPurifier {
    fn label(&self) -> &str {
        &self.label
    }

    fn apply(&self, img: &Image) -> Result<Image> {
        self.sidecar
            .lock()
            .expect("sidecar mutex poisoned")
            .purify(img)
    }
}

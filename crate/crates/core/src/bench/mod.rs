//! Evaluation harness: corpus management, scenario execution, attack
//! success rates, worst-case envelopes, calibration suites, and exports.

mod config;
mod corpus;
mod report;

pub use config::{parse_config, ConfigMap};
pub use corpus::{
    derive_seed, synthetic_corpus, synthetic_image, Corpus, CorpusSource, SUPPRESSION_FLOOR,
};
pub use report::{
    read_results_log, write_curves_csv, write_results_log, write_summary_json, write_svg,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adapter::{fit_whitener, zb_embed, MessageKey, SurrogateDecoder, Whitener};
use crate::attacks::{
    cgba_attack, ddn_attack, oracle_gradient_attack, valuemetric, wis_attack, AttackRecord,
    CgbaConfig, DdnConfig, DetectorStatisticOracle, DownUpPurifier, OracleDirection,
    ValuemetricOp, WisConfig,
};
use crate::broken_arrows::{ba_embed, ba_keygen, ba_optimal_attack, default_attack_margin, BaParams};
use crate::detector::{BaDetector, Detector, DetectorHandle, ZbDetector};
use crate::error::{Error, Result};
use crate::image::{psnr, Decibels, Image};
use crate::transforms::build_lowfreq_mask;

/// The four attacker scenarios, in decreasing order of knowledge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    WhiteBox,
    BlackBox,
    Oracle,
    Blind,
}

impl Scenario {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scenario::WhiteBox => "white-box",
            Scenario::BlackBox => "black-box",
            Scenario::Oracle => "oracle",
            Scenario::Blind => "blind",
        }
    }
}

/// Which watermarking scheme the run defends.
#[derive(Debug, Clone, PartialEq)]
pub enum DetectorSpec {
    BrokenArrows { params: BaParams },
    Surrogate { m: usize, tanh_gain: Option<f64> },
    /// Out-of-process decoder behind the sidecar protocol; supports
    /// calibration and detection flows (no embedder is available, so
    /// attack scenarios reject it). The launch command comes from the
    /// `ZBWM_SIDECAR` environment variable.
    External,
}

/// How the surrogate pipeline obtains its whitener.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WhitenerPolicy {
    Identity,
    /// Fit on 10 M seeded synthetic textures at the run size.
    Synthetic,
    /// Fit on the first half of the corpus; errors below 10 M samples.
    CorpusSplit,
}

/// One attack instance with pinned parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum AttackSpec {
    /// Harness control: returns the watermarked image untouched.
    Identity,
    /// Harness control: replaces the image with seeded uniform noise.
    NoiseReplace,
    BaOptimal,
    Ddn { budget: u64 },
    Cgba { budget: u64, mask_fraction: f64 },
    WmForger { iterations: u64, step: f64 },
    Wis { beta_db: f64, patch_size: usize },
    Jpeg { quality: u8 },
    Gamma { gamma: f64 },
    Sharpen { amount: f64 },
    Purify { steps: usize },
}

impl AttackSpec {
    pub fn label(&self) -> String {
        match self {
            AttackSpec::Identity => "identity".into(),
            AttackSpec::NoiseReplace => "noise-replace".into(),
            AttackSpec::BaOptimal => "ba-optimal".into(),
            AttackSpec::Ddn { .. } => "ddn".into(),
            AttackSpec::Cgba { .. } => "cgba".into(),
            AttackSpec::WmForger { .. } => "wmforger".into(),
            AttackSpec::Wis { .. } => "wis".into(),
            AttackSpec::Jpeg { quality } => format!("jpeg-q{quality}"),
            AttackSpec::Gamma { gamma } => format!("gamma-{gamma}"),
            AttackSpec::Sharpen { amount } => format!("sharpen-{amount}"),
            AttackSpec::Purify { steps } => format!("purify-{steps}"),
        }
    }
}

/// Where the oracle and blind scenarios get their purifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PurifierChoice {
    /// Built-in bicubic down-up bottleneck.
    DownUp,
    /// External purifier spawned from `ZBWM_SIDECAR`.
    Sidecar,
}

/// Full description of one benchmark run.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub detector: DetectorSpec,
    pub attacks: Vec<AttackSpec>,
    pub alpha: f64,
    pub target_psnr: Decibels,
    pub corpus: CorpusSource,
    pub image_size: usize,
    pub seed: u64,
    pub whitener: WhitenerPolicy,
    pub purifier: PurifierChoice,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        if self.image_size % 8 != 0 {
            return Err(Error::Config("image size must be divisible by 8".into()));
        }
        if self.attacks.is_empty() {
            return Err(Error::Config("no attacks configured".into()));
        }
        if matches!(self.detector, DetectorSpec::External) {
            return Err(Error::Config(
                "bench scenarios need an embedder; external decoders support \
                 the calibrate and detect flows"
                    .into(),
            ));
        }
        for a in &self.attacks {
            if matches!(a, AttackSpec::BaOptimal)
                && !matches!(self.detector, DetectorSpec::BrokenArrows { .. })
            {
                return Err(Error::Config(
                    "ba-optimal requires the broken-arrows detector".into(),
                ));
            }
        }
        Ok(())
    }
}

/// One line of the results log.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RecordRow {
    pub attack: String,
    pub image_id: String,
    /// None encodes an infinite PSNR (identical images).
    pub psnr_vs_watermarked: Option<f64>,
    pub embed_psnr: f64,
    pub queries: u64,
    pub log10_pvalue: f64,
    pub success: bool,
    pub seed: u64,
}

/// Self-describing log header.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunHeader {
    pub config_digest: String,
    pub scenario: String,
    pub detector: String,
    pub alpha: f64,
    pub target_psnr: f64,
    pub image_size: usize,
    pub n_images: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub header: RunHeader,
    pub records: Vec<RecordRow>,
    /// Images whose pre-attack detection failed; excluded from every ASR
    /// denominator.
    pub embed_failures: Vec<String>,
}

fn detector_label(spec: &DetectorSpec) -> String {
    match spec {
        DetectorSpec::BrokenArrows { .. } => "broken-arrows".into(),
        DetectorSpec::Surrogate { m, tanh_gain } => match tanh_gain {
            Some(g) => format!("surrogate-m{m}-tanh{g}"),
            None => format!("surrogate-m{m}"),
        },
        DetectorSpec::External => "external".into(),
    }
}

/// Spawn the sidecar named by the `ZBWM_SIDECAR` environment variable.
pub fn spawn_env_sidecar() -> Result<crate::sidecar::Sidecar> {
    let command = std::env::var(crate::sidecar::SIDECAR_ENV).map_err(|_| {
        Error::Config(format!(
            "set {} to the sidecar launch command",
            crate::sidecar::SIDECAR_ENV
        ))
    })?;
    crate::sidecar::Sidecar::spawn(&command, crate::sidecar::DEFAULT_DEADLINE)
}

const WHITENER_SALT: u64 = 0x57_48_49_54; // "WHIT"
const KEY_SALT: u64 = 0x4b_45_59;
const ATTACK_SALT: u64 = 0x41_54_4b;
const NOISE_SALT: u64 = 0x4e_4f_49;

/// Fit the run-level whitener for a surrogate pipeline.
pub fn build_whitener(
    policy: WhitenerPolicy,
    dec: &SurrogateDecoder,
    corpus: &Corpus,
    image_size: usize,
    seed: u64,
) -> Result<Whitener> {
    let m = dec.output_dim();
    match policy {
        WhitenerPolicy::Identity => Ok(Whitener::identity(m)),
        WhitenerPolicy::Synthetic => {
            let count = 10 * m;
            let samples: Result<Vec<Vec<f64>>> = (0..count)
                .into_par_iter()
                .map(|i| {
                    let img = synthetic_image(
                        derive_seed(seed ^ WHITENER_SALT, i as u64),
                        image_size,
                    );
                    dec.decode(&img)
                })
                .collect();
            fit_whitener(&samples?)
        }
        WhitenerPolicy::CorpusSplit => {
            let n_fit = corpus.len() / 2;
            let samples: Result<Vec<Vec<f64>>> = (0..n_fit)
                .into_par_iter()
                .map(|i| dec.decode(&corpus.load(i, image_size)?))
                .collect();
            fit_whitener(&samples?)
        }
    }
}

enum RunDetector {
    Ba(BaDetector),
    Zb(ZbDetector),
}

impl RunDetector {
    fn as_dyn(&self) -> &dyn Detector {
        match self {
            RunDetector::Ba(d) => d,
            RunDetector::Zb(d) => d,
        }
    }
}

fn uniform_noise_image(seed: u64, like: &Image) -> Image {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
    let data = (0..like.num_samples()).map(|_| rng.gen::<f64>()).collect();
    crate::image::ImageBuf::new(like.height(), like.width(), like.channels(), data)
        .expect("same shape")
}

#[allow(clippy::too_many_arguments)]
fn run_attack(
    spec: &AttackSpec,
    scenario_seed: u64,
    img_orig: &Image,
    img_wm: &Image,
    det: &RunDetector,
    alpha: f64,
    image_size: usize,
    purifier: &dyn crate::attacks::Purifier,
) -> Result<AttackRecord> {
    let detector = det.as_dyn();
    match spec {
        AttackSpec::Identity => {
            AttackRecord::evaluate("identity", img_wm, img_wm.clone(), 0, detector, alpha)
        }
        AttackSpec::NoiseReplace => {
            let noise = uniform_noise_image(derive_seed(scenario_seed, NOISE_SALT), img_wm);
            AttackRecord::evaluate("noise-replace", img_wm, noise, 0, detector, alpha)
        }
        AttackSpec::BaOptimal => {
            let RunDetector::Ba(ba) = det else {
                return Err(Error::Config("ba-optimal needs a broken-arrows run".into()));
            };
            let margin = default_attack_margin(alpha, ba.key())?;
            ba_optimal_attack(img_wm, ba.key(), alpha, margin)
        }
        AttackSpec::Ddn { budget } => {
            let handle = DetectorHandle::new(detector, alpha);
            ddn_attack(&handle, img_wm, *budget, &DdnConfig::default())
        }
        AttackSpec::Cgba {
            budget,
            mask_fraction,
        } => {
            let mask = build_lowfreq_mask(image_size, image_size, *mask_fraction)?;
            let handle = DetectorHandle::new(detector, alpha);
            let cfg = CgbaConfig {
                seed: derive_seed(scenario_seed, ATTACK_SALT),
                ..CgbaConfig::default()
            };
            cgba_attack(&handle, img_wm, *budget, &mask, &cfg)
        }
        AttackSpec::WmForger { iterations, step } => {
            // with detector access denied, the oracle is the surrogate's own
            // statistic when attacking the surrogate, and an independent
            // surrogate (transfer control) otherwise
            match det {
                RunDetector::Zb(zb) => {
                    let oracle = DetectorStatisticOracle::new(zb);
                    oracle_gradient_attack(
                        &oracle,
                        img_wm,
                        *iterations,
                        *step,
                        OracleDirection::Descend,
                        detector,
                        alpha,
                    )
                }
                RunDetector::Ba(_) => {
                    let dec = SurrogateDecoder::new(
                        derive_seed(scenario_seed, ATTACK_SALT ^ 0xff),
                        256.min(image_size * image_size),
                        image_size,
                        image_size,
                        img_wm.channels(),
                        None,
                    )?;
                    let key = MessageKey::random(
                        derive_seed(scenario_seed, ATTACK_SALT ^ 0xfe),
                        dec.output_dim(),
                    )?;
                    let control =
                        ZbDetector::new(dec, Whitener::identity(256.min(image_size * image_size)), key)?;
                    let oracle = DetectorStatisticOracle::new(&control);
                    oracle_gradient_attack(
                        &oracle,
                        img_wm,
                        *iterations,
                        *step,
                        OracleDirection::Descend,
                        detector,
                        alpha,
                    )
                }
            }
        }
        AttackSpec::Wis {
            beta_db,
            patch_size,
        } => {
            let cfg = WisConfig {
                beta: Decibels(*beta_db),
                patch_size: *patch_size,
                seed: derive_seed(scenario_seed, ATTACK_SALT ^ 0x1),
                ..WisConfig::default()
            };
            wis_attack(img_wm, img_orig, purifier, &cfg, detector, alpha)
                .map(|(rec, _)| rec)
        }
        AttackSpec::Jpeg { quality } => valuemetric(
            img_wm,
            &ValuemetricOp::Jpeg { quality: *quality },
            None,
            detector,
            alpha,
        ),
        AttackSpec::Gamma { gamma } => valuemetric(
            img_wm,
            &ValuemetricOp::Gamma { gamma: *gamma },
            None,
            detector,
            alpha,
        ),
        AttackSpec::Sharpen { amount } => valuemetric(
            img_wm,
            &ValuemetricOp::Sharpen { amount: *amount },
            None,
            detector,
            alpha,
        ),
        AttackSpec::Purify { steps } => valuemetric(
            img_wm,
            &ValuemetricOp::Purify { steps: *steps },
            Some(purifier),
            detector,
            alpha,
        ),
    }
}

struct ImageOutcome {
    image_id: String,
    rows: Vec<RecordRow>,
    embed_failure: Option<String>,
}

/// Execute a full scenario: per image, draw a fresh key, embed, verify
/// pre-attack detection, run every configured attack, and emit one record
/// per attack. Pre-attack failures are excluded from ASR denominators.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let corpus = Corpus::open(cfg.corpus.clone(), cfg.seed)?;
    if corpus.is_empty() {
        return Err(Error::Corpus("corpus is empty".into()));
    }

    // run-level surrogate material: fixed decoder, fitted whitener
    let surrogate: Option<(SurrogateDecoder, Whitener)> = match &cfg.detector {
        DetectorSpec::Surrogate { m, tanh_gain } => {
            let dec = SurrogateDecoder::new(
                derive_seed(cfg.seed, 0xdec0de),
                *m,
                cfg.image_size,
                cfg.image_size,
                3,
                *tanh_gain,
            )?;
            let whitener = build_whitener(cfg.whitener, &dec, &corpus, cfg.image_size, cfg.seed)?;
            Some((dec, whitener))
        }
        _ => None,
    };
    let purifier: Box<dyn crate::attacks::Purifier> = match cfg.purifier {
        PurifierChoice::DownUp => Box::new(DownUpPurifier::default()),
        PurifierChoice::Sidecar => Box::new(crate::attacks::SidecarPurifier::new(
            spawn_env_sidecar()?,
            "sidecar",
        )),
    };
    let purifier = &*purifier;

    let n = corpus.len();
    let outcomes: Result<Vec<ImageOutcome>> = (0..n)
        .into_par_iter()
        .map(|i| -> Result<ImageOutcome> {
            let image_id = corpus.id(i);
            let image_seed = derive_seed(cfg.seed, i as u64 + 1);
            let img = corpus.load(i, cfg.image_size)?;

            // fresh key per image
            let (det, img_wm) = match &cfg.detector {
                DetectorSpec::BrokenArrows { params } => {
                    let key = ba_keygen(derive_seed(image_seed, KEY_SALT), *params)?;
                    let wm = ba_embed(&img, &key, cfg.target_psnr)?;
                    (RunDetector::Ba(BaDetector::new(key)), wm)
                }
                DetectorSpec::Surrogate { .. } => {
                    let (dec, whitener) = surrogate.as_ref().expect("surrogate material");
                    let key =
                        MessageKey::random(derive_seed(image_seed, KEY_SALT), dec.output_dim())?;
                    let wm = zb_embed(dec, &key, &img, cfg.target_psnr)?;
                    (
                        RunDetector::Zb(ZbDetector::new(dec.clone(), whitener.clone(), key)?),
                        wm,
                    )
                }
                DetectorSpec::External => unreachable!("rejected by validate"),
            };

            let embed_psnr = psnr(&img, &img_wm)?.value();
            let pre = det.as_dyn().detect(&img_wm)?;
            if pre.exceeds(cfg.alpha) {
                return Ok(ImageOutcome {
                    embed_failure: Some(format!(
                        "{image_id}: pre-attack log10 p = {:.3}",
                        pre.log10_value()
                    )),
                    image_id,
                    rows: Vec::new(),
                });
            }

            let mut rows = Vec::with_capacity(cfg.attacks.len());
            for (ai, attack) in cfg.attacks.iter().enumerate() {
                let attack_seed = derive_seed(image_seed, ATTACK_SALT + ai as u64);
                let rec = run_attack(
                    attack,
                    attack_seed,
                    &img,
                    &img_wm,
                    &det,
                    cfg.alpha,
                    cfg.image_size,
                    purifier,
                )?;
                rows.push(RecordRow {
                    attack: rec.attack_name.clone(),
                    image_id: image_id.clone(),
                    psnr_vs_watermarked: if rec.psnr_vs_watermarked.is_infinite() {
                        None
                    } else {
                        Some(rec.psnr_vs_watermarked.value())
                    },
                    embed_psnr,
                    queries: rec.queries_used,
                    log10_pvalue: rec.final_pvalue.log10_value(),
                    success: rec.success,
                    seed: attack_seed,
                });
            }
            Ok(ImageOutcome {
                image_id,
                rows,
                embed_failure: None,
            })
        })
        .collect();
    let outcomes = outcomes?;

    let mut records = Vec::new();
    let mut embed_failures = Vec::new();
    for o in outcomes {
        if let Some(f) = o.embed_failure {
            embed_failures.push(f);
        }
        records.extend(o.rows);
        let _ = o.image_id;
    }

    let header = RunHeader {
        config_digest: config::digest_config(cfg),
        scenario: cfg.scenario.as_str().into(),
        detector: detector_label(&cfg.detector),
        alpha: cfg.alpha,
        target_psnr: cfg.target_psnr.value(),
        image_size: cfg.image_size,
        n_images: n,
        seed: cfg.seed,
    };
    Ok(RunOutput {
        header,
        records,
        embed_failures,
    })
}

/// Attack success rate, recomputed from the stored p-values rather than
/// the stored success flags.
pub fn compute_asr(records: &[RecordRow], alpha: f64) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::Domain("no records".into()));
    }
    let hits = records
        .iter()
        .filter(|r| r.log10_pvalue > alpha.log10())
        .count();
    Ok(hits as f64 / records.len() as f64)
}

/// One PSNR bin of an ASR curve.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CurvePoint {
    pub attack: String,
    pub psnr_lo: f64,
    pub psnr_hi: f64,
    pub asr: f64,
    pub n: usize,
}

pub const DEFAULT_BIN_WIDTH: f64 = 2.0;
pub const DEFAULT_BIN_RANGE: (f64, f64) = (20.0, 60.0);

/// Per-attack ASR curves over PSNR bins; empty bins are omitted.
pub fn attack_curves(
    records: &[RecordRow],
    alpha: f64,
    bin_width: f64,
    range: (f64, f64),
) -> Vec<CurvePoint> {
    use std::collections::BTreeMap;
    let mut attacks: Vec<String> = records.iter().map(|r| r.attack.clone()).collect();
    attacks.sort();
    attacks.dedup();
    let n_bins = ((range.1 - range.0) / bin_width).ceil() as usize;
    let mut out = Vec::new();
    for attack in attacks {
        let mut bins: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
        for r in records.iter().filter(|r| r.attack == attack) {
            let Some(p) = r.psnr_vs_watermarked else {
                continue; // infinite PSNR sits beyond every bin
            };
            if p < range.0 || p >= range.1 {
                continue;
            }
            let b = ((p - range.0) / bin_width) as usize;
            if b >= n_bins {
                continue;
            }
            let e = bins.entry(b).or_insert((0, 0));
            e.0 += 1;
            if r.log10_pvalue > alpha.log10() {
                e.1 += 1;
            }
        }
        for (b, (n, hits)) in bins {
            out.push(CurvePoint {
                attack: attack.clone(),
                psnr_lo: range.0 + b as f64 * bin_width,
                psnr_hi: range.0 + (b + 1) as f64 * bin_width,
                asr: hits as f64 / n as f64,
                n,
            });
        }
    }
    out
}

/// Worst-case attack envelope: per bin, the maximum ASR over all attacks.
pub fn envelope(curves: &[CurvePoint]) -> Vec<CurvePoint> {
    use std::collections::BTreeMap;
    let mut best: BTreeMap<(u64, u64), CurvePoint> = BTreeMap::new();
    for c in curves {
        let key = (c.psnr_lo.to_bits(), c.psnr_hi.to_bits());
        match best.get(&key) {
            Some(prev) if prev.asr >= c.asr => {}
            _ => {
                best.insert(
                    key,
                    CurvePoint {
                        attack: "envelope".into(),
                        ..c.clone()
                    },
                );
            }
        }
    }
    best.into_values().collect()
}

/// Calibration report row for one test level.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationPoint {
    pub alpha: f64,
    pub n: usize,
    pub hits: usize,
    pub rate: f64,
    /// Three binomial standard deviations at this alpha and n.
    pub sigma3: f64,
    /// Too few expected events to measure the rate at all.
    pub below_resolution: bool,
}

/// Empirical false-alarm rates on unwatermarked images under fresh random
/// keys, one p-value per (image, key) trial.
pub fn calibrate(
    detector: &DetectorSpec,
    corpus: &CorpusSource,
    image_size: usize,
    alphas: &[f64],
    trials: usize,
    seed: u64,
) -> Result<Vec<CalibrationPoint>> {
    let corpus = Corpus::open(corpus.clone(), seed)?;
    let surrogate: Option<(SurrogateDecoder, Whitener)> = match detector {
        DetectorSpec::Surrogate { m, tanh_gain } => {
            let dec = SurrogateDecoder::new(
                derive_seed(seed, 0xdec0de),
                *m,
                image_size,
                image_size,
                3,
                *tanh_gain,
            )?;
            let whitener = build_whitener(
                WhitenerPolicy::Synthetic,
                &dec,
                &corpus,
                image_size,
                seed,
            )?;
            Some((dec, whitener))
        }
        _ => None,
    };
    let external: Option<(std::sync::Arc<crate::sidecar::ExternalDecoder>, Whitener)> =
        match detector {
            DetectorSpec::External => {
                use crate::adapter::DecodeVector;
                let dec = std::sync::Arc::new(crate::sidecar::ExternalDecoder::new(
                    spawn_env_sidecar()?,
                )?);
                let m = dec.output_dim();
                // whiten on synthetic decodes through the sidecar
                let samples: Result<Vec<Vec<f64>>> = (0..10 * m)
                    .map(|i| {
                        dec.decode(&synthetic_image(
                            derive_seed(seed ^ WHITENER_SALT, i as u64),
                            image_size,
                        ))
                    })
                    .collect();
                Some((dec, fit_whitener(&samples?)?))
            }
            _ => None,
        };

    let pvalues: Result<Vec<f64>> = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<f64> {
            let img = corpus.load(t % corpus.len(), image_size)?;
            let trial_seed = derive_seed(seed, 1000 + t as u64);
            let p = match detector {
                DetectorSpec::BrokenArrows { params } => {
                    let key = ba_keygen(trial_seed, *params)?;
                    crate::broken_arrows::ba_detect(&img, &key)?
                }
                DetectorSpec::Surrogate { .. } => {
                    let (dec, whitener) = surrogate.as_ref().expect("surrogate material");
                    let key = MessageKey::random(trial_seed, dec.output_dim())?;
                    crate::adapter::zb_detect(dec, whitener, &key, &img)?
                }
                DetectorSpec::External => {
                    use crate::adapter::DecodeVector;
                    let (dec, whitener) = external.as_ref().expect("external material");
                    let key = MessageKey::random(trial_seed, dec.output_dim())?;
                    crate::adapter::zb_detect(dec.as_ref(), whitener, &key, &img)?
                }
            };
            Ok(p.log10_value())
        })
        .collect();
    let pvalues = pvalues?;

    Ok(alphas
        .iter()
        .map(|&alpha| {
            let hits = pvalues.iter().filter(|&&lp| lp <= alpha.log10()).count();
            let n = pvalues.len();
            CalibrationPoint {
                alpha,
                n,
                hits,
                rate: hits as f64 / n as f64,
                sigma3: 3.0 * (alpha * (1.0 - alpha) / n as f64).sqrt(),
                below_resolution: alpha * (n as f64) < 5.0,
            }
        })
        .collect())
}

/// Default attack lists per scenario at the paper's operating points.
pub fn default_attacks(scenario: Scenario, detector: &DetectorSpec) -> Vec<AttackSpec> {
    match scenario {
        Scenario::WhiteBox => match detector {
            DetectorSpec::BrokenArrows { .. } => vec![AttackSpec::BaOptimal],
            _ => vec![AttackSpec::Ddn { budget: 250 }],
        },
        Scenario::BlackBox => vec![AttackSpec::Cgba {
            budget: 2000,
            mask_fraction: 0.0125,
        }],
        Scenario::Oracle => vec![
            AttackSpec::WmForger {
                iterations: 250,
                step: 1e-3,
            },
            AttackSpec::Wis {
                beta_db: 32.0,
                patch_size: 32,
            },
        ],
        Scenario::Blind => vec![
            AttackSpec::Jpeg { quality: 5 },
            AttackSpec::Jpeg { quality: 50 },
            AttackSpec::Jpeg { quality: 90 },
            AttackSpec::Gamma { gamma: 0.8 },
            AttackSpec::Gamma { gamma: 1.25 },
            AttackSpec::Sharpen { amount: 1.0 },
            AttackSpec::Purify { steps: 1 },
            AttackSpec::Purify { steps: 3 },
        ],
    }
}

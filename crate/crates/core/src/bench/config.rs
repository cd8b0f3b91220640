//! Plain-text run configuration: `key = value` lines with one optional
//! `[attack.<name>]` section per attack. Grid values (comma lists) expand
//! into one attack instance per value. Every key can be overridden from the
//! command line before the config is built.

use std::collections::BTreeMap;

use sha2::{Digest, Sha256};

use crate::bench::{
    default_attacks, AttackSpec, CorpusSource, DetectorSpec, PurifierChoice, Scenario,
    ScenarioConfig, WhitenerPolicy,
};
use crate::broken_arrows::BaParams;
use crate::error::{Error, Result};
use crate::image::Decibels;

/// Parsed, canonically ordered configuration text.
#[derive(Debug, Clone, Default)]
pub struct ConfigMap {
    /// Top-level keys.
    pub globals: BTreeMap<String, String>,
    /// `[attack.<name>]` sections, in declaration order.
    pub attacks: Vec<(String, BTreeMap<String, String>)>,
}

impl ConfigMap {
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = ConfigMap::default();
        let mut section: Option<usize> = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                let name = name.trim();
                let attack = name.strip_prefix("attack.").ok_or_else(|| {
                    Error::Config(format!("line {}: unknown section [{name}]", lineno + 1))
                })?;
                map.attacks.push((attack.to_string(), BTreeMap::new()));
                section = Some(map.attacks.len() - 1);
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key = value", lineno + 1))
            })?;
            let (key, value) = (key.trim().to_string(), value.trim().to_string());
            match section {
                Some(i) => {
                    map.attacks[i].1.insert(key, value);
                }
                None => {
                    map.globals.insert(key, value);
                }
            }
        }
        Ok(map)
    }

    /// Apply one `key=value` override; `attack.<name>.<key>=value` targets a
    /// section (creating it if absent).
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
        let (key, value) = (key.trim(), value.trim().to_string());
        if let Some(rest) = key.strip_prefix("attack.") {
            let (name, field) = rest.split_once('.').ok_or_else(|| {
                Error::Config(format!("override `{key}` must be attack.<name>.<field>"))
            })?;
            if let Some((_, sec)) = self.attacks.iter_mut().find(|(n, _)| n == name) {
                sec.insert(field.to_string(), value);
            } else {
                let mut sec = BTreeMap::new();
                sec.insert(field.to_string(), value);
                self.attacks.push((name.to_string(), sec));
            }
        } else {
            self.globals.insert(key.to_string(), value);
        }
        Ok(())
    }

    /// Canonical serialization used for the config digest.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.globals {
            out.push_str(&format!("{k} = {v}\n"));
        }
        for (name, sec) in &self.attacks {
            out.push_str(&format!("[attack.{name}]\n"));
            for (k, v) in sec {
                out.push_str(&format!("{k} = {v}\n"));
            }
        }
        out
    }
}

fn get_f64(sec: &BTreeMap<String, String>, key: &str, default: f64) -> Result<f64> {
    match sec.get(key) {
        Some(v) => v
            .parse()
            .map_err(|_| Error::Config(format!("{key} = {v} is not a number"))),
        None => Ok(default),
    }
}

fn get_u64(sec: &BTreeMap<String, String>, key: &str, default: u64) -> Result<u64> {
    match sec.get(key) {
        Some(v) => v
            .parse()
            .map_err(|_| Error::Config(format!("{key} = {v} is not an integer"))),
        None => Ok(default),
    }
}

fn grid_values(sec: &BTreeMap<String, String>, key: &str) -> Option<Vec<String>> {
    sec.get(key)
        .map(|v| v.split(',').map(|s| s.trim().to_string()).collect())
}

fn build_attacks(map: &ConfigMap) -> Result<Vec<AttackSpec>> {
    let mut out = Vec::new();
    for (name, sec) in &map.attacks {
        match name.as_str() {
            "identity" => out.push(AttackSpec::Identity),
            "noise-replace" => out.push(AttackSpec::NoiseReplace),
            "ba-optimal" => out.push(AttackSpec::BaOptimal),
            "ddn" => out.push(AttackSpec::Ddn {
                budget: get_u64(sec, "budget", 250)?,
            }),
            "cgba" => out.push(AttackSpec::Cgba {
                budget: get_u64(sec, "budget", 2000)?,
                mask_fraction: get_f64(sec, "mask_fraction", 0.0125)?,
            }),
            "wmforger" => out.push(AttackSpec::WmForger {
                iterations: get_u64(sec, "iterations", 250)?,
                step: get_f64(sec, "step", 1e-3)?,
            }),
            "wis" => out.push(AttackSpec::Wis {
                beta_db: get_f64(sec, "beta", 32.0)?,
                patch_size: get_u64(sec, "patch", 32)? as usize,
            }),
            "jpeg" => {
                for q in grid_values(sec, "quality").unwrap_or_else(|| vec!["5".into()]) {
                    let quality: u8 = q
                        .parse()
                        .map_err(|_| Error::Config(format!("jpeg quality `{q}`")))?;
                    out.push(AttackSpec::Jpeg { quality });
                }
            }
            "gamma" => {
                for g in grid_values(sec, "gamma").unwrap_or_else(|| vec!["0.8".into()]) {
                    let gamma: f64 = g
                        .parse()
                        .map_err(|_| Error::Config(format!("gamma `{g}`")))?;
                    out.push(AttackSpec::Gamma { gamma });
                }
            }
            "sharpen" => {
                for a in grid_values(sec, "amount").unwrap_or_else(|| vec!["1.0".into()]) {
                    let amount: f64 = a
                        .parse()
                        .map_err(|_| Error::Config(format!("sharpen amount `{a}`")))?;
                    out.push(AttackSpec::Sharpen { amount });
                }
            }
            "purify" => {
                for s in grid_values(sec, "steps").unwrap_or_else(|| vec!["1".into()]) {
                    let steps: usize = s
                        .parse()
                        .map_err(|_| Error::Config(format!("purify steps `{s}`")))?;
                    out.push(AttackSpec::Purify { steps });
                }
            }
            other => {
                return Err(Error::Config(format!("unknown attack `{other}`")));
            }
        }
    }
    Ok(out)
}

/// Build a [`ScenarioConfig`] from parsed text. Missing attack sections
/// fall back to the scenario's default attack list.
pub fn parse_config(map: &ConfigMap) -> Result<ScenarioConfig> {
    let g = &map.globals;
    let scenario = match g.get("scenario").map(String::as_str) {
        Some("white-box") | None => Scenario::WhiteBox,
        Some("black-box") => Scenario::BlackBox,
        Some("oracle") => Scenario::Oracle,
        Some("blind") => Scenario::Blind,
        Some(other) => return Err(Error::Config(format!("unknown scenario `{other}`"))),
    };

    let image_size = get_u64(g, "image_size", 1024)? as usize;
    let detector = match g.get("detector").map(String::as_str) {
        Some("broken-arrows") | None => {
            let default = if image_size >= 1024 {
                BaParams::full_scale()
            } else {
                BaParams::small_scale()
            };
            DetectorSpec::BrokenArrows {
                params: BaParams {
                    subspace_dim: get_u64(g, "ba_m", default.subspace_dim as u64)? as usize,
                    coeff_count: get_u64(g, "ba_nf", default.coeff_count as u64)? as usize,
                    cone_count: get_u64(g, "ba_nc", default.cone_count as u64)? as usize,
                },
            }
        }
        Some("surrogate") => DetectorSpec::Surrogate {
            m: get_u64(g, "surrogate_m", 256)? as usize,
            tanh_gain: match g.get("surrogate_tanh") {
                Some(v) => Some(v.parse().map_err(|_| {
                    Error::Config(format!("surrogate_tanh = {v} is not a number"))
                })?),
                None => None,
            },
        },
        Some("external") => DetectorSpec::External,
        Some(other) => return Err(Error::Config(format!("unknown detector `{other}`"))),
    };

    let corpus = match g.get("corpus").map(String::as_str) {
        Some(v) if v.starts_with("synthetic:") => {
            let count = v["synthetic:".len()..]
                .parse()
                .map_err(|_| Error::Config(format!("corpus = {v}")))?;
            CorpusSource::Synthetic { count }
        }
        Some(v) => CorpusSource::Directory(v.into()),
        None => CorpusSource::Synthetic { count: 20 },
    };

    let whitener = match g.get("whitener").map(String::as_str) {
        Some("identity") => WhitenerPolicy::Identity,
        Some("corpus") => WhitenerPolicy::CorpusSplit,
        Some("synthetic") | None => WhitenerPolicy::Synthetic,
        Some(other) => return Err(Error::Config(format!("unknown whitener `{other}`"))),
    };

    let purifier = match g.get("purifier").map(String::as_str) {
        Some("downup") | None => PurifierChoice::DownUp,
        Some("sidecar") => PurifierChoice::Sidecar,
        Some(other) => return Err(Error::Config(format!("unknown purifier `{other}`"))),
    };

    let mut attacks = build_attacks(map)?;
    if attacks.is_empty() {
        attacks = default_attacks(scenario, &detector);
    }

    let cfg = ScenarioConfig {
        scenario,
        detector,
        attacks,
        alpha: get_f64(g, "alpha", 1e-6)?,
        target_psnr: Decibels(get_f64(g, "target_psnr", 42.0)?),
        corpus,
        image_size,
        seed: get_u64(g, "seed", 0)?,
        whitener,
        purifier,
    };
    cfg.validate()?;
    Ok(cfg)
}

/// SHA-256 digest of the canonical form of a scenario configuration; the
/// results-log header embeds it so a log identifies its run.
pub fn digest_config(cfg: &ScenarioConfig) -> String {
    let mut canon = String::new();
    canon.push_str(&format!("scenario = {}\n", cfg.scenario.as_str()));
    match &cfg.detector {
        DetectorSpec::BrokenArrows { params } => {
            canon.push_str(&format!(
                "detector = broken-arrows m={} nf={} nc={}\n",
                params.subspace_dim, params.coeff_count, params.cone_count
            ));
        }
        DetectorSpec::Surrogate { m, tanh_gain } => {
            canon.push_str(&format!("detector = surrogate m={m} tanh={tanh_gain:?}\n"));
        }
        DetectorSpec::External => canon.push_str("detector = external\n"),
    }
    canon.push_str(&format!("alpha = {:e}\n", cfg.alpha));
    canon.push_str(&format!("target_psnr = {}\n", cfg.target_psnr.value()));
    canon.push_str(&format!("image_size = {}\n", cfg.image_size));
    canon.push_str(&format!("seed = {}\n", cfg.seed));
    canon.push_str(&format!("whitener = {:?}\n", cfg.whitener));
    canon.push_str(&format!("corpus = {:?}\n", cfg.corpus));
    for a in &cfg.attacks {
        canon.push_str(&format!("attack = {a:?}\n"));
    }
    let mut hasher = Sha256::new();
    hasher.update(canon.as_bytes());
    hex_string(&hasher.finalize())
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "
# benchmark run
scenario = blind
detector = broken-arrows
alpha = 1e-6
target_psnr = 42
image_size = 256
seed = 9
corpus = synthetic:6

[attack.jpeg]
quality = 5, 50, 90

[attack.gamma]
gamma = 0.8
";

    #[test]
    fn parses_sections_and_grids() {
        let map = ConfigMap::parse(SAMPLE).unwrap();
        let cfg = parse_config(&map).unwrap();
        assert_eq!(cfg.scenario, Scenario::Blind);
        assert_eq!(cfg.image_size, 256);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.attacks.len(), 4); // three jpeg qualities + one gamma
        assert!(matches!(cfg.attacks[0], AttackSpec::Jpeg { quality: 5 }));
        assert!(matches!(cfg.attacks[2], AttackSpec::Jpeg { quality: 90 }));
        // small image size picks the desk-scale coefficient count
        if let DetectorSpec::BrokenArrows { params } = cfg.detector {
            assert_eq!(params.coeff_count, 3781);
        } else {
            panic!("expected broken-arrows");
        }
    }

    #[test]
    fn overrides_beat_file_values() {
        let mut map = ConfigMap::parse(SAMPLE).unwrap();
        map.apply_override("seed=77").unwrap();
        map.apply_override("attack.jpeg.quality=25").unwrap();
        let cfg = parse_config(&map).unwrap();
        assert_eq!(cfg.seed, 77);
        assert!(matches!(cfg.attacks[0], AttackSpec::Jpeg { quality: 25 }));
        assert_eq!(cfg.attacks.len(), 2);
    }

    #[test]
    fn defaults_fill_missing_attacks() {
        let map = ConfigMap::parse("scenario = black-box\nimage_size = 256\n").unwrap();
        let cfg = parse_config(&map).unwrap();
        assert!(
            matches!(cfg.attacks[0], AttackSpec::Cgba { budget: 2000, .. }),
            "black-box defaults to cgba"
        );
    }

    #[test]
    fn digest_tracks_config_changes() {
        let map = ConfigMap::parse(SAMPLE).unwrap();
        let a = digest_config(&parse_config(&map).unwrap());
        let mut map2 = ConfigMap::parse(SAMPLE).unwrap();
        map2.apply_override("seed=10").unwrap();
        let b = digest_config(&parse_config(&map2).unwrap());
        assert_ne!(a, b);
        assert_eq!(a.len(), 64);
        // stable across identical parses
        let c = digest_config(&parse_config(&ConfigMap::parse(SAMPLE).unwrap()).unwrap());
        assert_eq!(a, c);
    }

    #[test]
    fn bad_lines_rejected() {
        assert!(ConfigMap::parse("[weird]").is_err());
        assert!(ConfigMap::parse("novalue").is_err());
        let map = ConfigMap::parse("scenario = warp\n").unwrap();
        assert!(parse_config(&map).is_err());
    }
}

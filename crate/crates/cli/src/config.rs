//! Experiment configuration: a preset, a sectioned TOML file, or both.
//!
//! ```toml
//! preset = "lab-150km"
//! rounds = 10000000
//! seed = 7
//! engine = "mc"
//!
//! [protocol]
//! mu1 = 0.3
//! mu2 = 0.15
//!
//! [detector_z]
//! dcr_cps = 50.0
//! ```
//!
//! Every section is optional; fields left out keep the preset value, or the
//! ideal-device value without a preset.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use sha2::{Digest, Sha256};
use tbqkd_core::cascade::CascadeConfig;
use tbqkd_core::experiment::DEFAULT_F_EC;
use tbqkd_core::physics::{ChannelModel, DetectorModel, PhysicsModels};
use tbqkd_core::presets;
use tbqkd_core::protocol::{validate_params, ProtocolParams};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    /// Closed-form expected counts.
    #[default]
    Analytic,
    /// Monte Carlo simulation with reconciliation and amplification.
    Mc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Jsonl,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Preset name, or `custom` for configurations built from scratch.
    pub name: String,
    pub params: ProtocolParams<f64>,
    pub models: PhysicsModels<f64>,
    pub n_rounds: u64,
    pub seed: u64,
    pub engine: Engine,
    pub format: Format,
    pub out: Option<PathBuf>,
    pub cascade: CascadeConfig,
    /// Cascade efficiency assumed by the analytic engine.
    pub f_ec: f64,
    pub q_prior: f64,
}

impl ExperimentConfig {
    /// Preset at its laboratory block size.
    pub fn from_preset(name: &str) -> Result<Self> {
        let p = presets::by_name(name).ok_or_else(|| unknown_preset(name))?;
        Ok(Self {
            name: p.name.to_string(),
            params: p.params,
            models: p.models,
            n_rounds: p.block_rounds(),
            seed: 0,
            engine: Engine::Analytic,
            format: Format::Csv,
            out: None,
            cascade: CascadeConfig::default(),
            f_ec: DEFAULT_F_EC,
            q_prior: 0.03,
        })
    }

    pub fn validate(self) -> Result<Self> {
        let invalid = |e: tbqkd_core::Error| CliError::Validation(e.to_string());
        validate_params(self.params).map_err(invalid)?;
        self.models.validate().map_err(invalid)?;
        self.cascade.validate().map_err(invalid)?;
        if self.n_rounds == 0 {
            return Err(CliError::Validation("rounds must be at least 1".into()));
        }
        if !self.f_ec.is_finite() || self.f_ec < 1.0 {
            return Err(CliError::Validation(format!("f_ec must be at least 1 ({})", self.f_ec)));
        }
        if !(self.q_prior > 0.0 && self.q_prior <= 0.25) {
            return Err(CliError::Validation(format!("q_prior must lie in (0, 0.25] ({})", self.q_prior)));
        }
        Ok(self)
    }

    /// Hash of everything that determines a report row except the seed and
    /// output options; 16 hex digits.
    pub fn config_hash(&self) -> String {
        let canon = format!(
            "{}|{:?}|{:?}|{}|{:?}|{:?}|{}|{}",
            self.name, self.params, self.models, self.n_rounds, self.engine, self.cascade, self.f_ec, self.q_prior
        );
        let digest = Sha256::digest(canon.as_bytes());
        digest[..8].iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }
}

fn unknown_preset(name: &str) -> CliError {
    CliError::Validation(format!("unknown preset {name:?}; known presets: {}", presets::names().join(", ")))
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    preset: Option<String>,
    name: Option<String>,
    rounds: Option<u64>,
    seed: Option<u64>,
    engine: Option<Engine>,
    format: Option<Format>,
    out: Option<PathBuf>,
    protocol: Option<ProtocolSection>,
    channel: Option<ChannelSection>,
    source: Option<SourceSection>,
    interferometer: Option<InterferometerSection>,
    detector_z: Option<DetectorSection>,
    detector_x: Option<DetectorSection>,
    cascade: Option<CascadeSection>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProtocolSection {
    p_z_alice: Option<f64>,
    p_z_bob: Option<f64>,
    mu1: Option<f64>,
    mu2: Option<f64>,
    p_mu1: Option<f64>,
    clock_rate: Option<f64>,
    eps_sec: Option<f64>,
    eps_cor: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChannelSection {
    length_km: Option<f64>,
    atten_db_per_km: Option<f64>,
    /// Total loss; sets the attenuation from the length.
    loss_db: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SourceSection {
    extinction_error: Option<f64>,
    intensity_jitter_rel: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct InterferometerSection {
    visibility: Option<f64>,
    delay_ps: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct DetectorSection {
    efficiency: Option<f64>,
    dcr_cps: Option<f64>,
    dead_time_s: Option<f64>,
    afterpulse_prob: Option<f64>,
    afterpulse_delay_s: Option<f64>,
    jitter_sigma_ps: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct CascadeSection {
    block_size_bits: Option<usize>,
    passes: Option<usize>,
    f_ec: Option<f64>,
    q_prior: Option<f64>,
}

fn set<T>(dst: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *dst = v;
    }
}

fn apply_detector(d: &mut DetectorModel<f64>, s: Option<DetectorSection>) {
    let Some(s) = s else { return };
    set(&mut d.efficiency, s.efficiency);
    set(&mut d.dcr_cps, s.dcr_cps);
    set(&mut d.dead_time_s, s.dead_time_s);
    set(&mut d.afterpulse_prob, s.afterpulse_prob);
    set(&mut d.afterpulse_delay_s, s.afterpulse_delay_s);
    set(&mut d.jitter_sigma_ps, s.jitter_sigma_ps);
}

/// Parses and validates a configuration held in memory.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    if text.trim().is_empty() {
        return Err(CliError::Parse { line: 1, message: "empty configuration".into() });
    }
    let file: FileConfig = toml::from_str(text).map_err(|e| {
        let line = e.span().map_or(1, |s| text[..s.start.min(text.len())].matches('\n').count() + 1);
        CliError::Parse { line, message: e.message().to_string() }
    })?;

    let mut cfg = match &file.preset {
        Some(name) => ExperimentConfig::from_preset(name)?,
        None => {
            let mu = file.protocol.as_ref().and_then(|p| p.mu1.zip(p.mu2));
            let Some((mu1, mu2)) = mu else {
                return Err(CliError::Validation("without a preset, [protocol] must set mu1 and mu2".into()));
            };
            ExperimentConfig {
                name: "custom".into(),
                params: ProtocolParams::with_intensities(mu1, mu2),
                models: PhysicsModels::ideal(),
                n_rounds: 0,
                seed: 0,
                engine: Engine::Analytic,
                format: Format::Csv,
                out: None,
                cascade: CascadeConfig::default(),
                f_ec: DEFAULT_F_EC,
                q_prior: 0.03,
            }
        }
    };
    set(&mut cfg.name, file.name);
    set(&mut cfg.n_rounds, file.rounds);
    set(&mut cfg.seed, file.seed);
    set(&mut cfg.engine, file.engine);
    set(&mut cfg.format, file.format);
    cfg.out = file.out.or(cfg.out);
    if let Some(p) = file.protocol {
        let q = &mut cfg.params;
        set(&mut q.p_z_alice, p.p_z_alice);
        set(&mut q.p_z_bob, p.p_z_bob);
        set(&mut q.mu1, p.mu1);
        set(&mut q.mu2, p.mu2);
        set(&mut q.p_mu1, p.p_mu1);
        set(&mut q.clock_rate, p.clock_rate);
        set(&mut q.eps_sec, p.eps_sec);
        set(&mut q.eps_cor, p.eps_cor);
    }
    if let Some(c) = file.channel {
        let ch = &mut cfg.models.channel;
        set(&mut ch.length_km, c.length_km);
        set(&mut ch.atten_db_per_km, c.atten_db_per_km);
        if let Some(loss) = c.loss_db {
            if c.atten_db_per_km.is_some() {
                return Err(CliError::Validation("[channel] sets both loss_db and atten_db_per_km".into()));
            }
            *ch = ChannelModel::with_total_loss(ch.length_km, loss);
        }
    }
    if let Some(s) = file.source {
        set(&mut cfg.models.source.extinction_error, s.extinction_error);
        set(&mut cfg.models.source.intensity_jitter_rel, s.intensity_jitter_rel);
    }
    if let Some(i) = file.interferometer {
        set(&mut cfg.models.interferometer.visibility, i.visibility);
        set(&mut cfg.models.interferometer.delay_ps, i.delay_ps);
    }
    apply_detector(&mut cfg.models.detector_z, file.detector_z);
    apply_detector(&mut cfg.models.detector_x, file.detector_x);
    if let Some(c) = file.cascade {
        set(&mut cfg.cascade.block_size_bits, c.block_size_bits);
        set(&mut cfg.cascade.passes, c.passes);
        set(&mut cfg.f_ec, c.f_ec);
        set(&mut cfg.q_prior, c.q_prior);
    }
    if cfg.n_rounds == 0 {
        return Err(CliError::Validation("rounds must be at least 1".into()));
    }
    cfg.validate()
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io { path: path.to_path_buf(), source: e })?;
    parse_config(&text).map_err(|e| match e {
        CliError::Parse { line, message } => CliError::Parse { line, message: format!("{}: {message}", path.display()) },
        e => e,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_file_carries_lab_settings() {
        let c = parse_config("preset = \"lab-200km\"\n").unwrap();
        assert_eq!((c.params.mu1, c.params.mu2), (0.39, 0.18));
        assert_eq!(c.models.detector_z.dead_time_s, 27.0e-6);
        assert_eq!(c.n_rounds, 2_520_000_000_000);
    }

    #[test]
    fn overrides_apply_on_top_of_the_preset() {
        let c = parse_config("preset = \"lab-100km\"\nrounds = 5\nseed = 9\nengine = \"mc\"\n[detector_x]\ndcr_cps = 99.0\n")
            .unwrap();
        assert_eq!((c.n_rounds, c.seed, c.engine), (5, 9, Engine::Mc));
        assert_eq!(c.models.detector_x.dcr_cps, 99.0);
        assert_eq!(c.models.detector_z.dcr_cps, 20.0);
    }

    #[test]
    fn equal_intensities_fail_validation() {
        let e = parse_config("rounds = 10\n[protocol]\nmu1 = 0.3\nmu2 = 0.3\n").unwrap_err();
        assert!(matches!(e, CliError::Validation(_)), "{e}");
    }

    #[test]
    fn empty_and_malformed_files_are_parse_errors() {
        assert!(matches!(parse_config(""), Err(CliError::Parse { line: 1, .. })));
        match parse_config("preset = \"lab-100km\"\n\n[detector_z]\nbogus = 1\n") {
            Err(CliError::Parse { line, message }) => {
                assert_eq!(line, 4);
                assert!(message.contains("bogus"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_config("rounds = = 3"), Err(CliError::Parse { line: 1, .. })));
    }

    #[test]
    fn unknown_preset_and_missing_intensities_are_rejected() {
        assert!(matches!(parse_config("preset = \"mars\"\n"), Err(CliError::Validation(_))));
        assert!(matches!(parse_config("rounds = 10\n"), Err(CliError::Validation(_))));
    }

    #[test]
    fn hash_ignores_seed_but_not_physics() {
        let a = ExperimentConfig::from_preset("lab-150km").unwrap();
        let mut b = a.clone();
        b.seed = 99;
        assert_eq!(a.config_hash(), b.config_hash());
        b.models.detector_z.dcr_cps += 1.0;
        assert_ne!(a.config_hash(), b.config_hash());
        assert_eq!(a.config_hash().len(), 16);
    }
}

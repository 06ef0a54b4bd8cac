//! Laboratory operating points at 100, 150 and 200 km.
//!
//! Fiber length, loss, detector temperature, Z dead time, intensities and
//! block duration are the recorded laboratory settings. Efficiency, dark
//! counts, afterpulsing, jitter, extinction and visibility were not measured
//! per point; the values below are effective parameters chosen so that the
//! closed-form engine reproduces the recorded error budget (about 1.5% from
//! jitter, 1% from intensity modulation and 0.5% from detector noise in Z).

use crate::physics::{ChannelModel, DetectorModel, InterferometerModel, PhysicsModels, SourceImperfection};
use crate::protocol::ProtocolParams;

/// Figures recorded in the laboratory at one operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reference {
    pub q_z: f64,
    pub phi_z: f64,
    pub rkr_bps: f64,
    pub skr_bps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    /// Detector temperature in kelvin; informational only.
    pub temperature_k: f64,
    pub block_time_s: f64,
    pub params: ProtocolParams<f64>,
    pub models: PhysicsModels<f64>,
    pub reference: Reference,
}

impl Preset {
    /// Rounds in one privacy-amplification block.
    pub fn block_rounds(&self) -> u64 {
        (self.block_time_s * self.params.clock_rate).round() as u64
    }
}

pub const X_DEAD_TIME_S: f64 = 75.8e-6;

struct Row {
    name: &'static str,
    length_km: f64,
    loss_db: f64,
    temperature_k: f64,
    dead_time_z_s: f64,
    mu: (f64, f64),
    block_time_s: f64,
    dcr_cps: f64,
    afterpulse_z: f64,
    reference: Reference,
}

const EFFICIENCY: f64 = 0.28;
const JITTER_PS: f64 = 60.0;
const EXTINCTION: f64 = 0.011;
const INTENSITY_JITTER: f64 = 0.02;
const VISIBILITY: f64 = 0.997;
const AFTERPULSE_DELAY_S: f64 = 10e-6;
const AFTERPULSE_X: f64 = 0.005;

const ROWS: [Row; 3] = [
    Row {
        name: "lab-100km",
        length_km: 101.6,
        loss_db: 20.2,
        temperature_k: 203.0,
        dead_time_z_s: 15.7e-6,
        mu: (0.06, 0.03),
        block_time_s: 232.0,
        dcr_cps: 20.0,
        afterpulse_z: 0.2,
        reference: Reference { q_z: 0.0367, phi_z: 0.0203, rkr_bps: 3.53e4, skr_bps: 1.42e4 },
    },
    Row {
        name: "lab-150km",
        length_km: 151.6,
        loss_db: 30.2,
        temperature_k: 183.0,
        dead_time_z_s: 19.3e-6,
        mu: (0.25, 0.11),
        block_time_s: 360.0,
        dcr_cps: 20.0,
        afterpulse_z: 0.1,
        reference: Reference { q_z: 0.0321, phi_z: 0.0212, rkr_bps: 2.28e4, skr_bps: 7.21e3 },
    },
    Row {
        name: "lab-200km",
        length_km: 202.1,
        loss_db: 40.2,
        temperature_k: 183.0,
        dead_time_z_s: 27.0e-6,
        mu: (0.39, 0.18),
        block_time_s: 1008.0,
        dcr_cps: 20.0,
        afterpulse_z: 0.2,
        reference: Reference { q_z: 0.0308, phi_z: 0.0359, rkr_bps: 8.13e3, skr_bps: 1.59e3 },
    },
];

fn build(r: &Row) -> Preset {
    let detector = |dead_time_s: f64, afterpulse_prob: f64| DetectorModel {
        efficiency: EFFICIENCY,
        dcr_cps: r.dcr_cps,
        dead_time_s,
        afterpulse_prob,
        afterpulse_delay_s: AFTERPULSE_DELAY_S,
        jitter_sigma_ps: JITTER_PS,
    };
    Preset {
        name: r.name,
        temperature_k: r.temperature_k,
        block_time_s: r.block_time_s,
        params: ProtocolParams::with_intensities(r.mu.0, r.mu.1),
        models: PhysicsModels {
            channel: ChannelModel::with_total_loss(r.length_km, r.loss_db),
            source: SourceImperfection { extinction_error: EXTINCTION, intensity_jitter_rel: INTENSITY_JITTER },
            interferometer: InterferometerModel::new(VISIBILITY),
            detector_z: detector(r.dead_time_z_s, r.afterpulse_z),
            detector_x: detector(X_DEAD_TIME_S, AFTERPULSE_X),
        },
        reference: r.reference,
    }
}

pub fn all() -> Vec<Preset> {
    ROWS.iter().map(build).collect()
}

pub fn names() -> Vec<&'static str> {
    ROWS.iter().map(|r| r.name).collect()
}

pub fn by_name(name: &str) -> Option<Preset> {
    ROWS.iter().find(|r| r.name == name).map(build)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::transmittance;

    #[test]
    fn presets_validate_and_carry_lab_settings() {
        for p in all() {
            p.params.validate().unwrap();
            p.models.validate().unwrap();
            assert_eq!(p.models.detector_x.dead_time_s, X_DEAD_TIME_S);
        }
        let p = by_name("lab-200km").unwrap();
        assert_eq!((p.params.mu1, p.params.mu2), (0.39, 0.18));
        assert_eq!(p.models.detector_z.dead_time_s, 27.0e-6);
        assert!((transmittance(&p.models.channel) / 9.55e-5 - 1.0).abs() < 0.01);
        assert_eq!(p.block_rounds(), 2_520_000_000_000);
        assert!(by_name("nowhere").is_none());
    }
}

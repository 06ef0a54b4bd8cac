//! Quick end-to-end checks of an installed binary.

use std::thread;

use rand::Rng;
use tbqkd_core::bits::Bits;
use tbqkd_core::cascade::{reconcile_local, CascadeConfig};
use tbqkd_core::physics::{ChannelModel, PhysicsModels};
use tbqkd_core::presets;
use tbqkd_core::protocol::ProtocolParams;
use tbqkd_core::rng::{stream_rng, Domain};
use tbqkd_core::security::{key_length, DecoyBounds};
use tbqkd_core::sifting::estimate_n_x;
use tbqkd_net::{loopback_pair, run_session, Frame, MsgType, Role, SessionConfig};

use crate::config::ExperimentConfig;
use crate::experiment::run_experiment;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, f: impl FnOnce() -> Result<String, String>) -> Check {
    match f() {
        Ok(detail) => Check { name, passed: true, detail },
        Err(detail) => Check { name, passed: false, detail },
    }
}

fn expect(ok: bool, detail: String) -> Result<String, String> {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

pub fn run() -> Vec<Check> {
    vec![
        check("frame codec", || {
            let f = Frame::new(MsgType::Hello, vec![]);
            let wire = f.encode().map_err(|e| e.to_string())?;
            let (back, used) = Frame::decode(&wire).map_err(|e| e.to_string())?;
            expect(wire.len() == 5 && used == 5 && back == f, format!("{} bytes", wire.len()))
        }),
        check("key length", || {
            let db = DecoyBounds {
                s_z0_low: 1000.0,
                s_z0_high: 1000.0,
                s_z1_low: 9000.0,
                s_x0_high: 0.0,
                s_x1_low: 0.0,
                v_x1_high: 0.0,
                phi_z_high: 0.0,
                phi_conservative: false,
                tau0: 0.0,
                tau1: 0.0,
            };
            let l = key_length(&db, 0.0, &ProtocolParams::with_intensities(0.4, 0.2));
            expect(l == 9764, format!("l = {l}"))
        }),
        check("conclusive extrapolation", || {
            let n = estimate_n_x(225.0, 0.9).map_err(|e| e.to_string())?;
            expect(n == 1000.0, format!("n_x = {n}"))
        }),
        check("cascade", || {
            let mut rng = stream_rng(1, Domain::Aux, 0);
            let alice: Bits = (0..8192).map(|_| rng.random::<bool>()).collect();
            let mut bob = alice.clone();
            for i in 0..bob.len() {
                if rng.random::<f64>() < 0.03 {
                    let b = bob[i];
                    bob.set(i, !b);
                }
            }
            let (r, _) = reconcile_local(&alice, &bob, 0.03, &CascadeConfig::default(), 7).map_err(|e| e.to_string())?;
            expect(r.verified && r.corrected_key == alice, format!("lambda {}", r.lambda_ec_bits))
        }),
        check("presets", || {
            let mut skr = Vec::new();
            for name in presets::names() {
                let r = run_experiment(&ExperimentConfig::from_preset(name).map_err(|e| e.to_string())?)
                    .map_err(|e| e.to_string())?;
                skr.push(r.skr_bps);
            }
            expect(skr.iter().all(|&s| s > 0.0), format!("SKR {skr:?}"))
        }),
        check("loopback session", || {
            let mut models = PhysicsModels::ideal();
            models.channel = ChannelModel::new(0.0);
            let cfg = SessionConfig::new(ProtocolParams::with_intensities(0.4, 0.2), models, 200_000, 3);
            let (mut a, mut b, _wire) = loopback_pair();
            let bob_cfg = cfg.clone();
            let bob = thread::spawn(move || run_session(Role::Bob, &bob_cfg, &mut b));
            let alice = run_session(Role::Alice, &cfg, &mut a).map_err(|e| e.to_string())?;
            let bob = bob.join().map_err(|_| "Bob panicked".to_string())?.map_err(|e| e.to_string())?;
            expect(
                alice.secret_key == bob.secret_key && alice.blocks > 0,
                format!("{} blocks, {} key bits", alice.blocks, alice.key_bits),
            )
        }),
    ]
}

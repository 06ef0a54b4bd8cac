//! Alice and Bob as separate processes over TCP.

use std::net::{SocketAddr, TcpStream};
use std::path::PathBuf;

use tbqkd_net::{run_session, tcp_accept, tcp_connect, Role, SessionConfig, SessionRecord};

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::report::ReportRow;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endpoint {
    Listen(SocketAddr),
    Connect(SocketAddr),
}

pub fn session_config(cfg: &ExperimentConfig, key_path: Option<PathBuf>) -> SessionConfig {
    let mut s = SessionConfig::new(cfg.params, cfg.models, cfg.n_rounds, cfg.seed);
    s.cascade = cfg.cascade;
    s.q_prior = cfg.q_prior;
    s.key_path = key_path;
    s
}

pub fn session_row(cfg: &ExperimentConfig, rec: &SessionRecord) -> ReportRow {
    let seconds = rec.n_rounds as f64 / cfg.params.clock_rate;
    ReportRow {
        preset: cfg.name.clone(),
        rounds: rec.n_rounds,
        seed: cfg.seed,
        q_z: rec.q_z,
        phi_z: rec.phi_z,
        rkr_bps: rec.sifted_bits as f64 / seconds,
        skr_bps: rec.key_bits as f64 / seconds,
        lambda_ec: rec.lambda_ec as f64,
        key_bits: rec.key_bits,
        config_hash: cfg.config_hash(),
    }
}

/// Runs one side of a session; the key file is written only on success.
pub fn run_peer(role: Role, cfg: &ExperimentConfig, endpoint: Endpoint, key_path: Option<PathBuf>) -> Result<SessionRecord> {
    let io = |addr: SocketAddr| move |e| CliError::Io { path: PathBuf::from(addr.to_string()), source: e };
    let mut stream: TcpStream = match endpoint {
        Endpoint::Listen(a) => tcp_accept(a).map_err(io(a))?,
        Endpoint::Connect(a) => tcp_connect(a, 100).map_err(io(a))?,
    };
    Ok(run_session(role, &session_config(cfg, key_path), &mut stream)?)
}

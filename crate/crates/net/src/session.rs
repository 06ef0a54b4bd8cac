//! Alice and Bob as two state machines over one ordered byte stream.
//!
//! Phases run strictly in order: INIT (HELLO, PARAMS), QUANTUM (Alice's
//! choices in SIM_BATCH frames, Bob samples the channel), SIFT
//! (DETECT_REPORT, BASIS_REVEAL), RECONCILE (EC_MSG per Cascade block),
//! AMPLIFY (PA_SEED, KEY_TAG) and DONE. Any failure ends in ABORTED, and a
//! peer that fails on its own side tells the other with an ABORT frame.
//! Key files are written only after DONE.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::PathBuf;

use sha2::{Digest, Sha256};
use tbqkd_core::bits::{BitSlice64, Bits};
use tbqkd_core::cascade::{reconcile_bob, serve_alice, CascadeConfig, EcMessage, MessagePort, Role};
use tbqkd_core::experiment::{block_report, BlockReport};
use tbqkd_core::physics::PhysicsModels;
use tbqkd_core::pipeline::{amplify, block_ranges, block_seed, final_key_tag, QberTracker};
use tbqkd_core::protocol::{ChoiceSource, IntensityClass, ProtocolParams, RoundChoice, SeededChoices, StateSymbol};
use tbqkd_core::rng::{derive_seed, Domain};
use tbqkd_core::security::keyfile::write_key_file;
use tbqkd_core::sifting::{conclusive_attribution, resolve_z_clicks, revealed_z_round};
use tbqkd_core::sim::{simulate_choices, DetectionBin, SimOptions, TallyCounts};

use crate::error::{AbortReason, NetError, Result};
use crate::frame::{read_frame, write_frame};
use crate::messages::{Message, Negotiated, Verdicts, PROTOCOL_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Phase {
    Init,
    Quantum,
    Sift,
    Reconcile,
    Amplify,
    Done,
    Aborted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionConfig {
    pub params: ProtocolParams<f64>,
    /// Used by Bob only; Alice never samples the channel.
    pub models: PhysicsModels<f64>,
    pub n_rounds: u64,
    /// Alice: choice seed. Bob: channel, detector and amplification seed.
    pub seed: u64,
    pub session_id: [u8; 8],
    pub cascade: CascadeConfig,
    /// QBER assumed for the first Cascade block.
    pub q_prior: f64,
    pub batch_rounds: u32,
    pub sim: SimOptions,
    pub key_path: Option<PathBuf>,
}

impl SessionConfig {
    pub fn new(params: ProtocolParams<f64>, models: PhysicsModels<f64>, n_rounds: u64, seed: u64) -> Self {
        Self {
            params,
            models,
            n_rounds,
            seed,
            session_id: *b"tbqkd-00",
            cascade: CascadeConfig::default(),
            q_prior: 0.03,
            batch_rounds: 1 << 21,
            sim: SimOptions::with_log(),
            key_path: None,
        }
    }

    fn negotiated(&self) -> Negotiated {
        Negotiated { params: self.params, n_rounds: self.n_rounds, cascade: self.cascade, q_prior: self.q_prior }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionRecord {
    pub role: Role,
    pub session_id: [u8; 8],
    pub phase: Phase,
    pub n_rounds: u64,
    /// Z statistics of reconciled bits and conclusive X statistics.
    pub tallies: TallyCounts,
    pub sifted_bits: u64,
    pub blocks: u64,
    pub blocks_verified: u64,
    pub lambda_ec: u64,
    pub q_z: f64,
    pub phi_z: f64,
    pub key_bits: u64,
    pub secret_key: Bits,
    /// Sifted key before reconciliation; never sent.
    pub sifted_key: Bits,
    pub transcript_hash: [u8; 32],
    /// Absent when a basis saw no detections.
    pub report: Option<BlockReport>,
}

struct Peer<'t, T> {
    io: &'t mut T,
    phase: Phase,
    hash: Sha256,
}

impl<T: Read + Write> Peer<'_, T> {
    fn send(&mut self, m: &Message) -> Result<()> {
        let f = m.to_frame()?;
        self.absorb(&f.payload, f.msg_type as u8, m);
        write_frame(self.io, &f)
    }

    fn recv(&mut self) -> Result<Message> {
        let f = read_frame(self.io)?;
        let m = Message::from_frame(&f)?;
        if let Message::Abort { reason, detail } = m {
            return Err(NetError::PeerAborted { phase: self.phase, reason, detail });
        }
        self.absorb(&f.payload, f.msg_type as u8, &m);
        Ok(m)
    }

    fn absorb(&mut self, payload: &[u8], t: u8, m: &Message) {
        if matches!(m, Message::Hello { .. } | Message::Params(_) | Message::DetectReport { .. } | Message::BasisReveal { .. }) {
            self.hash.update([t]);
            self.hash.update((payload.len() as u64).to_le_bytes());
            self.hash.update(payload);
        }
    }

    fn digest(&self) -> [u8; 32] {
        self.hash.clone().finalize().into()
    }

    fn abort(&mut self, reason: AbortReason, detail: String) -> NetError {
        let _ = self.send(&Message::Abort { reason, detail: detail.clone() });
        NetError::Aborted { phase: self.phase, reason, detail }
    }

    fn unexpected(&mut self, m: &Message) -> NetError {
        self.abort(AbortReason::Protocol, format!("unexpected {:?} in {:?}", m.msg_type(), self.phase))
    }
}

struct EcPort<'p, 't, T> {
    peer: &'p mut Peer<'t, T>,
    failure: Option<NetError>,
}

impl<T: Read + Write> EcPort<'_, '_, T> {
    fn fail(&mut self, e: NetError) -> tbqkd_core::Error {
        let msg = e.to_string();
        self.failure = Some(e);
        tbqkd_core::Error::Channel(msg)
    }

    fn into_error(self, e: tbqkd_core::Error) -> NetError {
        self.failure.unwrap_or(NetError::Core(e))
    }
}

impl<T: Read + Write> MessagePort for EcPort<'_, '_, T> {
    fn send(&mut self, msg: EcMessage) -> tbqkd_core::Result<()> {
        self.peer.send(&Message::Ec(msg)).map_err(|e| self.fail(e))
    }

    fn recv(&mut self) -> tbqkd_core::Result<EcMessage> {
        match self.peer.recv() {
            Ok(Message::Ec(m)) => Ok(m),
            Ok(other) => {
                let e = self.peer.unexpected(&other);
                Err(self.fail(e))
            }
            Err(e) => Err(self.fail(e)),
        }
    }
}

/// Alice's choices as received in SIM_BATCH frames, one nibble per round.
struct PackedChoices {
    nibbles: Vec<u8>,
}

impl ChoiceSource for PackedChoices {
    fn choice(&self, round: u64) -> RoundChoice {
        let b = self.nibbles[(round / 2) as usize] >> (4 * (round % 2));
        RoundChoice::from_nibble(b & 0xf, round).expect("validated on receipt")
    }
}

fn verdict(k: IntensityClass) -> u8 {
    k.index() as u8 + 1
}

fn class_of(v: u8) -> Option<IntensityClass> {
    v.checked_sub(1).and_then(|i| IntensityClass::from_index(i as usize))
}

/// Sifted bits of one peer with their intensity classes.
#[derive(Default)]
struct Sifted {
    bits: Bits,
    intensity: Vec<IntensityClass>,
    tallies: TallyCounts,
}

/// Runs one side of a session to completion or abort.
pub fn run_session<T: Read + Write>(role: Role, cfg: &SessionConfig, transport: &mut T) -> Result<SessionRecord> {
    let mut peer = Peer { io: transport, phase: Phase::Init, hash: Sha256::new() };
    let out = match role {
        Role::Alice => alice(&mut peer, cfg),
        Role::Bob => bob(&mut peer, cfg),
    };
    match out {
        Ok(rec) => {
            if let Some(path) = &cfg.key_path {
                write_key_file(path, &rec.secret_key, cfg.session_id)?;
            }
            Ok(rec)
        }
        Err(e @ (NetError::Aborted { .. } | NetError::PeerAborted { .. })) => Err(e),
        Err(NetError::Io(e)) => {
            let detail = e.to_string();
            Err(peer.abort(AbortReason::Transport, detail))
        }
        Err(e) => {
            let reason = match e {
                NetError::Core(_) => AbortReason::Internal,
                _ => AbortReason::Protocol,
            };
            Err(peer.abort(reason, e.to_string()))
        }
    }
}

fn negotiate<T: Read + Write>(peer: &mut Peer<T>, role: Role, cfg: &SessionConfig) -> Result<()> {
    let hello = Message::Hello { version: PROTOCOL_VERSION, session_id: cfg.session_id };
    let check_hello = |peer: &mut Peer<T>, m: Message| match m {
        Message::Hello { version, session_id } if version == PROTOCOL_VERSION && session_id == cfg.session_id => Ok(()),
        Message::Hello { version, session_id } => {
            Err(peer.abort(AbortReason::SessionMismatch, format!("peer session {session_id:?} version {version}")))
        }
        other => Err(peer.unexpected(&other)),
    };
    let mine = cfg.negotiated();
    let check_params = |peer: &mut Peer<T>, m: Message| match m {
        Message::Params(p) if p == mine => Ok(()),
        Message::Params(p) => Err(peer.abort(AbortReason::ParamMismatch, describe_mismatch(&mine, &p))),
        other => Err(peer.unexpected(&other)),
    };
    match role {
        Role::Alice => {
            peer.send(&hello)?;
            let m = peer.recv()?;
            check_hello(peer, m)?;
            peer.send(&Message::Params(mine))?;
            let m = peer.recv()?;
            check_params(peer, m)
        }
        Role::Bob => {
            let m = peer.recv()?;
            check_hello(peer, m)?;
            peer.send(&hello)?;
            let m = peer.recv()?;
            check_params(peer, m)?;
            peer.send(&Message::Params(mine))
        }
    }
}

fn describe_mismatch(a: &Negotiated, b: &Negotiated) -> String {
    let (p, q) = (&a.params, &b.params);
    let fields = [
        ("p_z_alice", p.p_z_alice, q.p_z_alice),
        ("p_z_bob", p.p_z_bob, q.p_z_bob),
        ("mu1", p.mu1, q.mu1),
        ("mu2", p.mu2, q.mu2),
        ("p_mu1", p.p_mu1, q.p_mu1),
        ("clock_rate", p.clock_rate, q.clock_rate),
        ("eps_sec", p.eps_sec, q.eps_sec),
        ("eps_cor", p.eps_cor, q.eps_cor),
        ("q_prior", a.q_prior, b.q_prior),
    ];
    let mut diffs: Vec<String> =
        fields.iter().filter(|(_, x, y)| x.to_bits() != y.to_bits()).map(|(n, x, y)| format!("{n}: {x} vs {y}")).collect();
    if a.n_rounds != b.n_rounds {
        diffs.push(format!("n_rounds: {} vs {}", a.n_rounds, b.n_rounds));
    }
    if a.cascade != b.cascade {
        diffs.push("cascade settings differ".into());
    }
    diffs.join(", ")
}

fn session_seed(digest: &[u8; 32]) -> u64 {
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

fn alice<T: Read + Write>(peer: &mut Peer<T>, cfg: &SessionConfig) -> Result<SessionRecord> {
    negotiate(peer, Role::Alice, cfg)?;

    peer.phase = Phase::Quantum;
    let choices = SeededChoices::new(cfg.params, cfg.seed);
    let batch = cfg.batch_rounds.max(2) as u64;
    let mut start = 0;
    while start < cfg.n_rounds {
        let count = batch.min(cfg.n_rounds - start);
        let mut nibbles = vec![0u8; count.div_ceil(2) as usize];
        for i in 0..count {
            nibbles[(i / 2) as usize] |= choices.choice(start + i).to_nibble() << (4 * (i % 2));
        }
        peer.send(&Message::SimBatch { start, count: count as u32, nibbles })?;
        start += count;
    }

    peer.phase = Phase::Sift;
    let (z, x_side, x_central) = match peer.recv()? {
        Message::DetectReport { z, x_side, x_central } => (z, x_side, x_central),
        other => return Err(peer.unexpected(&other)),
    };
    if z.last().or(x_side.last()).or(x_central.last()).is_some_and(|&r| r >= cfg.n_rounds) {
        return Err(peer.abort(AbortReason::Protocol, "detection outside the session".into()));
    }
    let mut sifted = Sifted::default();
    let mut revealed = HashSet::new();
    let side: Verdicts = x_side
        .iter()
        .map(|&r| {
            if r == 0 {
                return 0;
            }
            let (p, c) = (choices.choice(r - 1), choices.choice(r));
            match conclusive_attribution(p.state, p.intensity, c.state, c.intensity) {
                Some(k) => {
                    revealed.extend(revealed_z_round(p.state, c.state, r));
                    sifted.tallies.n_x_side[k.index()] += 1;
                    verdict(k)
                }
                None => 0,
            }
        })
        .collect();
    let central: Verdicts = x_central
        .iter()
        .map(|&r| {
            let c = choices.choice(r);
            if c.state == StateSymbol::XPlus {
                sifted.tallies.v_x[c.intensity.index()] += 1;
                verdict(c.intensity)
            } else {
                0
            }
        })
        .collect();
    let zv: Verdicts = z
        .iter()
        .map(|&r| {
            let c = choices.choice(r);
            match c.state.z_bit() {
                Some(bit) if !revealed.contains(&r) => {
                    sifted.bits.push(bit);
                    sifted.intensity.push(c.intensity);
                    verdict(c.intensity)
                }
                _ => 0,
            }
        })
        .collect();
    peer.send(&Message::BasisReveal { z: zv, x_side: side, x_central: central })?;
    let digest = peer.digest();
    let seed = session_seed(&digest);

    peer.phase = Phase::Reconcile;
    let ranges = block_ranges(sifted.bits.len(), &cfg.cascade);
    let mut key = Bits::new();
    let mut tallies = sifted.tallies;
    let mut lambda = 0;
    let mut verified = 0;
    for (b, r) in ranges.iter().enumerate() {
        let mut port = EcPort { peer: &mut *peer, failure: None };
        let res = match serve_alice(b as u32, &sifted.bits[r.clone()], &cfg.cascade, block_seed(seed, b as u32), &mut port) {
            Ok(res) => res,
            Err(e) => return Err(port.into_error(e)),
        };
        if res.verified {
            verified += 1;
            lambda += res.lambda_ec_bits;
            key.extend_from_bitslice(&sifted.bits[r.clone()]);
            for k in &sifted.intensity[r.clone()] {
                tallies.n_z[k.index()] += 1;
            }
        }
    }

    peer.phase = Phase::Amplify;
    let (pa_seed, m_z, bob_lambda, bob_l) = match peer.recv()? {
        Message::PaSeed { seed, m_z, lambda_ec, key_bits } => (seed, m_z, lambda_ec, key_bits),
        other => return Err(peer.unexpected(&other)),
    };
    tallies.m_z = m_z;
    let report = analyze(peer, &tallies, cfg, lambda, key.len())?;
    let l = key_bits(&report);
    if bob_lambda != lambda || bob_l != l {
        return Err(peer.abort(
            AbortReason::Verification,
            format!("Bob computed lambda {bob_lambda} and l {bob_l}, Alice {lambda} and {l}"),
        ));
    }
    let final_key = amplify(&key, l, pa_seed)?;
    let tag = final_key_tag(&final_key, pa_seed);
    peer.send(&Message::KeyTag { tag, key_bits: l })?;
    match peer.recv()? {
        Message::KeyTag { tag: t, key_bits } if t == tag && key_bits == l => {}
        Message::KeyTag { .. } => return Err(peer.abort(AbortReason::Verification, "final key tags differ".into())),
        other => return Err(peer.unexpected(&other)),
    }
    peer.phase = Phase::Done;
    Ok(record(Role::Alice, cfg, peer, tallies, &sifted.bits, ranges.len(), verified, lambda, report, final_key, digest))
}

fn bob<T: Read + Write>(peer: &mut Peer<T>, cfg: &SessionConfig) -> Result<SessionRecord> {
    negotiate(peer, Role::Bob, cfg)?;

    peer.phase = Phase::Quantum;
    let mut nibbles = Vec::with_capacity(cfg.n_rounds.div_ceil(2) as usize);
    let mut next = 0u64;
    while next < cfg.n_rounds {
        let (start, count, data) = match peer.recv()? {
            Message::SimBatch { start, count, nibbles } => (start, count as u64, nibbles),
            other => return Err(peer.unexpected(&other)),
        };
        if start != next || count == 0 || next + count > cfg.n_rounds || (count % 2 == 1 && next + count != cfg.n_rounds) {
            return Err(peer.abort(AbortReason::Protocol, format!("batch at {start} of {count} rounds, expected {next}")));
        }
        let valid = (0..count).all(|i| RoundChoice::from_nibble((data[(i / 2) as usize] >> (4 * (i % 2))) & 0xf, 0).is_some());
        if !valid {
            return Err(peer.abort(AbortReason::Protocol, "invalid round choice".into()));
        }
        nibbles.extend_from_slice(&data);
        next += count;
    }
    let choices = PackedChoices { nibbles };
    let sim =
        simulate_choices(&choices, &cfg.params, &cfg.models, cfg.n_rounds, cfg.seed, &SimOptions { keep_log: true, ..cfg.sim })?;
    drop(choices);
    let log = sim.log.unwrap_or_default();

    peer.phase = Phase::Sift;
    let clicks = resolve_z_clicks(&log, cfg.seed);
    let rounds_of = |bin| log.iter().filter(|d| d.bin == bin).map(|d| d.round_index).collect::<Vec<_>>();
    let x_side = rounds_of(DetectionBin::XEarlySide);
    let x_central = rounds_of(DetectionBin::XCentral);
    peer.send(&Message::DetectReport {
        z: clicks.iter().map(|c| c.round_index).collect(),
        x_side: x_side.clone(),
        x_central: x_central.clone(),
    })?;
    let (zv, sv, cv) = match peer.recv()? {
        Message::BasisReveal { z, x_side: s, x_central: c } => (z, s, c),
        other => return Err(peer.unexpected(&other)),
    };
    if zv.len() != clicks.len()
        || sv.len() != x_side.len()
        || cv.len() != x_central.len()
        || zv.iter().chain(&sv).chain(&cv).any(|&v| v > 2)
    {
        return Err(peer.abort(AbortReason::Protocol, "basis reveal does not match the detection report".into()));
    }
    let mut sifted = Sifted::default();
    for (c, &v) in clicks.iter().zip(&zv) {
        if let Some(k) = class_of(v) {
            sifted.bits.push(c.bit);
            sifted.intensity.push(k);
        }
    }
    for &v in &sv {
        if let Some(k) = class_of(v) {
            sifted.tallies.n_x_side[k.index()] += 1;
        }
    }
    for &v in &cv {
        if let Some(k) = class_of(v) {
            sifted.tallies.v_x[k.index()] += 1;
        }
    }
    let digest = peer.digest();
    let seed = session_seed(&digest);

    peer.phase = Phase::Reconcile;
    let ranges = block_ranges(sifted.bits.len(), &cfg.cascade);
    let mut tracker = QberTracker::new(cfg.q_prior);
    let mut key = Bits::new();
    let mut tallies = sifted.tallies;
    let mut lambda = 0;
    let mut verified = 0;
    for (b, r) in ranges.iter().enumerate() {
        let raw = &sifted.bits[r.clone()];
        let mut port = EcPort { peer: &mut *peer, failure: None };
        let res = match reconcile_bob(b as u32, raw, tracker.estimate(), &cfg.cascade, block_seed(seed, b as u32), &mut port) {
            Ok(res) => res,
            Err(e) => return Err(port.into_error(e)),
        };
        let diff = res.corrected_key.clone() ^ raw;
        tracker.record(diff.count_ones() as u64, raw.len() as u64);
        if res.verified {
            verified += 1;
            lambda += res.lambda_ec_bits;
            key.extend_from_bitslice(&res.corrected_key);
            for (i, k) in sifted.intensity[r.clone()].iter().enumerate() {
                tallies.n_z[k.index()] += 1;
                tallies.m_z[k.index()] += u64::from(diff[i]);
            }
        }
    }

    peer.phase = Phase::Amplify;
    let report = analyze(peer, &tallies, cfg, lambda, key.len())?;
    let l = key_bits(&report);
    let pa_seed = derive_seed(cfg.seed, Domain::Amplify, 0);
    peer.send(&Message::PaSeed { seed: pa_seed, m_z: tallies.m_z, lambda_ec: lambda, key_bits: l })?;
    let final_key = amplify(&key, l, pa_seed)?;
    let tag = final_key_tag(&final_key, pa_seed);
    match peer.recv()? {
        Message::KeyTag { tag: t, key_bits } if t == tag && key_bits == l => {}
        Message::KeyTag { .. } => return Err(peer.abort(AbortReason::Verification, "final key tags differ".into())),
        other => return Err(peer.unexpected(&other)),
    }
    peer.send(&Message::KeyTag { tag, key_bits: l })?;
    peer.phase = Phase::Done;
    Ok(record(Role::Bob, cfg, peer, tallies, &sifted.bits, ranges.len(), verified, lambda, report, final_key, digest))
}

/// Finite-key analysis of the reconciled bits. Without statistics in
/// both bases there is no report and nothing to extract.
fn analyze<T: Read + Write>(
    peer: &mut Peer<T>,
    tallies: &TallyCounts,
    cfg: &SessionConfig,
    lambda: u64,
    key_len: usize,
) -> Result<Option<BlockReport>> {
    match block_report(tallies, cfg.n_rounds, lambda as f64, &cfg.params) {
        Ok(mut r) => {
            r.key_bits = r.key_bits.min(key_len as u64);
            Ok(Some(r))
        }
        Err(tbqkd_core::Error::InsufficientStatistics(_)) => Ok(None),
        Err(e) => Err(peer.abort(AbortReason::Internal, e.to_string())),
    }
}

fn key_bits(report: &Option<BlockReport>) -> u64 {
    report.as_ref().map_or(0, |r| r.key_bits)
}

#[allow(clippy::too_many_arguments)]
fn record<T: Read + Write>(
    role: Role,
    cfg: &SessionConfig,
    peer: &Peer<T>,
    tallies: TallyCounts,
    sifted: &BitSlice64,
    blocks: usize,
    verified: u64,
    lambda: u64,
    report: Option<BlockReport>,
    secret_key: Bits,
    digest: [u8; 32],
) -> SessionRecord {
    SessionRecord {
        role,
        session_id: cfg.session_id,
        phase: peer.phase,
        n_rounds: cfg.n_rounds,
        tallies,
        sifted_bits: sifted.len() as u64,
        blocks: blocks as u64,
        blocks_verified: verified,
        lambda_ec: lambda,
        q_z: if tallies.n_z_total() > 0 { tallies.m_z_total() as f64 / tallies.n_z_total() as f64 } else { 0.0 },
        phi_z: report.as_ref().map_or(0.5, |r| r.phi_z),
        key_bits: key_bits(&report),
        secret_key,
        sifted_key: sifted.to_bitvec(),
        transcript_hash: digest,
        report,
    }
}

//! Interactive Cascade reconciliation.
//!
//! Bob drives; Alice only answers parity and tag requests over a
//! [`MessagePort`]. Alice's block is never modified. Every parity bit she
//! sends is charged once to the leakage count, and Bob never asks twice for
//! a range whose parity he already knows.

mod messages;

pub use messages::EcMessage;

use std::collections::{HashMap, HashSet};

use bitvec::field::BitField;
use rand::seq::SliceRandom;

use crate::bits::{gf2_poly_mul, to_words, BitSlice64, Bits};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream_rng, Domain};
use crate::security::expand_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CascadeConfig {
    pub block_size_bits: usize,
    pub passes: usize,
    pub verify_tag_bits: usize,
}

impl Default for CascadeConfig {
    fn default() -> Self {
        Self { block_size_bits: 8192, passes: 4, verify_tag_bits: 64 }
    }
}

impl CascadeConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.block_size_bits.is_power_of_two() || self.block_size_bits < 8 {
            return Err(Error::Validation(format!("block size must be a power of two >= 8 ({})", self.block_size_bits)));
        }
        if self.passes < 2 {
            return Err(Error::Validation("Cascade needs at least two passes".into()));
        }
        if self.verify_tag_bits != 64 {
            return Err(Error::Validation("verification tags are 64 bits".into()));
        }
        Ok(())
    }

    /// First-pass sub-block length for an estimated error rate.
    pub fn initial_subblock_len(&self, q_est: f64) -> usize {
        let k = (0.73 / q_est.max(1e-3)).round() as usize;
        k.clamp(4, self.block_size_bits / 2)
    }

    fn subblock_len(&self, q_est: f64, pass: usize, n: usize) -> usize {
        (self.initial_subblock_len(q_est) << pass).min(n.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReconciliationResult {
    pub corrected_key: Bits,
    /// Parity bits plus tag bits disclosed by Alice.
    pub lambda_ec_bits: u64,
    pub verified: bool,
    pub parity_bits: u64,
    pub bits_flipped: u64,
    pub round_trips: u64,
}

/// Bidirectional message port used by one reconciliation session.
pub trait MessagePort {
    fn send(&mut self, msg: EcMessage) -> Result<()>;
    fn recv(&mut self) -> Result<EcMessage>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Alice,
    Bob,
}

/// Pass permutations shared by both sides; pass 0 keeps the natural order.
fn permutations(n: usize, passes: usize, seed: u64) -> Vec<Vec<u32>> {
    (0..passes)
        .map(|p| {
            let mut v: Vec<u32> = (0..n as u32).collect();
            if p > 0 {
                v.shuffle(&mut stream_rng(seed, Domain::Reconcile, p as u64));
            }
            v
        })
        .collect()
}

fn shuffled(key: &BitSlice64, perm: &[u32]) -> Bits {
    perm.iter().map(|&i| key[i as usize]).collect()
}

fn range_parity(bits: &BitSlice64, lo: u32, hi: u32) -> bool {
    bits[lo as usize..hi as usize].count_ones() % 2 == 1
}

/// 64-bit Toeplitz hash of `key`; the seed comes from `shared_seed`.
pub fn verification_tag(key: &BitSlice64, shared_seed: u64) -> u64 {
    if key.is_empty() {
        return 0;
    }
    let n = key.len();
    let seed = expand_seed(derive_seed(shared_seed, Domain::Reconcile, u64::MAX), n + 63);
    let prod = Bits::from_vec(gf2_poly_mul(&to_words(&seed), &to_words(key)));
    prod[n - 1..n + 63].load_le::<u64>()
}

/// Compares seeded hash tags; returns the verdict and the tag bits disclosed.
pub fn verify_keys(key_a: &BitSlice64, key_b: &BitSlice64, shared_seed: u64) -> (bool, u64) {
    (key_a.len() == key_b.len() && verification_tag(key_a, shared_seed) == verification_tag(key_b, shared_seed), 64)
}

/// Alice's side: answers requests for one block.
pub struct CascadeResponder {
    block_id: u32,
    key: Bits,
    seed: u64,
    passes: Vec<Bits>,
    cache: HashMap<(u8, u32, u32), bool>,
    disclosed: u64,
    verified: Option<bool>,
}

impl CascadeResponder {
    pub fn new(block_id: u32, key: &BitSlice64, cfg: &CascadeConfig, seed: u64) -> Self {
        let perms = permutations(key.len(), cfg.passes, seed);
        Self {
            block_id,
            key: key.to_bitvec(),
            seed,
            passes: perms.iter().map(|p| shuffled(key, p)).collect(),
            cache: HashMap::new(),
            disclosed: 0,
            verified: None,
        }
    }

    pub fn disclosed_bits(&self) -> u64 {
        self.disclosed
    }

    /// Bob's verdict, once the session has ended.
    pub fn verified(&self) -> Option<bool> {
        self.verified
    }

    /// Handles one message; `None` means the session is over.
    pub fn handle(&mut self, msg: EcMessage) -> Result<Option<EcMessage>> {
        match msg {
            EcMessage::ParityRequest { block_id, pass, ranges } if block_id == self.block_id => {
                let bits = self.passes.get(pass as usize).ok_or_else(|| Error::Channel(format!("no pass {pass}")))?;
                let mut out = Bits::with_capacity(ranges.len());
                for (lo, hi) in ranges {
                    if lo >= hi || hi as usize > bits.len() {
                        return Err(Error::Channel(format!("bad range {lo}..{hi}")));
                    }
                    let p = *self.cache.entry((pass, lo, hi)).or_insert_with(|| range_parity(bits, lo, hi));
                    out.push(p);
                }
                self.disclosed += out.len() as u64;
                Ok(Some(EcMessage::ParityReply { block_id, parities: out }))
            }
            EcMessage::TagRequest { block_id } if block_id == self.block_id => {
                self.disclosed += 64;
                Ok(Some(EcMessage::TagReply { block_id, tag: verification_tag(&self.key, self.seed) }))
            }
            EcMessage::Done { block_id, verified } if block_id == self.block_id => {
                self.verified = Some(verified);
                Ok(None)
            }
            other => Err(Error::Channel(format!("unexpected message {other:?}"))),
        }
    }
}

/// Port that answers Bob's requests with an in-process responder.
pub struct LocalPort {
    pub alice: CascadeResponder,
    pending: Option<EcMessage>,
    pub transcript: Vec<EcMessage>,
}

impl LocalPort {
    pub fn new(alice: CascadeResponder) -> Self {
        Self { alice, pending: None, transcript: Vec::new() }
    }
}

impl MessagePort for LocalPort {
    fn send(&mut self, msg: EcMessage) -> Result<()> {
        self.transcript.push(msg.clone());
        self.pending = self.alice.handle(msg)?;
        if let Some(r) = &self.pending {
            self.transcript.push(r.clone());
        }
        Ok(())
    }

    fn recv(&mut self) -> Result<EcMessage> {
        self.pending.take().ok_or_else(|| Error::Channel("no reply pending".into()))
    }
}

struct Bob<'a, P: MessagePort> {
    block_id: u32,
    port: &'a mut P,
    perms: Vec<Vec<u32>>,
    inv: Vec<Vec<u32>>,
    shuffled: Vec<Bits>,
    sizes: Vec<u32>,
    known: HashMap<(u8, u32, u32), bool>,
    parity_bits: u64,
    flips: u64,
    round_trips: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct Search {
    pass: u8,
    lo: u32,
    hi: u32,
}

impl<P: MessagePort> Bob<'_, P> {
    fn ask(&mut self, pass: u8, ranges: Vec<(u32, u32)>) -> Result<()> {
        if ranges.is_empty() {
            return Ok(());
        }
        self.port.send(EcMessage::ParityRequest { block_id: self.block_id, pass, ranges: ranges.clone() })?;
        self.round_trips += 1;
        match self.port.recv()? {
            EcMessage::ParityReply { block_id, parities } if block_id == self.block_id && parities.len() == ranges.len() => {
                self.parity_bits += parities.len() as u64;
                for ((lo, hi), p) in ranges.into_iter().zip(parities.iter().by_vals()) {
                    self.known.insert((pass, lo, hi), p);
                }
                Ok(())
            }
            other => Err(Error::Channel(format!("expected parity reply, got {other:?}"))),
        }
    }

    /// Requests a batch spanning several passes, one message per pass.
    fn ask_many(&mut self, wanted: &[Search]) -> Result<()> {
        let mut by_pass: Vec<Vec<(u32, u32)>> = vec![Vec::new(); self.perms.len()];
        let mut seen = HashSet::new();
        for s in wanted {
            if !self.known.contains_key(&(s.pass, s.lo, s.hi)) && seen.insert(*s) {
                by_pass[s.pass as usize].push((s.lo, s.hi));
            }
        }
        for (p, r) in by_pass.into_iter().enumerate() {
            self.ask(p as u8, r)?;
        }
        Ok(())
    }

    fn bob_parity(&self, s: &Search) -> bool {
        range_parity(&self.shuffled[s.pass as usize], s.lo, s.hi)
    }

    fn mismatched(&self, s: &Search) -> bool {
        self.known.get(&(s.pass, s.lo, s.hi)).is_some_and(|&a| a != self.bob_parity(s))
    }

    fn flip(&mut self, original: u32) {
        for (p, inv) in self.inv.iter().enumerate() {
            let j = inv[original as usize] as usize;
            let v = self.shuffled[p][j];
            self.shuffled[p].set(j, !v);
        }
        self.flips += 1;
    }

    fn top_block(&self, pass: u8, original: u32) -> Search {
        let pos = self.inv[pass as usize][original as usize];
        let k = self.sizes[pass as usize];
        let lo = pos / k * k;
        let n = self.shuffled[0].len() as u32;
        Search { pass, lo, hi: (lo + k).min(n) }
    }

    /// Runs binary searches in lockstep until no odd block remains in
    /// passes `0..=max_pass`.
    fn run_searches(&mut self, mut open: Vec<Search>, max_pass: u8) -> Result<()> {
        while !open.is_empty() {
            open.retain(|s| self.mismatched(s));
            let mut dedup = HashSet::new();
            open.retain(|s| dedup.insert(*s));
            if open.is_empty() {
                break;
            }
            let lefts: Vec<Search> = open
                .iter()
                .filter(|s| s.hi - s.lo > 1)
                .map(|s| Search { pass: s.pass, lo: s.lo, hi: s.lo + (s.hi - s.lo) / 2 })
                .collect();
            self.ask_many(&lefts)?;
            let mut next = Vec::with_capacity(open.len());
            let mut found = Vec::new();
            for s in &open {
                if s.hi - s.lo == 1 {
                    found.push(self.perms[s.pass as usize][s.lo as usize]);
                    continue;
                }
                let mid = s.lo + (s.hi - s.lo) / 2;
                let left = Search { pass: s.pass, lo: s.lo, hi: mid };
                let right = Search { pass: s.pass, lo: mid, hi: s.hi };
                if self.mismatched(&left) {
                    next.push(left);
                } else {
                    let total = self.known[&(s.pass, s.lo, s.hi)];
                    let left_alice = self.known[&(left.pass, left.lo, left.hi)];
                    self.known.insert((right.pass, right.lo, right.hi), total ^ left_alice);
                    if right.hi - right.lo == 1 {
                        found.push(self.perms[s.pass as usize][right.lo as usize]);
                    } else {
                        next.push(right);
                    }
                }
            }
            found.sort_unstable();
            found.dedup();
            for &i in &found {
                self.flip(i);
            }
            for &i in &found {
                for q in 0..=max_pass {
                    let b = self.top_block(q, i);
                    if self.mismatched(&b) {
                        next.push(b);
                    }
                }
            }
            open = next;
        }
        Ok(())
    }

    fn corrected(&self) -> Bits {
        let n = self.shuffled[0].len();
        let mut out = Bits::repeat(false, n);
        for i in 0..n {
            out.set(i, self.shuffled[0][self.inv[0][i] as usize]);
        }
        out
    }
}

/// Bob's side of one block. `seed` is the jointly disclosed shuffle seed.
pub fn reconcile_bob<P: MessagePort>(
    block_id: u32,
    key: &BitSlice64,
    q_est: f64,
    cfg: &CascadeConfig,
    seed: u64,
    port: &mut P,
) -> Result<ReconciliationResult> {
    cfg.validate()?;
    if !(q_est > 0.0 && q_est <= 0.25) {
        return Err(Error::Domain(format!("QBER estimate must lie in (0, 0.25] ({q_est})")));
    }
    let n = key.len();
    let perms = permutations(n, cfg.passes, seed);
    let inv = perms
        .iter()
        .map(|p| {
            let mut v = vec![0u32; n];
            for (pos, &i) in p.iter().enumerate() {
                v[i as usize] = pos as u32;
            }
            v
        })
        .collect();
    let shuffled = perms.iter().map(|p| shuffled(key, p)).collect();
    let sizes = (0..cfg.passes).map(|p| cfg.subblock_len(q_est, p, n) as u32).collect();
    let mut bob =
        Bob { block_id, port, perms, inv, shuffled, sizes, known: HashMap::new(), parity_bits: 0, flips: 0, round_trips: 0 };
    for pass in 0..cfg.passes as u8 {
        let k = bob.sizes[pass as usize];
        let tops: Vec<Search> =
            (0..n as u32).step_by(k.max(1) as usize).map(|lo| Search { pass, lo, hi: (lo + k).min(n as u32) }).collect();
        bob.ask_many(&tops)?;
        let odd: Vec<Search> = tops.into_iter().filter(|s| bob.mismatched(s)).collect();
        bob.run_searches(odd, pass)?;
    }
    let corrected = bob.corrected();
    bob.port.send(EcMessage::TagRequest { block_id })?;
    let tag = match bob.port.recv()? {
        EcMessage::TagReply { block_id: b, tag } if b == block_id => tag,
        other => return Err(Error::Channel(format!("expected tag reply, got {other:?}"))),
    };
    let verified = verification_tag(&corrected, seed) == tag;
    bob.port.send(EcMessage::Done { block_id, verified })?;
    Ok(ReconciliationResult {
        corrected_key: corrected,
        lambda_ec_bits: bob.parity_bits + cfg.verify_tag_bits as u64,
        verified,
        parity_bits: bob.parity_bits,
        bits_flipped: bob.flips,
        round_trips: bob.round_trips,
    })
}

/// Alice's side of one block: serves requests until Bob ends the session.
pub fn serve_alice<P: MessagePort>(
    block_id: u32,
    key: &BitSlice64,
    cfg: &CascadeConfig,
    seed: u64,
    port: &mut P,
) -> Result<ReconciliationResult> {
    cfg.validate()?;
    let mut r = CascadeResponder::new(block_id, key, cfg, seed);
    loop {
        let msg = port.recv()?;
        match r.handle(msg)? {
            Some(reply) => port.send(reply)?,
            None => break,
        }
    }
    let disclosed = r.disclosed_bits();
    Ok(ReconciliationResult {
        corrected_key: key.to_bitvec(),
        lambda_ec_bits: disclosed,
        verified: r.verified().unwrap_or(false),
        parity_bits: disclosed.saturating_sub(cfg.verify_tag_bits as u64),
        bits_flipped: 0,
        round_trips: 0,
    })
}

/// Runs one side of a session.
pub fn cascade_session<P: MessagePort>(
    role: Role,
    block_id: u32,
    key: &BitSlice64,
    q_est: f64,
    cfg: &CascadeConfig,
    seed: u64,
    port: &mut P,
) -> Result<ReconciliationResult> {
    match role {
        Role::Alice => serve_alice(block_id, key, cfg, seed, port),
        Role::Bob => reconcile_bob(block_id, key, q_est, cfg, seed, port),
    }
}

/// Reconciles two blocks in one process; returns Bob's result and the transcript.
pub fn reconcile_local(
    alice: &BitSlice64,
    bob: &BitSlice64,
    q_est: f64,
    cfg: &CascadeConfig,
    seed: u64,
) -> Result<(ReconciliationResult, Vec<EcMessage>)> {
    if alice.len() != bob.len() {
        return Err(Error::Domain("blocks differ in length".into()));
    }
    let mut port = LocalPort::new(CascadeResponder::new(0, alice, cfg, seed));
    let r = reconcile_bob(0, bob, q_est, cfg, seed, &mut port)?;
    Ok((r, port.transcript))
}

/// Bits Alice disclosed according to a transcript.
pub fn disclosed_in_transcript(transcript: &[EcMessage]) -> u64 {
    transcript
        .iter()
        .map(|m| match m {
            EcMessage::ParityReply { parities, .. } => parities.len() as u64,
            EcMessage::TagReply { .. } => 64,
            _ => 0,
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::security::expand_seed;

    #[test]
    fn subblock_rule() {
        let c = CascadeConfig::default();
        assert_eq!(c.initial_subblock_len(0.03), 24);
        assert_eq!(c.initial_subblock_len(0.0), 730);
        assert_eq!(c.initial_subblock_len(0.25), 4);
        assert_eq!(CascadeConfig { block_size_bits: 64, ..c }.initial_subblock_len(0.001), 32);
    }

    #[test]
    fn identical_blocks_cost_only_top_level_parities() {
        let cfg = CascadeConfig::default();
        let key = expand_seed(4, 8192);
        let (r, t) = reconcile_local(&key, &key, 0.03, &cfg, 9).unwrap();
        assert!(r.verified);
        assert_eq!(r.corrected_key, key);
        let tops: u64 = (0..4).map(|p| 8192u64.div_ceil((24u64 << p).min(8192))).sum();
        assert_eq!(r.parity_bits, tops);
        assert_eq!(r.lambda_ec_bits, tops + 64);
        assert_eq!(disclosed_in_transcript(&t), r.lambda_ec_bits);
    }

    #[test]
    fn single_error_costs_binary_search_depth() {
        let cfg = CascadeConfig::default();
        let alice = expand_seed(5, 8192);
        let mut bob = alice.clone();
        // q = 0.0228 gives k1 = 32, which divides the block
        let k = cfg.initial_subblock_len(0.0228);
        assert_eq!(k, 32);
        let flip = 1000;
        let v = bob[flip];
        bob.set(flip, !v);
        let (r, _) = reconcile_local(&alice, &bob, 0.0228, &cfg, 1).unwrap();
        assert!(r.verified);
        assert_eq!(r.corrected_key, alice);
        let tops: u64 = (0..4).map(|p| 8192u64 / (32u64 << p)).sum();
        assert_eq!(r.parity_bits, tops + 5);
    }

    #[test]
    fn verify_keys_cases() {
        let a = expand_seed(6, 1000);
        let mut b = a.clone();
        assert_eq!(verify_keys(&a, &b, 3), (true, 64));
        let v = b[17];
        b.set(17, !v);
        assert!(!verify_keys(&a, &b, 3).0);
        assert_eq!(verify_keys(&Bits::new(), &Bits::new(), 3), (true, 64));
    }
}

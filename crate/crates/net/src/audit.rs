//! Offline checks over captured byte streams of one session.

use std::collections::{BTreeMap, BTreeSet};

use tbqkd_core::bits::{pack_bytes, BitSlice64};
use tbqkd_core::cascade::EcMessage;

use crate::error::Result;
use crate::frame::{Frame, MsgType};
use crate::messages::{Message, Negotiated};

/// Window length, in bytes, of the raw-key search.
pub const WINDOW_BYTES: usize = 8;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct WireAudit {
    pub frames: BTreeMap<u8, usize>,
    /// Classical frames containing an aligned window of a sifted key.
    pub key_windows_found: usize,
    pub windows_checked: usize,
}

/// Decodes every frame of both directions and searches the classical ones
/// for aligned 8-byte windows of the given sifted keys. SIM_BATCH frames
/// stand in for the optical channel and are not searched.
pub fn audit_wire(streams: &[&[u8]], keys: &[&BitSlice64]) -> Result<WireAudit> {
    let packed: Vec<Vec<u8>> = keys.iter().map(|k| pack_bytes(k)).collect();
    let mut windows: BTreeSet<&[u8]> = BTreeSet::new();
    for p in &packed {
        for w in p.chunks_exact(WINDOW_BYTES) {
            windows.insert(w);
        }
    }
    let mut audit = WireAudit { windows_checked: windows.len(), ..Default::default() };
    for s in streams {
        for f in Frame::decode_stream(s)? {
            Message::from_frame(&f)?;
            *audit.frames.entry(f.msg_type as u8).or_default() += 1;
            if f.msg_type == MsgType::SimBatch {
                continue;
            }
            if f.payload.windows(WINDOW_BYTES).any(|w| windows.contains(w)) {
                audit.key_windows_found += 1;
            }
        }
    }
    Ok(audit)
}

/// What an eavesdropper learns from the classical transcript alone.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Replay {
    pub negotiated: Option<Negotiated>,
    pub blocks_verified: u64,
    /// Parity bits plus verification tags of the verified blocks.
    pub lambda_ec: u64,
}

/// Recomputes the disclosed reconciliation bits from both directions.
pub fn replay_transcript(streams: &[&[u8]]) -> Result<Replay> {
    let mut out = Replay::default();
    let mut disclosed: BTreeMap<u32, u64> = BTreeMap::new();
    let mut verified = BTreeSet::new();
    for s in streams {
        for f in Frame::decode_stream(s)? {
            match Message::from_frame(&f)? {
                Message::Params(p) => out.negotiated = Some(p),
                Message::Ec(EcMessage::ParityReply { block_id, parities }) => {
                    *disclosed.entry(block_id).or_default() += parities.len() as u64;
                }
                Message::Ec(EcMessage::TagReply { block_id, .. }) => {
                    *disclosed.entry(block_id).or_default() += 64;
                }
                Message::Ec(EcMessage::Done { block_id, verified: true }) => {
                    verified.insert(block_id);
                }
                _ => {}
            }
        }
    }
    out.blocks_verified = verified.len() as u64;
    out.lambda_ec = verified.iter().map(|b| disclosed.get(b).copied().unwrap_or(0)).sum();
    Ok(out)
}

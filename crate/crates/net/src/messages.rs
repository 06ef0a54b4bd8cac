//! Payload layouts of every registered message type. Integers are little
//! endian; round-index lists are delta-encoded varints.

use integer_encoding::VarInt;
use tbqkd_core::cascade::{CascadeConfig, EcMessage};
use tbqkd_core::protocol::ProtocolParams;

use crate::error::{AbortReason, NetError, Result};
use crate::frame::{Frame, MsgType};

pub const PROTOCOL_VERSION: u16 = 1;

/// Settings both peers must agree on before any round is sent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Negotiated {
    pub params: ProtocolParams<f64>,
    pub n_rounds: u64,
    pub cascade: CascadeConfig,
    pub q_prior: f64,
}

/// Two-bit sifting verdicts: 0 discards, otherwise the intensity index plus one.
pub type Verdicts = Vec<u8>;

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Hello {
        version: u16,
        session_id: [u8; 8],
    },
    Params(Negotiated),
    /// Alice's choices for `count` rounds from `start`, one nibble each, low nibble first.
    SimBatch {
        start: u64,
        count: u32,
        nibbles: Vec<u8>,
    },
    DetectReport {
        z: Vec<u64>,
        x_side: Vec<u64>,
        x_central: Vec<u64>,
    },
    BasisReveal {
        z: Verdicts,
        x_side: Verdicts,
        x_central: Verdicts,
    },
    Ec(EcMessage),
    PaSeed {
        seed: u64,
        m_z: [u64; 2],
        lambda_ec: u64,
        key_bits: u64,
    },
    KeyTag {
        tag: u64,
        key_bits: u64,
    },
    Abort {
        reason: AbortReason,
        detail: String,
    },
}

struct Reader<'a>(&'a [u8]);

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.0.len() < n {
            return Err(NetError::Malformed("truncated payload".into()));
        }
        let (h, t) = self.0.split_at(n);
        self.0 = t;
        Ok(h)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }

    fn varint(&mut self) -> Result<u64> {
        let (v, n) = u64::decode_var(self.0).ok_or_else(|| NetError::Malformed("bad varint".into()))?;
        self.0 = &self.0[n..];
        Ok(v)
    }

    fn rounds(&mut self) -> Result<Vec<u64>> {
        let n = self.u32()? as usize;
        let mut out = Vec::with_capacity(n.min(self.0.len()));
        let mut last = 0u64;
        for _ in 0..n {
            last = last.checked_add(self.varint()?).ok_or_else(|| NetError::Malformed("round overflow".into()))?;
            out.push(last);
        }
        Ok(out)
    }

    fn verdicts(&mut self) -> Result<Verdicts> {
        let n = self.u32()? as usize;
        let b = self.take(n.div_ceil(4))?;
        Ok((0..n).map(|i| (b[i / 4] >> (2 * (i % 4))) & 0b11).collect())
    }

    fn finish(self) -> Result<()> {
        if self.0.is_empty() {
            Ok(())
        } else {
            Err(NetError::Malformed("trailing payload bytes".into()))
        }
    }
}

fn put_rounds(out: &mut Vec<u8>, rounds: &[u64]) {
    out.extend_from_slice(&(rounds.len() as u32).to_le_bytes());
    let mut last = 0;
    for &r in rounds {
        out.extend_from_slice(&(r - last).encode_var_vec());
        last = r;
    }
}

fn put_verdicts(out: &mut Vec<u8>, v: &[u8]) {
    out.extend_from_slice(&(v.len() as u32).to_le_bytes());
    let mut packed = vec![0u8; v.len().div_ceil(4)];
    for (i, &c) in v.iter().enumerate() {
        packed[i / 4] |= (c & 0b11) << (2 * (i % 4));
    }
    out.extend_from_slice(&packed);
}

fn sorted(r: &[u64]) -> bool {
    r.windows(2).all(|w| w[0] <= w[1])
}

impl Message {
    pub fn msg_type(&self) -> MsgType {
        match self {
            Self::Hello { .. } => MsgType::Hello,
            Self::Params(_) => MsgType::Params,
            Self::SimBatch { .. } => MsgType::SimBatch,
            Self::DetectReport { .. } => MsgType::DetectReport,
            Self::BasisReveal { .. } => MsgType::BasisReveal,
            Self::Ec(_) => MsgType::EcMsg,
            Self::PaSeed { .. } => MsgType::PaSeed,
            Self::KeyTag { .. } => MsgType::KeyTag,
            Self::Abort { .. } => MsgType::Abort,
        }
    }

    pub fn to_frame(&self) -> Result<Frame> {
        let mut p = Vec::new();
        match self {
            Self::Hello { version, session_id } => {
                p.extend_from_slice(&version.to_le_bytes());
                p.extend_from_slice(session_id);
            }
            Self::Params(n) => {
                let q = &n.params;
                for v in [q.p_z_alice, q.p_z_bob, q.mu1, q.mu2, q.p_mu1, q.clock_rate, q.eps_sec, q.eps_cor] {
                    p.extend_from_slice(&v.to_le_bytes());
                }
                p.extend_from_slice(&n.n_rounds.to_le_bytes());
                p.extend_from_slice(&(n.cascade.block_size_bits as u32).to_le_bytes());
                p.push(n.cascade.passes as u8);
                p.push(n.cascade.verify_tag_bits as u8);
                p.extend_from_slice(&n.q_prior.to_le_bytes());
            }
            Self::SimBatch { start, count, nibbles } => {
                p.extend_from_slice(&start.to_le_bytes());
                p.extend_from_slice(&count.to_le_bytes());
                p.extend_from_slice(nibbles);
            }
            Self::DetectReport { z, x_side, x_central } => {
                for r in [z, x_side, x_central] {
                    if !sorted(r) {
                        return Err(NetError::Malformed("round list not sorted".into()));
                    }
                    put_rounds(&mut p, r);
                }
            }
            Self::BasisReveal { z, x_side, x_central } => {
                for v in [z, x_side, x_central] {
                    put_verdicts(&mut p, v);
                }
            }
            Self::Ec(m) => p = m.encode(),
            Self::PaSeed { seed, m_z, lambda_ec, key_bits } => {
                for v in [*seed, m_z[0], m_z[1], *lambda_ec, *key_bits] {
                    p.extend_from_slice(&v.to_le_bytes());
                }
            }
            Self::KeyTag { tag, key_bits } => {
                p.extend_from_slice(&tag.to_le_bytes());
                p.extend_from_slice(&key_bits.to_le_bytes());
            }
            Self::Abort { reason, detail } => {
                p.push(*reason as u8);
                p.extend_from_slice(detail.as_bytes());
            }
        }
        Ok(Frame::new(self.msg_type(), p))
    }

    pub fn from_frame(f: &Frame) -> Result<Self> {
        let mut r = Reader(&f.payload);
        let m = match f.msg_type {
            MsgType::Hello => {
                let version = r.u16()?;
                let session_id = r.take(8)?.try_into().expect("8 bytes");
                Self::Hello { version, session_id }
            }
            MsgType::Params => {
                let mut v = [0.0; 8];
                for x in &mut v {
                    *x = r.f64()?;
                }
                let params = ProtocolParams {
                    p_z_alice: v[0],
                    p_z_bob: v[1],
                    mu1: v[2],
                    mu2: v[3],
                    p_mu1: v[4],
                    clock_rate: v[5],
                    eps_sec: v[6],
                    eps_cor: v[7],
                };
                let n_rounds = r.u64()?;
                let cascade = CascadeConfig {
                    block_size_bits: r.u32()? as usize,
                    passes: r.u8()? as usize,
                    verify_tag_bits: r.u8()? as usize,
                };
                Self::Params(Negotiated { params, n_rounds, cascade, q_prior: r.f64()? })
            }
            MsgType::SimBatch => {
                let start = r.u64()?;
                let count = r.u32()?;
                let nibbles = r.take((count as usize).div_ceil(2))?.to_vec();
                Self::SimBatch { start, count, nibbles }
            }
            MsgType::DetectReport => Self::DetectReport { z: r.rounds()?, x_side: r.rounds()?, x_central: r.rounds()? },
            MsgType::BasisReveal => Self::BasisReveal { z: r.verdicts()?, x_side: r.verdicts()?, x_central: r.verdicts()? },
            MsgType::EcMsg => {
                let m = EcMessage::decode(&f.payload)?;
                r = Reader(&[]);
                Self::Ec(m)
            }
            MsgType::PaSeed => {
                let seed = r.u64()?;
                let m_z = [r.u64()?, r.u64()?];
                Self::PaSeed { seed, m_z, lambda_ec: r.u64()?, key_bits: r.u64()? }
            }
            MsgType::KeyTag => Self::KeyTag { tag: r.u64()?, key_bits: r.u64()? },
            MsgType::Abort => {
                let code = r.u8()?;
                let reason = AbortReason::from_code(code).ok_or_else(|| NetError::Malformed(format!("abort reason {code}")))?;
                let detail = String::from_utf8_lossy(r.take(r.0.len())?).into_owned();
                Self::Abort { reason, detail }
            }
        };
        r.finish()?;
        Ok(m)
    }
}

use crate::bits::{pack_bytes, unpack_bytes, Bits};
use crate::error::{Error, Result};

/// Reconciliation messages. Ranges are half-open positions in the
/// shuffled order of `pass`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EcMessage {
    ParityRequest { block_id: u32, pass: u8, ranges: Vec<(u32, u32)> },
    ParityReply { block_id: u32, parities: Bits },
    TagRequest { block_id: u32 },
    TagReply { block_id: u32, tag: u64 },
    Done { block_id: u32, verified: bool },
}

const PARITY_REQUEST: u8 = 1;
const PARITY_REPLY: u8 = 2;
const TAG_REQUEST: u8 = 3;
const TAG_REPLY: u8 = 4;
const DONE: u8 = 5;

struct Reader<'a> {
    b: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.b.len() < n {
            return Err(Error::Malformed("truncated reconciliation message".into()));
        }
        let (h, t) = self.b.split_at(n);
        self.b = t;
        Ok(h)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

impl EcMessage {
    pub fn block_id(&self) -> u32 {
        match self {
            Self::ParityRequest { block_id, .. }
            | Self::ParityReply { block_id, .. }
            | Self::TagRequest { block_id }
            | Self::TagReply { block_id, .. }
            | Self::Done { block_id, .. } => *block_id,
        }
    }

    /// Little-endian layout: kind byte, block id, then the variant body.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        let kind = match self {
            Self::ParityRequest { .. } => PARITY_REQUEST,
            Self::ParityReply { .. } => PARITY_REPLY,
            Self::TagRequest { .. } => TAG_REQUEST,
            Self::TagReply { .. } => TAG_REPLY,
            Self::Done { .. } => DONE,
        };
        out.push(kind);
        out.extend_from_slice(&self.block_id().to_le_bytes());
        match self {
            Self::ParityRequest { pass, ranges, .. } => {
                out.push(*pass);
                out.extend_from_slice(&(ranges.len() as u32).to_le_bytes());
                for (lo, hi) in ranges {
                    out.extend_from_slice(&lo.to_le_bytes());
                    out.extend_from_slice(&hi.to_le_bytes());
                }
            }
            Self::ParityReply { parities, .. } => {
                out.extend_from_slice(&(parities.len() as u32).to_le_bytes());
                out.extend_from_slice(&pack_bytes(parities));
            }
            Self::TagRequest { .. } => {}
            Self::TagReply { tag, .. } => out.extend_from_slice(&tag.to_le_bytes()),
            Self::Done { verified, .. } => out.push(u8::from(*verified)),
        }
        out
    }

    pub fn decode(b: &[u8]) -> Result<Self> {
        let mut r = Reader { b };
        let kind = r.u8()?;
        let block_id = r.u32()?;
        let msg = match kind {
            PARITY_REQUEST => {
                let pass = r.u8()?;
                let n = r.u32()? as usize;
                if r.b.len() != n * 8 {
                    return Err(Error::Malformed("parity request length mismatch".into()));
                }
                let ranges = (0..n).map(|_| Ok((r.u32()?, r.u32()?))).collect::<Result<_>>()?;
                Self::ParityRequest { block_id, pass, ranges }
            }
            PARITY_REPLY => {
                let n = r.u32()? as usize;
                let body = r.take(n.div_ceil(8))?;
                Self::ParityReply { block_id, parities: unpack_bytes(body, n) }
            }
            TAG_REQUEST => Self::TagRequest { block_id },
            TAG_REPLY => Self::TagReply { block_id, tag: r.u64()? },
            DONE => Self::Done { block_id, verified: r.u8()? != 0 },
            k => return Err(Error::Malformed(format!("unknown reconciliation message kind {k}"))),
        };
        if !r.b.is_empty() {
            return Err(Error::Malformed("trailing bytes in reconciliation message".into()));
        }
        Ok(msg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bits::bits_from_str;

    #[test]
    fn round_trip() {
        let msgs = [
            EcMessage::ParityRequest { block_id: 7, pass: 2, ranges: vec![(0, 24), (48, 60)] },
            EcMessage::ParityReply { block_id: 7, parities: bits_from_str("1100101") },
            EcMessage::TagRequest { block_id: 1 },
            EcMessage::TagReply { block_id: 1, tag: 0xdead_beef_0123_4567 },
            EcMessage::Done { block_id: 1, verified: true },
        ];
        for m in msgs {
            assert_eq!(EcMessage::decode(&m.encode()).unwrap(), m);
        }
        let enc = EcMessage::ParityRequest { block_id: 7, pass: 2, ranges: vec![(1, 2)] }.encode();
        assert_eq!(enc, [1, 7, 0, 0, 0, 2, 1, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0]);
        assert!(EcMessage::decode(&enc[..enc.len() - 1]).is_err());
        assert!(EcMessage::decode(&[9, 0, 0, 0, 0]).is_err());
    }
}

//! Wire framing: a big-endian `u32` payload length, a one-byte message
//! type, then the payload.

use std::io::{Read, Write};

use crate::error::{NetError, Result};

pub const MAX_PAYLOAD: u32 = 16 << 20;
pub const HEADER_LEN: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum MsgType {
    Hello = 0x01,
    Params = 0x02,
    SimBatch = 0x03,
    DetectReport = 0x04,
    BasisReveal = 0x05,
    EcMsg = 0x06,
    PaSeed = 0x07,
    KeyTag = 0x08,
    Abort = 0x09,
}

impl MsgType {
    pub const ALL: [MsgType; 9] = [
        Self::Hello,
        Self::Params,
        Self::SimBatch,
        Self::DetectReport,
        Self::BasisReveal,
        Self::EcMsg,
        Self::PaSeed,
        Self::KeyTag,
        Self::Abort,
    ];

    pub fn from_code(c: u8) -> Result<Self> {
        Self::ALL.into_iter().find(|t| *t as u8 == c).ok_or(NetError::UnknownType(c))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub msg_type: MsgType,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn new(msg_type: MsgType, payload: Vec<u8>) -> Self {
        Self { msg_type, payload }
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let len = u32::try_from(self.payload.len()).map_err(|_| NetError::Oversize(u32::MAX))?;
        if len > MAX_PAYLOAD {
            return Err(NetError::Oversize(len));
        }
        let mut out = Vec::with_capacity(HEADER_LEN + self.payload.len());
        out.extend_from_slice(&len.to_be_bytes());
        out.push(self.msg_type as u8);
        out.extend_from_slice(&self.payload);
        Ok(out)
    }

    fn check_header(h: &[u8; HEADER_LEN]) -> Result<(u32, MsgType)> {
        let len = u32::from_be_bytes([h[0], h[1], h[2], h[3]]);
        if len > MAX_PAYLOAD {
            return Err(NetError::Oversize(len));
        }
        Ok((len, MsgType::from_code(h[4])?))
    }

    /// Decodes one frame from the front of `b`, returning it and the bytes consumed.
    pub fn decode(b: &[u8]) -> Result<(Self, usize)> {
        let h: &[u8; HEADER_LEN] =
            b.get(..HEADER_LEN).and_then(|h| h.try_into().ok()).ok_or_else(|| NetError::Malformed("truncated header".into()))?;
        let (len, msg_type) = Self::check_header(h)?;
        let end = HEADER_LEN + len as usize;
        let payload = b.get(HEADER_LEN..end).ok_or_else(|| NetError::Malformed("truncated payload".into()))?;
        Ok((Self { msg_type, payload: payload.to_vec() }, end))
    }

    /// Splits a captured byte stream into frames.
    pub fn decode_stream(mut b: &[u8]) -> Result<Vec<Self>> {
        let mut out = Vec::new();
        while !b.is_empty() {
            let (f, n) = Self::decode(b)?;
            out.push(f);
            b = &b[n..];
        }
        Ok(out)
    }
}

/// Writes one frame with a single `write_all`.
pub fn write_frame<W: Write + ?Sized>(w: &mut W, frame: &Frame) -> Result<()> {
    w.write_all(&frame.encode()?)?;
    w.flush()?;
    Ok(())
}

/// Reads one frame; the length is checked before the payload is allocated.
pub fn read_frame<R: Read + ?Sized>(r: &mut R) -> Result<Frame> {
    let mut h = [0u8; HEADER_LEN];
    r.read_exact(&mut h)?;
    let (len, msg_type) = Frame::check_header(&h)?;
    let mut payload = vec![0u8; len as usize];
    r.read_exact(&mut payload)?;
    Ok(Frame { msg_type, payload })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_hello_is_five_bytes() {
        let f = Frame::new(MsgType::Hello, Vec::new());
        let b = f.encode().unwrap();
        assert_eq!(b, [0, 0, 0, 0, 1]);
        assert_eq!(Frame::decode(&b).unwrap(), (f, 5));
    }

    #[test]
    fn rejects_oversize_and_unknown_types() {
        let b = [0xff, 0xff, 0xff, 0xff, 1];
        assert!(matches!(Frame::decode(&b), Err(NetError::Oversize(u32::MAX))));
        assert!(matches!(read_frame(&mut &b[..]), Err(NetError::Oversize(u32::MAX))));
        assert!(matches!(Frame::decode(&[0, 0, 0, 0, 0x42]), Err(NetError::UnknownType(0x42))));
        assert!(matches!(Frame::decode(&[0, 0, 0, 3, 1, 9]), Err(NetError::Malformed(_))));
    }

    proptest! {
        #[test]
        fn codec_round_trips(payload in proptest::collection::vec(any::<u8>(), 0..1024), t in 0usize..9) {
            let f = Frame::new(MsgType::ALL[t], payload);
            let b = f.encode().unwrap();
            prop_assert_eq!(Frame::decode(&b).unwrap(), (f.clone(), b.len()));
            prop_assert_eq!(read_frame(&mut &b[..]).unwrap(), f);
        }
    }
}

//! Binary secret-key files: a 32-byte header followed by the key bits
//! packed LSB-first.
//!
//! | offset | size | field                         |
//! |--------|------|-------------------------------|
//! | 0      | 8    | magic `TBQKDSK\0`             |
//! | 8      | 2    | format version, little endian |
//! | 10     | 2    | flags (zero)                  |
//! | 12     | 4    | reserved (zero)               |
//! | 16     | 8    | key length in bits, LE        |
//! | 24     | 8    | session id                    |

use std::io::{Read, Write};
use std::path::Path;

use crate::bits::{pack_bytes, unpack_bytes, BitSlice64, Bits};
use crate::error::{Error, Result};

pub const MAGIC: [u8; 8] = *b"TBQKDSK\0";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyFile {
    pub session_id: [u8; 8],
    pub key: Bits,
}

impl KeyFile {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.key.len().div_ceil(8));
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&0u16.to_le_bytes());
        out.extend_from_slice(&0u32.to_le_bytes());
        out.extend_from_slice(&(self.key.len() as u64).to_le_bytes());
        out.extend_from_slice(&self.session_id);
        out.extend_from_slice(&pack_bytes(&self.key));
        out
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self> {
        if b.len() < HEADER_LEN || b[..8] != MAGIC {
            return Err(Error::Malformed("not a key file".into()));
        }
        let version = u16::from_le_bytes([b[8], b[9]]);
        if version != VERSION {
            return Err(Error::Malformed(format!("unsupported key file version {version}")));
        }
        let bits = u64::from_le_bytes(b[16..24].try_into().expect("8 bytes")) as usize;
        let body = &b[HEADER_LEN..];
        if body.len() != bits.div_ceil(8) {
            return Err(Error::Malformed(format!("key body holds {} bytes for {bits} bits", body.len())));
        }
        let session_id = b[24..32].try_into().expect("8 bytes");
        Ok(Self { session_id, key: unpack_bytes(body, bits) })
    }
}

pub fn write_key_file(path: &Path, key: &BitSlice64, session_id: [u8; 8]) -> Result<()> {
    let kf = KeyFile { session_id, key: key.to_bitvec() };
    let mut f = std::fs::File::create(path)?;
    f.write_all(&kf.to_bytes())?;
    f.sync_all()?;
    Ok(())
}

pub fn read_key_file(path: &Path) -> Result<KeyFile> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    KeyFile::from_bytes(&buf)
}

use thiserror::Error;

use crate::session::Phase;

pub type Result<T, E = NetError> = std::result::Result<T, E>;

/// Reason codes carried by ABORT frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum AbortReason {
    ParamMismatch = 1,
    SessionMismatch = 2,
    Protocol = 3,
    Verification = 4,
    Transport = 5,
    Internal = 6,
}

impl AbortReason {
    pub fn from_code(c: u8) -> Option<Self> {
        Some(match c {
            1 => Self::ParamMismatch,
            2 => Self::SessionMismatch,
            3 => Self::Protocol,
            4 => Self::Verification,
            5 => Self::Transport,
            6 => Self::Internal,
            _ => return None,
        })
    }
}

#[derive(Debug, Error)]
pub enum NetError {
    #[error("transport failure: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed frame: {0}")]
    Malformed(String),

    #[error("frame payload of {0} bytes exceeds the 16 MiB limit")]
    Oversize(u32),

    #[error("unknown message type {0:#04x}")]
    UnknownType(u8),

    #[error(transparent)]
    Core(#[from] tbqkd_core::Error),

    /// This peer aborted the session.
    #[error("session aborted in {phase:?}: {reason:?} ({detail})")]
    Aborted { phase: Phase, reason: AbortReason, detail: String },

    /// The other peer sent an ABORT frame.
    #[error("peer aborted the session in {phase:?}: {reason:?} ({detail})")]
    PeerAborted { phase: Phase, reason: AbortReason, detail: String },
}

impl NetError {
    pub fn is_abort(&self) -> bool {
        matches!(self, Self::Aborted { .. } | Self::PeerAborted { .. })
    }

    /// Phase in which the session was aborted.
    pub fn phase(&self) -> Option<Phase> {
        match self {
            Self::Aborted { phase, .. } | Self::PeerAborted { phase, .. } => Some(*phase),
            _ => None,
        }
    }
}

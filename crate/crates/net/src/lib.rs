//! Two-party session layer: length-prefixed framing, transports, and the
//! Alice and Bob state machines.

pub mod audit;
pub mod error;
pub mod frame;
pub mod messages;
pub mod session;
pub mod transport;

pub use error::{AbortReason, NetError, Result};
pub use frame::{Frame, MsgType};
pub use messages::{Message, Negotiated};
pub use session::{run_session, Phase, SessionConfig, SessionRecord};
pub use tbqkd_core::cascade::Role;
pub use transport::{loopback_pair, tcp_accept, tcp_connect, LoopbackEnd, Wire};

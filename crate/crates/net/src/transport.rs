//! Byte-stream transports: an in-process loopback pipe with a wire tap and
//! fault injection, and TCP helpers.

use std::collections::VecDeque;
use std::io::{self, Read, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::sync::mpsc::{channel, Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use crate::frame::{MsgType, HEADER_LEN};

#[derive(Default)]
struct WireState {
    severed: bool,
    /// Bytes written by the first and second end.
    captured: [Vec<u8>; 2],
    /// Sever before the `n`-th frame (zero based) of this type is delivered.
    trip: Option<(MsgType, usize)>,
    seen: usize,
}

type Senders = [Option<Sender<Vec<u8>>>; 2];

/// Shared control and capture of a loopback pipe.
#[derive(Clone)]
pub struct Wire {
    state: Arc<Mutex<WireState>>,
    senders: Arc<Mutex<Senders>>,
}

impl Wire {
    /// Closes both directions; blocked readers fail.
    pub fn sever(&self) {
        self.state.lock().expect("wire lock").severed = true;
        *self.senders.lock().expect("wire lock") = [None, None];
    }

    /// Severs the pipe when the `nth` frame of type `t` is about to be written.
    pub fn sever_on(&self, t: MsgType, nth: usize) {
        self.state.lock().expect("wire lock").trip = Some((t, nth));
    }

    pub fn is_severed(&self) -> bool {
        self.state.lock().expect("wire lock").severed
    }

    /// Everything the given end has written so far.
    pub fn captured(&self, end: usize) -> Vec<u8> {
        self.state.lock().expect("wire lock").captured[end].clone()
    }
}

pub struct LoopbackEnd {
    index: usize,
    wire: Wire,
    rx: Receiver<Vec<u8>>,
    buf: VecDeque<u8>,
    timeout: Duration,
}

/// Two connected ends; end 0 is conventionally Alice.
pub fn loopback_pair() -> (LoopbackEnd, LoopbackEnd, Wire) {
    let (tx0, rx1) = channel();
    let (tx1, rx0) = channel();
    let wire = Wire { state: Arc::default(), senders: Arc::new(Mutex::new([Some(tx0), Some(tx1)])) };
    let end = |index, rx| LoopbackEnd { index, wire: wire.clone(), rx, buf: VecDeque::new(), timeout: Duration::from_secs(60) };
    (end(0, rx0), end(1, rx1), wire)
}

fn broken() -> io::Error {
    io::Error::new(io::ErrorKind::BrokenPipe, "loopback severed")
}

impl LoopbackEnd {
    pub fn set_timeout(&mut self, t: Duration) {
        self.timeout = t;
    }
}

impl Write for LoopbackEnd {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        {
            let mut s = self.wire.state.lock().expect("wire lock");
            if s.severed {
                return Err(broken());
            }
            if let (Some((t, nth)), true) = (s.trip, buf.len() >= HEADER_LEN) {
                if buf[4] == t as u8 {
                    if s.seen == nth {
                        drop(s);
                        self.wire.sever();
                        return Err(broken());
                    }
                    s.seen += 1;
                }
            }
            s.captured[self.index].extend_from_slice(buf);
        }
        let tx = self.wire.senders.lock().expect("wire lock")[self.index].clone();
        tx.ok_or_else(broken)?.send(buf.to_vec()).map_err(|_| broken())?;
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

impl Read for LoopbackEnd {
    fn read(&mut self, out: &mut [u8]) -> io::Result<usize> {
        if self.buf.is_empty() {
            match self.rx.recv_timeout(self.timeout) {
                Ok(chunk) => self.buf.extend(chunk),
                Err(RecvTimeoutError::Disconnected) => return Err(broken()),
                Err(RecvTimeoutError::Timeout) => return Err(io::Error::new(io::ErrorKind::TimedOut, "loopback read timed out")),
            }
        }
        let n = out.len().min(self.buf.len());
        for (o, b) in out.iter_mut().zip(self.buf.drain(..n)) {
            *o = b;
        }
        Ok(n)
    }
}

/// Accepts a single peer on `addr`.
pub fn tcp_accept<A: ToSocketAddrs>(addr: A) -> io::Result<TcpStream> {
    let listener = TcpListener::bind(addr)?;
    let (s, _) = listener.accept()?;
    s.set_nodelay(true)?;
    Ok(s)
}

/// Connects to `addr`, retrying while the listener comes up.
pub fn tcp_connect<A: ToSocketAddrs + Clone>(addr: A, attempts: u32) -> io::Result<TcpStream> {
    let mut last = io::Error::new(io::ErrorKind::NotConnected, "no connection attempt made");
    for _ in 0..attempts.max(1) {
        match TcpStream::connect(addr.clone()) {
            Ok(s) => {
                s.set_nodelay(true)?;
                return Ok(s);
            }
            Err(e) => {
                last = e;
                std::thread::sleep(Duration::from_millis(100));
            }
        }
    }
    Err(last)
}

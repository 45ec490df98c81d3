//! UDP broadcast back-end.

use std::collections::VecDeque;
use std::io;
use std::net::{Ipv4Addr, SocketAddr, SocketAddrV4, UdpSocket};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use rand::Rng;
use socket2::{Domain, Protocol, Socket, Type};
use thiserror::Error;

use crate::codec::UDP_MAX_MESSAGE;
use crate::util::now_millis;

pub const DEFAULT_PORT: u16 = 5088;
pub const MAX_REPEATS: u8 = 8;
const READ_TIMEOUT: Duration = Duration::from_millis(100);
// How long a sent datagram is remembered for echo suppression.
const ECHO_MEMORY: Duration = Duration::from_secs(2);

#[derive(Debug, Error)]
pub enum UdpError {
    #[error("oversize message ({len} > {UDP_MAX_MESSAGE} bytes)")]
    Oversize { len: usize },
    #[error("repeats must be 1..={MAX_REPEATS}, got {0}")]
    BadRepeats(u8),
    #[error("socket: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UdpConfig {
    pub port: u16,
    pub broadcast_address: Ipv4Addr,
    pub repeats: u8,
    pub node_id: String,
}

impl Default for UdpConfig {
    fn default() -> Self {
        UdpConfig {
            port: DEFAULT_PORT,
            broadcast_address: Ipv4Addr::BROADCAST,
            repeats: 1,
            node_id: "node".into(),
        }
    }
}

impl UdpConfig {
    pub fn validate(&self) -> Result<(), UdpError> {
        if !(1..=MAX_REPEATS).contains(&self.repeats) {
            return Err(UdpError::BadRepeats(self.repeats));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SendReport {
    pub written: usize,
    /// Pauses inserted between repeats, in ms.
    pub gaps_ms: Vec<u64>,
}

/// A datagram as handed to the receive hook.
#[derive(Debug, Clone, PartialEq)]
pub struct Datagram {
    pub bytes: Vec<u8>,
    pub sender: String,
    pub rssi: f64,
    pub received_at: u64,
}

pub type ReceiveHook = Box<dyn FnMut(Datagram) + Send>;

#[derive(Default)]
struct SentLog(VecDeque<(Instant, Vec<u8>)>);

impl SentLog {
    fn remember(&mut self, bytes: &[u8]) {
        let now = Instant::now();
        self.0.retain(|(t, _)| now.duration_since(*t) < ECHO_MEMORY);
        self.0.push_back((now, bytes.to_vec()));
    }

    fn contains(&mut self, bytes: &[u8]) -> bool {
        let now = Instant::now();
        self.0.retain(|(t, _)| now.duration_since(*t) < ECHO_MEMORY);
        self.0.iter().any(|(_, b)| b == bytes)
    }
}

/// Open sockets for one node. Receiving starts with [`UdpTransport::subscribe`].
pub struct UdpTransport {
    cfg: UdpConfig,
    send: UdpSocket,
    recv: Option<UdpSocket>,
    sent: Arc<Mutex<SentLog>>,
    stop: Arc<AtomicBool>,
    worker: Option<JoinHandle<()>>,
}

impl UdpTransport {
    pub fn start(cfg: UdpConfig) -> Result<Self, UdpError> {
        cfg.validate()?;
        let sock = Socket::new(Domain::IPV4, Type::DGRAM, Some(Protocol::UDP))?;
        sock.set_reuse_address(true)?;
        #[cfg(unix)]
        sock.set_reuse_port(true)?;
        sock.set_broadcast(true)?;
        sock.bind(&SocketAddrV4::new(Ipv4Addr::UNSPECIFIED, cfg.port).into())?;
        let recv: UdpSocket = sock.into();
        recv.set_read_timeout(Some(READ_TIMEOUT))?;
        let send = UdpSocket::bind(SocketAddrV4::new(Ipv4Addr::UNSPECIFIED, 0))?;
        send.set_broadcast(true)?;
        Ok(UdpTransport {
            cfg,
            send,
            recv: Some(recv),
            sent: Arc::new(Mutex::new(SentLog::default())),
            stop: Arc::new(AtomicBool::new(false)),
            worker: None,
        })
    }

    pub fn config(&self) -> &UdpConfig {
        &self.cfg
    }

    pub fn local_send_port(&self) -> Result<u16, UdpError> {
        Ok(self.send.local_addr()?.port())
    }

    /// Broadcasts `b` `repeats` times with random 1..=10 ms gaps.
    pub fn send(&self, b: &[u8]) -> Result<SendReport, UdpError> {
        if b.len() > UDP_MAX_MESSAGE {
            return Err(UdpError::Oversize { len: b.len() });
        }
        self.sent
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .remember(b);
        let target = SocketAddrV4::new(self.cfg.broadcast_address, self.cfg.port);
        let mut rng = rand::rng();
        let mut report = SendReport {
            written: 0,
            gaps_ms: Vec::new(),
        };
        for i in 0..self.cfg.repeats {
            if i > 0 {
                let gap = rng.random_range(1..=10u64);
                thread::sleep(Duration::from_millis(gap));
                report.gaps_ms.push(gap);
            }
            self.send.send_to(b, target)?;
            report.written += 1;
        }
        Ok(report)
    }

    /// Starts the receive loop. Own datagrams are dropped before `hook`.
    pub fn subscribe(&mut self, mut hook: ReceiveHook) -> Result<(), UdpError> {
        let Some(sock) = self.recv.take() else {
            return Err(UdpError::Io(io::Error::other("already subscribed")));
        };
        let own_port = self.local_send_port()?;
        let sent = self.sent.clone();
        let stop = self.stop.clone();
        let worker = thread::Builder::new()
            .name(format!("udp-recv-{}", self.cfg.node_id))
            .spawn(move || {
                let mut buf = [0u8; 2048];
                while !stop.load(Ordering::Relaxed) {
                    let (n, from) = match sock.recv_from(&mut buf) {
                        Ok(x) => x,
                        Err(e)
                            if matches!(
                                e.kind(),
                                io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut
                            ) =>
                        {
                            continue
                        }
                        Err(e) => {
                            log::warn!("udp receive: {e}");
                            continue;
                        }
                    };
                    let bytes = &buf[..n];
                    if is_own(from, own_port)
                        && sent
                            .lock()
                            .unwrap_or_else(|e| e.into_inner())
                            .contains(bytes)
                    {
                        continue;
                    }
                    hook(Datagram {
                        bytes: bytes.to_vec(),
                        sender: from.to_string(),
                        rssi: 0.0,
                        received_at: now_millis(),
                    });
                }
            })?;
        self.worker = Some(worker);
        Ok(())
    }

    pub fn shutdown(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

fn is_own(from: SocketAddr, own_port: u16) -> bool {
    from.port() == own_port
}

impl Drop for UdpTransport {
    fn drop(&mut self) {
        self.shutdown();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn repeats_bounds() {
        for bad in [0, 9] {
            let cfg = UdpConfig {
                repeats: bad,
                ..UdpConfig::default()
            };
            assert!(matches!(cfg.validate(), Err(UdpError::BadRepeats(_))));
        }
        assert!(UdpConfig::default().validate().is_ok());
    }

    #[test]
    fn sent_log_forgets_nothing_recent() {
        let mut log = SentLog::default();
        log.remember(b"abc");
        assert!(log.contains(b"abc"));
        assert!(!log.contains(b"abd"));
    }
}

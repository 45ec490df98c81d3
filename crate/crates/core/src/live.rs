//! A [`Node`] driven by the wall clock over the UDP back-end.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Sender};
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use crate::codec::Tuple;
use crate::node::{Node, NodeError};
use crate::space::Pattern;
use crate::udp::{Datagram, UdpConfig, UdpError, UdpTransport};
use crate::util::now_millis;

/// Space bound to the UDP back-end.
pub const UDP_SPACE: &str = "udp";
const TICK: Duration = Duration::from_millis(5);

#[derive(Debug, thiserror::Error)]
pub enum LiveError {
    #[error(transparent)]
    Udp(#[from] UdpError),
    #[error(transparent)]
    Node(#[from] NodeError),
}

pub struct LiveNode {
    node: Arc<Mutex<Node>>,
    outgoing: Sender<Vec<u8>>,
    transport: Arc<Mutex<UdpTransport>>,
    stop: Arc<AtomicBool>,
    threads: Vec<JoinHandle<()>>,
}

fn lock(node: &Mutex<Node>) -> MutexGuard<'_, Node> {
    node.lock().unwrap_or_else(|e| e.into_inner())
}

fn flush(node: &mut Node, tx: &Sender<Vec<u8>>, now: u64) {
    loop {
        let out = node.poll_outgoing(now);
        if out.is_empty() {
            break;
        }
        for (space, bytes) in out {
            if space == UDP_SPACE {
                let _ = tx.send(bytes);
            }
        }
    }
}

impl LiveNode {
    /// `node` must already have a space named [`UDP_SPACE`].
    pub fn start(node: Node, cfg: UdpConfig) -> Result<Self, LiveError> {
        node.space(UDP_SPACE)?;
        let node = Arc::new(Mutex::new(node));
        let mut transport = UdpTransport::start(cfg)?;
        let (tx, rx) = mpsc::channel::<Vec<u8>>();
        let stop = Arc::new(AtomicBool::new(false));

        let hook_node = node.clone();
        let hook_tx = tx.clone();
        transport.subscribe(Box::new(move |d: Datagram| {
            let mut n = lock(&hook_node);
            if let Err(e) = n.receive(UDP_SPACE, &d.bytes, &d.sender, d.rssi, d.received_at) {
                log::debug!("dropped datagram from {}: {e}", d.sender);
            }
            flush(&mut n, &hook_tx, now_millis());
        }))?;
        let transport = Arc::new(Mutex::new(transport));

        let send_transport = transport.clone();
        let sender = thread::Builder::new()
            .name("udp-send".into())
            .spawn(move || {
                for bytes in rx {
                    let t = send_transport.lock().unwrap_or_else(|e| e.into_inner());
                    if let Err(e) = t.send(&bytes) {
                        log::warn!("udp send: {e}");
                    }
                }
            })
            .map_err(UdpError::from)?;

        let tick_node = node.clone();
        let tick_tx = tx.clone();
        let tick_stop = stop.clone();
        let ticker = thread::Builder::new()
            .name("node-tick".into())
            .spawn(move || {
                while !tick_stop.load(Ordering::Relaxed) {
                    {
                        let now = now_millis();
                        let mut n = lock(&tick_node);
                        n.tick(now);
                        flush(&mut n, &tick_tx, now);
                    }
                    thread::sleep(TICK);
                }
            })
            .map_err(UdpError::from)?;

        Ok(LiveNode {
            node,
            outgoing: tx,
            transport,
            stop,
            threads: vec![sender, ticker],
        })
    }

    /// Runs `f` with the node locked, then sends whatever it queued.
    pub fn with_node<R>(&self, f: impl FnOnce(&mut Node, u64) -> R) -> R {
        let now = now_millis();
        let mut n = lock(&self.node);
        let r = f(&mut n, now);
        flush(&mut n, &self.outgoing, now);
        r
    }

    pub fn out(&self, t: Tuple) -> Result<(), LiveError> {
        Ok(self.with_node(|n, now| n.out(UDP_SPACE, t, now))?)
    }

    fn blocking(
        &self,
        timeout_ms: u64,
        submit: impl FnOnce(&mut Node, crate::rpc::Deliver, u64) -> Result<(), NodeError>,
    ) -> Result<Option<Tuple>, LiveError> {
        let (tx, rx) = mpsc::channel();
        let deliver: crate::rpc::Deliver = Box::new(move |t, _| {
            let _ = tx.send(t);
        });
        self.with_node(|n, now| submit(n, deliver, now))?;
        // the ticker fires the timeout; the extra margin only guards a stalled ticker
        Ok(rx
            .recv_timeout(Duration::from_millis(timeout_ms + 500))
            .ok()
            .flatten())
    }

    /// Remote RD; blocks until a reply or `timeout_ms`.
    pub fn rd(&self, p: Pattern, timeout_ms: u64) -> Result<Option<Tuple>, LiveError> {
        self.blocking(timeout_ms, |n, d, now| {
            n.rd(UDP_SPACE, p, Some(timeout_ms), d, now).map(|_| ())
        })
    }

    /// Remote INP; blocks until a reply or `timeout_ms`.
    pub fn inp(&self, p: Pattern, timeout_ms: u64) -> Result<Option<Tuple>, LiveError> {
        self.blocking(timeout_ms, |n, d, now| {
            n.inp(UDP_SPACE, p, Some(timeout_ms), d, now).map(|_| ())
        })
    }

    pub fn local_send_port(&self) -> Result<u16, LiveError> {
        Ok(self
            .transport
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .local_send_port()?)
    }

    pub fn shutdown(mut self) {
        self.stop_threads();
    }

    fn stop_threads(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        self.transport
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .shutdown();
        // the sender thread ends once every channel handle is gone
        let (dead, _) = mpsc::channel();
        self.outgoing = dead;
        for t in self.threads.drain(..) {
            if t.thread().name() == Some("node-tick") {
                let _ = t.join();
            }
        }
    }
}

impl Drop for LiveNode {
    fn drop(&mut self) {
        self.stop_threads();
    }
}

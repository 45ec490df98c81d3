//! Request layer over an unreliable broadcast medium.
//!
//! One [`Rpc`] serves one tuple space attached to one back-end. It turns
//! tuple operations into encoded (and optionally encrypted) messages, queues
//! them under the back-end's rate limit, suppresses repeated copies of the
//! same message, answers remote RD/INP/TEST against the local store and
//! resolves its own pending requests on reply or timeout.
//!
//! Nothing here assumes a message arrives. Every pending request resolves
//! exactly once, either with a reply or with `(None, None)` on timeout.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use thiserror::Error;

use crate::codec::{
    decode_message, encode_message, CodecError, Opcode, Tuple, Value, WireMessage,
    BLE_MAX_MESSAGE, UDP_MAX_MESSAGE,
};
use crate::fpe::FpeTables;
use crate::space::{Lifetime, Millis, Origin, Pattern, TupleSpace};
use crate::util::fnv1a;

pub const DEFAULT_REQUEST_TIMEOUT_MS: u64 = 2000;
pub const DEFAULT_REMOTE_LIFETIME_MS: u64 = 60_000;
pub const SEND_QUEUE_CAPACITY: usize = 64;
pub const DEDUP_CAPACITY: usize = 8;
pub const DEDUP_WINDOW_MS: u64 = 10_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RpcError {
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("send queue full")]
    QueueFull,
    #[error("{0} requires a reply callback")]
    MissingCallback(Opcode),
}

/// A decoded message plus what the receiving back-end knows about it.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceiveEnvelope {
    pub message: WireMessage,
    /// MAC-like identifier of the sender.
    pub sender: String,
    pub received_at: Millis,
    /// Signal strength in dBm, 0 when unknown (wired transports).
    pub rssi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RequestId(pub u64);

impl fmt::Display for RequestId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ListenerId(pub u64);

pub type Deliver = Box<dyn FnOnce(Option<Tuple>, Option<ReceiveEnvelope>) + Send>;
/// Returns `true` to consume the tuple.
pub type ListenFn = Box<dyn FnMut(&Tuple, &ReceiveEnvelope) -> bool + Send>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RequestKind {
    Rd,
    Inp,
    Test,
}

struct PendingRequest {
    id: RequestId,
    kind: RequestKind,
    pattern: Pattern,
    deadline: Millis,
    deliver: Deliver,
}

/// Recently seen messages per sender.
///
/// The sequence number is only two bits wide and wraps every four messages,
/// so an entry is keyed by sequence number and a fingerprint of the message
/// body. Repeats of one message are byte-identical and collapse; a later
/// message reusing the same sequence number does not.
#[derive(Debug, Clone, Default)]
pub struct DedupState {
    senders: BTreeMap<String, VecDeque<DedupEntry>>,
}

#[derive(Debug, Clone, Copy)]
struct DedupEntry {
    seq: u8,
    fingerprint: u64,
    first_seen: Millis,
}

impl DedupState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns `true` if this (sender, seq, body) was seen in the last 10 s,
    /// otherwise records it.
    pub fn check_duplicate(&mut self, sender: &str, seq: u8, body: &[u8], now: Millis) -> bool {
        let fingerprint = fnv1a(body);
        let ring = self.senders.entry(sender.to_string()).or_default();
        ring.retain(|e| now.saturating_sub(e.first_seen) <= DEDUP_WINDOW_MS);
        if ring
            .iter()
            .any(|e| e.seq == seq && e.fingerprint == fingerprint)
        {
            return true;
        }
        if ring.len() == DEDUP_CAPACITY {
            ring.pop_front();
        }
        ring.push_back(DedupEntry {
            seq,
            fingerprint,
            first_seen: now,
        });
        false
    }

    pub fn entries(&self, sender: &str) -> usize {
        self.senders.get(sender).map_or(0, VecDeque::len)
    }

    /// Forgets senders whose entries have all aged out.
    pub fn prune(&mut self, now: Millis) {
        self.senders.retain(|_, ring| {
            ring.retain(|e| now.saturating_sub(e.first_seen) <= DEDUP_WINDOW_MS);
            !ring.is_empty()
        });
    }
}

/// Decides whether an incoming tuple is consumed before the default
/// handling (storage for OUT) runs. Agents and routers sit behind this.
pub trait InboundFilter {
    fn offer(&mut self, space: &str, env: &ReceiveEnvelope) -> bool;
}

/// Consumes nothing.
pub struct NoFilter;

impl InboundFilter for NoFilter {
    fn offer(&mut self, _: &str, _: &ReceiveEnvelope) -> bool {
        false
    }
}

impl<F: FnMut(&str, &ReceiveEnvelope) -> bool> InboundFilter for F {
    fn offer(&mut self, space: &str, env: &ReceiveEnvelope) -> bool {
        self(space, env)
    }
}

/// What `handle_incoming` did with a message.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Effect {
    Duplicate,
    Stored,
    Consumed,
    Replied,
    NoMatch,
    Completed(RequestId),
    Listened,
    Ignored,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RpcStats {
    pub submitted: u64,
    pub sent: u64,
    pub received: u64,
    pub duplicates: u64,
    pub decode_errors: u64,
    pub stored: u64,
    pub consumed: u64,
    pub replies: u64,
    pub dropped_replies: u64,
    pub completed: u64,
    pub timeouts: u64,
    pub ignored: u64,
}

#[derive(Debug, Clone)]
pub struct RpcConfig {
    /// Space name, e.g. `"ble"` or `"udp"`.
    pub space: String,
    /// Identifier announced in IAMHERE replies.
    pub node_name: String,
    pub max_message_len: usize,
    /// Minimum gap between two messages handed to the back-end.
    pub send_spacing_ms: u64,
    pub request_timeout_ms: u64,
    /// Lifetime given to tuples stored from a remote OUT.
    pub remote_lifetime: Lifetime,
    pub queue_capacity: usize,
}

impl RpcConfig {
    pub fn udp(space: impl Into<String>, node_name: impl Into<String>) -> Self {
        RpcConfig {
            space: space.into(),
            node_name: node_name.into(),
            max_message_len: UDP_MAX_MESSAGE,
            send_spacing_ms: 0,
            request_timeout_ms: DEFAULT_REQUEST_TIMEOUT_MS,
            remote_lifetime: Lifetime::Millis(DEFAULT_REMOTE_LIFETIME_MS),
            queue_capacity: SEND_QUEUE_CAPACITY,
        }
    }

    /// BLE space: 32-byte messages, one distinct message per `t_adv_ms`.
    pub fn ble(space: impl Into<String>, node_name: impl Into<String>, t_adv_ms: u64) -> Self {
        RpcConfig {
            max_message_len: BLE_MAX_MESSAGE,
            send_spacing_ms: t_adv_ms,
            ..RpcConfig::udp(space, node_name)
        }
    }
}

pub struct Rpc {
    cfg: RpcConfig,
    store: TupleSpace,
    tables: Option<FpeTables>,
    next_seq: u8,
    dedup: DedupState,
    pending: Vec<PendingRequest>,
    listeners: Vec<(ListenerId, Pattern, ListenFn)>,
    outbox: VecDeque<Vec<u8>>,
    last_send: Option<Millis>,
    next_id: u64,
    stats: RpcStats,
}

impl fmt::Debug for Rpc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Rpc")
            .field("space", &self.cfg.space)
            .field("pending", &self.pending.len())
            .field("outbox", &self.outbox.len())
            .finish_non_exhaustive()
    }
}

impl Rpc {
    pub fn new(cfg: RpcConfig, tables: Option<FpeTables>) -> Self {
        Rpc {
            store: TupleSpace::new(cfg.space.clone()),
            cfg,
            tables,
            next_seq: 0,
            dedup: DedupState::new(),
            pending: Vec::new(),
            listeners: Vec::new(),
            outbox: VecDeque::new(),
            last_send: None,
            next_id: 1,
            stats: RpcStats::default(),
        }
    }

    pub fn config(&self) -> &RpcConfig {
        &self.cfg
    }

    pub fn name(&self) -> &str {
        &self.cfg.space
    }

    /// The local store, for host-side operations that bypass the network.
    pub fn host(&self) -> &TupleSpace {
        &self.store
    }

    pub fn stats(&self) -> &RpcStats {
        &self.stats
    }

    pub fn pending_requests(&self) -> usize {
        self.pending.len()
    }

    pub fn queued(&self) -> usize {
        self.outbox.len()
    }

    pub fn next_seq(&self) -> u8 {
        self.next_seq
    }

    fn fresh_id(&mut self) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    /// Encodes and queues a request. RD and INP need `deliver`; TEST
    /// registers a pending request only when given one.
    pub fn submit(
        &mut self,
        op: Opcode,
        tuple: Tuple,
        timeout_ms: Option<u64>,
        deliver: Option<Deliver>,
        now: Millis,
    ) -> Result<RequestId, RpcError> {
        let kind = match op {
            Opcode::Rd => Some(RequestKind::Rd),
            Opcode::Inp => Some(RequestKind::Inp),
            Opcode::Test if deliver.is_some() => Some(RequestKind::Test),
            _ => None,
        };
        if matches!(op, Opcode::Rd | Opcode::Inp) && deliver.is_none() {
            return Err(RpcError::MissingCallback(op));
        }
        let pattern = kind.map(|_| Pattern::new(tuple.clone()));
        self.enqueue(op, tuple)?;
        self.stats.submitted += 1;
        let id = RequestId(self.fresh_id());
        if let (Some(kind), Some(pattern), Some(deliver)) = (kind, pattern, deliver) {
            let timeout = timeout_ms.unwrap_or(self.cfg.request_timeout_ms).max(1);
            self.pending.push(PendingRequest {
                id,
                kind,
                pattern,
                deadline: now + timeout,
                deliver,
            });
        }
        Ok(id)
    }

    fn enqueue(&mut self, op: Opcode, tuple: Tuple) -> Result<(), RpcError> {
        if self.outbox.len() >= self.cfg.queue_capacity {
            return Err(RpcError::QueueFull);
        }
        let msg = WireMessage::new(op, self.next_seq, tuple);
        let mut bytes = encode_message(&msg, self.cfg.max_message_len)?;
        if let Some(t) = &self.tables {
            bytes = t.encrypt(&bytes);
        }
        self.next_seq = (self.next_seq + 1) & 0b11;
        self.outbox.push_back(bytes);
        Ok(())
    }

    /// Hands the next queued message to the back-end if the rate limit
    /// allows it at `now`.
    pub fn poll_outgoing(&mut self, now: Millis) -> Option<Vec<u8>> {
        if self.outbox.is_empty() {
            return None;
        }
        if let Some(last) = self.last_send {
            if now < last + self.cfg.send_spacing_ms {
                return None;
            }
        }
        self.last_send = Some(now);
        self.stats.sent += 1;
        self.outbox.pop_front()
    }

    /// Earliest time a queued message may be sent, if any is queued.
    pub fn next_send_at(&self) -> Option<Millis> {
        if self.outbox.is_empty() {
            return None;
        }
        Some(self.last_send.map_or(0, |l| l + self.cfg.send_spacing_ms))
    }

    pub fn next_deadline(&self) -> Option<Millis> {
        self.pending.iter().map(|p| p.deadline).min()
    }

    pub fn listen(&mut self, pattern: Pattern, f: ListenFn) -> ListenerId {
        let id = ListenerId(self.fresh_id());
        self.listeners.push((id, pattern, f));
        id
    }

    pub fn unlisten(&mut self, id: ListenerId) -> bool {
        let before = self.listeners.len();
        self.listeners.retain(|(l, _, _)| *l != id);
        before != self.listeners.len()
    }

    /// Decrypts and decodes raw bytes from the back-end, then handles them.
    pub fn receive_bytes(
        &mut self,
        bytes: &[u8],
        sender: &str,
        rssi: f64,
        now: Millis,
        filter: &mut dyn InboundFilter,
    ) -> Result<Effect, CodecError> {
        let plain;
        let bytes = match &self.tables {
            Some(t) => {
                plain = t.decrypt(bytes);
                &plain[..]
            }
            None => bytes,
        };
        let message = decode_message(bytes).inspect_err(|_| self.stats.decode_errors += 1)?;
        let env = ReceiveEnvelope {
            message,
            sender: sender.to_string(),
            received_at: now,
            rssi,
        };
        Ok(self.handle_incoming(env, now, filter))
    }

    pub fn handle_incoming(
        &mut self,
        env: ReceiveEnvelope,
        now: Millis,
        filter: &mut dyn InboundFilter,
    ) -> Effect {
        self.stats.received += 1;
        let body = encode_message(&env.message, usize::MAX).unwrap_or_default();
        if self
            .dedup
            .check_duplicate(&env.sender, env.message.seq, &body, now)
        {
            self.stats.duplicates += 1;
            return Effect::Duplicate;
        }
        let tuple = env.message.tuple.clone();
        let effect = match env.message.op {
            Opcode::Out => {
                let consumed = filter.offer(&self.cfg.space, &env) || self.offer_listeners(&env);
                if consumed {
                    self.stats.consumed += 1;
                    Effect::Consumed
                } else {
                    self.store.out_local(
                        tuple,
                        self.cfg.remote_lifetime,
                        now,
                        Origin::Remote(env.sender.clone()),
                    );
                    self.stats.stored += 1;
                    Effect::Stored
                }
            }
            Opcode::Rd | Opcode::Test => {
                let p = Pattern::new(tuple);
                match self.store.rd_local(&p, now) {
                    Some(found) => self.reply(Opcode::Tuple, found),
                    None => Effect::NoMatch,
                }
            }
            Opcode::Inp => {
                let p = Pattern::new(tuple);
                match self.store.inp_local(&p, now) {
                    Some(found) => self.reply(Opcode::Tuple, found),
                    None => Effect::NoMatch,
                }
            }
            Opcode::Tuple => {
                if let Some(i) = self
                    .pending
                    .iter()
                    .position(|p| p.pattern.matches(&env.message.tuple))
                {
                    let req = self.pending.remove(i);
                    self.stats.completed += 1;
                    (req.deliver)(Some(tuple), Some(env));
                    Effect::Completed(req.id)
                } else {
                    let filtered = filter.offer(&self.cfg.space, &env);
                    if self.offer_listeners(&env) || filtered {
                        Effect::Listened
                    } else {
                        Effect::Ignored
                    }
                }
            }
            Opcode::WhereIs => match Value::string(self.cfg.node_name.clone())
                .and_then(|v| Tuple::new(vec![v]))
            {
                Ok(me) => self.reply(Opcode::IamHere, me),
                Err(_) => Effect::Ignored,
            },
            Opcode::IamHere => {
                if self.offer_listeners(&env) {
                    Effect::Listened
                } else {
                    Effect::Ignored
                }
            }
        };
        if effect == Effect::Ignored {
            self.stats.ignored += 1;
        }
        effect
    }

    fn offer_listeners(&mut self, env: &ReceiveEnvelope) -> bool {
        let mut consumed = false;
        for (_, pattern, f) in self.listeners.iter_mut() {
            if pattern.matches(&env.message.tuple) && f(&env.message.tuple, env) {
                consumed = true;
                break;
            }
        }
        consumed
    }

    fn reply(&mut self, op: Opcode, t: Tuple) -> Effect {
        match self.enqueue(op, t) {
            Ok(()) => {
                self.stats.replies += 1;
                Effect::Replied
            }
            Err(e) => {
                log::warn!("{}: reply dropped: {e}", self.cfg.space);
                self.stats.dropped_replies += 1;
                Effect::NoMatch
            }
        }
    }

    /// Fires `(None, None)` for every request whose deadline has passed.
    pub fn expire_requests(&mut self, now: Millis) -> usize {
        let (expired, live): (Vec<_>, Vec<_>) = std::mem::take(&mut self.pending)
            .into_iter()
            .partition(|p| p.deadline <= now);
        self.pending = live;
        let n = expired.len();
        self.stats.timeouts += n as u64;
        for req in expired {
            log::debug!(
                "{}: {:?} {} {} timed out",
                self.cfg.space,
                req.kind,
                req.id,
                req.pattern
            );
            (req.deliver)(None, None);
        }
        n
    }

    /// Periodic housekeeping: request timeouts, tuple expiry, dedup pruning.
    pub fn tick(&mut self, now: Millis) {
        self.expire_requests(now);
        self.store.expire_sweep(now);
        self.dedup.prune(now);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::{Arc, Mutex};

    fn s(x: &str) -> Value {
        Value::string(x).unwrap()
    }

    fn t(values: Vec<Value>) -> Tuple {
        Tuple::new(values).unwrap()
    }

    fn env(op: Opcode, seq: u8, tuple: Tuple, sender: &str, at: Millis) -> ReceiveEnvelope {
        ReceiveEnvelope {
            message: WireMessage::new(op, seq, tuple),
            sender: sender.into(),
            received_at: at,
            rssi: -40.0,
        }
    }

    type Log = Arc<Mutex<Vec<(Option<Tuple>, Option<String>)>>>;

    fn recorder() -> (Log, Deliver) {
        let log: Log = Arc::default();
        let l = log.clone();
        let f: Deliver = Box::new(move |t, e| l.lock().unwrap().push((t, e.map(|e| e.sender))));
        (log, f)
    }

    #[test]
    fn dedup_window() {
        let mut d = DedupState::new();
        assert!(!d.check_duplicate("n1", 2, b"x", 0));
        assert!(d.check_duplicate("n1", 2, b"x", 1000));
        assert!(!d.check_duplicate("n1", 2, b"x", 11_000));
        // same seq, different body: a new message after wrap-around
        assert!(!d.check_duplicate("n1", 2, b"y", 11_001));
        assert!(!d.check_duplicate("n2", 2, b"y", 11_001));
    }

    #[test]
    fn dedup_capacity() {
        let mut d = DedupState::new();
        for i in 0..20u8 {
            d.check_duplicate("n", i % 4, &[i], 0);
        }
        assert_eq!(d.entries("n"), DEDUP_CAPACITY);
        d.prune(20_000);
        assert_eq!(d.entries("n"), 0);
    }

    #[test]
    fn submit_encodes_with_sequence() {
        let mut rpc = Rpc::new(RpcConfig::udp("udp", "n0"), None);
        for _ in 0..3 {
            rpc.submit(Opcode::Out, t(vec![s("X")]), None, None, 0).unwrap();
        }
        assert_eq!(rpc.next_seq(), 3);
        rpc.submit(Opcode::Out, t(vec![s("A"), Value::Int16(5)]), None, None, 0)
            .unwrap();
        let sent: Vec<_> = std::iter::from_fn(|| rpc.poll_outgoing(0)).collect();
        assert_eq!(sent.len(), 4);
        assert_eq!(sent[3], [0x47, 0x60, 0xC1, 0x00, 0x05]);
        assert_eq!(rpc.next_seq(), 0);
    }

    #[test]
    fn rd_requires_callback() {
        let mut rpc = Rpc::new(RpcConfig::udp("udp", "n0"), None);
        assert_eq!(
            rpc.submit(Opcode::Rd, t(vec![Value::Formal]), None, None, 0),
            Err(RpcError::MissingCallback(Opcode::Rd))
        );
        assert_eq!(rpc.queued(), 0);
    }

    #[test]
    fn oversize_surfaces() {
        let mut rpc = Rpc::new(RpcConfig::ble("ble", "n0", 500), None);
        let long = t(vec![s(&"x".repeat(40))]);
        assert!(matches!(
            rpc.submit(Opcode::Out, long, None, None, 0),
            Err(RpcError::Codec(CodecError::Oversize { .. }))
        ));
    }

    #[test]
    fn queue_full() {
        let mut rpc = Rpc::new(RpcConfig::ble("ble", "n0", 500), None);
        for _ in 0..SEND_QUEUE_CAPACITY {
            rpc.submit(Opcode::Out, t(vec![s("A")]), None, None, 0).unwrap();
        }
        assert_eq!(
            rpc.submit(Opcode::Out, t(vec![s("A")]), None, None, 0),
            Err(RpcError::QueueFull)
        );
    }

    #[test]
    fn rate_limit_spacing() {
        let mut rpc = Rpc::new(RpcConfig::ble("ble", "n0", 500), None);
        rpc.submit(Opcode::Out, t(vec![s("A")]), None, None, 0).unwrap();
        rpc.submit(Opcode::Out, t(vec![s("B")]), None, None, 0).unwrap();
        assert!(rpc.poll_outgoing(0).is_some());
        assert!(rpc.poll_outgoing(499).is_none());
        assert_eq!(rpc.next_send_at(), Some(500));
        assert!(rpc.poll_outgoing(500).is_some());
        assert_eq!(rpc.next_send_at(), None);
    }

    #[test]
    fn rd_times_out() {
        let mut rpc = Rpc::new(RpcConfig::udp("udp", "n0"), None);
        let (log, f) = recorder();
        let pat = t(vec![s("SENSOR"), s("LIGHT"), Value::Formal]);
        rpc.submit(Opcode::Rd, pat, Some(500), Some(f), 1000).unwrap();
        assert_eq!(rpc.expire_requests(1499), 0);
        assert_eq!(rpc.expire_requests(1500), 1);
        assert_eq!(rpc.expire_requests(5000), 0);
        assert_eq!(*log.lock().unwrap(), vec![(None, None)]);
    }

    #[test]
    fn tuple_reply_completes_once() {
        let mut rpc = Rpc::new(RpcConfig::udp("udp", "n0"), None);
        let (log, f) = recorder();
        rpc.submit(Opcode::Rd, t(vec![s("A"), Value::Formal]), None, Some(f), 0)
            .unwrap();
        let reply = t(vec![s("A"), Value::Int16(1)]);
        let e = rpc.handle_incoming(env(Opcode::Tuple, 0, reply.clone(), "p", 10), 10, &mut NoFilter);
        assert!(matches!(e, Effect::Completed(_)));
        // a second reply from another responder finds no pending request
        let e = rpc.handle_incoming(env(Opcode::Tuple, 0, reply.clone(), "q", 11), 11, &mut NoFilter);
        assert_eq!(e, Effect::Ignored);
        assert_eq!(rpc.expire_requests(10_000), 0);
        assert_eq!(*log.lock().unwrap(), vec![(Some(reply), Some("p".into()))]);
        assert!(rpc.host().is_empty());
    }

    #[test]
    fn remote_out_stored() {
        let mut rpc = Rpc::new(RpcConfig::udp("udp", "n0"), None);
        let tup = t(vec![s("SENSOR"), s("LIGHT"), Value::Int16(700)]);
        assert_eq!(
            rpc.handle_incoming(env(Opcode::Out, 0, tup.clone(), "m1", 0), 0, &mut NoFilter),
            Effect::Stored
        );
        let pat = Pattern::new(t(vec![s("SENSOR"), s("LIGHT"), Value::Formal]));
        assert_eq!(rpc.host().rd_local(&pat, 1), Some(tup));
        // remote default lifetime is 60 s
        assert!(rpc.host().test_local(&pat, 60_000));
        assert!(!rpc.host().test_local(&pat, 60_001));
    }

    #[test]
    fn repeats_processed_once() {
        let mut rpc = Rpc::new(RpcConfig::udp("udp", "n0"), None);
        let tup = t(vec![s("A")]);
        let effects: Vec<_> = (0..3)
            .map(|i| rpc.handle_incoming(env(Opcode::Out, 1, tup.clone(), "m1", i), i, &mut NoFilter))
            .collect();
        assert_eq!(effects, [Effect::Stored, Effect::Duplicate, Effect::Duplicate]);
        assert_eq!(rpc.host().len(), 1);
        assert_eq!(rpc.stats().duplicates, 2);
    }

    #[test]
    fn rd_inp_test_reply() {
        let mut rpc = Rpc::new(RpcConfig::udp("udp", "n0"), None);
        let tup = t(vec![s("A"), Value::Int16(1)]);
        rpc.host().out_local(tup.clone(), Lifetime::Never, 0, Origin::Local);
        let pat = t(vec![s("A"), Value::Formal]);
        assert_eq!(
            rpc.handle_incoming(env(Opcode::Rd, 0, pat.clone(), "r", 0), 0, &mut NoFilter),
            Effect::Replied
        );
        assert_eq!(
            rpc.handle_incoming(env(Opcode::Test, 1, pat.clone(), "r", 0), 0, &mut NoFilter),
            Effect::Replied
        );
        assert_eq!(rpc.host().len(), 1);
        assert_eq!(
            rpc.handle_incoming(env(Opcode::Inp, 2, pat.clone(), "r", 0), 0, &mut NoFilter),
            Effect::Replied
        );
        assert!(rpc.host().is_empty());
        assert_eq!(
            rpc.handle_incoming(env(Opcode::Inp, 3, pat, "r", 0), 0, &mut NoFilter),
            Effect::NoMatch
        );
        let out: Vec<_> = std::iter::from_fn(|| rpc.poll_outgoing(0))
            .map(|b| decode_message(&b).unwrap())
            .collect();
        assert_eq!(out.len(), 3);
        assert!(out.iter().all(|m| m.op == Opcode::Tuple && m.tuple == tup));
    }

    #[test]
    fn unsolicited_tuple_not_stored() {
        let mut rpc = Rpc::new(RpcConfig::udp("udp", "n0"), None);
        let e = rpc.handle_incoming(env(Opcode::Tuple, 0, t(vec![s("X")]), "p", 0), 0, &mut NoFilter);
        assert_eq!(e, Effect::Ignored);
        assert!(rpc.host().is_empty());
    }

    #[test]
    fn listener_consumes_out() {
        let mut rpc = Rpc::new(RpcConfig::udp("udp", "n0"), None);
        let seen = Arc::new(Mutex::new(0));
        let s2 = seen.clone();
        rpc.listen(
            Pattern::new(t(vec![s("ALARM"), Value::Formal])),
            Box::new(move |_, e| {
                assert_eq!(e.sender, "m1");
                *s2.lock().unwrap() += 1;
                true
            }),
        );
        let e = rpc.handle_incoming(
            env(Opcode::Out, 0, t(vec![s("ALARM"), Value::Int16(1)]), "m1", 0),
            0,
            &mut NoFilter,
        );
        assert_eq!(e, Effect::Consumed);
        assert_eq!(*seen.lock().unwrap(), 1);
        assert!(rpc.host().is_empty());
    }

    #[test]
    fn whereis_answered() {
        let mut rpc = Rpc::new(RpcConfig::udp("udp", "node-7"), None);
        let e = rpc.handle_incoming(env(Opcode::WhereIs, 0, t(vec![Value::Formal]), "p", 0), 0, &mut NoFilter);
        assert_eq!(e, Effect::Replied);
        let m = decode_message(&rpc.poll_outgoing(0).unwrap()).unwrap();
        assert_eq!(m.op, Opcode::IamHere);
        assert_eq!(m.tuple, t(vec![s("node-7")]));
    }

    #[test]
    fn encrypted_roundtrip() {
        let tables = FpeTables::from_secret("cloud1").unwrap();
        let mut a = Rpc::new(RpcConfig::ble("ble", "a", 500), Some(tables.clone()));
        let mut b = Rpc::new(RpcConfig::ble("ble", "b", 500), Some(tables));
        let mut plain = Rpc::new(RpcConfig::ble("ble", "c", 500), None);
        let tup = t(vec![s("SENSOR"), s("LIGHT"), Value::Int16(1000)]);
        a.submit(Opcode::Out, tup.clone(), None, None, 0).unwrap();
        let wire = a.poll_outgoing(0).unwrap();
        assert_ne!(wire[..2], [0x48, 0x58]);
        assert_eq!(b.receive_bytes(&wire, "a", -50.0, 1, &mut NoFilter), Ok(Effect::Stored));
        assert_eq!(b.host().len(), 1);
        // without the key the message is garbage or decodes to something else
        let _ = plain.receive_bytes(&wire, "a", -50.0, 1, &mut NoFilter);
        let pat = Pattern::new(tup);
        assert!(!plain.host().test_local(&pat, 1));
    }
}

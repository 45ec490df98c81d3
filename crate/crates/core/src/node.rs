//! A node: named spaces, each bound to its own back-end, plus the agents and
//! router that sit between them.
//!
//! `Node` is clock- and transport-agnostic. The caller feeds received bytes
//! to [`Node::receive`], drains [`Node::poll_outgoing`] into its back-ends,
//! and calls [`Node::tick`] no later than [`Node::next_wakeup`].

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::Arc;

use serde::Deserialize;
use thiserror::Error;

use crate::agent::{
    agent_from_tuple, parse_agent, AgentDefinition, AgentError, AgentEvent, AgentInstance,
    AgentOutput, DispatchResult,
};
use crate::codec::{CodecError, Opcode, Tuple};
use crate::fpe::{FpeError, FpeTables};
use crate::router::{RouteEmission, RouteMode, RouteRule, Router, RouterError};
use crate::rpc::{
    Deliver, Effect, InboundFilter, ListenFn, ListenerId, ReceiveEnvelope, RequestId, Rpc,
    RpcConfig, RpcError,
};
use crate::space::{Lifetime, Millis, Origin, Pattern};

const LOG_CAPACITY: usize = 256;

#[derive(Debug, Error)]
pub enum NodeError {
    #[error("unknown space {0:?}")]
    UnknownSpace(String),
    #[error("space {0:?} already exists")]
    DuplicateSpace(String),
    #[error(transparent)]
    Rpc(#[from] RpcError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Router(#[from] RouterError),
    #[error(transparent)]
    Key(#[from] FpeError),
    #[error("bad node config: {0}")]
    Config(String),
}

pub struct Node {
    id: String,
    spaces: BTreeMap<String, Rpc>,
    agents: Vec<AgentInstance>,
    router: Arc<Router>,
    agent_install: BTreeSet<String>,
    admin_space: Option<String>,
    /// Route emissions are stored at the destination but not re-broadcast.
    pub routes_local_only: bool,
    sensors: BTreeMap<String, f64>,
    logs: VecDeque<String>,
}

impl std::fmt::Debug for Node {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Node")
            .field("id", &self.id)
            .field("spaces", &self.spaces.keys().collect::<Vec<_>>())
            .field("agents", &self.agents.len())
            .finish_non_exhaustive()
    }
}

/// Work collected while a space's rpc layer is borrowed.
#[derive(Default)]
struct Deferred {
    agent_outputs: Vec<AgentOutput>,
    routes: Vec<(RouteEmission, String)>,
    installs: Vec<AgentDefinition>,
}

struct NodeFilter<'a> {
    agents: &'a mut Vec<AgentInstance>,
    router: &'a Router,
    install: bool,
    admin: bool,
    now: Millis,
    deferred: &'a mut Deferred,
    logs: &'a mut Vec<String>,
}

impl InboundFilter for NodeFilter<'_> {
    fn offer(&mut self, space: &str, env: &ReceiveEnvelope) -> bool {
        let t = &env.message.tuple;
        let is_out = env.message.op == Opcode::Out;
        if is_out && self.install {
            if let Some(parsed) = agent_from_tuple(t) {
                match parsed {
                    Ok(def) => self.deferred.installs.push(def),
                    Err(e) => self.logs.push(format!("rejected agent from {}: {e}", env.sender)),
                }
                return true;
            }
        }
        if is_out && self.admin {
            if let Some(res) = self.router.admin(t) {
                self.logs.push(match res {
                    Ok(msg) => format!("route admin: {msg}"),
                    Err(e) => format!("route admin failed: {e}"),
                });
                return true;
            }
        }
        let ev = AgentEvent::ts(space, t.clone(), &env.sender, env.rssi, self.now);
        let mut consumed = false;
        for agent in self.agents.iter_mut() {
            let r = agent.dispatch(&ev);
            consumed |= r.consumed;
            self.deferred.agent_outputs.extend(r.outputs);
        }
        if is_out && !consumed {
            for em in self.router.apply(t, space) {
                consumed |= em.mode == RouteMode::Move;
                self.deferred.routes.push((em, env.sender.clone()));
            }
        }
        is_out && consumed
    }
}

impl Node {
    pub fn new(id: impl Into<String>) -> Self {
        Node {
            id: id.into(),
            spaces: BTreeMap::new(),
            agents: Vec::new(),
            router: Arc::new(Router::new()),
            agent_install: BTreeSet::new(),
            admin_space: None,
            routes_local_only: false,
            sensors: BTreeMap::new(),
            logs: VecDeque::new(),
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn add_space(&mut self, cfg: RpcConfig, key: Option<&str>) -> Result<(), NodeError> {
        if self.spaces.contains_key(&cfg.space) {
            return Err(NodeError::DuplicateSpace(cfg.space));
        }
        let tables = key.map(FpeTables::from_secret).transpose()?;
        self.spaces.insert(cfg.space.clone(), Rpc::new(cfg, tables));
        Ok(())
    }

    pub fn space_names(&self) -> Vec<String> {
        self.spaces.keys().cloned().collect()
    }

    pub fn space(&self, name: &str) -> Result<&Rpc, NodeError> {
        self.spaces
            .get(name)
            .ok_or_else(|| NodeError::UnknownSpace(name.to_string()))
    }

    pub fn space_mut(&mut self, name: &str) -> Result<&mut Rpc, NodeError> {
        self.spaces
            .get_mut(name)
            .ok_or_else(|| NodeError::UnknownSpace(name.to_string()))
    }

    pub fn router(&self) -> &Arc<Router> {
        &self.router
    }

    pub fn add_route(&mut self, rule: RouteRule) -> Result<(), NodeError> {
        Ok(self.router.add(rule)?)
    }

    /// Lets active `('AGENT', name, doc)` tuples arriving on `space` install agents.
    pub fn enable_agent_install(&mut self, space: &str) {
        self.agent_install.insert(space.to_string());
    }

    /// Accepts `('ROUTE', op, doc)` admin tuples arriving on `space`.
    pub fn set_admin_space(&mut self, space: Option<&str>) {
        self.admin_space = space.map(str::to_string);
    }

    pub fn agents(&self) -> &[AgentInstance] {
        &self.agents
    }

    pub fn take_logs(&mut self) -> Vec<String> {
        self.logs.drain(..).collect()
    }

    fn push_log(&mut self, line: String) {
        log::info!("{}: {line}", self.id);
        if self.logs.len() == LOG_CAPACITY {
            self.logs.pop_front();
        }
        self.logs.push_back(line);
    }

    /// Stores locally (never expiring) and broadcasts.
    pub fn out(&mut self, space: &str, t: Tuple, now: Millis) -> Result<(), NodeError> {
        self.out_with(space, t, Lifetime::Never, now)
    }

    pub fn out_with(
        &mut self,
        space: &str,
        t: Tuple,
        lifetime: Lifetime,
        now: Millis,
    ) -> Result<(), NodeError> {
        let rpc = self.space_mut(space)?;
        rpc.submit(Opcode::Out, t.clone(), None, None, now)?;
        rpc.host().out_local(t, lifetime, now, Origin::Local);
        Ok(())
    }

    /// Broadcasts a tuple that nobody stores.
    pub fn notify(&mut self, space: &str, t: Tuple, now: Millis) -> Result<(), NodeError> {
        self.space_mut(space)?
            .submit(Opcode::Tuple, t, None, None, now)?;
        Ok(())
    }

    pub fn rd(
        &mut self,
        space: &str,
        p: Pattern,
        timeout_ms: Option<u64>,
        deliver: Deliver,
        now: Millis,
    ) -> Result<RequestId, NodeError> {
        Ok(self
            .space_mut(space)?
            .submit(Opcode::Rd, p.into_tuple(), timeout_ms, Some(deliver), now)?)
    }

    pub fn inp(
        &mut self,
        space: &str,
        p: Pattern,
        timeout_ms: Option<u64>,
        deliver: Deliver,
        now: Millis,
    ) -> Result<RequestId, NodeError> {
        Ok(self
            .space_mut(space)?
            .submit(Opcode::Inp, p.into_tuple(), timeout_ms, Some(deliver), now)?)
    }

    pub fn test(
        &mut self,
        space: &str,
        p: Pattern,
        timeout_ms: Option<u64>,
        deliver: Deliver,
        now: Millis,
    ) -> Result<RequestId, NodeError> {
        Ok(self
            .space_mut(space)?
            .submit(Opcode::Test, p.into_tuple(), timeout_ms, Some(deliver), now)?)
    }

    /// Broadcasts WHEREIS; replies reach listeners as IAMHERE tuples.
    pub fn whereis(&mut self, space: &str, now: Millis) -> Result<(), NodeError> {
        let me = Tuple::new(vec![crate::codec::Value::string(self.id.clone())?])?;
        self.space_mut(space)?
            .submit(Opcode::WhereIs, me, None, None, now)?;
        Ok(())
    }

    pub fn listen(&mut self, space: &str, p: Pattern, f: ListenFn) -> Result<ListenerId, NodeError> {
        Ok(self.space_mut(space)?.listen(p, f))
    }

    pub fn install_agent(&mut self, def: AgentDefinition, now: Millis) -> Result<(), NodeError> {
        if let Some(i) = self.agents.iter().position(|a| a.name() == def.name) {
            self.push_log(format!("replacing agent {}", def.name));
            self.agents.remove(i);
        }
        let mut agent = AgentInstance::new(def);
        let r = agent.start(now);
        self.agents.push(agent);
        self.apply_dispatch(r, now);
        Ok(())
    }

    pub fn install_agent_doc(&mut self, doc: &str, now: Millis) -> Result<(), NodeError> {
        self.install_agent(parse_agent(doc)?, now)
    }

    /// Feeds bytes received on `space`'s back-end.
    pub fn receive(
        &mut self,
        space: &str,
        bytes: &[u8],
        sender: &str,
        rssi: f64,
        now: Millis,
    ) -> Result<Effect, NodeError> {
        let mut deferred = Deferred::default();
        let mut logs = Vec::new();
        let rpc = self
            .spaces
            .get_mut(space)
            .ok_or_else(|| NodeError::UnknownSpace(space.to_string()))?;
        let mut filter = NodeFilter {
            agents: &mut self.agents,
            router: &self.router,
            install: self.agent_install.contains(space),
            admin: self.admin_space.as_deref() == Some(space),
            now,
            deferred: &mut deferred,
            logs: &mut logs,
        };
        let effect = rpc.receive_bytes(bytes, sender, rssi, now, &mut filter);
        for line in logs {
            self.push_log(line);
        }
        self.apply_deferred(deferred, now);
        Ok(effect?)
    }

    fn apply_deferred(&mut self, d: Deferred, now: Millis) {
        self.apply_outputs(d.agent_outputs, now);
        for (em, from) in d.routes {
            if let Err(e) = self.emit_route(&em, &from, now) {
                self.push_log(format!("route {} failed: {e}", em.rule_id));
            }
        }
        for def in d.installs {
            let name = def.name.clone();
            if let Err(e) = self.install_agent(def, now) {
                self.push_log(format!("agent {name} not installed: {e}"));
            } else {
                self.push_log(format!("installed agent {name}"));
            }
        }
    }

    fn emit_route(&mut self, em: &RouteEmission, from: &str, now: Millis) -> Result<(), NodeError> {
        let local_only = self.routes_local_only;
        let rpc = self.space_mut(&em.to_space)?;
        let lifetime = rpc.config().remote_lifetime;
        if !local_only {
            rpc.submit(Opcode::Out, em.tuple.clone(), None, None, now)?;
        }
        rpc.host()
            .out_local(em.tuple.clone(), lifetime, now, Origin::Remote(from.to_string()));
        Ok(())
    }

    fn apply_outputs(&mut self, outputs: Vec<AgentOutput>, now: Millis) {
        for o in outputs {
            let res = match o {
                AgentOutput::Out { space, tuple } => self.out(&space, tuple, now),
                AgentOutput::Notify { space, tuple } => self.notify(&space, tuple, now),
                AgentOutput::Log(line) => {
                    self.push_log(line);
                    Ok(())
                }
            };
            if let Err(e) = res {
                self.push_log(format!("agent action failed: {e}"));
            }
        }
    }

    fn apply_dispatch(&mut self, r: DispatchResult, now: Millis) {
        for e in r.errors {
            self.push_log(format!("agent error: {e}"));
        }
        self.apply_outputs(r.outputs, now);
    }

    /// Reports a sensor reading to every agent.
    pub fn sensor(&mut self, name: &str, value: f64, now: Millis) {
        let prev = self.sensors.insert(name.to_string(), value);
        let ev = AgentEvent::sensor(name, value, prev, now);
        let mut merged = DispatchResult::default();
        for agent in self.agents.iter_mut() {
            let r = agent.dispatch(&ev);
            merged.outputs.extend(r.outputs);
            merged.errors.extend(r.errors);
        }
        self.apply_dispatch(merged, now);
    }

    /// Timeouts, expiry and agent timers up to `now`.
    pub fn tick(&mut self, now: Millis) {
        for rpc in self.spaces.values_mut() {
            rpc.tick(now);
        }
        let mut merged = DispatchResult::default();
        for agent in self.agents.iter_mut() {
            let r = agent.run_timers(now);
            merged.outputs.extend(r.outputs);
            merged.errors.extend(r.errors);
        }
        self.apply_dispatch(merged, now);
    }

    /// Messages the back-ends may send now, at most one per space.
    pub fn poll_outgoing(&mut self, now: Millis) -> Vec<(String, Vec<u8>)> {
        self.spaces
            .iter_mut()
            .filter_map(|(name, rpc)| rpc.poll_outgoing(now).map(|b| (name.clone(), b)))
            .collect()
    }

    /// Earliest time at which `tick` or `poll_outgoing` has work.
    pub fn next_wakeup(&self) -> Option<Millis> {
        let rpc = self
            .spaces
            .values()
            .flat_map(|r| [r.next_send_at(), r.next_deadline()]);
        let timers = self.agents.iter().map(AgentInstance::next_timer_due);
        rpc.chain(timers).flatten().min()
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UdpSettings {
    pub port: Option<u16>,
    pub broadcast: Option<String>,
    pub repeats: Option<u8>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceSettings {
    pub key: Option<String>,
    #[serde(default)]
    pub agent_install: bool,
    pub remote_lifetime_ms: Option<u64>,
    pub request_timeout_ms: Option<u64>,
}

/// Node configuration file.
///
/// ```json
/// {
///   "id": "n1",
///   "udp": {"port": 5088, "broadcast": "255.255.255.255", "repeats": 1},
///   "space": {"key": "secret", "agent_install": true},
///   "admin": true,
///   "agents": [{"name": "a", "rules": []}],
///   "routes": []
/// }
/// ```
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeConfig {
    pub id: Option<String>,
    #[serde(default)]
    pub udp: UdpSettings,
    #[serde(default)]
    pub space: SpaceSettings,
    #[serde(default)]
    pub admin: bool,
    #[serde(default)]
    pub agents: Vec<serde_json::Value>,
    #[serde(default)]
    pub routes: Vec<serde_json::Value>,
}

impl NodeConfig {
    pub fn parse(doc: &str) -> Result<Self, NodeError> {
        serde_json::from_str(doc).map_err(|e| NodeError::Config(e.to_string()))
    }

    pub fn agent_definitions(&self) -> Result<Vec<AgentDefinition>, NodeError> {
        Ok(self
            .agents
            .iter()
            .map(AgentDefinition::from_json)
            .collect::<Result<_, _>>()?)
    }

    pub fn route_rules(&self) -> Result<Vec<RouteRule>, NodeError> {
        Ok(self
            .routes
            .iter()
            .map(RouteRule::from_json)
            .collect::<Result<_, _>>()?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{decode_message, Value};
    use std::sync::Mutex;

    fn tup(json: &str) -> Tuple {
        Tuple::parse_json(json).unwrap()
    }

    fn udp_node(id: &str) -> Node {
        let mut n = Node::new(id);
        n.add_space(RpcConfig::udp("udp", id), None).unwrap();
        n
    }

    fn beacon() -> Node {
        let mut n = Node::new("b");
        n.add_space(RpcConfig::ble("ble", "b", 500), None).unwrap();
        n.add_space(RpcConfig::udp("udp", "b"), None).unwrap();
        n
    }

    /// Moves every queued message from `a` to `b` at `now`.
    fn pump(a: &mut Node, b: &mut Node, now: Millis) -> Vec<Effect> {
        let mut effects = Vec::new();
        for (space, bytes) in a.poll_outgoing(now) {
            effects.push(b.receive(&space, &bytes, a.id().to_string().as_str(), 0.0, now).unwrap());
        }
        effects
    }

    #[test]
    fn out_rd_tuple_between_nodes() {
        let (mut a, mut b) = (udp_node("a"), udp_node("b"));
        a.out("udp", tup(r#"["A",5]"#), 0).unwrap();
        assert_eq!(pump(&mut a, &mut b, 1), vec![Effect::Stored]);
        assert!(b.space("udp").unwrap().host().test_local(&Pattern::new(tup(r#"["A",null]"#)), 1));
        let got = Arc::new(Mutex::new(None));
        let g = got.clone();
        a.rd("udp", Pattern::new(tup(r#"["A",null]"#)), None, Box::new(move |t, _| *g.lock().unwrap() = t), 2)
            .unwrap();
        assert_eq!(pump(&mut a, &mut b, 3), vec![Effect::Replied]);
        assert_eq!(pump(&mut b, &mut a, 4), vec![Effect::Completed(RequestId(2))]);
        assert_eq!(*got.lock().unwrap(), Some(tup(r#"["A",5]"#)));
    }

    #[test]
    fn move_route_on_beacon() {
        let mut mobile = Node::new("m");
        mobile.add_space(RpcConfig::ble("ble", "m", 500), None).unwrap();
        let mut b = beacon();
        b.add_route(
            RouteRule::new("s", "ble", Pattern::new(tup(r#"["SENSOR",null,null,null]"#)), "udp", RouteMode::Move)
                .unwrap(),
        )
        .unwrap();
        mobile.out("ble", tup(r#"["SENSOR","LIGHT",700,12]"#), 0).unwrap();
        assert_eq!(pump(&mut mobile, &mut b, 1), vec![Effect::Consumed]);
        let any = Pattern::new(tup(r#"["SENSOR",null,null,null]"#));
        assert!(!b.space("ble").unwrap().host().test_local(&any, 1));
        assert!(b.space("udp").unwrap().host().test_local(&any, 1));
        let out = b.poll_outgoing(2);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].0, "udp");
        assert_eq!(decode_message(&out[0].1).unwrap().op, Opcode::Out);
    }

    #[test]
    fn copy_route_keeps_both() {
        let mut b = beacon();
        b.routes_local_only = true;
        b.add_route(
            RouteRule::new("c", "udp", Pattern::new(tup(r#"["SURVEY",null]"#)), "ble", RouteMode::Copy)
                .unwrap(),
        )
        .unwrap();
        let mut server = udp_node("srv");
        server.out("udp", tup(r#"["SURVEY",1]"#), 0).unwrap();
        assert_eq!(pump(&mut server, &mut b, 1), vec![Effect::Stored]);
        let p = Pattern::new(tup(r#"["SURVEY",null]"#));
        assert!(b.space("udp").unwrap().host().test_local(&p, 1));
        assert!(b.space("ble").unwrap().host().test_local(&p, 1));
        assert!(b.poll_outgoing(2).is_empty());
    }

    #[test]
    fn consuming_agent_blocks_storage() {
        let mut n = udp_node("n");
        n.install_agent_doc(
            r#"{"name":"c","rules":[{"on":"ts.udp:(TIME,?)","do":[{"log":["'got'","t[2]"]}],"consume":true}]}"#,
            0,
        )
        .unwrap();
        let mut peer = udp_node("p");
        peer.out("udp", tup(r#"["TIME",12]"#), 0).unwrap();
        assert_eq!(pump(&mut peer, &mut n, 1), vec![Effect::Consumed]);
        assert!(!n.space("udp").unwrap().host().test_local(&Pattern::new(tup(r#"["TIME",null]"#)), 1));
        assert_eq!(n.take_logs(), vec!["got 12".to_string()]);
    }

    #[test]
    fn agent_migration_is_opt_in() {
        let def = parse_agent(r#"{"name":"hop","vars":{"x":7},"rules":[]}"#).unwrap();
        let active = crate::agent::agent_tuple(&def).unwrap();
        let mut closed = udp_node("c");
        let mut open = udp_node("o");
        open.enable_agent_install("udp");
        let mut src = udp_node("s");
        src.out("udp", active, 0).unwrap();
        let (_, bytes) = src.poll_outgoing(0).remove(0);
        assert_eq!(closed.receive("udp", &bytes, "s", 0.0, 1).unwrap(), Effect::Stored);
        assert!(closed.agents().is_empty());
        assert_eq!(open.receive("udp", &bytes, "s", 0.0, 1).unwrap(), Effect::Consumed);
        assert_eq!(open.agents()[0].var("x"), Some(&crate::agent::Scalar::Num(7.0)));
    }

    #[test]
    fn timers_and_wakeup() {
        let mut n = udp_node("n");
        n.install_agent_doc(
            r#"{"name":"t","rules":[{"on":1000,"do":[{"notify":{"space":"udp","tuple":["'PING'","time"]}}]}]}"#,
            0,
        )
        .unwrap();
        assert_eq!(n.next_wakeup(), Some(1000));
        n.tick(1000);
        let out = n.poll_outgoing(1000);
        let msg = decode_message(&out[0].1).unwrap();
        assert_eq!(msg.op, Opcode::Tuple);
        assert_eq!(msg.tuple.get(1), Some(&Value::Int16(1000)));
        assert_eq!(n.next_wakeup(), Some(2000));
    }

    #[test]
    fn sensor_events_track_previous_value() {
        let mut n = Node::new("m");
        n.add_space(RpcConfig::ble("ble", "m", 500), None).unwrap();
        n.install_agent_doc(
            r#"{"name":"s","rules":[{"on":"sensor.light:abs(sensor - sensor0) > 50","do":[{"log":["sensor"]}]}]}"#,
            0,
        )
        .unwrap();
        n.sensor("light", 500.0, 1);
        n.sensor("light", 600.0, 2);
        n.sensor("light", 620.0, 3);
        assert_eq!(n.take_logs(), vec!["600".to_string()]);
    }

    #[test]
    fn admin_space_mutates_router() {
        let mut n = udp_node("n");
        let admin = Tuple::new(vec![
            Value::string("ROUTE").unwrap(),
            Value::string("add").unwrap(),
            Value::string(r#"{"id":"r","from":"udp","to":"x","pattern":["Q"]}"#).unwrap(),
        ])
        .unwrap();
        let mut peer = udp_node("p");
        peer.out("udp", admin.clone(), 0).unwrap();
        let (_, bytes) = peer.poll_outgoing(0).remove(0);
        // disabled by default: stored like any tuple
        assert_eq!(n.receive("udp", &bytes, "p", 0.0, 1).unwrap(), Effect::Stored);
        assert!(n.router().is_empty());
        n.set_admin_space(Some("udp"));
        peer.out("udp", admin, 20_000).unwrap();
        let (_, bytes) = peer.poll_outgoing(20_000).remove(0);
        assert_eq!(n.receive("udp", &bytes, "p", 0.0, 20_001).unwrap(), Effect::Consumed);
        assert_eq!(n.router().list().len(), 1);
    }

    #[test]
    fn encrypted_spaces_interoperate() {
        let mut a = Node::new("a");
        a.add_space(RpcConfig::udp("udp", "a"), Some("k")).unwrap();
        let mut b = Node::new("b");
        b.add_space(RpcConfig::udp("udp", "b"), Some("k")).unwrap();
        let mut c = Node::new("c");
        c.add_space(RpcConfig::udp("udp", "c"), Some("other")).unwrap();
        a.out("udp", tup(r#"["S",1]"#), 0).unwrap();
        let (_, bytes) = a.poll_outgoing(0).remove(0);
        assert_eq!(b.receive("udp", &bytes, "a", 0.0, 1).unwrap(), Effect::Stored);
        let wrong = c.receive("udp", &bytes, "a", 0.0, 1);
        assert!(wrong.is_err() || !c.space("udp").unwrap().host().test_local(&Pattern::new(tup(r#"["S",1]"#)), 1));
    }

    #[test]
    fn config_parses() {
        let cfg = NodeConfig::parse(
            r#"{"id":"n","udp":{"port":6000,"repeats":3},"space":{"key":"k"},
                "agents":[{"name":"a","rules":[]}],
                "routes":[{"id":"r","from":"udp","to":"x","pattern":["A"]}]}"#,
        )
        .unwrap();
        assert_eq!(cfg.udp.port, Some(6000));
        assert_eq!(cfg.agent_definitions().unwrap().len(), 1);
        assert_eq!(cfg.route_rules().unwrap()[0].id, "r");
        assert!(NodeConfig::parse(r#"{"bogus":1}"#).is_err());
    }
}

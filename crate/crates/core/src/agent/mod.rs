//! Event-condition-action agents.
//!
//! An agent is a JSON document:
//!
//! ```json
//! {
//!   "name": "watch",
//!   "vars": {"count": 0},
//!   "rules": [
//!     {"on": "init", "do": [{"log": ["'started'"]}]},
//!     {"on": "ts.udp:(TIME,?)", "if": "t[2] > 0",
//!      "do": [{"set": {"var": "count", "expr": "count + 1"}},
//!             {"out": {"space": "udp", "tuple": ["'EVENT'", "count", "from", "time"]}}],
//!      "consume": true},
//!     {"on": 1000, "do": [{"notify": {"space": "ble", "tuple": ["'PING'"]}}]},
//!     {"on": "sensor.light:abs(sensor - sensor0) > 50",
//!      "do": [{"out": {"space": "ble", "tuple": ["'SENSOR'", "'LIGHT'", "sensor", null]}}]}
//!   ]
//! }
//! ```
//!
//! Tuple template elements are expression source strings (string literals
//! need quotes), numbers, booleans, or `null` for a formal. Tuple elements
//! are addressed 1-based as `t[1]`..`t[4]`.

pub mod expr;

use std::collections::BTreeMap;
use std::fmt;

use serde_json::{json, Map, Value as Json};
use thiserror::Error;

use crate::codec::{encode_message, Opcode, Tuple, Value, WireMessage, MAX_ARITY, UDP_MAX_MESSAGE};
use crate::space::{match_pattern, Pattern};
pub use expr::{EvalError, Expr, ParseError, Scalar, Scope};

/// First element of an active tuple carrying an agent.
pub const AGENT_TAG: &str = "AGENT";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AgentError {
    #[error("bad agent document: {0}")]
    Json(String),
    #[error("{at}: {msg}")]
    Invalid { at: String, msg: String },
    #[error("agent too large for transport ({len} > {limit} bytes)")]
    TooLarge { len: usize, limit: usize },
}

fn invalid<T>(at: impl Into<String>, msg: impl Into<String>) -> Result<T, AgentError> {
    Err(AgentError::Invalid {
        at: at.into(),
        msg: msg.into(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum Selector {
    Ts { space: String, pattern: Pattern },
    Sensor { name: String, condition: Option<Expr> },
    Timer { period_ms: u64 },
    Init,
}

fn is_space_name(s: &str) -> bool {
    !s.is_empty()
        && s
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

fn parse_pattern_elem(raw: &str) -> Result<Value, String> {
    let e = raw.trim();
    if e == "?" {
        return Ok(Value::Formal);
    }
    if e.len() >= 2 {
        let (first, last) = (e.as_bytes()[0], e.as_bytes()[e.len() - 1]);
        if (first == b'\'' || first == b'"') && first == last {
            return Value::string(&e[1..e.len() - 1]).map_err(|err| err.to_string());
        }
    }
    if let Ok(n) = e.parse::<f64>() {
        return crate::codec::classify_value(n).map_err(|err| err.to_string());
    }
    if e.is_empty() || e.contains(['(', ')', '\'', '"']) {
        return Err(format!("bad pattern element {raw:?}"));
    }
    Value::string(e).map_err(|err| err.to_string())
}

fn fmt_pattern_elem(v: &Value) -> String {
    match v {
        Value::Formal => "?".into(),
        Value::Str(s) => {
            let bare = !s.is_empty()
                && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
                && s.parse::<f64>().is_err();
            if bare {
                s.clone()
            } else if s.contains('\'') {
                format!("\"{s}\"")
            } else {
                format!("'{s}'")
            }
        }
        Value::Int16(i) => i.to_string(),
        Value::Float32(f) => format!("{f:?}"),
    }
}

impl Selector {
    pub fn parse(src: &str) -> Result<Selector, AgentError> {
        let at = format!("selector {src:?}");
        let src = src.trim();
        if src == "init" {
            return Ok(Selector::Init);
        }
        if let Ok(period_ms) = src.parse::<u64>() {
            return Selector::timer(period_ms, &at);
        }
        if let Some(rest) = src.strip_prefix("ts.") {
            let Some((space, pat)) = rest.split_once(':') else {
                return invalid(at, "expected ':' after space name");
            };
            if !is_space_name(space) {
                return invalid(at, "bad space name");
            }
            let Some(inner) = pat
                .trim()
                .strip_prefix('(')
                .and_then(|p| p.strip_suffix(')'))
            else {
                return invalid(at, "pattern must be '(' elements ')'");
            };
            let elems = inner
                .split(',')
                .map(parse_pattern_elem)
                .collect::<Result<Vec<_>, _>>()
                .or_else(|m| invalid(&at, m))?;
            let tuple = Tuple::new(elems).or_else(|e| invalid(&at, e.to_string()))?;
            return Ok(Selector::Ts {
                space: space.to_string(),
                pattern: Pattern::new(tuple),
            });
        }
        if let Some(rest) = src.strip_prefix("sensor.") {
            let (name, cond) = match rest.split_once(':') {
                Some((n, c)) => (n, Some(c)),
                None => (rest, None),
            };
            if !expr::is_identifier(name) {
                return invalid(at, "bad sensor name");
            }
            let condition = cond
                .map(Expr::parse)
                .transpose()
                .or_else(|e| invalid(&at, e.to_string()))?;
            return Ok(Selector::Sensor {
                name: name.to_string(),
                condition,
            });
        }
        invalid(at, "unknown selector")
    }

    fn timer(period_ms: u64, at: &str) -> Result<Selector, AgentError> {
        if period_ms == 0 {
            return invalid(at, "timer period must be > 0");
        }
        Ok(Selector::Timer { period_ms })
    }

    fn to_json(&self) -> Json {
        match self {
            Selector::Timer { period_ms } => json!(period_ms),
            other => Json::String(other.to_string()),
        }
    }
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Selector::Ts { space, pattern } => {
                let elems: Vec<String> = pattern
                    .as_tuple()
                    .values()
                    .iter()
                    .map(fmt_pattern_elem)
                    .collect();
                write!(f, "ts.{space}:({})", elems.join(","))
            }
            Selector::Sensor { name, condition } => match condition {
                Some(c) => write!(f, "sensor.{name}:{c}"),
                None => write!(f, "sensor.{name}"),
            },
            Selector::Timer { period_ms } => write!(f, "{period_ms}"),
            Selector::Init => f.write_str("init"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TemplateElem {
    Expr(Expr),
    Literal(Scalar),
    Formal,
}

/// A tuple under construction, one element per slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Template(Vec<TemplateElem>);

impl Template {
    pub fn from_json(v: &Json, at: &str) -> Result<Template, AgentError> {
        let Json::Array(items) = v else {
            return invalid(at, "template must be an array");
        };
        if !(1..=MAX_ARITY).contains(&items.len()) {
            return invalid(at, format!("template arity {} outside 1..4", items.len()));
        }
        Template::elems_from_json(items, at).map(Template)
    }

    fn elems_from_json(items: &[Json], at: &str) -> Result<Vec<TemplateElem>, AgentError> {
        items
            .iter()
            .enumerate()
            .map(|(i, item)| match item {
                Json::String(s) => Expr::parse(s)
                    .map(TemplateElem::Expr)
                    .or_else(|e| invalid(format!("{at}[{i}]"), e.to_string())),
                Json::Null => Ok(TemplateElem::Formal),
                Json::Number(_) | Json::Bool(_) => Ok(TemplateElem::Literal(
                    Scalar::from_json(item).expect("scalar json"),
                )),
                _ => invalid(format!("{at}[{i}]"), "template element must be a scalar"),
            })
            .collect()
    }

    fn elems_to_json(elems: &[TemplateElem]) -> Json {
        Json::Array(
            elems
                .iter()
                .map(|e| match e {
                    TemplateElem::Expr(x) => Json::String(x.source().to_string()),
                    TemplateElem::Literal(s) => s.to_json(),
                    TemplateElem::Formal => Json::Null,
                })
                .collect(),
        )
    }

    pub fn to_json(&self) -> Json {
        Template::elems_to_json(&self.0)
    }

    fn eval_elems(elems: &[TemplateElem], scope: &dyn Scope) -> Result<Vec<Scalar>, EvalError> {
        elems
            .iter()
            .map(|e| match e {
                TemplateElem::Expr(x) => x.eval(scope),
                TemplateElem::Literal(s) => Ok(s.clone()),
                TemplateElem::Formal => Ok(Scalar::Null),
            })
            .collect()
    }

    pub fn instantiate(&self, scope: &dyn Scope) -> Result<Tuple, EvalError> {
        let values = Template::eval_elems(&self.0, scope)?
            .iter()
            .map(Scalar::to_value)
            .collect::<Result<Vec<_>, _>>()?;
        Tuple::new(values).map_err(|e| EvalError(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Out { space: String, template: Template },
    Notify { space: String, template: Template },
    Log(Vec<TemplateElem>),
    Set { var: String, expr: Expr },
}

impl Action {
    fn from_json(v: &Json, at: &str) -> Result<Action, AgentError> {
        let Some((kind, body)) = v.as_object().filter(|o| o.len() == 1).and_then(|o| o.iter().next())
        else {
            return invalid(at, "action must be an object with one key");
        };
        let field = |name: &str| {
            body.get(name)
                .ok_or_else(|| AgentError::Invalid {
                    at: at.to_string(),
                    msg: format!("{kind} needs {name:?}"),
                })
        };
        let space = || -> Result<String, AgentError> {
            match field("space")? {
                Json::String(s) if is_space_name(s) => Ok(s.clone()),
                _ => invalid(at, "bad space name"),
            }
        };
        match kind.as_str() {
            "out" => Ok(Action::Out {
                space: space()?,
                template: Template::from_json(field("tuple")?, &format!("{at}.tuple"))?,
            }),
            "notify" => Ok(Action::Notify {
                space: space()?,
                template: Template::from_json(field("tuple")?, &format!("{at}.tuple"))?,
            }),
            "log" => match body {
                Json::Array(items) if !items.is_empty() => {
                    Template::elems_from_json(items, at).map(Action::Log)
                }
                _ => invalid(at, "log needs a non-empty array"),
            },
            "set" => {
                let var = match field("var")? {
                    Json::String(s) if expr::is_var_name(s) => s.clone(),
                    _ => return invalid(at, "bad variable name"),
                };
                let expr = match field("expr")? {
                    Json::String(s) => Expr::parse(s).or_else(|e| invalid(at, e.to_string()))?,
                    other => Expr::literal(
                        Scalar::from_json(other)
                            .ok_or_else(|| AgentError::Invalid {
                                at: at.to_string(),
                                msg: "bad expression".into(),
                            })?,
                    ),
                };
                Ok(Action::Set { var, expr })
            }
            other => invalid(at, format!("unknown action {other:?}")),
        }
    }

    fn to_json(&self) -> Json {
        match self {
            Action::Out { space, template } => {
                json!({"out": {"space": space, "tuple": template.to_json()}})
            }
            Action::Notify { space, template } => {
                json!({"notify": {"space": space, "tuple": template.to_json()}})
            }
            Action::Log(elems) => json!({ "log": Template::elems_to_json(elems) }),
            Action::Set { var, expr } => json!({"set": {"var": var, "expr": expr.source()}}),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Consume {
    Const(bool),
    Expr(Expr),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub selector: Selector,
    pub condition: Option<Expr>,
    pub actions: Vec<Action>,
    pub consume: Consume,
}

impl Rule {
    fn from_json(v: &Json, at: &str) -> Result<Rule, AgentError> {
        let Some(obj) = v.as_object() else {
            return invalid(at, "rule must be an object");
        };
        for key in obj.keys() {
            if !["on", "if", "do", "consume"].contains(&key.as_str()) {
                return invalid(at, format!("unknown field {key:?}"));
            }
        }
        let on_at = format!("{at}.on");
        let selector = match obj.get("on") {
            Some(Json::String(s)) => Selector::parse(s).map_err(|e| AgentError::Invalid {
                at: on_at.clone(),
                msg: e.to_string(),
            })?,
            Some(Json::Number(n)) => match n.as_u64() {
                Some(p) => Selector::timer(p, &on_at)?,
                None => return invalid(on_at, "timer period must be a positive integer"),
            },
            _ => return invalid(on_at, "missing selector"),
        };
        let condition = match obj.get("if") {
            None | Some(Json::Null) => None,
            Some(Json::String(s)) => {
                Some(Expr::parse(s).or_else(|e| invalid(format!("{at}.if"), e.to_string()))?)
            }
            Some(_) => return invalid(format!("{at}.if"), "condition must be a string"),
        };
        let actions = match obj.get("do") {
            None => Vec::new(),
            Some(Json::Array(items)) => items
                .iter()
                .enumerate()
                .map(|(i, a)| Action::from_json(a, &format!("{at}.do[{i}]")))
                .collect::<Result<_, _>>()?,
            Some(_) => return invalid(format!("{at}.do"), "actions must be an array"),
        };
        let consume = match obj.get("consume") {
            None | Some(Json::Null) => Consume::Const(false),
            Some(Json::Bool(b)) => Consume::Const(*b),
            Some(Json::String(s)) => Consume::Expr(
                Expr::parse(s).or_else(|e| invalid(format!("{at}.consume"), e.to_string()))?,
            ),
            Some(_) => return invalid(format!("{at}.consume"), "must be a boolean or expression"),
        };
        Ok(Rule {
            selector,
            condition,
            actions,
            consume,
        })
    }

    fn to_json(&self) -> Json {
        let mut obj = Map::new();
        obj.insert("on".into(), self.selector.to_json());
        if let Some(c) = &self.condition {
            obj.insert("if".into(), Json::String(c.source().to_string()));
        }
        obj.insert(
            "do".into(),
            Json::Array(self.actions.iter().map(Action::to_json).collect()),
        );
        match &self.consume {
            Consume::Const(false) => {}
            Consume::Const(true) => {
                obj.insert("consume".into(), Json::Bool(true));
            }
            Consume::Expr(e) => {
                obj.insert("consume".into(), Json::String(e.source().to_string()));
            }
        }
        Json::Object(obj)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentDefinition {
    pub name: String,
    pub vars: BTreeMap<String, Scalar>,
    pub rules: Vec<Rule>,
}

pub fn parse_agent(doc: &str) -> Result<AgentDefinition, AgentError> {
    let v: Json = serde_json::from_str(doc).map_err(|e| AgentError::Json(e.to_string()))?;
    AgentDefinition::from_json(&v)
}

pub fn serialize_agent(def: &AgentDefinition) -> String {
    def.to_json().to_string()
}

impl AgentDefinition {
    pub fn from_json(v: &Json) -> Result<AgentDefinition, AgentError> {
        let Some(obj) = v.as_object() else {
            return invalid("document", "must be an object");
        };
        for key in obj.keys() {
            if !["name", "vars", "rules"].contains(&key.as_str()) {
                return invalid("document", format!("unknown field {key:?}"));
            }
        }
        let name = match obj.get("name") {
            Some(Json::String(s)) if !s.is_empty() && Value::string(s.as_str()).is_ok() => {
                s.clone()
            }
            _ => return invalid("name", "must be a non-empty 7-bit string"),
        };
        let mut vars = BTreeMap::new();
        match obj.get("vars") {
            None => {}
            Some(Json::Object(m)) => {
                for (k, val) in m {
                    if !expr::is_var_name(k) {
                        return invalid(format!("vars.{k}"), "not a usable variable name");
                    }
                    let s = Scalar::from_json(val).ok_or_else(|| AgentError::Invalid {
                        at: format!("vars.{k}"),
                        msg: "must be a scalar".into(),
                    })?;
                    vars.insert(k.clone(), s);
                }
            }
            Some(_) => return invalid("vars", "must be an object"),
        }
        let rules: Vec<Rule> = match obj.get("rules") {
            Some(Json::Array(items)) => items
                .iter()
                .enumerate()
                .map(|(i, r)| Rule::from_json(r, &format!("rules[{i}]")))
                .collect::<Result<_, _>>()?,
            _ => return invalid("rules", "must be an array"),
        };
        for (i, rule) in rules.iter().enumerate() {
            for (j, action) in rule.actions.iter().enumerate() {
                if let Action::Set { var, .. } = action {
                    if !vars.contains_key(var) {
                        return invalid(
                            format!("rules[{i}].do[{j}]"),
                            format!("undeclared variable {var:?}"),
                        );
                    }
                }
            }
        }
        Ok(AgentDefinition { name, vars, rules })
    }

    pub fn to_json(&self) -> Json {
        let vars: Map<String, Json> = self
            .vars
            .iter()
            .map(|(k, v)| (k.clone(), v.to_json()))
            .collect();
        json!({
            "name": self.name,
            "vars": vars,
            "rules": self.rules.iter().map(Rule::to_json).collect::<Vec<_>>(),
        })
    }
}

/// Builds the active tuple `('AGENT', name, document)` for migration.
pub fn agent_tuple(def: &AgentDefinition) -> Result<Tuple, AgentError> {
    let payload = serialize_agent(def);
    let tuple = Tuple::new(vec![
        Value::string(AGENT_TAG).expect("ascii"),
        Value::string(def.name.as_str()).or_else(|e| invalid("name", e.to_string()))?,
        Value::string(payload).or_else(|e| invalid("payload", e.to_string()))?,
    ])
    .or_else(|e| invalid("payload", e.to_string()))?;
    let msg = WireMessage::new(Opcode::Out, 0, tuple.clone());
    let len = msg.encoded_len();
    if len > UDP_MAX_MESSAGE || encode_message(&msg, UDP_MAX_MESSAGE).is_err() {
        return Err(AgentError::TooLarge {
            len,
            limit: UDP_MAX_MESSAGE,
        });
    }
    Ok(tuple)
}

/// Recognises an active tuple and parses the agent it carries.
pub fn agent_from_tuple(t: &Tuple) -> Option<Result<AgentDefinition, AgentError>> {
    match t.values() {
        [Value::Str(tag), Value::Str(_), Value::Str(doc)] if tag == AGENT_TAG => {
            Some(parse_agent(doc))
        }
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventClass {
    Ts,
    Sensor,
    Timer,
    Init,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentEvent {
    pub class: EventClass,
    pub time: u64,
    pub space: Option<String>,
    pub tuple: Option<Tuple>,
    pub from: Option<String>,
    pub rssi: Option<f64>,
    pub sensor_name: Option<String>,
    pub sensor: Option<f64>,
    pub sensor0: Option<f64>,
    pub period: Option<u64>,
}

impl AgentEvent {
    fn bare(class: EventClass, time: u64) -> Self {
        AgentEvent {
            class,
            time,
            space: None,
            tuple: None,
            from: None,
            rssi: None,
            sensor_name: None,
            sensor: None,
            sensor0: None,
            period: None,
        }
    }

    pub fn ts(space: &str, tuple: Tuple, from: &str, rssi: f64, time: u64) -> Self {
        AgentEvent {
            space: Some(space.to_string()),
            tuple: Some(tuple),
            from: Some(from.to_string()),
            rssi: Some(rssi),
            ..AgentEvent::bare(EventClass::Ts, time)
        }
    }

    /// `previous` is the prior reading of the same sensor; on the first
    /// reading pass `None` and `sensor0` equals `value`.
    pub fn sensor(name: &str, value: f64, previous: Option<f64>, time: u64) -> Self {
        AgentEvent {
            sensor_name: Some(name.to_string()),
            sensor: Some(value),
            sensor0: Some(previous.unwrap_or(value)),
            ..AgentEvent::bare(EventClass::Sensor, time)
        }
    }

    pub fn timer(period_ms: u64, time: u64) -> Self {
        AgentEvent {
            period: Some(period_ms),
            ..AgentEvent::bare(EventClass::Timer, time)
        }
    }

    pub fn init(time: u64) -> Self {
        AgentEvent::bare(EventClass::Init, time)
    }
}

struct EventScope<'a> {
    ev: &'a AgentEvent,
    vars: &'a BTreeMap<String, Scalar>,
}

impl Scope for EventScope<'_> {
    fn builtin(&self, name: &str) -> Option<Scalar> {
        let ev = self.ev;
        match name {
            "sensor" => ev.sensor.map(Scalar::Num),
            "sensor0" => ev.sensor0.map(Scalar::Num),
            "time" => Some(Scalar::Num(ev.time as f64)),
            "from" => ev.from.clone().map(Scalar::Str),
            "rssi" => ev.rssi.map(Scalar::Num),
            "t" | "tuple" => ev.tuple.as_ref().map(|t| Scalar::Str(t.to_string())),
            _ => None,
        }
    }

    fn tuple(&self) -> Option<&Tuple> {
        self.ev.tuple.as_ref()
    }

    fn var(&self, name: &str) -> Option<Scalar> {
        self.vars.get(name).cloned()
    }
}

/// Side effects requested by an agent. The node applies them.
#[derive(Debug, Clone, PartialEq)]
pub enum AgentOutput {
    Out { space: String, tuple: Tuple },
    Notify { space: String, tuple: Tuple },
    Log(String),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DispatchResult {
    pub outputs: Vec<AgentOutput>,
    pub consumed: bool,
    /// Rules whose actions all completed.
    pub fired: usize,
    pub errors: Vec<String>,
}

impl DispatchResult {
    fn merge(&mut self, other: DispatchResult) {
        self.outputs.extend(other.outputs);
        self.consumed |= other.consumed;
        self.fired += other.fired;
        self.errors.extend(other.errors);
    }
}

/// A running agent with its current variable values and timer state.
#[derive(Debug, Clone)]
pub struct AgentInstance {
    def: AgentDefinition,
    init_done: bool,
    // period -> next due time
    timers: BTreeMap<u64, u64>,
}

impl AgentInstance {
    pub fn new(def: AgentDefinition) -> Self {
        AgentInstance {
            def,
            init_done: false,
            timers: BTreeMap::new(),
        }
    }

    pub fn name(&self) -> &str {
        &self.def.name
    }

    pub fn definition(&self) -> &AgentDefinition {
        &self.def
    }

    pub fn var(&self, name: &str) -> Option<&Scalar> {
        self.def.vars.get(name)
    }

    pub fn started(&self) -> bool {
        self.init_done
    }

    /// Runs init rules once and arms timers relative to `now`.
    pub fn start(&mut self, now: u64) -> DispatchResult {
        if self.init_done {
            return DispatchResult::default();
        }
        for rule in &self.def.rules {
            if let Selector::Timer { period_ms } = rule.selector {
                self.timers.insert(period_ms, now + period_ms);
            }
        }
        self.dispatch(&AgentEvent::init(now))
    }

    pub fn next_timer_due(&self) -> Option<u64> {
        self.timers.values().min().copied()
    }

    /// Timer events whose tick time is `<= now`, oldest first. Missed ticks
    /// are all delivered.
    pub fn due_timers(&mut self, now: u64) -> Vec<AgentEvent> {
        let mut out = Vec::new();
        for (&period, next) in self.timers.iter_mut() {
            while *next <= now {
                out.push(AgentEvent::timer(period, *next));
                *next += period;
            }
        }
        out.sort_by_key(|e| e.time);
        out
    }

    /// Runs timer rules for every due tick.
    pub fn run_timers(&mut self, now: u64) -> DispatchResult {
        let mut result = DispatchResult::default();
        for ev in self.due_timers(now) {
            result.merge(self.dispatch(&ev));
        }
        result
    }

    fn selector_matches(&self, rule: &Rule, ev: &AgentEvent, errors: &mut Vec<String>) -> bool {
        match (&rule.selector, ev.class) {
            (Selector::Init, EventClass::Init) => !self.init_done,
            (Selector::Timer { period_ms }, EventClass::Timer) => ev.period == Some(*period_ms),
            (Selector::Ts { space, pattern }, EventClass::Ts) => {
                ev.space.as_deref() == Some(space.as_str())
                    && ev.tuple.as_ref().is_some_and(|t| match_pattern(pattern, t))
            }
            (Selector::Sensor { name, condition }, EventClass::Sensor) => {
                ev.sensor_name.as_deref() == Some(name.as_str())
                    && condition.as_ref().is_none_or(|c| {
                        self.holds(c, ev, &self.def.vars, errors)
                    })
            }
            _ => false,
        }
    }

    fn holds(
        &self,
        e: &Expr,
        ev: &AgentEvent,
        vars: &BTreeMap<String, Scalar>,
        errors: &mut Vec<String>,
    ) -> bool {
        match e.eval(&EventScope { ev, vars }) {
            Ok(v) => v.truthy(),
            Err(err) => {
                log::warn!("agent {}: {e}: {err}", self.def.name);
                errors.push(format!("{e}: {err}"));
                false
            }
        }
    }

    /// Runs every matching rule in definition order. A rule whose actions
    /// fail to evaluate leaves no trace; other rules still run.
    pub fn dispatch(&mut self, ev: &AgentEvent) -> DispatchResult {
        let mut result = DispatchResult::default();
        let rules = self.def.rules.clone();
        for rule in &rules {
            if !self.selector_matches(rule, ev, &mut result.errors) {
                continue;
            }
            if let Some(c) = &rule.condition {
                if !self.holds(c, ev, &self.def.vars, &mut result.errors) {
                    continue;
                }
            }
            let mut vars = self.def.vars.clone();
            match run_actions(&rule.actions, ev, &mut vars) {
                Ok(outputs) => {
                    self.def.vars = vars;
                    result.outputs.extend(outputs);
                    result.fired += 1;
                }
                Err(err) => {
                    log::warn!("agent {}: rule {}: {err}", self.def.name, rule.selector);
                    result.errors.push(format!("{}: {err}", rule.selector));
                    continue;
                }
            }
            if ev.class == EventClass::Ts {
                result.consumed |= match &rule.consume {
                    Consume::Const(b) => *b,
                    Consume::Expr(e) => self.holds(e, ev, &self.def.vars, &mut result.errors),
                };
            }
        }
        if ev.class == EventClass::Init {
            self.init_done = true;
        }
        result
    }

    /// Current state as a document `parse_agent` accepts.
    pub fn serialize(&self) -> String {
        serialize_agent(&self.def)
    }
}

fn run_actions(
    actions: &[Action],
    ev: &AgentEvent,
    vars: &mut BTreeMap<String, Scalar>,
) -> Result<Vec<AgentOutput>, EvalError> {
    let mut out = Vec::new();
    for action in actions {
        let scope = EventScope { ev, vars };
        match action {
            Action::Out { space, template } => out.push(AgentOutput::Out {
                space: space.clone(),
                tuple: template.instantiate(&scope)?,
            }),
            Action::Notify { space, template } => out.push(AgentOutput::Notify {
                space: space.clone(),
                tuple: template.instantiate(&scope)?,
            }),
            Action::Log(elems) => {
                let parts = Template::eval_elems(elems, &scope)?;
                let line: Vec<String> = parts.iter().map(Scalar::to_string).collect();
                out.push(AgentOutput::Log(line.join(" ")));
            }
            Action::Set { var, expr } => {
                let v = expr.eval(&scope)?;
                vars.insert(var.clone(), v);
            }
        }
    }
    Ok(out)
}

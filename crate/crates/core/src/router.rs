//! Pattern-based forwarding of tuples between a node's spaces.
//!
//! Rules are tried in (priority, id) order and the first match wins. The
//! rule set is replaced as a whole on every mutation, so a routing decision
//! always sees one consistent version.

use std::sync::{Arc, RwLock};

use serde_json::{json, Value as Json};
use thiserror::Error;

use crate::agent::expr::MapScope;
use crate::agent::{AgentError, Template};
use crate::codec::{Tuple, Value};
use crate::space::{match_pattern, Pattern};

/// First element of an admin tuple `('ROUTE', op, doc)`.
pub const ROUTE_TAG: &str = "ROUTE";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RouterError {
    #[error("bad route: {0}")]
    Invalid(String),
    #[error("duplicate rule id {0:?}")]
    Duplicate(String),
    #[error("no such rule {0:?}")]
    NoSuchRule(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RouteMode {
    Copy,
    Move,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RouteRule {
    pub id: String,
    pub from_space: String,
    pub pattern: Pattern,
    pub to_space: String,
    pub mode: RouteMode,
    /// Lower runs first.
    pub priority: i32,
    pub transform: Option<Template>,
}

impl RouteRule {
    pub fn new(
        id: &str,
        from_space: &str,
        pattern: Pattern,
        to_space: &str,
        mode: RouteMode,
    ) -> Result<Self, RouterError> {
        let rule = RouteRule {
            id: id.to_string(),
            from_space: from_space.to_string(),
            pattern,
            to_space: to_space.to_string(),
            mode,
            priority: 0,
            transform: None,
        };
        rule.validate()?;
        Ok(rule)
    }

    pub fn validate(&self) -> Result<(), RouterError> {
        if self.id.is_empty() {
            return Err(RouterError::Invalid("empty id".into()));
        }
        if self.from_space.is_empty() || self.to_space.is_empty() {
            return Err(RouterError::Invalid("empty space name".into()));
        }
        if self.from_space == self.to_space {
            return Err(RouterError::Invalid(format!(
                "rule {:?} routes {} to itself",
                self.id, self.from_space
            )));
        }
        Ok(())
    }

    pub fn from_json(v: &Json) -> Result<Self, RouterError> {
        let bad = |m: &str| RouterError::Invalid(m.to_string());
        let obj = v.as_object().ok_or_else(|| bad("rule must be an object"))?;
        for key in obj.keys() {
            if !["id", "from", "to", "pattern", "mode", "priority", "transform"]
                .contains(&key.as_str())
            {
                return Err(RouterError::Invalid(format!("unknown field {key:?}")));
            }
        }
        let text = |k: &str| {
            obj.get(k)
                .and_then(Json::as_str)
                .map(str::to_string)
                .ok_or_else(|| RouterError::Invalid(format!("{k} must be a string")))
        };
        let pattern = obj
            .get("pattern")
            .ok_or_else(|| bad("missing pattern"))
            .and_then(|p| Tuple::from_json(p).map_err(|e| RouterError::Invalid(e.to_string())))?;
        let mode = match obj.get("mode").and_then(Json::as_str) {
            None | Some("copy") => RouteMode::Copy,
            Some("move") => RouteMode::Move,
            Some(other) => return Err(RouterError::Invalid(format!("bad mode {other:?}"))),
        };
        let priority = match obj.get("priority") {
            None => 0,
            Some(p) => p
                .as_i64()
                .and_then(|p| i32::try_from(p).ok())
                .ok_or_else(|| bad("priority must be an integer"))?,
        };
        let transform = match obj.get("transform") {
            None | Some(Json::Null) => None,
            Some(t) => Some(
                Template::from_json(t, "transform")
                    .map_err(|e: AgentError| RouterError::Invalid(e.to_string()))?,
            ),
        };
        let rule = RouteRule {
            id: text("id")?,
            from_space: text("from")?,
            to_space: text("to")?,
            pattern: Pattern::new(pattern),
            mode,
            priority,
            transform,
        };
        rule.validate()?;
        Ok(rule)
    }

    pub fn parse(doc: &str) -> Result<Self, RouterError> {
        let v: Json = serde_json::from_str(doc).map_err(|e| RouterError::Invalid(e.to_string()))?;
        RouteRule::from_json(&v)
    }

    pub fn to_json(&self) -> Json {
        let mut v = json!({
            "id": self.id,
            "from": self.from_space,
            "to": self.to_space,
            "pattern": self.pattern.as_tuple().to_json(),
            "mode": match self.mode { RouteMode::Copy => "copy", RouteMode::Move => "move" },
            "priority": self.priority,
        });
        if let Some(t) = &self.transform {
            v["transform"] = t.to_json();
        }
        v
    }
}

/// One tuple the router wants placed in another space.
#[derive(Debug, Clone, PartialEq)]
pub struct RouteEmission {
    pub rule_id: String,
    pub to_space: String,
    pub tuple: Tuple,
    pub mode: RouteMode,
}

/// First-match routing over `rules`, which must already be sorted.
pub fn apply_routes(rules: &[RouteRule], t: &Tuple, source: &str) -> Vec<RouteEmission> {
    for rule in rules {
        if rule.from_space != source || !match_pattern(&rule.pattern, t) {
            continue;
        }
        let tuple = match &rule.transform {
            None => t.clone(),
            Some(tpl) => {
                let scope = MapScope {
                    tuple: Some(t.clone()),
                    ..MapScope::default()
                };
                match tpl.instantiate(&scope) {
                    Ok(out) => out,
                    Err(e) => {
                        log::warn!("route {}: transform failed: {e}", rule.id);
                        continue;
                    }
                }
            }
        };
        return vec![RouteEmission {
            rule_id: rule.id.clone(),
            to_space: rule.to_space.clone(),
            tuple,
            mode: rule.mode,
        }];
    }
    Vec::new()
}

#[derive(Debug, Default)]
pub struct Router {
    rules: RwLock<Arc<Vec<RouteRule>>>,
}

impl Router {
    pub fn new() -> Self {
        Router::default()
    }

    pub fn with_rules(rules: Vec<RouteRule>) -> Result<Self, RouterError> {
        let r = Router::new();
        for rule in rules {
            r.add(rule)?;
        }
        Ok(r)
    }

    fn current(&self) -> Arc<Vec<RouteRule>> {
        self.rules
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .clone()
    }

    fn update<T>(
        &self,
        f: impl FnOnce(&mut Vec<RouteRule>) -> Result<T, RouterError>,
    ) -> Result<T, RouterError> {
        let mut guard = self.rules.write().unwrap_or_else(|e| e.into_inner());
        let mut next = guard.as_ref().clone();
        let out = f(&mut next)?;
        next.sort_by(|a, b| a.priority.cmp(&b.priority).then_with(|| a.id.cmp(&b.id)));
        *guard = Arc::new(next);
        Ok(out)
    }

    pub fn add(&self, rule: RouteRule) -> Result<(), RouterError> {
        rule.validate()?;
        self.update(|rules| {
            if rules.iter().any(|r| r.id == rule.id) {
                return Err(RouterError::Duplicate(rule.id.clone()));
            }
            rules.push(rule);
            Ok(())
        })
    }

    pub fn remove(&self, id: &str) -> Result<RouteRule, RouterError> {
        self.update(|rules| {
            let i = rules
                .iter()
                .position(|r| r.id == id)
                .ok_or_else(|| RouterError::NoSuchRule(id.to_string()))?;
            Ok(rules.remove(i))
        })
    }

    /// Rules in evaluation order.
    pub fn list(&self) -> Arc<Vec<RouteRule>> {
        self.current()
    }

    pub fn is_empty(&self) -> bool {
        self.current().is_empty()
    }

    pub fn apply(&self, t: &Tuple, source: &str) -> Vec<RouteEmission> {
        apply_routes(&self.current(), t, source)
    }

    /// Handles `('ROUTE', 'add', rule-doc)`, `('ROUTE', 'remove', id)` and
    /// `('ROUTE', 'list', _)`. Returns `None` for other tuples.
    pub fn admin(&self, t: &Tuple) -> Option<Result<String, RouterError>> {
        let [Value::Str(tag), Value::Str(op), arg] = t.values() else {
            return None;
        };
        if tag != ROUTE_TAG {
            return None;
        }
        let arg = arg.as_str().unwrap_or("");
        Some(match op.as_str() {
            "add" => RouteRule::parse(arg).and_then(|r| {
                let id = r.id.clone();
                self.add(r).map(|_| format!("added {id}"))
            }),
            "remove" => self.remove(arg).map(|r| format!("removed {}", r.id)),
            "list" => Ok(Json::Array(self.current().iter().map(RouteRule::to_json).collect())
                .to_string()),
            other => Err(RouterError::Invalid(format!("unknown admin op {other:?}"))),
        })
    }
}

//! Scenario documents.

use std::collections::{BTreeMap, BTreeSet};

use serde::Deserialize;
use serde_json::Value as Json;

use crate::agent::{AgentDefinition, Template};
use crate::ble_sim::{RadioConfig, TimingConfig, Trajectory, Waypoint};
use crate::router::RouteRule;

use super::SimError;

const BUILTIN: [(&str, &str); 3] = [
    ("fig2-sweep", include_str!("../../scenarios/fig2-sweep.json")),
    ("fig8-distance", include_str!("../../scenarios/fig8-distance.json")),
    ("smart-building", include_str!("../../scenarios/smart-building.json")),
];

pub fn builtin_names() -> Vec<&'static str> {
    BUILTIN.iter().map(|(n, _)| *n).collect()
}

pub fn builtin_document(name: &str) -> Option<&'static str> {
    BUILTIN.iter().find(|(n, _)| *n == name).map(|(_, d)| *d)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Beacon,
    Mobile,
    Server,
}

impl NodeKind {
    fn default_spaces(self) -> Vec<String> {
        let names: &[&str] = match self {
            NodeKind::Beacon => &["ble", "udp"],
            NodeKind::Mobile => &["ble"],
            NodeKind::Server => &["udp"],
        };
        names.iter().map(|s| s.to_string()).collect()
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub id: String,
    pub kind: NodeKind,
    pub position: Option<[f64; 2]>,
    pub waypoints: Option<Vec<Waypoint>>,
    #[serde(default, rename = "loop")]
    pub looped: bool,
    pub spaces: Option<Vec<String>>,
    #[serde(default)]
    pub agents: Vec<Json>,
    #[serde(default)]
    pub routes: Vec<Json>,
    /// Space name to FPE secret.
    #[serde(default)]
    pub keys: BTreeMap<String, String>,
    #[serde(default)]
    pub agent_install: Vec<String>,
}

impl NodeSpec {
    pub fn spaces(&self) -> Vec<String> {
        self.spaces
            .clone()
            .unwrap_or_else(|| self.kind.default_spaces())
    }

    pub fn trajectory(&self) -> Result<Trajectory, SimError> {
        match (&self.position, &self.waypoints) {
            (Some([x, y]), None) => {
                if !(x.is_finite() && y.is_finite()) {
                    return Err(SimError::Invalid(format!("nodes.{}.position must be finite", self.id)));
                }
                Ok(Trajectory::fixed(*x, *y))
            }
            (None, Some(w)) => Trajectory::new(w.clone(), self.looped)
                .map_err(|e| SimError::Invalid(format!("nodes.{}.waypoints: {e}", self.id))),
            (None, None) => Ok(Trajectory::fixed(0.0, 0.0)),
            (Some(_), Some(_)) => Err(SimError::Invalid(format!(
                "nodes.{}: give position or waypoints, not both",
                self.id
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrafficOp {
    Out,
    Notify,
}

/// Suppresses a generator tick unless the light level or position changed
/// enough since the last sent tuple.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Gate {
    pub light_threshold: f64,
    pub move_threshold_m: f64,
}

/// Random-walk light level seen by a generator.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LightModel {
    #[serde(default = "default_light_start")]
    pub start: f64,
    #[serde(default)]
    pub step_sigma: f64,
}

fn default_light_start() -> f64 {
    500.0
}

impl Default for LightModel {
    fn default() -> Self {
        LightModel {
            start: default_light_start(),
            step_sigma: 0.0,
        }
    }
}

fn default_ble() -> String {
    "ble".into()
}

fn default_udp() -> String {
    "udp".into()
}

fn default_out() -> TrafficOp {
    TrafficOp::Out
}

/// Periodic tuple source. Template expressions see `light`, `n` (1-based
/// message count), `x`, `y` and `time` (ms).
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficSpec {
    pub node: String,
    #[serde(default = "default_ble")]
    pub space: String,
    pub period_ms: u64,
    #[serde(default)]
    pub jitter_ms: u64,
    #[serde(default = "default_out")]
    pub op: TrafficOp,
    pub tuple: Json,
    #[serde(default)]
    pub start_ms: u64,
    pub gate: Option<Gate>,
    #[serde(default)]
    pub light: LightModel,
}

/// A server issuing `('SURVEY', id, 'Q')` and timing the first
/// `('ANSWER', id, _)` that comes back.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurveySpec {
    pub server: String,
    #[serde(default = "default_udp")]
    pub space: String,
    pub period_ms: u64,
    #[serde(default)]
    pub start_ms: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "lowercase", tag = "kind")]
pub enum Sweep {
    /// Two-node link model over a grid of windows and dead times.
    Link {
        t_ad_ms: Vec<f64>,
        t_de_ms: Vec<f64>,
        trials: u32,
        #[serde(default = "default_link_distance")]
        distance_m: f64,
    },
    /// Co-located mobiles and beacons placed `srd` metres away, one run per
    /// (srd, dt) point with the mobiles sending every `dt` ms.
    Distance {
        srd_m: Vec<f64>,
        dt_ms: Vec<u64>,
        #[serde(default = "default_four")]
        mobiles: usize,
        #[serde(default = "default_four")]
        beacons: usize,
        run_ms: u64,
        tuple: Json,
        #[serde(default)]
        jitter_ms: u64,
    },
}

fn default_link_distance() -> f64 {
    1.0
}

fn default_four() -> usize {
    4
}

fn default_latency() -> u64 {
    1
}

fn default_seed() -> u64 {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub duration_ms: i64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub radio: RadioConfig,
    #[serde(default)]
    pub timing: TimingConfig,
    #[serde(default)]
    pub udp_drop_rate: f64,
    #[serde(default = "default_latency")]
    pub udp_latency_ms: u64,
    #[serde(default)]
    pub nodes: Vec<NodeSpec>,
    #[serde(default)]
    pub traffic: Vec<TrafficSpec>,
    #[serde(default)]
    pub surveys: Vec<SurveySpec>,
    pub sweep: Option<Sweep>,
    pub sample_every_ms: Option<u64>,
}

/// Parses and validates a scenario document.
pub fn load_scenario(doc: &str) -> Result<Scenario, SimError> {
    let de = &mut serde_json::Deserializer::from_str(doc);
    let s: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        SimError::Invalid(format!("{path}: {}", e.into_inner()))
    })?;
    s.validate()?;
    Ok(s)
}

/// Resolves a built-in name or reads a file.
pub fn resolve_scenario(name_or_path: &str) -> Result<Scenario, SimError> {
    match builtin_document(name_or_path) {
        Some(doc) => load_scenario(doc),
        None => {
            let doc = std::fs::read_to_string(name_or_path).map_err(|e| {
                SimError::Invalid(format!(
                    "{name_or_path:?} is neither a built-in scenario ({}) nor a readable file: {e}",
                    builtin_names().join(", ")
                ))
            })?;
            load_scenario(&doc)
        }
    }
}

fn bad<T>(msg: impl Into<String>) -> Result<T, SimError> {
    Err(SimError::Invalid(msg.into()))
}

impl Scenario {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.duration_ms <= 0 {
            return bad("duration_ms: must be > 0");
        }
        if !(0.0..=1.0).contains(&self.udp_drop_rate) {
            return bad("udp_drop_rate: must be in [0, 1]");
        }
        self.radio
            .validate()
            .or_else(|e| bad(format!("radio: {e}")))?;
        let mut ids = BTreeSet::new();
        let mut spaces: BTreeMap<&str, Vec<String>> = BTreeMap::new();
        for (i, n) in self.nodes.iter().enumerate() {
            if n.id.is_empty() || !ids.insert(n.id.as_str()) {
                return bad(format!("nodes[{i}].id: empty or duplicate {:?}", n.id));
            }
            n.trajectory()?;
            let sp = n.spaces();
            for s in sp.iter() {
                if s != "ble" && s != "udp" {
                    return bad(format!("nodes[{i}].spaces: unknown back-end {s:?}"));
                }
            }
            for (j, a) in n.agents.iter().enumerate() {
                AgentDefinition::from_json(a)
                    .or_else(|e| bad(format!("nodes[{i}].agents[{j}]: {e}")))?;
            }
            for (j, r) in n.routes.iter().enumerate() {
                RouteRule::from_json(r).or_else(|e| bad(format!("nodes[{i}].routes[{j}]: {e}")))?;
            }
            spaces.insert(n.id.as_str(), sp);
        }
        if spaces.values().any(|s| s.iter().any(|x| x == "ble")) {
            self.timing
                .validate()
                .or_else(|e| bad(format!("timing: {e}")))?;
        }
        for (i, t) in self.traffic.iter().enumerate() {
            match spaces.get(t.node.as_str()) {
                None => return bad(format!("traffic[{i}].node: unknown node {:?}", t.node)),
                Some(sp) if !sp.contains(&t.space) => {
                    return bad(format!("traffic[{i}].space: node {:?} has no {:?}", t.node, t.space))
                }
                _ => {}
            }
            if t.period_ms == 0 {
                return bad(format!("traffic[{i}].period_ms: must be > 0"));
            }
            Template::from_json(&t.tuple, &format!("traffic[{i}].tuple"))
                .or_else(|e| bad(e.to_string()))?;
        }
        for (i, s) in self.surveys.iter().enumerate() {
            match spaces.get(s.server.as_str()) {
                Some(sp) if sp.contains(&s.space) => {}
                _ => return bad(format!("surveys[{i}].server: no node {:?} with space {:?}", s.server, s.space)),
            }
            if s.period_ms == 0 {
                return bad(format!("surveys[{i}].period_ms: must be > 0"));
            }
        }
        if let Some(0) = self.sample_every_ms {
            return bad("sample_every_ms: must be > 0");
        }
        match &self.sweep {
            Some(Sweep::Link { trials, distance_m, t_ad_ms, t_de_ms }) => {
                if *trials == 0 {
                    return bad("sweep.trials: must be > 0");
                }
                if !(distance_m.is_finite() && *distance_m > 0.0) {
                    return bad("sweep.distance_m: must be > 0");
                }
                if t_ad_ms.iter().chain(t_de_ms).any(|v| !(v.is_finite() && *v >= 0.0)) {
                    return bad("sweep: times must be finite and >= 0");
                }
            }
            Some(Sweep::Distance { srd_m, dt_ms, run_ms, tuple, mobiles, beacons, .. }) => {
                if srd_m.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
                    return bad("sweep.srd_m: distances must be > 0");
                }
                if dt_ms.contains(&0) || *run_ms == 0 || *mobiles == 0 || *beacons == 0 {
                    return bad("sweep: dt_ms, run_ms, mobiles and beacons must be > 0");
                }
                self.timing
                    .validate()
                    .or_else(|e| bad(format!("timing: {e}")))?;
                Template::from_json(tuple, "sweep.tuple").or_else(|e| bad(e.to_string()))?;
            }
            None => {}
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_load() {
        for name in builtin_names() {
            resolve_scenario(name).unwrap_or_else(|e| panic!("{name}: {e}"));
        }
    }

    #[test]
    fn fig8_layout() {
        let s = resolve_scenario("fig8-distance").unwrap();
        match s.sweep {
            Some(Sweep::Distance { mobiles, beacons, .. }) => assert_eq!((mobiles, beacons), (4, 4)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_bad_documents() {
        assert!(load_scenario(r#"{"name":"x","duration_ms":-1}"#).is_err());
        let err = load_scenario(r#"{"name":"x","duration_ms":10,"nodes":[{"id":"a","kind":"robot"}]}"#)
            .unwrap_err();
        assert!(err.to_string().contains("nodes[0].kind"), "{err}");
        let err = load_scenario(r#"{"name":"x","duration_ms":10,"radio":{"p_t":-1}}"#).unwrap_err();
        assert!(err.to_string().contains("radio"), "{err}");
        assert!(load_scenario(r#"{"name":"x","duration_ms":10,"udp_drop_rate":2}"#).is_err());
        assert!(load_scenario(
            r#"{"name":"x","duration_ms":10,"nodes":[{"id":"a","kind":"server"}],
                "traffic":[{"node":"a","space":"ble","period_ms":10,"tuple":["1"]}]}"#
        )
        .is_err());
        assert!(resolve_scenario("/no/such/file.json").is_err());
    }
}

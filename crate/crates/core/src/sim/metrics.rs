//! Counters collected during a run and their CSV form.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::SimError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LinkCount {
    pub sent: u64,
    pub received: u64,
}

impl LinkCount {
    pub fn rate(&self) -> Option<f64> {
        (self.sent > 0).then(|| self.received as f64 / self.sent as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatencySample {
    pub survey: u64,
    pub issued_at: u64,
    pub answered_at: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpaceSample {
    pub time_ms: u64,
    pub node: String,
    pub space: String,
    pub tuples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fig2Row {
    pub t_ad_ms: f64,
    pub t_de_ms: f64,
    pub p1_analytic: f64,
    pub p1_simulated: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fig8Row {
    pub srd_m: f64,
    pub dt_ms: u64,
    pub reception_rate_pct: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Metrics {
    /// (space, sender, receiver) -> messages.
    pub links: BTreeMap<(String, String, String), LinkCount>,
    /// 1 m bins of sender-receiver distance at send time, BLE only.
    pub distance_bins: BTreeMap<u32, LinkCount>,
    pub latencies: Vec<LatencySample>,
    pub space_counts: Vec<SpaceSample>,
    pub summary: BTreeMap<String, f64>,
    pub fig2: Vec<Fig2Row>,
    pub fig8: Vec<Fig8Row>,
}

impl Metrics {
    /// Overall received/sent over every link of `space`.
    pub fn space_rate(&self, space: &str) -> Option<f64> {
        let mut total = LinkCount::default();
        for ((s, _, _), c) in &self.links {
            if s == space {
                total.sent += c.sent;
                total.received += c.received;
            }
        }
        total.rate()
    }

    pub fn summary_value(&self, key: &str) -> Option<f64> {
        self.summary.get(key).copied()
    }

    pub(crate) fn bump(&mut self, key: &str, by: f64) {
        *self.summary.entry(key.to_string()).or_default() += by;
    }
}

fn num(v: f64) -> String {
    format!("{v:.6}")
}

fn write(dir: &Path, name: &str, header: &[&str], rows: Vec<Vec<String>>) -> Result<PathBuf, SimError> {
    let path = dir.join(name);
    let mut w = csv::Writer::from_path(&path).map_err(|e| SimError::Io(format!("{}: {e}", path.display())))?;
    let io = |e: csv::Error| SimError::Io(format!("{}: {e}", path.display()));
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(&r).map_err(io)?;
    }
    w.flush().map_err(|e| SimError::Io(format!("{}: {e}", path.display())))?;
    Ok(path)
}

/// Writes one CSV per metric family into `dir`, creating it if needed.
/// Family files are always written, header-only when empty; `fig2.csv` and
/// `fig8.csv` only when the run produced rows.
pub fn emit_metrics(m: &Metrics, dir: &Path) -> Result<Vec<PathBuf>, SimError> {
    fs::create_dir_all(dir).map_err(|e| SimError::Io(format!("{}: {e}", dir.display())))?;
    let mut files = Vec::new();
    files.push(write(
        dir,
        "links.csv",
        &["space", "sender", "receiver", "sent", "received", "rate_pct"],
        m.links
            .iter()
            .map(|((space, s, r), c)| {
                vec![
                    space.clone(),
                    s.clone(),
                    r.clone(),
                    c.sent.to_string(),
                    c.received.to_string(),
                    c.rate().map(|x| num(100.0 * x)).unwrap_or_default(),
                ]
            })
            .collect(),
    )?);
    files.push(write(
        dir,
        "distance.csv",
        &["bin_start_m", "bin_end_m", "sent", "received", "rate_pct"],
        m.distance_bins
            .iter()
            .map(|(b, c)| {
                vec![
                    b.to_string(),
                    (b + 1).to_string(),
                    c.sent.to_string(),
                    c.received.to_string(),
                    c.rate().map(|x| num(100.0 * x)).unwrap_or_default(),
                ]
            })
            .collect(),
    )?);
    files.push(write(
        dir,
        "latency.csv",
        &["survey", "issued_ms", "answered_ms", "latency_ms"],
        m.latencies
            .iter()
            .map(|l| {
                vec![
                    l.survey.to_string(),
                    l.issued_at.to_string(),
                    l.answered_at.to_string(),
                    (l.answered_at - l.issued_at).to_string(),
                ]
            })
            .collect(),
    )?);
    files.push(write(
        dir,
        "spaces.csv",
        &["time_ms", "node", "space", "tuples"],
        m.space_counts
            .iter()
            .map(|s| {
                vec![
                    s.time_ms.to_string(),
                    s.node.clone(),
                    s.space.clone(),
                    s.tuples.to_string(),
                ]
            })
            .collect(),
    )?);
    files.push(write(
        dir,
        "summary.csv",
        &["metric", "value"],
        m.summary
            .iter()
            .map(|(k, v)| vec![k.clone(), num(*v)])
            .collect(),
    )?);
    if !m.fig2.is_empty() {
        files.push(write(
            dir,
            "fig2.csv",
            &["t_ad_ms", "t_de_ms", "p1_analytic", "p1_simulated"],
            m.fig2
                .iter()
                .map(|r| {
                    vec![
                        num(r.t_ad_ms),
                        num(r.t_de_ms),
                        num(r.p1_analytic),
                        num(r.p1_simulated),
                    ]
                })
                .collect(),
        )?);
    }
    if !m.fig8.is_empty() {
        files.push(write(
            dir,
            "fig8.csv",
            &["srd_m", "dt_ms", "reception_rate_pct"],
            m.fig8
                .iter()
                .map(|r| vec![num(r.srd_m), r.dt_ms.to_string(), num(r.reception_rate_pct)])
                .collect(),
        )?);
    }
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_metrics_give_header_only_files() {
        let dir = tempfile::tempdir().unwrap();
        let files = emit_metrics(&Metrics::default(), dir.path()).unwrap();
        assert_eq!(files.len(), 5);
        let links = fs::read_to_string(dir.path().join("links.csv")).unwrap();
        assert_eq!(links, "space,sender,receiver,sent,received,rate_pct\n");
        assert!(!dir.path().join("fig2.csv").exists());
    }

    #[test]
    fn fig_files_have_fixed_columns() {
        let dir = tempfile::tempdir().unwrap();
        let m = Metrics {
            fig2: vec![Fig2Row {
                t_ad_ms: 300.0,
                t_de_ms: 0.0,
                p1_analytic: 19.0 / 27.0,
                p1_simulated: 0.7,
            }],
            fig8: vec![Fig8Row {
                srd_m: 3.0,
                dt_ms: 500,
                reception_rate_pct: 97.5,
            }],
            ..Metrics::default()
        };
        emit_metrics(&m, dir.path()).unwrap();
        let fig2 = fs::read_to_string(dir.path().join("fig2.csv")).unwrap();
        assert_eq!(
            fig2,
            "t_ad_ms,t_de_ms,p1_analytic,p1_simulated\n300.000000,0.000000,0.703704,0.700000\n"
        );
        let fig8 = fs::read_to_string(dir.path().join("fig8.csv")).unwrap();
        assert_eq!(fig8.lines().next(), Some("srd_m,dt_ms,reception_rate_pct"));
    }

    #[test]
    fn unwritable_path_errors() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("f");
        fs::write(&file, "x").unwrap();
        assert!(emit_metrics(&Metrics::default(), &file.join("sub")).is_err());
    }

    #[test]
    fn rates() {
        let mut m = Metrics::default();
        m.links.insert(("ble".into(), "a".into(), "b".into()), LinkCount { sent: 4, received: 3 });
        m.links.insert(("udp".into(), "a".into(), "b".into()), LinkCount { sent: 1, received: 0 });
        assert_eq!(m.space_rate("ble"), Some(0.75));
        assert_eq!(m.space_rate("none"), None);
    }
}

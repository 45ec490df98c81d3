//! The `beets` command line.

use std::ffi::OsString;
use std::io::{self, BufRead, Write};
use std::net::Ipv4Addr;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::agent::{agent_tuple, parse_agent};
use crate::codec::{
    ble_pack, decode_message, encode_message, Opcode, Tuple, WireMessage, UDP_MAX_MESSAGE,
};
use crate::fpe::FpeTables;
use crate::live::{LiveNode, UDP_SPACE};
use crate::node::{Node, NodeConfig};
use crate::rpc::RpcConfig;
use crate::sim::{emit_metrics, resolve_scenario, run_scenario};
use crate::space::{Lifetime, Pattern};
use crate::udp::{UdpConfig, DEFAULT_PORT};

/// Environment variable holding the FPE key when `--key` is absent.
pub const KEY_ENV: &str = "BEETS_KEY";

#[derive(Debug, Parser)]
#[command(name = "beets", version, about = "Tuple spaces over broadcast radio and UDP")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a live node on the UDP back-end, reading commands from stdin.
    Node(NodeArgs),
    /// Run a simulation scenario and write metric CSVs.
    Sim(SimArgs),
    /// Encode or decode wire messages.
    #[command(subcommand)]
    Codec(CodecCmd),
    /// Agent document tools.
    #[command(subcommand)]
    Agent(AgentCmd),
}

#[derive(Debug, Args)]
struct NodeArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    id: Option<String>,
    #[arg(long)]
    port: Option<u16>,
    #[arg(long)]
    broadcast: Option<Ipv4Addr>,
    #[arg(long)]
    repeats: Option<u8>,
    #[arg(long)]
    key: Option<String>,
}

#[derive(Debug, Args)]
struct SimArgs {
    /// Built-in scenario name or path to a scenario document.
    #[arg(long)]
    scenario: String,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum CodecCmd {
    Encode {
        #[arg(long)]
        op: String,
        /// Tuple as a JSON array; null is a formal.
        #[arg(long)]
        tuple: String,
        #[arg(long, default_value_t = 0, value_parser = clap::value_parser!(u8).range(0..=3))]
        seq: u8,
        #[arg(long)]
        key: Option<String>,
        /// Also print the BLE advertisement layout.
        #[arg(long)]
        ble: bool,
    },
    Decode {
        #[arg(long)]
        hex: String,
        #[arg(long)]
        key: Option<String>,
    },
}

#[derive(Debug, Subcommand)]
enum AgentCmd {
    /// Validate an agent document.
    Check { file: PathBuf },
}

struct Failure(String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(e.to_string())
    }
}

/// Runs the CLI and returns the process exit code: 0 ok, 1 runtime error,
/// 2 usage error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let res = match cli.cmd {
        Command::Node(a) => {
            drop(out);
            run_node(a)
        }
        Command::Sim(a) => run_sim(a, &mut out),
        Command::Codec(c) => run_codec(c, &mut out),
        Command::Agent(AgentCmd::Check { file }) => check_agent(&file, &mut out),
    };
    match res {
        Ok(()) => 0,
        Err(Failure(msg)) => {
            eprintln!("error: {msg}");
            1
        }
    }
}

fn resolve_key(flag: Option<String>, config: Option<String>) -> Option<String> {
    flag.or_else(|| std::env::var(KEY_ENV).ok().filter(|k| !k.is_empty()))
        .or(config)
}

fn tables(key: Option<String>) -> Result<Option<FpeTables>, Failure> {
    resolve_key(key, None)
        .map(|k| FpeTables::from_secret(&k))
        .transpose()
        .map_err(Failure::from)
}

fn run_codec(c: CodecCmd, out: &mut impl Write) -> Result<(), Failure> {
    match c {
        CodecCmd::Encode {
            op,
            tuple,
            seq,
            key,
            ble,
        } => {
            let op: Opcode = op.parse()?;
            let tuple = Tuple::parse_json(&tuple)?;
            let mut bytes = encode_message(&WireMessage::new(op, seq, tuple), UDP_MAX_MESSAGE)?;
            if let Some(t) = tables(key)? {
                bytes = t.encrypt(&bytes);
            }
            writeln!(out, "{}", hex::encode(&bytes))?;
            if ble {
                let p = ble_pack(&bytes)?;
                let uuids: Vec<String> = p.uuids.iter().map(|u| format!("{u:04x}")).collect();
                writeln!(out, "uuids {}", uuids.join(" "))?;
                writeln!(out, "name {}", p.local_name)?;
            }
        }
        CodecCmd::Decode { hex: h, key } => {
            let mut bytes = hex::decode(h.trim())?;
            if let Some(t) = tables(key)? {
                bytes = t.decrypt(&bytes);
            }
            let m = decode_message(&bytes)?;
            let doc = serde_json::json!({"op": m.op.name(), "seq": m.seq, "tuple": m.tuple.to_json()});
            writeln!(out, "{doc}")?;
        }
    }
    Ok(())
}

fn check_agent(file: &PathBuf, out: &mut impl Write) -> Result<(), Failure> {
    let doc = std::fs::read_to_string(file).map_err(|e| Failure(format!("{}: {e}", file.display())))?;
    let def = parse_agent(&doc)?;
    writeln!(out, "ok {} ({} rules, {} vars)", def.name, def.rules.len(), def.vars.len())?;
    if let Err(e) = agent_tuple(&def) {
        writeln!(out, "note: cannot be installed over the air: {e}")?;
    }
    Ok(())
}

fn run_sim(a: SimArgs, out: &mut impl Write) -> Result<(), Failure> {
    let mut sc = resolve_scenario(&a.scenario)?;
    if let Some(seed) = a.seed {
        sc.seed = seed;
    }
    let m = run_scenario(&sc)?;
    for path in emit_metrics(&m, &a.out)? {
        writeln!(out, "wrote {}", path.display())?;
    }
    for (k, v) in &m.summary {
        writeln!(out, "{k} = {v}")?;
    }
    Ok(())
}

fn build_node(a: &NodeArgs) -> Result<(Node, UdpConfig), Failure> {
    let cfg = match &a.config {
        Some(p) => {
            let doc =
                std::fs::read_to_string(p).map_err(|e| Failure(format!("{}: {e}", p.display())))?;
            NodeConfig::parse(&doc)?
        }
        None => NodeConfig::default(),
    };
    let id = a
        .id
        .clone()
        .or(cfg.id.clone())
        .unwrap_or_else(|| format!("node-{}", std::process::id()));
    let mut rpc = RpcConfig::udp(UDP_SPACE, id.clone());
    if let Some(ms) = cfg.space.remote_lifetime_ms {
        rpc.remote_lifetime = Lifetime::Millis(ms);
    }
    if let Some(ms) = cfg.space.request_timeout_ms {
        rpc.request_timeout_ms = ms;
    }
    let mut node = Node::new(id.clone());
    let key = resolve_key(a.key.clone(), cfg.space.key.clone());
    node.add_space(rpc, key.as_deref())?;
    if cfg.space.agent_install {
        node.enable_agent_install(UDP_SPACE);
    }
    if cfg.admin {
        node.set_admin_space(Some(UDP_SPACE));
    }
    for r in cfg.route_rules()? {
        node.add_route(r)?;
    }
    let now = crate::util::now_millis();
    for def in cfg.agent_definitions()? {
        node.install_agent(def, now)?;
    }
    let broadcast = match (a.broadcast, &cfg.udp.broadcast) {
        (Some(b), _) => b,
        (None, Some(s)) => s
            .parse()
            .map_err(|e| Failure(format!("udp.broadcast {s:?}: {e}")))?,
        (None, None) => Ipv4Addr::BROADCAST,
    };
    let udp = UdpConfig {
        port: a.port.or(cfg.udp.port).unwrap_or(DEFAULT_PORT),
        broadcast_address: broadcast,
        repeats: a.repeats.or(cfg.udp.repeats).unwrap_or(1),
        node_id: id,
    };
    udp.validate()?;
    Ok((node, udp))
}

const NODE_HELP: &str = "commands: out <json> | notify <json> | rd <json> [timeout_ms] | \
inp <json> [timeout_ms] | local <json> | take <json> | logs | quit";

/// Line protocol on stdin; one reply line per command on stdout.
fn run_node(a: NodeArgs) -> Result<(), Failure> {
    let (node, udp) = build_node(&a)?;
    let port = udp.port;
    let live = LiveNode::start(node, udp)?;
    let stdout = io::stdout();
    let mut out = stdout.lock();
    writeln!(out, "ready port={port}")?;
    out.flush()?;
    for line in io::stdin().lock().lines() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line == "quit" {
            break;
        }
        let reply = node_command(&live, line).unwrap_or_else(|Failure(m)| format!("error {m}"));
        writeln!(out, "{reply}")?;
        out.flush()?;
    }
    live.shutdown();
    Ok(())
}

fn split_timeout(rest: &str) -> Result<(&str, Option<u64>), Failure> {
    let rest = rest.trim();
    if let Some(i) = rest.rfind(']') {
        let tail = rest[i + 1..].trim();
        let t = if tail.is_empty() {
            None
        } else {
            Some(tail.parse().map_err(|e| Failure(format!("timeout {tail:?}: {e}")))?)
        };
        return Ok((&rest[..=i], t));
    }
    Ok((rest, None))
}

fn node_command(live: &LiveNode, line: &str) -> Result<String, Failure> {
    let (cmd, rest) = line.split_once(' ').unwrap_or((line, ""));
    let found = |t: Option<Tuple>, start: Instant| match t {
        Some(t) => format!("tuple {} {}ms", t.to_json(), start.elapsed().as_millis()),
        None => format!("none {}ms", start.elapsed().as_millis()),
    };
    match cmd {
        "out" => {
            live.out(Tuple::parse_json(rest)?)?;
            Ok("ok".into())
        }
        "notify" => {
            let t = Tuple::parse_json(rest)?;
            live.with_node(|n, now| n.notify(UDP_SPACE, t, now))?;
            Ok("ok".into())
        }
        "rd" | "inp" => {
            let (doc, timeout) = split_timeout(rest)?;
            let p = Pattern::new(Tuple::parse_json(doc)?);
            let timeout = timeout.unwrap_or(crate::rpc::DEFAULT_REQUEST_TIMEOUT_MS);
            let start = Instant::now();
            let t = if cmd == "rd" {
                live.rd(p, timeout)?
            } else {
                live.inp(p, timeout)?
            };
            Ok(found(t, start))
        }
        "local" | "take" => {
            let p = Pattern::new(Tuple::parse_json(rest)?);
            let start = Instant::now();
            let t = live.with_node(|n, now| {
                n.space(UDP_SPACE).map(|r| {
                    if cmd == "take" {
                        r.host().inp_local(&p, now)
                    } else {
                        r.host().rd_local(&p, now)
                    }
                })
            })?;
            Ok(found(t, start))
        }
        "logs" => Ok(live.with_node(|n, _| n.take_logs()).join(" | ")),
        "help" => Ok(NODE_HELP.into()),
        other => Err(Failure(format!("unknown command {other:?}; {NODE_HELP}"))),
    }
}

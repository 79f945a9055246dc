//! Line-oriented scenario files.
//!
//! ```text
//! # comment
//! [run]
//! duration = 4 s
//! [link]
//! id = up
//! from = S
//! to = B0
//! capacity = 150 Mb/s
//! ```
//!
//! Sections: `[run]` and `[defaults]` once each; `[node]`, `[link]`, `[vc]`, `[source]` and
//! `[event]` repeat. Rates accept `cells/s` (default), `b/s`, `kb/s`, `Mb/s`, `Gb/s`; times accept
//! `s` (default), `ms`, `us`, `ns`; fractions accept `a/b`. [`Scenario::to_text`] writes every
//! resolved value back out, so its output reproduces the run exactly.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};

use thiserror::Error;

use crate::branch_point::{BranchConfig, NrTimeout, Variant};
use crate::end_system::{Demand, SourceParams};
use crate::merge_point::{MergeConfig, Subdivision};
use crate::model::{
    validate, Link, LinkId, Model, Network, NodeId, SourceAttachment, SourceId, VcId, VcKind,
    VirtualConnection,
};
use crate::switch_alloc::{Accounting, AllocAlgorithm, AllocConfig};

/// Bits per cell, for bit-rate units.
pub const CELL_BITS: f64 = 53.0 * 8.0;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct ScenarioError {
    /// 1-based; 0 when the problem is not tied to one line.
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ScenarioErrors(pub Vec<ScenarioError>);

impl fmt::Display for ScenarioErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

fn err(line: usize, message: impl Into<String>) -> ScenarioError {
    ScenarioError {
        line,
        message: message.into(),
    }
}

// ---- value parsing ----

fn split_unit(s: &str) -> (&str, &str) {
    let s = s.trim();
    let end = s
        .char_indices()
        .find(|&(i, c)| {
            !(c.is_ascii_digit() || c == '.' || c == '/' || c == '-' || c == '+' || c == '_')
                && !((c == 'e' || c == 'E') && i > 0)
        })
        .map_or(s.len(), |(i, _)| i);
    (s[..end].trim(), s[end..].trim())
}

fn parse_number(s: &str) -> Result<f64, String> {
    let s = s.trim();
    if let Some((a, b)) = s.split_once('/') {
        let a = parse_number(a)?;
        let b = parse_number(b)?;
        if b == 0.0 {
            return Err(format!("division by zero in '{s}'"));
        }
        return Ok(a / b);
    }
    s.replace('_', "")
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| format!("not a number: '{s}'"))
}

pub fn parse_rate(s: &str) -> Result<f64, String> {
    let (num, unit) = split_unit(s);
    let v = parse_number(num)?;
    let scale = match unit {
        "" | "cells/s" | "cell/s" | "c/s" => 1.0,
        "b/s" | "bps" => 1.0 / CELL_BITS,
        "kb/s" | "kbps" => 1e3 / CELL_BITS,
        "Mb/s" | "Mbps" => 1e6 / CELL_BITS,
        "Gb/s" | "Gbps" => 1e9 / CELL_BITS,
        u => return Err(format!("bad rate unit '{u}'")),
    };
    if v < 0.0 {
        return Err(format!("rate must be non-negative: '{s}'"));
    }
    Ok(v * scale)
}

pub fn parse_time(s: &str) -> Result<f64, String> {
    let (num, unit) = split_unit(s);
    let v = parse_number(num)?;
    let scale = match unit {
        "" | "s" => 1.0,
        "ms" => 1e-3,
        "us" => 1e-6,
        "ns" => 1e-9,
        u => return Err(format!("bad time unit '{u}'")),
    };
    if v < 0.0 {
        return Err(format!("time must be non-negative: '{s}'"));
    }
    Ok(v * scale)
}

fn parse_fraction(s: &str) -> Result<f64, String> {
    let v = parse_number(s)?;
    if v < 0.0 {
        return Err(format!("fraction must be non-negative: '{s}'"));
    }
    Ok(v)
}

fn parse_bool(s: &str) -> Result<bool, String> {
    match s.trim() {
        "on" | "yes" | "true" | "1" => Ok(true),
        "off" | "no" | "false" | "0" => Ok(false),
        v => Err(format!("expected on/off, got '{v}'")),
    }
}

fn parse_u64(s: &str) -> Result<u64, String> {
    s.trim()
        .replace('_', "")
        .parse()
        .map_err(|_| format!("not an unsigned integer: '{s}'"))
}

fn parse_list(s: &str) -> Vec<String> {
    s.split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(String::from)
        .collect()
}

fn onoff(b: bool) -> &'static str {
    if b {
        "on"
    } else {
        "off"
    }
}

// ---- configuration types ----

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub duration: f64,
    pub seed: u64,
    /// Steady-state measurement window; `None` resolves to the middle of the run.
    pub window: Option<(f64, f64)>,
    pub epsilon: f64,
    pub quantize: bool,
    pub control_interval: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            duration: 1.0,
            seed: 1,
            window: None,
            epsilon: 0.05,
            quantize: false,
            control_interval: 0.01,
        }
    }
}

impl RunConfig {
    pub fn window(&self) -> (f64, f64) {
        self.window
            .unwrap_or((0.5 * self.duration, 0.9 * self.duration))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CiThreshold {
    /// Half the link's buffer; never for an unbounded buffer.
    Auto,
    Cells(f64),
    Never,
}

/// Per-node behavior. `[defaults]` sets it for all nodes; `[node]` overrides single keys.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSettings {
    pub variant: Variant,
    pub immediate_emit: bool,
    pub overload_fraction: f64,
    pub nr_timeout: NrTimeout,
    pub subdivision: Subdivision,
    pub headroom: f64,
    pub subdivision_floor: f64,
    pub erase_origin: bool,
    pub algorithm: AllocAlgorithm,
    pub accounting: Accounting,
    pub target_utilization: f64,
    pub ci_threshold: CiThreshold,
    pub averaging_interval: f64,
    pub activity_timeout: f64,
}

impl Default for NodeSettings {
    fn default() -> Self {
        let b = BranchConfig::default();
        let m = MergeConfig::default();
        let a = AllocConfig::default();
        NodeSettings {
            variant: b.variant,
            immediate_emit: b.immediate_emit,
            overload_fraction: b.overload_fraction,
            nr_timeout: b.nr_timeout,
            subdivision: m.subdivision,
            headroom: m.headroom,
            subdivision_floor: m.floor_fraction,
            erase_origin: m.erase_origin,
            algorithm: a.algorithm,
            accounting: a.accounting,
            target_utilization: a.target_utilization,
            ci_threshold: CiThreshold::Auto,
            averaging_interval: a.averaging_interval,
            activity_timeout: a.activity_timeout,
        }
    }
}

pub const NODE_KEYS: &[&str] = &[
    "variant",
    "immediate_emit",
    "overload_fraction",
    "nr_timeout",
    "subdivision",
    "headroom",
    "subdivision_floor",
    "erase_origin",
    "algorithm",
    "accounting",
    "target_utilization",
    "ci_threshold",
    "averaging_interval",
    "activity_timeout",
];

impl NodeSettings {
    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let v = value.trim();
        match key {
            "variant" => self.variant = Variant::parse(v).ok_or_else(|| format!("unknown variant '{v}'"))?,
            "immediate_emit" => self.immediate_emit = parse_bool(v)?,
            "overload_fraction" => self.overload_fraction = parse_fraction(v)?,
            "nr_timeout" => {
                self.nr_timeout = match v {
                    "auto" => NrTimeout::Auto,
                    "inf" | "never" => NrTimeout::Never,
                    t => NrTimeout::Fixed(parse_time(t)?),
                }
            }
            "subdivision" => {
                self.subdivision = Subdivision::parse(v).ok_or_else(|| format!("unknown subdivision '{v}'"))?
            }
            "headroom" => self.headroom = parse_fraction(v)?,
            "subdivision_floor" => self.subdivision_floor = parse_fraction(v)?,
            "erase_origin" => self.erase_origin = parse_bool(v)?,
            "algorithm" => {
                self.algorithm = match v {
                    "equal_share" => AllocAlgorithm::EqualShare,
                    "consistent_marking" => AllocAlgorithm::ConsistentMarking,
                    _ => return Err(format!("unknown algorithm '{v}'")),
                }
            }
            "accounting" => {
                self.accounting = match v {
                    "flow" => Accounting::Flow,
                    "vc" => Accounting::Vc,
                    _ => return Err(format!("unknown accounting '{v}'")),
                }
            }
            "target_utilization" => {
                let u = parse_fraction(v)?;
                if !(u > 0.0 && u <= 1.0) {
                    return Err(format!("target_utilization must lie in (0, 1], got {u}"));
                }
                self.target_utilization = u;
            }
            "ci_threshold" => {
                self.ci_threshold = match v {
                    "auto" => CiThreshold::Auto,
                    "never" | "inf" => CiThreshold::Never,
                    n => CiThreshold::Cells(parse_fraction(n)?),
                }
            }
            "averaging_interval" => self.averaging_interval = positive_time(v)?,
            "activity_timeout" => self.activity_timeout = positive_time(v)?,
            _ => return Err(format!("unknown key '{key}'")),
        }
        Ok(())
    }

    /// Text form of one key.
    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "variant" => self.variant.as_str().to_string(),
            "immediate_emit" => onoff(self.immediate_emit).to_string(),
            "overload_fraction" => self.overload_fraction.to_string(),
            "nr_timeout" => match self.nr_timeout {
                NrTimeout::Auto => "auto".into(),
                NrTimeout::Never => "inf".into(),
                NrTimeout::Fixed(t) => t.to_string(),
            },
            "subdivision" => self.subdivision.as_str().to_string(),
            "headroom" => self.headroom.to_string(),
            "subdivision_floor" => self.subdivision_floor.to_string(),
            "erase_origin" => onoff(self.erase_origin).to_string(),
            "algorithm" => match self.algorithm {
                AllocAlgorithm::EqualShare => "equal_share".into(),
                AllocAlgorithm::ConsistentMarking => "consistent_marking".into(),
            },
            "accounting" => match self.accounting {
                Accounting::Flow => "flow".into(),
                Accounting::Vc => "vc".into(),
            },
            "target_utilization" => self.target_utilization.to_string(),
            "ci_threshold" => match self.ci_threshold {
                CiThreshold::Auto => "auto".into(),
                CiThreshold::Never => "never".into(),
                CiThreshold::Cells(c) => c.to_string(),
            },
            "averaging_interval" => self.averaging_interval.to_string(),
            "activity_timeout" => self.activity_timeout.to_string(),
            _ => return None,
        })
    }

    pub fn branch_config(&self) -> BranchConfig {
        BranchConfig {
            variant: self.variant,
            immediate_emit: self.immediate_emit,
            overload_fraction: self.overload_fraction,
            nr_timeout: self.nr_timeout,
        }
    }

    pub fn merge_config(&self) -> MergeConfig {
        MergeConfig {
            subdivision: self.subdivision,
            headroom: self.headroom,
            floor_fraction: self.subdivision_floor,
            erase_origin: self.erase_origin,
            averaging_interval: self.averaging_interval,
            activity_timeout: self.activity_timeout,
        }
    }

    pub fn alloc_config(&self, buffer_limit: Option<usize>) -> AllocConfig {
        AllocConfig {
            algorithm: self.algorithm,
            accounting: self.accounting,
            target_utilization: self.target_utilization,
            ci_threshold: match (self.ci_threshold, buffer_limit) {
                (CiThreshold::Cells(c), _) => c,
                (CiThreshold::Never, _) | (CiThreshold::Auto, None) => f64::INFINITY,
                (CiThreshold::Auto, Some(b)) => b as f64 / 2.0,
            },
            averaging_interval: self.averaging_interval,
            activity_timeout: self.activity_timeout,
        }
    }
}

fn positive_time(v: &str) -> Result<f64, String> {
    let t = parse_time(v)?;
    if t <= 0.0 {
        return Err(format!("must be positive, got '{v}'"));
    }
    Ok(t)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeSpec {
    pub name: String,
    /// Overridden keys, stored in canonical text form.
    pub overrides: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkSpec {
    pub name: String,
    pub from: String,
    pub to: String,
    pub capacity: f64,
    pub delay: f64,
    pub buffer: Option<usize>,
    /// Also create the reverse link `<name>.rev` with the same parameters.
    pub duplex: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DestHook {
    Off,
    /// Hook enabled with the local congestion flag set: every turnaround marks CI.
    Congested,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VcSpec {
    pub name: String,
    pub kind: VcKind,
    pub edges: Vec<String>,
    pub destinations: Vec<String>,
    pub root: Option<String>,
    pub vci: Option<u16>,
    pub dest_hook: DestHook,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceSpec {
    pub name: String,
    pub vc: String,
    pub node: String,
    pub params: SourceParams,
    pub start: f64,
    /// Relative spread of inter-cell gaps, drawn from the seeded generator.
    pub jitter: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Capacity { link: String, value: f64 },
    SourceOff { source: String },
    SourceOn { source: String },
    Silence { vc: String, node: String },
    Unsilence { vc: String, node: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventSpec {
    pub time: f64,
    pub action: Action,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Scenario {
    pub run: RunConfig,
    pub defaults: NodeSettings,
    pub nodes: Vec<NodeSpec>,
    pub links: Vec<LinkSpec>,
    pub vcs: Vec<VcSpec>,
    pub sources: Vec<SourceSpec>,
    pub events: Vec<EventSpec>,
}

// ---- parsing ----

#[derive(Debug)]
struct Section {
    kind: String,
    line: usize,
    pairs: Vec<(String, String, usize)>,
}

impl Section {
    fn take(&mut self, key: &str) -> Option<(String, usize)> {
        let i = self.pairs.iter().position(|(k, _, _)| k == key)?;
        let (_, v, l) = self.pairs.remove(i);
        Some((v, l))
    }
}

const RUN_KEYS: &[&str] = &["duration", "seed", "window", "epsilon", "quantize", "control_interval"];
const LINK_KEYS: &[&str] = &["id", "from", "to", "capacity", "delay", "buffer", "duplex"];
const VC_KEYS: &[&str] = &["id", "kind", "edges", "destinations", "root", "vci", "dest_hook"];
const SOURCE_KEYS: &[&str] = &[
    "id", "vc", "node", "pcr", "mcr", "icr", "rif", "rdf", "nrm", "demand", "start", "jitter",
];
const EVENT_KEYS: &[&str] = &["time", "action", "link", "source", "vc", "node", "value"];

fn allowed(kind: &str) -> Option<Vec<&'static str>> {
    Some(match kind {
        "run" => RUN_KEYS.to_vec(),
        "defaults" => NODE_KEYS.to_vec(),
        "node" => {
            let mut v = vec!["id"];
            v.extend_from_slice(NODE_KEYS);
            v
        }
        "link" => LINK_KEYS.to_vec(),
        "vc" => VC_KEYS.to_vec(),
        "source" => SOURCE_KEYS.to_vec(),
        "event" => EVENT_KEYS.to_vec(),
        _ => return None,
    })
}

fn lex(text: &str, errors: &mut Vec<ScenarioError>) -> Vec<Section> {
    let mut sections: Vec<Section> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let s = raw.split('#').next().unwrap_or("").trim();
        if s.is_empty() {
            continue;
        }
        if let Some(name) = s.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
            let name = name.trim().to_string();
            if allowed(&name).is_none() {
                errors.push(err(line, format!("unknown section [{name}]")));
            }
            sections.push(Section {
                kind: name,
                line,
                pairs: Vec::new(),
            });
            continue;
        }
        let Some((k, v)) = s.split_once('=') else {
            errors.push(err(line, format!("expected 'key = value', got '{s}'")));
            continue;
        };
        let (k, v) = (k.trim().to_string(), v.trim().to_string());
        let Some(sec) = sections.last_mut() else {
            errors.push(err(line, "key outside of any section"));
            continue;
        };
        if let Some(keys) = allowed(&sec.kind) {
            if !keys.contains(&k.as_str()) {
                errors.push(err(line, format!("unknown key '{k}' in [{}]", sec.kind)));
                continue;
            }
        }
        if sec.pairs.iter().any(|(x, _, _)| *x == k) {
            errors.push(err(line, format!("duplicate key '{k}'")));
            continue;
        }
        sec.pairs.push((k, v, line));
    }
    sections
}

macro_rules! field {
    ($errors:expr, $sec:expr, $key:literal, $parse:expr) => {
        match $sec.take($key) {
            Some((v, l)) => match $parse(v.as_str()) {
                Ok(x) => Some(x),
                Err(e) => {
                    $errors.push(err(l, format!("{}: {e}", $key)));
                    None
                }
            },
            None => None,
        }
    };
}

fn required<T>(errors: &mut Vec<ScenarioError>, sec: &Section, key: &str, v: Option<T>) -> Option<T> {
    if v.is_none() && !errors.iter().any(|e| e.line >= sec.line && e.message.starts_with(key)) {
        errors.push(err(sec.line, format!("[{}] needs '{key}'", sec.kind)));
    }
    v
}

fn ident(s: &str) -> Result<String, String> {
    let ok = !s.is_empty()
        && s
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'));
    if ok {
        Ok(s.to_string())
    } else {
        Err(format!("bad identifier '{s}'"))
    }
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Scenario, ScenarioErrors> {
        let mut errors = Vec::new();
        let sections = lex(text, &mut errors);
        let mut sc = Scenario::default();
        let mut seen_once = BTreeSet::new();
        let mut ids: BTreeMap<&'static str, BTreeSet<String>> = BTreeMap::new();
        let mut check_id = |errors: &mut Vec<ScenarioError>, kind: &'static str, id: &str, line: usize| {
            if !ids.entry(kind).or_default().insert(id.to_string()) {
                errors.push(err(line, format!("duplicate {kind} id '{id}'")));
            }
        };
        for mut sec in sections {
            let e = &mut errors;
            match sec.kind.as_str() {
                "run" | "defaults" => {
                    if !seen_once.insert(sec.kind.clone()) {
                        e.push(err(sec.line, format!("[{}] given twice", sec.kind)));
                    }
                    if sec.kind == "defaults" {
                        for (k, v, l) in std::mem::take(&mut sec.pairs) {
                            if let Err(m) = sc.defaults.set(&k, &v) {
                                e.push(err(l, format!("{k}: {m}")));
                            }
                        }
                        continue;
                    }
                    let r = &mut sc.run;
                    if let Some(v) = field!(e, sec, "duration", parse_time) {
                        r.duration = v;
                    }
                    if let Some(v) = field!(e, sec, "seed", parse_u64) {
                        r.seed = v;
                    }
                    if let Some(v) = field!(e, sec, "window", parse_window) {
                        r.window = v;
                    }
                    if let Some(v) = field!(e, sec, "epsilon", parse_fraction) {
                        r.epsilon = v;
                    }
                    if let Some(v) = field!(e, sec, "quantize", parse_bool) {
                        r.quantize = v;
                    }
                    if let Some(v) = field!(e, sec, "control_interval", positive_time) {
                        r.control_interval = v;
                    }
                }
                "node" => {
                    let id = field!(e, sec, "id", ident);
                    let Some(id) = required(e, &sec, "id", id) else { continue };
                    check_id(e, "node", &id, sec.line);
                    let mut probe = sc.defaults.clone();
                    let mut overrides = BTreeMap::new();
                    for (k, v, l) in std::mem::take(&mut sec.pairs) {
                        match probe.set(&k, &v) {
                            Ok(()) => {
                                overrides.insert(k.clone(), probe.get(&k).unwrap_or_default());
                            }
                            Err(m) => e.push(err(l, format!("{k}: {m}"))),
                        }
                    }
                    sc.nodes.push(NodeSpec { name: id, overrides });
                }
                "link" => {
                    let id = field!(e, sec, "id", ident);
                    let from = field!(e, sec, "from", ident);
                    let to = field!(e, sec, "to", ident);
                    let capacity = field!(e, sec, "capacity", parse_rate);
                    let delay = field!(e, sec, "delay", parse_time).unwrap_or(0.0);
                    let buffer = field!(e, sec, "buffer", parse_buffer).unwrap_or(None);
                    let duplex = field!(e, sec, "duplex", parse_bool).unwrap_or(true);
                    let id = required(e, &sec, "id", id);
                    let from = required(e, &sec, "from", from);
                    let to = required(e, &sec, "to", to);
                    let capacity = required(e, &sec, "capacity", capacity);
                    if let (Some(id), Some(from), Some(to), Some(capacity)) = (id, from, to, capacity) {
                        if capacity <= 0.0 {
                            e.push(err(sec.line, format!("link {id}: capacity must be positive")));
                        }
                        check_id(e, "link", &id, sec.line);
                        if duplex {
                            check_id(e, "link", &format!("{id}.rev"), sec.line);
                        }
                        sc.links.push(LinkSpec {
                            name: id,
                            from,
                            to,
                            capacity,
                            delay,
                            buffer,
                            duplex,
                        });
                    }
                }
                "vc" => {
                    let id = field!(e, sec, "id", ident);
                    let kind = field!(e, sec, "kind", parse_kind);
                    let edges = field!(e, sec, "edges", |s: &str| Ok::<_, String>(parse_list(s)));
                    let dests = field!(e, sec, "destinations", |s: &str| Ok::<_, String>(parse_list(s)));
                    let root = field!(e, sec, "root", ident);
                    let vci = field!(e, sec, "vci", |s: &str| parse_u64(s)
                        .and_then(|v| u16::try_from(v).map_err(|_| format!("vci out of range: {v}"))));
                    let dest_hook = field!(e, sec, "dest_hook", |s: &str| match s {
                        "off" => Ok(DestHook::Off),
                        "congested" => Ok(DestHook::Congested),
                        v => Err(format!("expected off or congested, got '{v}'")),
                    })
                    .unwrap_or(DestHook::Off);
                    let id = required(e, &sec, "id", id);
                    let kind = required(e, &sec, "kind", kind);
                    let edges = required(e, &sec, "edges", edges);
                    let dests = required(e, &sec, "destinations", dests);
                    if let (Some(id), Some(kind), Some(edges), Some(destinations)) = (id, kind, edges, dests) {
                        check_id(e, "vc", &id, sec.line);
                        sc.vcs.push(VcSpec {
                            name: id,
                            kind,
                            edges,
                            destinations,
                            root,
                            vci,
                            dest_hook,
                        });
                    }
                }
                "source" => {
                    let id = field!(e, sec, "id", ident);
                    let vc = field!(e, sec, "vc", ident);
                    let node = field!(e, sec, "node", ident);
                    let pcr = field!(e, sec, "pcr", parse_rate);
                    let mcr = field!(e, sec, "mcr", parse_rate);
                    let icr = field!(e, sec, "icr", parse_rate);
                    let rif = field!(e, sec, "rif", parse_fraction);
                    let rdf = field!(e, sec, "rdf", parse_fraction);
                    let nrm = field!(e, sec, "nrm", parse_u64);
                    let demand = field!(e, sec, "demand", |s: &str| if s == "greedy" {
                        Ok(Demand::Greedy)
                    } else {
                        parse_rate(s).map(Demand::Rate)
                    });
                    let start = field!(e, sec, "start", parse_time).unwrap_or(0.0);
                    let jitter = field!(e, sec, "jitter", parse_fraction).unwrap_or(0.0);
                    let id = required(e, &sec, "id", id);
                    let vc = required(e, &sec, "vc", vc);
                    let node = required(e, &sec, "node", node);
                    let pcr = required(e, &sec, "pcr", pcr);
                    if let (Some(id), Some(vc), Some(node), Some(pcr)) = (id, vc, node, pcr) {
                        let mut p = SourceParams::with_pcr(pcr);
                        if let Some(v) = mcr {
                            p.mcr = v;
                        }
                        if let Some(v) = icr {
                            p.icr = v;
                        }
                        if let Some(v) = rif {
                            p.rif = v;
                        }
                        if let Some(v) = rdf {
                            p.rdf = v;
                        }
                        if let Some(v) = nrm {
                            p.nrm = v.min(u32::MAX as u64) as u32;
                        }
                        if let Some(v) = demand {
                            p.demand = v;
                        }
                        if let Err(m) = p.check() {
                            e.push(err(sec.line, format!("source {id}: {m}")));
                        }
                        if !(0.0..1.0).contains(&jitter) {
                            e.push(err(sec.line, format!("source {id}: jitter must lie in [0, 1)")));
                        }
                        check_id(e, "source", &id, sec.line);
                        sc.sources.push(SourceSpec {
                            name: id,
                            vc,
                            node,
                            params: p,
                            start,
                            jitter,
                        });
                    }
                }
                "event" => {
                    let time = field!(e, sec, "time", parse_time);
                    let action = field!(e, sec, "action", |s: &str| Ok::<_, String>(s.to_string()));
                    let link = field!(e, sec, "link", ident);
                    let source = field!(e, sec, "source", ident);
                    let vc = field!(e, sec, "vc", ident);
                    let node = field!(e, sec, "node", ident);
                    let value = field!(e, sec, "value", parse_rate);
                    let time = required(e, &sec, "time", time);
                    let action = required(e, &sec, "action", action);
                    let (Some(time), Some(action)) = (time, action) else { continue };
                    let need = |e: &mut Vec<ScenarioError>, what: &str, v: Option<String>| {
                        if v.is_none() {
                            e.push(err(sec.line, format!("event '{action}' needs '{what}'")));
                        }
                        v.unwrap_or_default()
                    };
                    let act = match action.as_str() {
                        "capacity" => {
                            let link = need(e, "link", link);
                            let v = value.filter(|&v| v > 0.0);
                            if v.is_none() {
                                e.push(err(sec.line, "event 'capacity' needs a positive 'value'"));
                            }
                            Action::Capacity {
                                link,
                                value: v.unwrap_or(1.0),
                            }
                        }
                        "source_off" => Action::SourceOff {
                            source: need(e, "source", source),
                        },
                        "source_on" => Action::SourceOn {
                            source: need(e, "source", source),
                        },
                        "silence" | "unsilence" => {
                            let vc = need(e, "vc", vc);
                            let node = need(e, "node", node);
                            if action == "silence" {
                                Action::Silence { vc, node }
                            } else {
                                Action::Unsilence { vc, node }
                            }
                        }
                        a => {
                            e.push(err(sec.line, format!("unknown action '{a}'")));
                            continue;
                        }
                    };
                    sc.events.push(EventSpec { time, action: act });
                }
                _ => {}
            }
        }
        if let Some((a, b)) = sc.run.window {
            if !(a < b && b <= sc.run.duration) {
                errors.push(err(0, format!("window [{a}, {b}] must be increasing and end by the duration")));
            }
        }
        if errors.is_empty() {
            Ok(sc)
        } else {
            Err(ScenarioErrors(errors))
        }
    }

    /// Canonical text; parsing it yields an identical scenario.
    pub fn to_text(&self) -> String {
        let mut o = String::new();
        let r = &self.run;
        let _ = writeln!(o, "[run]\nduration = {}\nseed = {}", r.duration, r.seed);
        match r.window {
            Some((a, b)) => {
                let _ = writeln!(o, "window = {a} .. {b}");
            }
            None => {
                let _ = writeln!(o, "window = auto");
            }
        }
        let _ = writeln!(
            o,
            "epsilon = {}\nquantize = {}\ncontrol_interval = {}",
            r.epsilon,
            onoff(r.quantize),
            r.control_interval
        );
        o.push_str("\n[defaults]\n");
        for k in NODE_KEYS {
            let _ = writeln!(o, "{k} = {}", self.defaults.get(k).unwrap_or_default());
        }
        for n in &self.nodes {
            let _ = writeln!(o, "\n[node]\nid = {}", n.name);
            for (k, v) in &n.overrides {
                let _ = writeln!(o, "{k} = {v}");
            }
        }
        for l in &self.links {
            let _ = writeln!(
                o,
                "\n[link]\nid = {}\nfrom = {}\nto = {}\ncapacity = {}\ndelay = {}\nbuffer = {}\nduplex = {}",
                l.name,
                l.from,
                l.to,
                l.capacity,
                l.delay,
                l.buffer.map_or("unbounded".to_string(), |b| b.to_string()),
                onoff(l.duplex)
            );
        }
        for v in &self.vcs {
            let _ = writeln!(
                o,
                "\n[vc]\nid = {}\nkind = {}\nedges = {}\ndestinations = {}",
                v.name,
                v.kind,
                v.edges.join(", "),
                v.destinations.join(", ")
            );
            if let Some(r) = &v.root {
                let _ = writeln!(o, "root = {r}");
            }
            if let Some(x) = v.vci {
                let _ = writeln!(o, "vci = {x}");
            }
            let hook = match v.dest_hook {
                DestHook::Off => "off",
                DestHook::Congested => "congested",
            };
            let _ = writeln!(o, "dest_hook = {hook}");
        }
        for s in &self.sources {
            let p = &s.params;
            let demand = match p.demand {
                Demand::Greedy => "greedy".to_string(),
                Demand::Rate(r) => r.to_string(),
            };
            let _ = writeln!(
                o,
                "\n[source]\nid = {}\nvc = {}\nnode = {}\npcr = {}\nmcr = {}\nicr = {}\nrif = {}\nrdf = {}\nnrm = {}\ndemand = {}\nstart = {}\njitter = {}",
                s.name, s.vc, s.node, p.pcr, p.mcr, p.icr, p.rif, p.rdf, p.nrm, demand, s.start, s.jitter
            );
        }
        for e in &self.events {
            let _ = writeln!(o, "\n[event]\ntime = {}", e.time);
            match &e.action {
                Action::Capacity { link, value } => {
                    let _ = writeln!(o, "action = capacity\nlink = {link}\nvalue = {value}");
                }
                Action::SourceOff { source } => {
                    let _ = writeln!(o, "action = source_off\nsource = {source}");
                }
                Action::SourceOn { source } => {
                    let _ = writeln!(o, "action = source_on\nsource = {source}");
                }
                Action::Silence { vc, node } => {
                    let _ = writeln!(o, "action = silence\nvc = {vc}\nnode = {node}");
                }
                Action::Unsilence { vc, node } => {
                    let _ = writeln!(o, "action = unsilence\nvc = {vc}\nnode = {node}");
                }
            }
        }
        o
    }

    /// Recovers the scenario embedded in a run summary.
    pub fn from_summary(summary: &str) -> Result<Scenario, ScenarioErrors> {
        let text: String = summary
            .lines()
            .filter_map(|l| {
                l.strip_prefix("scenario: ")
                    .or_else(|| (l == "scenario:").then_some(""))
            })
            .fold(String::new(), |mut acc, l| {
                acc.push_str(l);
                acc.push('\n');
                acc
            });
        Scenario::parse(&text)
    }

    /// Node names in declaration order: `[node]` sections first, then first mention.
    pub fn node_names(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        let mentions = self
            .nodes
            .iter()
            .map(|n| &n.name)
            .chain(self.links.iter().flat_map(|l| [&l.from, &l.to]))
            .chain(self.sources.iter().map(|s| &s.node))
            .chain(self.vcs.iter().flat_map(|v| v.destinations.iter().chain(v.root.iter())));
        for n in mentions {
            if seen.insert(n.clone()) {
                out.push(n.clone());
            }
        }
        out
    }

    /// Resolves names, validates the topology and prepares everything a run needs.
    pub fn compile(&self) -> Result<Compiled, ScenarioErrors> {
        let mut errors = Vec::new();
        let node_names = self.node_names();
        let node_ix: BTreeMap<&str, NodeId> = node_names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), NodeId(i as u32)))
            .collect();
        let mut links = Vec::new();
        for l in &self.links {
            let mut push = |name: String, from: &str, to: &str| {
                let id = LinkId(links.len() as u32);
                links.push(Link {
                    id,
                    name,
                    from: node_ix[from],
                    to: node_ix[to],
                    capacity: l.capacity,
                    propagation_delay: l.delay,
                    buffer_limit: l.buffer,
                });
            };
            push(l.name.clone(), &l.from, &l.to);
            if l.duplex {
                push(format!("{}.rev", l.name), &l.to, &l.from);
            }
        }
        let link_ix: BTreeMap<String, LinkId> = links.iter().map(|l| (l.name.clone(), l.id)).collect();
        let vc_ix: BTreeMap<&str, VcId> = self
            .vcs
            .iter()
            .enumerate()
            .map(|(i, v)| (v.name.as_str(), VcId(i as u32)))
            .collect();
        let source_ix: BTreeMap<&str, SourceId> = self
            .sources
            .iter()
            .enumerate()
            .map(|(i, s)| (s.name.as_str(), SourceId(i as u32)))
            .collect();

        let mut sources = Vec::new();
        for (i, s) in self.sources.iter().enumerate() {
            match vc_ix.get(s.vc.as_str()) {
                Some(&vc) => sources.push(SourceAttachment {
                    id: SourceId(i as u32),
                    name: s.name.clone(),
                    vc,
                    node: node_ix[s.node.as_str()],
                }),
                None => errors.push(err(0, format!("source {}: unknown vc '{}'", s.name, s.vc))),
            }
        }
        let mut vcs = Vec::new();
        for (i, v) in self.vcs.iter().enumerate() {
            let mut edges = Vec::new();
            for e in &v.edges {
                match link_ix.get(e) {
                    Some(&l) => edges.push(l),
                    None => errors.push(err(0, format!("vc {}: unknown link '{e}'", v.name))),
                }
            }
            vcs.push(VirtualConnection {
                id: VcId(i as u32),
                name: v.name.clone(),
                kind: v.kind,
                sources: sources.iter().filter(|s| s.vc.index() == i).map(|s| s.id).collect(),
                destinations: v.destinations.iter().map(|d| node_ix[d.as_str()]).collect(),
                edges,
                root: v.root.as_ref().map(|r| node_ix[r.as_str()]),
            });
        }

        let mut node_settings = Vec::new();
        for name in &node_names {
            let mut s = self.defaults.clone();
            if let Some(spec) = self.nodes.iter().find(|n| &n.name == name) {
                for (k, v) in &spec.overrides {
                    if let Err(m) = s.set(k, v) {
                        errors.push(err(0, format!("node {name}: {k}: {m}")));
                    }
                }
            }
            node_settings.push(s);
        }

        let mut events = Vec::new();
        for ev in &self.events {
            let action = match &ev.action {
                Action::Capacity { link, value } => link_ix
                    .get(link)
                    .map(|&l| CompiledAction::Capacity(l, *value))
                    .ok_or(format!("unknown link '{link}'")),
                Action::SourceOff { source } | Action::SourceOn { source } => source_ix
                    .get(source.as_str())
                    .map(|&s| {
                        if matches!(ev.action, Action::SourceOn { .. }) {
                            CompiledAction::SourceOn(s)
                        } else {
                            CompiledAction::SourceOff(s)
                        }
                    })
                    .ok_or(format!("unknown source '{source}'")),
                Action::Silence { vc, node } | Action::Unsilence { vc, node } => {
                    match (vc_ix.get(vc.as_str()), node_ix.get(node.as_str())) {
                        (Some(&v), Some(&n)) => Ok(CompiledAction::Silence(v, n, matches!(ev.action, Action::Silence { .. }))),
                        _ => Err(format!("unknown vc '{vc}' or node '{node}'")),
                    }
                }
            };
            match action {
                Ok(a) if ev.time <= self.run.duration => events.push((ev.time, a)),
                Ok(_) => {}
                Err(m) => errors.push(err(0, format!("event at {}: {m}", ev.time))),
            }
        }
        if !errors.is_empty() {
            return Err(ScenarioErrors(errors));
        }
        let network = Network {
            nodes: node_names,
            links,
            sources,
            vcs,
        };
        let model = validate(network)
            .map_err(|es| ScenarioErrors(es.0.into_iter().map(|e| err(0, e.to_string())).collect()))?;
        Ok(Compiled {
            model,
            run: self.run.clone(),
            nodes: node_settings,
            sources: self
                .sources
                .iter()
                .map(|s| SourceSetup {
                    params: s.params.clone(),
                    start: s.start,
                    jitter: s.jitter,
                })
                .collect(),
            vcs: self
                .vcs
                .iter()
                .enumerate()
                .map(|(i, v)| VcSetup {
                    vci: v.vci.unwrap_or(32 + i as u16),
                    dest_hook: v.dest_hook,
                })
                .collect(),
            events,
        })
    }
}

fn parse_window(s: &str) -> Result<Option<(f64, f64)>, String> {
    if s.trim() == "auto" {
        return Ok(None);
    }
    let (a, b) = s
        .split_once("..")
        .or_else(|| s.split_once(','))
        .ok_or_else(|| format!("expected 'start .. end', got '{s}'"))?;
    Ok(Some((parse_time(a)?, parse_time(b)?)))
}

fn parse_buffer(s: &str) -> Result<Option<usize>, String> {
    if s.trim() == "unbounded" {
        return Ok(None);
    }
    let v = parse_u64(s)?;
    if v == 0 {
        return Err("buffer must be positive".into());
    }
    Ok(Some(v as usize))
}

fn parse_kind(s: &str) -> Result<VcKind, String> {
    Ok(match s {
        "p2p" => VcKind::P2p,
        "p2mp" => VcKind::P2mp,
        "mp2p" => VcKind::Mp2p,
        "mp2mp" => VcKind::Mp2mp,
        _ => return Err(format!("unknown vc kind '{s}'")),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceSetup {
    pub params: SourceParams,
    pub start: f64,
    pub jitter: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VcSetup {
    pub vci: u16,
    pub dest_hook: DestHook,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CompiledAction {
    Capacity(LinkId, f64),
    SourceOff(SourceId),
    SourceOn(SourceId),
    /// (vc, destination, silenced)
    Silence(VcId, NodeId, bool),
}

/// A validated scenario with every name resolved to an index.
#[derive(Debug, Clone)]
pub struct Compiled {
    pub model: Model,
    pub run: RunConfig,
    /// Per node, indexed by `NodeId`.
    pub nodes: Vec<NodeSettings>,
    /// Per source, indexed by `SourceId`.
    pub sources: Vec<SourceSetup>,
    pub vcs: Vec<VcSetup>,
    pub events: Vec<(f64, CompiledAction)>,
}

impl Compiled {
    pub fn link_by_name(&self, name: &str) -> Option<LinkId> {
        self.model.links().iter().find(|l| l.name == name).map(|l| l.id)
    }

    pub fn source_by_name(&self, name: &str) -> Option<SourceId> {
        self.model.sources().iter().find(|s| s.name == name).map(|s| s.id)
    }

    pub fn node_by_name(&self, name: &str) -> Option<NodeId> {
        (0..self.model.node_count())
            .map(|i| NodeId(i as u32))
            .find(|&n| self.model.node_name(n) == name)
    }

    /// Link capacities after every capacity event has applied.
    pub fn final_capacities(&self) -> Vec<f64> {
        let mut caps: Vec<f64> = self.model.links().iter().map(|l| l.capacity).collect();
        let mut evs: Vec<_> = self.events.iter().collect();
        evs.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (_, a) in evs {
            if let CompiledAction::Capacity(l, v) = a {
                caps[l.index()] = *v;
            }
        }
        caps
    }

    /// Destinations silenced at the end of the run.
    pub fn final_silenced(&self) -> BTreeSet<(VcId, NodeId)> {
        let mut out = BTreeSet::new();
        let mut evs: Vec<_> = self.events.iter().collect();
        evs.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (_, a) in evs {
            if let CompiledAction::Silence(v, n, on) = *a {
                if on {
                    out.insert((v, n));
                } else {
                    out.remove(&(v, n));
                }
            }
        }
        out
    }

    /// Sources switched on at the end of the run.
    pub fn final_active(&self) -> Vec<bool> {
        let mut on = vec![true; self.sources.len()];
        let mut evs: Vec<_> = self.events.iter().collect();
        evs.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (_, a) in evs {
            match *a {
                CompiledAction::SourceOff(s) => on[s.index()] = false,
                CompiledAction::SourceOn(s) => on[s.index()] = true,
                _ => {}
            }
        }
        on
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "\
[run]
duration = 10 ms
[link]
id = L
from = A
to = B
capacity = 1000
delay = 1 ms
[vc]
id = v
kind = p2p
edges = L
destinations = B
[source]
id = s
vc = v
node = A
pcr = 1000
";

    #[test]
    fn minimal_parses_and_compiles() {
        let sc = Scenario::parse(MINIMAL).unwrap();
        assert_eq!(sc.run.duration, 0.01);
        let c = sc.compile().unwrap();
        assert_eq!(c.model.links().len(), 2);
        assert_eq!(c.model.links()[1].name, "L.rev");
        assert_eq!(c.sources[0].params.icr, 1000.0 / 30.0);
    }

    #[test]
    fn units() {
        let r = parse_rate("150 Mb/s").unwrap();
        assert!((r - 353_773.584_905_660_4).abs() < 1e-6, "{r}");
        assert_eq!(parse_rate("424 b/s").unwrap(), 1.0);
        assert_eq!(parse_time("250 us").unwrap(), 250e-6);
        assert_eq!(parse_number("1/16").unwrap(), 0.0625);
        assert!(parse_rate("3 furlongs").is_err());
    }

    #[test]
    fn misspelled_key_names_line() {
        let text = "[defaults]\nvaraint = v2\n";
        let e = Scenario::parse(text).unwrap_err();
        assert_eq!(e.0[0].line, 2);
        assert!(e.0[0].message.contains("varaint"));
    }

    #[test]
    fn duplicates_rejected() {
        let text = format!("{MINIMAL}[link]\nid = L\nfrom = B\nto = C\ncapacity = 5\ndelay = 1 ms\ndelay = 2 ms\n");
        let e = Scenario::parse(&text).unwrap_err();
        assert!(e.to_string().contains("duplicate key 'delay'"), "{e}");
        assert!(e.to_string().contains("duplicate link id 'L'"), "{e}");
    }

    #[test]
    fn canonical_text_round_trips() {
        let mut sc = Scenario::parse(MINIMAL).unwrap();
        sc.nodes.push(NodeSpec {
            name: "A".into(),
            overrides: [("variant".to_string(), "v1".to_string())].into(),
        });
        sc.events.push(EventSpec {
            time: 0.005,
            action: Action::Capacity {
                link: "L".into(),
                value: 500.0,
            },
        });
        let text = sc.to_text();
        let back = Scenario::parse(&text).unwrap();
        assert_eq!(back, sc);
        assert_eq!(back.to_text(), text);
        let summary: String = text.lines().map(|l| format!("scenario: {l}\n")).collect();
        assert_eq!(Scenario::from_summary(&format!("digest: x\n{summary}")).unwrap(), sc);
    }

    #[test]
    fn shape_errors_come_from_validation() {
        let text = MINIMAL.replace("kind = p2p", "kind = mp2mp");
        let e = Scenario::parse(&text).unwrap().compile().unwrap_err();
        assert!(e.to_string().contains("shape mismatch"), "{e}");
    }

    #[test]
    fn node_override_applies_to_that_node_only() {
        let text = format!("{MINIMAL}[node]\nid = B\nvariant = v1\nnr_timeout = 20 ms\n");
        let c = Scenario::parse(&text).unwrap().compile().unwrap();
        let b = c.node_by_name("B").unwrap();
        let a = c.node_by_name("A").unwrap();
        assert_eq!(c.nodes[b.index()].variant, Variant::NoWait);
        assert_eq!(c.nodes[b.index()].nr_timeout, NrTimeout::Fixed(0.02));
        assert_eq!(c.nodes[a.index()].variant, Variant::WaitAll);
    }
}

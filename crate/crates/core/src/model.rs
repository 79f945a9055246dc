//! Topology, virtual-connection and cell data model.
//!
//! A [`Network`] is the raw, index-resolved description of a scenario. [`validate`] checks
//! every virtual connection against its declared kind, derives the unique per-source paths
//! and classifies node roles, producing an immutable [`Model`] that the rest of the crate
//! shares read-only.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident, $prefix:literal) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub struct $name(pub u32);

        impl $name {
            pub fn index(self) -> usize {
                self.0 as usize
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($prefix, "{}"), self.0)
            }
        }
    };
}

id_type!(
    /// Index of a node in [`Network::nodes`].
    NodeId,
    "n"
);
id_type!(
    /// Index of a directed link in [`Network::links`].
    LinkId,
    "l"
);
id_type!(
    /// Index of a virtual connection in [`Network::vcs`].
    VcId,
    "vc"
);
id_type!(
    /// Index of an ABR source in [`Network::sources`].
    SourceId,
    "s"
);

impl SourceId {
    /// Origin value carried by data cells whose origin was blanked after a merge.
    pub const ERASED: SourceId = SourceId(u32::MAX);
}

/// One input or output port of a node within one VC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BranchId {
    /// A VC edge (upstream edge for merge inputs, downstream edge for branch outputs).
    Link(LinkId),
    /// The `n`-th source attached directly at the node.
    Attach(u16),
}

impl fmt::Display for BranchId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BranchId::Link(l) => write!(f, "{l}"),
            BranchId::Attach(p) => write!(f, "port{p}"),
        }
    }
}

/// Which merge region a cell entered most recently.
///
/// Deliberately has no variant able to name a [`SourceId`]: switch accounting is keyed by
/// [`Flow`], so a table keyed this way can never hold per-source state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FlowEntry {
    /// Traffic that has not crossed a merge point, identified by its attachment port.
    Attach { node: NodeId, port: u16 },
    /// Traffic merged at this node.
    Merged(NodeId),
    /// Whole-VC aggregate (VC-granularity accounting).
    Aggregate,
}

/// Per-VC, per-merge-lineage traffic aggregate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Flow {
    pub vc: VcId,
    pub entry: FlowEntry,
}

impl fmt::Display for Flow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.entry {
            FlowEntry::Attach { node, port } => write!(f, "{}:{}.{}", self.vc, node, port),
            FlowEntry::Merged(node) => write!(f, "{}:merged@{}", self.vc, node),
            FlowEntry::Aggregate => write!(f, "{}:*", self.vc),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Direction {
    Forward,
    Backward,
}

/// In-simulation RM cell payload. Rates are cells/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RMCellFields {
    pub dir: Direction,
    pub bn: bool,
    pub ci: bool,
    pub ni: bool,
    pub er: f64,
    pub ccr: f64,
    pub mcr: f64,
    pub vc: VcId,
    pub origin: SourceId,
    pub seq: u32,
}

impl RMCellFields {
    pub fn is_forward(&self) -> bool {
        self.dir == Direction::Forward
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DataCell {
    pub vc: VcId,
    pub origin: SourceId,
    pub seq: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    Data(DataCell),
    Rm(RMCellFields),
}

impl Cell {
    pub fn vc(&self) -> VcId {
        match self {
            Cell::Data(d) => d.vc,
            Cell::Rm(rm) => rm.vc,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub id: LinkId,
    pub name: String,
    pub from: NodeId,
    pub to: NodeId,
    /// cells/s
    pub capacity: f64,
    /// seconds
    pub propagation_delay: f64,
    /// cells; `None` is unbounded
    pub buffer_limit: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VcKind {
    P2p,
    P2mp,
    Mp2p,
    Mp2mp,
}

impl VcKind {
    pub fn as_str(self) -> &'static str {
        match self {
            VcKind::P2p => "p2p",
            VcKind::P2mp => "p2mp",
            VcKind::Mp2p => "mp2p",
            VcKind::Mp2mp => "mp2mp",
        }
    }
}

impl fmt::Display for VcKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceAttachment {
    pub id: SourceId,
    pub name: String,
    pub vc: VcId,
    pub node: NodeId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VirtualConnection {
    pub id: VcId,
    pub name: String,
    pub kind: VcKind,
    pub sources: Vec<SourceId>,
    pub destinations: Vec<NodeId>,
    pub edges: Vec<LinkId>,
    /// Designated meeting node of an mp2mp VC.
    pub root: Option<NodeId>,
}

/// Index-resolved network description, prior to validation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Network {
    pub nodes: Vec<String>,
    pub links: Vec<Link>,
    pub sources: Vec<SourceAttachment>,
    pub vcs: Vec<VirtualConnection>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("vc {vc}: dangling link id {link}")]
    DanglingLink { vc: String, link: u32 },
    #[error("link {link}: {detail}")]
    InvalidLink { link: String, detail: String },
    #[error("vc {vc}: shape mismatch: {detail}")]
    ShapeMismatch { vc: String, detail: String },
    #[error("vc {vc}: source {source_name} has no path to destination {destination}")]
    DisconnectedSource {
        vc: String,
        source_name: String,
        destination: String,
    },
    #[error("vc {vc}: source {source_name} has {count} paths to destination {destination}")]
    MultiplePaths {
        vc: String,
        source_name: String,
        destination: String,
        count: usize,
    },
    #[error("vc {vc}: cycle in routing graph")]
    Cycle { vc: String },
    #[error("link {link}: VC edge has no reverse link for backward RM cells")]
    MissingReverse { link: String },
    #[error("source {source_name} is attached to vc {vc} but not listed by it")]
    SourceNotInVc { source_name: String, vc: String },
    #[error("({source_id}, {destination}) is not a source/destination pair of {vc}")]
    PairNotInVc {
        vc: VcId,
        source_id: SourceId,
        destination: NodeId,
    },
}

/// All validation failures of one network.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
pub struct ModelErrors(pub Vec<ModelError>);

/// Roles a node plays within one VC. A node may hold several (an mp2mp root is both merge
/// and branch point).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct NodeRoles {
    pub source_attach: bool,
    pub branch: bool,
    pub merge: bool,
    pub transit: bool,
    pub destination: bool,
}

impl fmt::Display for NodeRoles {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = [
            (self.source_attach, "source-attach"),
            (self.branch, "branch"),
            (self.merge, "merge"),
            (self.transit, "transit"),
            (self.destination, "destination"),
        ]
        .iter()
        .filter(|(on, _)| *on)
        .map(|(_, n)| *n)
        .collect();
        f.write_str(&names.join("+"))
    }
}

/// Classifies every node touched by a VC.
///
/// `edges` are `(from, to)` pairs of the VC routing graph. More than one downstream edge makes a
/// branch point. A merge point joins at least two inputs, where inputs are upstream edges plus
/// sources attached at the node, and at least one input is an upstream edge; sources
/// co-attached at a node with no upstream edge stay separate flows.
pub fn classify_node_roles(
    edges: &[(NodeId, NodeId)],
    attached: &BTreeMap<NodeId, Vec<SourceId>>,
    destinations: &BTreeSet<NodeId>,
) -> BTreeMap<NodeId, NodeRoles> {
    let mut up: BTreeMap<NodeId, usize> = BTreeMap::new();
    let mut down: BTreeMap<NodeId, usize> = BTreeMap::new();
    let mut nodes: BTreeSet<NodeId> = BTreeSet::new();
    for &(from, to) in edges {
        *down.entry(from).or_default() += 1;
        *up.entry(to).or_default() += 1;
        nodes.insert(from);
        nodes.insert(to);
    }
    nodes.extend(attached.keys().copied());
    nodes.extend(destinations.iter().copied());

    nodes
        .into_iter()
        .map(|n| {
            let ups = up.get(&n).copied().unwrap_or(0);
            let downs = down.get(&n).copied().unwrap_or(0);
            let att = attached.get(&n).map_or(0, Vec::len);
            let dest = destinations.contains(&n);
            let roles = NodeRoles {
                source_attach: att > 0,
                branch: downs > 1,
                merge: ups >= 1 && ups + att >= 2,
                transit: ups == 1 && downs == 1 && att == 0 && !dest,
                destination: dest,
            };
            (n, roles)
        })
        .collect()
}

/// Derived routing structure of one validated VC.
#[derive(Debug, Clone)]
pub struct VcTopology {
    pub vc: VcId,
    pub kind: VcKind,
    down: BTreeMap<NodeId, Vec<LinkId>>,
    up: BTreeMap<NodeId, Vec<LinkId>>,
    attached: BTreeMap<NodeId, Vec<SourceId>>,
    destinations: BTreeSet<NodeId>,
    roles: BTreeMap<NodeId, NodeRoles>,
    paths: BTreeMap<(SourceId, NodeId), Vec<LinkId>>,
    source_links: BTreeMap<SourceId, BTreeSet<LinkId>>,
    labels: BTreeMap<(LinkId, SourceId), Flow>,
    lineage: BTreeMap<(NodeId, BranchId), BTreeSet<SourceId>>,
}

impl VcTopology {
    pub fn downstream(&self, node: NodeId) -> &[LinkId] {
        self.down.get(&node).map_or(&[], Vec::as_slice)
    }

    pub fn upstream(&self, node: NodeId) -> &[LinkId] {
        self.up.get(&node).map_or(&[], Vec::as_slice)
    }

    /// Sources attached at `node`, in port order.
    pub fn attached(&self, node: NodeId) -> &[SourceId] {
        self.attached.get(&node).map_or(&[], Vec::as_slice)
    }

    pub fn port_of(&self, node: NodeId, source: SourceId) -> Option<u16> {
        self.attached(node)
            .iter()
            .position(|&s| s == source)
            .map(|p| p as u16)
    }

    pub fn roles(&self, node: NodeId) -> NodeRoles {
        self.roles.get(&node).copied().unwrap_or_default()
    }

    pub fn all_roles(&self) -> &BTreeMap<NodeId, NodeRoles> {
        &self.roles
    }

    pub fn is_destination(&self, node: NodeId) -> bool {
        self.destinations.contains(&node)
    }

    pub fn destinations(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.destinations.iter().copied()
    }

    pub fn sources(&self) -> impl Iterator<Item = SourceId> + '_ {
        self.source_links.keys().copied()
    }

    pub fn path(&self, source: SourceId, destination: NodeId) -> Option<&[LinkId]> {
        self.paths.get(&(source, destination)).map(Vec::as_slice)
    }

    /// Union of the links on all of a source's paths.
    pub fn source_links(&self, source: SourceId) -> &BTreeSet<LinkId> {
        static EMPTY: BTreeSet<LinkId> = BTreeSet::new();
        self.source_links.get(&source).unwrap_or(&EMPTY)
    }

    /// Flow label carried by `source`'s cells on `link`.
    pub fn label(&self, link: LinkId, source: SourceId) -> Option<Flow> {
        self.labels.get(&(link, source)).copied()
    }

    /// Distinct flows of this VC present on `link`.
    pub fn flows_on(&self, link: LinkId) -> BTreeSet<Flow> {
        self.labels
            .iter()
            .filter(|((l, _), _)| *l == link)
            .map(|(_, f)| *f)
            .collect()
    }

    /// Input branches of a merge point: upstream edges followed by attachment ports.
    pub fn merge_inputs(&self, node: NodeId) -> Vec<BranchId> {
        let mut v: Vec<BranchId> = self
            .upstream(node)
            .iter()
            .map(|&l| BranchId::Link(l))
            .collect();
        v.extend((0..self.attached(node).len()).map(|p| BranchId::Attach(p as u16)));
        v
    }

    /// Sources whose traffic enters `node` through `branch`.
    pub fn lineage(&self, node: NodeId, branch: BranchId) -> Option<&BTreeSet<SourceId>> {
        self.lineage.get(&(node, branch))
    }

    pub fn edges(&self) -> impl Iterator<Item = LinkId> + '_ {
        self.down.values().flatten().copied()
    }
}

/// Validated, immutable scenario model.
#[derive(Debug, Clone)]
pub struct Model {
    network: Network,
    topologies: Vec<VcTopology>,
    reverse: Vec<Option<LinkId>>,
}

impl Model {
    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn link(&self, id: LinkId) -> &Link {
        &self.network.links[id.index()]
    }

    pub fn links(&self) -> &[Link] {
        &self.network.links
    }

    pub fn vc(&self, id: VcId) -> &VirtualConnection {
        &self.network.vcs[id.index()]
    }

    pub fn vcs(&self) -> &[VirtualConnection] {
        &self.network.vcs
    }

    pub fn topology(&self, id: VcId) -> &VcTopology {
        &self.topologies[id.index()]
    }

    pub fn source(&self, id: SourceId) -> &SourceAttachment {
        &self.network.sources[id.index()]
    }

    pub fn sources(&self) -> &[SourceAttachment] {
        &self.network.sources
    }

    pub fn node_name(&self, id: NodeId) -> &str {
        &self.network.nodes[id.index()]
    }

    pub fn node_count(&self) -> usize {
        self.network.nodes.len()
    }

    /// Link carrying backward RM cells for the VC edge `link`.
    pub fn reverse_of(&self, link: LinkId) -> Option<LinkId> {
        self.reverse[link.index()]
    }

    pub fn path_links(
        &self,
        vc: VcId,
        source: SourceId,
        destination: NodeId,
    ) -> Result<&[LinkId], ModelError> {
        self.topologies
            .get(vc.index())
            .and_then(|t| t.path(source, destination))
            .ok_or(ModelError::PairNotInVc {
                vc,
                source_id: source,
                destination,
            })
    }

    /// Every flow, of any VC, crossing `link`.
    pub fn static_flows_on(&self, link: LinkId) -> BTreeSet<Flow> {
        self.topologies
            .iter()
            .flat_map(|t| t.flows_on(link))
            .collect()
    }
}

/// Validates a network and derives per-VC routing structure.
pub fn validate(network: Network) -> Result<Model, ModelErrors> {
    let mut errors = Vec::new();

    for link in &network.links {
        if !(link.capacity > 0.0) || !link.capacity.is_finite() {
            errors.push(ModelError::InvalidLink {
                link: link.name.clone(),
                detail: format!("capacity must be positive, got {}", link.capacity),
            });
        }
        if !(link.propagation_delay >= 0.0) {
            errors.push(ModelError::InvalidLink {
                link: link.name.clone(),
                detail: format!("delay must be non-negative, got {}", link.propagation_delay),
            });
        }
        if link.buffer_limit == Some(0) {
            errors.push(ModelError::InvalidLink {
                link: link.name.clone(),
                detail: "buffer limit must be positive".into(),
            });
        }
        if link.from.index() >= network.nodes.len() || link.to.index() >= network.nodes.len() {
            errors.push(ModelError::InvalidLink {
                link: link.name.clone(),
                detail: "endpoint is not a declared node".into(),
            });
        }
    }
    for s in &network.sources {
        let listed = network
            .vcs
            .get(s.vc.index())
            .is_some_and(|vc| vc.sources.contains(&s.id));
        if !listed {
            errors.push(ModelError::SourceNotInVc {
                source_name: s.name.clone(),
                vc: s.vc.to_string(),
            });
        }
    }
    if !errors.is_empty() {
        return Err(ModelErrors(errors));
    }

    let mut topologies = Vec::with_capacity(network.vcs.len());
    for vc in &network.vcs {
        match build_topology(&network, vc) {
            Ok(t) => topologies.push(t),
            Err(mut e) => errors.append(&mut e),
        }
    }

    let mut reverse = vec![None; network.links.len()];
    for link in &network.links {
        reverse[link.id.index()] = network
            .links
            .iter()
            .find(|r| r.from == link.to && r.to == link.from)
            .map(|r| r.id);
    }
    for t in &topologies {
        for e in t.edges() {
            if reverse[e.index()].is_none() {
                errors.push(ModelError::MissingReverse {
                    link: network.links[e.index()].name.clone(),
                });
            }
        }
    }

    if errors.is_empty() {
        Ok(Model {
            network,
            topologies,
            reverse,
        })
    } else {
        errors.dedup();
        Err(ModelErrors(errors))
    }
}

fn shape(vc: &VirtualConnection, detail: impl Into<String>) -> ModelError {
    ModelError::ShapeMismatch {
        vc: vc.name.clone(),
        detail: detail.into(),
    }
}

fn build_topology(network: &Network, vc: &VirtualConnection) -> Result<VcTopology, Vec<ModelError>> {
    let mut errors = Vec::new();
    let mut edges: BTreeSet<LinkId> = BTreeSet::new();
    for &e in &vc.edges {
        if e.index() >= network.links.len() {
            errors.push(ModelError::DanglingLink {
                vc: vc.name.clone(),
                link: e.0,
            });
        } else {
            edges.insert(e);
        }
    }
    if !errors.is_empty() {
        return Err(errors);
    }

    let (n_src, n_dst) = (vc.sources.len(), vc.destinations.len());
    let count_ok = match vc.kind {
        VcKind::P2p => n_src == 1 && n_dst == 1,
        VcKind::P2mp => n_src == 1 && n_dst >= 2,
        VcKind::Mp2p => n_src >= 2 && n_dst == 1,
        VcKind::Mp2mp => n_src >= 2 && n_dst >= 2,
    };
    if !count_ok {
        return Err(vec![shape(
            vc,
            format!("{} with {n_src} sources and {n_dst} destinations", vc.kind),
        )]);
    }
    if vc.kind == VcKind::Mp2mp && vc.root.is_none() {
        return Err(vec![shape(vc, "mp2mp requires a root node")]);
    }

    let mut down: BTreeMap<NodeId, Vec<LinkId>> = BTreeMap::new();
    let mut up: BTreeMap<NodeId, Vec<LinkId>> = BTreeMap::new();
    for &e in &edges {
        let l = &network.links[e.index()];
        down.entry(l.from).or_default().push(e);
        up.entry(l.to).or_default().push(e);
    }

    if has_cycle(&down, network) {
        return Err(vec![ModelError::Cycle {
            vc: vc.name.clone(),
        }]);
    }

    let mut attached: BTreeMap<NodeId, Vec<SourceId>> = BTreeMap::new();
    for &s in &vc.sources {
        match network.sources.get(s.index()) {
            Some(src) if src.vc == vc.id => attached.entry(src.node).or_default().push(s),
            _ => errors.push(shape(vc, format!("source {s} is not attached to this vc"))),
        }
    }
    let destinations: BTreeSet<NodeId> = vc.destinations.iter().copied().collect();
    if destinations.len() != vc.destinations.len() {
        errors.push(shape(vc, "duplicate destination"));
    }
    for d in &destinations {
        if down.contains_key(d) {
            errors.push(shape(
                vc,
                format!("destination {} has downstream edges", network.nodes[d.index()]),
            ));
        }
    }
    if !errors.is_empty() {
        return Err(errors);
    }

    let mut paths = BTreeMap::new();
    let mut source_links: BTreeMap<SourceId, BTreeSet<LinkId>> = BTreeMap::new();
    let mut used: BTreeSet<LinkId> = BTreeSet::new();
    for &s in &vc.sources {
        let src = &network.sources[s.index()];
        for &d in &destinations {
            let found = enumerate_paths(src.node, d, &down, network);
            match found.len() {
                0 => errors.push(ModelError::DisconnectedSource {
                    vc: vc.name.clone(),
                    source_name: src.name.clone(),
                    destination: network.nodes[d.index()].clone(),
                }),
                1 => {
                    let p = found.into_iter().next().unwrap();
                    used.extend(p.iter().copied());
                    source_links.entry(s).or_default().extend(p.iter().copied());
                    paths.insert((s, d), p);
                }
                count => errors.push(ModelError::MultiplePaths {
                    vc: vc.name.clone(),
                    source_name: src.name.clone(),
                    destination: network.nodes[d.index()].clone(),
                    count,
                }),
            }
        }
    }
    if !errors.is_empty() {
        return Err(errors);
    }
    if let Some(&unused) = edges.difference(&used).next() {
        return Err(vec![shape(
            vc,
            format!(
                "edge {} is not on any source-destination path",
                network.links[unused.index()].name
            ),
        )]);
    }

    let endpoints: Vec<(NodeId, NodeId)> = edges
        .iter()
        .map(|e| {
            let l = &network.links[e.index()];
            (l.from, l.to)
        })
        .collect();
    let roles = classify_node_roles(&endpoints, &attached, &destinations);
    let any_branch = roles.values().any(|r| r.branch);
    let any_merge = roles.values().any(|r| r.merge);
    match vc.kind {
        VcKind::P2p if any_branch || any_merge => {
            return Err(vec![shape(vc, "p2p routing graph must be a single path")]);
        }
        VcKind::P2mp if any_merge => {
            return Err(vec![shape(vc, "p2mp routing graph must be a tree rooted at the source")]);
        }
        VcKind::Mp2p if any_branch => {
            return Err(vec![shape(vc, "mp2p routing graph must be a tree toward the destination")]);
        }
        VcKind::Mp2mp => {
            let root = vc.root.unwrap();
            for ((s, _), p) in &paths {
                let src_node = network.sources[s.index()].node;
                let nodes: Vec<NodeId> = std::iter::once(src_node)
                    .chain(p.iter().map(|e| network.links[e.index()].to))
                    .collect();
                let Some(pos) = nodes.iter().position(|&n| n == root) else {
                    return Err(vec![shape(vc, "root is not on every source-destination path")]);
                };
                if nodes[..pos].iter().any(|n| roles[n].branch) {
                    return Err(vec![shape(vc, "branch point upstream of the mp2mp root")]);
                }
                if nodes[pos + 1..].iter().any(|n| roles[n].merge) {
                    return Err(vec![shape(vc, "merge point downstream of the mp2mp root")]);
                }
            }
        }
        _ => {}
    }

    // Flow labels and merge lineages, walking each path from its attachment node.
    let mut labels = BTreeMap::new();
    let mut lineage: BTreeMap<(NodeId, BranchId), BTreeSet<SourceId>> = BTreeMap::new();
    for ((s, _), p) in &paths {
        let node = network.sources[s.index()].node;
        let port = attached[&node].iter().position(|x| x == s).unwrap() as u16;
        let mut label = Flow {
            vc: vc.id,
            entry: FlowEntry::Attach { node, port },
        };
        if roles[&node].merge {
            lineage
                .entry((node, BranchId::Attach(port)))
                .or_default()
                .insert(*s);
            label.entry = FlowEntry::Merged(node);
        }
        for &e in p {
            labels.insert((e, *s), label);
            let to = network.links[e.index()].to;
            if roles[&to].merge {
                lineage
                    .entry((to, BranchId::Link(e)))
                    .or_default()
                    .insert(*s);
                label.entry = FlowEntry::Merged(to);
            }
        }
    }

    Ok(VcTopology {
        vc: vc.id,
        kind: vc.kind,
        down,
        up,
        attached,
        destinations,
        roles,
        paths,
        source_links,
        labels,
        lineage,
    })
}

fn has_cycle(down: &BTreeMap<NodeId, Vec<LinkId>>, network: &Network) -> bool {
    // 0 = unvisited, 1 = on stack, 2 = done
    let mut state: BTreeMap<NodeId, u8> = BTreeMap::new();
    fn visit(
        n: NodeId,
        down: &BTreeMap<NodeId, Vec<LinkId>>,
        network: &Network,
        state: &mut BTreeMap<NodeId, u8>,
    ) -> bool {
        match state.get(&n) {
            Some(1) => return true,
            Some(2) => return false,
            _ => {}
        }
        state.insert(n, 1);
        for e in down.get(&n).into_iter().flatten() {
            if visit(network.links[e.index()].to, down, network, state) {
                return true;
            }
        }
        state.insert(n, 2);
        false
    }
    down.keys()
        .any(|&n| visit(n, down, network, &mut state))
}

fn enumerate_paths(
    from: NodeId,
    to: NodeId,
    down: &BTreeMap<NodeId, Vec<LinkId>>,
    network: &Network,
) -> Vec<Vec<LinkId>> {
    let mut out = Vec::new();
    let mut stack = Vec::new();
    fn go(
        n: NodeId,
        to: NodeId,
        down: &BTreeMap<NodeId, Vec<LinkId>>,
        network: &Network,
        stack: &mut Vec<LinkId>,
        out: &mut Vec<Vec<LinkId>>,
    ) {
        if n == to {
            out.push(stack.clone());
            return;
        }
        // Two paths are enough to reject.
        if out.len() > 1 {
            return;
        }
        for &e in down.get(&n).into_iter().flatten() {
            stack.push(e);
            go(network.links[e.index()].to, to, down, network, stack, out);
            stack.pop();
        }
    }
    go(from, to, down, network, &mut stack, &mut out);
    out
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) struct Builder {
        pub net: Network,
    }

    impl Builder {
        pub fn new(nodes: usize) -> Self {
            Builder {
                net: Network {
                    nodes: (0..nodes).map(|i| format!("N{i}")).collect(),
                    ..Default::default()
                },
            }
        }

        /// Adds a duplex pair and returns the forward id.
        pub fn link(&mut self, from: u32, to: u32, cap: f64) -> LinkId {
            let id = LinkId(self.net.links.len() as u32);
            for (a, b, suffix) in [(from, to, ""), (to, from, ".rev")] {
                let lid = LinkId(self.net.links.len() as u32);
                self.net.links.push(Link {
                    id: lid,
                    name: format!("L{}{suffix}", id.0),
                    from: NodeId(a),
                    to: NodeId(b),
                    capacity: cap,
                    propagation_delay: 0.001,
                    buffer_limit: None,
                });
            }
            id
        }

        pub fn vc(&mut self, kind: VcKind, srcs: &[u32], dests: &[u32], edges: &[LinkId]) -> VcId {
            let vc = VcId(self.net.vcs.len() as u32);
            let mut sources = Vec::new();
            for &n in srcs {
                let id = SourceId(self.net.sources.len() as u32);
                self.net.sources.push(SourceAttachment {
                    id,
                    name: format!("src{}", id.0),
                    vc,
                    node: NodeId(n),
                });
                sources.push(id);
            }
            self.net.vcs.push(VirtualConnection {
                id: vc,
                name: format!("VC{}", vc.0),
                kind,
                sources,
                destinations: dests.iter().map(|&d| NodeId(d)).collect(),
                edges: edges.to_vec(),
                root: None,
            });
            vc
        }
    }

    #[test]
    fn minimal_p2p_is_valid() {
        let mut b = Builder::new(2);
        let l = b.link(0, 1, 100.0);
        b.vc(VcKind::P2p, &[0], &[1], &[l]);
        let m = validate(b.net).unwrap();
        assert_eq!(m.path_links(VcId(0), SourceId(0), NodeId(1)).unwrap(), &[l]);
    }

    #[test]
    fn p2mp_with_two_sources_is_shape_mismatch() {
        let mut b = Builder::new(3);
        let l1 = b.link(0, 1, 100.0);
        let l2 = b.link(0, 2, 100.0);
        b.vc(VcKind::P2mp, &[0, 0], &[1, 2], &[l1, l2]);
        let err = validate(b.net).unwrap_err();
        assert!(matches!(err.0[0], ModelError::ShapeMismatch { .. }), "{err}");
        assert!(err.to_string().contains("shape mismatch"));
    }

    #[test]
    fn chain_join_classifies_merge_point() {
        // N0 -> N1 <- N2, destination N1 is reached via a further hop N1 -> N3.
        let mut b = Builder::new(4);
        let a = b.link(0, 1, 100.0);
        let c = b.link(2, 1, 100.0);
        let d = b.link(1, 3, 100.0);
        let vc = b.vc(VcKind::Mp2p, &[0, 2], &[3], &[a, c, d]);
        let m = validate(b.net).unwrap();
        let roles = m.topology(vc).roles(NodeId(1));
        assert!(roles.merge && !roles.branch);
        assert!(m.topology(vc).roles(NodeId(0)).source_attach);
    }

    #[test]
    fn three_node_chain_with_source_at_middle_merges() {
        let mut b = Builder::new(3);
        let a = b.link(0, 1, 100.0);
        let c = b.link(1, 2, 100.0);
        let vc = b.vc(VcKind::Mp2p, &[0, 1], &[2], &[a, c]);
        let m = validate(b.net).unwrap();
        let t = m.topology(vc);
        assert!(t.roles(NodeId(1)).merge);
        assert_eq!(
            t.merge_inputs(NodeId(1)),
            vec![BranchId::Link(a), BranchId::Attach(0)]
        );
        assert_eq!(t.flows_on(c).len(), 1);
    }

    #[test]
    fn binary_tree_root_is_branch_point() {
        let mut b = Builder::new(3);
        let l1 = b.link(0, 1, 100.0);
        let l2 = b.link(0, 2, 100.0);
        let vc = b.vc(VcKind::P2mp, &[0], &[1, 2], &[l1, l2]);
        let m = validate(b.net).unwrap();
        let t = m.topology(vc);
        assert!(t.roles(NodeId(0)).branch);
        assert_eq!(t.downstream(NodeId(0)).len(), 2);
    }

    #[test]
    fn inverted_tree_join_is_merge_point() {
        let mut b = Builder::new(3);
        let l1 = b.link(1, 0, 100.0);
        let l2 = b.link(2, 0, 100.0);
        let vc = b.vc(VcKind::Mp2p, &[1, 2], &[0], &[l1, l2]);
        let m = validate(b.net).unwrap();
        let t = m.topology(vc);
        assert!(t.roles(NodeId(0)).merge && t.roles(NodeId(0)).destination);
        assert_eq!(t.merge_inputs(NodeId(0)).len(), 2);
    }

    pub(crate) fn mp2mp_five_node() -> (Model, [LinkId; 4]) {
        // a1@N0, a2@N1 -> root N2 -> d1 N3, d2 N4
        let mut b = Builder::new(5);
        let a = b.link(0, 2, 100.0);
        let c = b.link(1, 2, 100.0);
        let d = b.link(2, 3, 100.0);
        let e = b.link(2, 4, 100.0);
        let vc = b.vc(VcKind::Mp2mp, &[0, 1], &[3, 4], &[a, c, d, e]);
        b.net.vcs[vc.index()].root = Some(NodeId(2));
        (validate(b.net).unwrap(), [a, c, d, e])
    }

    #[test]
    fn mp2mp_root_is_merge_and_branch() {
        let (m, [a, _, _, e]) = mp2mp_five_node();
        let t = m.topology(VcId(0));
        let r = t.roles(NodeId(2));
        assert!(r.merge && r.branch);
        // a1 -> d2 is a1's merge-side path followed by d2's branch-side path.
        assert_eq!(m.path_links(VcId(0), SourceId(0), NodeId(4)).unwrap(), &[a, e]);
    }

    #[test]
    fn depth_two_tree_leftmost_path() {
        let mut b = Builder::new(7);
        let e01 = b.link(0, 1, 1.0);
        let e02 = b.link(0, 2, 1.0);
        let e13 = b.link(1, 3, 1.0);
        let e14 = b.link(1, 4, 1.0);
        let e25 = b.link(2, 5, 1.0);
        let e26 = b.link(2, 6, 1.0);
        b.vc(VcKind::P2mp, &[0], &[3, 4, 5, 6], &[e01, e02, e13, e14, e25, e26]);
        let m = validate(b.net).unwrap();
        assert_eq!(m.path_links(VcId(0), SourceId(0), NodeId(3)).unwrap(), &[e01, e13]);
        assert!(m.path_links(VcId(0), SourceId(0), NodeId(1)).is_err());
    }

    #[test]
    fn rejects_cycles_dangling_and_disconnected() {
        let mut b = Builder::new(3);
        let a = b.link(0, 1, 1.0);
        let c = b.link(1, 2, 1.0);
        let back = b.link(2, 0, 1.0);
        b.vc(VcKind::P2p, &[0], &[2], &[a, c, back]);
        assert!(matches!(validate(b.net).unwrap_err().0[0], ModelError::Cycle { .. }));

        let mut b = Builder::new(2);
        b.link(0, 1, 1.0);
        b.vc(VcKind::P2p, &[0], &[1], &[LinkId(99)]);
        assert!(matches!(
            validate(b.net).unwrap_err().0[0],
            ModelError::DanglingLink { .. }
        ));

        let mut b = Builder::new(3);
        let a = b.link(0, 1, 1.0);
        b.vc(VcKind::P2p, &[0], &[2], &[a]);
        assert!(matches!(
            validate(b.net).unwrap_err().0[0],
            ModelError::DisconnectedSource { .. }
        ));
    }

    #[test]
    fn missing_reverse_link_is_reported() {
        let mut net = Network {
            nodes: vec!["A".into(), "B".into()],
            ..Default::default()
        };
        net.links.push(Link {
            id: LinkId(0),
            name: "only".into(),
            from: NodeId(0),
            to: NodeId(1),
            capacity: 1.0,
            propagation_delay: 0.0,
            buffer_limit: None,
        });
        net.sources.push(SourceAttachment {
            id: SourceId(0),
            name: "s".into(),
            vc: VcId(0),
            node: NodeId(0),
        });
        net.vcs.push(VirtualConnection {
            id: VcId(0),
            name: "v".into(),
            kind: VcKind::P2p,
            sources: vec![SourceId(0)],
            destinations: vec![NodeId(1)],
            edges: vec![LinkId(0)],
            root: None,
        });
        assert!(matches!(
            validate(net).unwrap_err().0[0],
            ModelError::MissingReverse { .. }
        ));
    }

    #[test]
    fn co_attached_sources_stay_separate_flows() {
        let mut b = Builder::new(2);
        let l = b.link(0, 1, 120.0);
        let vc = b.vc(VcKind::Mp2p, &[0, 0], &[1], &[l]);
        let m = validate(b.net).unwrap();
        assert_eq!(m.topology(vc).flows_on(l).len(), 2);
        assert!(!m.topology(vc).roles(NodeId(0)).merge);
    }
}

//! Cell-level discrete-event simulation.

pub mod metrics;
pub mod trace;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::branch_point::{BranchStats, ConsolidationState, Variant};
use crate::codec::{CellHeader, WireFields};
use crate::end_system::{source_next_cell, source_on_brm, DestinationState, Emitted, SourceState};
use crate::merge_point::{MergeState, MergeStats};
use crate::model::{
    BranchId, Cell, Flow, FlowEntry, LinkId, Model, NodeId, RMCellFields, SourceId, VcId,
};
use crate::scenario::{Compiled, CompiledAction, DestHook};
use crate::switch_alloc::{Accounting, Admission, LinkAllocState, OutputQueue};

pub use metrics::{compute_ratios, convergence_time, BrmRecord, Metrics, Ratios, SeriesStore, SourceLog};
pub use trace::TraceSink;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SimOptions {
    /// Keep the raw trace bytes, not just their digest.
    pub keep_trace: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct SimCell {
    cell: Cell,
    flow: Flow,
    /// For backward cells, the VC edge being traversed in reverse.
    edge: Option<LinkId>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Event {
    Arrival { link: LinkId, cell: SimCell },
    TxDone { link: LinkId },
    SourceTimer { source: SourceId, generation: u64 },
    ControlTick,
    Scenario(usize),
    End,
}

#[derive(Debug)]
struct Queued {
    time: f64,
    seq: u64,
    event: Event,
}

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Queued {}
impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Queued {
    // Reversed: the heap pops the earliest event, ties in scheduling order.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then(other.seq.cmp(&self.seq))
    }
}

struct LinkRuntime {
    capacity: f64,
    queue: OutputQueue<SimCell>,
    alloc: LinkAllocState,
    transmitted_at_tick: u64,
    /// Largest table size the static topology allows.
    table_bound: usize,
}

struct SourceRuntime {
    state: SourceState,
    setup: crate::scenario::SourceSetup,
    node: NodeId,
    port: u16,
    active: bool,
    started: bool,
    generation: u64,
    last_send: Option<f64>,
    rng: ChaCha8Rng,
    /// (FRMs sent, BRMs received) at the previous control tick.
    at_tick: (usize, usize),
}

/// Final state of a run.
pub struct RunResult {
    pub metrics: Metrics,
    /// Hex SHA-256 of the RM-cell trace.
    pub digest: String,
    pub trace: Option<Vec<u8>>,
    pub trace_records: u64,
    pub branch_stats: BTreeMap<(VcId, NodeId), BranchStats>,
    pub merge_stats: BTreeMap<(VcId, NodeId), MergeStats>,
    /// Per link: stable dump of the allocation table at the end.
    pub link_dumps: Vec<String>,
    pub link_drops: Vec<u64>,
    pub link_transmitted: Vec<u64>,
    pub final_acr: Vec<f64>,
    /// Data cells emitted per source.
    pub data_sent: Vec<u64>,
    pub destinations: BTreeMap<(VcId, NodeId), DestinationState>,
    /// Cells still queued or in flight when the run stopped.
    pub cells_in_network: u64,
    pub end_time: f64,
}

pub struct Simulation<'a> {
    c: &'a Compiled,
    now: f64,
    seq: u64,
    heap: BinaryHeap<Queued>,
    links: Vec<LinkRuntime>,
    sources: Vec<SourceRuntime>,
    branches: BTreeMap<(VcId, NodeId), ConsolidationState>,
    merges: BTreeMap<(VcId, NodeId), MergeState>,
    dests: BTreeMap<(VcId, NodeId), DestinationState>,
    headers: Vec<CellHeader>,
    trace: TraceSink,
    metrics: Metrics,
    series_links: Vec<LinkId>,
    in_flight: u64,
    ended: bool,
}

impl<'a> Simulation<'a> {
    pub fn new(c: &'a Compiled, opts: SimOptions) -> Self {
        let model = &c.model;
        let links = model
            .links()
            .iter()
            .map(|l| {
                let cfg = c.nodes[l.from.index()].alloc_config(l.buffer_limit);
                let flows = model.static_flows_on(l.id);
                let table_bound = match cfg.accounting {
                    Accounting::Flow => flows.len(),
                    Accounting::Vc => flows.iter().map(|f| f.vc).collect::<BTreeSet<_>>().len(),
                };
                LinkRuntime {
                    capacity: l.capacity,
                    queue: OutputQueue::new(l.buffer_limit),
                    alloc: LinkAllocState::new(l.capacity, cfg),
                    transmitted_at_tick: 0,
                    table_bound,
                }
            })
            .collect();

        let mut branches = BTreeMap::new();
        let mut merges = BTreeMap::new();
        let mut dests = BTreeMap::new();
        for vc in model.vcs() {
            let topo = model.topology(vc.id);
            let reset_er = vc
                .sources
                .iter()
                .map(|s| c.sources[s.index()].params.pcr)
                .fold(0.0, f64::max);
            for (&node, roles) in topo.all_roles() {
                let settings = &c.nodes[node.index()];
                if roles.branch {
                    let outs = topo.downstream(node).iter().map(|&l| BranchId::Link(l)).collect();
                    branches.insert(
                        (vc.id, node),
                        ConsolidationState::new(outs, reset_er, settings.branch_config()),
                    );
                }
                if roles.merge {
                    merges.insert(
                        (vc.id, node),
                        MergeState::new(topo.merge_inputs(node), settings.merge_config()),
                    );
                }
            }
            for d in topo.destinations() {
                let hook = c.vcs[vc.id.index()].dest_hook == DestHook::Congested;
                dests.insert(
                    (vc.id, d),
                    DestinationState {
                        congestion_hook: hook,
                        congested: hook,
                        ..DestinationState::default()
                    },
                );
            }
        }

        let sources: Vec<SourceRuntime> = model
            .sources()
            .iter()
            .map(|a| {
                let setup = c.sources[a.id.index()].clone();
                let topo = model.topology(a.vc);
                SourceRuntime {
                    state: SourceState::new(a.vc, a.id, &setup.params),
                    node: a.node,
                    port: topo.port_of(a.node, a.id).unwrap_or(0),
                    setup,
                    active: true,
                    started: false,
                    generation: 0,
                    last_send: None,
                    at_tick: (0, 0),
                    rng: ChaCha8Rng::seed_from_u64(c.run.seed.wrapping_add(a.id.0 as u64)),
                }
            })
            .collect();

        let mut metrics = Metrics {
            window: c.run.window(),
            ..Metrics::default()
        };
        for a in model.sources() {
            let topo = model.topology(a.vc);
            let max_hops = topo
                .destinations()
                .filter_map(|d| topo.path(a.id, d).map(<[LinkId]>::len))
                .max()
                .unwrap_or(0);
            metrics.sources.push(SourceLog {
                name: a.name.clone(),
                max_hops,
                ..SourceLog::default()
            });
        }
        let series_links: Vec<LinkId> = model
            .vcs()
            .iter()
            .flat_map(|v| v.edges.iter().copied())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();

        let mut sim = Simulation {
            c,
            now: 0.0,
            seq: 0,
            heap: BinaryHeap::new(),
            links,
            sources,
            branches,
            merges,
            dests,
            headers: c.vcs.iter().map(|v| CellHeader::for_vci(v.vci)).collect(),
            trace: TraceSink::new(opts.keep_trace),
            metrics,
            series_links,
            in_flight: 0,
            ended: false,
        };
        for i in 0..sim.sources.len() {
            let start = sim.sources[i].setup.start;
            if start <= c.run.duration {
                sim.schedule(start, Event::SourceTimer { source: SourceId(i as u32), generation: 0 });
            }
        }
        for (i, (t, _)) in c.events.iter().enumerate() {
            sim.schedule(*t, Event::Scenario(i));
        }
        sim.schedule(0.0, Event::ControlTick);
        sim.schedule(c.run.duration, Event::End);
        sim
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn model(&self) -> &Model {
        &self.c.model
    }

    pub fn metrics(&self) -> &Metrics {
        &self.metrics
    }

    pub fn source_state(&self, s: SourceId) -> &SourceState {
        &self.sources[s.index()].state
    }

    pub fn link_alloc(&self, l: LinkId) -> &LinkAllocState {
        &self.links[l.index()].alloc
    }

    pub fn queue_len(&self, l: LinkId) -> usize {
        self.links[l.index()].queue.len()
    }

    pub fn branch_state(&self, vc: VcId, node: NodeId) -> Option<&ConsolidationState> {
        self.branches.get(&(vc, node))
    }

    pub fn merge_state(&self, vc: VcId, node: NodeId) -> Option<&MergeState> {
        self.merges.get(&(vc, node))
    }

    fn schedule(&mut self, time: f64, event: Event) {
        assert!(time >= self.now, "event scheduled in the past: {time} < {}", self.now);
        self.seq += 1;
        self.heap.push(Queued {
            time,
            seq: self.seq,
            event,
        });
    }

    /// Processes every event up to and including time `t`.
    pub fn run_until(&mut self, t: f64) {
        while !self.ended {
            match self.heap.peek() {
                Some(q) if q.time <= t => {}
                _ => break,
            }
            let q = self.heap.pop().expect("peeked");
            self.now = q.time;
            self.metrics.events += 1;
            self.dispatch(q.event);
        }
        if !self.ended {
            self.now = self.now.max(t.min(self.c.run.duration));
        }
    }

    pub fn run(mut self) -> RunResult {
        self.run_until(f64::INFINITY);
        self.finish()
    }

    pub fn finish(self) -> RunResult {
        let (digest, trace) = {
            let records = self.trace.records;
            let (d, t) = self.trace.finish();
            (d, (t, records))
        };
        let (trace, trace_records) = trace;
        RunResult {
            digest,
            trace,
            trace_records,
            branch_stats: self.branches.iter().map(|(k, v)| (*k, v.stats.clone())).collect(),
            merge_stats: self.merges.iter().map(|(k, v)| (*k, v.stats.clone())).collect(),
            link_dumps: self.links.iter().map(|l| l.alloc.dump()).collect(),
            link_drops: self.links.iter().map(|l| l.queue.drops).collect(),
            link_transmitted: self.links.iter().map(|l| l.queue.transmitted).collect(),
            final_acr: self.sources.iter().map(|s| s.state.acr).collect(),
            data_sent: self.sources.iter().map(|s| s.state.data_sent).collect(),
            destinations: self.dests,
            cells_in_network: self.in_flight,
            end_time: self.now,
            metrics: self.metrics,
        }
    }

    fn dispatch(&mut self, ev: Event) {
        match ev {
            Event::Arrival { link, cell } => self.on_arrival(link, cell),
            Event::TxDone { link } => self.on_tx_done(link),
            Event::SourceTimer { source, generation } => self.on_source_timer(source, generation),
            Event::ControlTick => self.on_tick(),
            Event::Scenario(i) => self.on_scenario(i),
            Event::End => self.ended = true,
        }
    }

    // ---- links ----

    fn send(&mut self, link: LinkId, cell: SimCell) {
        let now = self.now;
        let lr = &mut self.links[link.index()];
        let forward = match cell.cell {
            Cell::Data(_) => true,
            Cell::Rm(rm) => rm.is_forward(),
        };
        if forward {
            lr.alloc.measure_on_cell(cell.flow, now);
        }
        match lr.queue.enqueue(cell) {
            Admission::Dropped => {
                if forward {
                    lr.alloc.record_loss(cell.flow);
                }
                self.metrics.drops += 1;
            }
            adm => {
                self.in_flight += 1;
                lr.alloc.queue_len = lr.queue.len();
                if adm == Admission::StartService {
                    let t = now + 1.0 / lr.capacity;
                    self.schedule(t, Event::TxDone { link });
                }
            }
        }
    }

    fn on_tx_done(&mut self, link: LinkId) {
        let lr = &mut self.links[link.index()];
        let (cell, more) = lr.queue.complete();
        lr.alloc.queue_len = lr.queue.len();
        let service = 1.0 / lr.capacity;
        let delay = self.c.model.link(link).propagation_delay;
        let now = self.now;
        self.schedule(now + delay, Event::Arrival { link, cell });
        if more {
            self.schedule(now + service, Event::TxDone { link });
        }
    }

    fn on_arrival(&mut self, link: LinkId, sc: SimCell) {
        self.in_flight -= 1;
        let node = self.c.model.link(link).to;
        match sc.cell {
            Cell::Rm(rm) => {
                self.trace
                    .record(self.now, link, &rm, self.headers[rm.vc.index()]);
                if rm.is_forward() {
                    self.forward_at(node, sc, BranchId::Link(link));
                } else {
                    self.metrics.brm_link_arrivals += 1;
                    if self.metrics.in_window(self.now) {
                        self.metrics.brm_link_arrivals_in_window += 1;
                    }
                    let edge = sc.edge.expect("backward cell without an edge");
                    self.backward_at(node, rm, edge);
                }
            }
            Cell::Data(_) => self.forward_at(node, sc, BranchId::Link(link)),
        }
    }

    // ---- forward path ----

    fn forward_at(&mut self, u: NodeId, mut sc: SimCell, input: BranchId) {
        let vc = sc.cell.vc();
        let now = self.now;
        if let Some(m) = self.merges.get_mut(&(vc, u)) {
            m.on_cell(input, now);
            let mut served = None;
            match &mut sc.cell {
                Cell::Rm(frm) => served = m.on_upstream_frm(input, frm, now),
                Cell::Data(d) => {
                    if m.config.erase_origin {
                        d.origin = SourceId::ERASED;
                    }
                }
            }
            sc.flow = Flow {
                vc,
                entry: FlowEntry::Merged(u),
            };
            if let Some((b, brm)) = served {
                self.send_to_branch(u, b, brm);
            }
        }
        let topo = self.c.model.topology(vc);
        if topo.is_destination(u) {
            let d = self.dests.get_mut(&(vc, u)).expect("destination state");
            match sc.cell {
                Cell::Data(_) => {
                    d.data_received += 1;
                    *self.metrics.delivered.entry((vc.0, u.0)).or_default() += 1;
                }
                Cell::Rm(frm) => {
                    if let Some(brm) = d.on_frm(&frm) {
                        self.depart(u, brm, None);
                    }
                }
            }
            return;
        }
        let downs: Vec<LinkId> = topo.downstream(u).to_vec();
        for l in downs {
            self.send(l, SimCell { edge: None, ..sc });
        }
        if let Cell::Rm(frm) = sc.cell {
            if let Some(cs) = self.branches.get_mut(&(vc, u)) {
                if let Some(em) = cs.on_downstream_frm(&frm, now) {
                    self.depart(u, em.brm, None);
                }
            }
        }
    }

    // ---- backward path ----

    fn backward_at(&mut self, u: NodeId, brm: RMCellFields, edge: LinkId) {
        let topo = self.c.model.topology(brm.vc);
        if !topo.source_links(brm.origin).contains(&edge) {
            self.metrics.misrouted_hops += 1;
        }
        let now = self.now;
        if let Some(cs) = self.branches.get_mut(&(brm.vc, u)) {
            if let Ok(Some(em)) = cs.on_branch_brm(BranchId::Link(edge), &brm, now) {
                self.depart(u, em.brm, Some(edge));
            }
            return;
        }
        self.depart(u, brm, Some(edge));
    }

    /// A BRM leaves node `u` toward the sources: stamp the node's outputs, then route upstream.
    /// `from` is the edge a relayed BRM arrived on; pass-through branch points stamp only it.
    fn depart(&mut self, u: NodeId, mut brm: RMCellFields, from: Option<LinkId>) {
        let vc = brm.vc;
        let topo = self.c.model.topology(vc);
        let cs = self.branches.get(&(vc, u));
        let relay = cs.is_some_and(|cs| cs.config.variant == Variant::PassThrough);
        for &l in topo.downstream(u) {
            let skip = if relay {
                from != Some(l)
            } else {
                cs.is_some_and(|cs| cs.is_nonresponsive(BranchId::Link(l)))
            };
            if skip {
                continue;
            }
            let flow = topo.label(l, brm.origin).unwrap_or(Flow {
                vc,
                entry: FlowEntry::Aggregate,
            });
            brm = self.links[l.index()].alloc.process_brm(&brm, flow);
        }
        if self.c.run.quantize {
            brm = WireFields::from_fields(&brm)
                .quantized()
                .into_fields(vc, brm.origin);
        }
        let now = self.now;
        if let Some(m) = self.merges.get_mut(&(vc, u)) {
            for (b, copy) in m.on_downstream_brm(&brm, now) {
                self.send_to_branch(u, b, copy);
            }
            return;
        }
        if let Some(p) = topo.port_of(u, brm.origin) {
            self.send_to_branch(u, BranchId::Attach(p), brm);
            return;
        }
        match topo.upstream(u) {
            [e] => self.send_backward(*e, brm),
            _ => self.metrics.misrouted_hops += 1,
        }
    }

    fn send_to_branch(&mut self, u: NodeId, b: BranchId, brm: RMCellFields) {
        match b {
            BranchId::Link(e) => self.send_backward(e, brm),
            BranchId::Attach(p) => {
                let topo = self.c.model.topology(brm.vc);
                let s = topo.attached(u)[p as usize];
                self.deliver(s, brm);
            }
        }
    }

    fn send_backward(&mut self, edge: LinkId, brm: RMCellFields) {
        let rev = self
            .c
            .model
            .reverse_of(edge)
            .expect("validated VC edges have reverse links");
        let sc = SimCell {
            cell: Cell::Rm(brm),
            flow: Flow {
                vc: brm.vc,
                entry: FlowEntry::Aggregate,
            },
            edge: Some(edge),
        };
        self.send(rev, sc);
    }

    // ---- sources ----

    fn deliver(&mut self, s: SourceId, brm: RMCellFields) {
        let now = self.now;
        let src = &mut self.sources[s.index()];
        let log = &mut self.metrics.sources[s.index()];
        if source_on_brm(&mut src.state, &src.setup.params, &brm).is_err() {
            log.misrouted += 1;
            return;
        }
        log.brm.push(BrmRecord {
            time: now,
            seq: brm.seq,
            er: brm.er,
            ci: brm.ci,
        });
        self.reschedule(s);
    }

    /// Re-times the next cell after a rate change.
    fn reschedule(&mut self, s: SourceId) {
        let now = self.now;
        let src = &mut self.sources[s.index()];
        if !src.active || !src.started {
            return;
        }
        src.generation += 1;
        let rate = src.state.send_rate(&src.setup.params);
        if rate <= 0.0 {
            src.state.next_send_time = None;
            return;
        }
        let t = src.last_send.map_or(now, |l| (l + 1.0 / rate).max(now));
        src.state.next_send_time = Some(t);
        let generation = src.generation;
        self.schedule(t, Event::SourceTimer { source: s, generation });
    }

    fn on_source_timer(&mut self, s: SourceId, generation: u64) {
        let now = self.now;
        let src = &mut self.sources[s.index()];
        if generation != src.generation || !src.active {
            return;
        }
        src.started = true;
        let (emitted, next) = source_next_cell(&mut src.state, &src.setup.params, now);
        let cell = match emitted {
            Emitted::None => None,
            Emitted::Data(d) => Some(Cell::Data(d)),
            Emitted::Frm(f) => Some(Cell::Rm(f)),
        };
        if cell.is_some() {
            src.last_send = Some(now);
        }
        if let Some(t) = next {
            let jitter = src.setup.jitter;
            let t = if jitter > 0.0 && cell.is_some() {
                let gap = (t - now) * (1.0 + jitter * (2.0 * src.rng.gen::<f64>() - 1.0));
                now + gap
            } else {
                t
            };
            src.state.next_send_time = Some(t);
            let (node, port) = (src.node, src.port);
            self.schedule(t, Event::SourceTimer { source: s, generation });
            if let Some(cell) = cell {
                self.inject(s, node, port, cell);
            }
        } else if let Some(cell) = cell {
            let (node, port) = (src.node, src.port);
            self.inject(s, node, port, cell);
        }
    }

    fn inject(&mut self, s: SourceId, node: NodeId, port: u16, cell: Cell) {
        let now = self.now;
        let in_window = self.metrics.in_window(now);
        let log = &mut self.metrics.sources[s.index()];
        log.cells_sent += 1;
        if in_window {
            log.cells_in_window += 1;
        }
        if let Cell::Rm(f) = cell {
            log.frm.push((now, f.seq));
        }
        let sc = SimCell {
            cell,
            flow: Flow {
                vc: cell.vc(),
                entry: FlowEntry::Attach { node, port },
            },
            edge: None,
        };
        self.forward_at(node, sc, BranchId::Attach(port));
    }

    // ---- control ----

    fn on_tick(&mut self) {
        let now = self.now;
        let dt = self.c.run.control_interval;
        for lr in &mut self.links {
            lr.alloc.recompute(now);
            if lr.alloc.active_flows() > lr.table_bound {
                self.metrics.audit_violations += 1;
            }
        }
        for cs in self.branches.values_mut() {
            cs.check_nonresponsive(now);
        }
        for i in 0..self.sources.len() {
            let log = &self.metrics.sources[i];
            let counts = (log.frm.len(), log.brm.len());
            let (f0, b0) = std::mem::replace(&mut self.sources[i].at_tick, counts);
            if counts.0 > f0 {
                let ratio = (counts.1 - b0) as f64 / (counts.0 - f0) as f64;
                let id = self.metrics.series.id(&format!("root_ratio.{}", log.name));
                self.metrics.series.push(id, now, ratio);
            }
            let src = &self.sources[i];
            let rate = if src.active && src.started {
                src.state.send_rate(&src.setup.params)
            } else {
                0.0
            };
            let name = &self.metrics.sources[i].name;
            let (a, r) = (format!("acr.{name}"), format!("rate.{name}"));
            let series = &mut self.metrics.series;
            let ia = series.id(&a);
            series.push(ia, now, src.state.acr);
            let ir = series.id(&r);
            series.push(ir, now, rate);
        }
        for &l in &self.series_links {
            let lr = &mut self.links[l.index()];
            let name = &self.c.model.link(l).name;
            let sent = lr.queue.transmitted - lr.transmitted_at_tick;
            lr.transmitted_at_tick = lr.queue.transmitted;
            let util = if now > 0.0 {
                sent as f64 / (lr.capacity * dt.min(now))
            } else {
                0.0
            };
            let er = lr.alloc.advertised_rate(Flow {
                vc: VcId(0),
                entry: FlowEntry::Aggregate,
            });
            let q = lr.queue.len() as f64;
            let series = &mut self.metrics.series;
            for (key, v) in [("queue", q), ("er", er), ("util", util)] {
                let id = series.id(&format!("{key}.{name}"));
                series.push(id, now, v);
            }
        }
        for (&(vc, node), cs) in &self.branches {
            let st = &cs.stats;
            let prefix = format!(
                "branch.{}.{}",
                self.c.model.vc(vc).name,
                self.c.model.node_name(node)
            );
            for (key, v) in [
                ("emissions", st.emissions),
                ("noise_events", st.noise_events),
                ("fast_overload", st.fast_overload),
                ("nonresponsive_transitions", st.nonresponsive_transitions),
            ] {
                let id = self.metrics.series.id(&format!("{prefix}.{key}"));
                self.metrics.series.push(id, now, v as f64);
            }
        }
        if now + dt <= self.c.run.duration {
            self.schedule(now + dt, Event::ControlTick);
        }
    }

    fn on_scenario(&mut self, i: usize) {
        let now = self.now;
        match self.c.events[i].1 {
            CompiledAction::Capacity(l, v) => {
                let lr = &mut self.links[l.index()];
                lr.capacity = v;
                lr.alloc.set_capacity(v, now);
            }
            CompiledAction::SourceOff(s) => {
                let src = &mut self.sources[s.index()];
                src.active = false;
                src.generation += 1;
            }
            CompiledAction::SourceOn(s) => {
                let src = &mut self.sources[s.index()];
                if !src.active {
                    src.active = true;
                    if src.started {
                        self.reschedule(s);
                    } else {
                        let g = src.generation;
                        let t = src.setup.start.max(now);
                        self.schedule(t, Event::SourceTimer { source: s, generation: g });
                    }
                }
            }
            CompiledAction::Silence(vc, node, on) => {
                if let Some(d) = self.dests.get_mut(&(vc, node)) {
                    d.silenced = on;
                }
            }
        }
    }
}

/// Runs a compiled scenario to completion.
pub fn simulate(c: &Compiled, opts: SimOptions) -> RunResult {
    Simulation::new(c, opts).run()
}

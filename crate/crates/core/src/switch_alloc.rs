//! Output-link queuing point and explicit-rate allocation.
//!
//! Per-flow state is keyed by [`Flow`], which cannot name a source. Rates come only from
//! measured arrivals; the CCR field of RM cells is never consulted here.

use std::collections::{BTreeMap, VecDeque};

use crate::model::{Flow, FlowEntry, RMCellFields};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AllocAlgorithm {
    EqualShare,
    ConsistentMarking,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Accounting {
    Flow,
    Vc,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocConfig {
    pub algorithm: AllocAlgorithm,
    pub accounting: Accounting,
    pub target_utilization: f64,
    /// Queue length above which CI is set; infinite disables marking.
    pub ci_threshold: f64,
    pub averaging_interval: f64,
    pub activity_timeout: f64,
}

impl Default for AllocConfig {
    fn default() -> Self {
        AllocConfig {
            algorithm: AllocAlgorithm::ConsistentMarking,
            accounting: Accounting::Flow,
            target_utilization: 0.95,
            ci_threshold: f64::INFINITY,
            averaging_interval: 0.01,
            activity_timeout: 0.1,
        }
    }
}

/// Exponentially averaged arrival rate.
///
/// Each arrival after a gap `dt` updates `rate <- rate * e^(-dt/tau) + (1 - e^(-dt/tau)) / dt`,
/// so a periodic train converges to its exact rate and the first arrival leaves the rate at 0.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RateMeter {
    pub rate: f64,
    pub last: Option<f64>,
}

impl RateMeter {
    pub fn observe(&mut self, now: f64, tau: f64) {
        if let Some(last) = self.last {
            let dt = (now - last).max(0.0);
            let decay = (-dt / tau).exp();
            let gain = if dt > 1e-15 { (1.0 - decay) / dt } else { 1.0 / tau };
            self.rate = self.rate * decay + gain;
        }
        self.last = Some(now);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowRecord {
    pub meter: RateMeter,
    pub recorded_allocation: f64,
    pub marked_bottlenecked_elsewhere: bool,
    pub last_activity: f64,
}

impl FlowRecord {
    pub fn measured_rate(&self) -> f64 {
        self.meter.rate
    }
}

/// Water-filling level over measured rates on one link.
///
/// Flows measured below the running level are marked as bottlenecked elsewhere and their
/// rates are removed from the capacity; the remainder is shared equally among the rest. When
/// every flow is below its level, the largest keeps the remainder. Returns the level and the
/// marks in input order.
pub fn consistent_marking_level(available: f64, measured: &[f64]) -> (f64, Vec<bool>) {
    let n = measured.len();
    if n == 0 {
        return (available, Vec::new());
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| measured[a].total_cmp(&measured[b]).then(a.cmp(&b)));
    let mut marks = vec![false; n];
    let mut used = 0.0;
    for (k, &i) in order.iter().enumerate() {
        let level = (available - used) / (n - k) as f64;
        if measured[i] >= level || k + 1 == n {
            return (level.max(0.0), marks);
        }
        marks[i] = true;
        used += measured[i];
    }
    unreachable!()
}

/// Allocation state of one output link.
#[derive(Debug, Clone)]
pub struct LinkAllocState {
    pub capacity: f64,
    pub config: AllocConfig,
    pub queue_len: usize,
    table: BTreeMap<Flow, FlowRecord>,
    level: f64,
    losses: BTreeMap<Flow, u64>,
}

impl LinkAllocState {
    pub fn new(capacity: f64, config: AllocConfig) -> Self {
        let level = capacity * config.target_utilization;
        LinkAllocState {
            capacity,
            config,
            queue_len: 0,
            table: BTreeMap::new(),
            level,
            losses: BTreeMap::new(),
        }
    }

    pub fn target_capacity(&self) -> f64 {
        self.capacity * self.config.target_utilization
    }

    fn key(&self, flow: Flow) -> Flow {
        match self.config.accounting {
            Accounting::Flow => flow,
            Accounting::Vc => Flow {
                vc: flow.vc,
                entry: FlowEntry::Aggregate,
            },
        }
    }

    pub fn measure_on_cell(&mut self, flow: Flow, now: f64) {
        let key = self.key(flow);
        let tau = self.config.averaging_interval;
        let rec = self.table.entry(key).or_insert(FlowRecord {
            meter: RateMeter::default(),
            recorded_allocation: 0.0,
            marked_bottlenecked_elsewhere: false,
            last_activity: now,
        });
        rec.meter.observe(now, tau);
        rec.last_activity = now;
    }

    pub fn record_loss(&mut self, flow: Flow) {
        *self.losses.entry(self.key(flow)).or_default() += 1;
    }

    pub fn losses(&self) -> &BTreeMap<Flow, u64> {
        &self.losses
    }

    /// Drops flows idle for longer than the activity timeout.
    pub fn expire(&mut self, now: f64) {
        let timeout = self.config.activity_timeout;
        self.table.retain(|_, r| now - r.last_activity <= timeout);
    }

    /// Control-interval update: expire idle flows and recompute the advertised level.
    pub fn recompute(&mut self, now: f64) {
        self.expire(now);
        let available = self.target_capacity();
        self.level = match self.config.algorithm {
            AllocAlgorithm::EqualShare => available / self.table.len().max(1) as f64,
            AllocAlgorithm::ConsistentMarking => {
                let measured: Vec<f64> = self.table.values().map(FlowRecord::measured_rate).collect();
                let (level, marks) = consistent_marking_level(available, &measured);
                for (rec, mark) in self.table.values_mut().zip(marks) {
                    rec.marked_bottlenecked_elsewhere = mark;
                }
                level
            }
        };
        let level = self.level;
        for rec in self.table.values_mut() {
            rec.recorded_allocation = level;
        }
    }

    pub fn set_capacity(&mut self, capacity: f64, now: f64) {
        self.capacity = capacity;
        self.recompute(now);
    }

    pub fn advertised_rate(&self, _flow: Flow) -> f64 {
        if self.table.is_empty() {
            self.target_capacity()
        } else {
            self.level
        }
    }

    pub fn congested(&self) -> bool {
        self.queue_len as f64 > self.config.ci_threshold
    }

    /// Stamps a backward RM cell: ER can only fall and CI can only be set.
    pub fn process_brm(&self, brm: &RMCellFields, flow: Flow) -> RMCellFields {
        debug_assert!(!brm.is_forward());
        RMCellFields {
            er: brm.er.min(self.advertised_rate(flow)),
            ci: brm.ci || self.congested(),
            ..*brm
        }
    }

    pub fn active_flows(&self) -> usize {
        self.table.len()
    }

    pub fn table(&self) -> &BTreeMap<Flow, FlowRecord> {
        &self.table
    }

    /// Stable text dump of the per-flow table.
    pub fn dump(&self) -> String {
        let mut out = format!("capacity={} level={}\n", self.capacity, self.level);
        for (flow, r) in &self.table {
            out.push_str(&format!(
                "{flow} rate={} alloc={} marked={} last={}\n",
                r.meter.rate, r.recorded_allocation, r.marked_bottlenecked_elsewhere, r.last_activity
            ));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Admission {
    /// The link was idle; the cell is in service now.
    StartService,
    Queued,
    Dropped,
}

/// FIFO output buffer. The head item is the one in service.
#[derive(Debug, Clone)]
pub struct OutputQueue<T> {
    items: VecDeque<T>,
    buffer_limit: Option<usize>,
    pub drops: u64,
    pub transmitted: u64,
}

impl<T> OutputQueue<T> {
    pub fn new(buffer_limit: Option<usize>) -> Self {
        OutputQueue {
            items: VecDeque::new(),
            buffer_limit,
            drops: 0,
            transmitted: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn enqueue(&mut self, item: T) -> Admission {
        if self.buffer_limit.is_some_and(|lim| self.items.len() >= lim) {
            self.drops += 1;
            return Admission::Dropped;
        }
        self.items.push_back(item);
        if self.items.len() == 1 {
            Admission::StartService
        } else {
            Admission::Queued
        }
    }

    /// Finishes serializing the head item. The flag tells whether another item entered service.
    pub fn complete(&mut self) -> (T, bool) {
        let done = self
            .items
            .pop_front()
            .expect("transmission completed on an empty queue");
        self.transmitted += 1;
        (done, !self.items.is_empty())
    }
}

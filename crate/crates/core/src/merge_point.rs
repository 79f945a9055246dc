//! Multipoint-to-point merging: per-input-branch FRM credit, BRM distribution and subdivision
//! of the VC's explicit rate among input branches.
//!
//! State is kept per input branch only. A credit is the `(origin, seq)` tag of an FRM that was
//! forwarded from that branch and not yet answered, so each BRM copy is addressed to a source
//! whose cells actually came in on that branch.

use std::collections::VecDeque;

use crate::model::{BranchId, RMCellFields, SourceId};
use crate::switch_alloc::RateMeter;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subdivision {
    Equal,
    Waterfill,
}

impl Subdivision {
    pub fn as_str(self) -> &'static str {
        match self {
            Subdivision::Equal => "equal",
            Subdivision::Waterfill => "waterfill",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "equal" => Some(Subdivision::Equal),
            "waterfill" => Some(Subdivision::Waterfill),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MergeConfig {
    pub subdivision: Subdivision,
    /// Waterfill cap = measured input rate times this factor.
    pub headroom: f64,
    /// Waterfill cap never drops below this fraction of the equal share.
    pub floor_fraction: f64,
    pub erase_origin: bool,
    pub averaging_interval: f64,
    pub activity_timeout: f64,
}

impl Default for MergeConfig {
    fn default() -> Self {
        MergeConfig {
            subdivision: Subdivision::Equal,
            headroom: 1.2,
            floor_fraction: 0.1,
            erase_origin: false,
            averaging_interval: 0.01,
            activity_timeout: 0.1,
        }
    }
}

/// Max-min split of `er` over capped claimants; whatever the caps leave over is shared
/// equally so the VC's rate is never stranded.
pub fn waterfill_split(er: f64, caps: &[f64]) -> Vec<f64> {
    let n = caps.len();
    let mut out = vec![0.0; n];
    if n == 0 {
        return out;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| caps[a].total_cmp(&caps[b]).then(a.cmp(&b)));
    let mut left = er;
    for (k, &i) in order.iter().enumerate() {
        let share = left / (n - k) as f64;
        out[i] = caps[i].min(share);
        left -= out[i];
    }
    if left > 0.0 {
        let extra = left / n as f64;
        for v in &mut out {
            *v += extra;
        }
    }
    out
}

/// Per-branch ER for `n` active branches with the given measured input rates.
pub fn subdivide_er(er: f64, measured: &[f64], config: &MergeConfig) -> Vec<f64> {
    let n = measured.len();
    if n == 0 {
        return Vec::new();
    }
    let equal = er / n as f64;
    match config.subdivision {
        Subdivision::Equal => vec![equal; n],
        Subdivision::Waterfill => {
            let floor = config.floor_fraction * equal;
            let caps: Vec<f64> = measured
                .iter()
                .map(|m| (m * config.headroom).max(floor))
                .collect();
            waterfill_split(er, &caps)
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MergeStats {
    pub frm_forwarded: u64,
    pub copies: Vec<u64>,
    pub pending_stored: u64,
    pub pending_replaced: u64,
    pub pending_served: u64,
}

#[derive(Debug, Clone)]
struct BranchState {
    credits: VecDeque<(SourceId, u32)>,
    meter: RateMeter,
    last_arrival: Option<f64>,
}

/// Merge registers of one merge point for one VC.
#[derive(Debug, Clone)]
pub struct MergeState {
    pub config: MergeConfig,
    branches: Vec<BranchId>,
    state: Vec<BranchState>,
    pending: Option<RMCellFields>,
    pub stats: MergeStats,
}

impl MergeState {
    pub fn new(branches: Vec<BranchId>, config: MergeConfig) -> Self {
        let n = branches.len();
        MergeState {
            config,
            branches,
            state: vec![
                BranchState {
                    credits: VecDeque::new(),
                    meter: RateMeter::default(),
                    last_arrival: None,
                };
                n
            ],
            pending: None,
            stats: MergeStats {
                copies: vec![0; n],
                ..MergeStats::default()
            },
        }
    }

    pub fn branches(&self) -> &[BranchId] {
        &self.branches
    }

    fn index(&self, branch: BranchId) -> usize {
        self.branches
            .iter()
            .position(|&b| b == branch)
            .unwrap_or_else(|| panic!("{branch} is not an input of this merge point"))
    }

    pub fn credit(&self, branch: BranchId) -> usize {
        self.state[self.index(branch)].credits.len()
    }

    pub fn total_credit(&self) -> usize {
        self.state.iter().map(|s| s.credits.len()).sum()
    }

    pub fn pending(&self) -> Option<&RMCellFields> {
        self.pending.as_ref()
    }

    pub fn measured_rate(&self, branch: BranchId) -> f64 {
        self.state[self.index(branch)].meter.rate
    }

    /// Any in-rate cell (data or FRM) arriving on an input branch.
    pub fn on_cell(&mut self, branch: BranchId, now: f64) {
        let tau = self.config.averaging_interval;
        let i = self.index(branch);
        self.state[i].meter.observe(now, tau);
        self.state[i].last_arrival = Some(now);
    }

    /// Records credit for a forwarded FRM. A stored BRM is served to this branch at once.
    pub fn on_upstream_frm(
        &mut self,
        branch: BranchId,
        frm: &RMCellFields,
        now: f64,
    ) -> Option<(BranchId, RMCellFields)> {
        let i = self.index(branch);
        self.state[i].credits.push_back((frm.origin, frm.seq));
        self.stats.frm_forwarded += 1;
        let brm = self.pending.take()?;
        self.stats.pending_served += 1;
        let shares = self.shares(brm.er, now);
        Some((branch, self.copy_to(i, &brm, shares[i])))
    }

    /// Splits a BRM arriving from the destination side into one copy per branch with credit.
    pub fn on_downstream_brm(&mut self, brm: &RMCellFields, now: f64) -> Vec<(BranchId, RMCellFields)> {
        let with_credit: Vec<usize> = (0..self.branches.len())
            .filter(|&i| !self.state[i].credits.is_empty())
            .collect();
        if with_credit.is_empty() {
            if self.pending.replace(*brm).is_some() {
                self.stats.pending_replaced += 1;
            }
            self.stats.pending_stored += 1;
            return Vec::new();
        }
        let shares = self.shares(brm.er, now);
        with_credit
            .into_iter()
            .map(|i| (self.branches[i], self.copy_to(i, brm, shares[i])))
            .collect()
    }

    fn copy_to(&mut self, i: usize, brm: &RMCellFields, er: f64) -> RMCellFields {
        let (origin, seq) = self.state[i]
            .credits
            .pop_front()
            .expect("copy sent to a branch without credit");
        self.stats.copies[i] += 1;
        RMCellFields {
            er: er.min(brm.er),
            origin,
            seq,
            ..*brm
        }
    }

    fn active(&self, i: usize, now: f64) -> bool {
        let s = &self.state[i];
        !s.credits.is_empty()
            || s.last_arrival
                .is_some_and(|t| now - t <= self.config.activity_timeout)
    }

    /// ER share of every branch; inactive branches get nothing.
    fn shares(&self, er: f64, now: f64) -> Vec<f64> {
        let active: Vec<usize> = (0..self.branches.len()).filter(|&i| self.active(i, now)).collect();
        let measured: Vec<f64> = active.iter().map(|&i| self.state[i].meter.rate).collect();
        let split = subdivide_er(er, &measured, &self.config);
        let mut out = vec![0.0; self.branches.len()];
        for (&i, v) in active.iter().zip(split) {
            out[i] = v;
        }
        out
    }
}

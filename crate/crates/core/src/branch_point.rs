//! Point-to-multipoint feedback consolidation.
//!
//! Replication itself is trivial and done by the engine; this module owns the per-(node, VC)
//! registers that turn several branch BRM streams into one upstream stream.

use crate::model::{BranchId, Direction, RMCellFields};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Emit on every FRM arrival if any feedback has accumulated.
    NoWait,
    /// Emit on the first FRM arrival after every responsive branch has answered.
    WaitAll,
    /// `WaitAll`, plus an immediate emission when a branch reports overload.
    WaitAllFastOverload,
    /// Negative control: every branch BRM goes upstream unmodified.
    PassThrough,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::NoWait => "v1",
            Variant::WaitAll => "v2",
            Variant::WaitAllFastOverload => "v3",
            Variant::PassThrough => "passthrough",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "v1" | "nowait" => Variant::NoWait,
            "v2" | "waitall" => Variant::WaitAll,
            "v3" | "waitall-fastoverload" => Variant::WaitAllFastOverload,
            "passthrough" | "none" => Variant::PassThrough,
            _ => return None,
        })
    }

    fn waits(self) -> bool {
        matches!(self, Variant::WaitAll | Variant::WaitAllFastOverload)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NrTimeout {
    /// Eight smoothed upstream FRM gaps, at least 10 ms; infinite until two FRMs were seen.
    Auto,
    Fixed(f64),
    Never,
}

pub const NR_TIMEOUT_FLOOR: f64 = 0.01;
pub const NR_TIMEOUT_MULTIPLE: f64 = 8.0;

#[derive(Debug, Clone, PartialEq)]
pub struct BranchConfig {
    pub variant: Variant,
    /// Emit as soon as a round completes instead of waiting for the next FRM.
    pub immediate_emit: bool,
    pub overload_fraction: f64,
    pub nr_timeout: NrTimeout,
}

impl Default for BranchConfig {
    fn default() -> Self {
        BranchConfig {
            variant: Variant::WaitAll,
            immediate_emit: false,
            overload_fraction: 0.5,
            nr_timeout: NrTimeout::Auto,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BranchRecord {
    pub responded: bool,
    pub last_response: Option<f64>,
    pub nonresponsive: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BranchStats {
    pub frm_received: u64,
    pub brm_absorbed: u64,
    pub emissions: u64,
    pub fast_overload: u64,
    pub noise_events: u64,
    pub noise_missing: u64,
    pub nonresponsive_transitions: u64,
    pub liveness_alarms: u64,
    pub unknown_branch: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Emission {
    pub brm: RMCellFields,
    /// Responsive branches missing from the emitted round.
    pub missing: usize,
    pub fast_overload: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UnknownBranch(pub BranchId);

/// Consolidation registers of one branch point for one VC.
#[derive(Debug, Clone)]
pub struct ConsolidationState {
    pub config: BranchConfig,
    pub mer: f64,
    pub acc_ci: bool,
    pub acc_ni: bool,
    pub any_feedback: bool,
    reset_er: f64,
    branches: Vec<BranchId>,
    records: Vec<BranchRecord>,
    last_frm: Option<RMCellFields>,
    last_frm_time: Option<f64>,
    frm_gap: Option<f64>,
    all_silent: bool,
    pub stats: BranchStats,
}

impl ConsolidationState {
    /// `reset_er` is the value `mer` returns to after every emission (the VC's PCR).
    pub fn new(branches: Vec<BranchId>, reset_er: f64, config: BranchConfig) -> Self {
        let records = vec![BranchRecord::default(); branches.len()];
        ConsolidationState {
            config,
            mer: reset_er,
            acc_ci: false,
            acc_ni: false,
            any_feedback: false,
            reset_er,
            branches,
            records,
            last_frm: None,
            last_frm_time: None,
            frm_gap: None,
            all_silent: false,
            stats: BranchStats::default(),
        }
    }

    pub fn branches(&self) -> &[BranchId] {
        &self.branches
    }

    pub fn record(&self, branch: BranchId) -> Option<&BranchRecord> {
        self.index(branch).map(|i| &self.records[i])
    }

    pub fn is_nonresponsive(&self, branch: BranchId) -> bool {
        self.record(branch).is_some_and(|r| r.nonresponsive)
    }

    /// CCR of the most recent upstream FRM.
    pub fn upstream_ccr(&self) -> Option<f64> {
        self.last_frm.map(|f| f.ccr)
    }

    pub fn nr_timeout(&self) -> f64 {
        match self.config.nr_timeout {
            NrTimeout::Never => f64::INFINITY,
            NrTimeout::Fixed(t) => t,
            NrTimeout::Auto => self
                .frm_gap
                .map_or(f64::INFINITY, |g| (NR_TIMEOUT_MULTIPLE * g).max(NR_TIMEOUT_FLOOR)),
        }
    }

    fn index(&self, branch: BranchId) -> Option<usize> {
        self.branches.iter().position(|&b| b == branch)
    }

    fn missing(&self) -> usize {
        self.records
            .iter()
            .filter(|r| !r.nonresponsive && !r.responded)
            .count()
    }

    fn responsive(&self) -> usize {
        self.records.iter().filter(|r| !r.nonresponsive).count()
    }

    fn complete(&self) -> bool {
        self.responsive() > 0 && self.missing() == 0
    }

    /// Marks branches silent for longer than the timeout; raises the liveness alarm when the
    /// last responsive branch goes.
    pub fn check_nonresponsive(&mut self, now: f64) {
        let timeout = self.nr_timeout();
        for r in &mut self.records {
            if let Some(t) = r.last_response {
                if !r.nonresponsive && now - t > timeout {
                    r.nonresponsive = true;
                    self.stats.nonresponsive_transitions += 1;
                }
            }
        }
        let silent = !self.records.is_empty() && self.responsive() == 0;
        if silent && !self.all_silent {
            self.stats.liveness_alarms += 1;
        }
        self.all_silent = silent;
    }

    fn build(&self, trigger: &RMCellFields) -> RMCellFields {
        RMCellFields {
            dir: Direction::Backward,
            bn: false,
            ci: self.acc_ci,
            ni: self.acc_ni,
            er: self.mer,
            ccr: trigger.ccr,
            mcr: trigger.mcr,
            vc: trigger.vc,
            origin: trigger.origin,
            seq: trigger.seq,
        }
    }

    fn emit(&mut self, trigger: &RMCellFields, fast_overload: bool) -> Emission {
        let brm = self.build(trigger);
        let missing = self.missing();
        self.stats.emissions += 1;
        if missing > 0 {
            self.stats.noise_events += 1;
            self.stats.noise_missing += missing as u64;
        }
        if fast_overload {
            self.stats.fast_overload += 1;
        } else {
            for r in &mut self.records {
                r.responded = false;
            }
            self.any_feedback = false;
        }
        self.mer = self.reset_er;
        self.acc_ci = false;
        self.acc_ni = false;
        Emission {
            brm,
            missing,
            fast_overload,
        }
    }

    /// An FRM is being replicated downstream. Returns the upstream BRM this FRM releases.
    pub fn on_downstream_frm(&mut self, frm: &RMCellFields, now: f64) -> Option<Emission> {
        self.stats.frm_received += 1;
        if let Some(last) = self.last_frm_time {
            let gap = now - last;
            self.frm_gap = Some(match self.frm_gap {
                None => gap,
                Some(g) => g + (gap - g) / 8.0,
            });
        }
        self.last_frm_time = Some(now);
        self.last_frm = Some(*frm);
        for r in &mut self.records {
            r.last_response.get_or_insert(now);
        }
        self.check_nonresponsive(now);
        let release = match self.config.variant {
            Variant::PassThrough => false,
            Variant::NoWait => self.any_feedback && self.responsive() > 0,
            Variant::WaitAll | Variant::WaitAllFastOverload => self.complete(),
        };
        release.then(|| self.emit(frm, false))
    }

    /// A BRM arrived from a downstream branch. It is absorbed; the return value is what goes
    /// upstream right away, if anything.
    pub fn on_branch_brm(
        &mut self,
        branch: BranchId,
        brm: &RMCellFields,
        now: f64,
    ) -> Result<Option<Emission>, UnknownBranch> {
        let Some(i) = self.index(branch) else {
            self.stats.unknown_branch += 1;
            return Err(UnknownBranch(branch));
        };
        if self.config.variant == Variant::PassThrough {
            return Ok(Some(Emission {
                brm: *brm,
                missing: 0,
                fast_overload: false,
            }));
        }
        self.stats.brm_absorbed += 1;
        let r = &mut self.records[i];
        r.last_response = Some(now);
        r.nonresponsive = false;
        r.responded = true;
        self.mer = self.mer.min(brm.er);
        self.acc_ci |= brm.ci;
        self.acc_ni |= brm.ni;
        self.any_feedback = true;
        self.check_nonresponsive(now);

        let Some(trigger) = self.last_frm else {
            return Ok(None);
        };
        if self.config.variant == Variant::WaitAllFastOverload
            && (brm.ci || brm.er < self.config.overload_fraction * trigger.ccr)
        {
            return Ok(Some(self.emit(&trigger, true)));
        }
        if self.config.immediate_emit && self.config.variant.waits() && self.complete() {
            return Ok(Some(self.emit(&trigger, false)));
        }
        Ok(None)
    }
}

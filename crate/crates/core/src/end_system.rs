//! ABR source and destination behavior.

use crate::model::{DataCell, Direction, RMCellFields, SourceId, VcId};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Demand {
    Greedy,
    /// Offered load in cells/s; zero means idle.
    Rate(f64),
}

impl Demand {
    pub fn limit(self) -> f64 {
        match self {
            Demand::Greedy => f64::INFINITY,
            Demand::Rate(r) => r,
        }
    }

    pub fn is_active(self) -> bool {
        self.limit() > 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceParams {
    pub pcr: f64,
    pub mcr: f64,
    pub icr: f64,
    pub rif: f64,
    pub rdf: f64,
    pub nrm: u32,
    pub demand: Demand,
}

impl SourceParams {
    pub const DEFAULT_NRM: u32 = 32;
    pub const DEFAULT_RIF: f64 = 1.0 / 16.0;
    pub const DEFAULT_RDF: f64 = 1.0 / 16.0;

    /// Defaults for everything but the peak rate: nrm 32, rif = rdf = 1/16, icr = pcr/30.
    pub fn with_pcr(pcr: f64) -> Self {
        SourceParams {
            pcr,
            mcr: 0.0,
            icr: pcr / 30.0,
            rif: Self::DEFAULT_RIF,
            rdf: Self::DEFAULT_RDF,
            nrm: Self::DEFAULT_NRM,
            demand: Demand::Greedy,
        }
    }

    pub fn check(&self) -> Result<(), String> {
        if !(self.pcr > 0.0) {
            return Err(format!("pcr must be positive, got {}", self.pcr));
        }
        if !(0.0 <= self.mcr && self.mcr <= self.icr && self.icr <= self.pcr) {
            return Err(format!(
                "need mcr <= icr <= pcr, got mcr={} icr={} pcr={}",
                self.mcr, self.icr, self.pcr
            ));
        }
        for (name, v) in [("rif", self.rif), ("rdf", self.rdf)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(format!("{name} must lie in (0, 1], got {v}"));
            }
        }
        if self.nrm < 2 {
            return Err(format!("nrm must be at least 2, got {}", self.nrm));
        }
        if let Demand::Rate(r) = self.demand {
            if !(r >= 0.0) {
                return Err(format!("demand must be non-negative, got {r}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceState {
    pub vc: VcId,
    pub id: SourceId,
    pub acr: f64,
    pub cells_since_frm: u32,
    pub next_send_time: Option<f64>,
    pub frm_sent: u32,
    pub data_sent: u64,
    pub brm_received: u64,
    pub misrouted: u64,
    pub last_brm: Option<RMCellFields>,
}

impl SourceState {
    /// Fresh source at ICR. The counter starts one short of `nrm` so the first cell is an FRM.
    pub fn new(vc: VcId, id: SourceId, params: &SourceParams) -> Self {
        SourceState {
            vc,
            id,
            acr: params.icr,
            cells_since_frm: params.nrm - 1,
            next_send_time: None,
            frm_sent: 0,
            data_sent: 0,
            brm_received: 0,
            misrouted: 0,
            last_brm: None,
        }
    }

    /// Rate at which in-rate cells actually leave: min(ACR, demand).
    pub fn send_rate(&self, params: &SourceParams) -> f64 {
        self.acr.min(params.demand.limit())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Emitted {
    Data(DataCell),
    Frm(RMCellFields),
    None,
}

/// Emits the next in-rate cell if one is due at `now`.
///
/// Every `nrm`-th in-rate cell is an FRM carrying `ccr = acr`, `er = pcr`. The returned time is
/// when the following cell is due, `None` when the source cannot send (zero rate).
pub fn source_next_cell(
    state: &mut SourceState,
    params: &SourceParams,
    now: f64,
) -> (Emitted, Option<f64>) {
    let rate = state.send_rate(params);
    if rate <= 0.0 {
        state.next_send_time = None;
        return (Emitted::None, None);
    }
    if state.next_send_time.is_some_and(|t| now < t) {
        return (Emitted::None, state.next_send_time);
    }
    let cell = if state.cells_since_frm + 1 >= params.nrm {
        state.cells_since_frm = 0;
        let frm = RMCellFields {
            dir: Direction::Forward,
            bn: false,
            ci: false,
            ni: false,
            er: params.pcr,
            ccr: state.acr,
            mcr: params.mcr,
            vc: state.vc,
            origin: state.id,
            seq: state.frm_sent,
        };
        state.frm_sent += 1;
        Emitted::Frm(frm)
    } else {
        state.cells_since_frm += 1;
        let d = DataCell {
            vc: state.vc,
            origin: state.id,
            seq: state.data_sent,
        };
        state.data_sent += 1;
        Emitted::Data(d)
    };
    let next = now + 1.0 / rate;
    state.next_send_time = Some(next);
    (cell, Some(next))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Misrouted;

/// Applies a BRM to the source's ACR.
///
/// CI decreases multiplicatively by `rdf`; otherwise, unless NI is set, ACR grows additively by
/// `rif * pcr`. The result is capped by the BRM's ER and PCR and floored at MCR.
pub fn source_on_brm(
    state: &mut SourceState,
    params: &SourceParams,
    brm: &RMCellFields,
) -> Result<(), Misrouted> {
    if brm.dir != Direction::Backward || brm.vc != state.vc || brm.origin != state.id {
        state.misrouted += 1;
        return Err(Misrouted);
    }
    let mut acr = state.acr;
    if brm.ci {
        acr -= acr * params.rdf;
    } else if !brm.ni {
        acr += params.rif * params.pcr;
    }
    acr = acr.min(brm.er).min(params.pcr);
    acr = acr.max(params.mcr);
    state.acr = acr;
    state.brm_received += 1;
    state.last_brm = Some(*brm);
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DestinationState {
    pub frm_received: u64,
    pub brm_returned: u64,
    pub data_received: u64,
    /// When set, turnaround marks CI if `congested` is also set.
    pub congestion_hook: bool,
    pub congested: bool,
    /// A silenced destination absorbs FRMs without returning them.
    pub silenced: bool,
}

/// Turns an FRM into a BRM, preserving ER and identity.
pub fn destination_turnaround(frm: &RMCellFields, congestion: bool) -> RMCellFields {
    debug_assert!(frm.is_forward());
    RMCellFields {
        dir: Direction::Backward,
        bn: false,
        ci: frm.ci || congestion,
        ..*frm
    }
}

impl DestinationState {
    /// Counts an arriving FRM and returns the BRM to send back, unless silenced.
    pub fn on_frm(&mut self, frm: &RMCellFields) -> Option<RMCellFields> {
        self.frm_received += 1;
        if self.silenced {
            return None;
        }
        self.brm_returned += 1;
        Some(destination_turnaround(
            frm,
            self.congestion_hook && self.congested,
        ))
    }
}

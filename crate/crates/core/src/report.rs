//! Run summaries, oracle comparison and fairness tables.

use std::fmt::{self, Write as _};

use thiserror::Error;

use crate::engine::{compute_ratios, convergence_time, RunResult};
use crate::fairness::{allocate, Allocation, Definition, OracleError, OracleInput};
use crate::end_system::Demand;
use crate::scenario::{Compiled, Scenario};

fn opt(v: Option<f64>) -> String {
    v.map_or("absent".to_string(), |x| x.to_string())
}

/// `key: value` summary of a run, followed by the full scenario as `scenario: ` lines.
pub fn run_summary(scenario: &Scenario, c: &Compiled, r: &RunResult) -> String {
    let m = &r.metrics;
    let mut o = String::new();
    let _ = writeln!(o, "digest: {}", r.digest);
    let _ = writeln!(o, "seed: {}", c.run.seed);
    let _ = writeln!(o, "duration: {}", c.run.duration);
    let (w0, w1) = m.window;
    let _ = writeln!(o, "window: {w0} .. {w1}");
    let _ = writeln!(o, "events: {}", m.events);
    let _ = writeln!(o, "trace_records: {}", r.trace_records);
    let _ = writeln!(o, "drops: {}", m.drops);
    let _ = writeln!(o, "misrouted_hops: {}", m.misrouted_hops);
    let _ = writeln!(o, "audit_violations: {}", m.audit_violations);
    let ratios = compute_ratios(m, m.window);
    let _ = writeln!(o, "network_ratio: {}", opt(ratios.network));
    let thr = m.throughputs();
    for (i, s) in m.sources.iter().enumerate() {
        let _ = writeln!(o, "root_ratio.{}: {}", s.name, opt(ratios.per_source[i]));
        let _ = writeln!(o, "throughput.{}: {}", s.name, thr[i]);
        let _ = writeln!(o, "final_acr.{}: {}", s.name, r.final_acr[i]);
        let _ = writeln!(o, "misrouted.{}: {}", s.name, s.misrouted);
    }
    for ((vc, node), st) in &r.branch_stats {
        let p = format!("branch.{}.{}", c.model.vc(*vc).name, c.model.node_name(*node));
        let _ = writeln!(o, "{p}.emissions: {}", st.emissions);
        let _ = writeln!(o, "{p}.noise_events: {}", st.noise_events);
        let _ = writeln!(o, "{p}.fast_overload: {}", st.fast_overload);
        let _ = writeln!(o, "{p}.nonresponsive_transitions: {}", st.nonresponsive_transitions);
        let _ = writeln!(o, "{p}.liveness_alarms: {}", st.liveness_alarms);
    }
    for ((vc, node), st) in &r.merge_stats {
        let p = format!("merge.{}.{}", c.model.vc(*vc).name, c.model.node_name(*node));
        let _ = writeln!(o, "{p}.frm_forwarded: {}", st.frm_forwarded);
        let _ = writeln!(o, "{p}.pending_served: {}", st.pending_served);
        let _ = writeln!(o, "{p}.pending_replaced: {}", st.pending_replaced);
    }
    for line in scenario.to_text().lines() {
        if line.is_empty() {
            o.push_str("scenario:\n");
        } else {
            let _ = writeln!(o, "scenario: {line}");
        }
    }
    o
}

/// Oracle input matching what the simulated network can carry at the end of the run.
///
/// Each link offers its target utilization times its final capacity; demands are capped by
/// PCR; sources switched off and silenced destinations are left out.
pub fn oracle_input(c: &Compiled) -> OracleInput<'_> {
    let mut inp = OracleInput::new(&c.model);
    let caps = c.final_capacities();
    inp.capacities = c
        .model
        .links()
        .iter()
        .map(|l| caps[l.id.index()] * c.nodes[l.from.index()].target_utilization)
        .collect();
    let active = c.final_active();
    inp.demands = c
        .sources
        .iter()
        .enumerate()
        .map(|(i, s)| {
            if !active[i] {
                return 0.0;
            }
            let limit = match s.params.demand {
                Demand::Greedy => f64::INFINITY,
                Demand::Rate(r) => r,
            };
            limit.min(s.params.pcr)
        })
        .collect();
    inp.excluded = c.final_silenced();
    inp
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CompareError {
    #[error("window [{0}, {1}] is not an increasing interval inside the run [0, {2}]")]
    BadWindow(f64, f64, f64),
    #[error("oracle: {0}")]
    Oracle(#[from] OracleError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub source: String,
    pub oracle: f64,
    pub measured: f64,
    pub relative_error: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareReport {
    pub definition: Definition,
    pub epsilon: f64,
    pub window: (f64, f64),
    pub rows: Vec<CompareRow>,
    /// Over the sending-rate series of active sources, against their oracle rates.
    pub convergence_time: Option<f64>,
    pub diagnostics: Vec<String>,
    pub pass: bool,
}

impl fmt::Display for CompareReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "definition: {}", self.definition)?;
        writeln!(f, "epsilon: {}", self.epsilon)?;
        writeln!(f, "window: {} .. {}", self.window.0, self.window.1)?;
        for r in &self.rows {
            writeln!(
                f,
                "source.{}: oracle={} measured={} error={:.4} {}",
                r.source,
                r.oracle,
                r.measured,
                r.relative_error,
                if r.pass { "pass" } else { "FAIL" }
            )?;
        }
        writeln!(f, "convergence_time: {}", opt(self.convergence_time))?;
        for d in &self.diagnostics {
            writeln!(f, "diagnostic: {d}")?;
        }
        writeln!(f, "result: {}", if self.pass { "pass" } else { "fail" })
    }
}

/// Compares steady-state throughputs of a finished run with an oracle allocation.
pub fn compare(
    c: &Compiled,
    r: &RunResult,
    definition: Definition,
    epsilon: f64,
    window: (f64, f64),
) -> Result<CompareReport, CompareError> {
    let (w0, w1) = window;
    if !(0.0 <= w0 && w0 < w1 && w1 <= c.run.duration) {
        return Err(CompareError::BadWindow(w0, w1, c.run.duration));
    }
    let input = oracle_input(c);
    let alloc = allocate(&input, definition)?;
    let m = &r.metrics;
    let span = w1 - w0;
    let mut rows = Vec::new();
    let mut diagnostics = Vec::new();
    let mut series = Vec::new();
    let mut targets = Vec::new();
    for (i, s) in m.sources.iter().enumerate() {
        let oracle = alloc.rates[i];
        if input.demands[i] <= 0.0 {
            continue;
        }
        let measured = if m.window == window {
            s.cells_in_window as f64 / span
        } else {
            // One FRM leaves per `nrm` in-rate cells.
            let frms = s.frm.iter().filter(|(t, _)| w0 <= *t && *t <= w1).count();
            (frms as f64 * c.sources[i].params.nrm as f64) / span
        };
        let relative_error = if oracle > 0.0 {
            (measured - oracle).abs() / oracle
        } else {
            measured
        };
        let pass = relative_error <= epsilon;
        if let Some(last) = s.brm.last() {
            if last.time < w0 {
                diagnostics.push(format!(
                    "source {}: feedback stalled, last BRM at {} s, before the window",
                    s.name, last.time
                ));
            }
        } else {
            diagnostics.push(format!("source {}: never received feedback", s.name));
        }
        if let Some(acr) = m.series.get(&format!("rate.{}", s.name)) {
            series.push(acr);
            targets.push(oracle);
        }
        rows.push(CompareRow {
            source: s.name.clone(),
            oracle,
            measured,
            relative_error,
            pass,
        });
    }
    let convergence = convergence_time(&series, &targets, epsilon);
    if convergence.is_none() {
        diagnostics.push("ACR never settled within epsilon of the oracle".to_string());
    }
    let pass = rows.iter().all(|r| r.pass) && diagnostics.is_empty();
    Ok(CompareReport {
        definition,
        epsilon,
        window,
        rows,
        convergence_time: convergence,
        diagnostics,
        pass,
    })
}

/// All four allocations of one scenario.
pub struct FairnessTable {
    pub sources: Vec<String>,
    pub allocations: Vec<Allocation>,
}

pub fn fairness_table(c: &Compiled) -> Result<FairnessTable, OracleError> {
    let input = oracle_input(c);
    let allocations = Definition::ALL
        .iter()
        .map(|&d| allocate(&input, d))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(FairnessTable {
        sources: c.model.sources().iter().map(|s| s.name.clone()).collect(),
        allocations,
    })
}

impl FairnessTable {
    pub fn to_csv(&self) -> String {
        let mut o = String::from("source");
        for a in &self.allocations {
            let _ = write!(o, ",{}", a.definition);
        }
        o.push('\n');
        for (i, s) in self.sources.iter().enumerate() {
            o.push_str(s);
            for a in &self.allocations {
                let _ = write!(o, ",{}", a.rates[i]);
            }
            o.push('\n');
        }
        o
    }
}

impl fmt::Display for FairnessTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:<12}", "source")?;
        for a in &self.allocations {
            write!(f, "{:>14}", a.definition.as_str())?;
        }
        writeln!(f)?;
        for (i, s) in self.sources.iter().enumerate() {
            write!(f, "{s:<12}")?;
            for a in &self.allocations {
                write!(f, "{:>14.3}", a.rates[i])?;
            }
            writeln!(f)?;
        }
        for a in &self.allocations {
            for st in &a.stages {
                writeln!(f, "{} {}: {}", a.definition, st.name, st.verdict)?;
            }
        }
        Ok(())
    }
}

//! Run metrics and the measurements derived from them.

use std::collections::BTreeMap;
use std::fmt::Write as _;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BrmRecord {
    pub time: f64,
    pub seq: u32,
    pub er: f64,
    pub ci: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SourceLog {
    pub name: String,
    /// (send time, seq) of every FRM.
    pub frm: Vec<(f64, u32)>,
    pub brm: Vec<BrmRecord>,
    pub cells_sent: u64,
    pub cells_in_window: u64,
    pub misrouted: u64,
    /// Largest hop count over the source's paths.
    pub max_hops: usize,
}

/// Named time series sampled by the engine.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SeriesStore {
    names: Vec<String>,
    index: BTreeMap<String, usize>,
    data: Vec<Vec<(f64, f64)>>,
}

impl SeriesStore {
    pub fn id(&mut self, name: &str) -> usize {
        if let Some(&i) = self.index.get(name) {
            return i;
        }
        self.names.push(name.to_string());
        self.data.push(Vec::new());
        self.index.insert(name.to_string(), self.names.len() - 1);
        self.names.len() - 1
    }

    pub fn push(&mut self, id: usize, time: f64, value: f64) {
        let s = &mut self.data[id];
        debug_assert!(s.last().is_none_or(|&(t, _)| t <= time));
        s.push((time, value));
    }

    pub fn get(&self, name: &str) -> Option<&[(f64, f64)]> {
        self.index.get(name).map(|&i| self.data[i].as_slice())
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// CSV with header `time,series,value`, rows ordered by time then series creation order.
    pub fn to_csv(&self) -> String {
        let mut rows: Vec<(f64, usize, f64)> = self
            .data
            .iter()
            .enumerate()
            .flat_map(|(i, s)| s.iter().map(move |&(t, v)| (t, i, v)))
            .collect();
        rows.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut out = String::from("time,series,value\n");
        for (t, i, v) in rows {
            let _ = writeln!(out, "{t},{},{v}", self.names[i]);
        }
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Metrics {
    pub window: (f64, f64),
    pub sources: Vec<SourceLog>,
    pub series: SeriesStore,
    pub brm_link_arrivals: u64,
    pub brm_link_arrivals_in_window: u64,
    pub misrouted_hops: u64,
    pub drops: u64,
    /// Control ticks at which some link table held more entries than flows cross the link.
    pub audit_violations: u64,
    /// Data cells delivered, per (vc index, destination node index).
    pub delivered: BTreeMap<(u32, u32), u64>,
    pub events: u64,
}

impl Metrics {
    pub fn in_window(&self, t: f64) -> bool {
        self.window.0 <= t && t <= self.window.1
    }

    /// Mean in-rate cell throughput of each source over the window.
    pub fn throughputs(&self) -> Vec<f64> {
        let span = self.window.1 - self.window.0;
        self.sources
            .iter()
            .map(|s| if span > 0.0 { s.cells_in_window as f64 / span } else { 0.0 })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ratios {
    /// Per source: BRMs answering FRMs sent in the window, per such FRM.
    pub per_source: Vec<Option<f64>>,
    /// BRM link arrivals in the window over the hop-weighted FRM count.
    pub network: Option<f64>,
}

/// BRM:FRM ratios over `window`.
///
/// A BRM counts toward the window if its sequence number matches an FRM its source sent in the
/// window, wherever the BRM itself falls in time.
pub fn compute_ratios(metrics: &Metrics, window: (f64, f64)) -> Ratios {
    let mut hop_weighted = 0.0;
    let per_source = metrics
        .sources
        .iter()
        .map(|s| {
            let seqs: std::collections::BTreeSet<u32> = s
                .frm
                .iter()
                .filter(|(t, _)| window.0 <= *t && *t <= window.1)
                .map(|&(_, q)| q)
                .collect();
            if seqs.is_empty() {
                return None;
            }
            hop_weighted += (seqs.len() * s.max_hops) as f64;
            let answered = s.brm.iter().filter(|b| seqs.contains(&b.seq)).count();
            Some(answered as f64 / seqs.len() as f64)
        })
        .collect();
    let network = (hop_weighted > 0.0).then(|| metrics.brm_link_arrivals_in_window as f64 / hop_weighted);
    Ratios { per_source, network }
}

/// Earliest time after which every series stays within `epsilon * target` of its target.
///
/// Returns 0 when no sample is ever out of band and `None` when the last sample of any
/// series is out of band.
pub fn convergence_time(series: &[&[(f64, f64)]], targets: &[f64], epsilon: f64) -> Option<f64> {
    let mut worst: f64 = 0.0;
    for (s, &target) in series.iter().zip(targets) {
        let band = epsilon * target.abs();
        let out = |v: f64| (v - target).abs() > band;
        match s.iter().rposition(|&(_, v)| out(v)) {
            None => {}
            Some(i) if i + 1 == s.len() => return None,
            Some(i) => worst = worst.max(s[i + 1].0),
        }
    }
    Some(worst)
}
